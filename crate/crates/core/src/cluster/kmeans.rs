use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{sq_dist, ClusterError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub max_iter: usize,
    /// Relative inertia change below which iteration stops.
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig { max_iter: 300, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// Inertia after each assignment step.
    pub inertia_trace: Vec<f64>,
    pub seed: u64,
}

impl ClusterModel {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for a in &self.assignments {
            s[*a] += 1;
        }
        s
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// D²-weighted draw; `None` when every weight is zero.
fn draw(d2: &[f64], total: f64, rng: &mut ChaCha8Rng) -> Option<usize> {
    if total <= 0.0 {
        return None;
    }
    let mut r = rng.random::<f64>() * total;
    for (i, d) in d2.iter().enumerate() {
        if *d > 0.0 && r < *d {
            return Some(i);
        }
        r -= d;
    }
    // rounding may run past the end; fall back to the last positive weight
    d2.iter().rposition(|d| *d > 0.0)
}

/// Greedy k-means++: each step draws `2 + ln k` candidates and keeps the one
/// leaving the smallest potential.
fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let trials = 2 + (k as f64).ln() as usize;
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for _ in 0..trials {
            let Some(c) = draw(&d2, total, rng) else { break };
            let cand: Vec<f64> = points.par_iter().zip(&d2).map(|(p, d)| d.min(sq_dist(p, &points[c]))).collect();
            let pot: f64 = cand.iter().sum();
            if best.as_ref().is_none_or(|b| pot < b.1) {
                best = Some((c, pot, cand));
            }
        }
        let pick = match best {
            Some((c, _, cand)) => {
                d2 = cand;
                c
            }
            None => {
                let free: Vec<usize> = (0..n).filter(|i| !chosen[*i]).collect();
                let c = free[rng.random_range(0..free.len())];
                for (i, p) in points.iter().enumerate() {
                    d2[i] = d2[i].min(sq_dist(p, &points[c]));
                }
                c
            }
        };
        chosen[pick] = true;
        centroids.push(points[pick].clone());
    }
    centroids
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    points
        .par_iter()
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (c, q) in centroids.iter().enumerate() {
                let d = sq_dist(p, q);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .unzip()
}

/// k-means++ seeding followed by Lloyd iterations.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, cfg: &KMeansConfig) -> Result<ClusterModel, ClusterError> {
    kmeans_stream(points, k, seed, 0, cfg)
}

/// As [`kmeans`], drawing from RNG stream `stream` of `seed`.
pub fn kmeans_stream(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    stream: u64,
    cfg: &KMeansConfig,
) -> Result<ClusterModel, ClusterError> {
    if k == 0 || k > points.len() {
        return Err(ClusterError::TooFewPoints { needed: k.max(1), got: points.len() });
    }
    let dim = points[0].len();
    let mut rng = rng_for(seed, stream);
    let mut centroids = plus_plus(points, k, &mut rng);
    let mut trace = Vec::new();
    let (mut assignments, mut dists);
    loop {
        (assignments, dists) = assign(points, &centroids);
        let inertia: f64 = dists.iter().sum();
        if let Some(&prev) = trace.last() {
            debug_assert!(inertia <= prev * (1.0 + 1e-9) + 1e-12, "inertia rose from {prev} to {inertia}");
            let done = prev - inertia <= cfg.tol * prev;
            trace.push(inertia);
            if done || trace.len() >= cfg.max_iter {
                break;
            }
        } else {
            trace.push(inertia);
            if inertia == 0.0 || cfg.max_iter <= 1 {
                break;
            }
        }

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, a) in points.iter().zip(&assignments) {
            counts[*a] += 1;
            for (s, x) in sums[*a].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut taken = vec![false; points.len()];
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // reseed an empty cluster at the worst-fitted point
                let far = (0..points.len())
                    .filter(|i| !taken[*i])
                    .max_by(|a, b| dists[*a].total_cmp(&dists[*b]).then(b.cmp(a)))
                    .expect("k <= n");
                taken[far] = true;
                centroids[c] = points[far].clone();
            }
        }
    }
    let inertia = *trace.last().expect("at least one step");
    Ok(ClusterModel { k, centroids, assignments, inertia, inertia_trace: trace, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_pairs() {
        let pts = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![10.0, 10.0], vec![10.0, 11.0]];
        let m = kmeans(&pts, 2, 42, &KMeansConfig::default()).unwrap();
        assert_eq!(m.assignments[0], m.assignments[1]);
        assert_eq!(m.assignments[2], m.assignments[3]);
        assert_ne!(m.assignments[0], m.assignments[2]);
        let mut cs = m.centroids.clone();
        cs.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(cs, vec![vec![0.0, 0.5], vec![10.0, 10.5]]);
        assert_eq!(m.inertia, 1.0);
    }

    #[test]
    fn k_equals_n_has_zero_inertia() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let m = kmeans(&pts, 6, 7, &KMeansConfig::default()).unwrap();
        assert_eq!(m.inertia, 0.0);
        let mut a = m.assignments.clone();
        a.sort_unstable();
        a.dedup();
        assert_eq!(a.len(), 6);
    }

    #[test]
    fn duplicates_with_one_cluster() {
        let pts = vec![vec![3.0, 4.0]; 5];
        let m = kmeans(&pts, 1, 1, &KMeansConfig::default()).unwrap();
        assert_eq!(m.centroids[0], vec![3.0, 4.0]);
        assert_eq!(m.inertia, 0.0);
    }

    #[test]
    fn duplicates_with_more_clusters_than_distinct_points() {
        let pts = vec![vec![0.0], vec![0.0], vec![0.0], vec![5.0]];
        let m = kmeans(&pts, 3, 1, &KMeansConfig::default()).unwrap();
        assert_eq!(m.inertia, 0.0);
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(
            kmeans(&[vec![1.0]], 2, 0, &KMeansConfig::default()),
            Err(ClusterError::TooFewPoints { .. })
        ));
    }
}
