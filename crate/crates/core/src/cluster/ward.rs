use std::collections::HashMap;

use super::{sq_dist, ClusterError};

/// Merge sequence of a Ward-linkage run; each step folds slot `j` into `i < j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WardHierarchy {
    pub n: usize,
    pub merges: Vec<(usize, usize)>,
}

impl WardHierarchy {
    /// Labels with `k` clusters, renumbered by first appearance.
    pub fn labels(&self, k: usize) -> Result<Vec<usize>, ClusterError> {
        let reachable = self.n - self.merges.len();
        if k == 0 || k > self.n || k < reachable {
            return Err(ClusterError::TooFewPoints { needed: k.max(1), got: self.n });
        }
        let mut slot: Vec<usize> = (0..self.n).collect();
        for &(i, j) in &self.merges[..self.n - k] {
            for s in slot.iter_mut() {
                if *s == j {
                    *s = i;
                }
            }
        }
        let mut map = HashMap::new();
        Ok(slot
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect())
    }
}

/// Bottom-up Ward-linkage clustering down to `n_clusters` groups.
pub fn agglomerative(points: &[Vec<f64>], n_clusters: usize) -> Result<Vec<usize>, ClusterError> {
    if n_clusters == 0 || n_clusters > points.len() {
        return Err(ClusterError::TooFewPoints { needed: n_clusters.max(1), got: points.len() });
    }
    ward_hierarchy(points, n_clusters).labels(n_clusters)
}

/// Runs Ward merging until `stop_at` clusters remain.
///
/// Merge costs follow the Lance-Williams update on squared distances.
/// Ties go to the lexicographically smallest `(i, j)` pair of slot ids,
/// where a merged cluster keeps the smaller slot.
pub fn ward_hierarchy(points: &[Vec<f64>], stop_at: usize) -> WardHierarchy {
    let n = points.len();
    let stop_at = stop_at.max(1);
    let idx = |i: usize, j: usize| i * n + j;
    let mut d = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = sq_dist(&points[i], &points[j]);
            d[idx(i, j)] = v;
            d[idx(j, i)] = v;
        }
    }
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut merges = Vec::new();

    // nearest active partner with a larger slot id
    let mut nn = vec![(f64::INFINITY, usize::MAX); n];
    let row_min = |d: &[f64], active: &[bool], i: usize| {
        let mut best = (f64::INFINITY, usize::MAX);
        for j in i + 1..n {
            if active[j] && d[idx(i, j)] < best.0 {
                best = (d[idx(i, j)], j);
            }
        }
        best
    };
    for i in 0..n {
        nn[i] = row_min(&d, &active, i);
    }

    let mut remaining = n;
    while remaining > stop_at {
        let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
        for i in 0..n {
            if active[i] && nn[i].1 != usize::MAX && nn[i].0 < best.0 {
                best = (nn[i].0, i, nn[i].1);
            }
        }
        let (dij, i, j) = best;
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for k in 0..n {
            if !active[k] || k == i || k == j {
                continue;
            }
            let nk = size[k] as f64;
            let v = ((ni + nk) * d[idx(k, i)] + (nj + nk) * d[idx(k, j)] - nk * dij) / (ni + nj + nk);
            d[idx(k, i)] = v;
            d[idx(i, k)] = v;
        }
        active[j] = false;
        size[i] += size[j];
        merges.push((i, j));
        remaining -= 1;

        for k in 0..n {
            if !active[k] {
                continue;
            }
            if k == i || nn[k].1 == i || nn[k].1 == j {
                nn[k] = row_min(&d, &active, k);
            } else if k < i {
                let v = d[idx(k, i)];
                if v < nn[k].0 || (v == nn[k].0 && i < nn[k].1) {
                    nn[k] = (v, i);
                }
            }
        }
    }
    WardHierarchy { n, merges }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(points: &[Vec<f64>], n_clusters: usize) -> Vec<usize> {
        // direct Ward: merge the pair whose union raises the within-cluster SSE least
        let sse = |m: &[usize]| {
            let dim = points[0].len();
            let mut c = vec![0.0; dim];
            for &i in m {
                for (a, x) in c.iter_mut().zip(&points[i]) {
                    *a += x / m.len() as f64;
                }
            }
            m.iter().map(|&i| sq_dist(&points[i], &c)).sum::<f64>()
        };
        let mut clusters: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
        while clusters.len() > n_clusters {
            let mut best = (f64::INFINITY, 0, 0);
            for a in 0..clusters.len() {
                for b in a + 1..clusters.len() {
                    let mut u = clusters[a].clone();
                    u.extend(&clusters[b]);
                    let cost = sse(&u) - sse(&clusters[a]) - sse(&clusters[b]);
                    if cost < best.0 - 1e-12 {
                        best = (cost, a, b);
                    }
                }
            }
            let b = clusters.remove(best.2);
            clusters[best.1].extend(b);
        }
        let mut label = vec![0; points.len()];
        for (c, m) in clusters.iter().enumerate() {
            for &i in m {
                label[i] = c;
            }
        }
        let mut map = std::collections::HashMap::new();
        label
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect()
    }

    #[test]
    fn hierarchy_cuts_match_direct_runs() {
        let pts: Vec<Vec<f64>> = (0..12).map(|i| vec![(i * i % 7) as f64, (i % 4) as f64]).collect();
        let h = ward_hierarchy(&pts, 1);
        for k in 1..=12 {
            assert_eq!(h.labels(k).unwrap(), agglomerative(&pts, k).unwrap());
        }
    }

    #[test]
    fn collinear_example() {
        let pts = vec![vec![0.0], vec![1.0], vec![10.0]];
        assert_eq!(agglomerative(&pts, 2).unwrap(), vec![0, 0, 1]);
    }

    #[test]
    fn far_pairs_and_singletons() {
        let pts = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![10.0, 10.0], vec![10.0, 11.0]];
        assert_eq!(agglomerative(&pts, 2).unwrap(), vec![0, 0, 1, 1]);
        assert_eq!(agglomerative(&pts, 4).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn matches_direct_ward_on_random_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let n = rng.random_range(3..25);
            let pts: Vec<Vec<f64>> =
                (0..n).map(|_| (0..3).map(|_| rng.random::<f64>() * 10.0).collect()).collect();
            let k = rng.random_range(1..=n);
            assert_eq!(agglomerative(&pts, k).unwrap(), brute(&pts, k));
        }
    }
}
