use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{dist, ClusterError};

/// Mean silhouette with Euclidean distance. Points in singleton clusters
/// contribute 0.
pub fn silhouette(points: &[Vec<f64>], assignments: &[usize]) -> Result<f64, ClusterError> {
    assert_eq!(points.len(), assignments.len(), "one label per point");
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for a in assignments {
        sizes[*a] += 1;
    }
    if sizes.iter().filter(|s| **s > 0).count() < 2 {
        return Err(ClusterError::SingleCluster);
    }
    let total: f64 = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let own = assignments[i];
            if sizes[own] <= 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for (j, p) in points.iter().enumerate() {
                if j != i {
                    sums[assignments[j]] += dist(&points[i], p);
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|c| *c != own && sizes[*c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m == 0.0 {
                0.0
            } else {
                (b - a) / m
            }
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok(total / points.len() as f64)
}

/// Silhouette on at most `max_points` points, drawn uniformly without
/// replacement from a seeded RNG when the input is larger.
pub fn silhouette_sampled(
    points: &[Vec<f64>],
    assignments: &[usize],
    max_points: usize,
    seed: u64,
) -> Result<f64, ClusterError> {
    if points.len() <= max_points {
        return silhouette(points, assignments);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, points.len(), max_points).into_vec();
    idx.sort_unstable();
    let p: Vec<Vec<f64>> = idx.iter().map(|i| points[*i].clone()).collect();
    let a: Vec<usize> = idx.iter().map(|i| assignments[*i]).collect();
    silhouette(&p, &a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_pairs() {
        let pts = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![10.0, 10.0], vec![10.0, 11.0]];
        let s = silhouette(&pts, &[0, 0, 1, 1]).unwrap();
        assert!((s - 0.9293).abs() < 1e-4, "{s}");
    }

    #[test]
    fn interleaved_is_non_positive() {
        let pts = vec![vec![0.0], vec![0.0], vec![5.0], vec![5.0]];
        assert!(silhouette(&pts, &[0, 1, 0, 1]).unwrap() <= 0.0);
    }

    #[test]
    fn duplicates_per_cluster_score_one() {
        let pts = vec![vec![0.0], vec![0.0], vec![5.0], vec![5.0]];
        assert_eq!(silhouette(&pts, &[0, 0, 1, 1]).unwrap(), 1.0);
    }

    #[test]
    fn single_cluster_is_an_error() {
        assert_eq!(silhouette(&[vec![0.0], vec![1.0]], &[0, 0]), Err(ClusterError::SingleCluster));
    }

    #[test]
    fn singletons_contribute_zero() {
        let pts = vec![vec![0.0], vec![0.1], vec![9.0]];
        let s = silhouette(&pts, &[0, 0, 1]).unwrap();
        let a = 0.1;
        let b0 = 9.0;
        let b1 = 8.9;
        let expected = ((b0 - a) / b0 + (b1 - a) / b1) / 3.0;
        assert!((s - expected).abs() < 1e-12);
    }
}
