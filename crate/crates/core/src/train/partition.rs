//! Splitting a dataset's indices across nodes.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use super::TrainError;

/// Label-skewed split: each class's indices are divided across nodes in
/// proportions drawn from a symmetric Dirichlet(`alpha`).
///
/// The lists are disjoint, cover every index and are sorted ascending.
pub fn dirichlet_partition(labels: &[i64], alpha: f64, nodes: usize, seed: u64) -> Result<Vec<Vec<usize>>, TrainError> {
    if alpha <= 0.0 || !alpha.is_finite() {
        return Err(TrainError::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    if nodes == 0 {
        return Err(TrainError::InvalidArgument("need at least one node".into()));
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| TrainError::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &c) in labels.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    let mut parts = vec![Vec::new(); nodes];
    for (_, mut idx) in by_class {
        idx.shuffle(&mut rng);
        let mut draws: Vec<f64> = (0..nodes).map(|_| gamma.sample(&mut rng)).collect();
        let total: f64 = draws.iter().sum();
        if total.is_nan() || total <= 0.0 {
            // every gamma draw underflowed at tiny alpha; give the class to one node
            draws = vec![0.0; nodes];
            draws[rng.gen_range(0..nodes)] = 1.0;
        }
        let total: f64 = draws.iter().sum();
        let mut cum = 0.0;
        let mut start = 0usize;
        for (k, part) in parts.iter_mut().enumerate() {
            cum += draws[k] / total;
            let end = if k + 1 == nodes {
                idx.len()
            } else {
                ((cum * idx.len() as f64).floor() as usize).clamp(start, idx.len())
            };
            part.extend_from_slice(&idx[start..end]);
            start = end;
        }
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok(parts)
}

/// Each node draws `floor(fraction * size)` indices uniformly with replacement.
pub fn iid_partition(size: usize, nodes: usize, fraction: f64, seed: u64) -> Result<Vec<Vec<usize>>, TrainError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(TrainError::InvalidArgument(format!("fraction must be in (0, 1], got {fraction}")));
    }
    if size == 0 {
        return Err(TrainError::InvalidArgument("empty dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_node = (fraction * size as f64).floor() as usize;
    Ok((0..nodes)
        .map(|_| (0..per_node).map(|_| rng.gen_range(0..size)).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_node_gets_everything() {
        let labels = vec![0, 1, 1, 2, 0];
        assert_eq!(dirichlet_partition(&labels, 0.5, 1, 3).unwrap(), vec![vec![0, 1, 2, 3, 4]]);
    }

    #[test]
    fn alpha_must_be_positive() {
        assert!(dirichlet_partition(&[0], 0.0, 2, 0).is_err());
        assert!(dirichlet_partition(&[0], -1.0, 2, 0).is_err());
    }

    #[test]
    fn large_alpha_concentrates_per_node_totals() {
        let labels: Vec<i64> = (0..10_000).map(|i| i % 10).collect();
        let parts = dirichlet_partition(&labels, 100.0, 5, 2024).unwrap();
        for p in &parts {
            let total = p.len() as f64;
            assert!((total - 2000.0).abs() <= 0.15 * 2000.0, "node total {total}");
        }
    }

    #[test]
    fn large_alpha_per_class_spread_matches_beta_theory() {
        // Each per-class share is Beta(alpha, 4 alpha): sd 0.01787 at alpha = 100.
        let labels: Vec<i64> = (0..10_000).map(|i| i % 10).collect();
        let parts = dirichlet_partition(&labels, 100.0, 5, 7).unwrap();
        let mut shares = Vec::new();
        for p in &parts {
            for c in 0..10 {
                shares.push(p.iter().filter(|&&i| labels[i] == c).count() as f64 / 1000.0);
            }
        }
        let mean = shares.iter().sum::<f64>() / shares.len() as f64;
        let sd = (shares.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (shares.len() - 1) as f64).sqrt();
        assert!((mean - 0.2).abs() < 1e-12);
        assert!(sd > 0.01787 * 0.6 && sd < 0.01787 * 1.4, "sd {sd}");
        assert!(shares.iter().all(|s| (s - 0.2).abs() < 5.0 * 0.01787));
    }

    #[test]
    fn small_alpha_is_skewed() {
        let labels: Vec<i64> = (0..1000).map(|i| i % 10).collect();
        let parts = dirichlet_partition(&labels, 0.05, 5, 1).unwrap();
        let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() > 100, "{sizes:?}");
    }

    #[test]
    fn iid_sizes_and_determinism() {
        let a = iid_partition(100, 3, 1.0, 9).unwrap();
        assert!(a.iter().all(|p| p.len() == 100));
        assert_eq!(a, iid_partition(100, 3, 1.0, 9).unwrap());
        assert!(iid_partition(100, 3, 0.0, 9).is_err());
        assert!(iid_partition(100, 3, 1.5, 9).is_err());
    }

    #[test]
    fn iid_label_distribution_tracks_global() {
        let labels: Vec<i64> = (0..10_000).map(|i| (i * 7919 % 10_000 % 10) as i64).collect();
        let parts = iid_partition(10_000, 5, 0.5, 77).unwrap();
        for p in &parts {
            assert_eq!(p.len(), 5000);
            for c in 0..10 {
                let share = p.iter().filter(|&&i| labels[i] == c).count() as f64 / p.len() as f64;
                assert!((share - 0.1).abs() <= 0.05, "class {c} share {share}");
            }
        }
    }

    proptest! {
        #[test]
        fn dirichlet_is_exact_partition(
            labels in prop::collection::vec(0i64..6, 0..300),
            alpha in 0.01f64..50.0,
            nodes in 1usize..8,
            seed in any::<u64>(),
        ) {
            let parts = dirichlet_partition(&labels, alpha, nodes, seed).unwrap();
            prop_assert_eq!(parts.len(), nodes);
            let mut all: Vec<usize> = parts.concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
            prop_assert_eq!(&parts, &dirichlet_partition(&labels, alpha, nodes, seed).unwrap());
        }
    }
}
