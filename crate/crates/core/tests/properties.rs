use proptest::prelude::*;

use tabcluster_core::embed::{kl_loss, soft_assign, target_distribution, Centroids, SoftAssignment};
use tabcluster_core::eval::{cluster_accuracy, hungarian_match, make_folds, make_stratified_folds, rank_methods, AccuracyCell};
use tabcluster_core::numkit::{DenseMatrix, Rng};

fn matrix(rows: usize, cols: usize, seed: u64, scale: f64) -> DenseMatrix {
    let mut rng = Rng::new(seed);
    DenseMatrix::from_vec(rows, cols, (0..rows * cols).map(|_| scale * rng.normal()).collect()).unwrap()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn brute_force_accuracy(y: &[usize], pred: &[usize], k: usize) -> f64 {
    let best = permutations(k)
        .iter()
        .map(|perm| y.iter().zip(pred).filter(|(t, p)| perm[**p] == **t).count())
        .max()
        .unwrap();
    100.0 * best as f64 / y.len() as f64
}

fn entropy(row: &[f64]) -> f64 {
    row.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn q_and_p_rows_sum_to_one(n in 1usize..20, m in 1usize..6, k in 1usize..6, seed: u64, scale in 0.1f64..20.0) {
        let z = matrix(n, m, seed, scale);
        let mu = Centroids(matrix(k, m, seed ^ 1, scale));
        let q = soft_assign(&z, &mu).unwrap();
        let p = target_distribution(&q);
        for i in 0..n {
            let sq: f64 = q.matrix().row(i).iter().sum();
            let sp: f64 = p.matrix().row(i).iter().sum();
            prop_assert!((sq - 1.0).abs() <= 1e-9);
            prop_assert!((sp - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn kl_is_non_negative(n in 1usize..20, k in 2usize..6, seed: u64) {
        let z = matrix(n, 3, seed, 2.0);
        let mu = Centroids(matrix(k, 3, seed ^ 2, 2.0));
        let q = soft_assign(&z, &mu).unwrap();
        let p = target_distribution(&q);
        prop_assert!(kl_loss(&p, &q).unwrap() >= 0.0);
        // P = Q gives zero
        let same = tabcluster_core::embed::TargetDist(q.matrix().clone());
        prop_assert!(kl_loss(&same, &q).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn single_sample_target_equals_q(k in 1usize..8, seed: u64) {
        let z = matrix(1, 4, seed, 3.0);
        let mu = Centroids(matrix(k, 4, seed ^ 3, 3.0));
        let q = soft_assign(&z, &mu).unwrap();
        let p = target_distribution(&q);
        for j in 0..k {
            prop_assert!((p.matrix().get(0, j) - q.matrix().get(0, j)).abs() <= 1e-12);
        }
        prop_assert!(kl_loss(&p, &q).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn target_sharpens_with_equal_cluster_mass(k in 2usize..7, seed: u64) {
        // cyclic shifts of one distribution give equal column sums
        let mut rng = Rng::new(seed);
        let w: Vec<f64> = (0..k).map(|_| 0.05 + rng.uniform()).collect();
        let total: f64 = w.iter().sum();
        let base: Vec<f64> = w.iter().map(|v| v / total).collect();
        let rows: Vec<Vec<f64>> = (0..k).map(|s| (0..k).map(|j| base[(j + s) % k]).collect()).collect();
        let q = SoftAssignment(DenseMatrix::from_rows(&rows).unwrap());
        let p = target_distribution(&q);
        for i in 0..k {
            prop_assert!(entropy(p.matrix().row(i)) <= entropy(q.matrix().row(i)) + 1e-12);
        }
    }

    #[test]
    fn accuracy_matches_brute_force(n in 1usize..40, k in 1usize..7, seed: u64) {
        let mut rng = Rng::new(seed);
        let y: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
        prop_assert_eq!(cluster_accuracy(&y, &pred, k).unwrap(), brute_force_accuracy(&y, &pred, k));
    }

    #[test]
    fn accuracy_ignores_label_names(n in 1usize..40, k in 1usize..7, seed: u64) {
        let mut rng = Rng::new(seed);
        let y: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
        let mut perm: Vec<usize> = (0..k).collect();
        rng.shuffle(&mut perm);
        let renamed: Vec<usize> = pred.iter().map(|&p| perm[p]).collect();
        prop_assert_eq!(cluster_accuracy(&y, &pred, k).unwrap(), cluster_accuracy(&y, &renamed, k).unwrap());
        prop_assert_eq!(cluster_accuracy(&y, &y, k).unwrap(), 100.0);
    }

    #[test]
    fn hungarian_returns_a_permutation(k in 1usize..7, seed: u64, maximize: bool) {
        let m = matrix(k, k, seed, 5.0);
        let mut perm = hungarian_match(&m, maximize).unwrap();
        perm.sort_unstable();
        prop_assert_eq!(perm, (0..k).collect::<Vec<_>>());
    }

    #[test]
    fn folds_are_a_balanced_partition(n in 5usize..300, seed: u64) {
        let plan = make_folds(n, &mut Rng::new(seed)).unwrap();
        let sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut all = plan.folds.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn stratified_folds_are_a_partition(n in 5usize..200, k in 1usize..5, seed: u64) {
        let y: Vec<usize> = (0..n).map(|i| i % k).collect();
        let plan = make_stratified_folds(&y, &mut Rng::new(seed)).unwrap();
        let mut all = plan.folds.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        for class in 0..k {
            let counts: Vec<usize> = plan.folds.iter().map(|f| f.iter().filter(|&&i| y[i] == class).count()).collect();
            prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn rank_rows_are_permutations(d in 1usize..5, m in 1usize..9, seed: u64) {
        let mut rng = Rng::new(seed);
        // coarse values force ties
        let cells: Vec<Vec<Option<AccuracyCell>>> = (0..d)
            .map(|_| (0..m).map(|_| Some(AccuracyCell { mean: rng.below(4) as f64, std: rng.below(2) as f64 })).collect())
            .collect();
        let names = |p: &str, c: usize| (0..c).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
        let t = rank_methods(&names("d", d), &names("m", m), &cells).unwrap();
        for row in t.ranks.iter().chain(core::iter::once(&t.overall)) {
            let mut r = row.clone();
            r.sort_unstable();
            prop_assert_eq!(r, (1..=m).collect::<Vec<_>>());
        }
        let avg: f64 = t.average.iter().sum::<f64>() / m as f64;
        prop_assert!((avg - (m as f64 + 1.0) / 2.0).abs() < 1e-9);
    }
}
