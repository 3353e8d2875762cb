mod common;

use common::*;
use proptest::prelude::*;
use spdmil::kernel::{
    double_center, gram_matrix, instance_kernel, isometric_instance_similarity, kernel_decomposition, mi_kernel,
    pairwise_sq_distances,
};
use spdmil::spd::dist_log_euclidean;
use spdmil::{Bag, Concept, KernelConfig, KernelKind, Label, Metric, SpdMatrix};

fn random_bags(seed: u64, n: usize) -> Vec<Bag> {
    let mut r = rng(seed);
    (0..n)
        .map(|k| {
            let size = 1 + k % 4;
            let inst = (0..size).map(|_| spd_with_condition(&mut r, 3, 30.0)).collect();
            let label = if k % 2 == 0 { Label::Positive } else { Label::Negative };
            Bag::new(format!("b{k}"), label, inst).unwrap()
        })
        .collect()
}

#[test]
fn gaussian_kinds_agree_on_commuting_pairs() {
    let mut r = rng(11);
    for _ in 0..50 {
        let da: Vec<f64> = (0..4).map(|_| spd_with_condition(&mut r, 1, 100.0).trace()).collect();
        let db: Vec<f64> = (0..4).map(|_| spd_with_condition(&mut r, 1, 100.0).trace()).collect();
        let (a, b) = (SpdMatrix::from_diagonal(&da).unwrap(), SpdMatrix::from_diagonal(&db).unwrap());
        let le = instance_kernel(&a, &b, &KernelConfig::new(KernelKind::LeGaussian, 2.0)).unwrap();
        let ai = instance_kernel(&a, &b, &KernelConfig::new(KernelKind::AiGaussian, 2.0)).unwrap();
        let d2: f64 = da.iter().zip(&db).map(|(x, y)| (x / y).ln().powi(2)).sum();
        assert!(rel_err(le, ai) <= 1e-10);
        assert!(rel_err(le, (-d2 / 2.0).exp()) <= 1e-10);
    }
}

#[test]
fn two_term_expansion() {
    let a = SpdMatrix::from_diagonal(&[1.0, 2.0]).unwrap();
    let b = SpdMatrix::from_diagonal(&[3.0, 0.5]).unwrap();
    let cfg = KernelConfig::new(KernelKind::LeGaussian, 1.5);
    let x = Bag::new("x", Label::Positive, vec![a.clone(), b.clone()]).unwrap();
    let y = Bag::new("y", Label::Negative, vec![a.clone()]).unwrap();
    let d_ba = dist_log_euclidean(&b, &a).unwrap();
    let want = (1.0 + (-d_ba * d_ba / 1.5).exp()) / 2.0;
    assert!((mi_kernel(&x, &y, &cfg).unwrap() - want).abs() <= 1e-14);
}

#[test]
fn decomposition_resums_to_the_set_kernel() {
    let mut r = rng(12);
    let make = |r: &mut rand_chacha::ChaCha8Rng, tags: Vec<Concept>| {
        let inst = tags.iter().map(|_| spd_with_condition(r, 3, 20.0)).collect();
        Bag::new("b", Label::Positive, inst).unwrap().with_hidden_labels(tags).unwrap()
    };
    for power in [1, 2, 3] {
        let x = make(&mut r, vec![Concept::Positive, Concept::Negative, Concept::Negative]);
        let y = make(&mut r, vec![Concept::Negative, Concept::Positive]);
        let cfg = KernelConfig {
            power,
            ..KernelConfig::new(KernelKind::AiGaussian, 5.0)
        };
        let parts = kernel_decomposition(&x, &y, &cfg).unwrap();
        assert!((parts.total() - mi_kernel(&x, &y, &cfg).unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn two_instances_center_in_closed_form() {
    let a = SpdMatrix::from_diagonal(&[1.0, 1.0]).unwrap();
    let b = SpdMatrix::from_diagonal(&[2.0, 0.25]).unwrap();
    let delta = dist_log_euclidean(&a, &b).unwrap();
    let s = isometric_instance_similarity(&[a, b], Metric::LogEuclidean).unwrap();
    let q = delta * delta / 4.0;
    for (i, j, want) in [(0, 0, q), (1, 1, q), (0, 1, -q), (1, 0, -q)] {
        assert!((s[(i, j)] - want).abs() <= 1e-12 * q.max(1.0));
    }
}

#[test]
fn isometric_gram_is_symmetric() {
    let bags = random_bags(13, 6);
    let g = gram_matrix(&bags, &KernelConfig::new(KernelKind::Isometric, 1.0)).unwrap();
    assert_eq!(g.entries.clone(), g.entries.transpose());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn log_euclidean_grams_are_positive_semidefinite(seed in any::<u64>(), sigma in prop::sample::select(vec![0.1, 1.0, 10.0])) {
        let bags = random_bags(seed, 10);
        let g = gram_matrix(&bags, &KernelConfig::new(KernelKind::LeGaussian, sigma)).unwrap();
        let ev = g.entries.clone().symmetric_eigenvalues();
        let max = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = ev.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(min >= -1e-8 * max);
        prop_assert!(g.diagnostics.psd);
    }

    #[test]
    fn double_centering_properties(seed in any::<u64>(), n in 2usize..12) {
        let mut r = rng(seed);
        let inst: Vec<SpdMatrix> = (0..n).map(|_| spd_with_condition(&mut r, 3, 50.0)).collect();
        let d2 = pairwise_sq_distances(&inst, Metric::AffineInvariant).unwrap();
        let s = double_center(&d2);
        let tol = 1e-9 * n as f64 * s.amax().max(f64::MIN_POSITIVE);
        for i in 0..n {
            prop_assert!(s.row(i).sum().abs() <= tol);
            prop_assert!(s.column(i).sum().abs() <= tol);
            for j in 0..n {
                prop_assert!((s[(i, i)] + s[(j, j)] - 2.0 * s[(i, j)] - d2[(i, j)]).abs() <= tol);
            }
        }
    }

    #[test]
    fn set_kernel_is_symmetric_and_bounded(seed in any::<u64>()) {
        let bags = random_bags(seed, 4);
        let cfg = KernelConfig::new(KernelKind::AiGaussian, 3.0);
        for x in &bags {
            for y in &bags {
                let k = mi_kernel(x, y, &cfg).unwrap();
                prop_assert!((0.0..=1.0 + 1e-12).contains(&k));
                prop_assert!((k - mi_kernel(y, x, &cfg).unwrap()).abs() <= 1e-14);
            }
        }
    }
}
