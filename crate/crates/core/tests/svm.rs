mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use spdmil::svm::smo::{train_svm, KKT_TOL};
use spdmil::svm::{loocv, paired_t_test, CvGrid, TuningProtocol};
use spdmil::{Bag, Error, KernelConfig, KernelKind, Label, SpdMatrix};
use statrs::distribution::{ContinuousCDF, StudentsT};

fn signs(labels: &[Label]) -> Vec<f64> {
    labels.iter().map(|l| l.sign()).collect()
}

#[test]
fn smo_matches_exact_optimum_on_small_problems() {
    let mut r = rng(2024);
    for problem in 0..20 {
        let n = 3 + problem % 4;
        let (gram, labels) = rbf_problem(&mut r, n);
        let y = signs(&labels);
        for c in [0.5, 10.0] {
            let model = train_svm(&gram, &labels, c).unwrap();
            assert!(model.converged);
            let exact = active_set_optimum(&gram, &y, c);
            let got = dual(&gram, &y, &model.alphas);
            assert!((got - exact).abs() <= 1e-3, "problem {problem}, C = {c}: {got} vs {exact}");
            assert!(kkt_gap(&gram, &y, &model.alphas, c) <= KKT_TOL + 1e-12);
        }
    }
}

#[test]
fn two_point_problem_against_a_grid() {
    let gram = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
    let labels = [Label::Positive, Label::Negative];
    let y = signs(&labels);
    for c in [0.2f64, 1.0, 5.0] {
        // the equality constraint forces α₁ = α₂
        let best = (0..=(c / 1e-3).round() as usize)
            .map(|k| {
                let a = k as f64 * 1e-3;
                dual(&gram, &y, &[a, a])
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let model = train_svm(&gram, &labels, c).unwrap();
        assert!(dual(&gram, &y, &model.alphas) >= best - 1e-3);
    }
}

#[test]
fn linearly_separable_four_points_against_a_grid() {
    // points (±1, ±1) labelled by the sign of x, linear kernel plus a constant
    let pts = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];
    let gram = DMatrix::from_fn(4, 4, |i, j| pts[i].0 * pts[j].0 + pts[i].1 * pts[j].1);
    let labels = [Label::Positive, Label::Positive, Label::Negative, Label::Negative];
    let y = signs(&labels);
    let c = 0.5;
    let step = 1e-3;
    let k = (c / step) as usize;
    let mut best = f64::NEG_INFINITY;
    for a0 in 0..=k {
        for a1 in 0..=k {
            for a2 in 0..=k {
                // α₃ from the equality constraint
                let a3 = (a0 + a1) as isize - a2 as isize;
                if a3 < 0 || a3 as usize > k {
                    continue;
                }
                let a = [a0 as f64 * step, a1 as f64 * step, a2 as f64 * step, a3 as f64 * step];
                best = best.max(dual(&gram, &y, &a));
            }
        }
    }
    let model = train_svm(&gram, &labels, c).unwrap();
    assert!((dual(&gram, &y, &model.alphas) - best).abs() <= 1e-3);
    for (i, f) in model.training_decisions(&gram).iter().enumerate() {
        assert!(y[i] * f > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn smo_solutions_are_feasible(seed in any::<u64>(), n in 2usize..25, c in 0.01f64..100.0) {
        let (gram, labels) = rbf_problem(&mut rng(seed), n);
        let y = signs(&labels);
        let model = train_svm(&gram, &labels, c).unwrap();
        let balance: f64 = model.alphas.iter().zip(&y).map(|(a, s)| a * s).sum();
        prop_assert!(balance.abs() <= 1e-9 * c.max(1.0) * n as f64);
        prop_assert!(model.alphas.iter().all(|&a| (0.0..=c).contains(&a)));
        if model.converged {
            prop_assert!(kkt_gap(&gram, &y, &model.alphas, c) <= KKT_TOL + 1e-9);
        }
    }
}

const T_VECTORS: [(&[f64], &[f64]); 10] = [
    (&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0, 0.0, 0.0, 0.0, 0.0]),
    (&[90.7, 88.4, 91.2, 87.0], &[85.1, 86.0, 84.3, 86.9]),
    (&[0.5, 0.6, 0.55, 0.7, 0.65, 0.62], &[0.52, 0.58, 0.5, 0.61, 0.66, 0.6]),
    (&[10.0, 12.0], &[9.0, 9.5]),
    (&[3.1, 2.9, 3.3, 3.0, 3.2, 2.8, 3.4], &[3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0]),
    (&[-1.0, -2.0, -0.5, -3.0], &[0.0, 0.5, 1.0, -1.0]),
    (&[100.0, 95.0, 97.5, 92.5, 100.0], &[67.5, 77.5, 70.0, 62.5, 60.0]),
    (&[1e-3, 2e-3, 1.5e-3, 3e-3], &[1.1e-3, 1.9e-3, 1.7e-3, 2.6e-3]),
    (&[5.0, 4.0, 6.0, 5.5, 4.5, 5.2, 4.8, 5.1], &[4.9, 4.2, 5.7, 5.6, 4.4, 5.0, 4.9, 5.3]),
    (&[0.0, 1.0, 0.0, 1.0, 0.0, 1.0], &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]),
];

#[test]
fn paired_t_test_matches_statrs() {
    for (a, b) in T_VECTORS {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let t = mean / (sd / n.sqrt());
        let dist = StudentsT::new(0.0, 1.0, n - 1.0).unwrap();
        let p = 2.0 * dist.cdf(-t.abs());
        let got = paired_t_test(a, b).unwrap();
        assert!((got.t - t).abs() <= 1e-9 * t.abs().max(1.0));
        assert!((got.p_value - p).abs() <= 1e-4, "p {} vs {p}", got.p_value);
    }
}

#[test]
fn equal_differences_leave_t_undefined() {
    let err = paired_t_test(&[3.0, 4.0, 5.0], &[2.0, 3.0, 4.0]).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
}

#[test]
fn separable_bags_are_classified_perfectly() {
    let mut r = rng(31);
    let far = SpdMatrix::from_diagonal(&[30.0, 0.1, 5.0]).unwrap();
    let bags: Vec<Bag> = (0..12)
        .map(|k| {
            let label = if k < 6 { Label::Positive } else { Label::Negative };
            let mut inst: Vec<SpdMatrix> = (0..3).map(|_| spd_with_condition(&mut r, 3, 2.0)).collect();
            if label == Label::Positive {
                inst[0] = far.congruence(&(DMatrix::identity(3, 3) * (1.0 + 0.01 * k as f64))).unwrap();
            }
            Bag::new(format!("s{k}"), label, inst).unwrap()
        })
        .collect();
    // Only the tagged instance separates the classes (1/9 of the pairs), so a small C
    // or σ ≪ d² leaves the leave-one-out bias, which leans to the held-out subject's
    // opposite class, in charge. Both protocols break grid ties towards the first value.
    let grid = CvGrid::new(vec![100.0, 10_000.0], vec![10.0, 30.0]);
    for protocol in [TuningProtocol::Nested, TuningProtocol::Global] {
        let res = loocv(&bags, &KernelConfig::new(KernelKind::AiGaussian, 1.0), &grid, protocol).unwrap();
        assert_eq!(res.correct, 12, "{protocol:?}");
    }
}
