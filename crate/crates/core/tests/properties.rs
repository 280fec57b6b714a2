//! Property tests of the structural invariants.

use nalgebra::DMatrix;
use proptest::prelude::*;

use mixreg::blocking::{block_sums, make_partition, BlockPartition};
use mixreg::harness::ExperimentConfig;
use mixreg::mixing::beta_markov_exact;
use mixreg::regression::{excess_risk, gaussian_quartic, ProblemSource, RegressionProblem};

fn square(d: usize) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(-5.0f64..5.0, d * d).prop_map(move |v| DMatrix::from_vec(d, d, v))
}

proptest! {
    #[test]
    fn partition_is_valid(n in 2usize..5000, frac in 0.0f64..1.0) {
        let m = 1 + ((n / 2 - 1) as f64 * frac) as usize;
        let p = make_partition(n, m).unwrap();
        prop_assert_eq!(p.num_blocks(), 2 * m);
        prop_assert_eq!(p.lengths().iter().sum::<usize>(), n);
        prop_assert!(p.a_max() - p.a_min() <= 1);
        let mut next = 0;
        for r in p.ranges() {
            prop_assert_eq!(r.start, next);
            prop_assert!(!r.is_empty());
            next = r.end;
        }
        prop_assert_eq!(p.odd_len() + p.even_len(), n);
        for j in [0, n / 2, n - 1] {
            let b = p.block_of(j).unwrap();
            prop_assert!(p.range(b).contains(&j));
        }
        prop_assert!(p.block_of(n).is_none());
    }

    #[test]
    fn block_sums_are_linear(
        lens in proptest::collection::vec(1usize..6, 1..5),
        c in -3.0f64..3.0,
        seed in 0u64..1000,
    ) {
        let mut lengths = lens.clone();
        lengths.extend(&lens);
        let p = BlockPartition::from_lengths(lengths).unwrap();
        let n = p.n();
        let f = |i: usize, k: u64| ((i as u64 * 2654435761 + k * 40503 + seed) % 1000) as f64 / 100.0 - 5.0;
        let a: Vec<Vec<f64>> = (0..n).map(|i| vec![f(i, 1), f(i, 2)]).collect();
        let b: Vec<Vec<f64>> = (0..n).map(|i| vec![f(i, 3), f(i, 4)]).collect();
        let comb: Vec<Vec<f64>> = a.iter().zip(&b).map(|(x, y)| vec![x[0] + c * y[0], x[1] + c * y[1]]).collect();
        let (sa, sb, sc) = (block_sums(&a, &p).unwrap(), block_sums(&b, &p).unwrap(), block_sums(&comb, &p).unwrap());
        for i in 0..p.num_blocks() {
            for k in 0..2 {
                prop_assert!((sc[i][k] - sa[i][k] - c * sb[i][k]).abs() < 1e-9);
            }
        }
        let total: f64 = sa.iter().map(|v| v[0]).sum();
        let direct: f64 = a.iter().map(|v| v[0]).sum();
        prop_assert!((total - direct).abs() < 1e-9);
    }

    #[test]
    fn markov_two_state_closed_form(q in 0.0f64..=1.0, i in 1usize..40) {
        let p = DMatrix::from_row_slice(2, 2, &[1.0 - q, q, q, 1.0 - q]);
        let b = beta_markov_exact(&p, i).unwrap();
        prop_assert!((b - (1.0 - 2.0 * q).abs().powi(i as i32) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn markov_beta_is_nonincreasing(q in 0.01f64..0.99, r in 0.01f64..0.99) {
        let p = DMatrix::from_row_slice(2, 2, &[1.0 - q, q, r, 1.0 - r]);
        let mut prev = 1.0;
        for i in 1..20 {
            let b = beta_markov_exact(&p, i).unwrap();
            prop_assert!(b <= prev + 1e-15);
            prev = b;
        }
    }

    #[test]
    fn quartic_symmetry(a in square(3), b in square(3)) {
        let ab = gaussian_quartic(&a, &b).unwrap();
        prop_assert_eq!(ab.to_bits(), gaussian_quartic(&b, &a).unwrap().to_bits());
        let at = gaussian_quartic(&a.transpose(), &b).unwrap();
        prop_assert!((ab - at).abs() <= 1e-9 * (1.0 + ab.abs()));
    }

    #[test]
    fn quartic_of_psd_pair_is_nonnegative(a in square(3), b in square(3)) {
        let pa = &a * a.transpose();
        let pb = &b * b.transpose();
        prop_assert!(gaussian_quartic(&pa, &pb).unwrap() >= 0.0);
    }

    #[test]
    fn excess_risk_is_a_weighted_distance(a in square(3), shift in proptest::collection::vec(-2.0f64..2.0, 6)) {
        let sigma = &a * a.transpose() + DMatrix::identity(3, 3);
        let m_star = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, -1.0, 0.5, 2.0, 0.0]);
        let prob = RegressionProblem::new(sigma.clone(), m_star.clone(), ProblemSource::Analytic).unwrap();
        prop_assert!(excess_risk(&m_star, &prob).unwrap().abs() < 1e-12);
        let d = DMatrix::from_row_slice(2, 3, &shift);
        let direct = (&d * &sigma * d.transpose()).trace();
        let risk = excess_risk(&(&m_star + &d), &prob).unwrap();
        prop_assert!(risk >= 0.0);
        prop_assert!((risk - direct).abs() <= 1e-8 * (1.0 + direct));
    }

    #[test]
    fn config_roundtrip(seed in any::<u64>(), delta in 0.01f64..0.5, tau in 1usize..50) {
        let text = format!(
            "[process]\nkind = \"gaussian_ar\"\ncoeffs = [0.5, 0.2]\n\n[partition]\ntau = {tau}\n\n\
             [experiment]\nns = [1000]\ndelta = {delta}\nseed = {seed}\n"
        );
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        prop_assert_eq!(cfg, again);
    }
}
