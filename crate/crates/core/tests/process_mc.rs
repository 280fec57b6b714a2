//! Monte Carlo checks of the simulators against closed-form moments.

use mixreg::blocking::{decoupled_resample, BlockPartition};
use mixreg::process::{ArSpec, BlockConstantSpec, GaussianLinear, MarkovSpec, ProcessSpec, Trajectory};
use mixreg::regression::{fit_ols, population_optimum, population_optimum_mc};

fn xs(traj: &Trajectory) -> Vec<f64> {
    (0..traj.len()).map(|i| traj.x(i)[0]).collect()
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n)
}

fn lag_corr(v: &[f64], lag: usize) -> f64 {
    let (m, var) = mean_var(v);
    let n = v.len() - lag;
    (0..n).map(|i| (v[i] - m) * (v[i + lag] - m)).sum::<f64>() / n as f64 / var
}

#[test]
fn ar1_stationary_variance() {
    // γ(0) = 1 / (1 - a²) = 4/3 at a = 1/2
    let spec = ProcessSpec::GaussianAr(ArSpec::new(vec![0.5], 1.0, 1).unwrap());
    let traj = spec.simulate(400_000, 1).unwrap();
    let (mean, var) = mean_var(&xs(&traj));
    assert!(mean.abs() < 0.01, "{mean}");
    assert!((var / (4.0 / 3.0) - 1.0).abs() < 0.015, "{var}");
    assert!((lag_corr(&xs(&traj), 1) - 0.5).abs() < 0.01);
}

#[test]
fn ar2_lag_one_autocorrelation() {
    // ρ(1) = a1 / (1 - a2) = 0.625
    let spec = ProcessSpec::GaussianAr(ArSpec::new(vec![0.5, 0.2], 1.0, 1).unwrap());
    let traj = spec.simulate(400_000, 2).unwrap();
    assert!((lag_corr(&xs(&traj), 1) - 0.625).abs() < 0.01);
    assert!((fit_ols(&traj).unwrap()[(0, 0)] - 0.625).abs() < 0.01);
}

#[test]
fn markov_frequencies() {
    let q = 0.3;
    let spec = ProcessSpec::FiniteMarkov(MarkovSpec::symmetric_flip(q).unwrap());
    let traj = spec.simulate(200_000, 3).unwrap();
    let v = xs(&traj);
    let up = v.iter().filter(|x| **x > 0.0).count() as f64 / v.len() as f64;
    let flips = v.windows(2).filter(|w| w[0] != w[1]).count() as f64 / (v.len() - 1) as f64;
    assert!((up - 0.5).abs() < 0.01, "{up}");
    assert!((flips - q).abs() < 0.01, "{flips}");
    // the emission correlation at lag k is (1 - 2q)^k
    assert!((lag_corr(&v, 2) - 0.16).abs() < 0.015);
}

#[test]
fn block_constant_repeats_within_blocks_only() {
    let law = GaussianLinear::new(1, 1, None, 1.0).unwrap();
    let spec = ProcessSpec::BlockConstant(BlockConstantSpec { block_len: 4, law });
    let traj = spec.simulate(200_000, 4).unwrap();
    let v = xs(&traj);
    for b in 0..1000 {
        assert!(v[4 * b..4 * b + 4].iter().all(|x| *x == v[4 * b]));
    }
    // samples in different blocks are independent
    assert!(lag_corr(&v, 4).abs() < 0.015);
    let (_, var) = mean_var(&v);
    assert!((var - 1.0).abs() < 0.03);
}

#[test]
fn population_optimum_monte_carlo_agrees() {
    let spec = ProcessSpec::GaussianAr(ArSpec::new(vec![0.5, 0.2], 1.0, 1).unwrap());
    let exact = population_optimum(&spec).unwrap();
    let mc = population_optimum_mc(&spec, 500_000, 5).unwrap();
    let se = match &mc.source {
        mixreg::regression::ProblemSource::MonteCarlo { m_star_se } => m_star_se[(0, 0)],
        other => panic!("unexpected source {other:?}"),
    };
    assert!((mc.m_star[(0, 0)] - exact.m_star[(0, 0)]).abs() <= 4.0 * se);
}

#[test]
fn decoupled_blocks_are_independent() {
    let spec = ProcessSpec::GaussianAr(ArSpec::new(vec![0.9], 1.0, 1).unwrap());
    let partition = BlockPartition::uniform(8, 4).unwrap();
    let reps = 20_000;
    let (mut within, mut across) = (Vec::with_capacity(reps), Vec::with_capacity(reps));
    for s in 0..reps {
        let t = decoupled_resample(&spec, &partition, s as u64).unwrap();
        within.push((t.x(2)[0], t.x(3)[0]));
        across.push((t.x(3)[0], t.x(4)[0]));
    }
    let corr = |pairs: &[(f64, f64)]| {
        let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let (ma, va) = mean_var(&a);
        let (mb, vb) = mean_var(&b);
        pairs.iter().map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / pairs.len() as f64 / (va * vb).sqrt()
    };
    assert!((corr(&within) - 0.9).abs() < 0.02);
    assert!(corr(&across).abs() < 0.03);
}
