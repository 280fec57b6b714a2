//! β-mixing coefficients.
//!
//! `β(i)` is the expected total-variation distance between the law of the
//! future `Z_{t+i:}` conditional on the past `Z_{1:t}` and its marginal law,
//! maximised over `t`.
//!
//! - Finite Markov chains: the Markov property reduces the past to the
//!   current state, so `β(i) = E_{x~π} ‖P^i(x, ·) - π‖_TV` is exact. For an
//!   emitted process `(x, y) = e(state)` this is an upper bound.
//! - Gaussian AR: the past enters through the state, and the expected KL
//!   between Gaussian conditional and marginal laws has a closed form.
//!   Pinsker then Jensen give `E‖·‖_TV <= E sqrt(KL/2) <= sqrt(E KL / 2)`,
//!   clipped to `[0, 1]`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::blocking::BlockPartition;
use crate::error::{invalid, Error, Result};
use crate::process::{gramian, stationary_distribution, ArSpec, ProcessSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MixingMethod {
    ExactMarkov,
    GaussianKlBound,
    /// Closed form for processes with finite-range dependence (iid, block-constant).
    Analytic,
    UserSupplied,
}

/// Map from gap to `β(gap)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixingProfile {
    coefficients: BTreeMap<usize, f64>,
    /// Value for every gap beyond the largest stored one, when known.
    tail: Option<f64>,
    pub method: MixingMethod,
}

impl MixingProfile {
    pub fn new(coefficients: BTreeMap<usize, f64>, method: MixingMethod) -> Result<Self> {
        Self::with_tail(coefficients, None, method)
    }

    pub fn with_tail(coefficients: BTreeMap<usize, f64>, tail: Option<f64>, method: MixingMethod) -> Result<Self> {
        for (&gap, &b) in &coefficients {
            if gap == 0 {
                return invalid("mixing gaps start at 1");
            }
            if !(0.0..=1.0).contains(&b) {
                return invalid(format!("β({gap}) = {b} lies outside [0, 1]"));
            }
        }
        if let Some(t) = tail {
            if !(0.0..=1.0).contains(&t) {
                return invalid(format!("tail value {t} lies outside [0, 1]"));
            }
        }
        Ok(MixingProfile { coefficients, tail, method })
    }

    /// Profile of an iid process: zero at every gap.
    pub fn iid() -> Self {
        MixingProfile { coefficients: BTreeMap::new(), tail: Some(0.0), method: MixingMethod::Analytic }
    }

    pub fn beta(&self, gap: usize) -> Result<f64> {
        if gap == 0 {
            return invalid("mixing gap must be >= 1");
        }
        if let Some(b) = self.coefficients.get(&gap) {
            return Ok(*b);
        }
        match (self.tail, self.coefficients.keys().next_back()) {
            (Some(t), Some(&max)) if gap > max => Ok(t),
            (Some(t), None) => Ok(t),
            _ => Err(Error::MissingCoefficient(vec![gap])),
        }
    }

    /// Looks up every gap, reporting all missing ones together.
    pub fn betas(&self, gaps: &[usize]) -> Result<Vec<f64>> {
        let mut missing = Vec::new();
        let mut out = Vec::with_capacity(gaps.len());
        for &g in gaps {
            match self.beta(g) {
                Ok(b) => out.push(b),
                Err(Error::MissingCoefficient(_)) => missing.push(g),
                Err(e) => return Err(e),
            }
        }
        if !missing.is_empty() {
            missing.sort_unstable();
            missing.dedup();
            return Err(Error::MissingCoefficient(missing));
        }
        Ok(out)
    }

    pub fn coefficients(&self) -> &BTreeMap<usize, f64> {
        &self.coefficients
    }

    /// Gaps where `β` increases, which the theory does not forbid.
    pub fn non_monotone_gaps(&self) -> Vec<usize> {
        let vals: Vec<(usize, f64)> = self.coefficients.iter().map(|(g, b)| (*g, *b)).collect();
        vals.windows(2).filter(|w| w[1].1 > w[0].1).map(|w| w[1].0).collect()
    }

    /// Two-column CSV `gap,beta`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "gap,beta")?;
        for (g, b) in &self.coefficients {
            writeln!(w, "{g},{b}")?;
        }
        Ok(())
    }

    /// Reads a `gap,beta` CSV as a user-supplied profile.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut coefficients = BTreeMap::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("gap")) {
                continue;
            }
            let (g, b) = line
                .split_once(',')
                .ok_or_else(|| Error::InvalidArgument(format!("line {}: expected gap,beta", lineno + 1)))?;
            let g: usize = g
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("line {}: bad gap {g:?}", lineno + 1)))?;
            let b: f64 = b
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("line {}: bad beta {b:?}", lineno + 1)))?;
            coefficients.insert(g, b);
        }
        MixingProfile::new(coefficients, MixingMethod::UserSupplied)
    }
}

/// `Σ_{i=2}^{2m-1} β(|a_i|)`: the interior blocks of the partition.
pub fn mixing_sum(profile: &MixingProfile, partition: &BlockPartition) -> Result<f64> {
    let lens = partition.lengths();
    if lens.len() <= 2 {
        return Ok(0.0);
    }
    Ok(profile.betas(&lens[1..lens.len() - 1])?.iter().sum())
}

/// Exact `β(i)` of the stationary chain with transition `p`.
pub fn beta_markov_exact(p: &DMatrix<f64>, i: usize) -> Result<f64> {
    let pi = stationary_distribution(p)?;
    beta_markov_with_initial(p, &pi, i)
}

/// `β(i)` for a chain started from the stationary law `pi`.
pub fn beta_markov_with_initial(p: &DMatrix<f64>, pi: &[f64], i: usize) -> Result<f64> {
    if i == 0 {
        return invalid("mixing gap must be >= 1");
    }
    crate::process::check_stochastic(p)?;
    let mut pw = DMatrix::identity(p.nrows(), p.ncols());
    for _ in 0..i {
        pw = &pw * p;
    }
    Ok(expected_tv_rows(&pw, pi))
}

fn expected_tv_rows(pw: &DMatrix<f64>, pi: &[f64]) -> f64 {
    let mut beta = 0.0;
    for (x, wx) in pi.iter().enumerate() {
        let tv: f64 = pi.iter().enumerate().map(|(y, py)| (pw[(x, y)] - py).abs()).sum::<f64>() * 0.5;
        beta += wx * tv;
    }
    beta.clamp(0.0, 1.0)
}

/// Exact profile of a chain for gaps `1..=max_gap`.
pub fn markov_profile(p: &DMatrix<f64>, pi: &[f64], max_gap: usize) -> Result<MixingProfile> {
    crate::process::check_stochastic(p)?;
    let mut coefficients = BTreeMap::new();
    let mut pw = DMatrix::identity(p.nrows(), p.ncols());
    for gap in 1..=max_gap {
        pw = &pw * p;
        coefficients.insert(gap, expected_tv_rows(&pw, pi));
    }
    MixingProfile::new(coefficients, MixingMethod::ExactMarkov)
}

/// `KL(N(mu1, var1) ‖ N(mu2, var2))`.
pub fn kl_gaussian_1d(mu1: f64, var1: f64, mu2: f64, var2: f64) -> Result<f64> {
    if !(var1 > 0.0 && var2 > 0.0) {
        return invalid(format!("variances must be positive, got {var1} and {var2}"));
    }
    Ok(0.5 * (var2 / var1).ln() + 0.5 * (var1 / var2 - 1.0) + (mu1 - mu2).powi(2) / (2.0 * var2))
}

fn normal_cdf(x: f64, mu: f64, var: f64) -> f64 {
    0.5 * libm::erfc(-(x - mu) / (2.0 * var).sqrt())
}

/// Total variation between two univariate Gaussians, integrating the
/// positive part of the density difference between its crossing points.
pub fn tv_gaussian_1d(mu1: f64, var1: f64, mu2: f64, var2: f64) -> Result<f64> {
    if !(var1 > 0.0 && var2 > 0.0) {
        return invalid(format!("variances must be positive, got {var1} and {var2}"));
    }
    // log f1 - log f2 = a x^2 + b x + c
    let a = 0.5 / var2 - 0.5 / var1;
    let b = mu1 / var1 - mu2 / var2;
    let c = mu2 * mu2 / (2.0 * var2) - mu1 * mu1 / (2.0 * var1) + 0.5 * (var2 / var1).ln();
    let g = |x: f64| a * x * x + b * x + c;
    let mut roots = Vec::new();
    if a.abs() < 1e-300 {
        if b != 0.0 {
            roots.push(-c / b);
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc > 0.0 {
            let s = disc.sqrt();
            let q = -0.5 * (b + b.signum() * s);
            let (r1, r2) = if q != 0.0 { (q / a, c / q) } else { (-s / (2.0 * a), s / (2.0 * a)) };
            roots.push(r1.min(r2));
            roots.push(r1.max(r2));
        }
    }
    let mut edges = vec![f64::NEG_INFINITY];
    edges.extend(&roots);
    edges.push(f64::INFINITY);
    let mut tv = 0.0;
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let probe = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (false, true) => hi - 1.0 - hi.abs(),
            (true, false) => lo + 1.0 + lo.abs(),
            (false, false) => 0.0,
        };
        if g(probe) > 0.0 {
            let p1 = normal_cdf(hi, mu1, var1) - normal_cdf(lo, mu1, var1);
            let p2 = normal_cdf(hi, mu2, var2) - normal_cdf(lo, mu2, var2);
            tv += p1 - p2;
        }
    }
    Ok(tv.clamp(0.0, 1.0))
}

/// Expected-KL bound on `β(k)` for the AR process at time `t`, from the scalar
/// conditional law of `y_{t+k}` given the state: `E KL <= e1^T A^k Σ_{t+1} (A^k)^T e1`
/// with unit-noise Gramians, then `β <= sqrt(E KL / 2)` clipped to `[0, 1]`.
pub fn beta_ar_kl_bound(spec: &ArSpec, t: usize, k: usize) -> Result<f64> {
    spec.validate()?;
    if k == 0 {
        return invalid("mixing gap must be >= 1");
    }
    let ss = spec.state_space();
    let ak = ss.power(k);
    let kl = (&ak * gramian(&ss, t + 1) * ak.transpose())[(0, 0)];
    Ok(kl_to_beta(kl))
}

/// As [`beta_ar_kl_bound`] with `t -> ∞`, using the stationary state covariance.
pub fn beta_ar_kl_bound_stationary(spec: &ArSpec, k: usize) -> Result<f64> {
    spec.validate()?;
    if k == 0 {
        return invalid("mixing gap must be >= 1");
    }
    let ss = spec.state_space();
    let unit = ArSpec { noise_std: 1.0, ..spec.clone() };
    let sigma = unit.stationary_state_covariance()?;
    let ak = ss.power(k);
    Ok(kl_to_beta((&ak * sigma * ak.transpose())[(0, 0)]))
}

fn kl_to_beta(kl: f64) -> f64 {
    (kl.max(0.0) / 2.0).sqrt().clamp(0.0, 1.0)
}

/// Mixing profile of the windowed regression process `Z_i = (X_i, Y_i)`.
///
/// With window `m`, the future `Z_{t+k:}` is generated by the `p`-lag state
/// at time `u = t + j`, `j = k - m + p - 1` (whose entries all lie in the
/// future) plus fresh innovations, so the conditional law given the past is
/// `N(A^j x_t, S_j)` against the marginal `N(0, P_u)`, `P_u = A^j P_t A^jᵀ + S_j`.
/// Averaged over `x_t` the KL is `½ ln det(I + S_j^{-1} A^j P_t A^jᵀ)`,
/// evaluated through `ln_1p` of eigenvalues so tiny values keep full relative
/// precision. For `k <= m` past and future share a value of `y` and `β(k) = 1`.
///
/// `horizon` is the number of samples; `None` uses the stationary covariance.
/// From a zero initial state `P_t` increases in PSD order, so on a finite
/// horizon the worst `t` is the latest admissible one.
pub fn ar_window_profile(spec: &ArSpec, max_gap: usize, horizon: Option<usize>) -> Result<MixingProfile> {
    spec.validate()?;
    let p = spec.order();
    let m = spec.window;
    let unit = ArSpec { noise_std: 1.0, ..spec.clone() };
    let ss = crate::process::companion(&spec.coeffs)?;
    // p-dimensional companion without the trailing zero column
    let a = ss.a.view((0, 0), (p, p)).clone_owned();
    let j_max = (max_gap + p).saturating_sub(m + 1);
    // state covariance at the conditioning time, by j
    let conditioning: BTreeMap<usize, DMatrix<f64>> = match horizon {
        None => {
            let full = unit.stationary_augmented_covariance()?;
            let cov = full.view((0, 0), (p, p)).clone_owned();
            (p..=j_max).map(|j| (j, cov.clone())).collect()
        }
        Some(n) => {
            let first = unit.sample_time(0);
            let last = unit.sample_time(n.saturating_sub(1));
            let mut out = BTreeMap::new();
            let lo = last.saturating_sub(j_max).max(first);
            let mut rec = unit.covariance_recursion();
            rec.advance_to(lo as i64 - 1);
            for t in lo..=last {
                let cov = rec.step().view((0, 0), (p, p)).clone_owned();
                if last - t >= p && last - t <= j_max {
                    out.insert(last - t, cov);
                }
            }
            out
        }
    };
    let mut coefficients = BTreeMap::new();
    let mut s_j = DMatrix::zeros(p, p);
    let mut a_j = DMatrix::identity(p, p);
    let mut j_done = 0;
    for k in 1..=max_gap {
        if k <= m {
            coefficients.insert(k, 1.0);
            continue;
        }
        let j = k - m + p - 1;
        while j_done < j {
            s_j += &a_j.column(0) * a_j.column(0).transpose();
            a_j = &a * a_j;
            j_done += 1;
        }
        let Some(p_t) = conditioning.get(&j) else {
            // no pair of samples is k apart on this horizon
            coefficients.insert(k, 0.0);
            continue;
        };
        coefficients.insert(k, kl_to_beta(gaussian_kl_gain(&s_j, &(&a_j * p_t * a_j.transpose()))?));
    }
    MixingProfile::new(coefficients, MixingMethod::GaussianKlBound)
}

/// `½ ln det(I + S^{-1} G)` for SPD `S` and PSD `G`.
fn gaussian_kl_gain(s: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<f64> {
    let chol = s
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { min_eig: crate::linalg::min_eigenvalue(s) })?;
    let l = chol.l();
    let half = l.solve_lower_triangular(g).expect("cholesky factor is nonsingular");
    let whitened = l.solve_lower_triangular(&half.transpose()).expect("cholesky factor is nonsingular");
    let sym = (&whitened + whitened.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    Ok(0.5 * eig.iter().map(|v| v.max(0.0).ln_1p()).sum::<f64>())
}

/// Mixing profile of any supported process for gaps `1..=max_gap`, on a
/// trajectory of `horizon` samples.
pub fn profile_for_spec(spec: &ProcessSpec, max_gap: usize, horizon: usize) -> Result<MixingProfile> {
    spec.validate()?;
    match spec {
        ProcessSpec::GaussianAr(s) => {
            let h = if s.is_stationary() { None } else { Some(horizon) };
            ar_window_profile(s, max_gap, h)
        }
        ProcessSpec::FiniteMarkov(s) => markov_profile(&s.transition_matrix()?, &s.initial_distribution()?, max_gap),
        ProcessSpec::IidGaussian(_) => Ok(MixingProfile::iid()),
        ProcessSpec::BlockConstant(s) => {
            let coefficients = (1..s.block_len).map(|g| (g, 1.0)).collect();
            MixingProfile::with_tail(coefficients, Some(0.0), MixingMethod::Analytic)
        }
    }
}
