//! Tail bounds and burn-in conditions, plus the Monte Carlo estimators that
//! feed them: the block variance proxies `Σ_i`, the fourth-moment constant
//! `h`, the normalised mean ratio `r` and the CLT variance.
//!
//! Noise variables are vectorised column-major, so `vec(V)` has length
//! `q = d_X d_Y` and entry `c d_Y + r` holds `V[r, c]`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blocking::{BlockPartition, DecoupledSampler};
use crate::error::{invalid, Error, Result};
use crate::linalg::{min_eigenvalue, op_norm_sym, sym_eigen, symmetrize};
use crate::mixing::{mixing_sum, MixingProfile};
use crate::process::ProcessSpec;
use crate::regression::{population_optimum, population_optimum_finite, RegressionProblem};
use crate::rng;

/// Smallest admissible number of Monte Carlo trials.
pub const MIN_MC_TRIALS: usize = 1000;
/// Moment orders tried for the heavy-tail burn-in.
pub const DEFAULT_MOMENT_ORDERS: [f64; 5] = [4.0, 6.0, 8.0, 10.0, 12.0];
// fixed work split, so results do not depend on the thread count
const MC_CHUNKS: usize = 64;
const PSD_ORDER_TOL: f64 = 1e-8;

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return invalid(format!("delta must lie in (0, 1), got {delta}"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Constants

fn default_c1() -> f64 {
    2.0
}
fn default_c2() -> f64 {
    20.0
}
fn default_c4() -> f64 {
    2.0
}
fn default_c6() -> f64 {
    1.0
}

/// The unspecified universal constants. Defaults are engineering choices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniversalConstants {
    #[serde(default = "default_c1")]
    pub c1: f64,
    #[serde(default = "default_c2")]
    pub c2: f64,
    #[serde(default = "default_c2")]
    pub c3: f64,
    #[serde(default = "default_c4")]
    pub c4: f64,
    #[serde(default = "default_c4")]
    pub c5: f64,
    #[serde(default = "default_c6")]
    pub c6: f64,
    #[serde(default = "default_c2")]
    pub c_lower: f64,
}

impl Default for UniversalConstants {
    fn default() -> Self {
        UniversalConstants { c1: 2.0, c2: 20.0, c3: 20.0, c4: 2.0, c5: 2.0, c6: 1.0, c_lower: 20.0 }
    }
}

impl UniversalConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [self.c1, self.c2, self.c3, self.c4, self.c5, self.c6, self.c_lower];
        if all.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return invalid("universal constants must be positive and finite");
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Scalar inequalities

/// `2 sqrt(var ln(1/δ) / n) + 4 b ln(1/δ) / (3n)`.
pub fn bernstein_threshold(n: usize, var: f64, b: f64, delta: f64) -> Result<f64> {
    blocked_bernstein_threshold(n, 1, var, b, delta)
}

/// `2 sqrt(blockvar ln(1/δ) / n) + 4 b k ln(1/δ) / (3n)` for `k | n`.
pub fn blocked_bernstein_threshold(n: usize, k: usize, blockvar: f64, b: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if n == 0 || k == 0 {
        return invalid("n and k must be >= 1");
    }
    if n % k != 0 {
        return invalid(format!("block length {k} does not divide n = {n}"));
    }
    if !(blockvar >= 0.0) || !(b > 0.0) {
        return invalid("need variance >= 0 and bound b > 0");
    }
    let l = (1.0 / delta).ln();
    let nf = n as f64;
    Ok(2.0 * (blockvar * l / nf).sqrt() + 4.0 * b * k as f64 * l / (3.0 * nf))
}

/// `tr M / ‖M‖_op` for symmetric PSD `M ≠ 0`.
pub fn edim(m: &DMatrix<f64>) -> Result<f64> {
    crate::linalg::ensure_square(m, "matrix")?;
    let op = op_norm_sym(m);
    if !(op > 0.0) {
        return invalid("effective dimension of the zero matrix");
    }
    Ok(m.trace() / op)
}

/// `1 + (2s/e)^{2s} (2 (1 + 2/ε)(3 + 4/η))² + ε^{-s}`.
pub fn fuk_nagaev_constant(eps: f64, eta: f64, s: f64) -> Result<f64> {
    if !(eps > 0.0) || !(eta > 0.0 && eta <= 1.0) || !(s > 2.0) || !s.is_finite() {
        return invalid(format!("need eps > 0, eta in (0, 1], s > 2; got eps={eps}, eta={eta}, s={s}"));
    }
    let lead = (2.0 * s / std::f64::consts::E).powf(2.0 * s);
    let inner = 2.0 * (1.0 + 2.0 / eps) * (3.0 + 4.0 / eta);
    Ok(1.0 + lead * inner * inner + eps.powf(-s))
}

/// `exp(-t² / ((2 + η) Λ)) + C_{ε,η,s} Σ E‖U_i‖^s / t^s`.
pub fn fuk_nagaev_tail(lambda: f64, moments_s: &[f64], t: f64, eps: f64, eta: f64, s: f64) -> Result<f64> {
    if !(t > 0.0) {
        return invalid("t must be positive");
    }
    if !(lambda >= 0.0) {
        return invalid("Λ must be >= 0");
    }
    let c = fuk_nagaev_constant(eps, eta, s)?;
    let gauss = if lambda > 0.0 { (-t * t / ((2.0 + eta) * lambda)).exp() } else { 0.0 };
    let poly: f64 = moments_s.iter().sum::<f64>() / t.powf(s);
    Ok(gauss + c * poly)
}

/// Odd and even halves of the dependent random-walk bound.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseTermSetting {
    /// `Λ_O`, `Λ_E`: operator norm of the summed block covariances over `|sgn|`.
    pub lambda: [f64; 2],
    /// `|O|`, `|E|` in samples.
    pub sizes: [usize; 2],
    pub r: f64,
    pub eps: f64,
    pub eta: f64,
    pub delta: f64,
}

impl NoiseTermSetting {
    fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return invalid("delta must lie in (0, 1]");
        }
        if !(self.eps > 0.0) || !(self.eta > 0.0 && self.eta <= 1.0) {
            return invalid("need eps > 0 and eta in (0, 1]");
        }
        if self.sizes.contains(&0) || self.lambda.iter().any(|l| !(*l >= 0.0)) || !(self.r >= 0.0) {
            return invalid("need nonempty halves, Λ >= 0 and r >= 0");
        }
        Ok(())
    }

    /// `max_sgn sqrt(Λ_sgn/|sgn|) ((1+2η) √r + (1+9ε) sqrt((2+η) ln(1/δ)))`.
    pub fn threshold(&self) -> Result<f64> {
        self.validate()?;
        let l = (1.0 / self.delta).ln();
        let shape = (1.0 + 2.0 * self.eta) * self.r.sqrt() + (1.0 + 9.0 * self.eps) * ((2.0 + self.eta) * l).sqrt();
        Ok((0..2)
            .map(|k| (self.lambda[k] / self.sizes[k] as f64).sqrt() * shape)
            .fold(0.0, f64::max))
    }

    /// Failure probability of the bound: `2δ` plus the mixing sum plus the
    /// polynomial Fuk-Nagaev terms. `block_moments[k]` lists `E‖Σ_{a_i} Z‖^s`
    /// over the blocks of half `k`. Halves with `Λ = 0` contribute nothing.
    pub fn failure_budget(&self, s: f64, block_moments: [&[f64]; 2], mixing_sum: f64) -> Result<f64> {
        self.validate()?;
        if !(self.r > 0.0) {
            return invalid("r must be positive for the failure budget");
        }
        let c = fuk_nagaev_constant(self.eps, self.eta, s)?;
        let pre = c * (1.0 + 9.0 * self.eps).powf(s) / (self.r.powf(s / 2.0) * self.eta.powf(s));
        let mut poly = 0.0;
        for k in 0..2 {
            let scale = (self.sizes[k] as f64 * self.lambda[k]).powf(s / 2.0);
            if scale > 0.0 {
                poly += block_moments[k].iter().sum::<f64>() / scale;
            }
        }
        Ok(2.0 * self.delta + mixing_sum + pre * poly)
    }
}

/// Threshold of the dependent random-walk bound; see [`NoiseTermSetting::threshold`].
#[allow(clippy::too_many_arguments)]
pub fn noise_term_threshold(
    lambda_o: f64,
    lambda_e: f64,
    size_o: usize,
    size_e: usize,
    r: f64,
    eps: f64,
    eta: f64,
    delta: f64,
) -> Result<f64> {
    NoiseTermSetting { lambda: [lambda_o, lambda_e], sizes: [size_o, size_e], r, eps, eta, delta }.threshold()
}

/// `min(u², τ²)`.
pub fn phi_tau(u: f64, tau: f64) -> f64 {
    (u * u).min(tau * tau)
}

// ---------------------------------------------------------------------------
// Noise variables

/// Evaluates `vec(V_j - E V_j)` without allocating.
struct NoiseMap {
    dx: usize,
    dy: usize,
    m_star: Vec<f64>,
    inv_sqrt: Vec<f64>,
    mean: NoiseMean,
}

enum NoiseMean {
    Constant(Vec<f64>),
    PerSample(Vec<Vec<f64>>),
}

impl NoiseMap {
    /// `n` is the number of samples whose means may be requested.
    fn new(spec: &ProcessSpec, prob: &RegressionProblem, n: usize) -> Result<Self> {
        let dx = spec.x_dim();
        let dy = spec.y_dim();
        if prob.x_dim() != dx || prob.y_dim() != dy {
            return invalid(format!(
                "problem is ({}, {}) but the process is ({dx}, {dy})",
                prob.x_dim(),
                prob.y_dim()
            ));
        }
        let isq = prob.inv_sqrt_sigma();
        let vec_of = |m: DMatrix<f64>| m.as_slice().to_vec();
        let mean = match spec {
            ProcessSpec::GaussianAr(s) if !s.is_stationary() => {
                let m = s.window;
                let mut rec = s.covariance_recursion();
                rec.advance_to(s.sample_time(0) as i64 - 1);
                let mut means = Vec::with_capacity(n);
                for _ in 0..n {
                    let p = rec.step();
                    let c = p.view((0, 1), (1, m)).clone_owned();
                    let sx = p.view((1, 1), (m, m)).clone_owned();
                    means.push(vec_of((c - &prob.m_star * sx) * isq));
                }
                NoiseMean::PerSample(means)
            }
            _ => {
                // every sample has the stationary marginal, whose cross moment
                // is M★_pop Σ_pop
                let pop = population_optimum(spec)?;
                NoiseMean::Constant(vec_of((&pop.m_star - &prob.m_star) * &pop.sigma_x * isq))
            }
        };
        Ok(NoiseMap {
            dx,
            dy,
            m_star: prob.m_star.transpose().as_slice().to_vec(),
            inv_sqrt: isq.as_slice().to_vec(),
            mean,
        })
    }

    fn q(&self) -> usize {
        self.dx * self.dy
    }

    /// Writes `vec(V̄_j)` to `out` and returns its squared norm. `scratch`
    /// needs `d_Y + d_X` entries.
    fn eval(&self, j: usize, x: &[f64], y: &[f64], scratch: &mut [f64], out: &mut [f64]) -> f64 {
        let (w, xt) = scratch.split_at_mut(self.dy);
        for r in 0..self.dy {
            // m_star is stored transposed: row r of M★ is contiguous
            let row = &self.m_star[r * self.dx..(r + 1) * self.dx];
            w[r] = y[r] - row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        for c in 0..self.dx {
            // Σ^{-1/2} is symmetric, so column c equals row c
            let col = &self.inv_sqrt[c * self.dx..(c + 1) * self.dx];
            xt[c] = col.iter().zip(x).map(|(a, b)| a * b).sum();
        }
        let mean: &[f64] = match &self.mean {
            NoiseMean::Constant(m) => m,
            NoiseMean::PerSample(ms) => &ms[j],
        };
        let mut sq = 0.0;
        for c in 0..self.dx {
            for r in 0..self.dy {
                let k = c * self.dy + r;
                let v = w[r] * xt[c] - mean[k];
                out[k] = v;
                sq += v * v;
            }
        }
        sq
    }
}

fn outer_add(acc: &mut [f64], v: &[f64]) {
    let q = v.len();
    for a in 0..q {
        let va = v[a];
        if va == 0.0 {
            continue;
        }
        let row = &mut acc[a * q..(a + 1) * q];
        for (dst, vb) in row.iter_mut().zip(v) {
            *dst += va * vb;
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn chunk_ranges(n_mc: usize) -> Vec<Range<usize>> {
    let chunks = MC_CHUNKS.min(n_mc).max(1);
    (0..chunks).map(|c| c * n_mc / chunks..(c + 1) * n_mc / chunks).collect()
}

/// Runs `f` on a fixed split of `0..n_mc` in parallel and returns the
/// partial results in chunk order.
fn par_trials<A, F>(n_mc: usize, f: F) -> Result<Vec<A>>
where
    A: Send,
    F: Fn(Range<usize>) -> Result<A> + Sync,
{
    chunk_ranges(n_mc).into_par_iter().map(|r| f(r)).collect()
}

fn check_mc(n_mc: usize) -> Result<()> {
    if n_mc < MIN_MC_TRIALS {
        return invalid(format!("n_mc must be >= {MIN_MC_TRIALS}, got {n_mc}"));
    }
    Ok(())
}

/// The augmented AR covariance just before sample `start`, or `None` for
/// other kinds.
fn segment_covariance(spec: &ProcessSpec, start: usize) -> Result<Option<DMatrix<f64>>> {
    match spec {
        ProcessSpec::GaussianAr(s) if s.is_stationary() => Ok(Some(s.stationary_augmented_covariance()?)),
        ProcessSpec::GaussianAr(s) => Ok(Some(s.augmented_covariance_at(s.discard() + start))),
        _ => Ok(None),
    }
}

// ---------------------------------------------------------------------------
// Noise spectrum

/// Blocks sharing one law: `Σ` and the moments `E‖B‖^s` of the block sum.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockGroup {
    pub len: usize,
    pub sigma: DMatrix<f64>,
    /// Indexed like [`NoiseSpectrum::moment_orders`].
    pub moments: Vec<f64>,
}

/// Monte Carlo estimates of the block variance proxies of one partition.
///
/// Blocks with the same law share a [`BlockGroup`]: for stationary processes
/// that is every block of a given length, otherwise each block is its own
/// group.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpectrum {
    pub n: usize,
    pub x_dim: usize,
    pub y_dim: usize,
    pub lengths: Vec<usize>,
    pub groups: Vec<BlockGroup>,
    /// Group of each block.
    pub block_group: Vec<usize>,
    /// `Σ = (1/n) Σ_i Σ_i`.
    pub sigma_agg: DMatrix<f64>,
    pub sigma2: f64,
    /// `tr Σ / ‖Σ‖_op`; zero when `Σ = 0`.
    pub edim: f64,
    /// Standard error of the estimate of `tr Σ`.
    pub trace_se: f64,
    pub moment_orders: Vec<f64>,
    /// `max_j E‖V̄_j‖²`.
    pub per_sample_var: f64,
    /// Fourth-moment constant `h²`: the largest exact ratio over the search
    /// directions, so a lower estimate of the supremum.
    pub h2: f64,
    pub n_mc: usize,
}

impl NoiseSpectrum {
    pub fn h(&self) -> f64 {
        self.h2.sqrt()
    }

    pub fn a_max(&self) -> usize {
        self.lengths.iter().copied().max().unwrap_or(0)
    }

    pub fn sigma_block(&self, i: usize) -> &DMatrix<f64> {
        &self.groups[self.block_group[i]].sigma
    }

    /// `E‖Σ_{j ∈ a_i} V̄_j‖^s` for the `k`-th moment order.
    pub fn block_moment(&self, i: usize, k: usize) -> f64 {
        self.groups[self.block_group[i]].moments[k]
    }

    /// `Σ_i Σ_i` over the odd blocks `a_1, a_3, ...` and the even blocks.
    pub fn parity_sums(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let q = self.x_dim * self.y_dim;
        let mut odd = DMatrix::zeros(q, q);
        let mut even = DMatrix::zeros(q, q);
        for i in 0..self.lengths.len() {
            if BlockPartition::is_odd_block(i) {
                odd += self.sigma_block(i);
            } else {
                even += self.sigma_block(i);
            }
        }
        (odd, even)
    }

    /// `(1/m) Σ_{i=1}^{2m} E‖|a_max|^{-1/2} Σ_{j ∈ a_i} V̄_j‖^s`.
    pub fn normalized_block_moment(&self, k: usize) -> f64 {
        let s = self.moment_orders[k];
        let m = self.lengths.len() / 2;
        let total: f64 = (0..self.lengths.len()).map(|i| self.block_moment(i, k)).sum();
        total / m as f64 / (self.a_max() as f64).powf(s / 2.0)
    }
}

#[derive(Clone)]
struct SpectrumAcc {
    // per group: q*q second moments then one entry per moment order
    second: Vec<Vec<f64>>,
    moments: Vec<Vec<f64>>,
    // per-sample second moments; one slot in stationary mode
    sample_sq: Vec<f64>,
    sample_count: Vec<f64>,
    trace_sum: f64,
    trace_sumsq: f64,
}

impl SpectrumAcc {
    fn new(groups: usize, q: usize, orders: usize, slots: usize) -> Self {
        SpectrumAcc {
            second: vec![vec![0.0; q * q]; groups],
            moments: vec![vec![0.0; orders]; groups],
            sample_sq: vec![0.0; slots],
            sample_count: vec![0.0; slots],
            trace_sum: 0.0,
            trace_sumsq: 0.0,
        }
    }

    fn merge(&mut self, other: &SpectrumAcc) {
        for (a, b) in self.second.iter_mut().zip(&other.second) {
            add_into(a, b);
        }
        for (a, b) in self.moments.iter_mut().zip(&other.moments) {
            add_into(a, b);
        }
        add_into(&mut self.sample_sq, &other.sample_sq);
        add_into(&mut self.sample_count, &other.sample_count);
        self.trace_sum += other.trace_sum;
        self.trace_sumsq += other.trace_sumsq;
    }

    fn record_block(&mut self, g: usize, sum: &[f64], orders: &[f64]) -> f64 {
        outer_add(&mut self.second[g], sum);
        let sq: f64 = sum.iter().map(|v| v * v).sum();
        for (acc, s) in self.moments[g].iter_mut().zip(orders) {
            *acc += sq.powf(s / 2.0);
        }
        sq
    }
}

/// [`noise_spectrum_with_orders`] with the default moment orders.
pub fn noise_spectrum(
    spec: &ProcessSpec,
    prob: &RegressionProblem,
    partition: &BlockPartition,
    n_mc: usize,
    seed: u64,
) -> Result<NoiseSpectrum> {
    noise_spectrum_with_orders(spec, prob, partition, n_mc, seed, &DEFAULT_MOMENT_ORDERS)
}

/// Estimates every `Σ_i = E[vec(B_i) vec(B_i)^T]`, `B_i = Σ_{j ∈ a_i} V̄_j`,
/// and the block moments `E‖B_i‖^s` from `n_mc` independent draws, centring
/// with the exact `E V_j`.
///
/// For stationary processes each distinct block length is simulated as an
/// independent stationary segment; otherwise whole trajectories are drawn.
pub fn noise_spectrum_with_orders(
    spec: &ProcessSpec,
    prob: &RegressionProblem,
    partition: &BlockPartition,
    n_mc: usize,
    seed: u64,
    orders: &[f64],
) -> Result<NoiseSpectrum> {
    check_mc(n_mc)?;
    spec.validate()?;
    if orders.is_empty() || orders.iter().any(|s| !(*s > 2.0) || !s.is_finite()) {
        return invalid("moment orders must be finite and > 2");
    }
    let n = partition.n();
    let stationary = spec.is_stationary();
    let map = NoiseMap::new(spec, prob, if stationary { 0 } else { n })?;
    let q = map.q();

    let (group_lens, block_group): (Vec<usize>, Vec<usize>) = if stationary {
        let mut lens: Vec<usize> = partition.lengths().to_vec();
        lens.sort_unstable();
        lens.dedup();
        let idx = partition.lengths().iter().map(|l| lens.binary_search(l).unwrap_or(0)).collect();
        (lens, idx)
    } else {
        (partition.lengths().to_vec(), (0..partition.num_blocks()).collect())
    };
    let counts: Vec<f64> = {
        let mut c = vec![0.0; group_lens.len()];
        for g in &block_group {
            c[*g] += 1.0;
        }
        c
    };
    let slots = if stationary { 1 } else { n };
    let stat_cov = if stationary { segment_covariance(spec, 0)? } else { None };
    let nf = n as f64;

    let partials = par_trials(n_mc, |range| {
        let mut acc = SpectrumAcc::new(group_lens.len(), q, orders.len(), slots);
        let mut scratch = vec![0.0; map.dx + map.dy];
        let mut v = vec![0.0; q];
        let mut sum = vec![0.0; q];
        for trial in range {
            let mut trace = 0.0;
            if stationary {
                for (g, len) in group_lens.iter().enumerate() {
                    let mut rng = rng::stream(rng::derive_seed(seed, g as u64), trial as u64);
                    sum.iter_mut().for_each(|s| *s = 0.0);
                    spec.stream_segment(0, *len, stat_cov.as_ref(), &mut rng, |x, y| {
                        acc.sample_sq[0] += map.eval(0, x, y, &mut scratch, &mut v);
                        acc.sample_count[0] += 1.0;
                        add_into(&mut sum, &v);
                    })?;
                    trace += counts[g] * acc.record_block(g, &sum, orders);
                }
            } else {
                let mut rng = rng::stream(seed, trial as u64);
                let mut j = 0;
                let mut block = 0;
                let mut next_end = partition.range(0).end;
                sum.iter_mut().for_each(|s| *s = 0.0);
                spec.stream(n, &mut rng, |x, y| {
                    acc.sample_sq[j] += map.eval(j, x, y, &mut scratch, &mut v);
                    acc.sample_count[j] += 1.0;
                    add_into(&mut sum, &v);
                    j += 1;
                    if j == next_end {
                        trace += acc.record_block(block, &sum, orders);
                        sum.iter_mut().for_each(|s| *s = 0.0);
                        block += 1;
                        if block < partition.num_blocks() {
                            next_end = partition.range(block).end;
                        }
                    }
                })?;
            }
            let t = trace / nf;
            acc.trace_sum += t;
            acc.trace_sumsq += t * t;
        }
        Ok(acc)
    })?;
    let mut acc = partials[0].clone();
    for p in &partials[1..] {
        acc.merge(p);
    }

    let mcf = n_mc as f64;
    let mut sigma_agg = DMatrix::zeros(q, q);
    let groups: Vec<BlockGroup> = group_lens
        .iter()
        .enumerate()
        .map(|(g, len)| {
            let sigma = symmetrize(&(DMatrix::from_column_slice(q, q, &acc.second[g]) / mcf));
            sigma_agg += &sigma * counts[g];
            BlockGroup { len: *len, sigma, moments: acc.moments[g].iter().map(|m| m / mcf).collect() }
        })
        .collect();
    sigma_agg /= nf;
    let sigma2 = op_norm_sym(&sigma_agg);
    let edim = if sigma2 > 0.0 { sigma_agg.trace() / sigma2 } else { 0.0 };
    let mean_t = acc.trace_sum / mcf;
    let var_t = (acc.trace_sumsq / mcf - mean_t * mean_t).max(0.0) * mcf / (mcf - 1.0);
    let per_sample_var = acc
        .sample_sq
        .iter()
        .zip(&acc.sample_count)
        .filter(|(_, c)| **c > 0.0)
        .map(|(s, c)| s / c)
        .fold(0.0, f64::max);
    let h2 = fourth_moment_constant(spec, prob, n, seed)?;
    Ok(NoiseSpectrum {
        n,
        x_dim: map.dx,
        y_dim: map.dy,
        lengths: partition.lengths().to_vec(),
        groups,
        block_group,
        sigma_agg,
        sigma2,
        edim,
        trace_se: (var_t / mcf).sqrt(),
        moment_orders: orders.to_vec(),
        per_sample_var,
        h2,
        n_mc,
    })
}

/// `max_v max_{i < n} E<v, X_i>^4 / E<v, X_i>^2` over `v ∈ ∂Σ_X`, searching
/// the eigenvectors of `Σ_X` and `10 d_X` random directions.
pub fn fourth_moment_constant(spec: &ProcessSpec, prob: &RegressionProblem, n: usize, seed: u64) -> Result<f64> {
    let dx = prob.x_dim();
    let eig = sym_eigen(&prob.sigma_x);
    let mut dirs: Vec<DVector<f64>> = (0..dx).map(|k| eig.eigenvectors.column(k).clone_owned()).collect();
    let mut rng = rng::stream(seed, u64::MAX);
    for _ in 0..10 * dx {
        dirs.push(DVector::from_fn(dx, |_, _| rng.sample(StandardNormal)));
    }
    let mut best: f64 = 0.0;
    for v in dirs {
        let scale = (v.transpose() * &prob.sigma_x * &v)[0];
        if !(scale > 0.0) {
            continue;
        }
        let v = v / scale.sqrt();
        best = best.max(spec.fourth_moment_ratio(v.as_slice(), 0..n)?);
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// CLT variance and the normalised mean ratio

/// For each length `L`, `(1/L) E[vec(B) vec(B)^T]` with `B` the sum of
/// `V̄_1, ..., V̄_L`, from `n_mc` draws of the first `L` samples.
pub fn clt_variance(
    spec: &ProcessSpec,
    prob: &RegressionProblem,
    block_lens: &[usize],
    n_mc: usize,
    seed: u64,
) -> Result<BTreeMap<usize, DMatrix<f64>>> {
    if block_lens.is_empty() || block_lens.contains(&0) {
        return invalid("block length sweep must be nonempty with lengths >= 1");
    }
    if n_mc < 2 {
        return invalid("n_mc must be >= 2");
    }
    spec.validate()?;
    let longest = *block_lens.iter().max().unwrap_or(&1);
    let map = NoiseMap::new(spec, prob, longest)?;
    let cov = segment_covariance(spec, 0)?;
    let q = map.q();
    let mut out = BTreeMap::new();
    for (li, &len) in block_lens.iter().enumerate() {
        let partials = par_trials(n_mc, |range| {
            let mut second = vec![0.0; q * q];
            let mut scratch = vec![0.0; map.dx + map.dy];
            let mut v = vec![0.0; q];
            let mut sum = vec![0.0; q];
            for trial in range {
                let mut rng = rng::stream(rng::derive_seed(seed, li as u64), trial as u64);
                sum.iter_mut().for_each(|s| *s = 0.0);
                let mut j = 0;
                spec.stream_segment(0, len, cov.as_ref(), &mut rng, |x, y| {
                    map.eval(j, x, y, &mut scratch, &mut v);
                    add_into(&mut sum, &v);
                    j += 1;
                })?;
                outer_add(&mut second, &sum);
            }
            Ok(second)
        })?;
        let mut second = vec![0.0; q * q];
        for p in &partials {
            add_into(&mut second, p);
        }
        let m = DMatrix::from_column_slice(q, q, &second) / (n_mc as f64 * len as f64);
        out.insert(len, symmetrize(&m));
    }
    Ok(out)
}

/// Monte Carlo estimate of `r = max_sgn (E‖T_sgn‖)² / ‖E[T_sgn T_sgn^T]‖_op`,
/// where `T_sgn` sums `V̄_j` over the odd or even blocks of a decoupled draw.
#[derive(Clone, Debug, PartialEq)]
pub struct REstimate {
    pub r: f64,
    pub se: f64,
    /// True when both halves have zero covariance; `r` is then 0.
    pub degenerate: bool,
    /// `Λ_O`, `Λ_E`.
    pub lambda: [f64; 2],
    pub sizes: [usize; 2],
    /// `E‖T_O‖`, `E‖T_E‖`.
    pub mean_norm: [f64; 2],
}

impl REstimate {
    pub fn setting(&self, eps: f64, eta: f64, delta: f64) -> NoiseTermSetting {
        NoiseTermSetting { lambda: self.lambda, sizes: self.sizes, r: self.r, eps, eta, delta }
    }
}

pub fn estimate_r(
    spec: &ProcessSpec,
    prob: &RegressionProblem,
    partition: &BlockPartition,
    n_mc: usize,
    seed: u64,
) -> Result<REstimate> {
    if n_mc < 2 {
        return invalid("n_mc must be >= 2");
    }
    let sampler = DecoupledSampler::new(spec, partition)?;
    let map = NoiseMap::new(spec, prob, partition.n())?;
    let q = map.q();
    // per half: second moment (q*q), sum of norms, sum of squared norms
    let partials = par_trials(n_mc, |range| {
        let mut second = [vec![0.0; q * q], vec![0.0; q * q]];
        let mut norms = [[0.0f64; 2]; 2];
        let mut scratch = vec![0.0; map.dx + map.dy];
        let mut v = vec![0.0; q];
        for trial in range {
            let mut t = [vec![0.0; q], vec![0.0; q]];
            let mut j = 0;
            sampler.stream(rng::derive_seed(seed, trial as u64), |block, x, y| {
                map.eval(j, x, y, &mut scratch, &mut v);
                let half = if BlockPartition::is_odd_block(block) { 0 } else { 1 };
                add_into(&mut t[half], &v);
                j += 1;
            })?;
            for k in 0..2 {
                outer_add(&mut second[k], &t[k]);
                let nrm = t[k].iter().map(|a| a * a).sum::<f64>().sqrt();
                norms[k][0] += nrm;
                norms[k][1] += nrm * nrm;
            }
        }
        Ok((second, norms))
    })?;
    let mut second = [vec![0.0; q * q], vec![0.0; q * q]];
    let mut norms = [[0.0f64; 2]; 2];
    for (s, nm) in &partials {
        for k in 0..2 {
            add_into(&mut second[k], &s[k]);
            norms[k][0] += nm[k][0];
            norms[k][1] += nm[k][1];
        }
    }
    let mcf = n_mc as f64;
    let sizes = [partition.odd_len(), partition.even_len()];
    let mut lambda = [0.0; 2];
    let mut mean_norm = [0.0; 2];
    let mut best = (0.0, 0.0);
    for k in 0..2 {
        let cov = symmetrize(&(DMatrix::from_column_slice(q, q, &second[k]) / mcf));
        let op = op_norm_sym(&cov);
        lambda[k] = op / sizes[k] as f64;
        let mean = norms[k][0] / mcf;
        mean_norm[k] = mean;
        if op > 0.0 {
            let var = (norms[k][1] / mcf - mean * mean).max(0.0) * mcf / (mcf - 1.0);
            let r = mean * mean / op;
            let se = 2.0 * mean * (var / mcf).sqrt() / op;
            if r > best.0 {
                best = (r, se);
            }
        }
    }
    Ok(REstimate {
        r: best.0,
        se: best.1,
        degenerate: lambda.iter().all(|l| *l == 0.0),
        lambda,
        sizes,
        mean_norm,
    })
}

/// `‖(1/n) Σ_i V̄_i‖_F` for `trials` independent trajectories; trial `k`
/// uses the seed `derive_seed(seed, k)`.
pub fn centered_walk_norms(
    spec: &ProcessSpec,
    prob: &RegressionProblem,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n == 0 || trials == 0 {
        return invalid("n and trials must be >= 1");
    }
    spec.validate()?;
    let map = NoiseMap::new(spec, prob, if spec.is_stationary() { 0 } else { n })?;
    let q = map.q();
    let parts = par_trials(trials, |range| {
        let mut out = Vec::with_capacity(range.len());
        let mut scratch = vec![0.0; map.dx + map.dy];
        let mut v = vec![0.0; q];
        for trial in range {
            let mut sum = vec![0.0; q];
            let mut rng = rng::rng_for(rng::derive_seed(seed, trial as u64));
            let mut j = 0;
            spec.stream(n, &mut rng, |x, y| {
                map.eval(j, x, y, &mut scratch, &mut v);
                add_into(&mut sum, &v);
                j += 1;
            })?;
            out.push(sum.iter().map(|a| a * a).sum::<f64>().sqrt() / n as f64);
        }
        Ok(out)
    })?;
    Ok(parts.into_iter().flatten().collect())
}

// ---------------------------------------------------------------------------
// Truncation and the Cauchy-Schwarz comparison

/// Both sides of the truncation lemma for one block and direction.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncationCheck {
    /// `(1 - h²/τ²) E[Σ_{i∈a} <v, X_i>²]`.
    pub lhs: f64,
    /// `Σ_{i∈a} E[<v, X_i>² 1_{F_a}]`.
    pub rhs: f64,
    /// Standard error of `rhs`; `lhs` uses the exact second moment.
    pub se: f64,
    /// Exact `h²` along `v` over the block.
    pub h2: f64,
    /// `v` rescaled onto `∂Σ_X`.
    pub direction: Vec<f64>,
}

impl TruncationCheck {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + 3.0 * self.se
    }
}

/// Monte Carlo check of the truncation lemma on block `block` with
/// `F_a = {(1/|a|) Σ_{i∈a} <v, X_i>² ≤ τ²}`. `v` is rescaled onto `∂Σ_X`
/// with `Σ_X` averaged over samples `0..block.end`.
pub fn truncation_mass_check(
    spec: &ProcessSpec,
    block: Range<usize>,
    v: &[f64],
    tau: f64,
    n_mc: usize,
    seed: u64,
) -> Result<TruncationCheck> {
    if block.is_empty() {
        return invalid("empty block");
    }
    if !(tau > 0.0) {
        return invalid("τ must be positive");
    }
    if n_mc < 2 {
        return invalid("n_mc must be >= 2");
    }
    if v.len() != spec.x_dim() {
        return invalid("direction has the wrong dimension");
    }
    let prob = population_optimum_finite(spec, block.end)?;
    let vv = DVector::from_column_slice(v);
    let scale = (vv.transpose() * &prob.sigma_x * &vv)[0];
    if !(scale > 0.0) {
        return invalid("direction is degenerate");
    }
    let vv = vv / scale.sqrt();
    let h2 = spec.fourth_moment_ratio(vv.as_slice(), block.clone())?;
    let factor = 1.0 - h2 / (tau * tau);
    let cov = segment_covariance(spec, block.start)?;
    let len = block.len();
    let partials = par_trials(n_mc, |range| {
        let mut sums = [0.0f64; 2];
        for trial in range {
            let mut rng = rng::stream(seed, trial as u64);
            let mut total = 0.0;
            spec.stream_segment(block.start, len, cov.as_ref(), &mut rng, |x, _| {
                let p: f64 = x.iter().zip(vv.iter()).map(|(a, b)| a * b).sum();
                total += p * p;
            })?;
            let kept = if total / len as f64 <= tau * tau { total } else { 0.0 };
            sums[0] += kept;
            sums[1] += kept * kept;
        }
        Ok(sums)
    })?;
    let mut sums = [0.0f64; 2];
    for s in &partials {
        sums[0] += s[0];
        sums[1] += s[1];
    }
    let mcf = n_mc as f64;
    let rhs = sums[0] / mcf;
    let var = (sums[1] / mcf - rhs * rhs).max(0.0) * mcf / (mcf - 1.0);
    let lhs = factor * exact_block_second_moment(spec, &block, &vv)?;
    Ok(TruncationCheck { lhs, rhs, se: (var / mcf).sqrt(), h2, direction: vv.as_slice().to_vec() })
}

/// `Σ_{i ∈ block} E<v, X_i>²`.
fn exact_block_second_moment(spec: &ProcessSpec, block: &Range<usize>, v: &DVector<f64>) -> Result<f64> {
    match spec {
        ProcessSpec::GaussianAr(s) if !s.is_stationary() => {
            let m = s.window;
            let mut rec = s.covariance_recursion();
            rec.advance_to(s.sample_time(block.start) as i64 - 1);
            let mut total = 0.0;
            for _ in block.clone() {
                let p = rec.step();
                let w = p.view((1, 1), (m, m)).clone_owned();
                total += (v.transpose() * w * v)[0];
            }
            Ok(total)
        }
        _ => {
            let pop = population_optimum(spec)?;
            Ok(block.len() as f64 * (v.transpose() * &pop.sigma_x * v)[0])
        }
    }
}

/// Both sides of `σ² ≤ |a_max| max_i E‖V̄_i‖²` in the scalar case.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CsComparison {
    pub sigma2: f64,
    pub inflated: f64,
    /// Standard error of `sigma2`.
    pub se: f64,
}

impl CsComparison {
    pub fn holds(&self) -> bool {
        self.sigma2 <= self.inflated + 3.0 * self.se
    }
}

pub fn cs_comparison(spectrum: &NoiseSpectrum, partition: &BlockPartition, per_sample_var: f64) -> Result<CsComparison> {
    if spectrum.x_dim != 1 || spectrum.y_dim != 1 {
        return Err(Error::UnsupportedSpec("the comparison needs d_X = d_Y = 1".into()));
    }
    if partition.lengths() != spectrum.lengths.as_slice() {
        return invalid("partition does not match the spectrum");
    }
    Ok(CsComparison {
        sigma2: spectrum.sigma2,
        inflated: partition.a_max() as f64 * per_sample_var,
        se: spectrum.trace_se,
    })
}

// ---------------------------------------------------------------------------
// Theorem reports

/// One burn-in predicate with its evaluated sides.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BurnInCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl BurnInCheck {
    fn at_least(lhs: f64, rhs: f64) -> Self {
        BurnInCheck { lhs, rhs, holds: lhs >= rhs }
    }

    fn at_most(lhs: f64, rhs: f64) -> Self {
        BurnInCheck { lhs, rhs, holds: lhs <= rhs }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Main,
    Corollary,
}

/// A tail bound on the excess risk together with its burn-in conditions.
///
/// The corollary has no partition-balance conditions, so `burnin_2a` and
/// `burnin_2b` are `None` there.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub n: usize,
    pub delta: f64,
    pub bound_value: f64,
    pub sigma2: f64,
    pub edim: f64,
    /// Moment order used in the heavy-tail condition.
    pub moment_s: f64,
    pub block_moment: f64,
    pub burnin_1a: BurnInCheck,
    pub burnin_1b: BurnInCheck,
    pub burnin_2a: Option<BurnInCheck>,
    pub burnin_2b: Option<BurnInCheck>,
    pub burnin_3: BurnInCheck,
    pub mixing_sum: f64,
    pub constants_used: UniversalConstants,
}

impl BoundReport {
    pub const CSV_HEADER: &'static str = "kind,n,delta,bound,sigma2,edim,moment_s,mixing_sum,\
burnin_1a,burnin_1b,burnin_2a,burnin_2b,burnin_3,c1,c2,c3,c4,c5,c6,c_lower";

    pub fn all_burnins_hold(&self) -> bool {
        self.checks().iter().all(|(_, c)| c.holds)
    }

    pub fn checks(&self) -> Vec<(&'static str, BurnInCheck)> {
        let mut out = vec![("1a", self.burnin_1a), ("1b", self.burnin_1b)];
        if let Some(c) = self.burnin_2a {
            out.push(("2a", c));
        }
        if let Some(c) = self.burnin_2b {
            out.push(("2b", c));
        }
        out.push(("3", self.burnin_3));
        out
    }

    pub fn csv_row(&self) -> String {
        let flag = |c: Option<BurnInCheck>| c.map_or("na".to_string(), |c| c.holds.to_string());
        let k = &self.constants_used;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            match self.kind {
                BoundKind::Main => "main",
                BoundKind::Corollary => "corollary",
            },
            self.n,
            self.delta,
            self.bound_value,
            self.sigma2,
            self.edim,
            self.moment_s,
            self.mixing_sum,
            self.burnin_1a.holds,
            self.burnin_1b.holds,
            flag(self.burnin_2a),
            flag(self.burnin_2b),
            self.burnin_3.holds,
            k.c1,
            k.c2,
            k.c3,
            k.c4,
            k.c5,
            k.c6,
            k.c_lower
        )
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        let kind = match self.kind {
            BoundKind::Main => "main theorem",
            BoundKind::Corollary => "corollary",
        };
        let _ = writeln!(s, "bound ({kind}): n = {}, delta = {}", self.n, self.delta);
        let _ = writeln!(s, "bound_value = {}", self.bound_value);
        let _ = writeln!(s, "sigma2 = {}, edim = {}, s = {}", self.sigma2, self.edim, self.moment_s);
        for (name, c) in self.checks() {
            let _ = writeln!(s, "burnin_{name} = {} (lhs = {}, rhs = {})", c.holds, c.lhs, c.rhs);
        }
        let _ = writeln!(s, "mixing_sum = {}", self.mixing_sum);
        let k = &self.constants_used;
        let _ = writeln!(
            s,
            "constants: c1 = {}, c2 = {}, c3 = {}, c4 = {}, c5 = {}, c6 = {}, c_lower = {} (defaults are not from theory)",
            k.c1, k.c2, k.c3, k.c4, k.c5, k.c6, k.c_lower
        );
        s
    }
}

fn heavy_tail_check(ratio_n: f64, s: f64, moment: f64, scale: f64, delta: f64, c3: f64) -> BurnInCheck {
    let lhs = ratio_n.powf(1.0 - 2.0 / s);
    let rhs = if moment == 0.0 {
        0.0
    } else {
        c3 * s * s * moment.powf(2.0 / s) / (scale * delta.powf(2.0 / s))
    };
    BurnInCheck::at_least(lhs, rhs)
}

/// Evaluates the main theorem for the partition the spectrum was built on.
///
/// The heavy-tail condition is evaluated at every moment order of the
/// spectrum; the order with the largest `lhs / rhs` is reported.
pub fn main_bound(
    spectrum: &NoiseSpectrum,
    profile: &MixingProfile,
    delta: f64,
    constants: &UniversalConstants,
) -> Result<BoundReport> {
    check_delta(delta)?;
    constants.validate()?;
    let partition = BlockPartition::from_lengths(spectrum.lengths.clone())?;
    let n = spectrum.n;
    let nf = n as f64;
    let l = (1.0 / delta).ln();
    let a_max = partition.a_max() as f64;
    let bound_value = constants.c1 * spectrum.sigma2 * (spectrum.edim + l) / nf;

    let burnin_1a = BurnInCheck::at_least(nf / a_max, constants.c2 * (spectrum.x_dim as f64 + spectrum.h2 * l));
    let scale = spectrum.edim * spectrum.sigma2;
    let mut best: Option<(f64, f64, f64, BurnInCheck)> = None;
    for (k, &s) in spectrum.moment_orders.iter().enumerate() {
        let moment = spectrum.normalized_block_moment(k);
        let check = heavy_tail_check(nf / a_max, s, moment, scale, delta, constants.c3);
        let slack = if check.rhs == 0.0 { f64::INFINITY } else { check.lhs / check.rhs };
        if best.as_ref().is_none_or(|b| slack > b.0) {
            best = Some((slack, s, moment, check));
        }
    }
    let (_, moment_s, block_moment, burnin_1b) =
        best.ok_or_else(|| Error::InvalidArgument("no moment orders".into()))?;

    let ratio = partition.even_len() as f64 / partition.odd_len() as f64;
    let burnin_2a = BurnInCheck {
        lhs: ratio,
        rhs: constants.c4,
        holds: ratio > 1.0 / constants.c4 && ratio < constants.c4,
    };
    let (odd, even) = spectrum.parity_sums();
    let tol = PSD_ORDER_TOL * (odd.trace() + even.trace());
    let worst = min_eigenvalue(&(&odd * constants.c5 - &even)).min(min_eigenvalue(&(&even * constants.c5 - &odd)));
    let burnin_2b = BurnInCheck::at_least(worst, -tol);

    let mix = mixing_sum(profile, &partition)?;
    Ok(BoundReport {
        kind: BoundKind::Main,
        n,
        delta,
        bound_value,
        sigma2: spectrum.sigma2,
        edim: spectrum.edim,
        moment_s,
        block_moment,
        burnin_1a,
        burnin_1b,
        burnin_2a: Some(burnin_2a),
        burnin_2b: Some(burnin_2b),
        burnin_3: BurnInCheck::at_most(mix, constants.c6 * delta),
        mixing_sum: mix,
        constants_used: *constants,
    })
}

/// Inputs of the stationary scalar-target corollary with blocks of length `τ`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorollaryInputs {
    pub tau: usize,
    pub n: usize,
    pub d_x: usize,
    /// `‖Σ_τ‖_op / τ`.
    pub sigma2: f64,
    pub h: f64,
    pub s: f64,
    /// `E‖(τ d_X)^{-1/2} Σ_{i=1}^τ V̄_i‖^s`.
    pub block_moment: f64,
}

/// Evaluates the corollary; `2τ` must divide `n`.
pub fn corollary_bound(
    inputs: &CorollaryInputs,
    profile: &MixingProfile,
    delta: f64,
    constants: &UniversalConstants,
) -> Result<BoundReport> {
    check_delta(delta)?;
    constants.validate()?;
    let CorollaryInputs { tau, n, d_x, sigma2, h, s, block_moment } = *inputs;
    if tau == 0 || n % (2 * tau) != 0 || n == 0 {
        return invalid(format!("2τ = {} does not divide n = {n}", 2 * tau));
    }
    if !(s > 2.0) || !(sigma2 >= 0.0) || !(block_moment >= 0.0) {
        return invalid("need s > 2, σ² >= 0 and a nonnegative moment");
    }
    let nf = n as f64;
    let l = (1.0 / delta).ln();
    let blocks = nf / tau as f64;
    let mix = blocks * profile.beta(tau)?;
    Ok(BoundReport {
        kind: BoundKind::Corollary,
        n,
        delta,
        bound_value: constants.c1 * sigma2 * (d_x as f64 + l) / nf,
        sigma2,
        edim: d_x as f64,
        moment_s: s,
        block_moment,
        burnin_1a: BurnInCheck::at_least(blocks, constants.c2 * (d_x as f64 + h * h * l)),
        burnin_1b: heavy_tail_check(blocks, s, block_moment, sigma2, delta, constants.c3),
        burnin_2a: None,
        burnin_2b: None,
        burnin_3: BurnInCheck::at_most(mix, constants.c4 * delta),
        mixing_sum: mix,
        constants_used: *constants,
    })
}

impl NoiseSpectrum {
    /// Corollary inputs for moment order `k`, valid when the spectrum was
    /// built on a uniform partition of a stationary process.
    pub fn corollary_inputs(&self, k: usize) -> Result<CorollaryInputs> {
        let tau = self.a_max();
        if self.lengths.iter().any(|l| *l != tau) {
            return invalid("corollary needs a uniform partition");
        }
        let s = self.moment_orders[k];
        let d = (tau * self.x_dim) as f64;
        Ok(CorollaryInputs {
            tau,
            n: self.n,
            d_x: self.x_dim,
            sigma2: self.sigma2,
            h: self.h(),
            s,
            block_moment: self.block_moment(0, k) / d.powf(s / 2.0),
        })
    }
}

/// The two burn-in conditions of the lower-tail theorem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LowerTailReport {
    /// `n ≥ C |a_max| (d_X + h² ln(1/δ))`.
    pub size: BurnInCheck,
    /// `Σ_{i=2}^{2m-1} β(|a_i|) ≤ δ/2`.
    pub mixing: BurnInCheck,
    pub delta: f64,
}

impl LowerTailReport {
    /// When true, with probability at least `1 - δ` every direction keeps
    /// half of its expected empirical second moment.
    pub fn holds(&self) -> bool {
        self.size.holds && self.mixing.holds
    }
}

pub fn lower_tail_certificate(
    n: usize,
    partition: &BlockPartition,
    d_x: usize,
    h: f64,
    delta: f64,
    profile: &MixingProfile,
    c_lower: f64,
) -> Result<LowerTailReport> {
    check_delta(delta)?;
    if !(c_lower > 0.0) {
        return invalid("C must be positive");
    }
    let l = (1.0 / delta).ln();
    let need = c_lower * partition.a_max() as f64 * (d_x as f64 + h * h * l);
    let mix = mixing_sum(profile, partition)?;
    Ok(LowerTailReport {
        size: BurnInCheck::at_least(n as f64, need),
        mixing: BurnInCheck::at_most(mix, delta / 2.0),
        delta,
    })
}
