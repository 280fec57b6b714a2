//! Data-generating processes.
//!
//! Four families are supported:
//!
//! - Gaussian AR(p) observed through a lag window of width `window`
//!   (`X_t = (y_{t-1}, ..., y_{t-window})`, `Y_t = y_t`). The window may be
//!   narrower than the true order, which is the misspecified regression case.
//! - Finite-state Markov chains started from their stationary law, with a
//!   fixed emission `(x, y)` per state.
//! - Block-constant processes: one Gaussian linear draw repeated for
//!   `block_len` consecutive samples, blocks iid. This is the process that
//!   makes the blockwise Cauchy-Schwarz comparison tight.
//! - iid Gaussian linear designs.
//!
//! The AR recursion uses the zero initial condition `y_{-k} = 0` and then
//! discards a warm-start prefix before the first emitted sample. Sample
//! `i = 1..n` sits at process time `t_i = discard + i`, so the lag window of
//! the first sample may reach back to `y_0 = noise_std * eps_0`.

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{matrix_from_rows, spectral_radius, sqrt_psd, symmetrize};
use crate::rng;

/// Tolerance on row sums of a transition matrix.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Spectral radii within this distance of 1 count as unstable.
pub const SCHUR_TOL: f64 = 1e-10;
const LYAPUNOV_TOL: f64 = 1e-12;
const LYAPUNOV_MAX_ITER: usize = 1_000_000;

// ---------------------------------------------------------------------------
// State-space form of an AR(p) recursion

/// `x_{t+1} = A x_t + B eps_{t+1}`, `y_t = C x_t` with `x_t = (y_t, ..., y_{t-p})`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: RowDVector<f64>,
}

impl StateSpace {
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// `A^k`.
    pub fn power(&self, k: usize) -> DMatrix<f64> {
        let mut out = DMatrix::identity(self.dim(), self.dim());
        for _ in 0..k {
            out = &self.a * out;
        }
        out
    }
}

/// Companion form of `theta`: the `(p+1) x (p+1)` matrix whose first row is
/// `(theta, 0)` with the identity on the subdiagonal.
pub fn companion(theta: &[f64]) -> Result<StateSpace> {
    if theta.is_empty() {
        return invalid("companion: coefficient vector is empty");
    }
    let d = theta.len() + 1;
    let mut a = DMatrix::zeros(d, d);
    for (j, &t) in theta.iter().enumerate() {
        a[(0, j)] = t;
    }
    for i in 1..d {
        a[(i, i - 1)] = 1.0;
    }
    let mut b = DVector::zeros(d);
    b[0] = 1.0;
    let mut c = RowDVector::zeros(d);
    c[0] = 1.0;
    Ok(StateSpace { a, b, c })
}

/// k-step controllability Gramian `sum_{j<k} A^j B B^T (A^j)^T` (unit noise).
/// `k = 0` gives the zero matrix.
pub fn gramian(ss: &StateSpace, k: usize) -> DMatrix<f64> {
    let d = ss.dim();
    let mut out = DMatrix::zeros(d, d);
    let mut col = ss.b.clone();
    for _ in 0..k {
        out += &col * col.transpose();
        col = &ss.a * col;
    }
    out
}

/// Law of `y_{t+k}` given the state `x_t` under unit noise: `N(C A^k x_t, C Σ_k C^T)`.
/// Returns `(mean, variance)`.
pub fn conditional_gaussian(ss: &StateSpace, x_t: &DVector<f64>, k: usize) -> Result<(f64, f64)> {
    if k == 0 {
        return invalid("conditional_gaussian: k must be >= 1");
    }
    if x_t.len() != ss.dim() {
        return invalid(format!(
            "conditional_gaussian: state has length {}, expected {}",
            x_t.len(),
            ss.dim()
        ));
    }
    let mean = (&ss.c * ss.power(k) * x_t)[0];
    let sigma_k = gramian(ss, k);
    let var = (&ss.c * sigma_k * ss.c.transpose())[0];
    Ok((mean, var))
}

/// Solves `S = A S A^T + Q` by fixed-point iteration.
pub fn solve_discrete_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let rho = spectral_radius(a);
    if rho >= 1.0 - SCHUR_TOL {
        return Err(Error::Unstable { spectral_radius: rho });
    }
    let at = a.transpose();
    let mut s = q.clone();
    for _ in 0..LYAPUNOV_MAX_ITER {
        let next = a * &s * &at + q;
        let delta = (&next - &s).amax();
        s = next;
        if delta <= LYAPUNOV_TOL * s.amax().max(1.0) {
            return Ok(symmetrize(&s));
        }
    }
    Err(Error::NotConverged(format!(
        "discrete Lyapunov equation after {LYAPUNOV_MAX_ITER} iterations (spectral radius {rho})"
    )))
}

// ---------------------------------------------------------------------------
// Process specifications

/// Number of initial AR steps discarded before the first sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "WarmStartRepr", into = "WarmStartRepr")]
pub enum WarmStart {
    /// `ceil(10 p / (1 - spectral radius))` steps.
    #[default]
    Auto,
    /// Explicit count; `Steps(0)` keeps the exact zero-initialised process.
    Steps(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WarmStartRepr {
    Steps(usize),
    Named(String),
}

impl TryFrom<WarmStartRepr> for WarmStart {
    type Error = String;
    fn try_from(r: WarmStartRepr) -> std::result::Result<Self, String> {
        match r {
            WarmStartRepr::Steps(k) => Ok(WarmStart::Steps(k)),
            WarmStartRepr::Named(s) if s == "auto" => Ok(WarmStart::Auto),
            WarmStartRepr::Named(s) => Err(format!("warm_start must be \"auto\" or an integer, got {s:?}")),
        }
    }
}

impl From<WarmStart> for WarmStartRepr {
    fn from(w: WarmStart) -> Self {
        match w {
            WarmStart::Auto => WarmStartRepr::Named("auto".into()),
            WarmStart::Steps(k) => WarmStartRepr::Steps(k),
        }
    }
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

/// Gaussian AR(p) observed through a lag window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArSpec {
    pub coeffs: Vec<f64>,
    #[serde(default = "one")]
    pub noise_std: f64,
    #[serde(default = "one_usize")]
    pub window: usize,
    #[serde(default)]
    pub warm_start: WarmStart,
}

impl ArSpec {
    pub fn new(coeffs: Vec<f64>, noise_std: f64, window: usize) -> Result<Self> {
        let spec = ArSpec { coeffs, noise_std, window, warm_start: WarmStart::Auto };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_warm_start(mut self, warm_start: WarmStart) -> Self {
        self.warm_start = warm_start;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.coeffs.is_empty() {
            return invalid("AR coefficient vector is empty");
        }
        if self.coeffs.iter().any(|c| !c.is_finite()) {
            return invalid("AR coefficients must be finite");
        }
        if !(self.noise_std > 0.0 && self.noise_std.is_finite()) {
            return invalid(format!("AR noise_std must be positive, got {}", self.noise_std));
        }
        if self.window == 0 {
            return invalid("AR regression window must be >= 1");
        }
        let rho = self.spectral_radius();
        if rho >= 1.0 - SCHUR_TOL {
            return Err(Error::Unstable { spectral_radius: rho });
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    pub fn state_space(&self) -> StateSpace {
        companion(&self.coeffs).expect("validated AR spec has coefficients")
    }

    pub fn spectral_radius(&self) -> f64 {
        match companion(&self.coeffs) {
            Ok(ss) => spectral_radius(&ss.a),
            Err(_) => 0.0,
        }
    }

    pub fn auto_discard(&self) -> usize {
        let rho = self.spectral_radius().min(1.0 - 1e-12);
        (10.0 * self.order() as f64 / (1.0 - rho)).ceil() as usize
    }

    /// Warm-start steps discarded before sample 1.
    pub fn discard(&self) -> usize {
        match self.warm_start {
            WarmStart::Auto => self.auto_discard(),
            WarmStart::Steps(k) => k,
        }
    }

    /// Treated as stationary once the warm start is at least the automatic length.
    pub fn is_stationary(&self) -> bool {
        self.discard() >= self.auto_discard()
    }

    /// Number of past values the simulator keeps: `max(p, window)`.
    pub fn lag_depth(&self) -> usize {
        self.order().max(self.window)
    }

    /// Companion matrix of `theta` zero-padded to `lag_depth` lags, so the
    /// augmented state `(y_t, ..., y_{t - lag_depth})` covers the window too.
    pub fn augmented_companion(&self) -> DMatrix<f64> {
        let mut theta = self.coeffs.clone();
        theta.resize(self.lag_depth(), 0.0);
        companion(&theta).expect("non-empty").a
    }

    fn augmented_noise(&self) -> DMatrix<f64> {
        let d = self.lag_depth() + 1;
        let mut q = DMatrix::zeros(d, d);
        q[(0, 0)] = self.noise_std * self.noise_std;
        q
    }

    /// Stationary covariance of the `(p+1)`-dimensional state, noise included.
    pub fn stationary_state_covariance(&self) -> Result<DMatrix<f64>> {
        let ss = self.state_space();
        let q = &ss.b * ss.b.transpose() * (self.noise_std * self.noise_std);
        solve_discrete_lyapunov(&ss.a, &q)
    }

    /// Stationary covariance of the augmented state `(y_t, ..., y_{t - lag_depth})`.
    pub fn stationary_augmented_covariance(&self) -> Result<DMatrix<f64>> {
        solve_discrete_lyapunov(&self.augmented_companion(), &self.augmented_noise())
    }

    /// Stationary autocovariances `gamma(0..=max_lag)`.
    pub fn autocovariances(&self, max_lag: usize) -> Result<Vec<f64>> {
        let state = self.stationary_state_covariance()?;
        let p = self.order();
        let mut gamma: Vec<f64> = (0..=p.min(max_lag)).map(|h| state[(0, h)]).collect();
        while gamma.len() <= max_lag {
            let h = gamma.len();
            let next = self.coeffs.iter().enumerate().map(|(j, a)| a * gamma[h - 1 - j]).sum();
            gamma.push(next);
        }
        Ok(gamma)
    }

    /// Covariance recursion of the augmented state of the zero-initialised
    /// process, positioned before time 0.
    pub fn covariance_recursion(&self) -> CovarianceRecursion {
        let d = self.lag_depth() + 1;
        CovarianceRecursion {
            a: self.augmented_companion(),
            q: self.augmented_noise(),
            current: DMatrix::zeros(d, d),
            time: -1,
        }
    }

    /// Exact covariance of the augmented state at process time `t`.
    pub fn augmented_covariance_at(&self, t: usize) -> DMatrix<f64> {
        let mut rec = self.covariance_recursion();
        rec.advance_to(t as i64);
        rec.current
    }

    /// Process time of (0-based) sample `index`.
    pub fn sample_time(&self, index: usize) -> usize {
        self.discard() + index + 1
    }
}

/// `P_t = A P_{t-1} A^T + Q`, `P_{-1} = 0`.
#[derive(Clone, Debug)]
pub struct CovarianceRecursion {
    a: DMatrix<f64>,
    q: DMatrix<f64>,
    current: DMatrix<f64>,
    time: i64,
}

impl CovarianceRecursion {
    pub fn time(&self) -> i64 {
        self.time
    }

    pub fn current(&self) -> &DMatrix<f64> {
        &self.current
    }

    pub fn step(&mut self) -> &DMatrix<f64> {
        self.current = &self.a * &self.current * self.a.transpose() + &self.q;
        self.time += 1;
        &self.current
    }

    /// Steps until time `t`. Once a step leaves the covariance bit-for-bit
    /// unchanged every later step does too, so the remaining steps are skipped.
    pub fn advance_to(&mut self, t: i64) {
        while self.time < t {
            let next = &self.a * &self.current * self.a.transpose() + &self.q;
            self.time += 1;
            if next == self.current {
                self.time = t;
                break;
            }
            self.current = next;
        }
    }
}

/// Window covariance `Gamma_m` (Toeplitz in the autocovariances) of a
/// stationary AR spec, `m = spec.window`.
pub fn stationary_covariance(spec: &ArSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let m = spec.window;
    let gamma = spec.autocovariances(m)?;
    Ok(DMatrix::from_fn(m, m, |i, j| gamma[i.abs_diff(j)]))
}

/// `(x, y)` emitted while the chain sits in a given state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Emission {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Finite-state Markov chain with per-state emissions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovSpec {
    pub transition: Vec<Vec<f64>>,
    pub emissions: Vec<Emission>,
    /// Stationary initial law. When absent it is computed and must be unique.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
}

impl MarkovSpec {
    pub fn new(transition: Vec<Vec<f64>>, emissions: Vec<Emission>) -> Result<Self> {
        let spec = MarkovSpec { transition, emissions, initial: None };
        spec.validate()?;
        Ok(spec)
    }

    /// Two-state chain that flips with probability `q`, emitting `x = y = -1` / `+1`.
    pub fn symmetric_flip(q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return invalid(format!("flip probability must lie in [0, 1], got {q}"));
        }
        MarkovSpec::new(
            vec![vec![1.0 - q, q], vec![q, 1.0 - q]],
            vec![
                Emission { x: vec![-1.0], y: vec![-1.0] },
                Emission { x: vec![1.0], y: vec![1.0] },
            ],
        )
    }

    pub fn with_initial(mut self, initial: Vec<f64>) -> Result<Self> {
        self.initial = Some(initial);
        self.validate()?;
        Ok(self)
    }

    pub fn num_states(&self) -> usize {
        self.transition.len()
    }

    pub fn transition_matrix(&self) -> Result<DMatrix<f64>> {
        matrix_from_rows(&self.transition)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.transition_matrix()?;
        check_stochastic(&p)?;
        let s = self.num_states();
        if self.emissions.len() != s {
            return invalid(format!("{} emissions for {} states", self.emissions.len(), s));
        }
        let dx = self.emissions[0].x.len();
        let dy = self.emissions[0].y.len();
        if dx == 0 || dy == 0 {
            return invalid("emissions must have non-empty x and y");
        }
        if self.emissions.iter().any(|e| e.x.len() != dx || e.y.len() != dy) {
            return invalid("emissions have inconsistent dimensions");
        }
        self.initial_distribution().map(|_| ())
    }

    /// The chain's initial (stationary) law.
    pub fn initial_distribution(&self) -> Result<Vec<f64>> {
        let p = self.transition_matrix()?;
        match &self.initial {
            None => stationary_distribution(&p),
            Some(pi) => {
                if pi.len() != p.nrows() {
                    return invalid("initial law has the wrong length");
                }
                if pi.iter().any(|v| *v < 0.0 || !v.is_finite())
                    || (pi.iter().sum::<f64>() - 1.0).abs() > 1e-10
                {
                    return invalid("initial law is not a probability vector");
                }
                let row = RowDVector::from_row_slice(pi);
                let moved = &row * &p;
                if (&moved - &row).amax() > 1e-10 {
                    return invalid("initial law is not stationary for the transition matrix");
                }
                Ok(pi.clone())
            }
        }
    }
}

pub fn check_stochastic(p: &DMatrix<f64>) -> Result<()> {
    if p.nrows() == 0 || p.nrows() != p.ncols() {
        return Err(Error::NotStochastic(format!("matrix is {}x{}", p.nrows(), p.ncols())));
    }
    for (i, row) in p.row_iter().enumerate() {
        if row.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::NotStochastic(format!("row {i} has a negative or non-finite entry")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::NotStochastic(format!("row {i} sums to {sum}")));
        }
    }
    Ok(())
}

/// Unique stationary law of an irreducible aperiodic chain.
///
/// Chains with more than one unit eigenvalue (several closed classes) or
/// another eigenvalue on the unit circle (periodicity) are rejected.
pub fn stationary_distribution(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_stochastic(p)?;
    let s = p.nrows();
    let eig = crate::linalg::eigenvalues_general(p)
        .ok_or_else(|| Error::NotConverged("eigenvalues of the transition matrix".into()))?;
    let unit = eig.iter().filter(|z| (*z - nalgebra::Complex::new(1.0, 0.0)).norm() < 1e-8).count();
    if unit != 1 {
        return Err(Error::NoUniqueStationary(format!("{unit} unit eigenvalues")));
    }
    let on_circle = eig
        .iter()
        .filter(|z| z.norm() > 1.0 - 1e-8 && (*z - nalgebra::Complex::new(1.0, 0.0)).norm() >= 1e-8)
        .count();
    if on_circle > 0 {
        return Err(Error::NoUniqueStationary("chain is periodic".into()));
    }
    let mut sys = p.transpose() - DMatrix::identity(s, s);
    for j in 0..s {
        sys[(s - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(s);
    rhs[s - 1] = 1.0;
    let pi = sys
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NoUniqueStationary("singular stationary system".into()))?;
    let mut pi: Vec<f64> = pi.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);
    Ok(pi)
}

/// Linear-Gaussian law: `X ~ N(0, I)`, `Y = coef X + noise_std * xi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianLinear {
    pub covariate_dim: usize,
    #[serde(default = "one_usize")]
    pub target_dim: usize,
    /// `target_dim x covariate_dim`; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coef: Option<Vec<Vec<f64>>>,
    #[serde(default = "one")]
    pub noise_std: f64,
}

impl GaussianLinear {
    pub fn new(covariate_dim: usize, target_dim: usize, coef: Option<Vec<Vec<f64>>>, noise_std: f64) -> Result<Self> {
        let law = GaussianLinear { covariate_dim, target_dim, coef, noise_std };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        if self.covariate_dim == 0 || self.target_dim == 0 {
            return invalid("covariate_dim and target_dim must be >= 1");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return invalid(format!("noise_std must be >= 0, got {}", self.noise_std));
        }
        if let Some(c) = &self.coef {
            let m = matrix_from_rows(c)?;
            if m.nrows() != self.target_dim || m.ncols() != self.covariate_dim {
                return invalid(format!(
                    "coef is {}x{}, expected {}x{}",
                    m.nrows(),
                    m.ncols(),
                    self.target_dim,
                    self.covariate_dim
                ));
            }
        }
        Ok(())
    }

    pub fn coef_matrix(&self) -> DMatrix<f64> {
        match &self.coef {
            Some(c) => matrix_from_rows(c).expect("validated"),
            None => DMatrix::zeros(self.target_dim, self.covariate_dim),
        }
    }

    fn draw<R: Rng>(&self, coef: &DMatrix<f64>, rng: &mut R, x: &mut [f64], y: &mut [f64]) {
        for v in x.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (c, xv) in x.iter().enumerate() {
                acc += coef[(r, c)] * xv;
            }
            let xi: f64 = rng.sample(StandardNormal);
            *out = acc + self.noise_std * xi;
        }
    }
}

/// Block-constant process: each block of `block_len` samples repeats one draw.
/// A trailing partial block is allowed when `block_len` does not divide `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockConstantSpec {
    pub block_len: usize,
    #[serde(flatten)]
    pub law: GaussianLinear,
}

impl BlockConstantSpec {
    pub fn validate(&self) -> Result<()> {
        if self.block_len == 0 {
            return invalid("block_len must be >= 1");
        }
        self.law.validate()
    }
}

/// Declarative description of a data-generating process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessSpec {
    GaussianAr(ArSpec),
    FiniteMarkov(MarkovSpec),
    BlockConstant(BlockConstantSpec),
    IidGaussian(GaussianLinear),
}

impl ProcessSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ProcessSpec::GaussianAr(s) => s.validate(),
            ProcessSpec::FiniteMarkov(s) => s.validate(),
            ProcessSpec::BlockConstant(s) => s.validate(),
            ProcessSpec::IidGaussian(s) => s.validate(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ProcessSpec::GaussianAr(_) => "gaussian_ar",
            ProcessSpec::FiniteMarkov(_) => "finite_markov",
            ProcessSpec::BlockConstant(_) => "block_constant",
            ProcessSpec::IidGaussian(_) => "iid_gaussian",
        }
    }

    pub fn x_dim(&self) -> usize {
        match self {
            ProcessSpec::GaussianAr(s) => s.window,
            ProcessSpec::FiniteMarkov(s) => s.emissions.first().map_or(0, |e| e.x.len()),
            ProcessSpec::BlockConstant(s) => s.law.covariate_dim,
            ProcessSpec::IidGaussian(s) => s.covariate_dim,
        }
    }

    pub fn y_dim(&self) -> usize {
        match self {
            ProcessSpec::GaussianAr(_) => 1,
            ProcessSpec::FiniteMarkov(s) => s.emissions.first().map_or(0, |e| e.y.len()),
            ProcessSpec::BlockConstant(s) => s.law.target_dim,
            ProcessSpec::IidGaussian(s) => s.target_dim,
        }
    }

    /// Canonical identifier; equal specs give equal ids.
    pub fn id(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{}:{:?}", self.kind_name(), self);
        s
    }

    /// Whether every sample has the same marginal law as sample 0 and the
    /// law of a window depends only on its length.
    pub fn is_stationary(&self) -> bool {
        match self {
            ProcessSpec::GaussianAr(s) => s.is_stationary(),
            ProcessSpec::FiniteMarkov(_) | ProcessSpec::IidGaussian(_) => true,
            ProcessSpec::BlockConstant(s) => s.block_len == 1,
        }
    }

    /// Streams `n` samples to `f(x, y)` from a single generator.
    pub fn stream<R: Rng, F: FnMut(&[f64], &[f64])>(&self, n: usize, rng: &mut R, mut f: F) -> Result<()> {
        self.validate()?;
        match self {
            ProcessSpec::GaussianAr(s) => {
                let hist = vec![0.0; s.lag_depth()];
                stream_ar(s, hist, s.discard() + 1, n, rng, &mut f);
            }
            ProcessSpec::FiniteMarkov(s) => stream_markov(s, n, rng, &mut f)?,
            ProcessSpec::BlockConstant(s) => stream_block_constant(s, 0, n, rng, &mut f),
            ProcessSpec::IidGaussian(s) => stream_iid(s, n, rng, &mut f),
        }
        Ok(())
    }

    /// Simulates `n` samples; identical `(spec, n, seed)` give bit-identical output.
    pub fn simulate(&self, n: usize, seed: u64) -> Result<Trajectory> {
        if n == 0 {
            return invalid("trajectory length must be >= 1");
        }
        let mut traj = Trajectory::with_capacity(self, n, seed);
        let mut rng = rng::rng_for(seed);
        self.stream(n, &mut rng, |x, y| traj.push(x, y))?;
        Ok(traj)
    }

    /// Draws samples `start..start + len` (0-based) from their exact joint
    /// marginal law, independently of everything else.
    pub fn simulate_segment(&self, start: usize, len: usize, seed: u64) -> Result<Trajectory> {
        if len == 0 {
            return invalid("segment length must be >= 1");
        }
        self.validate()?;
        let mut traj = Trajectory::with_capacity(self, len, seed);
        let mut rng = rng::rng_for(seed);
        self.stream_segment(start, len, None, &mut rng, |x, y| traj.push(x, y))?;
        Ok(traj)
    }

    /// Streams samples `start..start + len` from their exact marginal law.
    /// For AR, `ar_cov` may supply the augmented covariance at the time just
    /// before the first sample, which otherwise is recomputed.
    pub(crate) fn stream_segment<R: Rng, F: FnMut(&[f64], &[f64])>(
        &self,
        start: usize,
        len: usize,
        ar_cov: Option<&DMatrix<f64>>,
        rng: &mut R,
        mut f: F,
    ) -> Result<()> {
        match self {
            ProcessSpec::GaussianAr(s) => {
                let owned;
                let cov = match ar_cov {
                    Some(c) => c,
                    None => {
                        owned = s.augmented_covariance_at(s.discard() + start);
                        &owned
                    }
                };
                ar_segment_from_covariance(s, cov, len, rng, &mut f);
            }
            ProcessSpec::BlockConstant(s) => stream_block_constant(s, start, len, rng, &mut f),
            _ => self.stream(len, rng, f)?,
        }
        Ok(())
    }

    /// Exact `max_{i in samples} E<v, X_i>^4 / E<v, X_i>^2`, the smallest
    /// `h^2` for which the fourth-moment condition holds along `v`.
    pub fn fourth_moment_ratio(&self, v: &[f64], samples: std::ops::Range<usize>) -> Result<f64> {
        if v.len() != self.x_dim() {
            return invalid("direction has the wrong dimension");
        }
        if samples.is_empty() {
            return invalid("empty sample range");
        }
        let vv = DVector::from_column_slice(v);
        match self {
            ProcessSpec::GaussianAr(s) => {
                // the per-time covariance increases in the PSD order towards the
                // stationary one, so the last sample attains the maximum
                let cov = if s.is_stationary() {
                    s.stationary_augmented_covariance()?
                } else {
                    s.augmented_covariance_at(s.sample_time(samples.end - 1))
                };
                let m = s.window;
                let win = cov.view((1, 1), (m, m)).clone_owned();
                Ok(3.0 * (vv.transpose() * win * &vv)[0])
            }
            ProcessSpec::BlockConstant(_) | ProcessSpec::IidGaussian(_) => Ok(3.0 * vv.norm_squared()),
            ProcessSpec::FiniteMarkov(s) => {
                let pi = s.initial_distribution()?;
                let (mut m2, mut m4) = (0.0, 0.0);
                for (w, e) in pi.iter().zip(&s.emissions) {
                    let proj: f64 = e.x.iter().zip(v).map(|(a, b)| a * b).sum();
                    m2 += w * proj * proj;
                    m4 += w * proj.powi(4);
                }
                if m2 <= 0.0 {
                    return Ok(0.0);
                }
                Ok(m4 / m2)
            }
        }
    }
}

/// Zero-initialised AR sample path.
pub fn simulate_ar(spec: &ArSpec, n: usize, seed: u64) -> Result<Trajectory> {
    ProcessSpec::GaussianAr(spec.clone()).simulate(n, seed)
}

pub fn simulate_markov(spec: &MarkovSpec, n: usize, seed: u64) -> Result<Trajectory> {
    ProcessSpec::FiniteMarkov(spec.clone()).simulate(n, seed)
}

pub fn simulate_block_constant(spec: &BlockConstantSpec, n: usize, seed: u64) -> Result<Trajectory> {
    ProcessSpec::BlockConstant(spec.clone()).simulate(n, seed)
}

fn stream_ar<R: Rng, F: FnMut(&[f64], &[f64]) + ?Sized>(
    spec: &ArSpec,
    mut hist: Vec<f64>,
    pre_steps: usize,
    n: usize,
    rng: &mut R,
    f: &mut F,
) {
    let m = spec.window;
    let mut y_out = [0.0];
    for step in 0..pre_steps + n {
        let mut y = 0.0;
        for (c, h) in spec.coeffs.iter().zip(&hist) {
            y += c * h;
        }
        let eps: f64 = rng.sample(StandardNormal);
        y += spec.noise_std * eps;
        if step >= pre_steps {
            y_out[0] = y;
            f(&hist[..m], &y_out);
        }
        hist.rotate_right(1);
        hist[0] = y;
    }
}

/// Continues the AR recursion from an augmented state drawn from `N(0, cov)`,
/// where `cov` is the covariance of `x_{t-1}` for the first emitted sample.
pub(crate) fn ar_segment_from_covariance<R: Rng, F: FnMut(&[f64], &[f64]) + ?Sized>(
    spec: &ArSpec,
    cov: &DMatrix<f64>,
    len: usize,
    rng: &mut R,
    f: &mut F,
) {
    let root = sqrt_psd(cov);
    let g = DVector::from_fn(cov.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let state = root * g;
    let hist: Vec<f64> = state.iter().take(spec.lag_depth()).copied().collect();
    stream_ar(spec, hist, 0, len, rng, f);
}

fn sample_categorical<R: Rng>(cdf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    cdf.iter().position(|c| u < *c).unwrap_or(cdf.len() - 1)
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

fn stream_markov<R: Rng, F: FnMut(&[f64], &[f64]) + ?Sized>(
    spec: &MarkovSpec,
    n: usize,
    rng: &mut R,
    f: &mut F,
) -> Result<()> {
    let init = cumulative(&spec.initial_distribution()?);
    let rows: Vec<Vec<f64>> = spec.transition.iter().map(|r| cumulative(r)).collect();
    let mut state = sample_categorical(&init, rng);
    for _ in 0..n {
        let e = &spec.emissions[state];
        f(&e.x, &e.y);
        state = sample_categorical(&rows[state], rng);
    }
    Ok(())
}

fn stream_block_constant<R: Rng, F: FnMut(&[f64], &[f64]) + ?Sized>(
    spec: &BlockConstantSpec,
    start: usize,
    n: usize,
    rng: &mut R,
    f: &mut F,
) {
    let coef = spec.law.coef_matrix();
    let mut x = vec![0.0; spec.law.covariate_dim];
    let mut y = vec![0.0; spec.law.target_dim];
    let mut current_block = usize::MAX;
    for j in start..start + n {
        let block = j / spec.block_len;
        if block != current_block {
            spec.law.draw(&coef, rng, &mut x, &mut y);
            current_block = block;
        }
        f(&x, &y);
    }
}

fn stream_iid<R: Rng, F: FnMut(&[f64], &[f64]) + ?Sized>(spec: &GaussianLinear, n: usize, rng: &mut R, f: &mut F) {
    let coef = spec.coef_matrix();
    let mut x = vec![0.0; spec.covariate_dim];
    let mut y = vec![0.0; spec.target_dim];
    for _ in 0..n {
        spec.draw(&coef, rng, &mut x, &mut y);
        f(&x, &y);
    }
}

// ---------------------------------------------------------------------------
// Trajectories

/// Samples `(X_1, Y_1), ..., (X_n, Y_n)` stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub x_dim: usize,
    pub y_dim: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub seed: u64,
    pub spec_id: String,
}

impl Trajectory {
    fn with_capacity(spec: &ProcessSpec, n: usize, seed: u64) -> Self {
        Trajectory {
            x_dim: spec.x_dim(),
            y_dim: spec.y_dim(),
            xs: Vec::with_capacity(n * spec.x_dim()),
            ys: Vec::with_capacity(n * spec.y_dim()),
            seed,
            spec_id: spec.id(),
        }
    }

    /// Builds a trajectory from explicit rows (not tied to a generating spec).
    pub fn from_rows(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return invalid("need equally many (>= 1) covariate and target rows");
        }
        let x_dim = xs[0].len();
        let y_dim = ys[0].len();
        if x_dim == 0 || y_dim == 0 || xs.iter().any(|r| r.len() != x_dim) || ys.iter().any(|r| r.len() != y_dim) {
            return invalid("inconsistent row dimensions");
        }
        Ok(Trajectory {
            x_dim,
            y_dim,
            xs: xs.concat(),
            ys: ys.concat(),
            seed: 0,
            spec_id: "explicit".into(),
        })
    }

    pub(crate) fn push(&mut self, x: &[f64], y: &[f64]) {
        self.xs.extend_from_slice(x);
        self.ys.extend_from_slice(y);
    }

    pub fn len(&self) -> usize {
        if self.x_dim == 0 {
            0
        } else {
            self.xs.len() / self.x_dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.x_dim..(i + 1) * self.x_dim]
    }

    pub fn y(&self, i: usize) -> &[f64] {
        &self.ys[i * self.y_dim..(i + 1) * self.y_dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.xs.chunks_exact(self.x_dim).zip(self.ys.chunks_exact(self.y_dim))
    }

    /// CSV with columns `t, x_1..x_dX, y_1..y_dY` (t is 1-based).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.x_dim).map(|i| format!("x_{i}")));
        header.extend((1..=self.y_dim).map(|i| format!("y_{i}")));
        writeln!(w, "{}", header.join(","))?;
        for (t, (x, y)) in self.iter().enumerate() {
            let mut line = (t + 1).to_string();
            for v in x.iter().chain(y) {
                line.push(',');
                line.push_str(&v.to_string());
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ar(coeffs: &[f64]) -> ArSpec {
        ArSpec::new(coeffs.to_vec(), 1.0, 1).unwrap()
    }

    #[test]
    fn companion_layout() {
        let ss = companion(&[0.3]).unwrap();
        assert_eq!(ss.a, DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 1.0, 0.0]));
        let ss = companion(&[0.5]).unwrap();
        assert!((ss.power(2)[(0, 0)] - 0.25).abs() < 1e-15);
        let ss = companion(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(ss.power(4), DMatrix::zeros(4, 4));
        assert!(ss.power(3).amax() > 0.0);
        assert!(companion(&[]).is_err());
    }

    #[test]
    fn gramian_values() {
        let ss = companion(&[0.5]).unwrap();
        assert!((gramian(&ss, 3)[(0, 0)] - 1.3125).abs() < 1e-15);
        assert_eq!(gramian(&ss, 1), &ss.b * ss.b.transpose());
        assert_eq!(gramian(&ss, 0), DMatrix::zeros(2, 2));
        let ss = companion(&[0.9]).unwrap();
        assert!((gramian(&ss, 400)[(0, 0)] - 1.0 / 0.19).abs() < 1e-10);
    }

    #[test]
    fn conditional_law_by_hand() {
        let ss = companion(&[0.5]).unwrap();
        let (mean, var) = conditional_gaussian(&ss, &DVector::from_vec(vec![1.0, 0.0]), 2).unwrap();
        assert!((mean - 0.25).abs() < 1e-15);
        assert!((var - 1.25).abs() < 1e-15);
        let (mean, _) = conditional_gaussian(&ss, &DVector::zeros(2), 3).unwrap();
        assert_eq!(mean, 0.0);
        assert!(conditional_gaussian(&ss, &DVector::zeros(3), 1).is_err());
        assert!(conditional_gaussian(&ss, &DVector::zeros(2), 0).is_err());
    }

    #[test]
    fn unstable_spec_rejected() {
        assert!(matches!(ArSpec::new(vec![1.0], 1.0, 1), Err(Error::Unstable { .. })));
        assert!(matches!(ArSpec::new(vec![0.5, 0.6], 1.0, 1), Err(Error::Unstable { .. })));
        assert!(ArSpec::new(vec![0.5, 0.2], 1.0, 1).is_ok());
    }

    #[test]
    fn zero_length_rejected() {
        assert!(simulate_ar(&ar(&[0.5]), 0, 1).is_err());
    }

    #[test]
    fn stationary_covariance_closed_forms() {
        let c = stationary_covariance(&ArSpec::new(vec![0.0], 2.0, 3).unwrap()).unwrap();
        assert!((c - DMatrix::identity(3, 3) * 4.0).amax() < 1e-12);
        let c = stationary_covariance(&ar(&[0.5])).unwrap();
        assert!((c[(0, 0)] - 4.0 / 3.0).abs() < 1e-11);
        let mut spec = ar(&[0.5, 0.2]);
        spec.window = 2;
        let c = stationary_covariance(&spec).unwrap();
        assert!((c[(0, 1)] - 0.625 * c[(0, 0)]).abs() < 1e-11);
    }

    #[test]
    fn lyapunov_residual_small() {
        let spec = ar(&[0.5, 0.2, -0.1]);
        let s = spec.stationary_state_covariance().unwrap();
        let ss = spec.state_space();
        let res = &ss.a * &s * ss.a.transpose() + &ss.b * ss.b.transpose() - &s;
        assert!(res.amax() <= 1e-10);
    }

    #[test]
    fn pure_noise_ar() {
        let spec = ar(&[0.0]).with_warm_start(WarmStart::Steps(0));
        let traj = simulate_ar(&spec, 3, 11).unwrap();
        let mut rng = rng::rng_for(11);
        let eps: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
        // sample i uses y_i = eps_i and lag y_{i-1}
        for i in 0..3 {
            assert_eq!(traj.y(i)[0], eps[i + 1]);
            assert_eq!(traj.x(i)[0], eps[i]);
        }
    }

    #[test]
    fn markov_validation() {
        assert!(MarkovSpec::new(vec![vec![0.5, 0.4], vec![0.5, 0.5]], MarkovSpec::symmetric_flip(0.1).unwrap().emissions).is_err());
        let frozen = MarkovSpec::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            MarkovSpec::symmetric_flip(0.1).unwrap().emissions,
        );
        assert!(matches!(frozen, Err(Error::NoUniqueStationary(_))));
        let periodic = MarkovSpec::symmetric_flip(1.0);
        assert!(matches!(periodic, Err(Error::NoUniqueStationary(_))));
    }

    #[test]
    fn frozen_chain_with_explicit_initial_is_constant() {
        let spec = MarkovSpec {
            transition: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            emissions: MarkovSpec::symmetric_flip(0.1).unwrap().emissions,
            initial: Some(vec![0.5, 0.5]),
        };
        for seed in 0..5 {
            let traj = simulate_markov(&spec, 50, seed).unwrap();
            let first = traj.x(0)[0];
            assert!(traj.iter().all(|(x, y)| x[0] == first && y[0] == first));
        }
    }

    #[test]
    fn block_constant_structure() {
        let law = GaussianLinear::new(1, 1, None, 1.0).unwrap();
        let spec = BlockConstantSpec { block_len: 4, law: law.clone() };
        let traj = simulate_block_constant(&spec, 10, 3).unwrap();
        for b in 0..3 {
            let start = b * 4;
            let end = (start + 4).min(10);
            assert!((start..end).all(|i| traj.x(i) == traj.x(start)));
        }
        assert_ne!(traj.x(0), traj.x(4));
        let whole = BlockConstantSpec { block_len: 10, law };
        let traj = simulate_block_constant(&whole, 10, 3).unwrap();
        assert!((0..10).all(|i| traj.x(i) == traj.x(0)));
    }

    #[test]
    fn determinism() {
        let specs = vec![
            ProcessSpec::GaussianAr(ar(&[0.5, 0.2])),
            ProcessSpec::FiniteMarkov(MarkovSpec::symmetric_flip(0.3).unwrap()),
            ProcessSpec::IidGaussian(GaussianLinear::new(3, 2, None, 1.0).unwrap()),
        ];
        for spec in specs {
            let a = spec.simulate(100, 42).unwrap();
            let b = spec.simulate(100, 42).unwrap();
            assert_eq!(a, b);
            let c = spec.simulate(100, 43).unwrap();
            assert_ne!(a.xs, c.xs);
        }
    }

    #[test]
    fn gramian_recursion_and_shift_identity() {
        let spec = ar(&[0.6, -0.3, 0.1]);
        let ss = spec.state_space();
        let bbt = &ss.b * ss.b.transpose();
        for k in 0..25 {
            let lhs = gramian(&ss, k + 1);
            let rhs = &ss.a * gramian(&ss, k) * ss.a.transpose() + &bbt;
            assert!((lhs - rhs).amax() <= 1e-12);
        }
        for t in 0..10 {
            for k in 1..10 {
                let ak = ss.power(k);
                let lhs = gramian(&ss, t + k + 1) - gramian(&ss, k);
                let rhs = &ak * gramian(&ss, t + 1) * ak.transpose();
                assert!((lhs - rhs).amax() <= 1e-12);
            }
        }
    }

    #[test]
    fn csv_layout() {
        let traj = Trajectory::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]], &[vec![5.0], vec![6.5]]).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,x_1,x_2,y_1\n1,1,2,5\n2,3,4,6.5\n");
    }

    #[test]
    fn warm_start_serde() {
        #[derive(Deserialize)]
        struct W {
            w: WarmStart,
        }
        let a: W = toml::from_str("w = \"auto\"").unwrap();
        assert_eq!(a.w, WarmStart::Auto);
        let b: W = toml::from_str("w = 12").unwrap();
        assert_eq!(b.w, WarmStart::Steps(12));
        assert!(toml::from_str::<W>("w = \"soon\"").is_err());
    }
}
