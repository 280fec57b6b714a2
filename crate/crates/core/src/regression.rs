//! Least squares: the population optimum `M★`, OLS, excess risk, the
//! whitened noise walk and the Gaussian quartic identity.
//!
//! With `Σ_X = (1/n) Σ_i E[X_i X_i^T]`, `W_i = Y_i - M★ X_i` and
//! `V_i = W_i X_i^T Σ_X^{-1/2}`, the OLS error satisfies
//! `(M̂ - M★) Σ_X^{1/2} = S_n Σ̃_n^{-1}` where `S_n = (1/n) Σ V_i` and
//! `Σ̃_n = Σ_X^{-1/2} ((1/n) Σ X_i X_i^T) Σ_X^{-1/2}`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::linalg::{frobenius_inner, inv_sqrt_pd, min_eigenvalue, qr_solve, sqrt_psd, symmetrize, PD_EIG_FLOOR};
use crate::process::{ArSpec, ProcessSpec, Trajectory};
use crate::rng;

/// Relative design floor: the Gram matrix is degenerate when its smallest
/// eigenvalue is at most this times `trace / d`.
pub const DESIGN_FLOOR: f64 = 1e-10;
const MC_BATCHES: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub enum ProblemSource {
    Analytic,
    /// Elementwise standard errors of `m_star` from batch means.
    MonteCarlo { m_star_se: DMatrix<f64> },
}

/// Population quantities `Σ_X` and `M★`, with cached square roots of `Σ_X`.
#[derive(Clone, Debug)]
pub struct RegressionProblem {
    pub sigma_x: DMatrix<f64>,
    pub m_star: DMatrix<f64>,
    pub source: ProblemSource,
    sqrt_sigma: DMatrix<f64>,
    inv_sqrt_sigma: DMatrix<f64>,
}

impl RegressionProblem {
    pub fn new(sigma_x: DMatrix<f64>, m_star: DMatrix<f64>, source: ProblemSource) -> Result<Self> {
        if sigma_x.nrows() != sigma_x.ncols() || m_star.ncols() != sigma_x.nrows() {
            return invalid(format!(
                "shape mismatch: Σ_X is {}x{}, M★ is {}x{}",
                sigma_x.nrows(),
                sigma_x.ncols(),
                m_star.nrows(),
                m_star.ncols()
            ));
        }
        let sigma_x = symmetrize(&sigma_x);
        let inv_sqrt_sigma = inv_sqrt_pd(&sigma_x)?;
        let sqrt_sigma = sqrt_psd(&sigma_x);
        Ok(RegressionProblem { sigma_x, m_star, source, sqrt_sigma, inv_sqrt_sigma })
    }

    pub fn x_dim(&self) -> usize {
        self.sigma_x.nrows()
    }

    pub fn y_dim(&self) -> usize {
        self.m_star.nrows()
    }

    pub fn sqrt_sigma(&self) -> &DMatrix<f64> {
        &self.sqrt_sigma
    }

    pub fn inv_sqrt_sigma(&self) -> &DMatrix<f64> {
        &self.inv_sqrt_sigma
    }
}

/// `‖(m - M★) Σ_X^{1/2}‖_F²`.
pub fn excess_risk(m: &DMatrix<f64>, prob: &RegressionProblem) -> Result<f64> {
    if m.shape() != prob.m_star.shape() {
        return invalid(format!("hypothesis is {:?}, expected {:?}", m.shape(), prob.m_star.shape()));
    }
    Ok(((m - &prob.m_star) * &prob.sqrt_sigma).norm_squared())
}

// ---------------------------------------------------------------------------
// OLS

/// Running sums `Σ X X^T` and `Σ Y X^T`.
#[derive(Clone, Debug)]
pub struct OlsAccumulator {
    dx: usize,
    dy: usize,
    gram: Vec<f64>,
    cross: Vec<f64>,
    n: usize,
}

impl OlsAccumulator {
    pub fn new(dx: usize, dy: usize) -> Self {
        OlsAccumulator { dx, dy, gram: vec![0.0; dx * dx], cross: vec![0.0; dy * dx], n: 0 }
    }

    #[inline]
    pub fn push(&mut self, x: &[f64], y: &[f64]) {
        let dx = self.dx;
        for i in 0..dx {
            let xi = x[i];
            let row = &mut self.gram[i * dx..];
            for j in i..dx {
                row[j] += xi * x[j];
            }
        }
        for (r, yr) in y.iter().enumerate() {
            let row = &mut self.cross[r * dx..(r + 1) * dx];
            for (c, xc) in row.iter_mut().zip(x) {
                *c += yr * xc;
            }
        }
        self.n += 1;
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `Σ X_i X_i^T`.
    pub fn gram(&self) -> DMatrix<f64> {
        let dx = self.dx;
        DMatrix::from_fn(dx, dx, |i, j| if i <= j { self.gram[i * dx + j] } else { self.gram[j * dx + i] })
    }

    /// `Σ Y_i X_i^T`.
    pub fn cross(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dy, self.dx, &self.cross)
    }

    /// `M̂ = (Σ Y X^T)(Σ X X^T)^{-1}`, solving `G M̂^T = C^T` by QR.
    pub fn fit(&self) -> Result<DMatrix<f64>> {
        let g = self.gram();
        check_design(&g)?;
        Ok(qr_solve(&g, &self.cross().transpose())?.transpose())
    }

    /// Fit plus the whitened diagnostics against `prob`.
    pub fn fit_result(&self, prob: &RegressionProblem) -> Result<FitResult> {
        let m_hat = self.fit()?;
        let n = self.n as f64;
        let emp = self.gram() / n;
        let emp_cov_whitened = symmetrize(&(&prob.inv_sqrt_sigma * emp * &prob.inv_sqrt_sigma));
        let s_n = (self.cross() / n - &prob.m_star * self.gram() / n) * &prob.inv_sqrt_sigma;
        let excess_risk = excess_risk(&m_hat, prob)?;
        Ok(FitResult { m_hat, emp_cov_whitened, s_n, excess_risk })
    }
}

fn check_design(g: &DMatrix<f64>) -> Result<()> {
    let d = g.nrows() as f64;
    let min = min_eigenvalue(g);
    if !(min > DESIGN_FLOOR * g.trace() / d) {
        return Err(Error::DegenerateDesign { min_eig: min });
    }
    Ok(())
}

fn accumulate(traj: &Trajectory) -> OlsAccumulator {
    let mut acc = OlsAccumulator::new(traj.x_dim, traj.y_dim);
    for (x, y) in traj.iter() {
        acc.push(x, y);
    }
    acc
}

pub fn fit_ols(traj: &Trajectory) -> Result<DMatrix<f64>> {
    accumulate(traj).fit()
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub m_hat: DMatrix<f64>,
    /// `Σ̃_n`.
    pub emp_cov_whitened: DMatrix<f64>,
    pub s_n: DMatrix<f64>,
    pub excess_risk: f64,
}

impl FitResult {
    pub const CSV_HEADER: &'static str = "n,seed,excess_risk,min_eig_whitened,s_n_frobenius";

    pub fn csv_row(&self, n: usize, seed: u64) -> String {
        format!(
            "{n},{seed},{},{},{}",
            self.excess_risk,
            min_eigenvalue(&self.emp_cov_whitened),
            self.s_n.norm()
        )
    }
}

pub fn fit(traj: &Trajectory, prob: &RegressionProblem) -> Result<FitResult> {
    check_shapes(traj, prob)?;
    accumulate(traj).fit_result(prob)
}

/// Simulates `n` samples and fits them without storing the trajectory.
pub fn fit_streamed(spec: &ProcessSpec, n: usize, seed: u64, prob: &RegressionProblem) -> Result<FitResult> {
    let mut acc = OlsAccumulator::new(spec.x_dim(), spec.y_dim());
    let mut g = rng::rng_for(seed);
    spec.stream(n, &mut g, |x, y| acc.push(x, y))?;
    acc.fit_result(prob)
}

fn check_shapes(traj: &Trajectory, prob: &RegressionProblem) -> Result<()> {
    if traj.x_dim != prob.x_dim() || traj.y_dim != prob.y_dim() {
        return invalid(format!(
            "trajectory is ({}, {}), problem is ({}, {})",
            traj.x_dim,
            traj.y_dim,
            prob.x_dim(),
            prob.y_dim()
        ));
    }
    Ok(())
}

/// `V_i = (Y_i - M★ X_i) X_i^T Σ_X^{-1/2}` and `S_n = (1/n) Σ V_i`.
pub fn noise_walk(traj: &Trajectory, prob: &RegressionProblem) -> Result<(Vec<DMatrix<f64>>, DMatrix<f64>)> {
    check_shapes(traj, prob)?;
    let mut vs = Vec::with_capacity(traj.len());
    let mut s = DMatrix::zeros(prob.y_dim(), prob.x_dim());
    for (x, y) in traj.iter() {
        let v = noise_variable(x, y, prob);
        s += &v;
        vs.push(v);
    }
    s /= traj.len() as f64;
    Ok((vs, s))
}

/// One `V_i`.
pub fn noise_variable(x: &[f64], y: &[f64], prob: &RegressionProblem) -> DMatrix<f64> {
    let xv = DVector::from_column_slice(x);
    let w = DVector::from_column_slice(y) - &prob.m_star * &xv;
    w * (&prob.inv_sqrt_sigma * xv).transpose()
}

/// Relative residual of the error identity,
/// `‖(M̂ - M★) Σ_X^{1/2} - S_n Σ̃_n^{-1}‖_F / max(1, ‖(M̂ - M★) Σ_X^{1/2}‖_F)`.
pub fn error_identity_check(traj: &Trajectory, prob: &RegressionProblem) -> Result<f64> {
    let m_hat = fit_ols(traj)?;
    let lhs = (&m_hat - &prob.m_star) * &prob.sqrt_sigma;
    let (_, s_n) = noise_walk(traj, prob)?;
    let mut emp = DMatrix::zeros(prob.x_dim(), prob.x_dim());
    for x in traj.xs.chunks_exact(traj.x_dim) {
        let xv = DVector::from_column_slice(x);
        emp += &xv * xv.transpose();
    }
    emp /= traj.len() as f64;
    let whitened = symmetrize(&(&prob.inv_sqrt_sigma * emp * &prob.inv_sqrt_sigma));
    // S_n Σ̃^{-1} = (Σ̃^{-1} S_n^T)^T
    let rhs = qr_solve(&whitened, &s_n.transpose())?.transpose();
    Ok((&lhs - rhs).norm() / lhs.norm().max(1.0))
}

// ---------------------------------------------------------------------------
// Population optimum

/// Analytic `Σ_X` and `M★` for a stationary law.
///
/// - Gaussian AR fit on window `m`: Yule-Walker, `Σ_X = Γ_m`,
///   `M★^T = Γ_m^{-1} (γ(1), ..., γ(m))`. With `m < p` the fit is misspecified.
/// - iid and block-constant Gaussian: `Σ_X = I`, `M★ = coef`.
/// - Markov: exact stationary moments of the emissions.
pub fn population_optimum(spec: &ProcessSpec) -> Result<RegressionProblem> {
    spec.validate()?;
    match spec {
        ProcessSpec::GaussianAr(s) => {
            let gamma_m = crate::process::stationary_covariance(s)?;
            let acov = s.autocovariances(s.window)?;
            let cross = DMatrix::from_fn(1, s.window, |_, j| acov[j + 1]);
            solve_population(gamma_m, cross)
        }
        ProcessSpec::IidGaussian(law) => RegressionProblem::new(
            DMatrix::identity(law.covariate_dim, law.covariate_dim),
            law.coef_matrix(),
            ProblemSource::Analytic,
        ),
        ProcessSpec::BlockConstant(b) => RegressionProblem::new(
            DMatrix::identity(b.law.covariate_dim, b.law.covariate_dim),
            b.law.coef_matrix(),
            ProblemSource::Analytic,
        ),
        ProcessSpec::FiniteMarkov(mk) => {
            let pi = mk.initial_distribution()?;
            let dx = spec.x_dim();
            let dy = spec.y_dim();
            let mut sx = DMatrix::zeros(dx, dx);
            let mut c = DMatrix::zeros(dy, dx);
            for (w, e) in pi.iter().zip(&mk.emissions) {
                let x = DVector::from_column_slice(&e.x);
                let y = DVector::from_column_slice(&e.y);
                sx += &x * x.transpose() * *w;
                c += &y * x.transpose() * *w;
            }
            solve_population(sx, c)
        }
    }
}

fn solve_population(sigma_x: DMatrix<f64>, cross: DMatrix<f64>) -> Result<RegressionProblem> {
    let min = min_eigenvalue(&sigma_x);
    if min <= PD_EIG_FLOOR {
        return Err(Error::NotPositiveDefinite { min_eig: min });
    }
    let m_star = qr_solve(&sigma_x, &cross.transpose())?.transpose();
    RegressionProblem::new(sigma_x, m_star, ProblemSource::Analytic)
}

/// Exact population quantities for the first `n` samples, averaging the
/// per-sample second moments. Differs from [`population_optimum`] only for
/// the non-stationary AR and the block-constant process (where it agrees).
pub fn population_optimum_finite(spec: &ProcessSpec, n: usize) -> Result<RegressionProblem> {
    if n == 0 {
        return invalid("n must be >= 1");
    }
    match spec {
        ProcessSpec::GaussianAr(s) if !s.is_stationary() => {
            let (sx, c) = ar_average_moments(s, n)?;
            solve_population(sx, c)
        }
        _ => population_optimum(spec),
    }
}

/// `(1/n) Σ E[X_i X_i^T]` and `(1/n) Σ E[Y_i X_i^T]` for the zero-initialised AR.
pub fn ar_average_moments(s: &ArSpec, n: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    s.validate()?;
    let m = s.window;
    let mut rec = s.covariance_recursion();
    let mut sx = DMatrix::zeros(m, m);
    let mut c = DMatrix::zeros(1, m);
    let first = s.sample_time(0) as i64;
    rec.advance_to(first - 1);
    for _ in 0..n {
        let p = rec.step();
        sx += p.view((1, 1), (m, m));
        c += p.view((0, 1), (1, m));
    }
    Ok((sx / n as f64, c / n as f64))
}

/// Monte Carlo `M★` from one trajectory of length `n`, with batch-means
/// standard errors over 50 consecutive batches. `Σ_X` is the empirical second
/// moment.
pub fn population_optimum_mc(spec: &ProcessSpec, n: usize, seed: u64) -> Result<RegressionProblem> {
    if n < MC_BATCHES * spec.x_dim().max(1) * 2 {
        return invalid(format!("need at least {} samples", MC_BATCHES * spec.x_dim().max(1) * 2));
    }
    let dx = spec.x_dim();
    let dy = spec.y_dim();
    let batch = n / MC_BATCHES;
    let mut total = OlsAccumulator::new(dx, dy);
    let mut batches: Vec<OlsAccumulator> = (0..MC_BATCHES).map(|_| OlsAccumulator::new(dx, dy)).collect();
    let mut g = rng::rng_for(seed);
    let mut i = 0usize;
    spec.stream(n, &mut g, |x, y| {
        total.push(x, y);
        batches[(i / batch).min(MC_BATCHES - 1)].push(x, y);
        i += 1;
    })?;
    let m_star = total.fit()?;
    let fits: Vec<DMatrix<f64>> = batches.iter().map(OlsAccumulator::fit).collect::<Result<_>>()?;
    let mean = fits.iter().fold(DMatrix::zeros(dy, dx), |a, f| a + f) / MC_BATCHES as f64;
    let var = fits.iter().fold(DMatrix::zeros(dy, dx), |a, f| a + (f - &mean).map(|v| v * v)) / (MC_BATCHES - 1) as f64;
    let m_star_se = var.map(|v| (v / MC_BATCHES as f64).sqrt());
    let sigma_x = total.gram() / n as f64;
    RegressionProblem::new(sigma_x, m_star, ProblemSource::MonteCarlo { m_star_se })
}

// ---------------------------------------------------------------------------
// Gaussian moment identities

/// `E[g^T A g · g^T B g] = 2⟨A, sym B⟩ + tr A · tr B` for `g ~ N(0, I)`,
/// evaluated as `2⟨sym A, sym B⟩ + tr A tr B`, which is symmetric in `(A, B)`
/// bit for bit.
pub fn gaussian_quartic(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != a.ncols() || a.shape() != b.shape() {
        return invalid(format!("need equal square shapes, got {:?} and {:?}", a.shape(), b.shape()));
    }
    Ok(2.0 * frobenius_inner(&symmetrize(a), &symmetrize(b)) + a.trace() * b.trace())
}

/// `M_k`: the state `x_k = (y_k, ..., y_{k-p})` of the zero-initialised AR as
/// a linear map of the innovations `ε_0..=ε_horizon` (unit scale).
fn innovation_map(a: &DMatrix<f64>, k: i64, horizon: usize) -> DMatrix<f64> {
    let d = a.nrows();
    let mut out = DMatrix::zeros(d, horizon + 1);
    if k < 0 {
        return out;
    }
    let k = k as usize;
    let mut col = DVector::zeros(d);
    col[0] = 1.0;
    // column j is A^{k-j} e1
    for j in (0..=k.min(horizon)).rev() {
        out.set_column(j, &col);
        col = a * col;
    }
    out
}

/// `E[u_s^T Σ^{-1} u_t w_s w_t]` for an AR(m + n) fitted on window `m`, with
/// `θ = (α, β)`, `u_t = (y_{t-1}, ..., y_{t-m})`, `v_t = (y_{t-m-1}, ..., y_{t-m-n})`
/// and `w_t = ⟨β, v_t⟩ + ε_t`, from the zero initial condition (`y_0 = ε_0`).
///
/// Writing every quantity as a linear form of the innovation vector,
/// `u_t = P_u M_t ε` and `v_t = P_v M_{t-m} ε`, the expectation is
/// `σ⁴ [Q(A₁, A₂) + Q(A₁, A₃)]` with `Q` the Gaussian quartic,
/// `A₁ = M_s^T P_u^T Σ^{-1} P_u M_t`, `A₂ = M_{s-m}^T P_v^T β β^T P_v M_{t-m}`
/// and `A₃ = e_s β^T P_v M_{t-m}`. The remaining terms are linear in `ε_t`
/// and vanish.
pub fn cross_term_expectation(spec: &ArSpec, m: usize, s: usize, t: usize, sigma_inv: &DMatrix<f64>) -> Result<f64> {
    spec.validate()?;
    if s >= t {
        return invalid(format!("need s < t, got s = {s}, t = {t}"));
    }
    let p = spec.order();
    if m == 0 || m >= p {
        return invalid(format!("window {m} must lie in 1..{p}"));
    }
    if sigma_inv.shape() != (m, m) {
        return invalid(format!("Σ^{{-1}} must be {m}x{m}"));
    }
    let nb = p - m;
    let beta = DVector::from_column_slice(&spec.coeffs[m..]);
    let a = spec.state_space().a;
    let d = p + 1;
    let pu = DMatrix::from_fn(m, d, |i, j| f64::from(u8::from(j == i + 1)));
    let pv = DMatrix::from_fn(nb, d, |i, j| f64::from(u8::from(j == i + 1)));
    let mt = innovation_map(&a, t as i64, t);
    let ms = innovation_map(&a, s as i64, t);
    let mtm = innovation_map(&a, t as i64 - m as i64, t);
    let msm = innovation_map(&a, s as i64 - m as i64, t);
    let a1 = (&pu * &ms).transpose() * sigma_inv * (&pu * &mt);
    let bt = beta.transpose() * &pv * &mtm; // row: β^T P_v M_{t-m}
    let bs = beta.transpose() * &pv * &msm;
    let a2 = bs.transpose() * &bt;
    let mut es = DVector::zeros(t + 1);
    es[s] = 1.0;
    let a3 = es * &bt;
    let sigma2 = spec.noise_std * spec.noise_std;
    Ok(sigma2 * sigma2 * (gaussian_quartic(&a1, &a2)? + gaussian_quartic(&a1, &a3)?))
}

/// Monte Carlo estimate of `E[g^T A g · g^T B g]` with its standard error.
pub fn quartic_monte_carlo<R: Rng>(a: &DMatrix<f64>, b: &DMatrix<f64>, samples: usize, rng: &mut R) -> (f64, f64) {
    let d = a.nrows();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut g = DVector::zeros(d);
    for _ in 0..samples {
        for v in g.iter_mut() {
            *v = rng.sample(rand_distr::StandardNormal);
        }
        let qa = g.dot(&(a * &g));
        let qb = g.dot(&(b * &g));
        let z = qa * qb;
        sum += z;
        sum_sq += z * z;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::GaussianLinear;

    fn problem(sigma: DMatrix<f64>, m: DMatrix<f64>) -> RegressionProblem {
        RegressionProblem::new(sigma, m, ProblemSource::Analytic).unwrap()
    }

    #[test]
    fn ols_hand_instances() {
        let t = Trajectory::from_rows(&[vec![1.0], vec![2.0]], &[vec![1.0], vec![2.0]]).unwrap();
        assert!((fit_ols(&t).unwrap()[(0, 0)] - 1.0).abs() < 1e-14);
        let xs: Vec<Vec<f64>> = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![2.0 * x[0] - x[1]]).collect();
        let m = fit_ols(&Trajectory::from_rows(&xs, &ys).unwrap()).unwrap();
        assert!((m[(0, 0)] - 2.0).abs() < 1e-10 && (m[(0, 1)] + 1.0).abs() < 1e-10);
    }

    #[test]
    fn degenerate_design_rejected() {
        let t = Trajectory::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0]], &[vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(fit_ols(&t), Err(Error::DegenerateDesign { .. })));
    }

    #[test]
    fn excess_risk_values() {
        let p = problem(DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0])), DMatrix::zeros(1, 2));
        assert!((excess_risk(&DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), &p).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(excess_risk(&DMatrix::zeros(1, 2), &p).unwrap(), 0.0);
        assert!(excess_risk(&DMatrix::zeros(2, 2), &p).is_err());
    }

    #[test]
    fn hand_identity_instance() {
        let t = Trajectory::from_rows(&[vec![1.0], vec![2.0]], &[vec![3.0], vec![5.0]]).unwrap();
        // normal equations of the same sample: M★ = 13/5, Σ_X = 5/2
        let p = problem(DMatrix::from_element(1, 1, 2.5), DMatrix::from_element(1, 1, 2.6));
        assert!(error_identity_check(&t, &p).unwrap() < 1e-14);
    }

    #[test]
    fn yule_walker_values() {
        let ar1 = ProcessSpec::GaussianAr(ArSpec::new(vec![0.5], 1.0, 1).unwrap());
        assert!((population_optimum(&ar1).unwrap().m_star[(0, 0)] - 0.5).abs() < 1e-10);
        let ar2 = ProcessSpec::GaussianAr(ArSpec::new(vec![0.5, 0.2], 1.0, 1).unwrap());
        assert!((population_optimum(&ar2).unwrap().m_star[(0, 0)] - 0.625).abs() < 1e-10);
        let ar2w = ProcessSpec::GaussianAr(ArSpec::new(vec![0.5, 0.2], 1.0, 2).unwrap());
        let m = population_optimum(&ar2w).unwrap().m_star;
        assert!((m[(0, 0)] - 0.5).abs() < 1e-10 && (m[(0, 1)] - 0.2).abs() < 1e-10);
    }

    #[test]
    fn finite_average_tends_to_stationary() {
        let s = ArSpec::new(vec![0.5, 0.2], 1.0, 1).unwrap().with_warm_start(crate::process::WarmStart::Steps(0));
        let fin = population_optimum_finite(&ProcessSpec::GaussianAr(s.clone()), 20_000).unwrap();
        assert!((fin.m_star[(0, 0)] - 0.625).abs() < 1e-3);
        let short = population_optimum_finite(&ProcessSpec::GaussianAr(s), 1).unwrap();
        // sample 1: X = y_0 = ε_0, Y = y_1 = 0.5 ε_0 + ε_1
        assert!((short.m_star[(0, 0)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn markov_population() {
        let spec = ProcessSpec::FiniteMarkov(crate::process::MarkovSpec::symmetric_flip(0.3).unwrap());
        let p = population_optimum(&spec).unwrap();
        assert!((p.sigma_x[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((p.m_star[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quartic_values() {
        let i2 = DMatrix::identity(2, 2);
        assert_eq!(gaussian_quartic(&i2, &i2).unwrap(), 8.0);
        assert_eq!(gaussian_quartic(&i2, &DMatrix::zeros(2, 2)).unwrap(), 0.0);
        assert!(gaussian_quartic(&i2, &DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn cross_term_vanishes_when_well_specified() {
        let spec = ArSpec::new(vec![0.5, 0.0], 1.0, 1).unwrap();
        let inv = DMatrix::from_element(1, 1, 0.75);
        for t in 1..6 {
            for s in 0..t {
                assert_eq!(cross_term_expectation(&spec, 1, s, t, &inv).unwrap(), 0.0);
            }
        }
        assert!(cross_term_expectation(&spec, 1, 3, 3, &inv).is_err());
    }

    #[test]
    fn innovation_map_matches_recursion() {
        let a = ArSpec::new(vec![0.5, 0.2], 1.0, 1).unwrap().state_space().a;
        let m3 = innovation_map(&a, 3, 4);
        // y_3 = sum_j (A^{3-j})_{11} ε_j
        let psi = [1.0, 0.5, 0.45, 0.325];
        for j in 0..=3 {
            assert!((m3[(0, j)] - psi[3 - j]).abs() < 1e-14);
        }
        assert_eq!(m3[(0, 4)], 0.0);
        assert_eq!(innovation_map(&a, -1, 4), DMatrix::zeros(3, 5));
    }

    #[test]
    fn streamed_fit_matches_stored() {
        let spec = ProcessSpec::IidGaussian(GaussianLinear::new(3, 1, Some(vec![vec![1.0, 0.0, -1.0]]), 0.5).unwrap());
        let prob = population_optimum(&spec).unwrap();
        let a = fit_streamed(&spec, 200, 9, &prob).unwrap();
        let b = fit(&spec.simulate(200, 9).unwrap(), &prob).unwrap();
        assert_eq!(a.m_hat, b.m_hat);
        assert_eq!(a.excess_risk, b.excess_risk);
    }
}
