//! Config-driven Monte Carlo experiments: bound coverage, rate slopes, the
//! lower uniform law, the dependent random walk and CLT consistency.
//!
//! Trial `t` at sample size index `k` draws from the seed
//! `derive_seed(derive_seed(seed, k), t)`, and results are reduced in trial
//! order, so outputs depend only on the config and seed.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blocking::{make_partition, BlockPartition};
use crate::bounds::{
    centered_walk_norms, clt_variance, corollary_bound, estimate_r, fourth_moment_constant, lower_tail_certificate,
    main_bound, noise_spectrum_with_orders, BoundReport, LowerTailReport, REstimate, UniversalConstants,
    DEFAULT_MOMENT_ORDERS,
};
use crate::error::{invalid, Error, Result};
use crate::linalg::{min_eigenvalue, op_norm_sym, symmetrize};
use crate::mixing::{mixing_sum, profile_for_spec, MixingProfile};
use crate::process::ProcessSpec;
use crate::regression::{fit_streamed, population_optimum_finite, OlsAccumulator, RegressionProblem};
use crate::rng::{self, derive_seed};

/// Excess risks at or below this count as zero when checking coverage.
pub const RISK_ROUNDING_FLOOR: f64 = 1e-24;
// seeds for the per-n Monte Carlo estimates live above the trial seeds
const ESTIMATE_SEED_OFFSET: u64 = 1 << 32;
const CLT_BAND: (f64, f64) = (0.8, 1.25);

// ---------------------------------------------------------------------------
// Configuration

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Lag window of the fitted AR model; overrides the process window.
    #[serde(default)]
    pub window: Option<usize>,
}

/// Either the block length `tau` (giving `m = max(1, n / 2tau)` blocks per
/// half) or the number of block pairs `m`. Defaults to `tau = 1`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionRule {
    #[serde(default)]
    pub tau: Option<usize>,
    #[serde(default)]
    pub m: Option<usize>,
}

impl PartitionRule {
    pub fn validate(&self) -> Result<()> {
        match (self.tau, self.m) {
            (Some(_), Some(_)) => Err(Error::Config("partition: give tau or m, not both".into())),
            (Some(0), _) | (_, Some(0)) => Err(Error::Config("partition: tau and m must be >= 1".into())),
            _ => Ok(()),
        }
    }

    pub fn partition(&self, n: usize) -> Result<BlockPartition> {
        self.validate()?;
        let m = match (self.tau, self.m) {
            (_, Some(m)) => m,
            (Some(tau), None) => (n / (2 * tau)).max(1),
            (None, None) => (n / 2).max(1),
        };
        make_partition(n, m)
    }
}

fn default_delta() -> f64 {
    0.1
}
fn default_trials() -> usize {
    1000
}
fn default_n_mc() -> usize {
    2000
}
fn default_block_lens() -> Vec<usize> {
    (0..8).map(|k| 1 << k).collect()
}
fn default_one() -> f64 {
    1.0
}
fn default_orders() -> Vec<f64> {
    DEFAULT_MOMENT_ORDERS.to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentParams {
    pub ns: Vec<usize>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Monte Carlo draws for the noise spectrum, `r` and the CLT variance.
    #[serde(default = "default_n_mc")]
    pub n_mc: usize,
    #[serde(default = "default_block_lens")]
    pub block_lens: Vec<usize>,
    #[serde(default = "default_one")]
    pub eps: f64,
    #[serde(default = "default_one")]
    pub eta: f64,
    #[serde(default = "default_orders")]
    pub moment_orders: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

/// One experiment, read from a TOML file with sections `process`, `fit`,
/// `partition`, `experiment`, `constants` and `output`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub process: ProcessSpec,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub partition: PartitionRule,
    pub experiment: ExperimentParams,
    #[serde(default)]
    pub constants: UniversalConstants,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.spec()?.validate()?;
        self.partition.validate()?;
        self.constants.validate()?;
        let e = &self.experiment;
        if !(e.delta > 0.0 && e.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {}", e.delta)));
        }
        if e.ns.is_empty() || e.ns.contains(&0) {
            return Err(Error::Config("ns must be a nonempty list of positive sizes".into()));
        }
        if e.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        Ok(())
    }

    /// The process with the fit window applied.
    pub fn spec(&self) -> Result<ProcessSpec> {
        match (&self.process, self.fit.window) {
            (ProcessSpec::GaussianAr(s), Some(w)) => {
                let mut s = s.clone();
                s.window = w;
                Ok(ProcessSpec::GaussianAr(s))
            }
            (_, Some(_)) => Err(Error::Config("fit.window applies only to gaussian_ar".into())),
            (p, None) => Ok(p.clone()),
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    fn n_seed(&self, k: usize) -> u64 {
        derive_seed(self.experiment.seed, k as u64)
    }

    fn estimate_seed(&self, k: usize) -> u64 {
        derive_seed(self.experiment.seed, ESTIMATE_SEED_OFFSET + k as u64)
    }
}

fn profile_for(spec: &ProcessSpec, partition: &BlockPartition) -> Result<MixingProfile> {
    profile_for_spec(spec, partition.a_max().max(1), partition.n())
}

// ---------------------------------------------------------------------------
// Bounds

/// Main-theorem report at sample size `ns[k]`, with the inputs it used.
pub struct BoundSetup {
    pub spec: ProcessSpec,
    pub prob: RegressionProblem,
    pub partition: BlockPartition,
    pub profile: MixingProfile,
    pub report: BoundReport,
    /// The corollary, when the partition is uniform, the process stationary
    /// and the target scalar.
    pub corollary: Option<BoundReport>,
}

pub fn bound_setup(cfg: &ExperimentConfig, k: usize) -> Result<BoundSetup> {
    let spec = cfg.spec()?;
    let n = *cfg.experiment.ns.get(k).ok_or_else(|| Error::InvalidArgument("no such n".into()))?;
    let prob = population_optimum_finite(&spec, n)?;
    let partition = cfg.partition.partition(n)?;
    let profile = profile_for(&spec, &partition)?;
    let e = &cfg.experiment;
    let spectrum = noise_spectrum_with_orders(&spec, &prob, &partition, e.n_mc, cfg.estimate_seed(k), &e.moment_orders)?;
    let report = main_bound(&spectrum, &profile, e.delta, &cfg.constants)?;
    let a_max = partition.a_max();
    let uniform = partition.lengths().iter().all(|l| *l == a_max);
    let corollary = if uniform && spec.is_stationary() && spec.y_dim() == 1 {
        let mut best: Option<BoundReport> = None;
        for idx in 0..spectrum.moment_orders.len() {
            let rep = corollary_bound(&spectrum.corollary_inputs(idx)?, &profile, e.delta, &cfg.constants)?;
            let slack = |r: &BoundReport| r.burnin_1b.lhs / r.burnin_1b.rhs.max(f64::MIN_POSITIVE);
            if best.as_ref().is_none_or(|b| slack(&rep) > slack(b)) {
                best = Some(rep);
            }
        }
        best
    } else {
        None
    };
    Ok(BoundSetup { spec, prob, partition, profile, report, corollary })
}

pub fn evaluate_bounds(cfg: &ExperimentConfig) -> Result<Vec<BoundSetup>> {
    (0..cfg.experiment.ns.len()).map(|k| bound_setup(cfg, k)).collect()
}

// ---------------------------------------------------------------------------
// Coverage

/// Excess risk of one trial; `None` when the design was degenerate.
fn trial_risks(spec: &ProcessSpec, prob: &RegressionProblem, n: usize, trials: usize, seed: u64) -> Result<Vec<Option<f64>>> {
    (0..trials)
        .into_par_iter()
        .map(|t| match fit_streamed(spec, n, derive_seed(seed, t as u64), prob) {
            Ok(fit) => Ok(Some(fit.excess_risk)),
            Err(Error::DegenerateDesign { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

/// Empirical `q`-quantile: the `ceil(q T)`-th smallest value.
pub fn empirical_quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&q) {
        return invalid("need values and q in [0, 1]");
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Ok(sorted[k - 1])
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoverageReport {
    pub n: usize,
    pub bound_value: f64,
    /// Empirical `1 - δ` quantile of the excess risk; degenerate trials count as `+inf`.
    pub quantile: f64,
    /// Fraction of trials with a nondegenerate design and excess risk within the bound.
    pub coverage: f64,
    pub degenerate: usize,
    pub trials: usize,
    pub bound: BoundReport,
    pub risks: Vec<Option<f64>>,
}

impl CoverageReport {
    pub fn burnins_hold(&self) -> bool {
        self.bound.all_burnins_hold()
    }
}

pub fn run_coverage(cfg: &ExperimentConfig) -> Result<Vec<CoverageReport>> {
    let trials = cfg.experiment.trials;
    if trials < 100 {
        return Err(Error::Config(format!("coverage needs trials >= 100, got {trials}")));
    }
    let mut out = Vec::new();
    for (k, &n) in cfg.experiment.ns.iter().enumerate() {
        let setup = bound_setup(cfg, k)?;
        let risks = trial_risks(&setup.spec, &setup.prob, n, trials, cfg.n_seed(k))?;
        let bound_value = setup.report.bound_value;
        let covered = risks
            .iter()
            .filter(|r| r.is_some_and(|r| r <= bound_value || r <= RISK_ROUNDING_FLOOR))
            .count();
        let values: Vec<f64> = risks.iter().map(|r| r.unwrap_or(f64::INFINITY)).collect();
        out.push(CoverageReport {
            n,
            bound_value,
            quantile: empirical_quantile(&values, 1.0 - cfg.experiment.delta)?,
            coverage: covered as f64 / trials as f64,
            degenerate: risks.iter().filter(|r| r.is_none()).count(),
            trials,
            bound: setup.report,
            risks,
        });
    }
    Ok(out)
}

/// Writes `coverage.csv`, `coverage_burnin.csv` and `coverage_risks.csv`.
pub fn write_coverage(reports: &[CoverageReport], dir: &Path) -> Result<()> {
    let mut main = String::from("n,bound,quantile,coverage\n");
    let mut burn = format!("{}\n", BoundReport::CSV_HEADER);
    let mut risks = String::from("n,trial,excess_risk,degenerate\n");
    for r in reports {
        main.push_str(&format!("{},{},{},{}\n", r.n, r.bound_value, r.quantile, r.coverage));
        burn.push_str(&r.bound.csv_row());
        burn.push('\n');
        for (t, risk) in r.risks.iter().enumerate() {
            match risk {
                Some(v) => risks.push_str(&format!("{},{t},{v},false\n", r.n)),
                None => risks.push_str(&format!("{},{t},inf,true\n", r.n)),
            }
        }
    }
    write_file(dir, "coverage.csv", &main)?;
    write_file(dir, "coverage_burnin.csv", &burn)?;
    write_file(dir, "coverage_risks.csv", &risks)
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut f = fs::File::create(dir.join(name))?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Rate slope

/// Least-squares slope of `ln y` against `ln x`. Needs at least four points
/// spanning at least 1.5 decades of `x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 4 {
        return invalid("need at least four (x, y) pairs");
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return invalid("slopes need positive finite values");
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let span = (lx.iter().copied().fold(f64::NEG_INFINITY, f64::max) - lx.iter().copied().fold(f64::INFINITY, f64::min))
        / std::f64::consts::LN_10;
    if span < 1.5 - 1e-12 {
        return invalid(format!("x spans {span:.2} decades, need at least 1.5"));
    }
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return invalid("median of nothing");
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = v.len() / 2;
    Ok(if v.len() % 2 == 1 { v[h] } else { 0.5 * (v[h - 1] + v[h]) })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlopeReport {
    pub ns: Vec<usize>,
    pub medians: Vec<f64>,
    pub slope: f64,
}

/// Slope of log median excess risk against log n.
pub fn rate_slope(cfg: &ExperimentConfig) -> Result<SlopeReport> {
    let spec = cfg.spec()?;
    let mut medians = Vec::new();
    for (k, &n) in cfg.experiment.ns.iter().enumerate() {
        let prob = population_optimum_finite(&spec, n)?;
        let risks = trial_risks(&spec, &prob, n, cfg.experiment.trials, cfg.n_seed(k))?;
        let values: Vec<f64> = risks.iter().map(|r| r.unwrap_or(f64::INFINITY)).collect();
        medians.push(median(&values)?);
    }
    let xs: Vec<f64> = cfg.experiment.ns.iter().map(|n| *n as f64).collect();
    let slope = log_log_slope(&xs, &medians)?;
    Ok(SlopeReport { ns: cfg.experiment.ns.clone(), medians, slope })
}

impl SlopeReport {
    pub fn csv(&self) -> String {
        let mut s = String::from("n,median_excess_risk\n");
        for (n, m) in self.ns.iter().zip(&self.medians) {
            s.push_str(&format!("{n},{m}\n"));
        }
        s
    }
}

// ---------------------------------------------------------------------------
// Lower uniform law

#[derive(Clone, Debug, PartialEq)]
pub struct LowerTailResult {
    pub n: usize,
    /// Fraction of trials with `λ_min(Σ̃_n) ≥ 1/2`.
    pub frequency: f64,
    pub trials: usize,
    pub h2: f64,
    pub certificate: LowerTailReport,
}

pub fn verify_lower_tail(cfg: &ExperimentConfig) -> Result<Vec<LowerTailResult>> {
    let spec = cfg.spec()?;
    let e = &cfg.experiment;
    let mut out = Vec::new();
    for (k, &n) in e.ns.iter().enumerate() {
        let prob = population_optimum_finite(&spec, n)?;
        let partition = cfg.partition.partition(n)?;
        let profile = profile_for(&spec, &partition)?;
        let h2 = fourth_moment_constant(&spec, &prob, n, cfg.estimate_seed(k))?;
        let certificate =
            lower_tail_certificate(n, &partition, spec.x_dim(), h2.sqrt(), e.delta, &profile, cfg.constants.c_lower)?;
        let seed = cfg.n_seed(k);
        let hits: Vec<bool> = (0..e.trials)
            .into_par_iter()
            .map(|t| {
                let mut acc = OlsAccumulator::new(spec.x_dim(), spec.y_dim());
                let mut g = rng::rng_for(derive_seed(seed, t as u64));
                spec.stream(n, &mut g, |x, y| acc.push(x, y))?;
                let isq = prob.inv_sqrt_sigma();
                let whitened = symmetrize(&(isq * (acc.gram() / n as f64) * isq));
                Ok(min_eigenvalue(&whitened) >= 0.5)
            })
            .collect::<Result<_>>()?;
        out.push(LowerTailResult {
            n,
            frequency: hits.iter().filter(|h| **h).count() as f64 / e.trials as f64,
            trials: e.trials,
            h2,
            certificate,
        });
    }
    Ok(out)
}

pub fn lower_tail_csv(results: &[LowerTailResult]) -> String {
    let mut s = String::from("n,frequency,trials,h2,size_holds,mixing_holds,certificate\n");
    for r in results {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.n,
            r.frequency,
            r.trials,
            r.h2,
            r.certificate.size.holds,
            r.certificate.mixing.holds,
            r.certificate.holds()
        ));
    }
    s
}

// ---------------------------------------------------------------------------
// Dependent random walk

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseWalkResult {
    pub n: usize,
    pub r: REstimate,
    pub threshold: f64,
    /// Fraction of trials with `‖(1/n) Σ V̄_i‖_F` above the threshold.
    pub exceedance: f64,
    pub exceedance_se: f64,
    /// Failure probability allowed by the theorem, minimised over moment orders.
    pub budget: f64,
    pub moment_s: Option<f64>,
    pub mixing_sum: f64,
    pub trials: usize,
}

pub fn verify_noise_walk(cfg: &ExperimentConfig) -> Result<Vec<NoiseWalkResult>> {
    let spec = cfg.spec()?;
    let e = &cfg.experiment;
    let mut out = Vec::new();
    for (k, &n) in e.ns.iter().enumerate() {
        let prob = population_optimum_finite(&spec, n)?;
        let partition = cfg.partition.partition(n)?;
        let profile = profile_for(&spec, &partition)?;
        let est_seed = cfg.estimate_seed(k);
        let r = estimate_r(&spec, &prob, &partition, e.n_mc, est_seed)?;
        let setting = r.setting(e.eps, e.eta, e.delta);
        let threshold = setting.threshold()?;
        let mix = mixing_sum(&profile, &partition)?;
        let spectrum =
            noise_spectrum_with_orders(&spec, &prob, &partition, e.n_mc, derive_seed(est_seed, 1), &e.moment_orders)?;
        let mut budget = 2.0 * e.delta + mix;
        let mut moment_s = None;
        if r.r > 0.0 {
            budget = f64::INFINITY;
            for (idx, &s) in spectrum.moment_orders.iter().enumerate() {
                let mut halves: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
                for i in 0..partition.num_blocks() {
                    let half = if BlockPartition::is_odd_block(i) { 0 } else { 1 };
                    halves[half].push(spectrum.block_moment(i, idx));
                }
                let b = setting.failure_budget(s, [&halves[0], &halves[1]], mix)?;
                if b < budget {
                    budget = b;
                    moment_s = Some(s);
                }
            }
        }
        let norms = centered_walk_norms(&spec, &prob, n, e.trials, cfg.n_seed(k))?;
        let p = norms.iter().filter(|v| **v > threshold).count() as f64 / e.trials as f64;
        out.push(NoiseWalkResult {
            n,
            r,
            threshold,
            exceedance: p,
            exceedance_se: (p * (1.0 - p) / e.trials as f64).sqrt(),
            budget,
            moment_s,
            mixing_sum: mix,
            trials: e.trials,
        });
    }
    Ok(out)
}

pub fn noise_walk_csv(results: &[NoiseWalkResult]) -> String {
    let mut s = String::from("n,lambda_odd,lambda_even,r,r_se,threshold,exceedance,exceedance_se,budget,moment_s,trials\n");
    for w in results {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            w.n,
            w.r.lambda[0],
            w.r.lambda[1],
            w.r.r,
            w.r.se,
            w.threshold,
            w.exceedance,
            w.exceedance_se,
            w.budget,
            w.moment_s.map_or("na".to_string(), |s| s.to_string()),
            w.trials
        ));
    }
    s
}

// ---------------------------------------------------------------------------
// CLT consistency

#[derive(Clone, Debug, PartialEq)]
pub struct CltResult {
    pub block_lens: Vec<usize>,
    /// `‖Σ_L‖_op` per block length.
    pub sigma2: Vec<f64>,
    /// Smallest length from which every successive ratio stays in `[0.8, 1.25]`.
    pub stabilized_from: Option<usize>,
}

/// Index of the first entry after which all successive ratios lie in the band.
pub fn stabilization_index(values: &[f64]) -> Option<usize> {
    let ok = |i: usize| {
        let r = values[i + 1] / values[i];
        r >= CLT_BAND.0 && r <= CLT_BAND.1
    };
    let pairs = values.len().checked_sub(1)?;
    if pairs == 0 {
        return Some(0);
    }
    let mut start = pairs;
    while start > 0 && ok(start - 1) {
        start -= 1;
    }
    (start < pairs).then_some(start)
}

pub fn clt_consistency(cfg: &ExperimentConfig) -> Result<CltResult> {
    let spec = cfg.spec()?;
    let mut lens = cfg.experiment.block_lens.clone();
    lens.sort_unstable();
    lens.dedup();
    let longest = *lens.last().ok_or_else(|| Error::Config("block_lens is empty".into()))?;
    let prob = population_optimum_finite(&spec, longest)?;
    let est = clt_variance(&spec, &prob, &lens, cfg.experiment.n_mc, cfg.estimate_seed(0))?;
    let sigma2: Vec<f64> = lens.iter().map(|l| op_norm_sym(&est[l])).collect();
    let stabilized_from = stabilization_index(&sigma2).map(|i| lens[i]);
    Ok(CltResult { block_lens: lens, sigma2, stabilized_from })
}

impl CltResult {
    pub fn csv(&self) -> String {
        let mut s = String::from("block_len,sigma2\n");
        for (l, v) in self.block_lens.iter().zip(&self.sigma2) {
            s.push_str(&format!("{l},{v}\n"));
        }
        s
    }
}
