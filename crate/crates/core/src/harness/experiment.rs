use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AlphaConfig, ExperimentConfig, KernelConfig, TargetConfig, TargetPreset};
use crate::bounds::Condition;
use crate::error::{Error, Result};
use crate::kernel::{KernelFamily, KernelSpec, SpectralCoeffs};
use crate::manifold::SpectralManifold;
use crate::regression::{
    bl_dimension, bound_bandlimited, bound_heat, evaluate_coeffs, fit, heat_alpha_floor, l2_error, Samples,
    TheoremBound,
};
use crate::seed::mix_seed;
use crate::stats::{binomial_sigma, loglog_slope, median, quantiles};

/// Stream index reserved for drawing the target function.
const TARGET_STREAM: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Record per-trial wall time. Off by default so output files are
    /// byte-reproducible.
    pub wall_clock: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub grid_index: usize,
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub omega: Option<f64>,
    pub alpha: f64,
    /// `‖f̂ − f*‖_{L2} / √vol`.
    pub error_l2_normalized: f64,
    pub certified_slack_normalized: f64,
    /// Same sample points refitted on noiseless responses (noisy runs only).
    pub error_noiseless_normalized: Option<f64>,
    pub bound_total: f64,
    pub bound_bias: f64,
    pub bound_noise: f64,
    pub gates_met: bool,
    pub conditions: Vec<Condition>,
    pub rank: Option<usize>,
    pub psi1: f64,
    pub failure: Option<String>,
    pub wall_ms: Option<f64>,
}

/// Floor below which a normalized L2 error counts as exact recovery.
pub const EXACT_RECOVERY_TOL: f64 = 1e-8;

impl TrialRecord {
    /// `error + slack <= bound`, with zero bounds read up to
    /// [`EXACT_RECOVERY_TOL`].
    pub fn covered(&self) -> bool {
        self.error_l2_normalized + self.certified_slack_normalized <= self.bound_total.max(EXACT_RECOVERY_TOL)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub grid_index: usize,
    pub n: usize,
    pub omega: Option<f64>,
    pub alpha: f64,
    /// Effective dimension `p(Ω)`, when a cutoff is defined.
    pub p: Option<f64>,
    pub trials: usize,
    pub failures: usize,
    pub median_error: f64,
    pub q05_error: f64,
    pub q95_error: f64,
    pub median_noiseless: Option<f64>,
    pub bound_total: f64,
    pub bound_bias: f64,
    pub bound_noise: f64,
    pub gated_trials: usize,
    pub covered_trials: usize,
    pub coverage: Option<f64>,
    /// `1 − 2δ − 3σ_binomial` for the gated trials.
    pub coverage_floor: Option<f64>,
    pub coverage_ok: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: ExperimentConfig,
    pub psi1: f64,
    pub target_rms: f64,
    pub target_rkhs_norm: Option<f64>,
    pub points: Vec<PointSummary>,
    /// Log-log slope of the median error against `n`, one per cutoff
    /// (NaN when the grid has a single `n`).
    pub slopes_vs_n: Vec<f64>,
    pub records: Vec<TrialRecord>,
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.failure.is_some()).count()
    }

    pub fn coverage_violated(&self) -> bool {
        self.points.iter().any(|p| p.coverage_ok == Some(false))
    }
}

#[derive(Clone, Copy, Debug)]
struct GridPoint {
    n: usize,
    omega: Option<f64>,
    omega_index: usize,
}

/// A validated configuration with its kernels and target prepared.
pub struct Experiment {
    config: ExperimentConfig,
    manifold: SpectralManifold,
    omegas: Vec<Option<f64>>,
    specs: Vec<KernelSpec>,
    grid: Vec<GridPoint>,
    truth: SpectralCoeffs,
    rkhs_norm: Option<f64>,
    psi1: f64,
}

impl Experiment {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let manifold = config.manifold()?;
        let omega_values = config.kernel.omega_grid(&manifold);
        let omegas: Vec<Option<f64>> =
            if omega_values.is_empty() { vec![None] } else { omega_values.iter().map(|o| Some(*o)).collect() };
        let tau = config.kernel.tau();
        let specs = match config.kernel {
            KernelConfig::Bandlimited { .. } => omegas
                .iter()
                .map(|o| KernelSpec::with_tolerance(manifold, config.kernel.family(*o), tau))
                .collect::<Result<Vec<_>>>()?,
            _ => {
                let spec = KernelSpec::with_tolerance(manifold, config.kernel.family(None), tau)?;
                vec![spec; omegas.len()]
            }
        };
        let grid = config
            .n_values()
            .iter()
            .flat_map(|&n| omegas.iter().enumerate().map(move |(i, o)| GridPoint { n, omega: *o, omega_index: i }))
            .collect();
        let truth = build_target(config, &manifold, &omegas)?;
        let rkhs_norm = match config.kernel {
            KernelConfig::Bandlimited { .. } => None,
            _ => Some(specs[0].rkhs_norm_sq(&truth)?.sqrt()),
        };
        Ok(Experiment {
            config: config.clone(),
            manifold,
            omegas,
            specs,
            grid,
            truth,
            rkhs_norm,
            psi1: config.noise.psi1(),
        })
    }

    pub fn truth(&self) -> &SpectralCoeffs {
        &self.truth
    }

    pub fn grid_len(&self) -> usize {
        self.grid.len()
    }

    fn alpha_at(&self, point: &GridPoint) -> f64 {
        match (self.config.alpha, &self.config.kernel) {
            (AlphaConfig::Value(a), _) => a,
            (AlphaConfig::Keyword(_), KernelConfig::Heat { t, .. }) => {
                heat_alpha_floor(&self.manifold, *t, point.omega.expect("heat kernels carry a cutoff"))
            }
            (AlphaConfig::Keyword(_), _) => 0.0,
        }
    }

    fn theorem_bound(&self, point: &GridPoint, alpha: f64) -> Result<Option<TheoremBound>> {
        let sigma = self.config.noise.sigma();
        let delta = self.config.delta;
        let psi1 = Some(self.psi1).filter(|v| *v > 0.0);
        match (&self.config.kernel, point.omega) {
            (KernelConfig::Bandlimited { .. }, Some(omega)) => {
                let mut b = bound_bandlimited(&self.manifold, omega, point.n, sigma, delta, psi1)?;
                let band = self.manifold.function_count(omega * omega)?;
                let in_band = self.truth.coeffs.iter().skip(band).all(|c| *c == 0.0);
                b.conditions.push(Condition::new("f* in band", in_band));
                b.conditions.push(Condition::new("α = 0 (pseudoinverse)", alpha == 0.0));
                Ok(Some(b))
            }
            (KernelConfig::Heat { t, .. }, Some(omega)) => {
                let norm = self.rkhs_norm.expect("heat targets carry an RKHS norm");
                Ok(Some(bound_heat(&self.manifold, *t, omega, alpha, norm, point.n, sigma, delta, psi1)?))
            }
            _ => Ok(None),
        }
    }

    /// Seed of one trial at one grid point.
    pub fn trial_seed(&self, grid_index: usize, trial: usize) -> u64 {
        mix_seed(mix_seed(self.config.seed, grid_index as u64), trial as u64)
    }

    pub fn run_trial(&self, grid_index: usize, trial: usize, opts: RunOptions) -> TrialRecord {
        let start = Instant::now();
        let point = self.grid[grid_index];
        let seed = self.trial_seed(grid_index, trial);
        let alpha = self.alpha_at(&point);
        let mut record = TrialRecord {
            grid_index,
            trial,
            seed,
            n: point.n,
            omega: point.omega,
            alpha,
            error_l2_normalized: f64::NAN,
            certified_slack_normalized: f64::NAN,
            error_noiseless_normalized: None,
            bound_total: f64::NAN,
            bound_bias: f64::NAN,
            bound_noise: f64::NAN,
            gates_met: false,
            conditions: Vec::new(),
            rank: None,
            psi1: self.psi1,
            failure: None,
            wall_ms: None,
        };
        match self.theorem_bound(&point, alpha) {
            Ok(Some(b)) => {
                record.bound_total = b.total;
                record.bound_bias = b.bias;
                record.bound_noise = b.noise;
                record.gates_met = b.gates_met();
                record.conditions = b.conditions;
            }
            Ok(None) => {}
            Err(e) => record.failure = Some(e.to_string()),
        }
        if record.failure.is_none() {
            if let Err(e) = self.fill_errors(&point, seed, alpha, &mut record) {
                record.failure = Some(e.to_string());
                record.error_l2_normalized = f64::NAN;
                record.gates_met = false;
            }
        }
        if opts.wall_clock {
            record.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
        }
        record
    }

    fn fill_errors(&self, point: &GridPoint, seed: u64, alpha: f64, record: &mut TrialRecord) -> Result<()> {
        let spec = &self.specs[point.omega_index];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs = self.manifold.sample_uniform_with(&mut rng, point.n);
        let clean = evaluate_coeffs(&self.truth, &xs)?;
        let noisy: Vec<f64> = clean.iter().map(|y| y + self.config.noise.sample(&mut rng)).collect();
        let lambda_eval = self.truth.lambda_max.max(spec.lambda_cap());
        let root_vol = self.manifold.volume().sqrt();

        let f = fit(spec, &Samples::new(xs.clone(), noisy)?, alpha)?;
        let err = l2_error(&f, &self.truth, lambda_eval)?;
        if !err.error.is_finite() {
            return Err(Error::Numerical { message: "non-finite error".into(), condition: f.diagnostics().condition });
        }
        record.error_l2_normalized = err.error / root_vol;
        record.certified_slack_normalized = err.certified_slack / root_vol;
        record.rank = Some(f.diagnostics().rank);
        if !self.config.noise.is_silent() {
            let f0 = fit(spec, &Samples::new(xs, clean)?, alpha)?;
            record.error_noiseless_normalized = Some(l2_error(&f0, &self.truth, lambda_eval)?.error / root_vol);
        }
        Ok(())
    }

    pub fn run_sweep(&self, opts: RunOptions) -> SweepResult {
        let trials = self.config.trials;
        let records: Vec<TrialRecord> = (0..self.grid.len() * trials)
            .into_par_iter()
            .map(|job| self.run_trial(job / trials, job % trials, opts))
            .collect();
        let points: Vec<PointSummary> =
            (0..self.grid.len()).map(|g| self.summarize(g, &records[g * trials..(g + 1) * trials])).collect();
        let slopes_vs_n = (0..self.omegas.len())
            .map(|oi| {
                let (ns, meds): (Vec<f64>, Vec<f64>) = points
                    .iter()
                    .filter(|p| self.grid[p.grid_index].omega_index == oi)
                    .map(|p| (p.n as f64, p.median_error))
                    .unzip();
                if ns.len() < 2 {
                    f64::NAN
                } else {
                    loglog_slope(&ns, &meds)
                }
            })
            .collect();
        SweepResult {
            config: self.config.clone(),
            psi1: self.psi1,
            target_rms: self.truth.l2_norm() / self.manifold.volume().sqrt(),
            target_rkhs_norm: self.rkhs_norm,
            points,
            slopes_vs_n,
            records,
        }
    }

    fn summarize(&self, grid_index: usize, records: &[TrialRecord]) -> PointSummary {
        let point = self.grid[grid_index];
        let errors: Vec<f64> = records.iter().map(|r| r.error_l2_normalized).collect();
        let q = quantiles(&errors, &[0.05, 0.5, 0.95]);
        let noiseless: Vec<f64> = records.iter().filter_map(|r| r.error_noiseless_normalized).collect();
        let gated: Vec<&TrialRecord> = records.iter().filter(|r| r.gates_met && r.failure.is_none()).collect();
        let covered = gated.iter().filter(|r| r.covered()).count();
        let target = 1.0 - 2.0 * self.config.delta;
        let (coverage, floor, ok) = if gated.is_empty() {
            (None, None, None)
        } else {
            let cov = covered as f64 / gated.len() as f64;
            let floor = target - 3.0 * binomial_sigma(target, gated.len());
            (Some(cov), Some(floor), Some(cov >= floor))
        };
        let first = records.first();
        PointSummary {
            grid_index,
            n: point.n,
            omega: point.omega,
            alpha: self.alpha_at(&point),
            p: point.omega.map(|o| bl_dimension(&self.manifold, o)),
            trials: records.len(),
            failures: records.iter().filter(|r| r.failure.is_some()).count(),
            median_error: q[1],
            q05_error: q[0],
            q95_error: q[2],
            median_noiseless: if noiseless.is_empty() { None } else { Some(median(&noiseless)) },
            bound_total: first.map(|r| r.bound_total).unwrap_or(f64::NAN),
            bound_bias: first.map(|r| r.bound_bias).unwrap_or(f64::NAN),
            bound_noise: first.map(|r| r.bound_noise).unwrap_or(f64::NAN),
            gated_trials: gated.len(),
            covered_trials: covered,
            coverage,
            coverage_floor: floor,
            coverage_ok: ok,
        }
    }
}

/// Runs one trial of the first grid point.
pub fn run_trial(config: &ExperimentConfig, trial_index: usize) -> Result<TrialRecord> {
    let exp = Experiment::new(config)?;
    Ok(exp.run_trial(0, trial_index, RunOptions::default()))
}

pub fn run_sweep(config: &ExperimentConfig, opts: RunOptions) -> Result<SweepResult> {
    Ok(Experiment::new(config)?.run_sweep(opts))
}

fn build_target(
    config: &ExperimentConfig,
    manifold: &SpectralManifold,
    omegas: &[Option<f64>],
) -> Result<SpectralCoeffs> {
    use rand::Rng;
    let preset = match &config.target {
        TargetConfig::Explicit { lambda_max, coeffs } => {
            return SpectralCoeffs::new(*manifold, *lambda_max, coeffs.clone());
        }
        TargetConfig::Preset(p) => *p,
    };
    let vol = manifold.volume();
    // band of the smallest cutoff so the target stays in band across an Ω grid
    let omega = omegas.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
    let band = if omega.is_finite() { omega * omega } else { 4.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, TARGET_STREAM));
    let scaled = |lambda_max: f64, raw: Vec<f64>| {
        let norm = raw.iter().map(|c| c * c).sum::<f64>().sqrt();
        let c = if norm > 0.0 { raw.iter().map(|c| c * vol.sqrt() / norm).collect() } else { raw };
        SpectralCoeffs::new(*manifold, lambda_max, c)
    };
    match preset {
        TargetPreset::Zero => SpectralCoeffs::zeros(*manifold, 0.0),
        TargetPreset::RandomInband => {
            let count = manifold.function_count(band)?;
            let raw: Vec<f64> = (0..count).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            scaled(band, raw)
        }
        TargetPreset::SingleMode => {
            let count = manifold.function_count(band)?;
            let mut raw = vec![0.0; count];
            raw[count - 1] = 1.0;
            scaled(band, raw)
        }
        TargetPreset::HeatSmooth => {
            let t = match config.kernel.family(None) {
                KernelFamily::Heat { t } => t,
                _ => 1.0,
            };
            let lambda_max = (50.0 / t).max(band);
            let basis = manifold.basis(lambda_max)?;
            let raw: Vec<f64> =
                basis.lambdas().iter().map(|l| rng.sample::<f64, _>(StandardNormal) * (-l * t / 2.0).exp()).collect();
            scaled(lambda_max, raw)
        }
    }
}
