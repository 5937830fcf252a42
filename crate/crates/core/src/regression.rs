//! Kernel ridge regression and its pseudoinverse limit, spectral error
//! accounting, and the closed-form error bounds.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::Condition;
use crate::error::{Error, Result};
use crate::kernel::{truncate, KernelFamily, KernelSpec, SpectralCoeffs};
use crate::manifold::{EigLevel, Point, SpectralManifold};
use crate::special::unit_ball_volume;

/// Relative singular-value cutoff for the pseudoinverse.
pub const RCOND: f64 = 1e-10;

/// Points per work unit in parallel reductions. Fixed so that summation
/// order, and hence every output bit, is independent of the thread count.
const CHUNK: usize = 256;

#[derive(Clone, Debug)]
pub struct Samples {
    pub points: Vec<Point>,
    pub responses: Vec<f64>,
    pub truth: Option<SpectralCoeffs>,
    pub sigma: Option<f64>,
}

impl Samples {
    pub fn new(points: Vec<Point>, responses: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidSpec("at least one sample is required".into()));
        }
        if points.len() != responses.len() {
            return Err(Error::InvalidSpec(format!("{} points but {} responses", points.len(), responses.len())));
        }
        Ok(Samples { points, responses, truth: None, sigma: None })
    }

    /// `Y_i = f*(X_i)` with the truth attached.
    pub fn noiseless(truth: &SpectralCoeffs, points: Vec<Point>) -> Result<Self> {
        let responses = evaluate_coeffs(truth, &points)?;
        Ok(Samples::new(points, responses)?.with_truth(truth.clone()))
    }

    pub fn with_truth(mut self, truth: SpectralCoeffs) -> Self {
        self.truth = Some(truth);
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = Some(sigma);
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `f(X_i)` for a spectrally given `f` at every point.
pub fn evaluate_coeffs(f: &SpectralCoeffs, points: &[Point]) -> Result<Vec<f64>> {
    let basis = f.manifold.basis(f.lambda_max)?;
    for p in points {
        f.manifold.validate(p)?;
    }
    Ok(points.par_iter().map(|x| basis.eval(x).iter().zip(&f.coeffs).map(|(u, c)| u * c).sum()).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverRoute {
    /// Cholesky factorization of `nαI + K`.
    Cholesky,
    /// Pseudoinverse of the dense Gram matrix from its eigendecomposition.
    Pseudoinverse,
    /// Thin SVD of the `n × r` feature matrix of a finite-rank kernel.
    FeatureSvd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub route: SolverRoute,
    pub rank: usize,
    pub condition: f64,
    pub rcond: f64,
    /// `‖(nαI + K)a − Y‖ / ‖Y‖` (zero when `Y = 0`).
    pub relative_residual: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct FitOptions {
    pub rcond: f64,
    /// Use the dense Gram route even for finite-rank kernels.
    pub force_dense: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { rcond: RCOND, force_dense: false }
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    spec: KernelSpec,
    points: Vec<Point>,
    weights: Vec<f64>,
    alpha: f64,
    diagnostics: SolverDiagnostics,
}

impl FitResult {
    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Dual weights `a_1..a_n`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn diagnostics(&self) -> &SolverDiagnostics {
        &self.diagnostics
    }

    /// `f̂(x) = Σ a_i k(x, X_i)`.
    pub fn predict(&self, x: &Point) -> Result<f64> {
        self.spec.manifold().validate(x)?;
        Ok(self.predict_unchecked(x))
    }

    fn predict_unchecked(&self, x: &Point) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(xi, a)| if *a == 0.0 { 0.0 } else { a * self.spec.eval_unchecked(x, xi) })
            .sum()
    }

    pub fn predict_many(&self, xs: &[Point]) -> Result<Vec<f64>> {
        for x in xs {
            self.spec.manifold().validate(x)?;
        }
        Ok(xs.par_iter().map(|x| self.predict_unchecked(x)).collect())
    }
}

pub fn fit(spec: &KernelSpec, samples: &Samples, alpha: f64) -> Result<FitResult> {
    fit_with_options(spec, samples, alpha, FitOptions::default())
}

pub fn predict(fit: &FitResult, x: &Point) -> Result<f64> {
    fit.predict(x)
}

pub fn fit_with_options(spec: &KernelSpec, samples: &Samples, alpha: f64, opts: FitOptions) -> Result<FitResult> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::OutOfRange(format!("alpha = {alpha} must be a finite nonnegative number")));
    }
    if samples.is_empty() || samples.points.len() != samples.responses.len() {
        return Err(Error::InvalidSpec("samples need n >= 1 points with one response each".into()));
    }
    let manifold = spec.manifold();
    for p in &samples.points {
        manifold.validate(p)?;
    }
    if samples.responses.iter().any(|y| !y.is_finite()) {
        return Err(Error::Numerical { message: "non-finite response".into(), condition: f64::NAN });
    }
    let y = DVector::from_column_slice(&samples.responses);
    let (a, diagnostics) = if spec.family().is_finite_rank() && !opts.force_dense {
        solve_features(spec, &samples.points, &y, alpha, opts.rcond)?
    } else {
        solve_dense(spec, &samples.points, &y, alpha, opts.rcond)?
    };
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical { message: "non-finite dual weights".into(), condition: diagnostics.condition });
    }
    Ok(FitResult {
        spec: spec.clone(),
        points: samples.points.clone(),
        weights: a.as_slice().to_vec(),
        alpha,
        diagnostics,
    })
}

fn relative_residual(ka: &DVector<f64>, a: &DVector<f64>, y: &DVector<f64>, n_alpha: f64) -> f64 {
    let r = ka + a * n_alpha - y;
    let ny = y.norm();
    if ny == 0.0 {
        r.norm()
    } else {
        r.norm() / ny
    }
}

fn solve_dense(
    spec: &KernelSpec,
    points: &[Point],
    y: &DVector<f64>,
    alpha: f64,
    rcond: f64,
) -> Result<(DVector<f64>, SolverDiagnostics)> {
    let n = points.len();
    let k = spec.matrix(points)?;
    let n_alpha = n as f64 * alpha;
    if alpha > 0.0 {
        let m = &k + DMatrix::identity(n, n) * n_alpha;
        let chol = Cholesky::new(m).ok_or_else(|| Error::Numerical {
            message: "nαI + K is not numerically positive definite".into(),
            condition: f64::INFINITY,
        })?;
        let diag = chol.l_dirty().diagonal();
        let condition = (diag.max() / diag.min()).powi(2);
        let a = chol.solve(y);
        let residual = relative_residual(&(&k * &a), &a, y, n_alpha);
        Ok((
            a,
            SolverDiagnostics { route: SolverRoute::Cholesky, rank: n, condition, rcond, relative_residual: residual },
        ))
    } else {
        // K is symmetric positive semidefinite: its singular values are the
        // absolute eigenvalues and the singular vectors are eigenvectors.
        let eig = SymmetricEigen::new(k.clone());
        let s: Vec<f64> = eig.eigenvalues.iter().map(|v| v.abs()).collect();
        let smax = s.iter().cloned().fold(0.0, f64::max);
        let cut = rcond * smax;
        let kept: Vec<usize> = (0..n).filter(|&i| s[i] > cut && s[i] > 0.0).collect();
        let mut a = DVector::zeros(n);
        for &i in &kept {
            let q = eig.eigenvectors.column(i);
            a += q * (q.dot(y) / eig.eigenvalues[i]);
        }
        let smin = kept.iter().map(|&i| s[i]).fold(f64::INFINITY, f64::min);
        let condition = if kept.is_empty() { f64::INFINITY } else { smax / smin };
        let residual = relative_residual(&(&k * &a), &a, y, 0.0);
        Ok((
            a,
            SolverDiagnostics {
                route: SolverRoute::Pseudoinverse,
                rank: kept.len(),
                condition,
                rcond,
                relative_residual: residual,
            },
        ))
    }
}

/// `K = ΦΦᵀ` with `Φ_ij = u_j(X_i)`. With `Φ = U S Vᵀ`,
/// `(nαI + K)⁻¹Y = U diag(1/(nα + s²)) UᵀY + (Y − UUᵀY)/(nα)` and
/// `K⁺Y = U diag(1/s²) UᵀY`.
fn solve_features(
    spec: &KernelSpec,
    points: &[Point],
    y: &DVector<f64>,
    alpha: f64,
    rcond: f64,
) -> Result<(DVector<f64>, SolverDiagnostics)> {
    let n = points.len();
    let basis = spec.manifold().basis(spec.lambda_cap())?;
    let r = basis.len();
    let sqrt_g: Vec<f64> = basis.lambdas().iter().map(|l| spec.g(*l).sqrt()).collect();
    let rows: Vec<Vec<f64>> =
        points.par_iter().map(|x| basis.eval(x).iter().zip(&sqrt_g).map(|(u, s)| u * s).collect()).collect();
    let phi = DMatrix::from_fn(n, r, |i, j| rows[i][j]);
    let svd = phi.clone().svd(true, false);
    let u = svd.u.as_ref().expect("u requested");
    let s2: Vec<f64> = svd.singular_values.iter().map(|s| s * s).collect();
    let s2max = s2.iter().cloned().fold(0.0, f64::max);
    let n_alpha = n as f64 * alpha;
    let uty = u.transpose() * y;
    let mut a = DVector::zeros(n);
    let rank;
    let condition;
    if alpha > 0.0 {
        for (i, s2i) in s2.iter().enumerate() {
            a += u.column(i) * (uty[i] / (n_alpha + s2i));
        }
        let proj = u * &uty;
        a += (y - proj) / n_alpha;
        rank = n;
        let s2min = if r < n { 0.0 } else { s2.iter().cloned().fold(f64::INFINITY, f64::min) };
        condition = (n_alpha + s2max) / (n_alpha + s2min);
    } else {
        let cut = rcond * s2max;
        let mut smallest = f64::INFINITY;
        let mut count = 0;
        for (i, s2i) in s2.iter().enumerate() {
            if *s2i > cut && *s2i > 0.0 {
                a += u.column(i) * (uty[i] / s2i);
                smallest = smallest.min(*s2i);
                count += 1;
            }
        }
        rank = count;
        condition = if count == 0 { f64::INFINITY } else { s2max / smallest };
    }
    let ka = &phi * (phi.transpose() * &a);
    let residual = relative_residual(&ka, &a, y, n_alpha);
    Ok((a, SolverDiagnostics { route: SolverRoute::FeatureSvd, rank, condition, rcond, relative_residual: residual }))
}

/// Eigen-coefficients of a fitted function up to a level cap, with a bound
/// on the L2 norm of everything above it.
#[derive(Clone, Debug)]
pub struct SpectralExpansion {
    pub coeffs: SpectralCoeffs,
    pub tail_bound: f64,
}

/// `ĉ_j = g(λ_j) Σ_i a_i u_j(X_i)` for `λ_j <= lambda_max`.
///
/// The fitted function uses the truncated kernel, so it has no content
/// above the truncation cap. Between `lambda_max` and the cap, each level
/// contributes at most `‖a‖₁² g² mult / vol` to the squared L2 norm.
pub fn spectral_expand(fit: &FitResult, lambda_max: f64) -> Result<SpectralExpansion> {
    if !(lambda_max >= 0.0) {
        return Err(Error::OutOfRange(format!("lambda_max = {lambda_max} must be >= 0")));
    }
    let spec = &fit.spec;
    let manifold = spec.manifold();
    let basis = manifold.basis(lambda_max)?;
    let cap = spec.lambda_cap();
    let g_eff: Vec<f64> = basis.lambdas().iter().map(|l| if *l <= cap { spec.g(*l) } else { 0.0 }).collect();
    let len = basis.len();
    let partials: Vec<Vec<f64>> = fit
        .points
        .par_chunks(CHUNK)
        .zip(fit.weights.par_chunks(CHUNK))
        .map(|(pts, ws)| {
            let mut acc = vec![0.0; len];
            let mut vals = vec![0.0; len];
            for (x, a) in pts.iter().zip(ws) {
                if *a == 0.0 {
                    continue;
                }
                basis.eval_into(x, &mut vals);
                for (s, v) in acc.iter_mut().zip(&vals) {
                    *s += a * v;
                }
            }
            acc
        })
        .collect();
    let mut w = vec![0.0; len];
    for part in &partials {
        for (s, v) in w.iter_mut().zip(part) {
            *s += v;
        }
    }
    let coeffs: Vec<f64> = w.iter().zip(&g_eff).map(|(w, g)| w * g).collect();
    let a_l1: f64 = fit.weights.iter().map(|a| a.abs()).sum();
    let tail_sq: f64 = spec
        .levels()
        .iter()
        .zip(spec.weights())
        .filter(|(l, _)| l.lambda > lambda_max)
        .map(|(l, g)| g * g * l.multiplicity as f64)
        .sum::<f64>()
        / manifold.volume();
    Ok(SpectralExpansion {
        coeffs: SpectralCoeffs::new(manifold, lambda_max, coeffs)?,
        tail_bound: a_l1 * tail_sq.sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct L2Error {
    /// Unnormalized `‖f̂ − f*‖_{L2}` over levels `<= lambda_max`.
    pub error: f64,
    /// Bound on the contribution of everything above `lambda_max`.
    pub certified_slack: f64,
}

pub fn l2_error(fit: &FitResult, truth: &SpectralCoeffs, lambda_max: f64) -> Result<L2Error> {
    if truth.manifold != fit.spec.manifold() {
        return Err(Error::InvalidSpec("truth lives on a different manifold".into()));
    }
    let expansion = spectral_expand(fit, lambda_max)?;
    let n_keep = expansion.coeffs.coeffs.len();
    let dropped: f64 = truth.coeffs.iter().skip(n_keep).map(|c| c * c).sum::<f64>().sqrt();
    let error = expansion
        .coeffs
        .coeffs
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let d = c - truth.coeffs.get(j).copied().unwrap_or(0.0);
            d * d
        })
        .sum::<f64>()
        .sqrt();
    Ok(L2Error { error, certified_slack: expansion.tail_bound + dropped })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonteCarloEstimate {
    /// Estimate of `‖f̂ − f*‖²_{L2}` (unnormalized measure).
    pub mean_sq: f64,
    pub std_error: f64,
}

/// Independent Monte Carlo estimate of the squared L2 error from uniform
/// test points.
pub fn monte_carlo_l2_sq(
    fit: &FitResult,
    truth: &SpectralCoeffs,
    n_test: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    if n_test < 2 {
        return Err(Error::OutOfRange("Monte Carlo needs at least two test points".into()));
    }
    let manifold = fit.spec.manifold();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = manifold.sample_uniform_with(&mut rng, n_test);
    let pred = fit.predict_many(&xs)?;
    let truth_vals = evaluate_coeffs(truth, &xs)?;
    let sq: Vec<f64> = pred.iter().zip(&truth_vals).map(|(p, t)| (p - t) * (p - t)).collect();
    let nf = n_test as f64;
    let mean = sq.iter().sum::<f64>() / nf;
    let var = sq.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
    let vol = manifold.volume();
    Ok(MonteCarloEstimate { mean_sq: vol * mean, std_error: vol * (var / nf).sqrt() })
}

/// Constants entering the general error bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremInputs {
    pub p: usize,
    pub t_next: f64,
    pub k_p: f64,
    pub r_p: f64,
    pub trace_tail: f64,
    pub gamma: f64,
    pub gamma_prime: f64,
    pub sigma: f64,
    pub delta: f64,
    pub alpha: f64,
    pub n: usize,
    pub f_norm: Option<f64>,
    pub volume: f64,
    /// Sub-exponential norm of the noise, if known.
    pub psi1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Advisory {
    pub name: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremBound {
    pub bias: f64,
    pub noise: f64,
    pub total: f64,
    pub conditions: Vec<Condition>,
    /// Quantities compared against unspecified universal constants; never
    /// enforced.
    pub advisory: Vec<Advisory>,
}

impl TheoremBound {
    pub fn gates_met(&self) -> bool {
        self.conditions.iter().all(|c| c.met)
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("delta = {delta} must lie in (0, 1)")))
    }
}

fn noise_width(p: f64, delta: f64, n: usize) -> f64 {
    (p.sqrt() + 2.0 * (4.0 / delta).ln().sqrt()) / (n as f64).sqrt()
}

/// `n / log² n` divided by `scale · ‖ξ‖²_ψ1 / σ²`: the largest universal
/// constant for which the noise-sample gate would hold.
fn psi1_ratio(n: usize, scale: f64, psi1: Option<f64>, sigma: f64) -> Option<f64> {
    let psi1 = psi1?;
    if sigma <= 0.0 || n < 2 {
        return None;
    }
    let ln = (n as f64).ln();
    Some((n as f64 / (ln * ln)) / (scale * psi1 * psi1 / (sigma * sigma)))
}

/// General RKHS bound under the normalized sampling measure.
pub fn bound_rkhs(inputs: &TheoremInputs, noisy: bool) -> Result<TheoremBound> {
    check_delta(inputs.delta)?;
    let bias_coeff = (2.0 * inputs.alpha).sqrt() + 6.0 * inputs.t_next.sqrt();
    let bias = match inputs.f_norm {
        Some(norm) => bias_coeff * norm,
        None if bias_coeff == 0.0 => 0.0,
        None => return Err(Error::InvalidSpec("the bias term needs the RKHS norm of the target".into())),
    };
    let noise = if noisy {
        4.0 * (1.0 + inputs.gamma.sqrt() / 8.0) * noise_width(inputs.p as f64, inputs.delta, inputs.n) * inputs.sigma
    } else {
        0.0
    };
    let p = inputs.p as f64;
    let gate = 7f64.max(3.0 * inputs.gamma_prime) * inputs.k_p * (2f64.max(4.0 * inputs.gamma) * p / inputs.delta).ln();
    let mut conditions = vec![Condition::new("n >= (7 v 3γ') K_p log((2 v 4γ)p/δ)", inputs.n as f64 >= gate)];
    let mut advisory = Vec::new();
    if noisy {
        conditions.push(Condition::new("α >= 54 t_{p+1}", inputs.alpha >= 54.0 * inputs.t_next));
        let scale = 1f64.max(inputs.gamma_prime) * inputs.k_p / p;
        if let Some(v) = psi1_ratio(inputs.n, scale, inputs.psi1, inputs.sigma) {
            advisory
                .push(Advisory { name: "C <= (n/log²n) / ((1 v γ')(K_p/p)‖ξ‖²_ψ1/σ²)".into(), value: v });
        }
    }
    Ok(TheoremBound { bias, noise, total: bias + noise, conditions, advisory })
}

/// `p(Ω) = 3√m V_m vol Ω^m / (2π)^m`.
pub fn bl_dimension(manifold: &SpectralManifold, omega: f64) -> f64 {
    let m = manifold.dim();
    3.0 * (m as f64).sqrt() * unit_ball_volume(m) * manifold.volume() * omega.powi(m as i32)
        / std::f64::consts::TAU.powi(m as i32)
}

/// Bandlimited bound on `‖f̂ − f*‖/√vol` for in-band targets fitted by
/// pseudoinverse.
pub fn bound_bandlimited(
    manifold: &SpectralManifold,
    omega: f64,
    n: usize,
    sigma: f64,
    delta: f64,
    psi1: Option<f64>,
) -> Result<TheoremBound> {
    check_delta(delta)?;
    if !(omega > 0.0) {
        return Err(Error::OutOfRange(format!("omega = {omega} must be positive")));
    }
    let m = manifold.dim() as f64;
    let p = bl_dimension(manifold, omega);
    let noise = 4.0 * noise_width(p, delta, n) * sigma;
    let curvature = m * (m - 1.0).powi(2) * manifold.curvature_kappa() / 3.0;
    let conditions = vec![
        Condition::new("Ω² >= m(m-1)²κ/3", omega * omega >= curvature),
        Condition::new("n >= 7p log(2p/δ)", n as f64 >= 7.0 * p * (2.0 * p / delta).ln()),
    ];
    let advisory = psi1_ratio(n, 1.0, psi1, sigma)
        .map(|v| vec![Advisory { name: "C <= (n/log²n) σ²/‖ξ‖²_ψ1".into(), value: v }])
        .unwrap_or_default();
    Ok(TheoremBound { bias: 0.0, noise, total: noise, conditions, advisory })
}

/// Heat-kernel bound on `‖f̂ − f*‖/√vol`.
#[allow(clippy::too_many_arguments)]
pub fn bound_heat(
    manifold: &SpectralManifold,
    t: f64,
    omega: f64,
    alpha: f64,
    f_norm: f64,
    n: usize,
    sigma: f64,
    delta: f64,
    psi1: Option<f64>,
) -> Result<TheoremBound> {
    check_delta(delta)?;
    if !(t > 0.0 && omega > 0.0) {
        return Err(Error::OutOfRange(format!("need t > 0 and omega > 0, got t = {t}, omega = {omega}")));
    }
    let m = manifold.dim() as f64;
    let p = bl_dimension(manifold, omega);
    let vol = manifold.volume();
    let tail = (-omega * omega * t / 2.0).exp() / vol;
    let bias = ((2.0 * alpha).sqrt() + 6.0 * tail.sqrt()) * f_norm;
    let noise = 4.5 * noise_width(p, delta, n) * sigma;
    let curvature = (m - 1.0).powi(2) * manifold.curvature_kappa();
    let conditions = vec![
        Condition::new("t <= 3/((m-1)²κ)", curvature == 0.0 || t <= 3.0 / curvature),
        Condition::new("Ω² >= m/t", omega * omega >= m / t),
        Condition::new("α >= 54 e^{-Ω²t/2}/vol", alpha >= 54.0 * tail),
        Condition::new("n >= 7p log(4p/δ)", n as f64 >= 7.0 * p * (4.0 * p / delta).ln()),
    ];
    let advisory = psi1_ratio(n, 1.0, psi1, sigma)
        .map(|v| vec![Advisory { name: "C <= (n/log²n) σ²/‖ξ‖²_ψ1".into(), value: v }])
        .unwrap_or_default();
    Ok(TheoremBound { bias, noise, total: bias + noise, conditions, advisory })
}

/// The smallest regularization allowed by the heat-kernel bound.
pub fn heat_alpha_floor(manifold: &SpectralManifold, t: f64, omega: f64) -> f64 {
    54.0 * ((-omega * omega * t / 2.0).exp() / manifold.volume())
}

/// Levels `0..=L` whose multiplicities sum to exactly `p`.
pub fn levels_for_count(manifold: &SpectralManifold, p: usize) -> Result<Vec<EigLevel>> {
    if p == 0 {
        return Err(Error::OutOfRange("p must be positive".into()));
    }
    let mut cap = 16.0;
    loop {
        let levels = manifold.list_levels(cap)?;
        let total: usize = levels.iter().map(|l| l.multiplicity).sum();
        if total > p {
            let mut cum = 0;
            for (i, l) in levels.iter().enumerate() {
                let below = cum;
                cum += l.multiplicity;
                if cum == p {
                    return Ok(levels[..=i].to_vec());
                }
                if cum > p {
                    return Err(Error::SplitLevel { p, below, above: cum });
                }
            }
        }
        cap *= 4.0;
    }
}

/// `K_p`, `R_p`, `tr T_{G⊥}`, `t_{p+1}` and the minimal `γ`, `γ′` for a
/// level-aligned `p`, under the normalized measure. Sample-dependent fields
/// (`σ`, `δ`, `α`, `n`, `‖f*‖`) are left at neutral placeholders.
pub fn assumption_constants(manifold: &SpectralManifold, spec: &KernelSpec, p: usize) -> Result<TheoremInputs> {
    if spec.manifold() != *manifold {
        return Err(Error::InvalidSpec("kernel lives on a different manifold".into()));
    }
    let head = levels_for_count(manifold, p)?;
    let last = *head.last().expect("p >= 1 keeps at least the constant level");
    let vol = manifold.volume();
    // N_x at one point; the built-ins are homogeneous, checked in tests
    let x = manifold.sample_uniform(1, 0)[0];
    let k_p = vol * manifold.zonal_sums(&head, &x, &x).iter().sum::<f64>();
    let next = manifold.list_levels(last.lambda * 2.0 + 16.0)?[last.index + 1];
    let family = spec.family();
    let g_next = family.weight(next.lambda);
    let t_next = g_next / vol;
    let trace_tail = if g_next == 0.0 { 0.0 } else { tail_trace(manifold, &family, next.lambda)? };
    let r_p = trace_tail;
    let (gamma, gamma_prime) =
        if t_next == 0.0 { (0.0, 0.0) } else { (trace_tail / (t_next * p as f64), r_p / (t_next * k_p)) };
    Ok(TheoremInputs {
        p,
        t_next,
        k_p,
        r_p,
        trace_tail,
        gamma,
        gamma_prime,
        sigma: 0.0,
        delta: 0.05,
        alpha: 0.0,
        n: 0,
        f_norm: None,
        volume: vol,
        psi1: None,
    })
}

/// `Σ_{λ_ℓ >= from} g(λ_ℓ) mult_ℓ / vol`, the tail trace under the
/// normalized measure, summed until the remainder is below `1e-14` relative.
pub fn tail_trace(manifold: &SpectralManifold, family: &KernelFamily, from: f64) -> Result<f64> {
    let tr = truncate(manifold, family, from, 1e-14, 0.0)?;
    let s: f64 = tr.levels.iter().map(|l| family.weight(l.lambda) * l.multiplicity as f64).sum();
    Ok(s / manifold.volume())
}
