//! Geometry-side inequalities: counting functions against the pointwise
//! Weyl bound, heat kernel diagonal and tail bounds, curvature comparison
//! bounds, and Monte Carlo checks of the Gram and tail-operator concentration inequalities.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{truncate, KernelFamily, KernelSpec};
use crate::manifold::{Point, SpectralManifold};
use crate::regression::{levels_for_count, tail_trace};
use crate::seed::mix_seed;
use crate::special::unit_ball_volume;
use crate::stats::quantiles;

pub const DEFAULT_EPSILON: f64 = 0.5;

/// Flag attached to two-dimensional heat diagonal rows, whose bound is
/// only derived for `m >= 3`.
pub const M2_CAVEAT: &str = "m<3 derivation caveat";

/// Quantiles reported by the empirical checks.
pub const REPORT_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub met: bool,
}

impl Condition {
    pub fn new(name: impl Into<String>, met: bool) -> Self {
        Condition { name: name.into(), met }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub measured: f64,
    pub bound: f64,
    pub margin: f64,
    pub conditions_met: Vec<Condition>,
    pub epsilon: Option<f64>,
    pub caveat: Option<String>,
    /// Certified numerical uncertainty of `measured` (kernel truncation).
    #[serde(default)]
    pub tolerance: f64,
}

impl BoundReport {
    pub fn new(measured: f64, bound: f64, conditions_met: Vec<Condition>, epsilon: Option<f64>) -> Self {
        BoundReport { measured, bound, margin: bound - measured, conditions_met, epsilon, caveat: None, tolerance: 0.0 }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_caveat(mut self, caveat: impl Into<String>) -> Self {
        self.caveat = Some(caveat.into());
        self
    }

    pub fn applicable(&self) -> bool {
        self.conditions_met.iter().all(|c| c.met)
    }

    pub fn verified(&self) -> bool {
        self.applicable() && self.margin >= -self.tolerance
    }

    /// Applicable, not caveated, and violated.
    pub fn asserted_failure(&self) -> bool {
        self.applicable() && self.caveat.is_none() && !(self.margin >= -self.tolerance)
    }
}

/// A bound value with its validity conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalBound {
    pub bound: f64,
    pub conditions: Vec<Condition>,
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 2.0 / 3.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("epsilon = {epsilon} must lie in (0, 2/3)")))
    }
}

/// `(m-1)² κ`, zero when the curvature gates are vacuous.
fn curvature_scale(m: u32, kappa: f64) -> f64 {
    let d = m as f64 - 1.0;
    d * d * kappa
}

/// `N_x(λ) = Σ_{λ_ℓ <= λ} u_ℓ²(x)`.
pub fn counting_function(manifold: &SpectralManifold, x: &Point, lambda: f64) -> Result<f64> {
    manifold.validate(x)?;
    let levels = manifold.list_levels(lambda)?;
    Ok(manifold.zonal_sums(&levels, x, x).iter().sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeylBound {
    pub bound: f64,
    pub lambda_threshold: f64,
}

/// `2(1+ε)√m V_m λ^{m/2} / (2π)^m`, valid for `λ >= m(m-1)²κ/(6ε)`.
pub fn weyl_bound(m: u32, lambda: f64, epsilon: f64, kappa: f64) -> Result<WeylBound> {
    check_epsilon(epsilon)?;
    if !(lambda >= 0.0) {
        return Err(Error::OutOfRange(format!("lambda = {lambda} must be >= 0")));
    }
    let mf = m as f64;
    let bound = 2.0 * (1.0 + epsilon) * mf.sqrt() * unit_ball_volume(m) * lambda.powf(mf / 2.0) / TAU.powi(m as i32);
    Ok(WeylBound { bound, lambda_threshold: mf * curvature_scale(m, kappa) / (6.0 * epsilon) })
}

pub fn weyl_report(manifold: &SpectralManifold, x: &Point, lambda: f64, epsilon: f64) -> Result<BoundReport> {
    let w = weyl_bound(manifold.dim(), lambda, epsilon, manifold.curvature_kappa())?;
    let measured = counting_function(manifold, x, lambda)?;
    let cond = Condition::new("λ >= m(m-1)²κ/(6ε)", lambda >= w.lambda_threshold);
    Ok(BoundReport::new(measured, w.bound, vec![cond], Some(epsilon)))
}

/// `k_t(x, x)` for the heat kernel, truncated with the default certificate.
pub fn heat_diag(manifold: &SpectralManifold, t: f64, x: &Point) -> Result<f64> {
    let spec = KernelSpec::new(*manifold, KernelFamily::Heat { t })?;
    spec.eval(x, x)
}

/// `(1+ε)/(2πt)^{m/2}`, valid for `t <= 6ε/((m-1)²κ)`.
pub fn heat_diag_bound(m: u32, t: f64, epsilon: f64, kappa: f64) -> Result<ConditionalBound> {
    check_epsilon(epsilon)?;
    if !(t > 0.0) {
        return Err(Error::OutOfRange(format!("t = {t} must be positive")));
    }
    let c = curvature_scale(m, kappa);
    let met = c == 0.0 || t <= 6.0 * epsilon / c;
    Ok(ConditionalBound {
        bound: (1.0 + epsilon) / (TAU * t).powf(m as f64 / 2.0),
        conditions: vec![Condition::new("t <= 6ε/((m-1)²κ)", met)],
    })
}

pub fn heat_diag_report(manifold: &SpectralManifold, t: f64, x: &Point, epsilon: f64) -> Result<BoundReport> {
    let b = heat_diag_bound(manifold.dim(), t, epsilon, manifold.curvature_kappa())?;
    let measured = heat_diag(manifold, t, x)?;
    let report = BoundReport::new(measured, b.bound, b.conditions, Some(epsilon));
    Ok(if manifold.dim() == 2 { report.with_caveat(M2_CAVEAT) } else { report })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonQuery {
    pub m: u32,
    pub k1: f64,
    pub k2: f64,
    pub r: f64,
    pub t: f64,
}

impl ComparisonQuery {
    fn check(&self) -> Result<()> {
        if self.m < 3 {
            return Err(Error::OutOfRange(format!("comparison bounds need m >= 3, got m = {}", self.m)));
        }
        if !(self.t > 0.0 && self.r >= 0.0 && self.k1 >= 0.0) {
            return Err(Error::OutOfRange("comparison bounds need t > 0, r >= 0, K1 >= 0".into()));
        }
        Ok(())
    }

    fn gaussian(&self) -> f64 {
        (-self.r * self.r / (2.0 * self.t)).exp() / (TAU * self.t).powf(self.m as f64 / 2.0)
    }
}

/// `x / sinh x` with its limit at zero.
fn x_over_sinh(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x / x.sinh()
    }
}

fn x_over_sin(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 + x * x / 6.0
    } else {
        x / x.sin()
    }
}

/// `e^{-(m-1)²K1 t/8} (√K1 r / sinh(√K1 r))^{(m-1)/2} e^{-r²/2t} / (2πt)^{m/2}`.
pub fn heat_lower_bound(q: &ComparisonQuery) -> Result<f64> {
    q.check()?;
    let d = q.m as f64 - 1.0;
    let factor = x_over_sinh(q.k1.sqrt() * q.r).powf(d / 2.0);
    Ok((-d * d * q.k1 * q.t / 8.0).exp() * factor * q.gaussian())
}

/// `e^{(m-1)²K2 t/8} (√K2 r / sin(√K2 r))^{(m-1)/2} e^{-r²/2t} / (2πt)^{m/2}`
/// for `r < π/√K2`.
pub fn heat_upper_offdiag(q: &ComparisonQuery) -> Result<f64> {
    q.check()?;
    if !(q.k2 > 0.0) {
        return Err(Error::OutOfRange(format!("K2 = {} must be positive", q.k2)));
    }
    if q.r >= PI / q.k2.sqrt() {
        return Err(Error::OutOfRange(format!("r = {} must be below π/√K2 = {}", q.r, PI / q.k2.sqrt())));
    }
    let d = q.m as f64 - 1.0;
    let factor = x_over_sin(q.k2.sqrt() * q.r).powf(d / 2.0);
    Ok((d * d * q.k2 * q.t / 8.0).exp() * factor * q.gaussian())
}

/// Two points of `S³` at geodesic distance `r`.
pub fn sphere3_pair(r: f64) -> (Point, Point) {
    (Point::from_raw(&[1.0, 0.0, 0.0, 0.0]), Point::from_raw(&[r.cos(), r.sin(), 0.0, 0.0]))
}

/// Series value of `k_t` on `S³` against the upper comparison bound at
/// distance `r`, with `K2` the sectional curvature.
pub fn comparison_report(t: f64, r: f64) -> Result<BoundReport> {
    let s3 = SpectralManifold::sphere3();
    let spec = KernelSpec::new(s3, KernelFamily::Heat { t })?;
    let (x, y) = sphere3_pair(r);
    let measured = spec.eval(&x, &y)?;
    let q = ComparisonQuery { m: 3, k1: s3.ricci_lower_k1(), k2: s3.curvature_kappa(), r, t };
    let bound = heat_upper_offdiag(&q)?;
    // the model space is S³ itself, so this is an equality up to truncation
    let tol = spec.tau() * spec.diagonal();
    Ok(BoundReport::new(measured, bound, vec![Condition::new("r < π/√K2", true)], None).with_tolerance(tol))
}

/// `Σ_{λ_ℓ >= λ} e^{-λ_ℓ t/2} u_ℓ²(x)`, summed to a relative certificate.
pub fn heat_tail(manifold: &SpectralManifold, t: f64, lambda: f64, x: &Point) -> Result<f64> {
    manifold.validate(x)?;
    let family = KernelFamily::Heat { t };
    let tr = truncate(manifold, &family, lambda.max(0.0), 1e-13, 1e-300)?;
    let z = manifold.zonal_sums(&tr.levels, x, x);
    Ok(tr.levels.iter().zip(z).map(|(l, v)| family.weight(l.lambda) * v).sum())
}

/// `e^{-λt/2} 2(1+ε)√m V_m λ^{m/2} / (2π)^m`, valid for
/// `t <= 6ε/((m-1)²κ)` and `λ >= m/t`.
pub fn heat_tail_bound(m: u32, t: f64, lambda: f64, epsilon: f64, kappa: f64) -> Result<ConditionalBound> {
    let w = weyl_bound(m, lambda, epsilon, kappa)?;
    if !(t > 0.0) {
        return Err(Error::OutOfRange(format!("t = {t} must be positive")));
    }
    let c = curvature_scale(m, kappa);
    Ok(ConditionalBound {
        bound: (-lambda * t / 2.0).exp() * w.bound,
        conditions: vec![
            Condition::new("t <= 6ε/((m-1)²κ)", c == 0.0 || t <= 6.0 * epsilon / c),
            Condition::new("λ >= m/t", lambda >= m as f64 / t),
        ],
    })
}

pub fn heat_tail_report(
    manifold: &SpectralManifold,
    t: f64,
    lambda: f64,
    x: &Point,
    epsilon: f64,
) -> Result<BoundReport> {
    let b = heat_tail_bound(manifold.dim(), t, lambda, epsilon, manifold.curvature_kappa())?;
    let measured = heat_tail(manifold, t, lambda, x)?;
    Ok(BoundReport::new(measured, b.bound, b.conditions, Some(epsilon)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramCheck {
    pub pass_rate: f64,
    pub min_eigs: Vec<f64>,
    pub min_eig_quantiles: Vec<f64>,
    /// `7 K_p log(p/δ)`.
    pub gate_n: f64,
}

fn check_trials(n: usize, trials: usize) -> Result<()> {
    if n == 0 || trials == 0 {
        return Err(Error::OutOfRange("need n >= 1 and trials >= 1".into()));
    }
    Ok(())
}

/// Minimum eigenvalue of `(1/n) Σ ṽ(X_i) ṽ(X_i)ᵀ` for the first `p`
/// normalized eigenfunctions, over independent trials; a trial passes when
/// it is at least `1/2`.
pub fn empirical_gram_check(
    manifold: &SpectralManifold,
    p: usize,
    n: usize,
    trials: usize,
    delta: f64,
    seed: u64,
) -> Result<GramCheck> {
    check_trials(n, trials)?;
    let head = levels_for_count(manifold, p)?;
    let basis = manifold.basis(head.last().expect("nonempty").lambda)?;
    let k_p = p as f64;
    let min_eigs: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, trial as u64));
            let pts = manifold.sample_uniform_with(&mut rng, n);
            let mut g = DMatrix::<f64>::zeros(p, p);
            for x in &pts {
                let v = nalgebra::DVector::from_vec(basis.eval_normalized(x));
                g.syger(1.0 / n as f64, &v, &v, 1.0);
            }
            g.fill_upper_triangle_with_lower_triangle();
            SymmetricEigen::new(g).eigenvalues.min()
        })
        .collect();
    let pass = min_eigs.iter().filter(|e| **e >= 0.5).count();
    Ok(GramCheck {
        pass_rate: pass as f64 / trials as f64,
        min_eig_quantiles: quantiles(&min_eigs, &REPORT_QUANTILES),
        min_eigs,
        gate_n: 7.0 * k_p * (p as f64 / delta).ln(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailCheck {
    pub pass_rate: f64,
    pub norms: Vec<f64>,
    pub norm_quantiles: Vec<f64>,
    /// `2 t_{p+1}`.
    pub bound: f64,
    /// Population operator norm `t_{p+1}`.
    pub population: f64,
    /// `tr T_{G⊥}` (equal to `R_p` on the homogeneous built-ins).
    pub trace: f64,
    /// `(3 R_p / t_{p+1}) log(2 tr / (t_{p+1} δ))`.
    pub gate_n: f64,
    /// Certified tail trace left out of the truncated tail basis.
    pub neglected_trace: f64,
    pub tail_dim: usize,
}

/// Largest eigenvalue of the empirical tail operator `M = AᵀA/n`,
/// `A_ij = √t_j ṽ_j(X_i)`, over a truncated basis of levels above the
/// first `p` functions; a trial passes when it is at most `2 t_{p+1}`.
pub fn empirical_tail_check(
    manifold: &SpectralManifold,
    spec: &KernelSpec,
    p: usize,
    n: usize,
    trials: usize,
    delta: f64,
    seed: u64,
) -> Result<TailCheck> {
    check_trials(n, trials)?;
    let family = spec.family();
    if !matches!(family, KernelFamily::Heat { .. }) {
        return Err(Error::InvalidSpec("the tail check needs a heat kernel".into()));
    }
    let head = levels_for_count(manifold, p)?;
    let last = *head.last().expect("nonempty");
    let next = manifold.list_levels(last.lambda * 2.0 + 16.0)?[last.index + 1];
    let vol = manifold.volume();
    let g_next = family.weight(next.lambda);
    let t_next = g_next / vol;
    let tail = truncate(manifold, &family, next.lambda, 0.0, 1e-10 * g_next)?;
    let lambda_top = tail.levels.last().map(|l| l.lambda).unwrap_or(last.lambda);
    let basis = manifold.basis(lambda_top)?;
    let dim = basis.len() - p;
    let sqrt_t: Vec<f64> = basis.lambdas()[p..].iter().map(|l| (family.weight(*l) / vol).sqrt()).collect();
    let trace = tail_trace(manifold, &family, next.lambda)?;
    let norms: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            if dim == 0 {
                return 0.0;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, trial as u64));
            let pts = manifold.sample_uniform_with(&mut rng, n);
            let mut m = DMatrix::<f64>::zeros(dim, dim);
            for x in &pts {
                let v = basis.eval_normalized(x);
                let row = nalgebra::DVector::from_iterator(dim, v[p..].iter().zip(&sqrt_t).map(|(a, s)| a * s));
                m.syger(1.0 / n as f64, &row, &row, 1.0);
            }
            m.fill_upper_triangle_with_lower_triangle();
            SymmetricEigen::new(m).eigenvalues.max()
        })
        .collect();
    let bound = 2.0 * t_next;
    let pass = norms.iter().filter(|v| **v <= bound).count();
    Ok(TailCheck {
        pass_rate: pass as f64 / trials as f64,
        norm_quantiles: quantiles(&norms, &REPORT_QUANTILES),
        norms,
        bound,
        population: t_next,
        trace,
        gate_n: (3.0 * trace / t_next) * (2.0 * trace / (t_next * delta)).ln(),
        neglected_trace: tail.tail_mass_bound / vol,
        tail_dim: dim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn counting_function_examples() {
        let c = SpectralManifold::circle();
        let x = c.point(&[0.3]).unwrap();
        assert_relative_eq!(counting_function(&c, &x, 100.0).unwrap(), 1.0 / TAU + 10.0 / PI, max_relative = 1e-14);
        assert_relative_eq!(counting_function(&c, &x, 100.0).unwrap(), 3.342254, max_relative = 1e-6);
        let s2 = SpectralManifold::sphere2();
        let y = s2.sample_uniform(1, 2)[0];
        assert_relative_eq!(counting_function(&s2, &y, 6.0).unwrap(), 9.0 / (4.0 * PI), max_relative = 1e-13);
        for m in [c, s2, SpectralManifold::sphere3(), SpectralManifold::torus(3).unwrap()] {
            let x = m.sample_uniform(1, 5)[0];
            assert_relative_eq!(counting_function(&m, &x, 0.0).unwrap(), 1.0 / m.volume(), max_relative = 1e-14);
        }
    }

    #[test]
    fn weyl_examples() {
        let w = weyl_bound(1, 100.0, 0.5, 0.0).unwrap();
        assert_relative_eq!(w.bound, 30.0 / PI, max_relative = 1e-14);
        assert_relative_eq!(w.bound, 9.549297, max_relative = 1e-6);
        assert_eq!(w.lambda_threshold, 0.0);
        for m in 1..=4 {
            let a = weyl_bound(m, 3.0, 0.5, 1.0).unwrap().bound;
            let b = weyl_bound(m, 12.0, 0.5, 1.0).unwrap().bound;
            assert_relative_eq!(b / a, 2f64.powi(m as i32), max_relative = 1e-13);
        }
        assert_eq!(weyl_bound(3, 4.0, 0.5, 1.0).unwrap().lambda_threshold, 4.0);
        assert!(weyl_bound(3, 4.0, 0.7, 1.0).is_err());
        assert!(weyl_bound(3, 4.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn heat_diag_examples() {
        let s3 = SpectralManifold::sphere3();
        let x = s3.sample_uniform(1, 1)[0];
        let r = heat_diag_report(&s3, 0.75, &x, 0.5).unwrap();
        assert_relative_eq!(r.measured, 0.142232, max_relative = 1e-5);
        assert_relative_eq!(r.bound, 0.146632, max_relative = 1e-5);
        assert!(r.verified());
        assert_relative_eq!(r.margin, 0.0044, epsilon = 1e-4);

        let over = heat_diag_report(&s3, 0.9, &x, 0.5).unwrap();
        assert!(!over.applicable() && !over.asserted_failure());

        let b = heat_diag_bound(1, 2.0, 0.5, 0.0).unwrap();
        assert!(b.conditions[0].met);
        assert_relative_eq!(b.bound, 1.5 / (TAU * 2.0).sqrt(), max_relative = 1e-15);

        let c = SpectralManifold::circle();
        let x = c.point(&[0.0]).unwrap();
        assert_relative_eq!(
            heat_diag(&c, 0.5, &x).unwrap(),
            crate::kernel::wrapped_gaussian(0.5, 0.0),
            max_relative = 1e-12
        );
        let s2 = SpectralManifold::sphere2();
        let y = s2.sample_uniform(1, 3)[0];
        assert_relative_eq!(heat_diag(&s2, 100.0, &y).unwrap(), 1.0 / (4.0 * PI), max_relative = 1e-12);
        assert_eq!(heat_diag_report(&s2, 0.5, &y, 0.5).unwrap().caveat.as_deref(), Some(M2_CAVEAT));
    }

    #[test]
    fn comparison_examples() {
        let q = ComparisonQuery { m: 3, k1: 0.0, k2: 1.0, r: 0.0, t: 0.75 };
        assert_relative_eq!(heat_lower_bound(&q).unwrap(), 0.0977548, max_relative = 1e-6);
        let s3 = SpectralManifold::sphere3();
        let x = s3.sample_uniform(1, 1)[0];
        assert!(heat_diag(&s3, 0.75, &x).unwrap() >= heat_lower_bound(&q).unwrap());

        let q = ComparisonQuery { r: 1.3, ..q };
        let euclid = (-1.3f64 * 1.3 / 1.5).exp() / (TAU * 0.75).powf(1.5);
        assert_relative_eq!(heat_lower_bound(&q).unwrap(), euclid, max_relative = 1e-14);
        assert!(heat_lower_bound(&ComparisonQuery { r: 60.0, ..q }).unwrap() < 1e-300);

        let q = ComparisonQuery { m: 2, ..q };
        assert!(heat_lower_bound(&q).is_err());

        let q = ComparisonQuery { m: 3, k1: 0.0, k2: 1.0, r: PI, t: 0.5 };
        assert!(heat_upper_offdiag(&q).is_err());
        let q = ComparisonQuery { r: 1e-12, ..q };
        assert_relative_eq!(
            heat_upper_offdiag(&q).unwrap(),
            (0.5f64 * 0.5).exp() / (TAU * 0.5).powf(1.5),
            max_relative = 1e-12
        );
        let q = ComparisonQuery { k2: 1e-12, r: 0.8, ..q };
        let euclid = (-0.64f64).exp() / (TAU * 0.5).powf(1.5);
        assert_relative_eq!(heat_upper_offdiag(&q).unwrap(), euclid, max_relative = 1e-9);

        for k in 1..100 {
            let r = PI * k as f64 / 100.0;
            let rep = comparison_report(0.5, r).unwrap();
            assert!(rep.verified(), "r = {r}: {} > {}", rep.measured, rep.bound);
        }
    }

    #[test]
    fn heat_tail_examples() {
        let c = SpectralManifold::circle();
        let x = c.point(&[1.0]).unwrap();
        let r = heat_tail_report(&c, 1.0, 1.0, &x, 0.5).unwrap();
        let direct: f64 = (1..40).map(|l| (-(l * l) as f64 / 2.0).exp()).sum::<f64>() / PI;
        assert_relative_eq!(r.measured, direct, max_relative = 1e-13);
        assert_relative_eq!(r.measured, 0.239787, max_relative = 1e-5);
        assert_relative_eq!(r.bound, 0.579194, max_relative = 1e-5);
        assert!(r.verified());

        let below = heat_tail_report(&c, 1.0, 0.5, &x, 0.5).unwrap();
        assert!(!below.conditions_met[1].met);
        assert!(heat_tail(&c, 400.0, 1.0, &x).unwrap() < 1e-80);
    }

    #[test]
    fn weyl_proof_chain_at_t_m_over_lambda() {
        for m in [SpectralManifold::circle(), SpectralManifold::torus(2).unwrap(), SpectralManifold::sphere3()] {
            let x = m.sample_uniform(1, 4)[0];
            for lambda in [4.0, 16.0, 64.0, 256.0] {
                let t = m.dim() as f64 / lambda;
                let lhs = (-lambda * t / 2.0).exp() * counting_function(&m, &x, lambda).unwrap();
                assert!(lhs <= heat_diag(&m, t, &x).unwrap());
            }
        }
    }

    #[test]
    fn homogeneity_of_measured_quantities() {
        for m in [
            SpectralManifold::circle(),
            SpectralManifold::torus(2).unwrap(),
            SpectralManifold::sphere2(),
            SpectralManifold::sphere3(),
        ] {
            let pts = m.sample_uniform(5, 8);
            let n0 = counting_function(&m, &pts[0], 40.0).unwrap();
            let h0 = heat_diag(&m, 0.3, &pts[0]).unwrap();
            let t0 = heat_tail(&m, 0.3, 10.0, &pts[0]).unwrap();
            for x in &pts[1..] {
                assert!((counting_function(&m, x, 40.0).unwrap() - n0).abs() < 1e-9);
                assert!((heat_diag(&m, 0.3, x).unwrap() - h0).abs() < 1e-9);
                assert!((heat_tail(&m, 0.3, 10.0, x).unwrap() - t0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gram_check_examples() {
        let c = SpectralManifold::circle();
        let one = empirical_gram_check(&c, 1, 1, 5, 0.05, 3).unwrap();
        assert!(one.min_eigs.iter().all(|e| *e == 1.0));
        let big = empirical_gram_check(&SpectralManifold::sphere2(), 1, 500, 3, 0.05, 3).unwrap();
        assert!(big.min_eigs.iter().all(|e| (*e - 1.0).abs() < 1e-12));
        assert!(matches!(empirical_gram_check(&c, 4, 10, 1, 0.05, 1), Err(Error::SplitLevel { .. })));
        let again = empirical_gram_check(&c, 5, 40, 10, 0.05, 9).unwrap();
        assert_eq!(again, empirical_gram_check(&c, 5, 40, 10, 0.05, 9).unwrap());
    }

    #[test]
    fn tail_check_population_limit() {
        let c = SpectralManifold::circle();
        let spec = KernelSpec::new(c, KernelFamily::Heat { t: 1.0 }).unwrap();
        let r = empirical_tail_check(&c, &spec, 5, 20_000, 4, 0.05, 1).unwrap();
        assert_relative_eq!(r.population, (-4.5f64).exp() / TAU, max_relative = 1e-14);
        assert!(r.neglected_trace < 1e-10 * r.population);
        for v in &r.norms {
            assert!((v / r.population - 1.0).abs() < 0.1);
        }
        assert_eq!(r.pass_rate, 1.0);
    }
}
