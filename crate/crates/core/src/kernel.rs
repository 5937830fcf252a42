//! Spectral kernels `k(x, y) = Σ_ℓ g(λ_ℓ) u_ℓ(x) u_ℓ(y)` on the built-in
//! manifolds, evaluated level by level through zonal sums.
//!
//! Infinite-rank families are truncated at the first level `L` whose
//! analytic tail majorant for the diagonal mass `Σ_{λ > λ_L} g(λ) mult / vol`
//! drops below `τ` times the partial diagonal sum. On a homogeneous space the
//! diagonal dominates every off-diagonal tail, so `|k_true - k_trunc| <= τ k(x, x)`.

use std::f64::consts::TAU as TWO_PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{isqrt, lattice_shell_counts, EigLevel, ManifoldKind, Point, SpectralManifold};

pub const DEFAULT_TAU: f64 = 1e-12;

/// Largest eigenvalue the truncation search will visit before giving up.
const MAX_TRUNCATION_LAMBDA: f64 = 4.0e6;
const MAX_TORUS_TRUNCATION_LAMBDA: f64 = 2.0e5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KernelFamily {
    Bandlimited { omega: f64 },
    Heat { t: f64 },
    Sobolev { s: f64 },
}

impl KernelFamily {
    /// The spectral filter `g(λ)`.
    pub fn weight(&self, lambda: f64) -> f64 {
        match *self {
            KernelFamily::Bandlimited { omega } => {
                if lambda <= omega * omega {
                    1.0
                } else {
                    0.0
                }
            }
            KernelFamily::Heat { t } => (-lambda * t / 2.0).exp(),
            KernelFamily::Sobolev { s } => (1.0 + lambda).powf(-s),
        }
    }

    /// The family whose filter is `g²`.
    pub fn squared(&self) -> KernelFamily {
        match *self {
            KernelFamily::Bandlimited { omega } => KernelFamily::Bandlimited { omega },
            KernelFamily::Heat { t } => KernelFamily::Heat { t: 2.0 * t },
            KernelFamily::Sobolev { s } => KernelFamily::Sobolev { s: 2.0 * s },
        }
    }

    pub fn is_finite_rank(&self) -> bool {
        matches!(self, KernelFamily::Bandlimited { .. })
    }

    pub fn validate(&self, manifold: &SpectralManifold) -> Result<()> {
        match *self {
            KernelFamily::Bandlimited { omega } if !(omega > 0.0 && omega.is_finite()) => {
                Err(Error::InvalidSpec(format!("bandlimit omega = {omega} must be positive")))
            }
            KernelFamily::Heat { t } if !(t > 0.0 && t.is_finite()) => {
                Err(Error::InvalidSpec(format!("heat time t = {t} must be positive")))
            }
            KernelFamily::Sobolev { s } if !(s > manifold.dim() as f64 / 2.0 && s.is_finite()) => {
                Err(Error::InvalidSpec(format!(
                    "sobolev order s = {s} must exceed m/2 = {} for a summable diagonal",
                    manifold.dim() as f64 / 2.0
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Levels kept by a truncation and a certified bound on what was dropped.
#[derive(Clone, Debug)]
pub struct Truncation {
    pub levels: Vec<EigLevel>,
    /// Upper bound on `Σ_{omitted levels} g(λ) · multiplicity`.
    pub tail_mass_bound: f64,
}

/// Upper bound on `Σ_{λ_ℓ > last.lambda} g(λ_ℓ) mult_ℓ` for `last` a level of
/// `manifold`.
pub fn tail_mass_bound(manifold: &SpectralManifold, family: &KernelFamily, last: &EigLevel) -> f64 {
    if let KernelFamily::Bandlimited { omega } = *family {
        let cap = omega * omega;
        if last.lambda >= cap {
            return 0.0;
        }
        // finite: count the remaining in-band functions exactly
        let total = manifold.function_count(cap).unwrap_or(usize::MAX);
        let upto = manifold.function_count(last.lambda).unwrap_or(0);
        return total.saturating_sub(upto) as f64;
    }
    match manifold.kind() {
        ManifoldKind::Torus(m) => torus_tail_bound(m, family, last.lambda),
        kind => sphere_like_tail_bound(kind, family, last.index),
    }
}

fn sphere_like_lambda_mult(kind: ManifoldKind, l: usize) -> (f64, f64) {
    let lf = l as f64;
    match kind {
        ManifoldKind::Circle => (lf * lf, if l == 0 { 1.0 } else { 2.0 }),
        ManifoldKind::Sphere2 => (lf * (lf + 1.0), 2.0 * lf + 1.0),
        ManifoldKind::Sphere3 => (lf * (lf + 2.0), (lf + 1.0) * (lf + 1.0)),
        ManifoldKind::Torus(_) => unreachable!(),
    }
}

fn sphere_like_tail_bound(kind: ManifoldKind, family: &KernelFamily, last: usize) -> f64 {
    match *family {
        KernelFamily::Heat { .. } => {
            // h(ℓ) = mult(ℓ) g(λ_ℓ); h(ℓ+1)/h(ℓ) is nonincreasing for ℓ >= 1 on
            // S¹, S², S³, so the tail is dominated by a geometric series.
            let h = |l: usize| {
                let (lambda, mult) = sphere_like_lambda_mult(kind, l);
                mult * family.weight(lambda)
            };
            let first = h(last + 1);
            if first == 0.0 {
                return 0.0;
            }
            let ratio = h(last + 2) / first;
            if ratio < 1.0 {
                first / (1.0 - ratio)
            } else {
                f64::INFINITY
            }
        }
        KernelFamily::Sobolev { s } => {
            // integral comparison against a decreasing majorant of h(ℓ)
            let lf = last as f64;
            match kind {
                ManifoldKind::Circle if last >= 1 => 2.0 * lf.powf(1.0 - 2.0 * s) / (2.0 * s - 1.0),
                ManifoldKind::Sphere2 if last >= 1 => (1.0 + lf * (lf + 1.0)).powf(1.0 - s) / (s - 1.0),
                ManifoldKind::Sphere3 => (lf + 1.0).powf(3.0 - 2.0 * s) / (2.0 * s - 3.0),
                _ => f64::INFINITY,
            }
        }
        KernelFamily::Bandlimited { .. } => unreachable!(),
    }
}

fn torus_tail_bound(m: u32, family: &KernelFamily, lambda_last: f64) -> f64 {
    let mf = m as f64;
    match *family {
        KernelFamily::Heat { t } => {
            // |k|² > Λ forces some k_i² > Λ/m; union bound over coordinates of
            // the factorized Gaussian sums.
            let q = |j: f64| (-j * j * t / 2.0).exp();
            let full = 1.0 + 2.0 * q(1.0) / (1.0 - (-1.5 * t).exp());
            let j0 = isqrt((lambda_last / mf).floor() as usize) as f64 + 1.0;
            let ratio = (-(2.0 * j0 + 1.0) * t / 2.0).exp();
            let one_tail = 2.0 * q(j0) / (1.0 - ratio);
            mf * one_tail * full.powi(m as i32 - 1)
        }
        KernelFamily::Sobolev { s } => {
            // Σ_{λ>Λ} g dN = -g(Λ)N(Λ) + ∫_Λ^∞ N |g'| with N(λ) <= 3^m (1+λ)^{m/2}
            let half_m = mf / 2.0;
            let counted: u64 = lattice_shell_counts(m, lambda_last as usize).iter().sum();
            let integral = 3f64.powi(m as i32) * s / (s - half_m) * (1.0 + lambda_last).powf(half_m - s);
            (integral - family.weight(lambda_last) * counted as f64).max(0.0)
        }
        KernelFamily::Bandlimited { .. } => unreachable!(),
    }
}

/// Keeps levels with `λ >= from` until the omitted mass bound is at most
/// `max(rel_tol · partial, abs_tol)`, where `partial` is the kept mass
/// `Σ g(λ) mult`.
pub fn truncate(
    manifold: &SpectralManifold,
    family: &KernelFamily,
    from: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Truncation> {
    family.validate(manifold)?;
    if let KernelFamily::Bandlimited { omega } = *family {
        let levels: Vec<EigLevel> =
            manifold.list_levels(omega * omega)?.into_iter().filter(|l| l.lambda >= from).collect();
        return Ok(Truncation { levels, tail_mass_bound: 0.0 });
    }
    let is_torus = matches!(manifold.kind(), ManifoldKind::Torus(_));
    let limit = if is_torus { MAX_TORUS_TRUNCATION_LAMBDA } else { MAX_TRUNCATION_LAMBDA };
    let mut cap = (from.max(1.0) * 2.0 + 16.0).min(limit);
    loop {
        let all = manifold.list_levels(cap)?;
        let mut partial = 0.0;
        let mut kept = Vec::new();
        for lvl in all.iter().filter(|l| l.lambda >= from) {
            partial += family.weight(lvl.lambda) * lvl.multiplicity as f64;
            kept.push(*lvl);
            let tail = tail_mass_bound(manifold, family, lvl);
            if tail <= (rel_tol * partial).max(abs_tol) {
                return Ok(Truncation { levels: kept, tail_mass_bound: tail });
            }
        }
        if cap >= limit {
            return Err(Error::TruncationInfeasible(format!(
                "{:?} on {} needs eigenvalues beyond {limit} to reach relative tolerance {rel_tol}",
                family,
                manifold.kind()
            )));
        }
        cap = (cap * 4.0).min(limit);
    }
}

/// A spectral kernel with its truncation fixed at construction.
#[derive(Clone, Debug)]
pub struct KernelSpec {
    family: KernelFamily,
    manifold: SpectralManifold,
    tau: f64,
    levels: Arc<[EigLevel]>,
    weights: Arc<[f64]>,
    tail_mass_bound: f64,
}

impl KernelSpec {
    pub fn new(manifold: SpectralManifold, family: KernelFamily) -> Result<Self> {
        Self::with_tolerance(manifold, family, DEFAULT_TAU)
    }

    pub fn with_tolerance(manifold: SpectralManifold, family: KernelFamily, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidSpec(format!("truncation tolerance tau = {tau} must lie in (0, 1)")));
        }
        let trunc = truncate(&manifold, &family, 0.0, tau, 0.0)?;
        Ok(Self::from_levels(manifold, family, tau, trunc.levels, trunc.tail_mass_bound))
    }

    /// A kernel summed over every level up to `lambda_cap` with no
    /// truncation search.
    pub fn with_level_cap(manifold: SpectralManifold, family: KernelFamily, lambda_cap: f64) -> Result<Self> {
        family.validate(&manifold)?;
        let levels = manifold.list_levels(lambda_cap)?;
        let tail = levels.last().map(|l| tail_mass_bound(&manifold, &family, l)).unwrap_or(f64::INFINITY);
        Ok(Self::from_levels(manifold, family, DEFAULT_TAU, levels, tail))
    }

    fn from_levels(
        manifold: SpectralManifold,
        family: KernelFamily,
        tau: f64,
        levels: Vec<EigLevel>,
        tail_mass_bound: f64,
    ) -> Self {
        let weights: Vec<f64> = levels.iter().map(|l| family.weight(l.lambda)).collect();
        KernelSpec { family, manifold, tau, levels: levels.into(), weights: weights.into(), tail_mass_bound }
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn manifold(&self) -> SpectralManifold {
        self.manifold
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn levels(&self) -> &[EigLevel] {
        &self.levels
    }

    /// `g(λ)` for each kept level.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Largest eigenvalue kept by the truncation.
    pub fn lambda_cap(&self) -> f64 {
        self.levels.last().map(|l| l.lambda).unwrap_or(0.0)
    }

    pub fn g(&self, lambda: f64) -> f64 {
        self.family.weight(lambda)
    }

    /// Certified bound on the diagonal mass dropped by truncation,
    /// `Σ_{omitted} g mult / vol`.
    pub fn diag_tail_bound(&self) -> f64 {
        self.tail_mass_bound / self.manifold.volume()
    }

    /// `k(x, x)` on the homogeneous built-ins (independent of `x`).
    pub fn diagonal(&self) -> f64 {
        self.levels.iter().zip(self.weights.iter()).map(|(l, g)| g * l.multiplicity as f64).sum::<f64>()
            / self.manifold.volume()
    }

    pub fn eval(&self, x: &Point, y: &Point) -> Result<f64> {
        self.manifold.validate(x)?;
        self.manifold.validate(y)?;
        Ok(self.eval_unchecked(x, y))
    }

    pub(crate) fn eval_unchecked(&self, x: &Point, y: &Point) -> f64 {
        let z = self.manifold.zonal_sums(&self.levels, x, y);
        z.iter().zip(self.weights.iter()).map(|(a, g)| a * g).sum()
    }

    /// The symmetric Gram matrix `K_ij = k(X_i, X_j)`. Rows are filled in
    /// parallel; each entry depends only on its pair of points.
    pub fn matrix(&self, points: &[Point]) -> Result<DMatrix<f64>> {
        for p in points {
            self.manifold.validate(p)?;
        }
        let n = points.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (i..n).map(|j| self.eval_unchecked(&points[i], &points[j])).collect())
            .collect();
        let mut k = DMatrix::zeros(n, n);
        for (i, row) in rows.iter().enumerate() {
            for (off, v) in row.iter().enumerate() {
                let j = i + off;
                k[(i, j)] = *v;
                k[(j, i)] = *v;
            }
        }
        Ok(k)
    }

    /// `‖f‖²_H = Σ c_j² / g(λ_j)`.
    pub fn rkhs_norm_sq(&self, coeffs: &SpectralCoeffs) -> Result<f64> {
        if coeffs.manifold != self.manifold {
            return Err(Error::InvalidSpec("coefficients live on a different manifold".into()));
        }
        let lambdas = coeffs.function_lambdas()?;
        let mut total = 0.0;
        for (index, (c, lambda)) in coeffs.coeffs.iter().zip(&lambdas).enumerate() {
            let g = self.family.weight(*lambda);
            if g == 0.0 {
                if *c != 0.0 {
                    return Err(Error::NotInRkhs { index, coeff: *c });
                }
                continue;
            }
            total += c * c / g;
        }
        Ok(total)
    }
}

pub fn kernel_eval(spec: &KernelSpec, x: &Point, y: &Point) -> Result<f64> {
    spec.eval(x, y)
}

pub fn kernel_matrix(spec: &KernelSpec, points: &[Point]) -> Result<DMatrix<f64>> {
    spec.matrix(points)
}

pub fn rkhs_norm_sq(spec: &KernelSpec, coeffs: &SpectralCoeffs) -> Result<f64> {
    spec.rkhs_norm_sq(coeffs)
}

/// Coefficients of a function in the fixed eigenbasis (see
/// [`crate::manifold`]) for every basis function with `λ <= lambda_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralCoeffs {
    pub manifold: SpectralManifold,
    pub lambda_max: f64,
    pub coeffs: Vec<f64>,
}

impl SpectralCoeffs {
    pub fn new(manifold: SpectralManifold, lambda_max: f64, coeffs: Vec<f64>) -> Result<Self> {
        let expected = manifold.function_count(lambda_max)?;
        if coeffs.len() != expected {
            return Err(Error::InvalidSpec(format!(
                "expected {expected} coefficients up to lambda = {lambda_max}, got {}",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidSpec("non-finite coefficient".into()));
        }
        Ok(SpectralCoeffs { manifold, lambda_max, coeffs })
    }

    pub fn zeros(manifold: SpectralManifold, lambda_max: f64) -> Result<Self> {
        let n = manifold.function_count(lambda_max)?;
        Self::new(manifold, lambda_max, vec![0.0; n])
    }

    /// Eigenvalue of each coefficient's basis function.
    pub fn function_lambdas(&self) -> Result<Vec<f64>> {
        Ok(self
            .manifold
            .list_levels(self.lambda_max)?
            .iter()
            .flat_map(|l| std::iter::repeat_n(l.lambda, l.multiplicity))
            .collect())
    }

    /// Unnormalized L2 norm.
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Point evaluation `Σ c_j u_j(x)`.
    pub fn evaluate(&self, x: &Point) -> Result<f64> {
        let v = self.manifold.eval_eigenfunctions(x, self.lambda_max)?;
        Ok(v.iter().zip(&self.coeffs).map(|(a, b)| a * b).sum())
    }

    /// Coefficients re-indexed to a different level cap; entries above the
    /// smaller cap are dropped or zero-filled.
    pub fn resized(&self, lambda_max: f64) -> Result<SpectralCoeffs> {
        let n = self.manifold.function_count(lambda_max)?;
        let mut c = vec![0.0; n];
        let k = n.min(self.coeffs.len());
        c[..k].copy_from_slice(&self.coeffs[..k]);
        SpectralCoeffs::new(self.manifold, lambda_max, c)
    }
}

/// Wrapped Gaussian `Σ_j (2πt)^{-1/2} exp(-(d + 2πj)²/2t)`, the circle heat
/// kernel by Poisson summation. Used as an independent cross-check.
pub fn wrapped_gaussian(t: f64, d: f64) -> f64 {
    let reach = (40.0 * t).sqrt() / TWO_PI + 2.0;
    let jmax = reach.ceil() as i64;
    (-jmax..=jmax)
        .map(|j| {
            let s = d + TWO_PI * j as f64;
            (-s * s / (2.0 * t)).exp()
        })
        .sum::<f64>()
        / (TWO_PI * t).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::SymmetricEigen;
    use std::f64::consts::PI;

    #[test]
    fn bandlimited_circle_diagonal() {
        let c = SpectralManifold::circle();
        let spec = KernelSpec::new(c, KernelFamily::Bandlimited { omega: 1.5 }).unwrap();
        let x = c.point(&[0.4]).unwrap();
        assert_relative_eq!(spec.eval(&x, &x).unwrap(), 3.0 / TWO_PI, max_relative = 1e-14);
    }

    #[test]
    fn heat_circle_matches_poisson_summation() {
        let c = SpectralManifold::circle();
        let spec = KernelSpec::new(c, KernelFamily::Heat { t: 0.5 }).unwrap();
        for (x, y) in c.sample_uniform(50, 1).iter().zip(c.sample_uniform(50, 2).iter()) {
            let d = x.coords()[0] - y.coords()[0];
            let oracle = wrapped_gaussian(0.5, d);
            assert_relative_eq!(spec.eval(x, y).unwrap(), oracle, max_relative = 1e-9);
        }
    }

    #[test]
    fn heat_large_time_leaves_constant_mode() {
        let s2 = SpectralManifold::sphere2();
        let spec = KernelSpec::new(s2, KernelFamily::Heat { t: 200.0 }).unwrap();
        let pts = s2.sample_uniform(2, 4);
        let v = spec.eval(&pts[0], &pts[1]).unwrap();
        assert!((v - 1.0 / (4.0 * PI)).abs() <= spec.tau());
    }

    #[test]
    fn sobolev_requires_summable_diagonal() {
        let s2 = SpectralManifold::sphere2();
        assert!(matches!(KernelSpec::new(s2, KernelFamily::Sobolev { s: 1.0 }), Err(Error::InvalidSpec(_))));
        assert!(KernelSpec::with_tolerance(s2, KernelFamily::Sobolev { s: 4.0 }, 1e-6).is_ok());
    }

    #[test]
    fn gram_examples() {
        let c = SpectralManifold::circle();
        let spec = KernelSpec::new(c, KernelFamily::Heat { t: 1.0 }).unwrap();
        let one = c.sample_uniform(1, 8);
        let k = spec.matrix(&one).unwrap();
        assert_eq!(k.shape(), (1, 1));
        assert_eq!(k[(0, 0)], spec.eval(&one[0], &one[0]).unwrap());

        // finite feature map: rank <= 2⌊Ω⌋ + 1
        let spec = KernelSpec::new(c, KernelFamily::Bandlimited { omega: 2.7 }).unwrap();
        let pts = c.sample_uniform(30, 9);
        let k = spec.matrix(&pts).unwrap();
        let svd = k.svd(false, false);
        let smax = svd.singular_values.max();
        let rank = svd.singular_values.iter().filter(|s| **s > 1e-10 * smax).count();
        assert_eq!(rank, 5);

        let s3 = SpectralManifold::sphere3();
        let spec = KernelSpec::new(s3, KernelFamily::Heat { t: 0.5 }).unwrap();
        let pts = s3.sample_uniform(50, 10);
        let k = spec.matrix(&pts).unwrap();
        assert_eq!(k, k.transpose());
        let eig = SymmetricEigen::new(k);
        assert!(eig.eigenvalues.min() > 0.0);
    }

    #[test]
    fn heat_gram_diagonal_constant() {
        let s2 = SpectralManifold::sphere2();
        let spec = KernelSpec::new(s2, KernelFamily::Heat { t: 0.3 }).unwrap();
        let pts = s2.sample_uniform(40, 3);
        let k = spec.matrix(&pts).unwrap();
        for i in 0..40 {
            assert!((k[(i, i)] - k[(0, 0)]).abs() < 1e-10);
        }
        assert_relative_eq!(k[(0, 0)], spec.diagonal(), max_relative = 1e-12);
    }

    #[test]
    fn rkhs_norm_examples() {
        let c = SpectralManifold::circle();
        let bl = KernelSpec::new(c, KernelFamily::Bandlimited { omega: 2.0 }).unwrap();
        let coeffs = SpectralCoeffs::new(c, 4.0, vec![0.5, -1.0, 2.0, 0.25, 3.0]).unwrap();
        let l2 = coeffs.l2_norm();
        assert_relative_eq!(bl.rkhs_norm_sq(&coeffs).unwrap(), l2 * l2, max_relative = 1e-15);

        let outside = SpectralCoeffs::new(c, 9.0, vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(matches!(bl.rkhs_norm_sq(&outside), Err(Error::NotInRkhs { index: 5, .. })));

        let t = 0.8;
        let heat = KernelSpec::new(c, KernelFamily::Heat { t }).unwrap();
        let single = SpectralCoeffs::new(c, 4.0, vec![0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_relative_eq!(heat.rkhs_norm_sq(&single).unwrap(), (4.0 * t / 2.0).exp(), max_relative = 1e-14);

        let zero = SpectralCoeffs::zeros(c, 16.0).unwrap();
        assert_eq!(heat.rkhs_norm_sq(&zero).unwrap(), 0.0);
    }

    #[test]
    fn truncation_certificate() {
        let cases = [
            (SpectralManifold::circle(), KernelFamily::Heat { t: 0.05 }),
            (SpectralManifold::sphere2(), KernelFamily::Heat { t: 0.2 }),
            (SpectralManifold::sphere3(), KernelFamily::Heat { t: 0.1 }),
            (SpectralManifold::torus(2).unwrap(), KernelFamily::Heat { t: 0.4 }),
        ];
        for (m, fam) in cases {
            let spec = KernelSpec::new(m, fam).unwrap();
            let wider = KernelSpec::with_level_cap(m, fam, spec.lambda_cap() * 3.0 + 20.0).unwrap();
            assert!(spec.diag_tail_bound() <= spec.tau() * spec.diagonal());
            for p in m.sample_uniform(20, 5).chunks(2) {
                let a = spec.eval(&p[0], &p[1]).unwrap();
                let b = wider.eval(&p[0], &p[1]).unwrap();
                assert!((a - b).abs() <= 10.0 * spec.tau() * spec.diagonal(), "{:?}", m.kind());
            }
            // the certificate itself bounds the true omitted diagonal mass
            let omitted = wider.diagonal() - spec.diagonal();
            assert!(omitted <= spec.diag_tail_bound() * (1.0 + 1e-9) + 1e-300);
        }
    }

    #[test]
    fn tail_bounds_dominate_true_tails() {
        let families = [KernelFamily::Heat { t: 0.3 }, KernelFamily::Heat { t: 2.0 }, KernelFamily::Sobolev { s: 2.5 }];
        let manifolds = [
            SpectralManifold::circle(),
            SpectralManifold::sphere2(),
            SpectralManifold::sphere3(),
            SpectralManifold::torus(2).unwrap(),
            SpectralManifold::torus(3).unwrap(),
        ];
        for m in manifolds {
            let levels = m.list_levels(3000.0).unwrap();
            for fam in families {
                if fam.validate(&m).is_err() {
                    continue;
                }
                for cut in [1usize, 3, 8] {
                    let last = levels[cut];
                    let exact: f64 =
                        levels[cut + 1..].iter().map(|l| fam.weight(l.lambda) * l.multiplicity as f64).sum();
                    let bound = tail_mass_bound(&m, &fam, &last);
                    // the truncated "exact" sum itself is a lower bound on the true tail
                    assert!(bound >= exact, "{} {:?} cut {cut}: {bound} < {exact}", m.kind(), fam);
                }
            }
        }
    }

    #[test]
    fn torus_heat_factorizes() {
        let c = SpectralManifold::circle();
        let t2 = SpectralManifold::torus(2).unwrap();
        let fam = KernelFamily::Heat { t: 0.7 };
        let kc = KernelSpec::new(c, fam).unwrap();
        let kt = KernelSpec::new(t2, fam).unwrap();
        let pts = t2.sample_uniform(200, 21);
        for p in pts.chunks(2) {
            let (x, y) = (p[0].coords(), p[1].coords());
            let prod = kc.eval(&Point::from_raw(&x[..1]), &Point::from_raw(&y[..1])).unwrap()
                * kc.eval(&Point::from_raw(&x[1..]), &Point::from_raw(&y[1..])).unwrap();
            assert!((kt.eval(&p[0], &p[1]).unwrap() - prod).abs() <= 1e-10 * kt.diagonal());
        }
    }

    #[test]
    fn heat_semigroup_on_circle() {
        let c = SpectralManifold::circle();
        let (t, s) = (0.4, 0.9);
        let kt = KernelSpec::new(c, KernelFamily::Heat { t }).unwrap();
        let ks = KernelSpec::new(c, KernelFamily::Heat { t: s }).unwrap();
        let kts = KernelSpec::new(c, KernelFamily::Heat { t: t + s }).unwrap();
        let n = 4096;
        let grid: Vec<Point> = (0..n).map(|k| Point::from_raw(&[TWO_PI * k as f64 / n as f64])).collect();
        let pairs = c.sample_uniform(6, 30);
        for p in pairs.chunks(2) {
            let conv: f64 = grid.iter().map(|z| kt.eval(&p[0], z).unwrap() * ks.eval(z, &p[1]).unwrap()).sum::<f64>()
                * TWO_PI
                / n as f64;
            assert_relative_eq!(conv, kts.eval(&p[0], &p[1]).unwrap(), max_relative = 1e-8);
        }
    }
}
