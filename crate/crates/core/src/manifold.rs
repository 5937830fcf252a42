//! Canonical manifolds with closed-form Laplace–Beltrami spectra.
//!
//! Supported: the circle S¹, flat tori Tᵐ (m ≤ 4, side 2π), the round
//! spheres S² and S³. Every eigenfunction is normalized with respect to the
//! unnormalized volume measure, so `Σ_j u_j(x)^2` over a level equals
//! `multiplicity / volume` on these homogeneous spaces.
//!
//! Within-level basis conventions:
//!
//! * S¹: constant `1/√(2π)`, then for each ℓ ≥ 1 the pair `cos(ℓθ)/√π`,
//!   `sin(ℓθ)/√π`.
//! * Tᵐ: products of circle basis functions. Circle functions are indexed
//!   `0` (constant), `2ℓ-1` (cos ℓθ), `2ℓ` (sin ℓθ); within a level the index
//!   tuples are ordered lexicographically.
//! * S²: real spherical harmonics ordered `m = -ℓ..=ℓ`; `m < 0` uses
//!   `√2 Q_ℓ^|m| sin(|m|φ)`, `m > 0` uses `√2 Q_ℓ^m cos(mφ)`, with `Q` the
//!   fully normalized associated Legendre functions (no Condon–Shortley phase)
//!   and `(θ, φ)` the polar/azimuthal angles of the ambient unit vector.
//! * S³: write `x = (sin χ · ω, cos χ)` with `ω ∈ S²`. Level ℓ is spanned by
//!   `sin^j χ · p^{(j+1)}_{ℓ-j}(cos χ) · Y_{jm}(ω)` for `j = 0..=ℓ`,
//!   `m = -j..=j` (ordered by `j`, then `m`), where `p^{(α)}_k` is the
//!   Gegenbauer polynomial normalized under the weight `(1-x²)^{α-1/2}` and
//!   `Y_{jm}` is the S² basis above. These are orthonormal for the measure
//!   `sin²χ dχ dω` and give `(ℓ+1)²` functions per level.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special;

/// Tolerance on `|‖x‖ - 1|` for a stored sphere point.
pub const UNIT_NORM_TOL: f64 = 1e-12;
/// Coordinates within this distance of the unit sphere are renormalized on
/// construction; anything farther is rejected.
pub const CONSTRUCTION_NORM_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ManifoldKind {
    Circle,
    Torus(u32),
    Sphere2,
    Sphere3,
}

impl std::fmt::Display for ManifoldKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ManifoldKind::Circle => write!(f, "circle"),
            ManifoldKind::Torus(m) => write!(f, "torus{m}"),
            ManifoldKind::Sphere2 => write!(f, "sphere2"),
            ManifoldKind::Sphere3 => write!(f, "sphere3"),
        }
    }
}

impl std::str::FromStr for ManifoldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "circle" | "s1" => Ok(ManifoldKind::Circle),
            "sphere2" | "s2" => Ok(ManifoldKind::Sphere2),
            "sphere3" | "s3" => Ok(ManifoldKind::Sphere3),
            _ => {
                let digits = lower
                    .strip_prefix("torus")
                    .or_else(|| lower.strip_prefix('t'))
                    .ok_or_else(|| Error::UnsupportedManifold(s.to_string()))?;
                let m: u32 =
                    digits.trim_start_matches(':').parse().map_err(|_| Error::UnsupportedManifold(s.to_string()))?;
                Ok(ManifoldKind::Torus(m))
            }
        }
    }
}

/// A point in intrinsic coordinates: angles for S¹/Tᵐ, an ambient unit
/// vector for S²/S³.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    coords: [f64; 4],
    len: usize,
}

impl Point {
    /// Wraps raw coordinates without any validation. Operations on a
    /// manifold re-check points through [`SpectralManifold::validate`].
    pub fn from_raw(coords: &[f64]) -> Self {
        assert!(coords.len() <= 4, "points carry at most 4 coordinates");
        let mut c = [0.0; 4];
        c[..coords.len()].copy_from_slice(coords);
        Point { coords: c, len: coords.len() }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.len]
    }
}

/// One eigenspace of the Laplacian.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigLevel {
    /// Level index (not a function index).
    pub index: usize,
    pub lambda: f64,
    pub multiplicity: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpectralManifold {
    kind: ManifoldKind,
}

impl SpectralManifold {
    pub fn new(kind: ManifoldKind) -> Result<Self> {
        if let ManifoldKind::Torus(m) = kind {
            if m == 0 {
                return Err(Error::UnsupportedManifold("torus of dimension 0".into()));
            }
            if m > 4 {
                return Err(Error::UnsupportedManifold(format!(
                    "torus T^{m}: lattice-shell enumeration is limited to m <= 4"
                )));
            }
        }
        Ok(SpectralManifold { kind })
    }

    pub fn circle() -> Self {
        SpectralManifold { kind: ManifoldKind::Circle }
    }

    pub fn torus(m: u32) -> Result<Self> {
        Self::new(ManifoldKind::Torus(m))
    }

    pub fn sphere2() -> Self {
        SpectralManifold { kind: ManifoldKind::Sphere2 }
    }

    pub fn sphere3() -> Self {
        SpectralManifold { kind: ManifoldKind::Sphere3 }
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn dim(&self) -> u32 {
        match self.kind {
            ManifoldKind::Circle => 1,
            ManifoldKind::Torus(m) => m,
            ManifoldKind::Sphere2 => 2,
            ManifoldKind::Sphere3 => 3,
        }
    }

    pub fn volume(&self) -> f64 {
        match self.kind {
            ManifoldKind::Circle => TAU,
            ManifoldKind::Torus(m) => TAU.powi(m as i32),
            ManifoldKind::Sphere2 => 4.0 * PI,
            ManifoldKind::Sphere3 => 2.0 * PI * PI,
        }
    }

    /// Upper bound κ on the sectional curvature.
    pub fn curvature_kappa(&self) -> f64 {
        match self.kind {
            ManifoldKind::Circle | ManifoldKind::Torus(_) => 0.0,
            ManifoldKind::Sphere2 | ManifoldKind::Sphere3 => 1.0,
        }
    }

    /// `K1 >= 0` with `Ricci >= -(m-1) K1`.
    pub fn ricci_lower_k1(&self) -> f64 {
        0.0
    }

    fn is_sphere(&self) -> bool {
        matches!(self.kind, ManifoldKind::Sphere2 | ManifoldKind::Sphere3)
    }

    fn coord_len(&self) -> usize {
        match self.kind {
            ManifoldKind::Circle => 1,
            ManifoldKind::Torus(m) => m as usize,
            ManifoldKind::Sphere2 => 3,
            ManifoldKind::Sphere3 => 4,
        }
    }

    /// Builds a validated point. Angles are reduced mod 2π; sphere
    /// coordinates within [`CONSTRUCTION_NORM_TOL`] of unit norm are
    /// renormalized.
    pub fn point(&self, coords: &[f64]) -> Result<Point> {
        if coords.len() != self.coord_len() {
            return Err(Error::InvalidPoint(format!(
                "{} expects {} coordinates, got {}",
                self.kind,
                self.coord_len(),
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPoint("non-finite coordinate".into()));
        }
        if self.is_sphere() {
            let norm = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > CONSTRUCTION_NORM_TOL {
                return Err(Error::InvalidPoint(format!("sphere point has norm {norm}")));
            }
            let unit: Vec<f64> = coords.iter().map(|c| c / norm).collect();
            Ok(Point::from_raw(&unit))
        } else {
            let wrapped: Vec<f64> = coords.iter().map(|&a| wrap_angle(a)).collect();
            Ok(Point::from_raw(&wrapped))
        }
    }

    pub fn validate(&self, x: &Point) -> Result<()> {
        if x.len != self.coord_len() {
            return Err(Error::InvalidPoint(format!(
                "{} expects {} coordinates, got {}",
                self.kind,
                self.coord_len(),
                x.len
            )));
        }
        if x.coords().iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPoint("non-finite coordinate".into()));
        }
        if self.is_sphere() {
            let norm = x.coords().iter().map(|c| c * c).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::InvalidPoint(format!("sphere point norm {norm} is off the unit sphere")));
            }
        }
        Ok(())
    }

    /// Eigenvalue of level-index `l` on S¹/S²/S³.
    fn sphere_like_lambda(&self, l: usize) -> f64 {
        let lf = l as f64;
        match self.kind {
            ManifoldKind::Circle => lf * lf,
            ManifoldKind::Sphere2 => lf * (lf + 1.0),
            ManifoldKind::Sphere3 => lf * (lf + 2.0),
            ManifoldKind::Torus(_) => unreachable!("torus levels come from lattice shells"),
        }
    }

    fn sphere_like_multiplicity(&self, l: usize) -> usize {
        match self.kind {
            ManifoldKind::Circle => {
                if l == 0 {
                    1
                } else {
                    2
                }
            }
            ManifoldKind::Sphere2 => 2 * l + 1,
            ManifoldKind::Sphere3 => (l + 1) * (l + 1),
            ManifoldKind::Torus(_) => unreachable!("torus levels come from lattice shells"),
        }
    }

    /// All levels with `lambda <= lambda_max`, ascending.
    pub fn list_levels(&self, lambda_max: f64) -> Result<Vec<EigLevel>> {
        if !(lambda_max >= 0.0) {
            return Err(Error::OutOfRange(format!("lambda_max = {lambda_max} must be >= 0")));
        }
        match self.kind {
            ManifoldKind::Torus(m) => {
                if m > 4 {
                    return Err(Error::UnsupportedManifold(format!("torus T^{m}")));
                }
                let counts = lattice_shell_counts(m, lambda_max.floor() as usize);
                Ok(counts
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .enumerate()
                    .map(|(index, (n, &c))| EigLevel { index, lambda: n as f64, multiplicity: c as usize })
                    .collect())
            }
            _ => {
                let mut out = Vec::new();
                let mut l = 0;
                loop {
                    let lambda = self.sphere_like_lambda(l);
                    if lambda > lambda_max {
                        break;
                    }
                    out.push(EigLevel { index: l, lambda, multiplicity: self.sphere_like_multiplicity(l) });
                    l += 1;
                }
                Ok(out)
            }
        }
    }

    /// Number of eigenfunctions with eigenvalue `<= lambda_max`.
    pub fn function_count(&self, lambda_max: f64) -> Result<usize> {
        Ok(self.list_levels(lambda_max)?.iter().map(|l| l.multiplicity).sum())
    }

    /// The explicit eigenbasis up to `lambda_max`.
    pub fn basis(&self, lambda_max: f64) -> Result<EigenBasis> {
        EigenBasis::new(*self, lambda_max)
    }

    /// Values of every basis function with `lambda <= lambda_max` at `x`.
    pub fn eval_eigenfunctions(&self, x: &Point, lambda_max: f64) -> Result<Vec<f64>> {
        self.validate(x)?;
        Ok(self.basis(lambda_max)?.eval(x))
    }

    /// `Σ_{j in level} u_j(x) u_j(y)` by the addition theorem.
    pub fn zonal_level_sum(&self, level: &EigLevel, x: &Point, y: &Point) -> Result<f64> {
        self.validate(x)?;
        self.validate(y)?;
        Ok(self.zonal_sums(std::slice::from_ref(level), x, y)[0])
    }

    /// Zonal sums for several levels at once, sharing one polynomial
    /// recurrence. Points are assumed valid.
    pub fn zonal_sums(&self, levels: &[EigLevel], x: &Point, y: &Point) -> Vec<f64> {
        let mut out = Vec::with_capacity(levels.len());
        match self.kind {
            ManifoldKind::Circle => {
                let d = x.coords[0] - y.coords[0];
                for lvl in levels {
                    if lvl.index == 0 {
                        out.push(1.0 / TAU);
                    } else {
                        out.push((lvl.index as f64 * d).cos() / PI);
                    }
                }
            }
            ManifoldKind::Torus(m) => {
                let m = m as usize;
                let n_max = levels.iter().map(|l| l.lambda as usize).max().unwrap_or(0);
                let f_max = isqrt(n_max);
                // factor[i][f] = circle level-f zonal sum in coordinate i
                let factors: Vec<Vec<f64>> = (0..m)
                    .map(|i| {
                        let d = x.coords[i] - y.coords[i];
                        (0..=f_max).map(|f| if f == 0 { 1.0 / TAU } else { (f as f64 * d).cos() / PI }).collect()
                    })
                    .collect();
                for lvl in levels {
                    let n = lvl.lambda.round() as usize;
                    out.push(torus_shell_product_sum(&factors, m, n));
                }
            }
            ManifoldKind::Sphere2 => {
                let c = sphere_cos(x, y);
                let l_max = levels.iter().map(|l| l.index).max().unwrap_or(0);
                let p = special::legendre_all(l_max, c);
                for lvl in levels {
                    let l = lvl.index as f64;
                    out.push((2.0 * l + 1.0) / (4.0 * PI) * p[lvl.index]);
                }
            }
            ManifoldKind::Sphere3 => {
                let c = sphere_cos(x, y);
                let l_max = levels.iter().map(|l| l.index).max().unwrap_or(0);
                let u = special::chebyshev_u_all(l_max, c);
                for lvl in levels {
                    let l = lvl.index as f64;
                    out.push((l + 1.0) / (2.0 * PI * PI) * u[lvl.index]);
                }
            }
        }
        out
    }

    pub fn geodesic_distance(&self, x: &Point, y: &Point) -> f64 {
        match self.kind {
            ManifoldKind::Circle | ManifoldKind::Torus(_) => x
                .coords()
                .iter()
                .zip(y.coords())
                .map(|(a, b)| {
                    let d = wrapped_angle_distance(*a, *b);
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
            ManifoldKind::Sphere2 | ManifoldKind::Sphere3 => sphere_cos(x, y).acos(),
        }
    }

    /// `n` i.i.d. uniform points; deterministic in `seed`.
    pub fn sample_uniform(&self, n: usize, seed: u64) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_uniform_with(&mut rng, n)
    }

    pub fn sample_uniform_with<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Point> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        if self.is_sphere() {
            let k = self.coord_len();
            loop {
                let mut v = [0.0f64; 4];
                for c in v.iter_mut().take(k) {
                    *c = rng.sample(StandardNormal);
                }
                let norm = v[..k].iter().map(|c| c * c).sum::<f64>().sqrt();
                if norm > 1e-8 {
                    for c in v.iter_mut().take(k) {
                        *c /= norm;
                    }
                    return Point::from_raw(&v[..k]);
                }
            }
        } else {
            let k = self.coord_len();
            let mut v = [0.0f64; 4];
            for c in v.iter_mut().take(k) {
                *c = rng.random_range(0.0..TAU);
            }
            Point::from_raw(&v[..k])
        }
    }
}

fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

fn wrapped_angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

fn sphere_cos(x: &Point, y: &Point) -> f64 {
    let dot: f64 = x.coords().iter().zip(y.coords()).map(|(a, b)| a * b).sum();
    dot.clamp(-1.0, 1.0)
}

pub(crate) fn isqrt(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// `r_m(n)` for `n = 0..=n_max`: the number of integer vectors `k ∈ Z^m`
/// with `|k|² = n`.
pub fn lattice_shell_counts(m: u32, n_max: usize) -> Vec<u64> {
    let mut one = vec![0u64; n_max + 1];
    one[0] = 1;
    let mut k = 1;
    while k * k <= n_max {
        one[k * k] = 2;
        k += 1;
    }
    let mut acc = one.clone();
    for _ in 1..m {
        let mut next = vec![0u64; n_max + 1];
        for (a, &ca) in acc.iter().enumerate() {
            if ca == 0 {
                continue;
            }
            let mut k = 0;
            while a + k * k <= n_max {
                next[a + k * k] += ca * one[k * k];
                k += 1;
            }
        }
        acc = next;
    }
    acc
}

/// Σ over nonnegative frequency vectors `f` with `|f|² = n` of
/// `Π_i factors[i][f_i]`.
fn torus_shell_product_sum(factors: &[Vec<f64>], m: usize, n: usize) -> f64 {
    fn rec(factors: &[Vec<f64>], i: usize, m: usize, remaining: usize, acc: f64) -> f64 {
        if i + 1 == m {
            let f = isqrt(remaining);
            return if f * f == remaining { acc * factors[i][f] } else { 0.0 };
        }
        let mut total = 0.0;
        let mut f = 0;
        while f * f <= remaining {
            total += rec(factors, i + 1, m, remaining - f * f, acc * factors[i][f]);
            f += 1;
        }
        total
    }
    rec(factors, 0, m, n, 1.0)
}

/// Index tuples (circle basis indices per coordinate) for every torus basis
/// function with `|k|² <= n_max`, sorted by eigenvalue, then lexicographically.
fn torus_basis_tuples(m: usize, n_max: usize) -> Vec<(usize, [usize; 4])> {
    fn rec(m: usize, i: usize, remaining: usize, cur: &mut [usize; 4], out: &mut Vec<[usize; 4]>) {
        if i == m {
            out.push(*cur);
            return;
        }
        let mut f = 0;
        while f * f <= remaining {
            cur[i] = f;
            rec(m, i + 1, remaining - f * f, cur, out);
            f += 1;
        }
    }
    let mut freqs = Vec::new();
    rec(m, 0, n_max, &mut [0; 4], &mut freqs);
    let mut tuples = Vec::new();
    for fv in freqs {
        let n: usize = fv[..m].iter().map(|f| f * f).sum();
        // expand each positive frequency into its cos / sin circle index
        let mut expanded = vec![[0usize; 4]];
        for i in 0..m {
            let f = fv[i];
            let choices: Vec<usize> = if f == 0 { vec![0] } else { vec![2 * f - 1, 2 * f] };
            expanded = expanded
                .into_iter()
                .flat_map(|t| {
                    choices.iter().map(move |&c| {
                        let mut t2 = t;
                        t2[i] = c;
                        t2
                    })
                })
                .collect();
        }
        tuples.extend(expanded.into_iter().map(|t| (n, t)));
    }
    tuples.sort();
    tuples
}

fn circle_basis_values(theta: f64, f_max: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(2 * f_max + 1);
    v.push(1.0 / TAU.sqrt());
    let s = 1.0 / PI.sqrt();
    for f in 1..=f_max {
        let a = f as f64 * theta;
        v.push(a.cos() * s);
        v.push(a.sin() * s);
    }
    v
}

/// Real spherical harmonics `Y_lm` on S² for `l <= l_max`, in `(l, m = -l..=l)`
/// order, at the unit vector `(x, y, z)`.
fn real_spherical_harmonics(l_max: usize, v: [f64; 3]) -> Vec<f64> {
    let cos_t = v[2].clamp(-1.0, 1.0);
    let sin_t = (v[0] * v[0] + v[1] * v[1]).sqrt();
    let phi = v[1].atan2(v[0]);
    let q = special::assoc_legendre_normalized(l_max, cos_t, sin_t);
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut out = Vec::with_capacity((l_max + 1) * (l_max + 1));
    for l in 0..=l_max {
        for m in -(l as i64)..=(l as i64) {
            let am = m.unsigned_abs() as usize;
            let val = if m < 0 {
                sqrt2 * q[l][am] * (am as f64 * phi).sin()
            } else if m == 0 {
                q[l][0]
            } else {
                sqrt2 * q[l][am] * (am as f64 * phi).cos()
            };
            out.push(val);
        }
    }
    out
}

#[derive(Clone, Debug)]
enum Layout {
    Circle { f_max: usize },
    Torus { m: usize, f_max: usize, tuples: Vec<[usize; 4]> },
    Sphere2 { l_max: usize },
    Sphere3 { l_max: usize },
    Empty,
}

/// The explicit eigenbasis up to an eigenvalue cap, with its layout
/// precomputed so that repeated evaluation is cheap.
#[derive(Clone, Debug)]
pub struct EigenBasis {
    manifold: SpectralManifold,
    lambda_max: f64,
    levels: Vec<EigLevel>,
    /// Eigenvalue of each basis function, in basis order.
    lambdas: Vec<f64>,
    /// Level position (into `levels`) of each basis function.
    level_of: Vec<usize>,
    layout: Layout,
}

impl EigenBasis {
    pub fn new(manifold: SpectralManifold, lambda_max: f64) -> Result<Self> {
        let levels = manifold.list_levels(lambda_max)?;
        let mut lambdas = Vec::new();
        let mut level_of = Vec::new();
        for (pos, lvl) in levels.iter().enumerate() {
            for _ in 0..lvl.multiplicity {
                lambdas.push(lvl.lambda);
                level_of.push(pos);
            }
        }
        let top = levels.last().map(|l| l.index).unwrap_or(0);
        let layout = if levels.is_empty() {
            Layout::Empty
        } else {
            match manifold.kind {
                ManifoldKind::Circle => Layout::Circle { f_max: top },
                ManifoldKind::Torus(m) => {
                    let n_max = levels.last().map(|l| l.lambda as usize).unwrap_or(0);
                    let tuples: Vec<[usize; 4]> =
                        torus_basis_tuples(m as usize, n_max).into_iter().map(|(_, t)| t).collect();
                    debug_assert_eq!(tuples.len(), lambdas.len());
                    Layout::Torus { m: m as usize, f_max: isqrt(n_max), tuples }
                }
                ManifoldKind::Sphere2 => Layout::Sphere2 { l_max: top },
                ManifoldKind::Sphere3 => Layout::Sphere3 { l_max: top },
            }
        };
        Ok(EigenBasis { manifold, lambda_max, levels, lambdas, level_of, layout })
    }

    pub fn manifold(&self) -> SpectralManifold {
        self.manifold
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn levels(&self) -> &[EigLevel] {
        &self.levels
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Position in [`Self::levels`] of basis function `j`.
    pub fn level_of(&self, j: usize) -> usize {
        self.level_of[j]
    }

    /// Basis values at a point assumed valid.
    pub fn eval(&self, x: &Point) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(x, &mut out);
        out
    }

    pub fn eval_into(&self, x: &Point, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.len());
        match &self.layout {
            Layout::Empty => {}
            Layout::Circle { f_max } => {
                out.copy_from_slice(&circle_basis_values(x.coords[0], *f_max));
            }
            Layout::Torus { m, f_max, tuples } => {
                let per_coord: Vec<Vec<f64>> = (0..*m).map(|i| circle_basis_values(x.coords[i], *f_max)).collect();
                for (o, t) in out.iter_mut().zip(tuples) {
                    *o = (0..*m).map(|i| per_coord[i][t[i]]).product();
                }
            }
            Layout::Sphere2 { l_max } => {
                let y = real_spherical_harmonics(*l_max, [x.coords[0], x.coords[1], x.coords[2]]);
                out.copy_from_slice(&y);
            }
            Layout::Sphere3 { l_max } => {
                let l_max = *l_max;
                let cos_chi = x.coords[3].clamp(-1.0, 1.0);
                let s3 = [x.coords[0], x.coords[1], x.coords[2]];
                let sin_chi = (s3[0] * s3[0] + s3[1] * s3[1] + s3[2] * s3[2]).sqrt();
                let omega =
                    if sin_chi > 0.0 { [s3[0] / sin_chi, s3[1] / sin_chi, s3[2] / sin_chi] } else { [0.0, 0.0, 1.0] };
                let ysh = real_spherical_harmonics(l_max, omega);
                // h0(j) = ∫ (1-x²)^{j+1/2} dx = √π Γ(j+3/2)/Γ(j+2)
                let mut h0 = PI / 2.0;
                let mut radial: Vec<Vec<f64>> = Vec::with_capacity(l_max + 1);
                for j in 0..=l_max {
                    if j > 0 {
                        h0 *= (j as f64 + 0.5) / (j as f64 + 1.0);
                    }
                    let p = special::gegenbauer_orthonormal_all(l_max - j, j as f64 + 1.0, h0, cos_chi);
                    let sj = sin_chi.powi(j as i32);
                    radial.push(p.into_iter().map(|v| v * sj).collect());
                }
                let mut k = 0;
                for l in 0..=l_max {
                    for j in 0..=l {
                        let r = radial[j][l - j];
                        for mi in 0..(2 * j + 1) {
                            out[k] = r * ysh[j * j + mi];
                            k += 1;
                        }
                    }
                }
            }
        }
    }

    /// Basis values scaled to the probability measure: `√vol · u_j`. The
    /// constant function evaluates to exactly 1.
    pub fn eval_normalized(&self, x: &Point) -> Vec<f64> {
        let s = self.manifold.volume().sqrt();
        let mut v = self.eval(x);
        for (j, val) in v.iter_mut().enumerate() {
            *val = if self.lambdas[j] == 0.0 { 1.0 } else { *val * s };
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn all_manifolds() -> Vec<SpectralManifold> {
        vec![
            SpectralManifold::circle(),
            SpectralManifold::torus(2).unwrap(),
            SpectralManifold::torus(3).unwrap(),
            SpectralManifold::sphere2(),
            SpectralManifold::sphere3(),
        ]
    }

    #[test]
    fn level_examples() {
        let c = SpectralManifold::circle().list_levels(0.0).unwrap();
        assert_eq!(c, vec![EigLevel { index: 0, lambda: 0.0, multiplicity: 1 }]);

        let s2: Vec<_> = SpectralManifold::sphere2()
            .list_levels(6.0)
            .unwrap()
            .iter()
            .map(|l| (l.index, l.lambda, l.multiplicity))
            .collect();
        assert_eq!(s2, vec![(0, 0.0, 1), (1, 2.0, 3), (2, 6.0, 5)]);

        let s3: Vec<_> = SpectralManifold::sphere3()
            .list_levels(3.5)
            .unwrap()
            .iter()
            .map(|l| (l.index, l.lambda, l.multiplicity))
            .collect();
        assert_eq!(s3, vec![(0, 0.0, 1), (1, 3.0, 4)]);
    }

    #[test]
    fn torus_shells() {
        let t2 = SpectralManifold::torus(2).unwrap().list_levels(5.0).unwrap();
        let got: Vec<_> = t2.iter().map(|l| (l.lambda as usize, l.multiplicity)).collect();
        // 3 is not a sum of two squares
        assert_eq!(got, vec![(0, 1), (1, 4), (2, 4), (4, 4), (5, 8)]);
        assert_eq!(t2[3].index, 3);
        assert!(matches!(SpectralManifold::torus(5), Err(Error::UnsupportedManifold(_))));
        assert!(SpectralManifold::torus(0).is_err());
    }

    #[test]
    fn lattice_counts_match_brute_force() {
        for m in 1..=4u32 {
            let counts = lattice_shell_counts(m, 30);
            let mut brute = vec![0u64; 31];
            let r = 6i64;
            let dims = m as usize;
            let side = (2 * r + 1) as usize;
            for code in 0..side.pow(m) {
                let mut c = code;
                let mut n = 0i64;
                for _ in 0..dims {
                    let k = (c % side) as i64 - r;
                    c /= side;
                    n += k * k;
                }
                if n <= 30 {
                    brute[n as usize] += 1;
                }
            }
            assert_eq!(counts, brute, "m = {m}");
        }
    }

    #[test]
    fn circle_eigenfunction_example() {
        let m = SpectralManifold::circle();
        let x = m.point(&[0.0]).unwrap();
        let v = m.eval_eigenfunctions(&x, 1.0).unwrap();
        assert_eq!(v.len(), 3);
        assert_relative_eq!(v[0], 1.0 / TAU.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(v[1], 1.0 / PI.sqrt(), epsilon = 1e-15);
        assert_eq!(v[2], 0.0);
    }

    #[test]
    fn constant_mode_only() {
        for m in all_manifolds() {
            let x = m.sample_uniform(1, 3)[0];
            let v = m.eval_eigenfunctions(&x, 0.0).unwrap();
            assert_eq!(v.len(), 1);
            assert_relative_eq!(v[0], 1.0 / m.volume().sqrt(), max_relative = 1e-14);
        }
    }

    #[test]
    fn sphere2_north_pole_level_one() {
        let m = SpectralManifold::sphere2();
        let x = m.point(&[0.0, 0.0, 1.0]).unwrap();
        let v = m.eval_eigenfunctions(&x, 2.0).unwrap();
        let s: f64 = v[1..4].iter().map(|a| a * a).sum();
        assert_relative_eq!(s, 3.0 / (4.0 * PI), max_relative = 1e-14);
    }

    #[test]
    fn zonal_examples() {
        let s2 = SpectralManifold::sphere2();
        let x = s2.point(&[0.0, 1.0, 0.0]).unwrap();
        let l1 = s2.list_levels(2.0).unwrap()[1];
        assert_relative_eq!(s2.zonal_level_sum(&l1, &x, &x).unwrap(), 3.0 / (4.0 * PI), max_relative = 1e-15);
        assert_relative_eq!(s2.zonal_level_sum(&l1, &x, &x).unwrap(), 0.238732, epsilon = 1e-6);

        let s3 = SpectralManifold::sphere3();
        let y = s3.point(&[0.5, 0.5, 0.5, 0.5]).unwrap();
        let l2 = s3.list_levels(8.0).unwrap()[2];
        assert_relative_eq!(s3.zonal_level_sum(&l2, &y, &y).unwrap(), 9.0 / (2.0 * PI * PI), max_relative = 1e-14);
        assert_relative_eq!(s3.zonal_level_sum(&l2, &y, &y).unwrap(), 0.455945, epsilon = 1e-6);

        let c = SpectralManifold::circle();
        let a = c.point(&[0.2]).unwrap();
        let b = c.point(&[0.2 + PI]).unwrap();
        let l3 = c.list_levels(9.0).unwrap()[3];
        assert_relative_eq!(c.zonal_level_sum(&l3, &a, &b).unwrap(), -1.0 / PI, max_relative = 1e-12);
    }

    #[test]
    fn geodesic_examples() {
        let c = SpectralManifold::circle();
        let d = c.geodesic_distance(&c.point(&[0.0]).unwrap(), &c.point(&[PI]).unwrap());
        assert_relative_eq!(d, PI, epsilon = 1e-15);

        let s2 = SpectralManifold::sphere2();
        let e1 = s2.point(&[1.0, 0.0, 0.0]).unwrap();
        let e2 = s2.point(&[0.0, 1.0, 0.0]).unwrap();
        assert_relative_eq!(s2.geodesic_distance(&e1, &e2), PI / 2.0, epsilon = 1e-15);

        let t2 = SpectralManifold::torus(2).unwrap();
        let a = t2.point(&[0.0, 0.0]).unwrap();
        let b = t2.point(&[TAU - 0.1, 0.0]).unwrap();
        assert_relative_eq!(t2.geodesic_distance(&a, &b), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn point_validation() {
        let s2 = SpectralManifold::sphere2();
        assert!(s2.point(&[1.0, 0.0]).is_err());
        assert!(s2.point(&[2.0, 0.0, 0.0]).is_err());
        let p = s2.point(&[1.0 + 1e-9, 0.0, 0.0]).unwrap();
        assert!((p.coords()[0] - 1.0).abs() < 1e-15);
        let raw = Point::from_raw(&[0.9, 0.0, 0.0]);
        assert!(matches!(s2.eval_eigenfunctions(&raw, 2.0), Err(Error::InvalidPoint(_))));
        let c = SpectralManifold::circle();
        let w = c.point(&[-0.5]).unwrap();
        assert_relative_eq!(w.coords()[0], TAU - 0.5, epsilon = 1e-15);
    }

    #[test]
    fn manifold_kind_parsing() {
        assert_eq!("circle".parse::<ManifoldKind>().unwrap(), ManifoldKind::Circle);
        assert_eq!("torus3".parse::<ManifoldKind>().unwrap(), ManifoldKind::Torus(3));
        assert_eq!("sphere3".parse::<ManifoldKind>().unwrap(), ManifoldKind::Sphere3);
        assert!("klein".parse::<ManifoldKind>().is_err());
        for m in all_manifolds() {
            assert_eq!(m.kind().to_string().parse::<ManifoldKind>().unwrap(), m.kind());
        }
    }

    #[test]
    fn sampling_examples() {
        let c = SpectralManifold::circle();
        let pts = c.sample_uniform(100_000, 11);
        let mean_cos: f64 = pts.iter().map(|p| p.coords()[0].cos()).sum::<f64>() / 1e5;
        // 3σ for the mean of cos θ, σ² = 1/2 per draw
        assert!(mean_cos.abs() <= 3.0 * (0.5f64 / 1e5).sqrt());

        let s2 = SpectralManifold::sphere2();
        let pts = s2.sample_uniform(100_000, 12);
        let mut mean = [0.0; 3];
        for p in &pts {
            for i in 0..3 {
                mean[i] += p.coords()[i] / 1e5;
            }
        }
        let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 0.02);

        for m in all_manifolds() {
            let one = m.sample_uniform(1, 5);
            assert_eq!(one.len(), 1);
            m.validate(&one[0]).unwrap();
            assert_eq!(m.sample_uniform(4, 9), m.sample_uniform(4, 9));
        }
    }

    /// Gauss–Legendre nodes and weights via Newton iteration on P_n.
    fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for i in 0..n {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let p = special::legendre_all(n, x);
                let dp = n as f64 * (x * p[n] - p[n - 1]) / (x * x - 1.0);
                let dx = p[n] / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let p = special::legendre_all(n, x);
            let dp = n as f64 * (x * p[n] - p[n - 1]) / (x * x - 1.0);
            nodes.push(x);
            weights.push(2.0 / ((1.0 - x * x) * dp * dp));
        }
        (nodes, weights)
    }

    fn gram_from_quadrature(basis: &EigenBasis, pts: &[(Point, f64)]) -> Vec<Vec<f64>> {
        let d = basis.len();
        let mut g = vec![vec![0.0; d]; d];
        for (p, w) in pts {
            let v = basis.eval(p);
            for i in 0..d {
                for j in 0..d {
                    g[i][j] += w * v[i] * v[j];
                }
            }
        }
        g
    }

    fn assert_identity(g: &[Vec<f64>], tol: f64) {
        for (i, row) in g.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((v - target).abs() < tol, "entry ({i},{j}) = {v}");
            }
        }
    }

    #[test]
    fn orthonormality_circle_and_torus_exact_quadrature() {
        let c = SpectralManifold::circle();
        let basis = c.basis(36.0).unwrap();
        let n = 64;
        let pts: Vec<_> = (0..n).map(|k| (Point::from_raw(&[TAU * k as f64 / n as f64]), TAU / n as f64)).collect();
        assert_identity(&gram_from_quadrature(&basis, &pts), 1e-12);

        let t2 = SpectralManifold::torus(2).unwrap();
        let basis = t2.basis(10.0).unwrap();
        let n = 24;
        let mut pts = Vec::new();
        for a in 0..n {
            for b in 0..n {
                let p = Point::from_raw(&[TAU * a as f64 / n as f64, TAU * b as f64 / n as f64]);
                pts.push((p, (TAU / n as f64).powi(2)));
            }
        }
        assert_identity(&gram_from_quadrature(&basis, &pts), 1e-12);
    }

    #[test]
    fn orthonormality_sphere2_product_quadrature() {
        let s2 = SpectralManifold::sphere2();
        let basis = s2.basis(42.0).unwrap(); // l <= 6
        let (z, w) = gauss_legendre(12);
        let nphi = 16;
        let mut pts = Vec::new();
        for (zi, wi) in z.iter().zip(&w) {
            let r = (1.0 - zi * zi).sqrt();
            for k in 0..nphi {
                let phi = TAU * k as f64 / nphi as f64;
                pts.push((Point::from_raw(&[r * phi.cos(), r * phi.sin(), *zi]), wi * TAU / nphi as f64));
            }
        }
        assert_identity(&gram_from_quadrature(&basis, &pts), 1e-12);
    }

    #[test]
    fn orthonormality_sphere3_product_quadrature() {
        // S³ volume element sin²χ dχ dω: Gauss–Legendre in cos χ with the
        // extra sin χ factor folded into the weight is not polynomial, so use
        // χ-Gauss–Legendre on [0, π] with a high node count instead.
        let s3 = SpectralManifold::sphere3();
        let basis = s3.basis(15.0).unwrap(); // l <= 3, 1+4+9+16 functions
        let (zc, wc) = gauss_legendre(40);
        let (z, w) = gauss_legendre(10);
        let nphi = 12;
        let mut pts = Vec::new();
        for (ci, wci) in zc.iter().zip(&wc) {
            let chi = PI / 2.0 * (ci + 1.0);
            let wchi = wci * PI / 2.0 * chi.sin().powi(2);
            for (zi, wi) in z.iter().zip(&w) {
                let r = (1.0 - zi * zi).sqrt();
                for k in 0..nphi {
                    let phi = TAU * k as f64 / nphi as f64;
                    let om = [r * phi.cos(), r * phi.sin(), *zi];
                    let p = Point::from_raw(&[chi.sin() * om[0], chi.sin() * om[1], chi.sin() * om[2], chi.cos()]);
                    pts.push((p, wchi * wi * TAU / nphi as f64));
                }
            }
        }
        assert_identity(&gram_from_quadrature(&basis, &pts), 1e-10);
    }

    #[test]
    fn addition_theorem_consistency() {
        for m in all_manifolds() {
            let lambda_max = if matches!(m.kind(), ManifoldKind::Torus(3)) { 30.0 } else { 100.0 };
            let basis = m.basis(lambda_max).unwrap();
            let pts = m.sample_uniform(200, 77);
            for pair in pts.chunks(2) {
                let (x, y) = (&pair[0], &pair[1]);
                let vx = basis.eval(x);
                let vy = basis.eval(y);
                let z = m.zonal_sums(basis.levels(), x, y);
                let mut explicit = vec![0.0; basis.levels().len()];
                for j in 0..basis.len() {
                    explicit[basis.level_of(j)] += vx[j] * vy[j];
                }
                for (pos, (a, b)) in z.iter().zip(&explicit).enumerate() {
                    let scale = basis.levels()[pos].multiplicity as f64 / m.volume();
                    assert!((a - b).abs() <= 1e-10 * scale, "{} level {pos}: zonal {a} vs explicit {b}", m.kind());
                }
            }
        }
    }

    #[test]
    fn zonal_diagonal_is_homogeneous() {
        for m in all_manifolds() {
            let levels = m.list_levels(60.0).unwrap();
            let reference = m.sample_uniform(1, 1)[0];
            let r = m.zonal_sums(&levels, &reference, &reference);
            for x in m.sample_uniform(100, 2) {
                let z = m.zonal_sums(&levels, &x, &x);
                for (a, b) in z.iter().zip(&r) {
                    assert!((a - b).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn weyl_asymptotic_sanity() {
        use crate::special::unit_ball_volume;
        for m in [SpectralManifold::circle(), SpectralManifold::torus(2).unwrap(), SpectralManifold::sphere2()] {
            let lambda: f64 = 1e4;
            let count = m.function_count(lambda).unwrap() as f64;
            let d = m.dim();
            let c_m = unit_ball_volume(d) / TAU.powi(d as i32);
            let ratio = count / (c_m * m.volume() * lambda.powf(d as f64 / 2.0));
            assert!((ratio - 1.0).abs() < 0.15, "{}: ratio {ratio}", m.kind());
        }
    }
}
