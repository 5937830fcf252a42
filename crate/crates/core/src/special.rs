//! Orthogonal polynomial recurrences used by the zonal sums and the explicit
//! eigenbases. All recurrences run upward in degree; they are stable for the
//! degree range the kernels need (a few hundred).

use std::f64::consts::PI;

/// Legendre values `P_0(x) ..= P_n(x)`.
pub fn legendre_all(n: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n == 0 {
        return out;
    }
    out.push(x);
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * x * out[k] - kf * out[k - 1]) / (kf + 1.0);
        out.push(next);
    }
    out
}

/// Legendre polynomial `P_n(x)`.
pub fn legendre(n: usize, x: f64) -> f64 {
    legendre_all(n, x)[n]
}

/// Chebyshev polynomials of the second kind `U_0(x) ..= U_n(x)`.
///
/// `U_n(cos d) = sin((n+1)d) / sin d`, with `U_n(1) = n + 1`.
pub fn chebyshev_u_all(n: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n == 0 {
        return out;
    }
    out.push(2.0 * x);
    for k in 1..n {
        let next = 2.0 * x * out[k] - out[k - 1];
        out.push(next);
    }
    out
}

/// Fully normalized associated Legendre values `Q_l^m(cos θ)` for
/// `0 <= m <= l <= lmax`, stored row-major by `l` as `q[l][m]`.
///
/// Normalization: `Q_l^m = sqrt((2l+1)/(4π) (l-m)!/(l+m)!) P_l^m` without the
/// Condon–Shortley phase, so `Σ_m |Y_lm|^2 = (2l+1)/(4π)` for the real
/// harmonics built from it.
pub fn assoc_legendre_normalized(lmax: usize, cos_theta: f64, sin_theta: f64) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = (0..=lmax).map(|l| vec![0.0; l + 1]).collect();
    q[0][0] = (1.0 / (4.0 * PI)).sqrt();
    for m in 1..=lmax {
        let mf = m as f64;
        q[m][m] = ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * sin_theta * q[m - 1][m - 1];
    }
    for m in 0..lmax {
        q[m + 1][m] = (2.0 * m as f64 + 3.0).sqrt() * cos_theta * q[m][m];
    }
    for m in 0..=lmax {
        let mf = m as f64;
        for l in (m + 2)..=lmax {
            let lf = l as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            q[l][m] = a * (cos_theta * q[l - 1][m] - b * q[l - 2][m]);
        }
    }
    q
}

/// Gegenbauer polynomials `C_k^α` normalized to unit norm under the weight
/// `(1 - x^2)^(α - 1/2)` on `[-1, 1]`, for `k = 0..=n`.
///
/// `h0` must be the weight's total mass `∫ (1 - x^2)^(α - 1/2) dx`.
pub fn gegenbauer_orthonormal_all(n: usize, alpha: f64, h0: f64, x: f64) -> Vec<f64> {
    // x p_k = a_{k+1} p_{k+1} + a_k p_{k-1},
    // a_k = 1/2 sqrt(k (k + 2α - 1) / ((k + α - 1)(k + α)))
    let a = |k: usize| {
        let kf = k as f64;
        0.5 * (kf * (kf + 2.0 * alpha - 1.0) / ((kf + alpha - 1.0) * (kf + alpha))).sqrt()
    };
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0 / h0.sqrt());
    if n == 0 {
        return out;
    }
    out.push(x * out[0] / a(1));
    for k in 1..n {
        let next = (x * out[k] - a(k) * out[k - 1]) / a(k + 1);
        out.push(next);
    }
    out
}

/// `Γ(m/2 + 1)` for a positive integer `m`, by half-integer recurrence.
pub fn gamma_half_integer_plus_one(m: u32) -> f64 {
    // Γ(1) = 1, Γ(3/2) = √π / 2, Γ(z + 1) = z Γ(z)
    let (mut z, mut value) = if m.is_multiple_of(2) { (1.0, 1.0) } else { (1.5, PI.sqrt() / 2.0) };
    let target = m as f64 / 2.0 + 1.0;
    while z < target - 0.25 {
        value *= z;
        z += 1.0;
    }
    value
}

/// Volume of the unit ball in `R^m`.
pub fn unit_ball_volume(m: u32) -> f64 {
    PI.powf(m as f64 / 2.0) / gamma_half_integer_plus_one(m)
}
