//! Gauss–Legendre quadrature and orthonormal associated Legendre functions.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on [-1, 1], nodes in decreasing order.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Index of `(l, m)`, `0 ≤ m ≤ l`, in the triangular Legendre tables.
#[inline]
pub fn tri_index(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}

pub fn tri_len(l_max: usize) -> usize {
    (l_max + 1) * (l_max + 2) / 2
}

/// Orthonormal associated Legendre functions `P̄_l^m(cos θ)` and their first
/// three θ-derivatives, for `0 ≤ m ≤ l ≤ l_max`.
///
/// Normalized so that `P̄_l^m(cos θ)·T_m(φ)` is orthonormal in `L²(S²)`, with
/// `T_0 = 1` and `T_{±m} = √2 cos mφ, √2 sin mφ`. No Condon–Shortley phase.
/// `θ` must lie strictly inside `(0, π)`.
pub fn legendre_table(l_max: usize, theta: f64) -> Vec<[f64; 4]> {
    let (s, x) = theta.sin_cos();
    let mut out = vec![[0.0; 4]; tri_len(l_max)];

    let mut pmm = (1.0 / (4.0 * PI)).sqrt();
    for m in 0..=l_max {
        if m > 0 {
            let mf = m as f64;
            pmm *= ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s;
        }
        out[tri_index(m, m)][0] = pmm;
        if m < l_max {
            out[tri_index(m + 1, m)][0] = (2.0 * m as f64 + 3.0).sqrt() * x * pmm;
        }
        for l in (m + 2)..=l_max {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0))
                .sqrt();
            out[tri_index(l, m)][0] =
                a * (x * out[tri_index(l - 1, m)][0] - b * out[tri_index(l - 2, m)][0]);
        }
    }

    let cot = x / s;
    for l in 0..=l_max {
        let lf = l as f64;
        let c = lf * (lf + 1.0);
        for m in 0..=l {
            let mf = m as f64;
            let p = out[tri_index(l, m)][0];
            let prev = if l > m {
                out[tri_index(l - 1, m)][0]
                    * ((2.0 * lf + 1.0) / (2.0 * lf - 1.0) * (lf * lf - mf * mf)).sqrt()
            } else {
                0.0
            };
            let d1 = (lf * x * p - prev) / s;
            let q = c - mf * mf / (s * s);
            let d2 = -cot * d1 - q * p;
            let d3 = -cot * d2 + d1 / (s * s) - q * d1 - 2.0 * mf * mf * x / (s * s * s) * p;
            out[tri_index(l, m)] = [p, d1, d2, d3];
        }
    }
    out
}

/// Values of `T_m(φ)` and its first three φ-derivatives.
#[inline]
pub fn trig_jet(m: i64, phi: f64) -> [f64; 4] {
    let sq2 = std::f64::consts::SQRT_2;
    if m == 0 {
        return [1.0, 0.0, 0.0, 0.0];
    }
    let k = m.unsigned_abs() as f64;
    let (sn, cs) = (k * phi).sin_cos();
    if m > 0 {
        [sq2 * cs, -k * sq2 * sn, -k * k * sq2 * cs, k * k * k * sq2 * sn]
    } else {
        [sq2 * sn, k * sq2 * cs, -k * k * sq2 * sn, -k * k * k * sq2 * cs]
    }
}

/// Pointwise evaluation of the real orthonormal harmonic `Y_lm(θ, φ)`.
pub fn eval_harmonic(l: usize, m: i64, theta: f64, phi: f64) -> f64 {
    let table = legendre_table(l, theta);
    table[tri_index(l, m.unsigned_abs() as usize)][0] * trig_jet(m, phi)[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(9);
        for deg in 0..=17 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "degree {deg}");
        }
    }

    #[test]
    fn low_degree_closed_forms() {
        let (t, p) = (0.83_f64, 2.1_f64);
        let k1 = (3.0 / (4.0 * PI)).sqrt();
        assert!((eval_harmonic(1, 0, t, p) - k1 * t.cos()).abs() < 1e-15);
        assert!((eval_harmonic(1, 1, t, p) - k1 * t.sin() * p.cos()).abs() < 1e-15);
        assert!((eval_harmonic(1, -1, t, p) - k1 * t.sin() * p.sin()).abs() < 1e-15);
        let k20 = (5.0 / (16.0 * PI)).sqrt();
        let y20 = k20 * (3.0 * t.cos().powi(2) - 1.0);
        assert!((eval_harmonic(2, 0, t, p) - y20).abs() < 1e-15);
    }

    #[test]
    fn theta_derivatives_match_finite_differences() {
        let l_max = 12;
        let t = 0.9;
        let h = 1e-4;
        let a = legendre_table(l_max, t);
        let ap = legendre_table(l_max, t + h);
        let am = legendre_table(l_max, t - h);
        for i in 0..tri_len(l_max) {
            for k in 0..3 {
                let fd = (ap[i][k] - am[i][k]) / (2.0 * h);
                let scale = 1.0 + a[i][k + 1].abs();
                assert!((fd - a[i][k + 1]).abs() < 1e-5 * scale * 50.0, "{i} {k}");
            }
        }
    }
}
