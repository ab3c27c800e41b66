//! Real spherical harmonics on a Gauss–Legendre × equiangular grid.
//!
//! Coefficients are stored in `(ℓ, m)` lexicographic order, `m` running from
//! `-ℓ` to `ℓ`, at flat index `ℓ² + ℓ + m`. The Laplacian convention is
//! `Δ = div grad`, so `Δ Y_ℓm = -ℓ(ℓ+1) Y_ℓm`.

mod harmonics;
pub mod legendre;

pub use harmonics::{
    tensor_harmonic, vector_harmonic_jets, SpectralBases, TensorKind, VectorKind,
};
pub use legendre::eval_harmonic;

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use legendre::{gauss_legendre, legendre_table, tri_index, trig_jet};

/// Jet component layout for scalar fields, derivatives up to third order.
pub mod d {
    pub const V: usize = 0;
    pub const T: usize = 1;
    pub const P: usize = 2;
    pub const TT: usize = 3;
    pub const TP: usize = 4;
    pub const PP: usize = 5;
    pub const TTT: usize = 6;
    pub const TTP: usize = 7;
    pub const TPP: usize = 8;
    pub const PPP: usize = 9;
    /// `(θ-order, φ-order)` of each slot.
    pub const ORDERS: [(usize, usize); 10] = [
        (0, 0),
        (1, 0),
        (0, 1),
        (2, 0),
        (1, 1),
        (0, 2),
        (3, 0),
        (2, 1),
        (1, 2),
        (0, 3),
    ];
}

/// Value and partial derivatives (θ, φ) up to order three at one node.
pub type ScalarJet = [f64; 10];

#[inline]
pub fn coeff_index(l: usize, m: i64) -> usize {
    ((l * l + l) as i64 + m) as usize
}

#[inline]
pub fn num_coeffs(l_max: usize) -> usize {
    (l_max + 1) * (l_max + 1)
}

/// Inverse of [`coeff_index`].
pub fn degree_order(idx: usize) -> (usize, i64) {
    let l = (idx as f64).sqrt() as usize;
    let l = if (l + 1) * (l + 1) <= idx { l + 1 } else { l };
    let m = idx as i64 - (l * l + l) as i64;
    (l, m)
}

#[derive(Debug)]
pub struct SphereGrid {
    l_max: usize,
    nlon: usize,
    theta: Vec<f64>,
    lat_weights: Vec<f64>,
    phi: Vec<f64>,
    /// `legendre[i]` holds the table at latitude `i`.
    legendre: Vec<Vec<[f64; 4]>>,
    /// `trig[k * (2L+1) + (m + L)]` holds `T_m` jets at longitude `k`.
    trig: Vec<[f64; 4]>,
}

impl SphereGrid {
    pub fn new(l_max: usize) -> Result<Arc<Self>> {
        if l_max < 4 {
            return Err(Error::InvalidGrid(format!("L must be >= 4, got {l_max}")));
        }
        let nlat = l_max + 1;
        let nlon = 2 * l_max + 2;
        let (x, w) = gauss_legendre(nlat);
        let theta: Vec<f64> = x.iter().map(|x| x.acos()).collect();
        let phi: Vec<f64> = (0..nlon).map(|k| 2.0 * PI * k as f64 / nlon as f64).collect();
        let legendre = theta.iter().map(|&t| legendre_table(l_max, t)).collect();
        let nm = 2 * l_max + 1;
        let mut trig = vec![[0.0; 4]; nlon * nm];
        for (k, &p) in phi.iter().enumerate() {
            for mi in 0..nm {
                trig[k * nm + mi] = trig_jet(mi as i64 - l_max as i64, p);
            }
        }
        Ok(Arc::new(Self {
            l_max,
            nlon,
            theta,
            lat_weights: w,
            phi,
            legendre,
            trig,
        }))
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn nlat(&self) -> usize {
        self.theta.len()
    }

    pub fn nlon(&self) -> usize {
        self.nlon
    }

    pub fn num_nodes(&self) -> usize {
        self.nlat() * self.nlon
    }

    pub fn num_coeffs(&self) -> usize {
        num_coeffs(self.l_max)
    }

    /// `(θ, φ)` of node `n`.
    #[inline]
    pub fn node(&self, n: usize) -> (f64, f64) {
        (self.theta[n / self.nlon], self.phi[n % self.nlon])
    }

    /// Quadrature weight of node `n`; the weights sum to 4π.
    #[inline]
    pub fn weight(&self, n: usize) -> f64 {
        self.lat_weights[n / self.nlon] * 2.0 * PI / self.nlon as f64
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.num_nodes()).map(|n| self.weight(n)).collect()
    }

    /// Unit-sphere position of node `n`.
    pub fn position(&self, n: usize) -> [f64; 3] {
        let (t, p) = self.node(n);
        [t.sin() * p.cos(), t.sin() * p.sin(), t.cos()]
    }

    #[inline]
    fn trig_at(&self, k: usize, m: i64) -> &[f64; 4] {
        &self.trig[k * (2 * self.l_max + 1) + (m + self.l_max as i64) as usize]
    }

    /// Jet of the basis function `Y_lm` at node `n`.
    pub fn basis_jet(&self, idx: usize, n: usize) -> ScalarJet {
        let (l, m) = degree_order(idx);
        let p = &self.legendre[n / self.nlon][tri_index(l, m.unsigned_abs() as usize)];
        let t = self.trig_at(n % self.nlon, m);
        let mut out = [0.0; 10];
        for (slot, &(a, b)) in d::ORDERS.iter().enumerate() {
            out[slot] = p[a] * t[b];
        }
        out
    }

    #[inline]
    pub fn basis_value(&self, idx: usize, n: usize) -> f64 {
        let (l, m) = degree_order(idx);
        self.legendre[n / self.nlon][tri_index(l, m.unsigned_abs() as usize)][0]
            * self.trig_at(n % self.nlon, m)[0]
    }

    fn check_coeffs(&self, coeffs: &[f64]) -> Result<()> {
        if coeffs.len() != self.num_coeffs() {
            let input = (coeffs.len() as f64).sqrt() as usize;
            if input * input == coeffs.len() {
                return Err(Error::DegreeMismatch {
                    grid: self.l_max,
                    input: input.saturating_sub(1),
                });
            }
            return Err(Error::SizeMismatch {
                expected: self.num_coeffs(),
                got: coeffs.len(),
            });
        }
        Ok(())
    }

    /// Pointwise values of `Σ c_lm Y_lm` at every node.
    pub fn synthesize(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.synthesize_orders(coeffs, 1)?.into_iter().map(|j| j[0]).collect())
    }

    /// Values and derivatives up to third order at every node.
    pub fn synthesize_jets(&self, coeffs: &[f64]) -> Result<Vec<ScalarJet>> {
        self.synthesize_orders(coeffs, 10)
    }

    fn synthesize_orders(&self, coeffs: &[f64], slots: usize) -> Result<Vec<ScalarJet>> {
        self.check_coeffs(coeffs)?;
        let big_l = self.l_max as i64;
        let nm = (2 * big_l + 1) as usize;
        let mut out = vec![[0.0; 10]; self.num_nodes()];
        let mut acc = vec![[0.0; 4]; nm];
        for (i, table) in self.legendre.iter().enumerate() {
            for m in -big_l..=big_l {
                let mut a = [0.0; 4];
                let ma = m.unsigned_abs() as usize;
                for l in ma..=self.l_max {
                    let c = coeffs[coeff_index(l, m)];
                    if c != 0.0 {
                        let p = &table[tri_index(l, ma)];
                        for k in 0..4 {
                            a[k] += c * p[k];
                        }
                    }
                }
                acc[(m + big_l) as usize] = a;
            }
            for k in 0..self.nlon {
                let jet = &mut out[i * self.nlon + k];
                for (mi, a) in acc.iter().enumerate() {
                    let t = self.trig_at(k, mi as i64 - big_l);
                    for (slot, &(ta, pb)) in d::ORDERS.iter().enumerate().take(slots) {
                        jet[slot] += a[ta] * t[pb];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Quadrature projection of nodal samples onto every `Y_lm`, `ℓ ≤ L`.
    pub fn analyze(&self, samples: &[f64]) -> Result<Vec<f64>> {
        if samples.len() != self.num_nodes() {
            return Err(Error::SizeMismatch {
                expected: self.num_nodes(),
                got: samples.len(),
            });
        }
        let big_l = self.l_max as i64;
        let dphi = 2.0 * PI / self.nlon as f64;
        let mut coeffs = vec![0.0; self.num_coeffs()];
        for (i, table) in self.legendre.iter().enumerate() {
            let row = &samples[i * self.nlon..(i + 1) * self.nlon];
            let w = self.lat_weights[i] * dphi;
            for m in -big_l..=big_l {
                let s: f64 = row
                    .iter()
                    .enumerate()
                    .map(|(k, f)| f * self.trig_at(k, m)[0])
                    .sum();
                let ma = m.unsigned_abs() as usize;
                for l in ma..=self.l_max {
                    coeffs[coeff_index(l, m)] += w * s * table[tri_index(l, ma)][0];
                }
            }
        }
        Ok(coeffs)
    }

    /// Quadrature integral of nodal samples against the round area form.
    pub fn integrate(&self, samples: &[f64]) -> f64 {
        samples.iter().enumerate().map(|(n, f)| self.weight(n) * f).sum()
    }
}

/// Band-limited scalar field: coefficients with their nodal samples.
#[derive(Clone, Debug)]
pub struct HarmonicField {
    grid: Arc<SphereGrid>,
    coeffs: Vec<f64>,
    samples: Vec<f64>,
}

impl HarmonicField {
    pub fn from_coeffs(grid: &Arc<SphereGrid>, coeffs: Vec<f64>) -> Result<Self> {
        let samples = grid.synthesize(&coeffs)?;
        Ok(Self {
            grid: grid.clone(),
            coeffs,
            samples,
        })
    }

    /// Projects arbitrary nodal samples to degree `L`; the stored samples are
    /// those of the projection.
    pub fn from_samples(grid: &Arc<SphereGrid>, samples: &[f64]) -> Result<Self> {
        let coeffs = grid.analyze(samples)?;
        Self::from_coeffs(grid, coeffs)
    }

    pub fn from_fn(grid: &Arc<SphereGrid>, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let samples: Vec<f64> = (0..grid.num_nodes())
            .map(|n| {
                let (t, p) = grid.node(n);
                f(t, p)
            })
            .collect();
        Self::from_samples(grid, &samples)
    }

    pub fn zero(grid: &Arc<SphereGrid>) -> Self {
        Self {
            grid: grid.clone(),
            coeffs: vec![0.0; grid.num_coeffs()],
            samples: vec![0.0; grid.num_nodes()],
        }
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn coeff(&self, l: usize, m: i64) -> f64 {
        self.coeffs[coeff_index(l, m)]
    }

    pub fn set_coeffs(&mut self, coeffs: Vec<f64>) -> Result<()> {
        self.samples = self.grid.synthesize(&coeffs)?;
        self.coeffs = coeffs;
        Ok(())
    }

    pub fn jets(&self) -> Vec<ScalarJet> {
        self.grid
            .synthesize_jets(&self.coeffs)
            .expect("coefficients sized by construction")
    }

    /// `a·self + b·other`.
    pub fn lincomb(&self, a: f64, other: &Self, b: f64) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(x, y)| a * x + b * y)
            .collect();
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Self {
            grid: self.grid.clone(),
            coeffs,
            samples,
        }
    }

    /// Round-metric gradient `(∂θ f, ∂φ f / sin θ)` at each node.
    pub fn grad_sphere(&self) -> Vec<[f64; 2]> {
        self.jets()
            .iter()
            .enumerate()
            .map(|(n, j)| {
                let (t, _) = self.grid.node(n);
                [j[d::T], j[d::P] / t.sin()]
            })
            .collect()
    }

    /// Round Laplace–Beltrami operator, `Δ = div grad`.
    pub fn laplace_beltrami_round(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let l = degree_order(i).0 as f64;
                -l * (l + 1.0) * c
            })
            .collect();
        Self::from_coeffs(&self.grid, coeffs).expect("same grid")
    }

    /// `∫ f² dv₀` by quadrature.
    pub fn l2_norm_sq(&self) -> f64 {
        self.grid
            .integrate(&self.samples.iter().map(|f| f * f).collect::<Vec<_>>())
    }
}

/// Free-function forms of the transforms.
pub fn synthesize(coeffs: &[f64], grid: &SphereGrid) -> Result<Vec<f64>> {
    grid.synthesize(coeffs)
}

pub fn analyze(samples: &[f64], grid: &SphereGrid) -> Result<Vec<f64>> {
    grid.analyze(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_coeffs(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn rejects_small_degree() {
        assert!(matches!(SphereGrid::new(3), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn weights_sum_to_four_pi() {
        for l in [4, 9, 16, 32] {
            let g = SphereGrid::new(l).unwrap();
            let s: f64 = g.weights().iter().sum();
            assert!((s / (4.0 * PI) - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn index_roundtrip() {
        for idx in 0..200 {
            let (l, m) = degree_order(idx);
            assert!(m.unsigned_abs() as usize <= l);
            assert_eq!(coeff_index(l, m), idx);
        }
    }

    #[test]
    fn products_integrate_exactly() {
        let g = SphereGrid::new(6).unwrap();
        let nc = g.num_coeffs();
        for a in 0..nc {
            for b in 0..nc {
                let ip: f64 = (0..g.num_nodes())
                    .map(|n| g.weight(n) * g.basis_value(a, n) * g.basis_value(b, n))
                    .sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-12, "({a},{b}) -> {ip}");
            }
        }
    }

    #[test]
    fn constant_field() {
        let g = SphereGrid::new(8).unwrap();
        let mut c = vec![0.0; g.num_coeffs()];
        c[0] = (4.0 * PI).sqrt();
        let s = g.synthesize(&c).unwrap();
        assert!(s.iter().all(|v| (v - 1.0).abs() < 1e-13));
        let back = g.analyze(&vec![1.0; g.num_nodes()]).unwrap();
        assert!((back[0] - (4.0 * PI).sqrt()).abs() < 1e-13);
        assert!(back[1..].iter().all(|c| c.abs() < 1e-13));
    }

    #[test]
    fn cos_theta_is_y10() {
        let g = SphereGrid::new(8).unwrap();
        let mut c = vec![0.0; g.num_coeffs()];
        c[coeff_index(1, 0)] = 1.0;
        let s = g.synthesize(&c).unwrap();
        let k = (3.0 / (4.0 * PI)).sqrt();
        for n in 0..g.num_nodes() {
            assert!((s[n] - k * g.node(n).0.cos()).abs() < 1e-14);
        }
        // odd nlat: the middle latitude is the equator
        let eq = g.nlat() / 2 * g.nlon();
        assert!(s[eq].abs() < 1e-12);

        let f = HarmonicField::from_fn(&g, |t, _| t.cos()).unwrap();
        for (i, v) in f.coeffs().iter().enumerate() {
            let expect = if i == coeff_index(1, 0) { 1.0 / k } else { 0.0 };
            assert!((v - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn cos_squared_has_only_l0_and_l2() {
        // cos²θ = 1/3 + (2/3) P₂(cos θ)
        let g = SphereGrid::new(8).unwrap();
        let f = HarmonicField::from_fn(&g, |t, _| t.cos().powi(2)).unwrap();
        let c00 = (4.0 * PI).sqrt() / 3.0;
        let c20 = 2.0 / 3.0 * (4.0 * PI / 5.0).sqrt();
        for (i, v) in f.coeffs().iter().enumerate() {
            let expect = match i {
                0 => c00,
                6 => c20,
                _ => 0.0,
            };
            assert!((v - expect).abs() < 1e-13, "{i}: {v}");
        }
    }

    #[test]
    fn round_trip_l16() {
        let g = SphereGrid::new(16).unwrap();
        let c = random_coeffs(g.num_coeffs(), 7);
        let back = g.analyze(&g.synthesize(&c).unwrap()).unwrap();
        let err = c.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn degree_mismatch_is_reported() {
        let g = SphereGrid::new(8).unwrap();
        let err = g.synthesize(&vec![0.0; 100]).unwrap_err();
        assert!(matches!(err, Error::DegreeMismatch { grid: 8, input: 9 }));
        assert!(matches!(
            g.analyze(&[1.0; 3]).unwrap_err(),
            Error::SizeMismatch { .. }
        ));
    }

    #[test]
    fn gradient_of_cos_theta() {
        let g = SphereGrid::new(12).unwrap();
        let f = HarmonicField::from_fn(&g, |t, _| t.cos()).unwrap();
        for (n, gr) in f.grad_sphere().iter().enumerate() {
            let mag = (gr[0] * gr[0] + gr[1] * gr[1]).sqrt();
            assert!((mag - g.node(n).0.sin().abs()).abs() < 1e-10);
        }
        let c = HarmonicField::from_fn(&g, |_, _| 3.0).unwrap();
        assert!(c.grad_sphere().iter().all(|v| v[0].abs() < 1e-11 && v[1].abs() < 1e-11));
    }

    #[test]
    fn gradient_of_y21_against_finite_differences() {
        let g = SphereGrid::new(10).unwrap();
        let mut c = vec![0.0; g.num_coeffs()];
        c[coeff_index(2, 1)] = 1.0;
        let f = HarmonicField::from_coeffs(&g, c).unwrap();
        let h = 1e-5;
        for (n, gr) in f.grad_sphere().iter().enumerate() {
            let (t, p) = g.node(n);
            let dt = (eval_harmonic(2, 1, t + h, p) - eval_harmonic(2, 1, t - h, p)) / (2.0 * h);
            let dp = (eval_harmonic(2, 1, t, p + h) - eval_harmonic(2, 1, t, p - h)) / (2.0 * h);
            assert!((gr[0] - dt).abs() < 1e-6);
            assert!((gr[1] - dp / t.sin()).abs() < 1e-6);
        }
    }

    #[test]
    fn laplacian_eigenvalues() {
        let g = SphereGrid::new(8).unwrap();
        for (l, m) in [(0usize, 0i64), (1, -1), (1, 0), (1, 1), (3, 2), (3, -3)] {
            let mut c = vec![0.0; g.num_coeffs()];
            c[coeff_index(l, m)] = 1.0;
            let f = HarmonicField::from_coeffs(&g, c).unwrap();
            let lap = f.laplace_beltrami_round();
            let lam = -((l * (l + 1)) as f64);
            for (a, b) in lap.samples().iter().zip(f.samples()) {
                assert!((a - lam * b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn parseval_and_green_identity() {
        let g = SphereGrid::new(12).unwrap();
        let c = random_coeffs(g.num_coeffs(), 11);
        let f = HarmonicField::from_coeffs(&g, c.clone()).unwrap();
        let sum_sq: f64 = c.iter().map(|c| c * c).sum();
        assert!((f.l2_norm_sq() - sum_sq).abs() < 1e-11 * sum_sq.max(1.0));

        let grad_sq: Vec<f64> = f.grad_sphere().iter().map(|v| v[0] * v[0] + v[1] * v[1]).collect();
        let lhs = g.integrate(&grad_sq);
        let lap = f.laplace_beltrami_round();
        let rhs: f64 = -g.integrate(
            &f.samples().iter().zip(lap.samples()).map(|(a, b)| a * b).collect::<Vec<_>>(),
        );
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn third_derivatives_against_finite_differences() {
        let g = SphereGrid::new(8).unwrap();
        let c = random_coeffs(g.num_coeffs(), 3);
        let jets = g.synthesize_jets(&c).unwrap();
        let eval = |t: f64, p: f64| -> f64 {
            (0..c.len())
                .map(|i| {
                    let (l, m) = degree_order(i);
                    c[i] * eval_harmonic(l, m, t, p)
                })
                .sum()
        };
        let h = 1e-3;
        for n in [5, 40, 77] {
            let (t, p) = g.node(n);
            let tt = |t: f64, p: f64| {
                (eval(t + h, p) - 2.0 * eval(t, p) + eval(t - h, p)) / (h * h)
            };
            let ttt = (tt(t + h, p) - tt(t - h, p)) / (2.0 * h);
            let ttp = (tt(t, p + h) - tt(t, p - h)) / (2.0 * h);
            assert!((jets[n][d::TTT] - ttt).abs() < 1e-3 * (1.0 + ttt.abs()));
            assert!((jets[n][d::TTP] - ttp).abs() < 1e-3 * (1.0 + ttp.abs()));
        }
    }

    proptest::proptest! {
        #[test]
        fn transforms_are_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let g = SphereGrid::new(6).unwrap();
            let x = random_coeffs(g.num_coeffs(), seed);
            let y = random_coeffs(g.num_coeffs(), seed + 1);
            let sx = g.synthesize(&x).unwrap();
            let sy = g.synthesize(&y).unwrap();
            let comb: Vec<f64> = x.iter().zip(&y).map(|(x, y)| a * x + b * y).collect();
            let sc = g.synthesize(&comb).unwrap();
            for n in 0..sc.len() {
                proptest::prop_assert!((sc[n] - a * sx[n] - b * sy[n]).abs() < 1e-12);
            }
        }
    }
}
