//! Extrinsic and intrinsic geometry of an immersion `F: S² → ℝ³`.
//!
//! All quantities are expressed in the coordinate frame `(∂θ, ∂φ)` of the
//! parameter sphere. The normal is `N = F_θ × F_φ / |·|`, which points
//! outward on the standard sphere, and the second fundamental form is
//! `A_ij = ⟨∂_i F, ∂_j N⟩ = -⟨∂²_ij F, N⟩`, so the unit sphere has `A = γ`,
//! `H = tr(γ⁻¹A) = 2` and `K = 1`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{cross, dot, Jet, Scalar, Vec3};
use crate::spectral::{coeff_index, d, HarmonicField, SphereGrid};

/// Minimum admissible `det γ` at any node.
pub const MIN_METRIC_DET: f64 = 1e-10;

/// Derivatives of `F` at one node up to third order, indexed like
/// [`crate::spectral::d`].
pub type FJet = [Vec3<f64>; 10];

/// First and second derivatives of `F` at one node, over any scalar type.
#[derive(Clone, Copy, Debug)]
pub struct NodeJets<T> {
    pub ft: Vec3<T>,
    pub fp: Vec3<T>,
    pub ftt: Vec3<T>,
    pub ftp: Vec3<T>,
    pub fpp: Vec3<T>,
}

impl NodeJets<f64> {
    pub fn from_fjet(j: &FJet) -> Self {
        Self {
            ft: j[d::T],
            fp: j[d::P],
            ftt: j[d::TT],
            ftp: j[d::TP],
            fpp: j[d::PP],
        }
    }

    /// `self + s·other`, slot by slot.
    pub fn perturbed(&self, other: &Self, s: f64) -> Self {
        let f = |a: &Vec3<f64>, b: &Vec3<f64>| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]];
        Self {
            ft: f(&self.ft, &other.ft),
            fp: f(&self.fp, &other.fp),
            ftt: f(&self.ftt, &other.ftt),
            ftp: f(&self.ftp, &other.ftp),
            fpp: f(&self.fpp, &other.fpp),
        }
    }

    pub fn zero() -> Self {
        Self {
            ft: [0.0; 3],
            fp: [0.0; 3],
            ftt: [0.0; 3],
            ftp: [0.0; 3],
            fpp: [0.0; 3],
        }
    }
}

/// Pointwise geometry at one node.
#[derive(Clone, Copy, Debug)]
pub struct PointGeometry<T> {
    /// `(γ_θθ, γ_θφ, γ_φφ)`
    pub gamma: [T; 3],
    /// `∂θ γ` and `∂φ γ`, same layout.
    pub dgamma: [[T; 3]; 2],
    pub det: T,
    pub normal: Vec3<T>,
    /// `(A_θθ, A_θφ, A_φφ)`
    pub second: [T; 3],
    pub mean: T,
    pub gauss: T,
}

pub fn point_geometry<T: Scalar>(j: &NodeJets<T>) -> PointGeometry<T> {
    let two = T::cst(2.0);
    let e = dot(&j.ft, &j.ft);
    let f = dot(&j.ft, &j.fp);
    let g = dot(&j.fp, &j.fp);
    let dgamma = [
        [
            two * dot(&j.ftt, &j.ft),
            dot(&j.ftt, &j.fp) + dot(&j.ft, &j.ftp),
            two * dot(&j.ftp, &j.fp),
        ],
        [
            two * dot(&j.ftp, &j.ft),
            dot(&j.ftp, &j.fp) + dot(&j.ft, &j.fpp),
            two * dot(&j.fpp, &j.fp),
        ],
    ];
    let n = cross(&j.ft, &j.fp);
    let det = e * g - f * f;
    let inv = T::cst(1.0) / det.sqrt();
    let normal = [n[0] * inv, n[1] * inv, n[2] * inv];
    let second = [
        -dot(&j.ftt, &normal),
        -dot(&j.ftp, &normal),
        -dot(&j.fpp, &normal),
    ];
    let mean = (g * second[0] - two * f * second[1] + e * second[2]) / det;
    let gauss = (second[0] * second[2] - second[1] * second[1]) / det;
    PointGeometry {
        gamma: [e, f, g],
        dgamma,
        det,
        normal,
        second,
        mean,
        gauss,
    }
}

/// Inverse of a symmetric 2×2 stored as `(a, b, c)`.
#[inline]
pub fn sym_inverse<T: Scalar>(m: &[T; 3]) -> [T; 3] {
    let det = m[0] * m[2] - m[1] * m[1];
    [m[2] / det, -m[1] / det, m[0] / det]
}

#[inline]
fn sym_get<T: Copy>(m: &[T; 3], i: usize, j: usize) -> T {
    m[i + j]
}

/// Christoffel symbols `Γ^k_ij` from the metric and its first derivatives.
pub fn christoffel<T: Scalar>(g: &[T; 3], dg: &[[T; 3]; 2]) -> [[[T; 2]; 2]; 2] {
    let gi = sym_inverse(g);
    let half = T::cst(0.5);
    let mut out = [[[T::cst(0.0); 2]; 2]; 2];
    for k in 0..2 {
        for i in 0..2 {
            for j in 0..2 {
                let mut s = T::cst(0.0);
                for l in 0..2 {
                    let term = sym_get(&dg[i], l, j) + sym_get(&dg[j], i, l) - sym_get(&dg[l], i, j);
                    s += sym_get(&gi, k, l) * term;
                }
                out[k][i][j] = half * s;
            }
        }
    }
    out
}

/// Covariant Hessian `u_ij - Γ^k_ij u_k` as `(θθ, θφ, φφ)`.
pub fn covariant_hessian<T: Scalar>(
    gamma: &[[[T; 2]; 2]; 2],
    du: [T; 2],
    ddu: [T; 3],
) -> [T; 3] {
    let h = |i: usize, j: usize| {
        ddu[i + j] - gamma[0][i][j] * du[0] - gamma[1][i][j] * du[1]
    };
    [h(0, 0), h(0, 1), h(1, 1)]
}

/// `Δ_γ u = γ^ij (u_ij - Γ^k_ij u_k)`.
pub fn laplacian<T: Scalar>(g: &[T; 3], dg: &[[T; 3]; 2], du: [T; 2], ddu: [T; 3]) -> T {
    let gi = sym_inverse(g);
    let gam = christoffel(g, dg);
    let h = covariant_hessian(&gam, du, ddu);
    gi[0] * h[0] + T::cst(2.0) * gi[1] * h[1] + gi[2] * h[2]
}

/// Metric components with derivatives up to second order at one node.
#[derive(Clone, Copy, Debug)]
pub struct MetricJet<T> {
    pub g: [T; 3],
    /// `∂θ g`, `∂φ g`
    pub d1: [[T; 3]; 2],
    /// `∂θθ g`, `∂θφ g`, `∂φφ g`
    pub d2: [[T; 3]; 3],
}

impl MetricJet<f64> {
    pub fn from_jets(e: Jet, f: Jet, g: Jet) -> Self {
        Self {
            g: [e.v, f.v, g.v],
            d1: [[e.d[0], f.d[0], g.d[0]], [e.d[1], f.d[1], g.d[1]]],
            d2: [
                [e.h[0], f.h[0], g.h[0]],
                [e.h[1], f.h[1], g.h[1]],
                [e.h[2], f.h[2], g.h[2]],
            ],
        }
    }
}

/// Gauss curvature from the metric alone (Brioschi formula), `u = θ`, `v = φ`.
pub fn brioschi<T: Scalar>(m: &MetricJet<T>) -> T {
    let half = T::cst(0.5);
    let [e, f, g] = m.g;
    let (e_u, f_u, g_u) = (m.d1[0][0], m.d1[0][1], m.d1[0][2]);
    let (e_v, f_v, g_v) = (m.d1[1][0], m.d1[1][1], m.d1[1][2]);
    let e_vv = m.d2[2][0];
    let f_uv = m.d2[1][1];
    let g_uu = m.d2[0][2];
    let det3 = |a: [[T; 3]; 3]| {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    let m1 = [
        [-half * e_vv + f_uv - half * g_uu, half * e_u, f_u - half * e_v],
        [f_v - half * g_u, e, f],
        [half * g_v, f, g],
    ];
    let zero = T::cst(0.0);
    let m2 = [
        [zero, half * e_v, half * g_u],
        [half * e_v, e, f],
        [half * g_u, f, g],
    ];
    let det = e * g - f * f;
    (det3(m1) - det3(m2)) / (det * det)
}

/// A Riemannian metric on the parameter sphere, sampled as jets at the nodes.
#[derive(Clone, Debug)]
pub struct MetricField {
    grid: Arc<SphereGrid>,
    jets: Vec<MetricJet<f64>>,
}

fn sin_cos_jets(theta: f64, phi: f64) -> (Jet, Jet, Jet, Jet) {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    (
        Jet::new(st, [ct, 0.0], [-st, 0.0, 0.0]),
        Jet::new(ct, [-st, 0.0], [-ct, 0.0, 0.0]),
        Jet::new(sp, [0.0, cp], [0.0, 0.0, -sp]),
        Jet::new(cp, [0.0, -sp], [0.0, 0.0, -cp]),
    )
}

/// Coordinate vectors `∂θ x`, `∂φ x` of the unit sphere as jets.
fn round_frame_jets(theta: f64, phi: f64) -> [[Jet; 3]; 2] {
    let (st, ct, sp, cp) = sin_cos_jets(theta, phi);
    let zero = Jet::cst(0.0);
    [[ct * cp, ct * sp, -st], [-(st * sp), st * cp, zero]]
}

impl MetricField {
    pub fn new(grid: &Arc<SphereGrid>, jets: Vec<MetricJet<f64>>) -> Result<Self> {
        if jets.len() != grid.num_nodes() {
            return Err(Error::SizeMismatch {
                expected: grid.num_nodes(),
                got: jets.len(),
            });
        }
        for (n, j) in jets.iter().enumerate() {
            if !(j.g[0] > 0.0 && j.g[0] * j.g[2] - j.g[1] * j.g[1] > 0.0) {
                return Err(Error::NotSpd { node: n });
            }
        }
        Ok(Self {
            grid: grid.clone(),
            jets,
        })
    }

    /// Induced metric of an immersion with derivatives taken exactly from its
    /// band-limited components.
    pub fn from_immersion(f: &ImmersionMap) -> Self {
        let jets = f
            .fjets()
            .iter()
            .map(|fj| {
                let ft = fj.map_d(d::T, [d::TT, d::TP], [d::TTT, d::TTP, d::TPP]);
                let fp = fj.map_d(d::P, [d::TP, d::PP], [d::TTP, d::TPP, d::PPP]);
                MetricJet::from_jets(jdot(&ft, &ft), jdot(&ft, &fp), jdot(&fp, &fp))
            })
            .collect();
        Self {
            grid: f.grid.clone(),
            jets,
        }
    }

    /// Induced metric reconstructed from its ambient representation
    /// `Γ = Σ_μ ∇F^μ ⊗ ∇F^μ`, whose six Cartesian components are smooth
    /// functions on the sphere. Each component is projected to degree `L` and
    /// differentiated spectrally, so the result converges with `L` rather
    /// than being exact.
    pub fn from_ambient_projection(f: &ImmersionMap) -> Result<Self> {
        let grid = &f.grid;
        let fj = f.fjets();
        let nn = grid.num_nodes();
        let mut comps = vec![vec![0.0; nn]; 6];
        const PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
        for n in 0..nn {
            let (t, p) = grid.node(n);
            let (st, ct) = t.sin_cos();
            let (sp, cp) = p.sin_cos();
            let et = [ct * cp, ct * sp, -st];
            let ep = [-st * sp, st * cp, 0.0];
            let mut grads = [[0.0; 3]; 3];
            for mu in 0..3 {
                let a = fj[n][d::T][mu];
                let b = fj[n][d::P][mu] / (st * st);
                for c in 0..3 {
                    grads[mu][c] = a * et[c] + b * ep[c];
                }
            }
            for (k, &(a, b)) in PAIRS.iter().enumerate() {
                comps[k][n] = (0..3).map(|mu| grads[mu][a] * grads[mu][b]).sum();
            }
        }
        let fields: Vec<Vec<crate::spectral::ScalarJet>> = comps
            .iter()
            .map(|c| HarmonicField::from_samples(grid, c).map(|h| h.jets()))
            .collect::<Result<_>>()?;
        let jets = (0..nn)
            .map(|n| {
                let (t, p) = grid.node(n);
                let frame = round_frame_jets(t, p);
                let mut big = [[Jet::cst(0.0); 3]; 3];
                for (k, &(a, b)) in PAIRS.iter().enumerate() {
                    let s = &fields[k][n];
                    let j = Jet::new(s[d::V], [s[d::T], s[d::P]], [s[d::TT], s[d::TP], s[d::PP]]);
                    big[a][b] = j;
                    big[b][a] = j;
                }
                let form = |u: &[Jet; 3], v: &[Jet; 3]| {
                    let mut acc = Jet::cst(0.0);
                    for a in 0..3 {
                        for b in 0..3 {
                            acc += u[a] * big[a][b] * v[b];
                        }
                    }
                    acc
                };
                MetricJet::from_jets(
                    form(&frame[0], &frame[0]),
                    form(&frame[0], &frame[1]),
                    form(&frame[1], &frame[1]),
                )
            })
            .collect();
        Self::new(grid, jets)
    }

    /// The metric `e^{2u}·round`.
    pub fn conformal_to_round(u: &HarmonicField) -> Result<Self> {
        let grid = u.grid();
        let jets = u
            .jets()
            .iter()
            .enumerate()
            .map(|(n, s)| {
                let (t, _) = grid.node(n);
                let uj = Jet::new(s[d::V], [s[d::T], s[d::P]], [s[d::TT], s[d::TP], s[d::PP]]);
                let e = (uj * Jet::cst(2.0)).exp();
                let st = sin_cos_jets(t, 0.0).0;
                MetricJet::from_jets(e, Jet::cst(0.0), e * st * st)
            })
            .collect();
        Self::new(grid, jets)
    }

    /// Round unit metric `diag(1, sin²θ)`.
    pub fn round(grid: &Arc<SphereGrid>) -> Self {
        Self::conformal_to_round(&HarmonicField::zero(grid)).expect("round metric is SPD")
    }

    pub fn scaled(&self, k: f64) -> Self {
        let jets = self
            .jets
            .iter()
            .map(|j| MetricJet {
                g: j.g.map(|v| k * v),
                d1: j.d1.map(|r| r.map(|v| k * v)),
                d2: j.d2.map(|r| r.map(|v| k * v)),
            })
            .collect();
        Self {
            grid: self.grid.clone(),
            jets,
        }
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    pub fn jets(&self) -> &[MetricJet<f64>] {
        &self.jets
    }

    pub fn components(&self) -> Vec<[f64; 3]> {
        self.jets.iter().map(|j| j.g).collect()
    }

    pub fn gauss_curvature(&self) -> Vec<f64> {
        self.jets.iter().map(brioschi).collect()
    }

    /// `Δ_γ u` at every node, `u` given as scalar jets.
    pub fn laplacian(&self, u: &[crate::spectral::ScalarJet]) -> Vec<f64> {
        self.jets
            .iter()
            .zip(u)
            .map(|(m, s)| laplacian(&m.g, &m.d1, [s[d::T], s[d::P]], [s[d::TT], s[d::TP], s[d::PP]]))
            .collect()
    }

    /// `∫ dv_γ` by quadrature.
    pub fn area(&self) -> f64 {
        (0..self.grid.num_nodes())
            .map(|n| {
                let g = &self.jets[n].g;
                let s = self.grid.node(n).0.sin();
                self.grid.weight(n) * (g[0] * g[2] - g[1] * g[1]).sqrt() / s
            })
            .sum()
    }
}

trait FJetExt {
    fn map_d(&self, v: usize, d1: [usize; 2], d2: [usize; 3]) -> [Jet; 3];
}

impl FJetExt for FJet {
    fn map_d(&self, v: usize, d1: [usize; 2], d2: [usize; 3]) -> [Jet; 3] {
        std::array::from_fn(|c| {
            Jet::new(
                self[v][c],
                [self[d1[0]][c], self[d1[1]][c]],
                [self[d2[0]][c], self[d2[1]][c], self[d2[2]][c]],
            )
        })
    }
}

/// Jets of `∂θ F` and `∂φ F` at one node.
pub fn tangent_jets(fj: &FJet) -> [[Jet; 3]; 2] {
    [
        fj.map_d(d::T, [d::TT, d::TP], [d::TTT, d::TTP, d::TPP]),
        fj.map_d(d::P, [d::TP, d::PP], [d::TTP, d::TPP, d::PPP]),
    ]
}

fn jdot(a: &[Jet; 3], b: &[Jet; 3]) -> Jet {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// An immersion given by three band-limited coordinate fields.
#[derive(Clone, Debug)]
pub struct ImmersionMap {
    grid: Arc<SphereGrid>,
    components: [HarmonicField; 3],
    fjets: Vec<FJet>,
}

impl ImmersionMap {
    /// Builds the immersion and checks `det γ ≥ MIN_METRIC_DET` at every node.
    pub fn new(components: [HarmonicField; 3]) -> Result<Self> {
        let grid = components[0].grid().clone();
        if components.iter().any(|c| c.grid().l_max() != grid.l_max()) {
            return Err(Error::InvalidInput("components live on different grids".into()));
        }
        let jets: Vec<_> = components.iter().map(|c| c.jets()).collect();
        let fjets: Vec<FJet> = (0..grid.num_nodes())
            .map(|n| std::array::from_fn(|k| [jets[0][n][k], jets[1][n][k], jets[2][n][k]]))
            .collect();
        for (n, fj) in fjets.iter().enumerate() {
            let c = cross(&fj[d::T], &fj[d::P]);
            let det = dot(&c, &c);
            if !(det >= MIN_METRIC_DET) {
                return Err(Error::Degenerate { node: n, det });
            }
        }
        Ok(Self {
            grid,
            components,
            fjets,
        })
    }

    pub fn from_coeffs(grid: &Arc<SphereGrid>, coeffs: [Vec<f64>; 3]) -> Result<Self> {
        let [x, y, z] = coeffs;
        Self::new([
            HarmonicField::from_coeffs(grid, x)?,
            HarmonicField::from_coeffs(grid, y)?,
            HarmonicField::from_coeffs(grid, z)?,
        ])
    }

    /// Projects a pointwise map `(θ, φ) ↦ ℝ³` to degree `L`.
    pub fn from_fn(grid: &Arc<SphereGrid>, f: impl Fn(f64, f64) -> [f64; 3]) -> Result<Self> {
        let pts: Vec<[f64; 3]> = (0..grid.num_nodes())
            .map(|n| {
                let (t, p) = grid.node(n);
                f(t, p)
            })
            .collect();
        let comp = |k: usize| {
            HarmonicField::from_samples(grid, &pts.iter().map(|p| p[k]).collect::<Vec<_>>())
        };
        Self::new([comp(0)?, comp(1)?, comp(2)?])
    }

    pub fn sphere(grid: &Arc<SphereGrid>, r: f64) -> Result<Self> {
        let k = r * (4.0 * std::f64::consts::PI / 3.0).sqrt();
        let nc = grid.num_coeffs();
        let mut c = [vec![0.0; nc], vec![0.0; nc], vec![0.0; nc]];
        c[0][coeff_index(1, 1)] = k;
        c[1][coeff_index(1, -1)] = k;
        c[2][coeff_index(1, 0)] = k;
        Self::from_coeffs(grid, c)
    }

    /// Ellipsoid with semi-axes `(a, b, c)` in the central-projection
    /// parametrization `F(x̂) = x̂ / √(x²/a² + y²/b² + z²/c²)`.
    pub fn ellipsoid(grid: &Arc<SphereGrid>, a: f64, b: f64, c: f64) -> Result<Self> {
        Self::from_fn(grid, |t, p| {
            let x = unit(t, p);
            let r = ellipsoid_radius(&x, a, b, c);
            [r * x[0], r * x[1], r * x[2]]
        })
    }

    /// Radial graph `r·(1 + Σ amp·Y_lm)·x̂`.
    pub fn perturbed_sphere(
        grid: &Arc<SphereGrid>,
        r: f64,
        terms: &[(usize, i64, f64)],
    ) -> Result<Self> {
        Self::from_fn(grid, |t, p| {
            let x = unit(t, p);
            let bump: f64 = terms
                .iter()
                .map(|&(l, m, amp)| amp * crate::spectral::eval_harmonic(l, m, t, p))
                .sum();
            let k = r * (1.0 + bump);
            [k * x[0], k * x[1], k * x[2]]
        })
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }

    pub fn components(&self) -> &[HarmonicField; 3] {
        &self.components
    }

    pub fn coeffs(&self) -> [Vec<f64>; 3] {
        std::array::from_fn(|k| self.components[k].coeffs().to_vec())
    }

    /// Coefficients of x, y, z concatenated.
    pub fn coeffs_flat(&self) -> Vec<f64> {
        self.components.iter().flat_map(|c| c.coeffs().iter().copied()).collect()
    }

    pub fn from_coeffs_flat(grid: &Arc<SphereGrid>, flat: &[f64]) -> Result<Self> {
        let nc = grid.num_coeffs();
        if flat.len() != 3 * nc {
            return Err(Error::SizeMismatch {
                expected: 3 * nc,
                got: flat.len(),
            });
        }
        Self::from_coeffs(grid, std::array::from_fn(|k| flat[k * nc..(k + 1) * nc].to_vec()))
    }

    pub fn fjets(&self) -> &[FJet] {
        &self.fjets
    }

    pub fn node_jets(&self) -> Vec<NodeJets<f64>> {
        self.fjets.iter().map(NodeJets::from_fjet).collect()
    }

    pub fn positions(&self) -> Vec<Vec3<f64>> {
        self.fjets.iter().map(|j| j[d::V]).collect()
    }

    /// `R·F + t`.
    pub fn rigid_motion(&self, rot: &[[f64; 3]; 3], shift: Vec3<f64>) -> Result<Self> {
        let c = self.coeffs();
        let nc = self.grid.num_coeffs();
        let y00 = (4.0 * std::f64::consts::PI).sqrt();
        let out: [Vec<f64>; 3] = std::array::from_fn(|a| {
            let mut v: Vec<f64> = (0..nc)
                .map(|i| (0..3).map(|b| rot[a][b] * c[b][i]).sum())
                .collect();
            v[0] += shift[a] * y00;
            v
        });
        Self::from_coeffs(&self.grid, out)
    }

    pub fn scaled(&self, k: f64) -> Result<Self> {
        Self::from_coeffs(&self.grid, self.coeffs().map(|v| v.iter().map(|x| k * x).collect()))
    }

    pub fn geometry(&self) -> SurfaceGeometry {
        let pts: Vec<PointGeometry<f64>> = self
            .fjets
            .par_iter()
            .map(|fj| point_geometry(&NodeJets::from_fjet(fj)))
            .collect();
        SurfaceGeometry::from_points(&pts)
    }

    pub fn min_metric_det(&self) -> f64 {
        self.fjets
            .iter()
            .map(|fj| {
                let c = cross(&fj[d::T], &fj[d::P]);
                dot(&c, &c)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn unit(t: f64, p: f64) -> Vec3<f64> {
    [t.sin() * p.cos(), t.sin() * p.sin(), t.cos()]
}

pub fn ellipsoid_radius(x: &Vec3<f64>, a: f64, b: f64, c: f64) -> f64 {
    1.0 / (x[0] * x[0] / (a * a) + x[1] * x[1] / (b * b) + x[2] * x[2] / (c * c)).sqrt()
}

/// Per-node first and second fundamental forms and curvatures.
#[derive(Clone, Debug)]
pub struct SurfaceGeometry {
    pub gamma: Vec<[f64; 3]>,
    pub normal: Vec<Vec3<f64>>,
    pub second: Vec<[f64; 3]>,
    /// `γ⁻¹A` as a full 2×2 matrix.
    pub shape: Vec<[[f64; 2]; 2]>,
    pub mean: Vec<f64>,
    pub gauss: Vec<f64>,
    /// `τ = A - Hγ`
    pub tau: Vec<[f64; 3]>,
}

impl SurfaceGeometry {
    fn from_points(pts: &[PointGeometry<f64>]) -> Self {
        let mut out = Self {
            gamma: Vec::with_capacity(pts.len()),
            normal: Vec::with_capacity(pts.len()),
            second: Vec::with_capacity(pts.len()),
            shape: Vec::with_capacity(pts.len()),
            mean: Vec::with_capacity(pts.len()),
            gauss: Vec::with_capacity(pts.len()),
            tau: Vec::with_capacity(pts.len()),
        };
        for p in pts {
            let gi = sym_inverse(&p.gamma);
            let a = &p.second;
            let shape = [
                [gi[0] * a[0] + gi[1] * a[1], gi[0] * a[1] + gi[1] * a[2]],
                [gi[1] * a[0] + gi[2] * a[1], gi[1] * a[1] + gi[2] * a[2]],
            ];
            let h = shape[0][0] + shape[1][1];
            out.gamma.push(p.gamma);
            out.normal.push(p.normal);
            out.second.push(p.second);
            out.shape.push(shape);
            out.mean.push(h);
            out.gauss.push(shape[0][0] * shape[1][1] - shape[0][1] * shape[1][0]);
            out.tau.push([a[0] - h * p.gamma[0], a[1] - h * p.gamma[1], a[2] - h * p.gamma[2]]);
        }
        out
    }

    /// `|A|²_γ` at each node.
    pub fn second_form_norm_sq(&self) -> Vec<f64> {
        self.shape
            .iter()
            .map(|s| s[0][0] * s[0][0] + 2.0 * s[0][1] * s[1][0] + s[1][1] * s[1][1])
            .collect()
    }
}

/// Induced metric per node.
pub fn induced_metric(f: &ImmersionMap) -> Vec<[f64; 3]> {
    f.geometry().gamma
}

/// Normal, second fundamental form, shape operator and curvatures.
pub fn second_form(f: &ImmersionMap) -> SurfaceGeometry {
    f.geometry()
}

/// Largest nodal discrepancy between the intrinsic curvature of the metric
/// (Brioschi formula on the spectrally projected metric) and `det(γ⁻¹A)`.
pub fn gauss_check(f: &ImmersionMap) -> Result<f64> {
    let intrinsic = MetricField::from_ambient_projection(f)?.gauss_curvature();
    let extrinsic = f.geometry().gauss;
    Ok(intrinsic
        .iter()
        .zip(&extrinsic)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Largest nodal residual of `det D²_γ u = K det γ (1 - |∇_γ u|²)` for
/// `u = F·e`, with the metric, Christoffel symbols and `K` taken from the
/// spectrally projected metric.
pub fn darboux_residual(f: &ImmersionMap, e: Vec3<f64>) -> Result<f64> {
    let norm = dot(&e, &e).sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!("|e| = {norm}, expected 1")));
    }
    let grid = f.grid();
    let coeffs: Vec<f64> = (0..grid.num_coeffs())
        .map(|i| (0..3).map(|k| e[k] * f.components()[k].coeffs()[i]).sum())
        .collect();
    let u = HarmonicField::from_coeffs(grid, coeffs)?.jets();
    let metric = MetricField::from_ambient_projection(f)?;
    let res = metric
        .jets()
        .iter()
        .zip(&u)
        .map(|(m, s)| {
            let gam = christoffel(&m.g, &m.d1);
            let du = [s[d::T], s[d::P]];
            let hess = covariant_hessian(&gam, du, [s[d::TT], s[d::TP], s[d::PP]]);
            let gi = sym_inverse(&m.g);
            let grad_sq = gi[0] * du[0] * du[0] + 2.0 * gi[1] * du[0] * du[1] + gi[2] * du[1] * du[1];
            let det_g = m.g[0] * m.g[2] - m.g[1] * m.g[1];
            let lhs = hess[0] * hess[2] - hess[1] * hess[1];
            let rhs = brioschi(m) * det_g * (1.0 - grad_sq);
            (lhs - rhs).abs()
        })
        .fold(0.0, f64::max);
    Ok(res)
}
