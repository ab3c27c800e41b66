//! The blended map `Φ_ε(F) = ([γ], (1-ε)λ² + εH)`, its exact discrete
//! linearization and its principal symbol.
//!
//! The discrete map depends on `F` only through the nodal jets of order at
//! most two, so linearizations are computed by pushing a dual direction
//! through the same pointwise formulas. The class slot is represented by the
//! trace-free part of `γ̂ / √det γ̂`, where `γ̂` is `γ` written in the round
//! orthonormal frame `(∂θ, ∂φ / sin θ)`, projected onto trace-free tensor
//! harmonics. The blended slot is projected onto scalar harmonics.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    laplacian, point_geometry, sym_inverse, tangent_jets, FJet, ImmersionMap, NodeJets,
    PointGeometry,
};
use crate::scalar::{Dual, Jet, Scalar, Vec3};
use crate::spectral::{
    coeff_index, d, degree_order, vector_harmonic_jets, HarmonicField,
    SpectralBases, SphereGrid, TensorKind, VectorKind,
};
use crate::uniformization::{
    conformal_class, liouville_residual, solve_liouville, ConformalData, LiouvilleLinearization,
    LiouvilleOptions, LiouvilleProblem,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// `(1-ε)λ² + εH`
    Additive,
    /// `λ^{2(1-ε)} H^{-ε}`
    Multiplicative,
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "additive" => Ok(Variant::Additive),
            "multiplicative" => Ok(Variant::Multiplicative),
            other => Err(Error::Parse(format!("unknown variant '{other}'"))),
        }
    }
}

fn check_epsilon(eps: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eps) {
        Ok(())
    } else {
        Err(Error::InvalidEpsilon(eps))
    }
}

/// `Φ_ε` evaluated at an immersion.
#[derive(Clone, Debug)]
pub struct EpsilonData {
    pub epsilon: f64,
    pub variant: Variant,
    /// `γ / √det γ` in coordinates.
    pub class_rep: Vec<[f64; 3]>,
    pub blended: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub mean: Vec<f64>,
    pub gauss: Vec<f64>,
    pub conformal: ConformalData,
}

/// Trace-free part `(p, q)` of the unit-determinant class in the round
/// orthonormal frame, from the coordinate metric at colatitude with
/// `sin θ = s`.
#[inline]
pub fn class_pq<T: Scalar>(g: &[T; 3], s: f64) -> [T; 2] {
    let a = g[0];
    let b = g[1].scale(1.0 / s);
    let c = g[2].scale(1.0 / (s * s));
    let r = (a * c - b * b).sqrt();
    [(a - c).scale(0.5) / r, b / r]
}

pub fn blend(eps: f64, variant: Variant, lambda2: f64, mean: f64) -> f64 {
    match variant {
        Variant::Additive => (1.0 - eps) * lambda2 + eps * mean,
        Variant::Multiplicative => lambda2.powf(1.0 - eps) * mean.powf(-eps),
    }
}

fn check_mean(variant: Variant, mean: &[f64]) -> Result<()> {
    if variant == Variant::Multiplicative {
        if let Some((node, &value)) = mean.iter().enumerate().find(|(_, h)| !(**h > 0.0)) {
            return Err(Error::NonPositiveMeanCurvature { node, value });
        }
    }
    Ok(())
}

impl EpsilonData {
    /// Interleaved `(p, q)` nodal samples of the class slot.
    pub fn class_pq_samples(&self, grid: &SphereGrid) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.class_rep.len());
        for (n, c) in self.class_rep.iter().enumerate() {
            let [p, q] = class_pq(c, grid.node(n).0.sin());
            out.push(p);
            out.push(q);
        }
        out
    }

    /// Spectral coordinates of `Φ_ε`: tensor-harmonic coefficients of the
    /// class slot followed by scalar coefficients of the blended slot.
    pub fn codomain_vector(&self, bases: &SpectralBases) -> Vec<f64> {
        let mut v = bases.project_tensor(&self.class_pq_samples(&bases.grid));
        v.extend(bases.project_scalar(&self.blended));
        v
    }
}

/// `Φ_ε` from the nodal jets of an immersion.
pub fn phi_from_node_jets(
    grid: &Arc<SphereGrid>,
    jets: &[NodeJets<f64>],
    epsilon: f64,
    variant: Variant,
    opts: &LiouvilleOptions,
) -> Result<EpsilonData> {
    check_epsilon(epsilon)?;
    let pts: Vec<PointGeometry<f64>> = jets.iter().map(point_geometry).collect();
    for (n, p) in pts.iter().enumerate() {
        if !(p.det >= crate::geometry::MIN_METRIC_DET) {
            return Err(Error::Degenerate { node: n, det: p.det });
        }
    }
    let mean: Vec<f64> = pts.iter().map(|p| p.mean).collect();
    check_mean(variant, &mean)?;
    let conformal = solve_liouville(&LiouvilleProblem::from_points(grid, &pts), opts)?;
    let blended = conformal
        .lambda2
        .iter()
        .zip(&mean)
        .map(|(&l, &h)| blend(epsilon, variant, l, h))
        .collect();
    Ok(EpsilonData {
        epsilon,
        variant,
        class_rep: conformal_class(&pts.iter().map(|p| p.gamma).collect::<Vec<_>>())?,
        blended,
        lambda2: conformal.lambda2.clone(),
        mean,
        gauss: pts.iter().map(|p| p.gauss).collect(),
        conformal,
    })
}

pub fn apply_phi(f: &ImmersionMap, epsilon: f64, variant: Variant) -> Result<EpsilonData> {
    phi_from_node_jets(f.grid(), &f.node_jets(), epsilon, variant, &LiouvilleOptions::default())
}

/// Ambient variation field as second-order jets at every node.
pub type XJet = [Jet; 3];

/// A variation `X = dF(V) + νN` split into its tangential and normal parts.
#[derive(Clone, Debug)]
pub struct VariationField {
    /// Coordinate components `(V^θ, V^φ)` as jets.
    pub xt: Vec<[Jet; 2]>,
    pub nu: HarmonicField,
}

fn jet_of(s: &crate::spectral::ScalarJet) -> Jet {
    Jet::new(s[d::V], [s[d::T], s[d::P]], [s[d::TT], s[d::TP], s[d::PP]])
}

/// Jets of `∂θF`, `∂φF` and `N` at every node.
pub(crate) fn frame_jets(fjets: &[FJet]) -> Vec<([[Jet; 3]; 2], [Jet; 3])> {
    fjets
        .par_iter()
        .map(|fj| {
            let t = tangent_jets(fj);
            let n = crate::scalar::cross(&t[0], &t[1]);
            let inv = Jet::cst(1.0) / crate::scalar::dot(&n, &n).sqrt();
            (t, [n[0] * inv, n[1] * inv, n[2] * inv])
        })
        .collect()
}

impl VariationField {
    /// Band-limited field from vector-harmonic and scalar coefficients.
    pub fn from_harmonics(
        grid: &Arc<SphereGrid>,
        gradient: &[f64],
        curl: &[f64],
        nu: &[f64],
    ) -> Result<Self> {
        let nc = grid.num_coeffs();
        if gradient.len() != nc || curl.len() != nc {
            return Err(Error::SizeMismatch {
                expected: nc,
                got: gradient.len().min(curl.len()),
            });
        }
        let nu = HarmonicField::from_coeffs(grid, nu.to_vec())?;
        let xt = (0..grid.num_nodes())
            .map(|n| {
                let t = grid.node(n).0;
                let mut acc = [Jet::cst(0.0); 2];
                for (kind, c) in [(VectorKind::Gradient, gradient), (VectorKind::Curl, curl)] {
                    for (i, &ci) in c.iter().enumerate().skip(1) {
                        if ci != 0.0 {
                            let (l, _) = degree_order(i);
                            let v = vector_harmonic_jets(kind, l, &grid.basis_jet(i, n), t);
                            acc[0] += v[0].scale(ci);
                            acc[1] += v[1].scale(ci);
                        }
                    }
                }
                acc
            })
            .collect();
        Ok(Self { xt, nu })
    }

    /// Ambient jets of `X = V^i ∂_i F + νN`.
    pub fn ambient(&self, f: &ImmersionMap) -> Vec<XJet> {
        let frames = frame_jets(f.fjets());
        let nu = self.nu.jets();
        frames
            .iter()
            .enumerate()
            .map(|(n, (t, nn))| {
                let v = &self.xt[n];
                let nj = jet_of(&nu[n]);
                std::array::from_fn(|c| v[0] * t[0][c] + v[1] * t[1][c] + nj * nn[c])
            })
            .collect()
    }

    /// Pointwise split of ambient values: `V^i = γ^{ij}⟨X, ∂_jF⟩`, `ν = ⟨X, N⟩`.
    pub fn split_values(f: &ImmersionMap, x: &[Vec3<f64>]) -> (Vec<[f64; 2]>, Vec<f64>) {
        let geo = f.geometry();
        let mut v = Vec::with_capacity(x.len());
        let mut nu = Vec::with_capacity(x.len());
        for (n, (xn, fj)) in x.iter().zip(f.fjets()).enumerate() {
            let gi = sym_inverse(&geo.gamma[n]);
            let a = crate::scalar::dot(xn, &fj[d::T]);
            let b = crate::scalar::dot(xn, &fj[d::P]);
            v.push([gi[0] * a + gi[1] * b, gi[1] * a + gi[2] * b]);
            nu.push(crate::scalar::dot(xn, &geo.normal[n]));
        }
        (v, nu)
    }
}

/// Node jets `F + t·X` with `t` the dual unit.
#[inline]
pub(crate) fn dual_node_jets(fj: &FJet, x: &XJet) -> NodeJets<Dual> {
    let mk = |slot: usize, pick: &dyn Fn(&Jet) -> f64| -> Vec3<Dual> {
        std::array::from_fn(|c| Dual::new(fj[slot][c], pick(&x[c])))
    };
    NodeJets {
        ft: mk(d::T, &|j| j.d[0]),
        fp: mk(d::P, &|j| j.d[1]),
        ftt: mk(d::TT, &|j| j.h[0]),
        ftp: mk(d::TP, &|j| j.h[1]),
        fpp: mk(d::PP, &|j| j.h[2]),
    }
}

/// `X` values and jets as perturbations of node jets, for finite differences.
pub fn perturbation_jets(x: &[XJet]) -> Vec<NodeJets<f64>> {
    x.iter()
        .map(|xj| NodeJets {
            ft: xj.map(|j| j.d[0]),
            fp: xj.map(|j| j.d[1]),
            ftt: xj.map(|j| j.h[0]),
            ftp: xj.map(|j| j.h[1]),
            fpp: xj.map(|j| j.h[2]),
        })
        .collect()
}

/// Tangential part of `δ*X = ½γ'`, i.e. `δ*(X^T) + νA`, per node.
pub fn delta_star(f: &ImmersionMap, v: &VariationField) -> Vec<[f64; 3]> {
    let x = v.ambient(f);
    f.fjets()
        .iter()
        .zip(&x)
        .map(|(fj, xj)| point_geometry(&dual_node_jets(fj, xj)).gamma.map(|g| 0.5 * g.du))
        .collect()
}

/// `H' = -Δ_γν - |A|²ν + X^T(H)` evaluated from its closed form.
pub fn mean_curvature_prime(f: &ImmersionMap, v: &VariationField) -> Vec<f64> {
    let geo = f.geometry();
    let a2 = geo.second_form_norm_sq();
    let nu = v.nu.jets();
    f.fjets()
        .iter()
        .enumerate()
        .map(|(n, fj)| {
            // First derivatives of H only need third derivatives of F; the
            // unavailable fourth-order slots are left at zero.
            let lift = |slot: usize, d1: [usize; 2]| -> Vec3<Jet> {
                std::array::from_fn(|c| Jet::new(fj[slot][c], [fj[d1[0]][c], fj[d1[1]][c]], [0.0; 3]))
            };
            let jets = NodeJets {
                ft: lift(d::T, [d::TT, d::TP]),
                fp: lift(d::P, [d::TP, d::PP]),
                ftt: lift(d::TT, [d::TTT, d::TTP]),
                ftp: lift(d::TP, [d::TTP, d::TPP]),
                fpp: lift(d::PP, [d::TPP, d::PPP]),
            };
            let hj = point_geometry(&jets).mean;
            let pg = point_geometry(&NodeJets::from_fjet(fj));
            let s = &nu[n];
            let lap = laplacian(
                &pg.gamma,
                &pg.dgamma,
                [s[d::T], s[d::P]],
                [s[d::TT], s[d::TP], s[d::PP]],
            );
            let xt = &v.xt[n];
            -lap - a2[n] * s[d::V] + xt[0].v * hj.d[0] + xt[1].v * hj.d[1]
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "slot", rename_all = "snake_case")]
pub enum DomainLabel {
    Tangential { kind: VectorKind, l: usize, m: i64 },
    Normal { l: usize, m: i64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "slot", rename_all = "snake_case")]
pub enum CodomainLabel {
    Class { kind: TensorKind, l: usize, m: i64 },
    Blend { l: usize, m: i64 },
}

/// Douglis–Nirenberg order bookkeeping: the class slot is of order 1 in the
/// tangential field, the blended slot of order 2 in the normal speed when
/// `ε > 0` (the `λ²` contribution alone is of order 0).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdnWeights {
    pub class_slot: u32,
    pub blend_slot: u32,
}

impl AdnWeights {
    pub fn for_epsilon(eps: f64) -> Self {
        Self {
            class_slot: 1,
            blend_slot: if eps > 0.0 { 2 } else { 0 },
        }
    }
}

#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub matrix: DMatrix<f64>,
    pub domain: Vec<DomainLabel>,
    pub codomain: Vec<CodomainLabel>,
    pub adn_weights: AdnWeights,
    pub epsilon: f64,
    pub variant: Variant,
}

pub fn domain_labels(grid: &SphereGrid) -> Vec<DomainLabel> {
    let nc = grid.num_coeffs();
    let mut out = Vec::with_capacity(3 * nc - 2);
    for kind in [VectorKind::Gradient, VectorKind::Curl] {
        for i in 1..nc {
            let (l, m) = degree_order(i);
            out.push(DomainLabel::Tangential { kind, l, m });
        }
    }
    for i in 0..nc {
        let (l, m) = degree_order(i);
        out.push(DomainLabel::Normal { l, m });
    }
    out
}

pub fn codomain_labels(bases: &SpectralBases) -> Vec<CodomainLabel> {
    let mut out: Vec<CodomainLabel> = bases
        .tensor_labels
        .iter()
        .map(|&(kind, l, m)| CodomainLabel::Class { kind, l, m })
        .collect();
    for i in 0..bases.grid.num_coeffs() {
        let (l, m) = degree_order(i);
        out.push(CodomainLabel::Blend { l, m });
    }
    out
}

/// Ambient jets of the variation for a domain basis element.
pub fn domain_variation(
    grid: &SphereGrid,
    frames: &[([[Jet; 3]; 2], [Jet; 3])],
    label: DomainLabel,
) -> Vec<XJet> {
    (0..grid.num_nodes())
        .map(|n| {
            let (t, nn) = &frames[n];
            match label {
                DomainLabel::Tangential { kind, l, m } => {
                    let y = grid.basis_jet(coeff_index(l, m), n);
                    let v = vector_harmonic_jets(kind, l, &y, grid.node(n).0);
                    std::array::from_fn(|c| v[0] * t[0][c] + v[1] * t[1][c])
                }
                DomainLabel::Normal { l, m } => {
                    let y = jet_of(&grid.basis_jet(coeff_index(l, m), n));
                    std::array::from_fn(|c| y * nn[c])
                }
            }
        })
        .collect()
}

/// Everything needed to differentiate `Φ_ε` at a fixed immersion.
pub struct Linearizer {
    grid: Arc<SphereGrid>,
    bases: Arc<SpectralBases>,
    fjets: Vec<FJet>,
    data: EpsilonData,
    lin: LiouvilleLinearization,
    synthesis: DMatrix<f64>,
}

impl Linearizer {
    pub fn new(
        f: &ImmersionMap,
        bases: &Arc<SpectralBases>,
        epsilon: f64,
        variant: Variant,
        opts: &LiouvilleOptions,
    ) -> Result<Self> {
        let grid = f.grid().clone();
        if bases.grid.l_max() != grid.l_max() {
            return Err(Error::DegreeMismatch {
                grid: bases.grid.l_max(),
                input: grid.l_max(),
            });
        }
        let jets = f.node_jets();
        let data = phi_from_node_jets(&grid, &jets, epsilon, variant, opts)?;
        let pts: Vec<PointGeometry<f64>> = jets.iter().map(point_geometry).collect();
        let lin = LiouvilleLinearization::new(
            &LiouvilleProblem::from_points(&grid, &pts),
            &data.conformal.phi,
        )?;
        let nc = grid.num_coeffs();
        let synthesis = DMatrix::from_fn(grid.num_nodes(), nc, |n, i| grid.basis_value(i, n));
        Ok(Self {
            grid,
            bases: bases.clone(),
            fjets: f.fjets().to_vec(),
            data,
            lin,
            synthesis,
        })
    }

    pub fn data(&self) -> &EpsilonData {
        &self.data
    }

    /// Images of the given ambient variations in codomain coordinates.
    pub fn apply(&self, variations: &[Vec<XJet>]) -> Result<DMatrix<f64>> {
        let grid = &self.grid;
        let nn = grid.num_nodes();
        let k = variations.len();
        let phi_jets = self.lin.phi_jets();
        let sines: Vec<f64> = (0..nn).map(|n| grid.node(n).0.sin()).collect();
        // per column: interleaved (p', q'), R', H'
        let cols: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = variations
            .par_iter()
            .map(|x| {
                let mut pq = vec![0.0; 2 * nn];
                let mut rp = vec![0.0; nn];
                let mut hp = vec![0.0; nn];
                for n in 0..nn {
                    let pg = point_geometry(&dual_node_jets(&self.fjets[n], &x[n]));
                    let c = class_pq(&pg.gamma, sines[n]);
                    pq[2 * n] = c[0].du;
                    pq[2 * n + 1] = c[1].du;
                    rp[n] = liouville_residual(&pg.gamma, &pg.dgamma, pg.gauss, &phi_jets[n]).du;
                    hp[n] = pg.mean.du;
                }
                (pq, rp, hp)
            })
            .collect();
        let pq = DMatrix::from_fn(2 * nn, k, |r, c| cols[c].0[r]);
        let rp = DMatrix::from_fn(nn, k, |r, c| cols[c].1[r]);
        let hp = DMatrix::from_fn(nn, k, |r, c| cols[c].2[r]);

        let nc = grid.num_coeffs();
        let rhs_top = -(&self.bases.scalar_analysis * &rp);
        let mut rhs = DMatrix::zeros(nc + 3, k);
        rhs.rows_mut(0, nc).copy_from(&rhs_top);
        let sol = self.lin.solve_bordered(&rhs)?;
        let dphi = &self.synthesis * sol.rows(0, nc);

        let eps = self.data.epsilon;
        let mut bp = DMatrix::zeros(nn, k);
        for n in 0..nn {
            let l2 = self.data.lambda2[n];
            let h = self.data.mean[n];
            let b = self.data.blended[n];
            for c in 0..k {
                let l2p = -2.0 * l2 * dphi[(n, c)];
                bp[(n, c)] = match self.data.variant {
                    Variant::Additive => (1.0 - eps) * l2p + eps * hp[(n, c)],
                    Variant::Multiplicative => {
                        b * ((1.0 - eps) * l2p / l2 - eps * hp[(n, c)] / h)
                    }
                };
            }
        }
        let top = &self.bases.tensor_analysis * pq;
        let bottom = &self.bases.scalar_analysis * bp;
        let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), k);
        out.rows_mut(0, top.nrows()).copy_from(&top);
        out.rows_mut(top.nrows(), bottom.nrows()).copy_from(&bottom);
        Ok(out)
    }

    /// Frames of the immersion, for building domain variations.
    pub fn frames(&self) -> Vec<([[Jet; 3]; 2], [Jet; 3])> {
        frame_jets(&self.fjets)
    }
}

/// Columns are processed in blocks to bound memory.
const BLOCK: usize = 64;

/// Dense matrix of `DΦ_ε` on the vector/scalar harmonic bases.
pub fn assemble_linearization(
    f: &ImmersionMap,
    bases: &Arc<SpectralBases>,
    epsilon: f64,
    variant: Variant,
) -> Result<OperatorMatrix> {
    assemble_with_options(f, bases, epsilon, variant, &LiouvilleOptions::default())
}

pub fn assemble_with_options(
    f: &ImmersionMap,
    bases: &Arc<SpectralBases>,
    epsilon: f64,
    variant: Variant,
    opts: &LiouvilleOptions,
) -> Result<OperatorMatrix> {
    let lz = Linearizer::new(f, bases, epsilon, variant, opts)?;
    let grid = f.grid();
    let frames = lz.frames();
    let domain = domain_labels(grid);
    let codomain = codomain_labels(bases);
    let mut matrix = DMatrix::zeros(codomain.len(), domain.len());
    for start in (0..domain.len()).step_by(BLOCK) {
        let end = (start + BLOCK).min(domain.len());
        let vars: Vec<Vec<XJet>> = domain[start..end]
            .par_iter()
            .map(|&lab| domain_variation(grid, &frames, lab))
            .collect();
        let block = lz.apply(&vars)?;
        matrix.columns_mut(start, end - start).copy_from(&block);
    }
    Ok(OperatorMatrix {
        matrix,
        domain,
        codomain,
        adn_weights: AdnWeights::for_epsilon(epsilon),
        epsilon,
        variant,
    })
}

/// Ambient variation jets for a coordinate vector over the domain basis.
pub fn domain_combination(f: &ImmersionMap, coeffs: &[f64]) -> Result<Vec<XJet>> {
    let grid = f.grid();
    let nc = grid.num_coeffs();
    if coeffs.len() != 3 * nc - 2 {
        return Err(Error::SizeMismatch {
            expected: 3 * nc - 2,
            got: coeffs.len(),
        });
    }
    let mut grad = vec![0.0; nc];
    let mut curl = vec![0.0; nc];
    grad[1..].copy_from_slice(&coeffs[..nc - 1]);
    curl[1..].copy_from_slice(&coeffs[nc - 1..2 * nc - 2]);
    let v = VariationField::from_harmonics(grid, &grad, &curl, &coeffs[2 * nc - 2..])?;
    Ok(v.ambient(f))
}

/// Principal symbol at one node for a covector `ξ = (ξ_θ, ξ_φ)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SymbolReport {
    /// Rows: two trace-free class components, blended slot.
    /// Columns: tangential components in a γ-orthonormal frame, normal speed.
    pub matrix: [[f64; 3]; 3],
    pub min_singular_value: f64,
}

/// ADN principal symbol for a metric `γ` (coordinate components) at a node.
///
/// The class rows carry the order-1 symbol of the trace-free part of
/// `δ*X`; the blended row carries `w·ε|ξ|²_γ` on `ν`, with `w = 1` for the
/// additive blend and `w = B/H` for the multiplicative one. At `ε = 0` the
/// blended row has no order-2 part and vanishes.
pub fn principal_symbol_for_metric(
    gamma: &[f64; 3],
    xi: [f64; 2],
    epsilon: f64,
    weight: f64,
) -> Result<SymbolReport> {
    check_epsilon(epsilon)?;
    if xi[0] == 0.0 && xi[1] == 0.0 {
        return Err(Error::ZeroCovector);
    }
    let m = nalgebra::Matrix2::new(gamma[0], gamma[1], gamma[1], gamma[2]);
    let chol = m.cholesky().ok_or(Error::NotSpd { node: 0 })?;
    // Frame e_a = B_ai ∂_i with B = L⁻¹ is γ-orthonormal; ξ(e_a) = (Bξ)_a.
    let b = chol.l().try_inverse().ok_or(Error::NotSpd { node: 0 })?;
    let x = b * nalgebra::Vector2::new(xi[0], xi[1]);
    let (x1, x2) = (x[0], x[1]);
    let norm2 = x1 * x1 + x2 * x2;
    let matrix = [
        [0.5 * x1, -0.5 * x2, 0.0],
        [0.5 * x2, 0.5 * x1, 0.0],
        [0.0, 0.0, weight * epsilon * norm2],
    ];
    let sv = nalgebra::Matrix3::from_fn(|i, j| matrix[i][j]).singular_values();
    Ok(SymbolReport {
        matrix,
        min_singular_value: sv.min(),
    })
}

pub fn principal_symbol(
    f: &ImmersionMap,
    node: usize,
    xi: [f64; 2],
    epsilon: f64,
) -> Result<SymbolReport> {
    let grid = f.grid();
    if node >= grid.num_nodes() {
        return Err(Error::InvalidInput(format!("node {node} out of range")));
    }
    let pg = point_geometry(&NodeJets::from_fjet(&f.fjets()[node]));
    principal_symbol_for_metric(&pg.gamma, xi, epsilon, 1.0)
}

/// Minimum symbol singular value over every node and `directions` unit
/// covectors equally spaced in a γ-orthonormal frame.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SymbolScan {
    pub epsilon: f64,
    pub directions: usize,
    pub min_singular_value: f64,
    pub max_singular_value_min: f64,
}

pub fn symbol_scan(
    f: &ImmersionMap,
    epsilon: f64,
    directions: usize,
    weights: Option<&[f64]>,
) -> Result<SymbolScan> {
    check_epsilon(epsilon)?;
    if directions == 0 {
        return Err(Error::InvalidInput("need at least one direction".into()));
    }
    let pts: Vec<PointGeometry<f64>> = f.node_jets().iter().map(point_geometry).collect();
    let per_node: Vec<(f64, f64)> = pts
        .par_iter()
        .enumerate()
        .map(|(n, pg)| {
            let m = nalgebra::Matrix2::new(pg.gamma[0], pg.gamma[1], pg.gamma[1], pg.gamma[2]);
            let l = m.cholesky().expect("regular immersion").l();
            let w = weights.map_or(1.0, |w| w[n]);
            let mut lo = f64::INFINITY;
            let mut hi: f64 = 0.0;
            for k in 0..directions {
                let a = 2.0 * std::f64::consts::PI * k as f64 / directions as f64;
                // unit covector in the orthonormal frame, back to coordinates: ξ = L·x̂
                let xi = l * nalgebra::Vector2::new(a.cos(), a.sin());
                let r = principal_symbol_for_metric(&pg.gamma, [xi[0], xi[1]], epsilon, w)
                    .expect("nonzero covector");
                lo = lo.min(r.min_singular_value);
                hi = hi.max(r.min_singular_value);
            }
            (lo, hi)
        })
        .collect();
    Ok(SymbolScan {
        epsilon,
        directions,
        min_singular_value: per_node.iter().map(|p| p.0).fold(f64::INFINITY, f64::min),
        max_singular_value_min: per_node.iter().map(|p| p.1).fold(0.0, f64::max),
    })
}

/// Codomain vector of `Φ_ε` at perturbed node jets `F + s·X`.
pub fn phi_vector_at(
    f: &ImmersionMap,
    bases: &SpectralBases,
    x: &[NodeJets<f64>],
    s: f64,
    epsilon: f64,
    variant: Variant,
    opts: &LiouvilleOptions,
) -> Result<DVector<f64>> {
    let jets: Vec<NodeJets<f64>> = f
        .node_jets()
        .iter()
        .zip(x)
        .map(|(a, b)| a.perturbed(b, s))
        .collect();
    let data = phi_from_node_jets(f.grid(), &jets, epsilon, variant, opts)?;
    Ok(DVector::from_vec(data.codomain_vector(bases)))
}
