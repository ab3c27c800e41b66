//! Kernel, cokernel and index of discretized linearizations by SVD.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::ImmersionMap;
use crate::operator::{
    assemble_linearization, CodomainLabel, DomainLabel, OperatorMatrix, Variant, VariationField,
};
use crate::scalar::{cross, Vec3};
use crate::spectral::{SpectralBases, VectorKind};

pub const DEFAULT_GAP_MIN: f64 = 1e3;

/// Identification of a family of analytic modes against the numerical
/// null spaces.
#[derive(Clone, Debug, Serialize)]
pub struct ModeLabel {
    pub family: String,
    /// `"right"` for kernel candidates, `"left"` for cokernel candidates.
    pub side: String,
    pub count: usize,
    /// Smallest squared cosine between the family and the null space.
    pub overlap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralReport {
    pub epsilon: f64,
    pub rows: usize,
    pub cols: usize,
    /// The `min(rows, cols)` singular values, descending.
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub kernel_dim: usize,
    pub cokernel_dim: usize,
    pub index: i64,
    /// `σ_rank / σ_{rank+1}`, the latter floored at `σ_max·max(m,n)·ε_mach`.
    pub gap_ratio: f64,
    pub gap_min: f64,
    pub reliable: bool,
    pub mode_labels: Vec<ModeLabel>,
    /// Orthonormal right null vectors, one per column.
    #[serde(skip)]
    pub kernel_basis: DMatrix<f64>,
    /// Orthonormal left null vectors, one per column.
    #[serde(skip)]
    pub cokernel_basis: DMatrix<f64>,
}

impl SpectralReport {
    /// The `k` smallest singular values, ascending.
    pub fn smallest(&self, k: usize) -> Vec<f64> {
        self.singular_values.iter().rev().take(k).copied().collect()
    }
}

/// Rank at the largest ratio `σ_{k-1}/σ_k` of a descending list, with
/// values (and the one past the end) floored at `σ_max·dim·ε_mach`.
/// Returns the rank and the ratio found there.
pub fn gap_rank(sv: &[f64], dim: usize) -> (usize, f64) {
    let p = sv.len();
    if p == 0 || sv[0] == 0.0 {
        return (0, 1.0);
    }
    let floor = sv[0] * dim as f64 * f64::EPSILON;
    (1..=p)
        .map(|k| {
            let next = if k < p { sv[k].max(floor) } else { floor };
            (k, sv[k - 1] / next)
        })
        .fold((p, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best })
}

/// Full SVD with rank chosen at the largest relative gap.
pub fn svd_report(matrix: &DMatrix<f64>, epsilon: f64, gap_min: f64) -> Result<SpectralReport> {
    let (m, n) = matrix.shape();
    let s = m.max(n);
    if s == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Svd("matrix has non-finite entries".into()));
    }
    let mut padded = DMatrix::zeros(s, s);
    padded.view_mut((0, 0), (m, n)).copy_from(matrix);
    let svd = padded
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Svd("SVD did not converge".into()))?;
    let u = svd.u.as_ref().expect("requested");
    let vt = svd.v_t.as_ref().expect("requested");
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();

    let p = m.min(n);
    let (rank, gap_ratio) = gap_rank(&sv[..p], s);
    let reliable = sv[0] > 0.0 && gap_ratio >= gap_min;

    // Right singular vectors of the padding are rows of Vᵀ; the trailing
    // s - rank of them (by singular value) span the kernel of M.
    let kernel_dim = n - rank;
    let cokernel_dim = m - rank;
    let null_right: Vec<usize> = order[rank..].to_vec();
    let kernel_basis = right_null(vt, &null_right, n, kernel_dim);
    let cokernel_basis = left_null(u, &null_right, m, cokernel_dim);
    Ok(SpectralReport {
        epsilon,
        rows: m,
        cols: n,
        singular_values: sv[..p].to_vec(),
        rank,
        kernel_dim,
        cokernel_dim,
        index: kernel_dim as i64 - cokernel_dim as i64,
        gap_ratio,
        gap_min,
        reliable,
        mode_labels: Vec::new(),
        kernel_basis,
        cokernel_basis,
    })
}

/// Orthonormal basis of the span of the selected singular vectors
/// restricted to the first `len` coordinates. Padding coordinates carry no
/// weight in the true null space, so the restriction keeps `dim` directions.
fn restricted_basis(vectors: DMatrix<f64>, len: usize, dim: usize) -> DMatrix<f64> {
    if dim == 0 {
        return DMatrix::zeros(len, 0);
    }
    let top = vectors.rows(0, len).into_owned();
    let svd = top.svd(true, false);
    let u = svd.u.expect("requested");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    DMatrix::from_fn(len, dim, |r, c| u[(r, idx[c])])
}

fn right_null(vt: &DMatrix<f64>, idx: &[usize], n: usize, dim: usize) -> DMatrix<f64> {
    let s = vt.ncols();
    let v = DMatrix::from_fn(s, idx.len(), |r, c| vt[(idx[c], r)]);
    restricted_basis(v, n, dim)
}

fn left_null(u: &DMatrix<f64>, idx: &[usize], m: usize, dim: usize) -> DMatrix<f64> {
    let s = u.nrows();
    let w = DMatrix::from_fn(s, idx.len(), |r, c| u[(r, idx[c])]);
    restricted_basis(w, m, dim)
}

/// Orthonormal basis of a column span, dropping directions below a
/// relative threshold.
pub fn orthonormal_span(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    if a.ncols() == 0 {
        return a.clone();
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("requested");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| smax > 0.0 && svd.singular_values[i] > rel_tol * smax)
        .collect();
    DMatrix::from_fn(a.nrows(), keep.len(), |r, c| u[(r, keep[c])])
}

/// Smallest squared cosine between `subspace` (orthonormal columns) and the
/// span of `candidates`: 1 means every vector of `subspace` lies in that span.
pub fn span_overlap(subspace: &DMatrix<f64>, candidates: &DMatrix<f64>) -> f64 {
    if subspace.ncols() == 0 {
        return 1.0;
    }
    let q = orthonormal_span(candidates, 1e-10);
    if q.ncols() == 0 {
        return 0.0;
    }
    let proj = q.transpose() * subspace;
    let sv = proj.singular_values();
    if subspace.ncols() > q.ncols() {
        return 0.0;
    }
    let m = sv.min();
    m * m
}

/// Domain coordinates of ambient fields given by their nodal values.
pub fn domain_coordinates(
    f: &ImmersionMap,
    bases: &SpectralBases,
    fields: &[Vec<Vec3<f64>>],
) -> DMatrix<f64> {
    let nc = bases.grid.num_coeffs();
    let n = 3 * nc - 2;
    let cols: Vec<Vec<f64>> = fields
        .par_iter()
        .map(|x| {
            let (v, nu) = VariationField::split_values(f, x);
            let mut col = bases.project_vector(&v);
            col.extend(bases.project_scalar(&nu));
            col
        })
        .collect();
    DMatrix::from_fn(n, fields.len(), |r, c| cols[c][r])
}

/// The six ambient Killing fields restricted to `F`: rotations `e_k × F`,
/// then translations `e_k`.
pub fn killing_fields(f: &ImmersionMap) -> Vec<Vec<Vec3<f64>>> {
    let pos = f.positions();
    let mut out = Vec::with_capacity(6);
    for k in 0..3 {
        let mut w = [0.0; 3];
        w[k] = 1.0;
        out.push(pos.iter().map(|p| cross(&w, p)).collect());
    }
    for k in 0..3 {
        let mut e = [0.0; 3];
        e[k] = 1.0;
        out.push(vec![e; pos.len()]);
    }
    out
}

pub fn killing_modes(f: &ImmersionMap, bases: &SpectralBases) -> DMatrix<f64> {
    domain_coordinates(f, bases, &killing_fields(f))
}

/// Report with the ambient Killing directions removed from the domain.
pub fn based_report(op: &OperatorMatrix, killing: &DMatrix<f64>, gap_min: f64) -> Result<SpectralReport> {
    let n = op.matrix.ncols();
    if killing.nrows() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            got: killing.nrows(),
        });
    }
    let q = orthonormal_span(killing, 1e-8);
    if q.ncols() != 6 {
        return Err(Error::KillingRank { rank: q.ncols() });
    }
    let mut padded = DMatrix::zeros(n, n);
    padded.columns_mut(0, 6).copy_from(&q);
    let full_q = padded.qr().q();
    let complement = full_q.columns(6, n - 6).into_owned();
    svd_report(&(&op.matrix * complement), op.epsilon, gap_min)
}

fn unit_columns(len: usize, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(len, idx.len(), |r, c| if r == idx[c] { 1.0 } else { 0.0 })
}

/// Labels kernel and cokernel directions against the analytic candidates
/// at a round sphere: ambient Killing fields, the pure-conformal gradient
/// fields of degree 1, first-eigenfunction normal speeds, and degree-1
/// scalar harmonics in the blended slot for the cokernel.
pub fn identify_modes(
    report: &mut SpectralReport,
    op: &OperatorMatrix,
    f: &ImmersionMap,
    bases: &SpectralBases,
) {
    let n = op.domain.len();
    let m = op.codomain.len();
    let killing = killing_modes(f, bases);
    let conformal: Vec<usize> = op
        .domain
        .iter()
        .enumerate()
        .filter(|(_, l)| matches!(l, DomainLabel::Tangential { kind: VectorKind::Gradient, l: 1, .. }))
        .map(|(i, _)| i)
        .collect();
    let normal1: Vec<usize> = op
        .domain
        .iter()
        .enumerate()
        .filter(|(_, l)| matches!(l, DomainLabel::Normal { l: 1, .. }))
        .map(|(i, _)| i)
        .collect();
    let blend1: Vec<usize> = op
        .codomain
        .iter()
        .enumerate()
        .filter(|(_, l)| matches!(l, CodomainLabel::Blend { l: 1, .. }))
        .map(|(i, _)| i)
        .collect();
    let families: Vec<(&str, DMatrix<f64>)> = vec![
        ("rotation_killing", killing.columns(0, 3).into_owned()),
        ("translation_killing", killing.columns(3, 3).into_owned()),
        ("conformal_tangential", unit_columns(n, &conformal)),
        ("first_eigenfunction_normal", unit_columns(n, &normal1)),
    ];
    let kernel_q = &report.kernel_basis;
    let mut labels = Vec::new();
    for (name, cols) in &families {
        let q = orthonormal_span(cols, 1e-10);
        labels.push(ModeLabel {
            family: name.to_string(),
            side: "right".into(),
            count: q.ncols(),
            overlap: span_overlap(&q, kernel_q),
        });
    }
    let mut union = DMatrix::zeros(n, 0);
    for (_, cols) in &families {
        let k = union.ncols();
        union = union.insert_columns(k, cols.ncols(), 0.0);
        union.columns_mut(k, cols.ncols()).copy_from(cols);
    }
    labels.push(ModeLabel {
        family: "kernel_in_candidate_span".into(),
        side: "right".into(),
        count: report.kernel_dim,
        overlap: span_overlap(kernel_q, &union),
    });
    labels.push(ModeLabel {
        family: "cokernel_in_degree1_blend".into(),
        side: "left".into(),
        count: report.cokernel_dim,
        overlap: span_overlap(&report.cokernel_basis, &unit_columns(m, &blend1)),
    });
    report.mode_labels = labels;
}

/// Assemble and report at each `ε`.
pub fn kernel_vs_epsilon(
    f: &ImmersionMap,
    bases: &Arc<SpectralBases>,
    eps_grid: &[f64],
    variant: Variant,
    gap_min: f64,
) -> Result<Vec<SpectralReport>> {
    eps_grid
        .iter()
        .map(|&eps| {
            if !(eps > 0.0 && eps <= 1.0) {
                return Err(Error::InvalidEpsilon(eps));
            }
            let op = assemble_linearization(f, bases, eps, variant)?;
            svd_report(&op.matrix, eps, gap_min)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_matrix_is_unreliable_full_kernel() {
        let r = svd_report(&DMatrix::zeros(5, 7), 1.0, DEFAULT_GAP_MIN).unwrap();
        assert_eq!(r.kernel_dim, 7);
        assert_eq!(r.cokernel_dim, 5);
        assert!(!r.reliable);
    }

    #[test]
    fn identity_has_no_kernel() {
        let r = svd_report(&DMatrix::identity(6, 6), 1.0, DEFAULT_GAP_MIN).unwrap();
        assert_eq!((r.kernel_dim, r.cokernel_dim, r.index), (0, 0, 0));
        assert!(r.reliable);
    }

    #[test]
    fn rank_deficient_rectangular() {
        // rank 2 map from R^4 to R^3
        let m = DMatrix::from_row_slice(3, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let r = svd_report(&m, 1.0, DEFAULT_GAP_MIN).unwrap();
        assert_eq!((r.kernel_dim, r.cokernel_dim, r.index), (2, 1, 1));
        assert_eq!(r.kernel_basis.ncols(), 2);
        // kernel vectors are annihilated, cokernel vectors are orthogonal to the range
        assert!((&m * &r.kernel_basis).norm() < 1e-14);
        assert!((m.transpose() * &r.cokernel_basis).norm() < 1e-14);
        let t = svd_report(&m.transpose(), 1.0, DEFAULT_GAP_MIN).unwrap();
        assert_eq!(t.kernel_dim, r.cokernel_dim);
    }

    #[test]
    fn overlap_of_spans() {
        let a = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let b = DMatrix::from_column_slice(3, 2, &[1.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
        assert!((span_overlap(&a, &b) - 1.0).abs() < 1e-14);
        let c = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]);
        assert!(span_overlap(&a, &c).abs() < 1e-14);
    }
}
