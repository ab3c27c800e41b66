//! Gauss–Newton solution of `Φ_ε(F) = target` and quasi-static
//! path-following in ε toward the isometric limit.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fredholm::{gap_rank, svd_report, DEFAULT_GAP_MIN};
use crate::geometry::{ImmersionMap, MetricField};
use crate::operator::{
    assemble_with_options, blend, class_pq, phi_from_node_jets, Linearizer, Variant,
    XJet,
};
use crate::scalar::{Jet, Scalar, Vec3};
use crate::spectral::{SpectralBases, SphereGrid};
use crate::uniformization::{conformal_class, uniformize, LiouvilleOptions};

/// Prescribed values of both slots of `Φ_ε`.
#[derive(Clone, Debug, Serialize)]
pub struct TargetData {
    pub epsilon: f64,
    pub variant: Variant,
    /// Unit-determinant class representative per node.
    pub class_rep: Vec<[f64; 3]>,
    pub blended: Vec<f64>,
}

impl TargetData {
    pub fn new(
        grid: &SphereGrid,
        class_rep: Vec<[f64; 3]>,
        blended: Vec<f64>,
        epsilon: f64,
        variant: Variant,
    ) -> Result<Self> {
        let nn = grid.num_nodes();
        for len in [class_rep.len(), blended.len()] {
            if len != nn {
                return Err(Error::SizeMismatch { expected: nn, got: len });
            }
        }
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::InvalidEpsilon(epsilon));
        }
        for (n, c) in class_rep.iter().enumerate() {
            let det = c[0] * c[2] - c[1] * c[1];
            if !(c[0] > 0.0 && (det - 1.0).abs() <= 1e-9) {
                return Err(Error::InvalidInput(format!(
                    "class target at node {n} has determinant {det}"
                )));
            }
        }
        Ok(Self { epsilon, variant, class_rep, blended })
    }

    /// `Φ_ε` of a known immersion.
    pub fn from_immersion(f: &ImmersionMap, epsilon: f64, variant: Variant) -> Result<Self> {
        let data = phi_from_node_jets(f.grid(), &f.node_jets(), epsilon, variant, &solver_liouville())?;
        Self::new(f.grid(), data.class_rep, data.blended, epsilon, variant)
    }

    /// Same class with the blended slot multiplied by `k`.
    pub fn with_blended_scaled(&self, k: f64) -> Self {
        Self {
            blended: self.blended.iter().map(|b| k * b).collect(),
            ..self.clone()
        }
    }

    /// Spectral coordinates, in the layout of the operator's codomain.
    pub fn vector(&self, bases: &SpectralBases) -> Vec<f64> {
        let grid = &bases.grid;
        let mut pq = Vec::with_capacity(2 * self.class_rep.len());
        for (n, c) in self.class_rep.iter().enumerate() {
            pq.extend(class_pq(c, grid.node(n).0.sin()));
        }
        let mut v = bases.project_tensor(&pq);
        v.extend(bases.project_scalar(&self.blended));
        v
    }
}

fn solver_liouville() -> LiouvilleOptions {
    LiouvilleOptions {
        tol: 1e-13,
        ..Default::default()
    }
}

#[derive(Clone, Debug)]
pub struct NewtonOptions {
    /// Bound on the largest residual coordinate.
    pub tol: f64,
    pub max_iter: usize,
    /// Minimum singular-value gap accepted as a numerical null space.
    pub gap_min: f64,
    /// Relative cutoff used when no gap reaches `gap_min`.
    pub fallback_cutoff: f64,
    pub max_halvings: usize,
    /// Reject steps with `min det γ` below this fraction of its initial value.
    pub regularity_fraction: f64,
    /// A step counts as stagnant if it reduces the residual norm by less than
    /// this factor; three in a row stop the iteration.
    pub stall_factor: f64,
    /// Keep the top-degree fields from [`unresolved_directions`] fixed.
    pub freeze_unresolved: bool,
    pub liouville: LiouvilleOptions,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 30,
            gap_min: DEFAULT_GAP_MIN,
            fallback_cutoff: 1e-10,
            max_halvings: 25,
            regularity_fraction: 1e-4,
            stall_factor: 0.99,
            freeze_unresolved: true,
            liouville: solver_liouville(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NewtonSolution {
    #[serde(skip)]
    pub immersion: ImmersionMap,
    /// Largest residual coordinate, starting with the initial guess.
    pub residual_history: Vec<f64>,
    /// Truncation rank used at each iteration.
    pub ranks: Vec<usize>,
    /// Step lengths accepted by the damping.
    pub step_lengths: Vec<f64>,
}

impl NewtonSolution {
    pub fn iterations(&self) -> usize {
        self.residual_history.len() - 1
    }

    pub fn residual(&self) -> f64 {
        *self.residual_history.last().expect("nonempty")
    }
}

struct Evaluation {
    residual: DVector<f64>,
}

fn evaluate(
    f: &ImmersionMap,
    bases: &SpectralBases,
    target: &[f64],
    target_data: &TargetData,
    opts: &NewtonOptions,
) -> Result<Evaluation> {
    let data = phi_from_node_jets(f.grid(), &f.node_jets(), target_data.epsilon, target_data.variant, &opts.liouville)?;
    let v = data.codomain_vector(bases);
    let residual = DVector::from_iterator(v.len(), v.iter().zip(target).map(|(a, b)| a - b));
    Ok(Evaluation { residual })
}

/// Ambient variations `Y_j e_μ`, ordered like [`ImmersionMap::coeffs_flat`].
fn coefficient_variations(grid: &SphereGrid, cols: std::ops::Range<usize>) -> Vec<Vec<XJet>> {
    let nc = grid.num_coeffs();
    cols.map(|c| {
        let (mu, j) = (c / nc, c % nc);
        (0..grid.num_nodes())
            .map(|n| {
                let y = grid.basis_jet(j, n);
                let jet = Jet::new(y[0], [y[1], y[2]], [y[3], y[4], y[5]]);
                std::array::from_fn(|k| if k == mu { jet } else { Jet::cst(0.0) })
            })
            .collect()
    })
    .collect()
}

/// Jacobian of the residual with respect to the flat coefficient vector.
pub fn coefficient_jacobian(
    f: &ImmersionMap,
    bases: &Arc<SpectralBases>,
    epsilon: f64,
    variant: Variant,
    opts: &LiouvilleOptions,
) -> Result<DMatrix<f64>> {
    let lz = Linearizer::new(f, bases, epsilon, variant, opts)?;
    let grid = f.grid();
    let n = 3 * grid.num_coeffs();
    let rows = bases.num_tensor() + grid.num_coeffs();
    let mut jac = DMatrix::zeros(rows, n);
    for start in (0..n).step_by(64) {
        let end = (start + 64).min(n);
        let block = lz.apply(&coefficient_variations(grid, start..end))?;
        jac.columns_mut(start, end - start).copy_from(&block);
    }
    Ok(jac)
}

/// Orthonormal basis (columns, in flat coefficient order) of the degree-`L`
/// Cartesian fields that are ambient gradients of degree-`L+1` solid
/// harmonics. Their normal component has degree `L+1` and their tangential
/// part is its surface gradient, so at the round sphere both slots of the
/// projected data are blind to them. Away from the sphere they are seen only
/// through the shape's deviation, which makes them poorly determined.
pub fn unresolved_directions(grid: &SphereGrid) -> Result<DMatrix<f64>> {
    let l = grid.l_max();
    let nc = grid.num_coeffs();
    let fine = SphereGrid::new(l + 1)?;
    let top = l * l..nc;
    let next = nc..fine.num_coeffs();
    let mut map = DMatrix::zeros(next.len(), 3 * top.len());
    for mu in 0..3 {
        for (k, j) in top.clone().enumerate() {
            let samples: Vec<f64> =
                (0..fine.num_nodes()).map(|n| fine.position(n)[mu] * fine.basis_value(j, n)).collect();
            let c = fine.analyze(&samples)?;
            for (r, i) in next.clone().enumerate() {
                map[(r, mu * top.len() + k)] = c[i];
            }
        }
    }
    let svd = map.svd(false, true);
    let vt = svd.v_t.ok_or_else(|| Error::Svd("Vᵀ not computed".into()))?;
    let mut basis = DMatrix::zeros(3 * nc, next.len());
    for r in 0..next.len() {
        for mu in 0..3 {
            for (k, j) in top.clone().enumerate() {
                basis[(mu * nc + j, r)] = vt[(r, mu * top.len() + k)];
            }
        }
    }
    Ok(basis)
}

/// Minimum-norm least-squares step `-J⁺r`, truncated at the singular-value
/// gap. Returns the step and the rank used.
fn truncated_step(jac: DMatrix<f64>, r: &DVector<f64>, opts: &NewtonOptions) -> Result<(DVector<f64>, usize)> {
    let dim = jac.nrows().max(jac.ncols());
    let svd = jac.svd(true, true);
    let u = svd.u.as_ref().ok_or_else(|| Error::Svd("U not computed".into()))?;
    let vt = svd.v_t.as_ref().ok_or_else(|| Error::Svd("Vᵀ not computed".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let (mut rank, ratio) = gap_rank(&sv, dim);
    if ratio < opts.gap_min {
        rank = sv.iter().filter(|&&s| s > opts.fallback_cutoff * sv[0]).count();
    }
    let mut step = DVector::zeros(vt.ncols());
    for &i in &order[..rank] {
        let coef = u.column(i).dot(r) / svd.singular_values[i];
        step -= vt.row(i).transpose() * coef;
    }
    Ok((step, rank))
}

/// Gauss–Newton iteration for `Φ_ε(F) = target` from `f0`.
pub fn newton_solve(f0: &ImmersionMap, target: &TargetData, opts: &NewtonOptions) -> Result<NewtonSolution> {
    let grid = f0.grid().clone();
    let bases = Arc::new(SpectralBases::new(&grid));
    newton_solve_with_bases(f0, &bases, target, opts)
}

pub fn newton_solve_with_bases(
    f0: &ImmersionMap,
    bases: &Arc<SpectralBases>,
    target: &TargetData,
    opts: &NewtonOptions,
) -> Result<NewtonSolution> {
    if !(target.epsilon > 0.0) {
        return Err(Error::InvalidEpsilon(target.epsilon));
    }
    let grid = f0.grid();
    if target.blended.len() != grid.num_nodes() {
        return Err(Error::SizeMismatch { expected: grid.num_nodes(), got: target.blended.len() });
    }
    let det_floor = opts.regularity_fraction * f0.min_metric_det();
    let tvec = target.vector(bases);
    let mut f = f0.clone();
    let mut current = evaluate(&f, bases, &tvec, target, opts)?;
    let mut history = vec![current.residual.amax()];
    let mut ranks = Vec::new();
    let mut steps = Vec::new();
    let mut stagnant = 0;
    let frozen = if opts.freeze_unresolved { Some(unresolved_directions(grid)?) } else { None };
    while *history.last().expect("nonempty") > opts.tol {
        let iterations = history.len() - 1;
        if iterations >= opts.max_iter {
            return Err(Error::NewtonMaxIter { iterations, residual: *history.last().expect("nonempty") });
        }
        let mut jac = coefficient_jacobian(&f, bases, target.epsilon, target.variant, &opts.liouville)?;
        if let Some(b) = &frozen {
            jac -= (&jac * b) * b.transpose();
        }
        let (step, rank) = truncated_step(jac, &current.residual, opts)?;
        ranks.push(rank);
        let base = DVector::from_vec(f.coeffs_flat());
        let norm0 = current.residual.norm();
        let mut t = 1.0;
        let mut last_failure = String::from("no decrease");
        let mut accepted = None;
        let mut only_decrease_failures = true;
        for _ in 0..=opts.max_halvings {
            let trial = ImmersionMap::from_coeffs_flat(&grid, (&base + &step * t).as_slice());
            match trial {
                Ok(g) if g.min_metric_det() >= det_floor => match evaluate(&g, bases, &tvec, target, opts) {
                    Ok(e) if e.residual.norm() < norm0 => {
                        accepted = Some((g, e));
                        break;
                    }
                    Ok(_) => {}
                    Err(e) => {
                        only_decrease_failures = false;
                        last_failure = e.to_string();
                    }
                },
                Ok(g) => {
                    only_decrease_failures = false;
                    last_failure = format!("min det γ = {:e} below guard {det_floor:e}", g.min_metric_det());
                }
                Err(e) => {
                    only_decrease_failures = false;
                    last_failure = e.to_string();
                }
            }
            t *= 0.5;
        }
        let Some((g, e)) = accepted else {
            let residual = *history.last().expect("nonempty");
            return Err(if only_decrease_failures {
                Error::NewtonStalled { iterations, residual }
            } else {
                Error::NewtonDiverged { iterations, reason: last_failure }
            });
        };
        if e.residual.norm() > opts.stall_factor * norm0 {
            stagnant += 1;
        } else {
            stagnant = 0;
        }
        f = g;
        current = e;
        history.push(current.residual.amax());
        steps.push(t);
        if stagnant >= 3 && *history.last().expect("nonempty") > opts.tol {
            return Err(Error::NewtonStalled { iterations: iterations + 1, residual: *history.last().expect("nonempty") });
        }
    }
    Ok(NewtonSolution { immersion: f, residual_history: history, ranks, step_lengths: steps })
}

/// Rigid motion `x ↦ R x + t` minimizing `Σ |R a_i + t - b_i|²`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Procrustes {
    pub rotation: [[f64; 3]; 3],
    pub shift: Vec3<f64>,
    /// Largest node distance after alignment.
    pub max_distance: f64,
    pub rms_distance: f64,
}

pub fn procrustes(a: &[Vec3<f64>], b: &[Vec3<f64>]) -> Result<Procrustes> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::SizeMismatch { expected: b.len(), got: a.len() });
    }
    let centroid = |p: &[Vec3<f64>]| {
        p.iter().fold(Vector3::zeros(), |acc, x| acc + Vector3::from(*x)) / p.len() as f64
    };
    let (ca, cb) = (centroid(a), centroid(b));
    let mut h = Matrix3::zeros();
    for (x, y) in a.iter().zip(b) {
        h += (Vector3::from(*x) - ca) * (Vector3::from(*y) - cb).transpose();
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let v = vt.transpose();
    let sign = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sign)) * u.transpose();
    let t = cb - r * ca;
    let dists: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| (r * Vector3::from(*x) + t - Vector3::from(*y)).norm())
        .collect();
    Ok(Procrustes {
        rotation: std::array::from_fn(|i| std::array::from_fn(|j| r[(i, j)])),
        shift: [t[0], t[1], t[2]],
        max_distance: dists.iter().fold(0.0, |m: f64, &d| m.max(d)),
        rms_distance: (dists.iter().map(|d| d * d).sum::<f64>() / dists.len() as f64).sqrt(),
    })
}

#[derive(Clone, Debug)]
pub struct ContinuationOptions {
    pub variant: Variant,
    /// Explicit strictly decreasing schedule; when empty a geometric one is
    /// generated from `ratio` and `eps_min`.
    pub schedule: Vec<f64>,
    pub ratio: f64,
    pub eps_min: f64,
    /// Halvings of a failed ε step before giving up.
    pub max_step_halvings: usize,
    /// Number of smallest singular values recorded per step.
    pub recorded_singular_values: usize,
    pub newton: NewtonOptions,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            variant: Variant::Additive,
            schedule: Vec::new(),
            ratio: 0.7,
            eps_min: 0.05,
            max_step_halvings: 4,
            recorded_singular_values: 12,
            newton: NewtonOptions::default(),
        }
    }
}

impl ContinuationOptions {
    pub fn resolved_schedule(&self) -> Result<Vec<f64>> {
        let s = if self.schedule.is_empty() {
            if !(self.ratio > 0.0 && self.ratio < 1.0 && self.eps_min > 0.0 && self.eps_min <= 1.0) {
                return Err(Error::InvalidInput("geometric schedule needs 0 < ratio < 1, 0 < ε_min ≤ 1".into()));
            }
            let mut s = vec![1.0];
            while *s.last().expect("nonempty") * self.ratio > self.eps_min * (1.0 + 1e-12) {
                s.push(s.last().expect("nonempty") * self.ratio);
            }
            if *s.last().expect("nonempty") > self.eps_min {
                s.push(self.eps_min);
            }
            s
        } else {
            self.schedule.clone()
        };
        if s.iter().any(|&e| !(e > 0.0 && e <= 1.0)) || s.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidInput("ε schedule must be strictly decreasing in (0, 1]".into()));
        }
        Ok(s)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceRow {
    pub epsilon: f64,
    pub iterations: usize,
    pub residual: f64,
    /// `max |H(F) - H(F_prev)|`, the mean curvature's change over the step.
    pub mean_curvature_lag: f64,
    /// Smallest singular values of `DΦ_ε` at the step's solution, ascending.
    pub singular_values: Vec<f64>,
    pub accepted: bool,
    /// `max |F*g_Eucl - γ*|` over nodes and components.
    pub isometry_defect: f64,
    /// Failure kind for rejected steps.
    pub failure: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceStatus {
    ReachedEpsMin,
    Stalled,
    Diverged,
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuationTrace {
    pub rows: Vec<TraceRow>,
    pub status: TraceStatus,
    /// Last accepted solution.
    #[serde(skip)]
    pub immersion: ImmersionMap,
}

impl ContinuationTrace {
    pub fn accepted(&self) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(|r| r.accepted)
    }
}

pub fn isometry_defect(f: &ImmersionMap, metric: &MetricField) -> f64 {
    let g = f.geometry().gamma;
    g.iter()
        .zip(metric.components())
        .flat_map(|(a, b)| (0..3).map(move |k| (a[k] - b[k]).abs()))
        .fold(0.0, f64::max)
}

/// Quasi-static continuation toward the isometric problem for `metric`.
///
/// At each ε the class target is `[γ*]` and the blended target is the blend
/// of `λ*²` with the mean curvature of the previous accepted solution. The
/// path starts from the round sphere of the same area.
pub fn epsilon_continuation(metric: &MetricField, opts: &ContinuationOptions) -> Result<ContinuationTrace> {
    let schedule = opts.resolved_schedule()?;
    let grid = metric.grid().clone();
    let bases = Arc::new(SpectralBases::new(&grid));
    let star = uniformize(metric, &opts.newton.liouville)?;
    let class = conformal_class(&metric.components())?;
    let radius = (metric.area() / (4.0 * std::f64::consts::PI)).sqrt();
    let mut f = ImmersionMap::sphere(&grid, radius)?;
    let mut rows = Vec::new();

    let solve_at = |eps: f64, start: &ImmersionMap| -> Result<(NewtonSolution, f64)> {
        let mean = start.geometry().mean;
        let blended = star.lambda2.iter().zip(&mean).map(|(&l, &h)| blend(eps, opts.variant, l, h)).collect();
        let target = TargetData::new(&grid, class.clone(), blended, eps, opts.variant)?;
        let sol = newton_solve_with_bases(start, &bases, &target, &opts.newton)?;
        let lag = sol.immersion.geometry().mean.iter().zip(&mean).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        Ok((sol, lag))
    };

    let mut pending: Vec<f64> = schedule.iter().rev().copied().collect();
    let mut halvings = 0;
    let mut last_eps: Option<f64> = None;
    while let Some(&eps) = pending.last() {
        match solve_at(eps, &f) {
            Ok((sol, lag)) => {
                let op = assemble_with_options(&sol.immersion, &bases, eps, opts.variant, &opts.newton.liouville)?;
                let report = svd_report(&op.matrix, eps, opts.newton.gap_min)?;
                rows.push(TraceRow {
                    epsilon: eps,
                    iterations: sol.iterations(),
                    residual: sol.residual(),
                    mean_curvature_lag: lag,
                    singular_values: report.smallest(opts.recorded_singular_values),
                    accepted: true,
                    isometry_defect: isometry_defect(&sol.immersion, metric),
                    failure: None,
                });
                f = sol.immersion;
                last_eps = Some(eps);
                pending.pop();
                halvings = 0;
            }
            Err(e) => {
                rows.push(TraceRow {
                    epsilon: eps,
                    iterations: 0,
                    residual: f64::NAN,
                    mean_curvature_lag: f64::NAN,
                    singular_values: Vec::new(),
                    accepted: false,
                    isometry_defect: f64::NAN,
                    failure: Some(e.kind().to_string()),
                });
                let status = match e {
                    Error::NewtonStalled { .. } | Error::NewtonMaxIter { .. } => TraceStatus::Stalled,
                    _ => TraceStatus::Diverged,
                };
                match last_eps {
                    Some(prev) if halvings < opts.max_step_halvings => {
                        halvings += 1;
                        pending.push(0.5 * (prev + eps));
                    }
                    _ => return Ok(ContinuationTrace { rows, status, immersion: f }),
                }
            }
        }
    }
    Ok(ContinuationTrace { rows, status: TraceStatus::ReachedEpsMin, immersion: f })
}
