//! Conformal class and conformal factor of a metric on the sphere.
//!
//! For `γ` on S² we look for `φ` with `γ₀ = e^{2φ}γ` of curvature `+1`, i.e.
//!
//! ```text
//! Δ_γ φ = K_γ - e^{2φ},
//! ```
//!
//! and set `λ² = e^{-2φ}` so that `γ = λ²γ₀`. Solutions form a
//! three-parameter family (Möbius boosts); the degree-1 harmonic
//! coefficients of `φ` are pinned to zero with Lagrange multipliers.
//! The unknown is `φ` up to degree `L` and the equation is imposed by
//! projecting its nodal residual onto the same harmonics.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{
    brioschi, christoffel, laplacian, sym_inverse, MetricField, MetricJet, PointGeometry,
};
use crate::scalar::{Dual, Scalar};
use crate::spectral::{coeff_index, d, HarmonicField, ScalarJet, SphereGrid};

/// `γ / √det γ` at every node.
pub fn conformal_class(gamma: &[[f64; 3]]) -> Result<Vec<[f64; 3]>> {
    gamma
        .iter()
        .enumerate()
        .map(|(n, g)| {
            let det = g[0] * g[2] - g[1] * g[1];
            if !(g[0] > 0.0 && det > 0.0) {
                return Err(Error::NotSpd { node: n });
            }
            let s = det.sqrt();
            Ok([g[0] / s, g[1] / s, g[2] / s])
        })
        .collect()
}

/// Data of the Liouville problem: metric with first derivatives and its
/// Gauss curvature, at every node.
#[derive(Clone, Debug)]
pub struct LiouvilleProblem {
    pub grid: Arc<SphereGrid>,
    pub gamma: Vec<[f64; 3]>,
    pub dgamma: Vec<[[f64; 3]; 2]>,
    pub gauss: Vec<f64>,
}

impl LiouvilleProblem {
    /// Curvature from the Brioschi formula.
    pub fn from_metric(metric: &MetricField) -> Self {
        Self {
            grid: metric.grid().clone(),
            gamma: metric.jets().iter().map(|j| j.g).collect(),
            dgamma: metric.jets().iter().map(|j| j.d1).collect(),
            gauss: metric.gauss_curvature(),
        }
    }

    /// Metric of an immersion with its extrinsic curvature `det(γ⁻¹A)`.
    pub fn from_points(grid: &Arc<SphereGrid>, pts: &[PointGeometry<f64>]) -> Self {
        Self {
            grid: grid.clone(),
            gamma: pts.iter().map(|p| p.gamma).collect(),
            dgamma: pts.iter().map(|p| p.dgamma).collect(),
            gauss: pts.iter().map(|p| p.gauss).collect(),
        }
    }

    /// Per-node coefficients of `Δ_γ` acting on
    /// `(u_θ, u_φ, u_θθ, u_θφ, u_φφ)`.
    fn laplacian_stencils(&self) -> Vec<[f64; 5]> {
        self.gamma
            .iter()
            .zip(&self.dgamma)
            .map(|(g, dg)| {
                let gi = sym_inverse(g);
                let c = christoffel(g, dg);
                let first = |k: usize| -(gi[0] * c[k][0][0] + 2.0 * gi[1] * c[k][0][1] + gi[2] * c[k][1][1]);
                [first(0), first(1), gi[0], 2.0 * gi[1], gi[2]]
            })
            .collect()
    }
}

#[inline]
fn apply_stencil(s: &[f64; 5], j: &ScalarJet) -> f64 {
    s[0] * j[d::T] + s[1] * j[d::P] + s[2] * j[d::TT] + s[3] * j[d::TP] + s[4] * j[d::PP]
}

/// `Δ_γ φ - K + e^{2φ}` at one node, over any scalar type.
pub fn liouville_residual<T: Scalar>(g: &[T; 3], dg: &[[T; 3]; 2], k: T, phi: &ScalarJet) -> T {
    let lap = laplacian(
        g,
        dg,
        [T::cst(phi[d::T]), T::cst(phi[d::P])],
        [T::cst(phi[d::TT]), T::cst(phi[d::TP]), T::cst(phi[d::PP])],
    );
    lap - k + T::cst((2.0 * phi[d::V]).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum InitialGuess {
    /// `φ = -¼ log(det γ / det γ_round)`, exact for metrics conformal to the
    /// round one in these coordinates.
    DeterminantRatio,
    Zero,
}

#[derive(Clone, Debug)]
pub struct LiouvilleOptions {
    pub max_iters: usize,
    /// Bound on the largest projected residual coefficient.
    pub tol: f64,
    pub initial: InitialGuess,
}

impl Default for LiouvilleOptions {
    fn default() -> Self {
        Self {
            max_iters: 40,
            tol: 1e-11,
            initial: InitialGuess::DeterminantRatio,
        }
    }
}

/// Möbius normalization: the degree-1 content removed from the initial
/// guess and the final Lagrange multipliers of the three gauge conditions.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct GaugeRecord {
    pub removed_degree1: [f64; 3],
    pub multipliers: [f64; 3],
}

impl GaugeRecord {
    pub fn parameters(&self) -> [f64; 6] {
        let [a, b, c] = self.removed_degree1;
        let [x, y, z] = self.multipliers;
        [a, b, c, x, y, z]
    }
}

#[derive(Clone, Debug)]
pub struct ConformalData {
    pub class_rep: Vec<[f64; 3]>,
    pub phi: HarmonicField,
    pub lambda2: Vec<f64>,
    pub lambda2_field: HarmonicField,
    pub gauge: GaugeRecord,
    /// Largest projected residual coefficient after each Newton step,
    /// starting with the initial guess.
    pub residual_history: Vec<f64>,
    /// `max |Δ_γ φ - K + e^{2φ}|` over nodes at the returned `φ`.
    pub nodal_residual: f64,
}

impl ConformalData {
    pub fn iterations(&self) -> usize {
        self.residual_history.len() - 1
    }
}

const GAUGE: [usize; 3] = [1, 2, 3];

struct Newton<'a> {
    problem: &'a LiouvilleProblem,
    stencils: Vec<[f64; 5]>,
}

impl Newton<'_> {
    fn grid(&self) -> &Arc<SphereGrid> {
        &self.problem.grid
    }

    fn nodal_residual(&self, phi: &[f64]) -> Result<Vec<f64>> {
        let jets = self.grid().synthesize_jets(phi)?;
        Ok(jets
            .iter()
            .enumerate()
            .map(|(n, j)| apply_stencil(&self.stencils[n], j) - self.problem.gauss[n] + (2.0 * j[d::V]).exp())
            .collect())
    }

    /// Bordered residual `[P R(φ) + Gᵀμ ; Gφ]`.
    fn residual(&self, phi: &[f64], mu: &[f64; 3]) -> Result<DVector<f64>> {
        let nc = phi.len();
        let r = self.grid().analyze(&self.nodal_residual(phi)?)?;
        let mut out = DVector::zeros(nc + 3);
        for i in 0..nc {
            out[i] = r[i];
        }
        for (k, &g) in GAUGE.iter().enumerate() {
            out[g] += mu[k];
            out[nc + k] = phi[g];
        }
        Ok(out)
    }

    /// Bordered Jacobian at `φ`.
    fn jacobian(&self, phi: &[f64]) -> Result<DMatrix<f64>> {
        let grid = self.grid();
        let nc = phi.len();
        let nn = grid.num_nodes();
        let e2: Vec<f64> = grid.synthesize(phi)?.iter().map(|p| 2.0 * (2.0 * p).exp()).collect();
        let cols: Vec<Vec<f64>> = (0..nc)
            .into_par_iter()
            .map(|j| {
                let samples: Vec<f64> = (0..nn)
                    .map(|n| {
                        let y = grid.basis_jet(j, n);
                        apply_stencil(&self.stencils[n], &y) + e2[n] * y[d::V]
                    })
                    .collect();
                grid.analyze(&samples).expect("sized by grid")
            })
            .collect();
        let mut m = DMatrix::zeros(nc + 3, nc + 3);
        for (j, col) in cols.iter().enumerate() {
            for i in 0..nc {
                m[(i, j)] = col[i];
            }
        }
        for (k, &g) in GAUGE.iter().enumerate() {
            m[(g, nc + k)] = 1.0;
            m[(nc + k, g)] = 1.0;
        }
        Ok(m)
    }
}

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Solves the Liouville equation with damped Newton iteration.
pub fn solve_liouville(problem: &LiouvilleProblem, opts: &LiouvilleOptions) -> Result<ConformalData> {
    let grid = problem.grid.clone();
    let nc = grid.num_coeffs();
    let newton = Newton {
        problem,
        stencils: problem.laplacian_stencils(),
    };

    let mut phi = match opts.initial {
        InitialGuess::Zero => vec![0.0; nc],
        InitialGuess::DeterminantRatio => {
            let samples: Vec<f64> = problem
                .gamma
                .iter()
                .enumerate()
                .map(|(n, g)| {
                    let s2 = grid.node(n).0.sin().powi(2);
                    -0.25 * ((g[0] * g[2] - g[1] * g[1]) / s2).ln()
                })
                .collect();
            grid.analyze(&samples)?
        }
    };
    let mut gauge = GaugeRecord::default();
    for (k, &g) in GAUGE.iter().enumerate() {
        gauge.removed_degree1[k] = phi[g];
        phi[g] = 0.0;
    }
    let mut mu = [0.0; 3];

    let mut res = newton.residual(&phi, &mu)?;
    let mut norm = max_abs(&res);
    let mut history = vec![norm];
    let mut iters = 0;
    while norm > opts.tol {
        if iters == opts.max_iters {
            return Err(Error::LiouvilleNoConvergence {
                iterations: iters,
                residual: norm,
            });
        }
        let jac = newton.jacobian(&phi)?;
        let step = jac
            .lu()
            .solve(&(-&res))
            .ok_or_else(|| Error::Gauge("bordered Liouville Jacobian is singular".into()))?;
        if step.iter().any(|v| !v.is_finite()) {
            return Err(Error::Gauge("non-finite Newton step".into()));
        }
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = (0..nc).map(|i| phi[i] + t * step[i]).collect();
            let trial_mu = [0, 1, 2].map(|k| mu[k] + t * step[nc + k]);
            let trial_res = newton.residual(&trial, &trial_mu)?;
            let trial_norm = max_abs(&trial_res);
            if trial_norm < norm || t < 1e-6 {
                if trial_norm >= norm && norm > opts.tol {
                    return Err(Error::LiouvilleNoConvergence {
                        iterations: iters + 1,
                        residual: norm,
                    });
                }
                phi = trial;
                mu = trial_mu;
                res = trial_res;
                norm = trial_norm;
                break;
            }
            t *= 0.5;
        }
        iters += 1;
        history.push(norm);
    }
    gauge.multipliers = mu;

    let nodal = newton.nodal_residual(&phi)?;
    let phi = HarmonicField::from_coeffs(&grid, phi)?;
    let lambda2: Vec<f64> = phi.samples().iter().map(|p| (-2.0 * p).exp()).collect();
    let lambda2_field = HarmonicField::from_samples(&grid, &lambda2)?;
    Ok(ConformalData {
        class_rep: conformal_class(&problem.gamma)?,
        phi,
        lambda2,
        lambda2_field,
        gauge,
        residual_history: history,
        nodal_residual: nodal.iter().fold(0.0, |a, r| a.max(r.abs())),
    })
}

/// Factorized linearization of the gauged Liouville solve at a solution.
pub struct LiouvilleLinearization {
    grid: Arc<SphereGrid>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    phi_jets: Vec<ScalarJet>,
}

impl LiouvilleLinearization {
    pub fn new(problem: &LiouvilleProblem, phi: &HarmonicField) -> Result<Self> {
        let newton = Newton {
            problem,
            stencils: problem.laplacian_stencils(),
        };
        let lu = newton.jacobian(phi.coeffs())?.lu();
        if !lu.is_invertible() {
            return Err(Error::Gauge("bordered Liouville Jacobian is singular".into()));
        }
        Ok(Self {
            grid: problem.grid.clone(),
            lu,
            phi_jets: phi.jets(),
        })
    }

    pub fn phi_jets(&self) -> &[ScalarJet] {
        &self.phi_jets
    }

    /// Coefficients of `φ'` given the nodal variation `R'` of the residual
    /// at fixed `φ`.
    pub fn phi_prime(&self, residual_prime: &[f64]) -> Result<Vec<f64>> {
        let nc = self.grid.num_coeffs();
        let r = self.grid.analyze(residual_prime)?;
        let mut rhs = DVector::zeros(nc + 3);
        for i in 0..nc {
            rhs[i] = -r[i];
        }
        let sol = self
            .lu
            .solve(&rhs)
            .ok_or_else(|| Error::Gauge("linearized Liouville solve failed".into()))?;
        Ok(sol.rows(0, nc).iter().copied().collect())
    }

    /// Solves the bordered system for several right-hand sides at once.
    pub fn solve_bordered(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.lu
            .solve(rhs)
            .ok_or_else(|| Error::Gauge("linearized Liouville solve failed".into()))
    }

    /// Nodal `(λ²)' = -2 e^{-2φ} φ'`.
    pub fn lambda2_prime(&self, residual_prime: &[f64]) -> Result<Vec<f64>> {
        let dphi = self.grid.synthesize(&self.phi_prime(residual_prime)?)?;
        Ok(dphi
            .iter()
            .zip(&self.phi_jets)
            .map(|(dp, j)| -2.0 * (-2.0 * j[d::V]).exp() * dp)
            .collect())
    }
}

fn dual_metric(m: &MetricJet<f64>, h: &MetricJet<f64>) -> MetricJet<Dual> {
    MetricJet {
        g: std::array::from_fn(|k| Dual::new(m.g[k], h.g[k])),
        d1: std::array::from_fn(|i| std::array::from_fn(|k| Dual::new(m.d1[i][k], h.d1[i][k]))),
        d2: std::array::from_fn(|i| std::array::from_fn(|k| Dual::new(m.d2[i][k], h.d2[i][k]))),
    }
}

/// Variation of `λ²` at every node when the metric moves along `h`, with
/// the curvature taken from the Brioschi formula.
pub fn linearized_conformal_factor(
    metric: &MetricField,
    data: &ConformalData,
    h: &[MetricJet<f64>],
) -> Result<Vec<f64>> {
    if h.len() != metric.jets().len() {
        return Err(Error::SizeMismatch {
            expected: metric.jets().len(),
            got: h.len(),
        });
    }
    let problem = LiouvilleProblem::from_metric(metric);
    let lin = LiouvilleLinearization::new(&problem, &data.phi)?;
    let rp: Vec<f64> = metric
        .jets()
        .iter()
        .zip(h)
        .zip(lin.phi_jets())
        .map(|((m, hj), pj)| {
            let md = dual_metric(m, hj);
            liouville_residual(&md.g, &md.d1, brioschi(&md), pj).du
        })
        .collect();
    lin.lambda2_prime(&rp)
}

/// Convenience wrapper: class, factor and gauge of a metric field.
pub fn uniformize(metric: &MetricField, opts: &LiouvilleOptions) -> Result<ConformalData> {
    solve_liouville(&LiouvilleProblem::from_metric(metric), opts)
}

/// Index of the degree-1 coefficients pinned by the gauge.
pub fn gauge_indices() -> [usize; 3] {
    [coeff_index(1, -1), coeff_index(1, 0), coeff_index(1, 1)]
}
