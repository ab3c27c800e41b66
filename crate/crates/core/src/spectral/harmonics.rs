//! Vector and trace-free tensor harmonics on the parameter sphere, plus the
//! dense analysis matrices used to project nodal fields onto them.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{coeff_index, d, degree_order, num_coeffs, ScalarJet, SphereGrid};
use crate::scalar::Jet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum VectorKind {
    /// `∇Y / √(ℓ(ℓ+1))`
    Gradient,
    /// `x × ∇Y / √(ℓ(ℓ+1))`
    Curl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum TensorKind {
    /// Normalized trace-free Hessian of `Y`.
    Electric,
    /// Electric harmonic rotated by a quarter turn.
    Magnetic,
}

fn theta_derivative_jet(y: &ScalarJet) -> Jet {
    Jet::new(y[d::T], [y[d::TT], y[d::TP]], [y[d::TTT], y[d::TTP], y[d::TPP]])
}

fn phi_derivative_jet(y: &ScalarJet) -> Jet {
    Jet::new(y[d::P], [y[d::TP], y[d::PP]], [y[d::TTP], y[d::TPP], y[d::PPP]])
}

/// `sin θ` as a jet.
pub fn sin_theta_jet(theta: f64) -> Jet {
    let (s, c) = theta.sin_cos();
    Jet::new(s, [c, 0.0], [-s, 0.0, 0.0])
}

/// Coordinate components `(V^θ, V^φ)` of an orthonormal vector harmonic,
/// as second-order jets, given the third-order jet of `Y_lm` (ℓ ≥ 1).
pub fn vector_harmonic_jets(kind: VectorKind, l: usize, y: &ScalarJet, theta: f64) -> [Jet; 2] {
    let norm = 1.0 / ((l * (l + 1)) as f64).sqrt();
    let s = sin_theta_jet(theta);
    let yt = theta_derivative_jet(y);
    let yp = phi_derivative_jet(y);
    let k = Jet::new(norm, [0.0; 2], [0.0; 3]);
    match kind {
        VectorKind::Gradient => [k * yt, k * yp / (s * s)],
        VectorKind::Curl => [-(k * yp) / s, k * yt / s],
    }
}

/// Trace-free symmetric tensor harmonic in the round orthonormal frame,
/// returned as `(p, q)` for the matrix `[[p, q], [q, -p]]` (ℓ ≥ 2).
pub fn tensor_harmonic(kind: TensorKind, l: usize, y: &ScalarJet, theta: f64) -> [f64; 2] {
    let c = (l * (l + 1)) as f64;
    let norm = (2.0 / (c * (c - 2.0))).sqrt();
    let (s, co) = theta.sin_cos();
    let h11 = y[d::TT];
    let h12 = (y[d::TP] - co / s * y[d::P]) / s;
    let h22 = (y[d::PP] + s * co * y[d::T]) / (s * s);
    let p = 0.5 * (h11 - h22) * norm;
    let q = h12 * norm;
    match kind {
        TensorKind::Electric => [p, q],
        TensorKind::Magnetic => [q, -p],
    }
}

/// Precomputed projection matrices for one grid.
#[derive(Debug)]
pub struct SpectralBases {
    pub grid: Arc<SphereGrid>,
    /// `(L+1)² × nodes`; `A·samples` gives harmonic coefficients.
    pub scalar_analysis: DMatrix<f64>,
    /// Trace-free tensor harmonic labels: electric then magnetic, `ℓ = 2..L`.
    pub tensor_labels: Vec<(TensorKind, usize, i64)>,
    /// `n_tensor × 2·nodes`, acting on interleaved `(p, q)` nodal samples.
    pub tensor_analysis: DMatrix<f64>,
    /// Vector harmonic labels: gradient then curl, `ℓ = 1..L`.
    pub vector_labels: Vec<(VectorKind, usize, i64)>,
}

impl SpectralBases {
    pub fn new(grid: &Arc<SphereGrid>) -> Self {
        let big_l = grid.l_max();
        let nn = grid.num_nodes();
        let nc = num_coeffs(big_l);
        let w = grid.weights();

        let mut scalar_analysis = DMatrix::zeros(nc, nn);
        for n in 0..nn {
            for i in 0..nc {
                scalar_analysis[(i, n)] = w[n] * grid.basis_value(i, n);
            }
        }

        let mut tensor_labels = Vec::new();
        for kind in [TensorKind::Electric, TensorKind::Magnetic] {
            for i in coeff_index(2, -2)..nc {
                let (l, m) = degree_order(i);
                tensor_labels.push((kind, l, m));
            }
        }
        let mut vector_labels = Vec::new();
        for kind in [VectorKind::Gradient, VectorKind::Curl] {
            for i in 1..nc {
                let (l, m) = degree_order(i);
                vector_labels.push((kind, l, m));
            }
        }

        let cols: Vec<Vec<f64>> = (0..nn)
            .into_par_iter()
            .map(|n| {
                let (t, _) = grid.node(n);
                let mut col = vec![0.0; 2 * tensor_labels.len()];
                for (r, &(kind, l, m)) in tensor_labels.iter().enumerate() {
                    let y = grid.basis_jet(coeff_index(l, m), n);
                    let [p, q] = tensor_harmonic(kind, l, &y, t);
                    col[2 * r] = 2.0 * w[n] * p;
                    col[2 * r + 1] = 2.0 * w[n] * q;
                }
                col
            })
            .collect();
        let mut tensor_analysis = DMatrix::zeros(tensor_labels.len(), 2 * nn);
        for (n, col) in cols.iter().enumerate() {
            for r in 0..tensor_labels.len() {
                tensor_analysis[(r, 2 * n)] = col[2 * r];
                tensor_analysis[(r, 2 * n + 1)] = col[2 * r + 1];
            }
        }

        Self {
            grid: grid.clone(),
            scalar_analysis,
            tensor_labels,
            tensor_analysis,
            vector_labels,
        }
    }

    pub fn num_tensor(&self) -> usize {
        self.tensor_labels.len()
    }

    pub fn num_vector(&self) -> usize {
        self.vector_labels.len()
    }

    /// Projects a parameter-sphere vector field, given by coordinate
    /// components `(V^θ, V^φ)` at each node, onto the vector harmonics.
    pub fn project_vector(&self, field: &[[f64; 2]]) -> Vec<f64> {
        let grid = &self.grid;
        self.vector_labels
            .par_iter()
            .map(|&(kind, l, m)| {
                let idx = coeff_index(l, m);
                (0..grid.num_nodes())
                    .map(|n| {
                        let (t, _) = grid.node(n);
                        let s2 = t.sin().powi(2);
                        let y = grid.basis_jet(idx, n);
                        let b = vector_harmonic_jets(kind, l, &y, t);
                        grid.weight(n) * (field[n][0] * b[0].v + s2 * field[n][1] * b[1].v)
                    })
                    .sum()
            })
            .collect()
    }

    /// Projects interleaved `(p, q)` nodal samples onto the tensor harmonics.
    pub fn project_tensor(&self, pq: &[f64]) -> Vec<f64> {
        (&self.tensor_analysis * nalgebra::DVector::from_column_slice(pq))
            .iter()
            .copied()
            .collect()
    }

    pub fn project_scalar(&self, samples: &[f64]) -> Vec<f64> {
        (&self.scalar_analysis * nalgebra::DVector::from_column_slice(samples))
            .iter()
            .copied()
            .collect()
    }
}
