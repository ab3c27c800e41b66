use std::f64::consts::PI;

use immreg::geometry::{darboux_residual, ellipsoid_radius, gauss_check, ImmersionMap};
use immreg::spectral::SphereGrid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const AXES: (f64, f64, f64) = (1.0, 1.2, 0.8);

fn unit(t: f64, p: f64) -> [f64; 3] {
    [t.sin() * p.cos(), t.sin() * p.sin(), t.cos()]
}

/// Closed-form first fundamental form, mean and Gauss curvature of the
/// centrally projected ellipsoid at `(θ, φ)`.
fn ellipsoid_oracle(t: f64, p: f64) -> ([f64; 3], f64, f64) {
    let (a, b, c) = AXES;
    let x = unit(t, p);
    let e_t = [t.cos() * p.cos(), t.cos() * p.sin(), -t.sin()];
    let e_p = [-t.sin() * p.sin(), t.sin() * p.cos(), 0.0];
    let q = x[0] * x[0] / (a * a) + x[1] * x[1] / (b * b) + x[2] * x[2] / (c * c);
    let r = q.powf(-0.5);
    // ∂q = 2 Σ x_k ∂x_k / a_k²
    let inv = [1.0 / (a * a), 1.0 / (b * b), 1.0 / (c * c)];
    let dq = |e: &[f64; 3]| 2.0 * (0..3).map(|k| x[k] * e[k] * inv[k]).sum::<f64>();
    let r_t = -0.5 * q.powf(-1.5) * dq(&e_t);
    let r_p = -0.5 * q.powf(-1.5) * dq(&e_p);
    let f_t: Vec<f64> = (0..3).map(|k| r_t * x[k] + r * e_t[k]).collect();
    let f_p: Vec<f64> = (0..3).map(|k| r_p * x[k] + r * e_p[k]).collect();
    let dot = |u: &[f64], v: &[f64]| (0..3).map(|k| u[k] * v[k]).sum::<f64>();
    let gamma = [dot(&f_t, &f_t), dot(&f_t, &f_p), dot(&f_p, &f_p)];
    let pt: Vec<f64> = (0..3).map(|k| r * x[k]).collect();
    let h = (pt[0] * pt[0] / a.powi(4) + pt[1] * pt[1] / b.powi(4) + pt[2] * pt[2] / c.powi(4)).sqrt();
    let abc2 = (a * b * c).powi(2);
    let gauss = 1.0 / (abc2 * h.powi(4));
    let mean = (a * a + b * b + c * c - dot(&pt, &pt)) / (abc2 * h.powi(3));
    (gamma, mean, gauss)
}

#[test]
fn ellipsoid_matches_closed_forms_at_random_nodes() {
    let grid = SphereGrid::new(48).unwrap();
    let f = ImmersionMap::ellipsoid(&grid, AXES.0, AXES.1, AXES.2).unwrap();
    let geo = f.geometry();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let n = rng.gen_range(0..grid.num_nodes());
        let (t, p) = grid.node(n);
        let (g, h, k) = ellipsoid_oracle(t, p);
        for i in 0..3 {
            assert!((geo.gamma[n][i] - g[i]).abs() < 1e-8, "γ at node {n}");
        }
        assert!((geo.mean[n] - h).abs() < 1e-7, "H at node {n}: {} vs {h}", geo.mean[n]);
        assert!((geo.gauss[n] - k).abs() < 1e-7, "K at node {n}");
        let x = unit(t, p);
        let r = ellipsoid_radius(&x, AXES.0, AXES.1, AXES.2);
        let pos = f.positions()[n];
        assert!((0..3).all(|k| (pos[k] - r * x[k]).abs() < 1e-9));
    }
}

#[test]
fn scaling_law() {
    let grid = SphereGrid::new(12).unwrap();
    let f = ImmersionMap::perturbed_sphere(&grid, 1.0, &[(2, 2, 0.05)]).unwrap();
    let r = 2.0;
    let a = f.geometry();
    let b = f.scaled(r).unwrap().geometry();
    for n in 0..grid.num_nodes() {
        for k in 0..3 {
            assert!((b.gamma[n][k] - r * r * a.gamma[n][k]).abs() < 1e-10);
            assert!((b.second[n][k] - r * a.second[n][k]).abs() < 1e-10);
            assert!((b.tau[n][k] - r * a.tau[n][k]).abs() < 1e-10);
        }
        assert!((b.mean[n] - a.mean[n] / r).abs() < 1e-10);
        assert!((b.gauss[n] - a.gauss[n] / (r * r)).abs() < 1e-10);
    }
    let s = ImmersionMap::sphere(&grid, 2.0).unwrap().geometry();
    assert!(s.mean.iter().all(|h| (h - 1.0).abs() < 1e-11));
    assert!(s.gauss.iter().all(|k| (k - 0.25).abs() < 1e-11));
}

fn rotation(axis: [f64; 3], angle: f64) -> [[f64; 3]; 3] {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let [x, y, z] = axis.map(|v| v / n);
    let (s, c) = angle.sin_cos();
    let k = 1.0 - c;
    [
        [c + x * x * k, x * y * k - z * s, x * z * k + y * s],
        [y * x * k + z * s, c + y * y * k, y * z * k - x * s],
        [z * x * k - y * s, z * y * k + x * s, c + z * z * k],
    ]
}

#[test]
fn isometry_equivariance() {
    let grid = SphereGrid::new(12).unwrap();
    let f = ImmersionMap::perturbed_sphere(&grid, 1.0, &[(2, 2, 0.05), (3, -2, 0.04)]).unwrap();
    let rot = rotation([0.3, -1.0, 0.5], 0.9);
    let g = f.rigid_motion(&rot, [0.5, -2.0, 1.0]).unwrap();
    let (a, b) = (f.geometry(), g.geometry());
    let (na, nb) = (a.second_form_norm_sq(), b.second_form_norm_sq());
    for n in 0..grid.num_nodes() {
        for k in 0..3 {
            assert!((a.gamma[n][k] - b.gamma[n][k]).abs() < 1e-11);
            let rn: f64 = (0..3).map(|j| rot[k][j] * a.normal[n][j]).sum();
            assert!((rn - b.normal[n][k]).abs() < 1e-11);
        }
        assert!((a.mean[n] - b.mean[n]).abs() < 1e-11);
        assert!((a.gauss[n] - b.gauss[n]).abs() < 1e-11);
        assert!((na[n] - nb[n]).abs() < 1e-11);
    }
}

#[test]
fn normal_is_unit_and_orthogonal() {
    let grid = SphereGrid::new(16).unwrap();
    let f = ImmersionMap::ellipsoid(&grid, AXES.0, AXES.1, AXES.2).unwrap();
    let geo = f.geometry();
    for (n, fj) in f.fjets().iter().enumerate() {
        let nn = geo.normal[n];
        let dot = |u: &[f64; 3]| u[0] * nn[0] + u[1] * nn[1] + u[2] * nn[2];
        assert!((dot(&nn) - 1.0).abs() < 1e-12);
        assert!(dot(&fj[1]).abs() < 1e-10 && dot(&fj[2]).abs() < 1e-10);
        assert!(geo.mean[n].powi(2) >= 4.0 * geo.gauss[n] - 1e-9);
    }
}

#[test]
fn gauss_discrepancy_converges_spectrally() {
    let at = |l| {
        let grid = SphereGrid::new(l).unwrap();
        gauss_check(&ImmersionMap::ellipsoid(&grid, AXES.0, AXES.1, AXES.2).unwrap()).unwrap()
    };
    let (e8, e16, e32) = (at(8), at(16), at(32));
    assert!(e32 <= 1e-6, "{e8:e} {e16:e} {e32:e}");
    assert!(e16 <= 2.0 * e8 && e32 * 4.0 <= e16, "{e8:e} {e16:e} {e32:e}");

    let grid = SphereGrid::new(32).unwrap();
    let bumpy = ImmersionMap::perturbed_sphere(&grid, 1.0, &[(2, 2, 0.05)]).unwrap();
    assert!(gauss_check(&bumpy).unwrap() <= 1e-5);
}

#[test]
fn darboux_residual_converges_spectrally() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut dirs = vec![[0.0, 0.0, 1.0]];
    for _ in 0..2 {
        let z: f64 = rng.gen_range(-1.0..1.0);
        let p: f64 = rng.gen_range(0.0..2.0 * PI);
        let s = (1.0 - z * z).sqrt();
        dirs.push([s * p.cos(), s * p.sin(), z]);
    }
    for e in dirs {
        let at = |l| {
            let grid = SphereGrid::new(l).unwrap();
            darboux_residual(&ImmersionMap::ellipsoid(&grid, AXES.0, AXES.1, AXES.2).unwrap(), e).unwrap()
        };
        let (r16, r32) = (at(16), at(32));
        assert!(r32 <= 1e-6 && r32 * 4.0 <= r16, "{e:?}: {r16:e} {r32:e}");
    }
}
