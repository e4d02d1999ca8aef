//! Independent reference implementations used as test oracles.
//!
//! None of these call into the library's numerical routines: eigenproblems
//! use cyclic Jacobi sweeps, inverses use adjugates, and the fusion optimum
//! comes from conjugate gradients driven only by objective gradients.

#![allow(dead_code)]

use mvfuse_core::fusion::{JointGaussian, JointGaussians};
use mvfuse_core::{CoordFrame, PosePrior};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller keeps the oracle free of the library's distribution code.
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order with matching column vectors.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum();
        let scale: f64 = (0..n).map(|i| a[(i, i)].powi(2)).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|i, j| a[(*j, *j)].total_cmp(&a[(*i, *i)]));
    let values = order.iter().map(|i| a[(*i, *i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

/// Flips a vector so its largest-magnitude entry is positive.
pub fn canonical_sign(v: &mut [f64]) {
    let idx = (0..v.len()).fold(0, |best, i| if v[i].abs() > v[best].abs() { i } else { best });
    if v[idx] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

pub fn inverse3(m: &Matrix3<f64>) -> Matrix3<f64> {
    let det = m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
        - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
        + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)]);
    let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[(r0, c0)] * m[(r1, c1)] - m[(r0, c1)] * m[(r1, c0)];
    Matrix3::new(
        cof(1, 2, 1, 2),
        -cof(0, 2, 1, 2),
        cof(0, 1, 1, 2),
        -cof(1, 2, 0, 2),
        cof(0, 2, 0, 2),
        -cof(0, 1, 0, 2),
        cof(1, 2, 0, 1),
        -cof(0, 2, 0, 1),
        cof(0, 1, 0, 1),
    ) / det
}

/// Random SPD matrix with eigenvalues in `[lo, hi]`.
pub fn random_spd(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Matrix3<f64> {
    let q = random_orthonormal(rng, 3, 3);
    let d = Matrix3::from_diagonal(&Vector3::from_fn(|_, _| rng.random_range(lo..hi)));
    let q = Matrix3::from_fn(|r, c| q[(r, c)]);
    let s = q * d * q.transpose();
    0.5 * (s + s.transpose())
}

/// `rows × cols` matrix with orthonormal columns (modified Gram-Schmidt).
pub fn random_orthonormal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut e = DMatrix::from_fn(rows, cols, |_, _| gaussian(rng));
    for j in 0..cols {
        for i in 0..j {
            let d: f64 = (0..rows).map(|r| e[(r, i)] * e[(r, j)]).sum();
            for r in 0..rows {
                e[(r, j)] -= d * e[(r, i)];
            }
        }
        let norm = (0..rows).map(|r| e[(r, j)].powi(2)).sum::<f64>().sqrt();
        for r in 0..rows {
            e[(r, j)] /= norm;
        }
    }
    e
}

/// A random fusion instance: K Gaussians and an M-component prior.
pub fn random_instance(rng: &mut ChaCha8Rng, k: usize, m: usize) -> (JointGaussians, PosePrior) {
    let joints = (0..k)
        .map(|_| JointGaussian {
            mu: Vector3::from_fn(|_, _| rng.random_range(-100.0..100.0)),
            sigma: random_spd(rng, 0.5, 50.0),
            mass: 1.0,
            low_mass: false,
        })
        .collect();
    let mean = DVector::from_fn(3 * k, |_, _| rng.random_range(-50.0..50.0));
    let e = random_orthonormal(rng, 3 * k, m);
    let eig = DVector::from_fn(m, |i, _| 100.0 / (1.0 + i as f64));
    let prior = PosePrior::new(CoordFrame::Camera, mean, e, eig).unwrap();
    (JointGaussians { frame: CoordFrame::Camera, joints }, prior)
}

fn gradient(g: &JointGaussians, w: &[Matrix3<f64>], prior: &PosePrior, alpha: &DVector<f64>) -> DVector<f64> {
    let m = prior.m();
    let mut grad = DVector::zeros(m);
    for (k, joint) in g.joints.iter().enumerate() {
        let mut phi = Vector3::zeros();
        for d in 0..3 {
            let row = 3 * k + d;
            phi[d] = prior.mean[row] + (0..m).map(|i| prior.components[(row, i)] * alpha[i]).sum::<f64>();
        }
        let r = w[k] * (phi - joint.mu);
        for i in 0..m {
            grad[i] += 2.0 * (0..3).map(|d| prior.components[(3 * k + d, i)] * r[d]).sum::<f64>();
        }
    }
    grad
}

/// Minimizes the fusion objective over α by linear conjugate gradients, with
/// Hessian products taken as gradient differences.
pub fn iterative_minimizer(g: &JointGaussians, prior: &PosePrior) -> DVector<f64> {
    let w: Vec<Matrix3<f64>> = g.joints.iter().map(|j| inverse3(&j.sigma)).collect();
    let m = prior.m();
    let mut alpha = DVector::zeros(m);
    let g0 = gradient(g, &w, prior, &DVector::zeros(m));
    let hess = |v: &DVector<f64>| gradient(g, &w, prior, v) - &g0;
    let mut r = -gradient(g, &w, prior, &alpha);
    let start = r.norm().max(1e-300);
    let mut p = r.clone();
    for _restart in 0..5 {
        for _ in 0..4 * m {
            if r.norm() <= 1e-14 * start {
                return alpha;
            }
            let hp = hess(&p);
            let step = r.dot(&r) / p.dot(&hp);
            alpha += step * &p;
            let r_next = &r - step * &hp;
            let beta = r_next.dot(&r_next) / r.dot(&r);
            p = &r_next + beta * &p;
            r = r_next;
        }
        // Refresh the residual to shed accumulated rounding.
        r = -gradient(g, &w, prior, &alpha);
        p = r.clone();
    }
    alpha
}

pub fn rel_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}
