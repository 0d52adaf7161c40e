//! Independent oracles shared by the integration tests. Nothing here calls the
//! library's geometry; fields are read sample by sample.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix2};

use metric_slice::{MetricField, Sym2, SymTensorField};

pub fn mat(s: Sym2) -> Matrix2<f64> {
    Matrix2::new(s.a11, s.a12, s.a12, s.a22)
}

pub fn sym(m: &Matrix2<f64>) -> Sym2 {
    Sym2::new(m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)])
}

/// `h² Σ tr(g⁻¹ S g⁻¹ T) √det g` by plain matrix products per cell.
pub fn sigma(g: &MetricField, s: &SymTensorField, t: &SymTensorField) -> f64 {
    let spec = g.spec();
    let h2 = spec.h() * spec.h();
    (0..spec.len())
        .map(|k| {
            let gm = mat(g.at(k));
            let gi = gm.try_inverse().expect("invertible");
            (gi * mat(s.at(k)) * gi * mat(t.at(k))).trace() * gm.determinant().sqrt() * h2
        })
        .sum()
}

pub fn sigma_norm(g: &MetricField, s: &SymTensorField) -> f64 {
    sigma(g, s, s).sqrt()
}

/// Least-squares slope of `ln e` against `ln(1/n)`, via the normal equations.
pub fn fit_order(ns: &[usize], errs: &[f64]) -> f64 {
    let a = DMatrix::from_fn(ns.len(), 2, |i, j| if j == 0 { 1.0 } else { -(ns[i] as f64).ln() });
    let b = DVector::from_iterator(errs.len(), errs.iter().map(|e| e.ln()));
    let ata = a.transpose() * &a;
    let atb = a.transpose() * b;
    ata.lu().solve(&atb).expect("two distinct resolutions")[1]
}

fn params(m: &Matrix2<f64>) -> [f64; 3] {
    [m[(0, 0)], m[(0, 1)], m[(1, 1)]]
}

fn from_params(p: &[f64]) -> Matrix2<f64> {
    Matrix2::new(p[0], p[1], p[1], p[2])
}

/// Midpoint-rule segment energy `tr(m⁻¹ d m⁻¹ d) √det m` with `m` the segment
/// midpoint and `d` the increment.
fn segment(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (from_params(a), from_params(b));
    let m = (ma + mb) * 0.5;
    let d = mb - ma;
    let mi = m.try_inverse().expect("positive path");
    (mi * d * mi * d).trace() * m.determinant().sqrt()
}

fn local_energy(q: &[f64], k: usize) -> f64 {
    // terms of the total energy that involve node k (1 ≤ k ≤ K−1)
    segment(&q[3 * (k - 1)..3 * k], &q[3 * k..3 * k + 3]) + segment(&q[3 * k..3 * k + 3], &q[3 * k + 3..3 * k + 6])
}

fn gradient_at(q: &[f64], k: usize) -> [f64; 3] {
    let mut g = [0.0; 3];
    let mut w = q.to_vec();
    for c in 0..3 {
        let e = 1e-6 * (1.0 + q[3 * k + c].abs());
        w[3 * k + c] = q[3 * k + c] + e;
        let plus = local_energy(&w, k);
        w[3 * k + c] = q[3 * k + c] - e;
        let minus = local_energy(&w, k);
        w[3 * k + c] = q[3 * k + c];
        g[c] = (plus - minus) / (2.0 * e);
    }
    g
}

/// Minimizer of the discrete energy over `K`-segment paths from `g0` to `g1`,
/// by Newton's method with a finite-difference Hessian. Returns the nodes.
pub fn energy_geodesic(g0: &Matrix2<f64>, g1: &Matrix2<f64>, k: usize) -> Vec<Matrix2<f64>> {
    let mut q: Vec<f64> = (0..=k).flat_map(|i| params(&(g0 + (g1 - g0) * (i as f64 / k as f64)))).collect();
    let n = 3 * (k - 1);
    for _ in 0..30 {
        let grad: Vec<f64> = (1..k).flat_map(|i| gradient_at(&q, i)).collect();
        let gnorm = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
        if gnorm < 1e-13 {
            break;
        }
        let mut hess = DMatrix::zeros(n, n);
        for j in 1..k {
            for c in 0..3 {
                let col = 3 * (j - 1) + c;
                let e = 1e-5 * (1.0 + q[3 * j + c].abs());
                let mut w = q.clone();
                w[3 * j + c] += e;
                let up: Vec<[f64; 3]> = (j.saturating_sub(1).max(1)..=(j + 1).min(k - 1)).map(|i| gradient_at(&w, i)).collect();
                w[3 * j + c] -= 2.0 * e;
                let dn: Vec<[f64; 3]> = (j.saturating_sub(1).max(1)..=(j + 1).min(k - 1)).map(|i| gradient_at(&w, i)).collect();
                for (off, i) in (j.saturating_sub(1).max(1)..=(j + 1).min(k - 1)).enumerate() {
                    for r in 0..3 {
                        hess[(3 * (i - 1) + r, col)] = (up[off][r] - dn[off][r]) / (2.0 * e);
                    }
                }
            }
        }
        let hs = (&hess + hess.transpose()) * 0.5;
        let step = hs.lu().solve(&DVector::from_vec(grad)).expect("nonsingular Hessian");
        for i in 0..n {
            q[3 + i] -= step[i];
        }
    }
    (0..=k).map(|i| from_params(&q[3 * i..3 * i + 3])).collect()
}

/// Midpoint of the energy-minimizing path, Richardson-extrapolated from `K`
/// and `2K` segments.
pub fn energy_midpoint(g0: &Matrix2<f64>, g1: &Matrix2<f64>, k: usize) -> Matrix2<f64> {
    let coarse = energy_geodesic(g0, g1, k)[k / 2];
    let fine = energy_geodesic(g0, g1, 2 * k)[k];
    (fine * 4.0 - coarse) / 3.0
}
