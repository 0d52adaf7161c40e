//! Grid-refinement studies with manufactured smooth fields.

use std::f64::consts::PI;

use crate::diffeo::DiffeoGrid;
use crate::error::Result;
use crate::grid::{GridSpec, MetricField, SymTensorField, VectorField};
use crate::l2::l2_exp;
use crate::mat2::{Mat2, Sym2};
use crate::tensor::{divergence, volume_density, MetricGeometry};

const TAU: f64 = 2.0 * PI;

/// Flat metric written in curvilinear coordinates: the pullback of the
/// Euclidean metric by `x ↦ (x + ε sin 2πy, y + ε sin 2πx)`.
pub fn curvilinear_flat(spec: GridSpec, eps: f64) -> Result<MetricField> {
    let t = SymTensorField::from_fn(spec, |x, y| {
        let j = Mat2::new(1.0, TAU * eps * (TAU * y).cos(), TAU * eps * (TAU * x).cos(), 1.0);
        Sym2::IDENTITY.congruence(&j)
    });
    MetricField::new(t)
}

pub fn manufactured_vector(spec: GridSpec) -> VectorField {
    VectorField::from_fn(spec, |x, y| [(TAU * x).sin() * (TAU * y).cos(), 0.5 * (TAU * (x + y)).cos()])
}

pub fn manufactured_tensor(spec: GridSpec) -> SymTensorField {
    SymTensorField::from_fn(spec, |x, y| {
        Sym2::new((TAU * y).cos(), 0.3 * (TAU * (x - y)).sin(), 0.5 + (TAU * x).sin() * (TAU * y).sin())
    })
}

/// `|σ(L_Xγ, S) + 2∫(div S)(X) dvol|` with the pointwise (Christoffel) divergence.
pub fn adjointness_defect(g: &MetricField, x: &VectorField, s: &SymTensorField) -> Result<f64> {
    let geom = MetricGeometry::new(g)?;
    let lhs = geom.sigma(&geom.lie_derivative(x), s);
    let div = divergence(g, s)?;
    let rhs = (&div.contract(x) * &volume_density(g)).integrate();
    Ok((lhs + 2.0 * rhs).abs())
}

/// Smooth metric used by the equivariance studies.
pub fn manufactured_metric(spec: GridSpec) -> Result<MetricField> {
    MetricField::new(SymTensorField::from_fn(spec, |x, y| {
        Sym2::new(1.0 + 0.2 * (TAU * x).sin(), 0.1 * (TAU * (x + y)).cos(), 1.0 + 0.15 * (TAU * y).cos())
    }))
}

/// Smooth velocity of size about 0.1 relative to the manufactured metric.
pub fn manufactured_velocity(spec: GridSpec) -> SymTensorField {
    SymTensorField::from_fn(spec, |x, y| {
        Sym2::new(0.1 * (TAU * y).sin(), 0.05 * (TAU * x).cos(), -0.08 * (TAU * (x - y)).sin())
    })
}

/// `‖μ(φ, exp_γ S) − exp_{μ(φ,γ)}(μ(φ,S))‖_σ / ‖exp_γ S‖_σ`, norms at the
/// transported endpoint.
pub fn exp_commutator(g: &MetricField, s: &SymTensorField, phi: &DiffeoGrid, ode_tol: f64) -> Result<f64> {
    let end = l2_exp(g, s, 1.0, ode_tol)?;
    let moved_end = phi.pullback(end.endpoint())?;
    let other = l2_exp(&phi.pullback(g)?, &phi.pullback_tensor(s)?, 1.0, ode_tol)?;
    let geom = MetricGeometry::new(&moved_end)?;
    Ok(geom.sigma_norm(&(other.endpoint().tensor() - moved_end.tensor())) / geom.sigma_norm(moved_end.tensor()))
}

/// Time-one flow of a small smooth field.
pub fn manufactured_flow(spec: GridSpec) -> Result<DiffeoGrid> {
    let y = VectorField::from_fn(spec, |x, y| [0.02 * (TAU * y).sin(), 0.015 * (TAU * (x - y)).cos()]);
    DiffeoGrid::flow_exp(&y, 1.0)
}

/// Least-squares slope of `log e` against `log h`, with `h = 1/N`.
pub fn observed_order(ns: &[usize], errors: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = ns.iter().zip(errors).map(|(&n, &e)| (-(n as f64).ln(), e.ln())).collect();
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (sx / m, sy / m);
    let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    num / den
}

#[derive(Debug, Clone)]
pub struct RefinementRow {
    pub n: usize,
    pub error: f64,
}

#[derive(Debug, Clone)]
pub struct RefinementStudy {
    pub rows: Vec<RefinementRow>,
    pub order: f64,
}

fn study(ns: &[usize], f: impl Fn(GridSpec) -> Result<f64>) -> Result<RefinementStudy> {
    let rows = ns
        .iter()
        .map(|&n| Ok(RefinementRow { n, error: f(GridSpec::new(n)?)? }))
        .collect::<Result<Vec<_>>>()?;
    let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
    Ok(RefinementStudy { order: observed_order(ns, &errors), rows })
}

/// Adjointness defect on a curvilinear flat metric over the given resolutions.
pub fn adjointness_study(ns: &[usize]) -> Result<RefinementStudy> {
    study(ns, |spec| {
        adjointness_defect(&curvilinear_flat(spec, 0.03)?, &manufactured_vector(spec), &manufactured_tensor(spec))
    })
}

/// Commutator of the exponential with a smooth flow over the given resolutions.
pub fn equivariance_study(ns: &[usize], ode_tol: f64) -> Result<RefinementStudy> {
    study(ns, |spec| {
        exp_commutator(&manufactured_metric(spec)?, &manufactured_velocity(spec), &manufactured_flow(spec)?, ode_tol)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_exact_power_law() {
        let ns = [16, 32, 64];
        let e: Vec<f64> = ns.iter().map(|&n| 3.0 * (n as f64).powf(-2.5)).collect();
        assert!((observed_order(&ns, &e) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn curvilinear_metric_is_flat_and_non_constant() {
        let spec = GridSpec::new(16).unwrap();
        let g = curvilinear_flat(spec, 0.03).unwrap();
        assert!(!MetricGeometry::new(&g).unwrap().constants_are_killing());
        // volume density is |det Dψ| = 1 − (2πε)² cos 2πx cos 2πy
        let vol = volume_density(&g);
        let (i, j) = (3, 5);
        let [x, y] = spec.center(i, j);
        let c = TAU * 0.03;
        assert!((vol.get(i, j) - (1.0 - c * c * (TAU * x).cos() * (TAU * y).cos())).abs() < 1e-14);
    }

    #[test]
    fn adjointness_defect_converges() {
        let s = adjointness_study(&[16, 32, 64]).unwrap();
        assert!(s.order >= 1.9, "{s:?}");
    }

    #[test]
    fn lattice_translation_commutes_exactly() {
        let spec = GridSpec::new(16).unwrap();
        let g = manufactured_metric(spec).unwrap();
        let s = manufactured_velocity(spec);
        let t = DiffeoGrid::lattice(spec, Mat2::IDENTITY, [3, -2]).unwrap();
        assert!(exp_commutator(&g, &s, &t, 1e-10).unwrap() <= 1e-12);
    }
}
