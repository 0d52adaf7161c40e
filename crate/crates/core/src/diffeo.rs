//! Diffeomorphisms of the discretized torus and their action on tensors.
//!
//! A map is stored as `φ(x) = A x + u(x) mod 1` where `A` is one of the eight
//! signed permutation matrices (the linear maps that preserve the cell-center
//! lattice) and `u` is a periodic displacement sampled at cell centers. The
//! inverse `φ⁻¹(y) = A⁻¹ y + v(y)` is cached and recomputed by fixed-point
//! iteration whenever a new map is built.
//!
//! Maps that send cell centers to cell centers (`u` a constant multiple of
//! `h`) are flagged as lattice maps; they act on sampled fields by an exact
//! permutation of samples.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{reduce_unit, Axis, GridSpec, MetricField, SymTensorField, VectorField};
use crate::mat2::Mat2;

const INVERSE_TOL: f64 = 1e-12;
const INVERSE_MAX_ITER: usize = 200;

/// The eight linear maps of the square lattice: rotations by multiples of a
/// quarter turn, then the same composed with the reflection `x ↦ −x`.
pub fn signed_permutations() -> [Mat2; 8] {
    [
        Mat2::new(1.0, 0.0, 0.0, 1.0),
        Mat2::new(0.0, -1.0, 1.0, 0.0),
        Mat2::new(-1.0, 0.0, 0.0, -1.0),
        Mat2::new(0.0, 1.0, -1.0, 0.0),
        Mat2::new(-1.0, 0.0, 0.0, 1.0),
        Mat2::new(0.0, 1.0, 1.0, 0.0),
        Mat2::new(1.0, 0.0, 0.0, -1.0),
        Mat2::new(0.0, -1.0, -1.0, 0.0),
    ]
}

fn is_signed_permutation(a: &Mat2) -> bool {
    signed_permutations().contains(a)
}

/// Signed difference `a − b` reduced to `[-½, ½)` in each coordinate.
pub fn torus_delta(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let r = |d: f64| reduce_unit(d + 0.5) - 0.5;
    [r(a[0] - b[0]), r(a[1] - b[1])]
}

pub fn torus_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = torus_delta(a, b);
    d[0].hypot(d[1])
}

fn is_constant(v: &VectorField) -> bool {
    let c = v.at(0);
    (0..v.spec().len()).all(|k| v.at(k) == c)
}

#[derive(Debug, Clone)]
pub struct DiffeoGrid {
    spec: GridSpec,
    linear: Mat2,
    u: VectorField,
    v: VectorField,
    lattice_shift: Option<[i64; 2]>,
    inverse_residual: f64,
}

impl DiffeoGrid {
    pub fn identity(spec: GridSpec) -> Self {
        Self::lattice(spec, Mat2::IDENTITY, [0, 0]).expect("identity is a lattice map")
    }

    /// `x ↦ A x + shift·h`; exact on samples.
    pub fn lattice(spec: GridSpec, linear: Mat2, shift: [i64; 2]) -> Result<Self> {
        if !is_signed_permutation(&linear) {
            return Err(Error::Validation("linear part must be a signed permutation".into()));
        }
        let n = spec.n() as i64;
        let shift = [shift[0].rem_euclid(n), shift[1].rem_euclid(n)];
        let h = spec.h();
        let u = [shift[0] as f64 * h, shift[1] as f64 * h];
        let ainv = linear.transpose();
        let w = ainv.apply(u);
        Ok(Self {
            spec,
            linear,
            u: VectorField::constant(spec, u),
            v: VectorField::constant(spec, [-w[0], -w[1]]),
            lattice_shift: Some(shift),
            inverse_residual: 0.0,
        })
    }

    /// Translation `x ↦ x + a`. Lattice translations are recognised and flagged.
    pub fn translation(spec: GridSpec, a: [f64; 2]) -> Self {
        let n = spec.n() as f64;
        let cells = [a[0] * n, a[1] * n];
        if cells.iter().all(|c| c.round() == *c && c.abs() < 1e15) {
            return Self::lattice(spec, Mat2::IDENTITY, [cells[0] as i64, cells[1] as i64])
                .expect("identity is a signed permutation");
        }
        Self {
            spec,
            linear: Mat2::IDENTITY,
            u: VectorField::constant(spec, a),
            v: VectorField::constant(spec, [-a[0], -a[1]]),
            lattice_shift: None,
            inverse_residual: 0.0,
        }
    }

    /// `x ↦ x + u(x)`.
    pub fn from_displacement(u: VectorField) -> Result<Self> {
        Self::from_parts(Mat2::IDENTITY, u)
    }

    /// `x ↦ A x + u(x)`; validates orientation and builds the inverse.
    pub fn from_parts(linear: Mat2, u: VectorField) -> Result<Self> {
        if !is_signed_permutation(&linear) {
            return Err(Error::Validation("linear part must be a signed permutation".into()));
        }
        let spec = u.spec();
        if (0..spec.len()).any(|k| !(u.at(k)[0].is_finite() && u.at(k)[1].is_finite())) {
            return Err(Error::StepFailure("non-finite displacement".into()));
        }
        check_orientation(&linear, &u)?;
        let (v, inverse_residual) = inverse_displacement(&linear, &u)?;
        Ok(Self { spec, linear, u, v, lattice_shift: None, inverse_residual })
    }

    /// Rebuilds a map from stored parts, trusting the given inverse.
    pub(crate) fn from_stored(
        linear: Mat2,
        u: VectorField,
        v: VectorField,
        lattice_shift: Option<[i64; 2]>,
        inverse_residual: f64,
    ) -> Result<Self> {
        if !is_signed_permutation(&linear) {
            return Err(Error::Validation("linear part must be a signed permutation".into()));
        }
        let spec = u.spec();
        spec.ensure_same(&v.spec())?;
        if lattice_shift.is_none() {
            check_orientation(&linear, &u)?;
        }
        Ok(Self { spec, linear, u, v, lattice_shift, inverse_residual })
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn linear(&self) -> Mat2 {
        self.linear
    }

    pub fn displacement(&self) -> &VectorField {
        &self.u
    }

    pub fn inverse_displacement(&self) -> &VectorField {
        &self.v
    }

    pub fn lattice_shift(&self) -> Option<[i64; 2]> {
        self.lattice_shift
    }

    /// `max |φ(φ⁻¹(y)) − y|` over cell centers at construction time.
    pub fn inverse_residual(&self) -> f64 {
        self.inverse_residual
    }

    /// `φ(p)` reduced to the unit square.
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let a = self.linear.apply(p);
        let d = self.u.interpolate(p);
        [reduce_unit(a[0] + d[0]), reduce_unit(a[1] + d[1])]
    }

    /// `φ⁻¹(p)` reduced to the unit square.
    pub fn apply_inverse(&self, p: [f64; 2]) -> [f64; 2] {
        let a = self.linear.transpose().apply(p);
        let d = self.v.interpolate(p);
        [reduce_unit(a[0] + d[0]), reduce_unit(a[1] + d[1])]
    }

    /// Image of the cell center with flat index `idx`, unreduced.
    fn image_of_cell(&self, idx: usize) -> [f64; 2] {
        let (i, j) = self.spec.cell(idx);
        let a = self.linear.apply(self.spec.center(i, j));
        let d = self.u.at(idx);
        [a[0] + d[0], a[1] + d[1]]
    }

    /// `max_x |φ(x) − ψ(x)|` over cell centers, measured on the torus.
    pub fn distance(&self, other: &DiffeoGrid) -> Result<f64> {
        self.spec.ensure_same(&other.spec)?;
        Ok((0..self.spec.len())
            .map(|k| torus_distance(self.image_of_cell(k), other.image_of_cell(k)))
            .fold(0.0, f64::max))
    }

    /// Largest displacement from the linear part.
    pub fn max_displacement(&self) -> f64 {
        self.u.max_norm()
    }

    /// Mean displacement, the translational part of a map near the identity.
    pub fn mean_displacement(&self) -> [f64; 2] {
        self.u.mean()
    }

    /// Doubled-coordinate source cell for a lattice pullback.
    fn lattice_source(&self, shift: [i64; 2], i: usize, j: usize) -> usize {
        let n2 = 2 * self.spec.n() as i64;
        let y = [2 * i as i64 + 1 - 2 * shift[0], 2 * j as i64 + 1 - 2 * shift[1]];
        let ai = self.linear.transpose();
        let x = [
            (ai.m11 as i64 * y[0] + ai.m12 as i64 * y[1]).rem_euclid(n2),
            (ai.m21 as i64 * y[0] + ai.m22 as i64 * y[1]).rem_euclid(n2),
        ];
        self.spec.index(((x[0] - 1) / 2) as usize, ((x[1] - 1) / 2) as usize)
    }

    /// Pullback by the inverse, `(φ⁻¹)* S`: `J(y)ᵀ S(φ⁻¹(y)) J(y)` with `J = Dφ⁻¹`.
    pub fn pullback_tensor(&self, s: &SymTensorField) -> Result<SymTensorField> {
        self.spec.ensure_same(&s.spec())?;
        let spec = self.spec;
        if let Some(shift) = self.lattice_shift {
            let j = self.linear.transpose();
            let cells: Vec<_> = (0..spec.len())
                .map(|k| {
                    let (i, jj) = spec.cell(k);
                    s.at(self.lattice_source(shift, i, jj)).congruence(&j)
                })
                .collect();
            return Ok(SymTensorField::from_cells(spec, cells.into_iter()));
        }
        let jac = jacobians(&self.linear.transpose(), &self.v);
        let ainv = self.linear.transpose();
        let cells: Vec<_> = (0..spec.len())
            .into_par_iter()
            .map(|k| {
                let (i, j) = spec.cell(k);
                let a = ainv.apply(spec.center(i, j));
                let d = self.v.at(k);
                s.interpolate([a[0] + d[0], a[1] + d[1]]).congruence(&jac[k])
            })
            .collect();
        Ok(SymTensorField::from_cells(spec, cells.into_iter()))
    }

    /// The left action `μ(φ, γ) = (φ⁻¹)* γ`.
    pub fn pullback(&self, g: &MetricField) -> Result<MetricField> {
        let t = self.pullback_tensor(g.tensor())?;
        MetricField::new(t).map_err(|e| match e {
            Error::NotPositiveDefinite { i, j } => Error::PositivityLoss(format!(
                "pulled-back metric is not positive-definite at cell ({i}, {j}); the grid is too coarse for this map"
            )),
            other => other,
        })
    }

    /// `φ ∘ ψ`.
    pub fn compose(&self, psi: &DiffeoGrid) -> Result<DiffeoGrid> {
        self.spec.ensure_same(&psi.spec)?;
        let spec = self.spec;
        let linear = self.linear * psi.linear;
        if let (Some(a), Some(b)) = (self.lattice_shift, psi.lattice_shift) {
            let s = self.linear.apply([b[0] as f64, b[1] as f64]);
            return DiffeoGrid::lattice(spec, linear, [s[0] as i64 + a[0], s[1] as i64 + a[1]]);
        }
        let outer_constant = is_constant(&self.u).then(|| self.u.at(0));
        let cells: Vec<[f64; 2]> = (0..spec.len())
            .into_par_iter()
            .map(|k| {
                let inner = self.linear.apply(psi.u.at(k));
                let outer = match outer_constant {
                    Some(c) => c,
                    None => self.u.interpolate(psi.image_of_cell(k)),
                };
                [inner[0] + outer[0], inner[1] + outer[1]]
            })
            .collect();
        let u = VectorField::from_cells(spec, cells.into_iter());
        DiffeoGrid::from_parts(linear, u)
    }

    pub fn invert(&self) -> Result<DiffeoGrid> {
        if let Some(s) = self.lattice_shift {
            let ai = self.linear.transpose();
            let t = ai.apply([s[0] as f64, s[1] as f64]);
            return DiffeoGrid::lattice(self.spec, ai, [-(t[0] as i64), -(t[1] as i64)]);
        }
        let ai = self.linear.transpose();
        let (v2, res) = inverse_displacement(&ai, &self.v)?;
        check_orientation(&ai, &self.v)?;
        Ok(DiffeoGrid {
            spec: self.spec,
            linear: ai,
            u: self.v.clone(),
            v: v2,
            lattice_shift: None,
            inverse_residual: res,
        })
    }

    /// Time-`t` flow of the stationary field `x`.
    pub fn flow_exp(x: &VectorField, t: f64) -> Result<DiffeoGrid> {
        let spec = x.spec();
        if is_constant(x) {
            let c = x.at(0);
            return Ok(DiffeoGrid::translation(spec, [c[0] * t, c[1] * t]));
        }
        let xmax = x.max_norm();
        let steps = ((4.0 * t.abs() * xmax / spec.h()).ceil() as usize).max(32);
        let dt = t / steps as f64;
        let cells: Vec<Option<[f64; 2]>> = (0..spec.len())
            .into_par_iter()
            .map(|k| {
                let (i, j) = spec.cell(k);
                let p0 = spec.center(i, j);
                let f = |d: [f64; 2]| x.interpolate([p0[0] + d[0], p0[1] + d[1]]);
                let mut d = [0.0f64; 2];
                for _ in 0..steps {
                    let k1 = f(d);
                    let k2 = f([d[0] + 0.5 * dt * k1[0], d[1] + 0.5 * dt * k1[1]]);
                    let k3 = f([d[0] + 0.5 * dt * k2[0], d[1] + 0.5 * dt * k2[1]]);
                    let k4 = f([d[0] + dt * k3[0], d[1] + dt * k3[1]]);
                    for c in 0..2 {
                        d[c] += dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
                    }
                    if !(d[0].is_finite() && d[1].is_finite()) {
                        return None;
                    }
                }
                Some(d)
            })
            .collect();
        if cells.iter().any(Option::is_none) {
            return Err(Error::StepFailure("flow integration produced non-finite positions".into()));
        }
        DiffeoGrid::from_displacement(VectorField::from_cells(spec, cells.into_iter().flatten()))
    }
}

/// `d/dt μ(φ_t, γ)` at `t = 0` for the flow `φ_t` of `x`, i.e. `−L_X γ`.
pub fn action_derivative(g: &MetricField, x: &VectorField) -> SymTensorField {
    -&crate::tensor::lie_derivative_metric(g.tensor(), x)
}

/// `A + ∇u` at every cell; entry `(a, b)` is `∂(Ax + u)ᵃ/∂xᵇ`.
fn jacobians(linear: &Mat2, u: &VectorField) -> Vec<Mat2> {
    let d11 = u.x1.partial(Axis::X);
    let d12 = u.x1.partial(Axis::Y);
    let d21 = u.x2.partial(Axis::X);
    let d22 = u.x2.partial(Axis::Y);
    (0..u.spec().len())
        .map(|k| {
            *linear + Mat2::new(d11.values()[k], d12.values()[k], d21.values()[k], d22.values()[k])
        })
        .collect()
}

/// The Jacobian determinant must keep the sign of `det A` everywhere.
fn check_orientation(linear: &Mat2, u: &VectorField) -> Result<()> {
    let sign = linear.det().signum();
    let spec = u.spec();
    for (k, j) in jacobians(linear, u).iter().enumerate() {
        if !(j.det() * sign > 0.0) {
            let (i, jj) = spec.cell(k);
            return Err(Error::JacobianSignFlip { i, j: jj });
        }
    }
    Ok(())
}

/// Solves `v(y) = −A⁻¹ u(A⁻¹y + v(y))` by fixed-point iteration; also returns
/// the inverse-consistency residual.
fn inverse_displacement(linear: &Mat2, u: &VectorField) -> Result<(VectorField, f64)> {
    let spec = u.spec();
    let ai = linear.transpose();
    if is_constant(u) {
        let w = ai.apply(u.at(0));
        return Ok((VectorField::constant(spec, [-w[0], -w[1]]), 0.0));
    }
    let results: Vec<std::result::Result<([f64; 2], f64), f64>> = (0..spec.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = spec.cell(k);
            let y = spec.center(i, j);
            let base = ai.apply(y);
            let mut v = [0.0f64; 2];
            let mut change = f64::INFINITY;
            for _ in 0..INVERSE_MAX_ITER {
                let w = ai.apply(u.interpolate([base[0] + v[0], base[1] + v[1]]));
                let nv = [-w[0], -w[1]];
                change = (nv[0] - v[0]).abs().max((nv[1] - v[1]).abs());
                v = nv;
                if change <= INVERSE_TOL {
                    let x = [base[0] + v[0], base[1] + v[1]];
                    let fx = linear.apply(x);
                    let d = u.interpolate(x);
                    let res = torus_distance([fx[0] + d[0], fx[1] + d[1]], y);
                    return Ok((v, res));
                }
                if !change.is_finite() {
                    break;
                }
            }
            Err(change)
        })
        .collect();
    let mut cells = Vec::with_capacity(spec.len());
    let mut residual: f64 = 0.0;
    for r in results {
        match r {
            Ok((v, res)) => {
                cells.push(v);
                residual = residual.max(res);
            }
            Err(change) => {
                return Err(Error::NoConvergence {
                    what: "inverse map",
                    iterations: INVERSE_MAX_ITER,
                    residual: change,
                })
            }
        }
    }
    Ok((VectorField::from_cells(spec, cells.into_iter()), residual))
}
