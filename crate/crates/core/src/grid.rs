//! Periodic N×N discretization of the flat torus `[0,1)²`.
//!
//! Samples live at cell centers `((i+½)h, (j+½)h)` with `h = 1/N` and are stored
//! row-major with the axis-1 index `i` running fastest: `values[j*N + i]`.
//! Derivatives use the 4th-order central stencil with periodic wraparound and
//! point evaluation uses tensor-product cubic Lagrange interpolation over the
//! 4×4 surrounding samples.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::mat2::Sym2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridSpec {
    n: usize,
}

impl GridSpec {
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 || (1.0 / n as f64) * n as f64 != 1.0 {
            return Err(Error::InvalidGrid(n));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Number of cells.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    /// Inverse of [`GridSpec::index`].
    #[inline]
    pub fn cell(&self, idx: usize) -> (usize, usize) {
        (idx % self.n, idx / self.n)
    }

    #[inline]
    pub fn wrap(&self, k: isize) -> usize {
        k.rem_euclid(self.n as isize) as usize
    }

    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        let h = self.h();
        [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]
    }

    pub fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self.n != other.n {
            return Err(Error::GridMismatch { left: self.n, right: other.n });
        }
        Ok(())
    }

    /// Interpolation stencil for a point; the point is reduced mod 1 first.
    pub fn stencil(&self, p: [f64; 2]) -> Stencil {
        let (ix, wx) = axis_weights(self.n, p[0]);
        let (iy, wy) = axis_weights(self.n, p[1]);
        Stencil { ix, iy, wx, wy, n: self.n }
    }
}

/// Reduce a coordinate to `[0, 1)`.
pub fn reduce_unit(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    // rem_euclid can round up to exactly 1.0 for tiny negative inputs
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

// Offsets closer than this to a node are snapped onto it, so that sample
// points reproduce stored values exactly.
const NODE_SNAP: f64 = 1e-12;

fn axis_weights(n: usize, x: f64) -> ([usize; 4], [f64; 4]) {
    let s = reduce_unit(x) * n as f64 - 0.5;
    let mut base = s.floor();
    let mut t = s - base;
    if t < NODE_SNAP {
        t = 0.0;
    } else if t > 1.0 - NODE_SNAP {
        t = 0.0;
        base += 1.0;
    }
    let b = base as isize;
    let idx = [-1isize, 0, 1, 2].map(|o| (b + o).rem_euclid(n as isize) as usize);
    let w = [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ];
    (idx, w)
}

/// Precomputed bicubic weights for one evaluation point.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    ix: [usize; 4],
    iy: [usize; 4],
    wx: [f64; 4],
    wy: [f64; 4],
    n: usize,
}

impl Stencil {
    pub fn apply(&self, values: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (b, &jy) in self.iy.iter().enumerate() {
            let row = &values[jy * self.n..(jy + 1) * self.n];
            let mut r = 0.0;
            for (a, &ix) in self.ix.iter().enumerate() {
                r += self.wx[a] * row[ix];
            }
            acc += self.wy[b] * r;
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    spec: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::Validation(format!(
                "expected {} samples, got {}",
                spec.len(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite sample at index {k}")));
        }
        Ok(Self { spec, values })
    }

    pub(crate) fn from_vec(spec: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), spec.len());
        Self { spec, values }
    }

    pub fn zeros(spec: GridSpec) -> Self {
        Self::constant(spec, 0.0)
    }

    pub fn constant(spec: GridSpec, c: f64) -> Self {
        Self { spec, values: vec![c; spec.len()] }
    }

    /// Samples `f(x, y)` at every cell center.
    pub fn from_fn(spec: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..spec.len())
            .map(|k| {
                let (i, j) = spec.cell(k);
                let [x, y] = spec.center(i, j);
                f(x, y)
            })
            .collect();
        Self { spec, values }
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.spec.index(i, j)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_vec(self.spec, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.spec, other.spec);
        Self::from_vec(
            self.spec,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Periodic bicubic interpolation at `p` (reduced mod 1).
    pub fn interpolate(&self, p: [f64; 2]) -> f64 {
        self.spec.stencil(p).apply(&self.values)
    }

    /// 4th-order central difference along `axis`.
    pub fn partial(&self, axis: Axis) -> Self {
        let n = self.spec.n;
        let scale = 1.0 / (12.0 * self.spec.h());
        let mut out = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                let at = |d: isize| -> f64 {
                    match axis {
                        Axis::X => self.values[self.spec.index(self.spec.wrap(i as isize + d), j)],
                        Axis::Y => self.values[self.spec.index(i, self.spec.wrap(j as isize + d))],
                    }
                };
                out[self.spec.index(i, j)] = (8.0 * (at(1) - at(-1)) - (at(2) - at(-2))) * scale;
            }
        }
        Self::from_vec(self.spec, out)
    }

    /// Midpoint-rule integral over the unit torus.
    pub fn integrate(&self) -> f64 {
        let h = self.spec.h();
        h * h * self.values.iter().sum::<f64>()
    }

    /// Periodic shift by whole cells: `out[i, j] = self[i - di, j - dj]`.
    pub fn shift(&self, di: isize, dj: isize) -> Self {
        let s = self.spec;
        let mut out = vec![0.0; s.len()];
        for j in 0..s.n {
            for i in 0..s.n {
                out[s.index(s.wrap(i as isize + di), s.wrap(j as isize + dj))] =
                    self.values[s.index(i, j)];
            }
        }
        Self::from_vec(s, out)
    }
}

impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, o: &ScalarField) -> ScalarField {
        self.zip_map(o, |a, b| a + b)
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, o: &ScalarField) -> ScalarField {
        self.zip_map(o, |a, b| a - b)
    }
}

impl Mul<f64> for &ScalarField {
    type Output = ScalarField;
    fn mul(self, s: f64) -> ScalarField {
        self.map(|a| a * s)
    }
}

impl Mul for &ScalarField {
    type Output = ScalarField;
    fn mul(self, o: &ScalarField) -> ScalarField {
        self.zip_map(o, |a, b| a * b)
    }
}

/// Contravariant vector field `(X¹, X²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub x1: ScalarField,
    pub x2: ScalarField,
}

impl VectorField {
    pub fn new(x1: ScalarField, x2: ScalarField) -> Result<Self> {
        x1.spec().ensure_same(&x2.spec())?;
        Ok(Self { x1, x2 })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        Self { x1: ScalarField::zeros(spec), x2: ScalarField::zeros(spec) }
    }

    pub fn constant(spec: GridSpec, v: [f64; 2]) -> Self {
        Self { x1: ScalarField::constant(spec, v[0]), x2: ScalarField::constant(spec, v[1]) }
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(f64, f64) -> [f64; 2]) -> Self {
        Self {
            x1: ScalarField::from_fn(spec, |x, y| f(x, y)[0]),
            x2: ScalarField::from_fn(spec, |x, y| f(x, y)[1]),
        }
    }

    pub fn spec(&self) -> GridSpec {
        self.x1.spec()
    }

    pub fn at(&self, idx: usize) -> [f64; 2] {
        [self.x1.values[idx], self.x2.values[idx]]
    }

    pub fn interpolate(&self, p: [f64; 2]) -> [f64; 2] {
        let st = self.spec().stencil(p);
        [st.apply(&self.x1.values), st.apply(&self.x2.values)]
    }

    pub fn max_norm(&self) -> f64 {
        (0..self.spec().len())
            .map(|k| {
                let v = self.at(k);
                v[0].hypot(v[1])
            })
            .fold(0.0, f64::max)
    }

    pub fn mean(&self) -> [f64; 2] {
        [self.x1.mean(), self.x2.mean()]
    }

    pub fn shift(&self, di: isize, dj: isize) -> Self {
        Self { x1: self.x1.shift(di, dj), x2: self.x2.shift(di, dj) }
    }

    /// Component-wise `self + a·other`.
    pub fn axpy(&self, a: f64, other: &VectorField) -> Self {
        Self {
            x1: self.x1.zip_map(&other.x1, |x, y| x + a * y),
            x2: self.x2.zip_map(&other.x2, |x, y| x + a * y),
        }
    }

    pub(crate) fn from_cells(spec: GridSpec, cells: impl Iterator<Item = [f64; 2]>) -> Self {
        let mut a = Vec::with_capacity(spec.len());
        let mut b = Vec::with_capacity(spec.len());
        for v in cells {
            a.push(v[0]);
            b.push(v[1]);
        }
        Self { x1: ScalarField::from_vec(spec, a), x2: ScalarField::from_vec(spec, b) }
    }
}

/// Symmetric covariant 2-tensor field; only `S₁₁, S₁₂, S₂₂` are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensorField {
    pub s11: ScalarField,
    pub s12: ScalarField,
    pub s22: ScalarField,
}

impl SymTensorField {
    pub fn new(s11: ScalarField, s12: ScalarField, s22: ScalarField) -> Result<Self> {
        s11.spec().ensure_same(&s12.spec())?;
        s11.spec().ensure_same(&s22.spec())?;
        Ok(Self { s11, s12, s22 })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        constant_field(spec, Sym2::ZERO)
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(f64, f64) -> Sym2) -> Self {
        Self::from_cells(
            spec,
            (0..spec.len()).map(|k| {
                let (i, j) = spec.cell(k);
                let [x, y] = spec.center(i, j);
                f(x, y)
            }),
        )
    }

    pub fn spec(&self) -> GridSpec {
        self.s11.spec()
    }

    #[inline]
    pub fn at(&self, idx: usize) -> Sym2 {
        Sym2::new(self.s11.values[idx], self.s12.values[idx], self.s22.values[idx])
    }

    pub fn interpolate(&self, p: [f64; 2]) -> Sym2 {
        let st = self.spec().stencil(p);
        Sym2::new(st.apply(&self.s11.values), st.apply(&self.s12.values), st.apply(&self.s22.values))
    }

    pub fn map_cells(&self, f: impl Fn(Sym2) -> Sym2) -> Self {
        let spec = self.spec();
        Self::from_cells(spec, (0..spec.len()).map(|k| f(self.at(k))))
    }

    pub fn from_cells(spec: GridSpec, cells: impl Iterator<Item = Sym2>) -> Self {
        let mut a = Vec::with_capacity(spec.len());
        let mut b = Vec::with_capacity(spec.len());
        let mut c = Vec::with_capacity(spec.len());
        for s in cells {
            a.push(s.a11);
            b.push(s.a12);
            c.push(s.a22);
        }
        Self {
            s11: ScalarField::from_vec(spec, a),
            s12: ScalarField::from_vec(spec, b),
            s22: ScalarField::from_vec(spec, c),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.s11.max_abs().max(self.s12.max_abs()).max(self.s22.max_abs())
    }

    pub fn shift(&self, di: isize, dj: isize) -> Self {
        Self { s11: self.s11.shift(di, dj), s12: self.s12.shift(di, dj), s22: self.s22.shift(di, dj) }
    }

    /// Component-wise `self + a·other`.
    pub fn axpy(&self, a: f64, other: &SymTensorField) -> Self {
        Self {
            s11: self.s11.zip_map(&other.s11, |x, y| x + a * y),
            s12: self.s12.zip_map(&other.s12, |x, y| x + a * y),
            s22: self.s22.zip_map(&other.s22, |x, y| x + a * y),
        }
    }
}

/// Field holding `m` at every cell.
pub fn constant_field(spec: GridSpec, m: Sym2) -> SymTensorField {
    SymTensorField {
        s11: ScalarField::constant(spec, m.a11),
        s12: ScalarField::constant(spec, m.a12),
        s22: ScalarField::constant(spec, m.a22),
    }
}

macro_rules! componentwise_ops {
    ($ty:ident { $($c:ident),+ }) => {
        impl Add for &$ty {
            type Output = $ty;
            fn add(self, o: &$ty) -> $ty {
                $ty { $($c: &self.$c + &o.$c),+ }
            }
        }
        impl Sub for &$ty {
            type Output = $ty;
            fn sub(self, o: &$ty) -> $ty {
                $ty { $($c: &self.$c - &o.$c),+ }
            }
        }
        impl Mul<f64> for &$ty {
            type Output = $ty;
            fn mul(self, s: f64) -> $ty {
                $ty { $($c: &self.$c * s),+ }
            }
        }
        impl Neg for &$ty {
            type Output = $ty;
            fn neg(self) -> $ty {
                self * -1.0
            }
        }
    };
}

componentwise_ops!(VectorField { x1, x2 });
componentwise_ops!(SymTensorField { s11, s12, s22 });

/// A point of discretized Riem(T²): a symmetric tensor field that is
/// positive-definite at every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField(SymTensorField);

impl MetricField {
    pub fn new(g: SymTensorField) -> Result<Self> {
        let spec = g.spec();
        for k in 0..spec.len() {
            if !g.at(k).is_positive_definite() {
                let (i, j) = spec.cell(k);
                return Err(Error::NotPositiveDefinite { i, j });
            }
        }
        Ok(Self(g))
    }

    pub fn identity(spec: GridSpec) -> Self {
        Self(constant_field(spec, Sym2::IDENTITY))
    }

    pub fn constant(spec: GridSpec, m: Sym2) -> Result<Self> {
        Self::new(constant_field(spec, m))
    }

    pub fn spec(&self) -> GridSpec {
        self.0.spec()
    }

    #[inline]
    pub fn at(&self, idx: usize) -> Sym2 {
        self.0.at(idx)
    }

    pub fn tensor(&self) -> &SymTensorField {
        &self.0
    }

    pub fn into_tensor(self) -> SymTensorField {
        self.0
    }

    pub fn shift(&self, di: isize, dj: isize) -> Self {
        Self(self.0.shift(di, dj))
    }
}

impl AsRef<SymTensorField> for MetricField {
    fn as_ref(&self) -> &SymTensorField {
        &self.0
    }
}
