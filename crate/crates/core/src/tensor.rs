//! Pointwise and differential tensor operations on grid fields.
//!
//! Every derivative goes through [`ScalarField::partial`], so all discrete
//! identities degrade at the same rate under refinement.

use crate::error::{Error, Result};
use crate::grid::{Axis, GridSpec, MetricField, ScalarField, SymTensorField, VectorField};
use crate::mat2::Sym2;

/// Covariant components `(ω₁, ω₂)` of a 1-form field.
#[derive(Debug, Clone, PartialEq)]
pub struct OneFormField {
    pub w1: ScalarField,
    pub w2: ScalarField,
}

impl OneFormField {
    pub fn spec(&self) -> GridSpec {
        self.w1.spec()
    }

    pub fn at(&self, idx: usize) -> [f64; 2] {
        [self.w1.values()[idx], self.w2.values()[idx]]
    }

    pub fn max_abs(&self) -> f64 {
        self.w1.max_abs().max(self.w2.max_abs())
    }

    /// Pointwise contraction `ω(X) = ωᵢXⁱ`.
    pub fn contract(&self, x: &VectorField) -> ScalarField {
        &(&self.w1 * &x.x1) + &(&self.w2 * &x.x2)
    }

    fn from_cells(spec: GridSpec, cells: impl Iterator<Item = [f64; 2]>) -> Self {
        let v = VectorField::from_cells(spec, cells);
        Self { w1: v.x1, w2: v.x2 }
    }
}

/// Levi-Civita symbols; `upper[k]` holds `Γᵏᵢⱼ` as a symmetric field in `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChristoffelField {
    pub upper: [SymTensorField; 2],
}

impl ChristoffelField {
    pub fn at(&self, k: usize, idx: usize) -> Sym2 {
        self.upper[k].at(idx)
    }

    pub fn max_abs(&self) -> f64 {
        self.upper[0].max_abs().max(self.upper[1].max_abs())
    }
}

fn inverse_cells(g: &MetricField) -> Result<Vec<Sym2>> {
    let spec = g.spec();
    (0..spec.len())
        .map(|k| {
            let m = g.at(k);
            match (m.is_positive_definite(), m.inverse()) {
                (true, Some(inv)) => Ok(inv),
                _ => {
                    let (i, j) = spec.cell(k);
                    Err(Error::NotPositiveDefinite { i, j })
                }
            }
        })
        .collect()
}

pub fn metric_inverse(g: &MetricField) -> Result<SymTensorField> {
    Ok(SymTensorField::from_cells(g.spec(), inverse_cells(g)?.into_iter()))
}

/// `√det γ` at every cell.
pub fn volume_density(g: &MetricField) -> ScalarField {
    let spec = g.spec();
    ScalarField::from_vec(spec, (0..spec.len()).map(|k| g.at(k).det().sqrt()).collect())
}

fn partials(t: &SymTensorField, axis: Axis) -> SymTensorField {
    SymTensorField { s11: t.s11.partial(axis), s12: t.s12.partial(axis), s22: t.s22.partial(axis) }
}

#[inline]
fn comp(s: &Sym2, a: usize, b: usize) -> f64 {
    match (a, b) {
        (0, 0) => s.a11,
        (1, 1) => s.a22,
        _ => s.a12,
    }
}

pub fn christoffels(g: &MetricField) -> Result<ChristoffelField> {
    let spec = g.spec();
    let inv = inverse_cells(g)?;
    let d = [partials(g.tensor(), Axis::X), partials(g.tensor(), Axis::Y)];
    let mut upper = [Vec::with_capacity(spec.len()), Vec::with_capacity(spec.len())];
    for (idx, ginv) in inv.iter().enumerate() {
        let dg = [d[0].at(idx), d[1].at(idx)];
        // lowered symbols Γ_{l,ij} = ½(∂ᵢγ_lj + ∂ⱼγ_li − ∂_lγ_ij)
        let lowered = |l: usize, i: usize, j: usize| {
            0.5 * (comp(&dg[i], l, j) + comp(&dg[j], l, i) - comp(&dg[l], i, j))
        };
        for (k, out) in upper.iter_mut().enumerate() {
            let raise = |i: usize, j: usize| {
                comp(ginv, k, 0) * lowered(0, i, j) + comp(ginv, k, 1) * lowered(1, i, j)
            };
            out.push(Sym2::new(raise(0, 0), raise(0, 1), raise(1, 1)));
        }
    }
    let [u0, u1] = upper;
    Ok(ChristoffelField {
        upper: [
            SymTensorField::from_cells(spec, u0.into_iter()),
            SymTensorField::from_cells(spec, u1.into_iter()),
        ],
    })
}

/// Lie derivative of a symmetric 2-tensor field along `x`:
/// `(L_X γ)ᵢⱼ = Xᵏ∂ₖγᵢⱼ + γₖⱼ∂ᵢXᵏ + γᵢₖ∂ⱼXᵏ`.
pub fn lie_derivative_metric(g: &SymTensorField, x: &VectorField) -> SymTensorField {
    let dg = [partials(g, Axis::X), partials(g, Axis::Y)];
    lie_derivative_with(g, &dg, x)
}

fn lie_derivative_with(g: &SymTensorField, dg: &[SymTensorField; 2], x: &VectorField) -> SymTensorField {
    let spec = g.spec();
    // dx[i][k] = ∂ᵢXᵏ
    let dx = [
        [x.x1.partial(Axis::X), x.x2.partial(Axis::X)],
        [x.x1.partial(Axis::Y), x.x2.partial(Axis::Y)],
    ];
    SymTensorField::from_cells(
        spec,
        (0..spec.len()).map(|idx| {
            let gm = g.at(idx);
            let v = x.at(idx);
            let transport = dg[0].at(idx) * v[0] + dg[1].at(idx) * v[1];
            let d = |i: usize, k: usize| dx[i][k].values()[idx];
            // (γ ∂X)ᵢⱼ-type term: Σₖ γₖⱼ ∂ᵢXᵏ
            let t = |i: usize, j: usize| comp(&gm, 0, j) * d(i, 0) + comp(&gm, 1, j) * d(i, 1);
            Sym2::new(
                transport.a11 + 2.0 * t(0, 0),
                transport.a12 + t(0, 1) + t(1, 0),
                transport.a22 + 2.0 * t(1, 1),
            )
        }),
    )
}

/// Index raising of both slots: `Sⁱʲ = γⁱᵃ Sₐᵦ γᵇʲ`.
fn raise_both(ginv: &Sym2, s: &Sym2) -> Sym2 {
    let m = ginv.to_mat() * s.to_mat() * ginv.to_mat();
    Sym2::new(m.m11, 0.5 * (m.m12 + m.m21), m.m22)
}

/// Covariant divergence `(div S)ⱼ = γⱼₗ ∇ᵢSⁱˡ`, computed through the Christoffel symbols.
pub fn divergence(g: &MetricField, s: &SymTensorField) -> Result<OneFormField> {
    let spec = g.spec();
    spec.ensure_same(&s.spec())?;
    let inv = inverse_cells(g)?;
    let gam = christoffels(g)?;
    let up = SymTensorField::from_cells(spec, (0..spec.len()).map(|k| raise_both(&inv[k], &s.at(k))));
    let d1 = partials(&up, Axis::X);
    let d2 = partials(&up, Axis::Y);
    Ok(OneFormField::from_cells(
        spec,
        (0..spec.len()).map(|idx| {
            let t = up.at(idx);
            let gk = [gam.at(0, idx), gam.at(1, idx)];
            let (a, b) = (d1.at(idx), d2.at(idx));
            let mut v = [0.0; 2];
            for (j, vj) in v.iter_mut().enumerate() {
                // ∂ᵢSⁱʲ
                let mut acc = comp(&a, 0, j) + comp(&b, 1, j);
                for i in 0..2 {
                    for k in 0..2 {
                        acc += comp(&gk[i], i, k) * comp(&t, k, j) + comp(&gk[j], i, k) * comp(&t, i, k);
                    }
                }
                *vj = acc;
            }
            let gm = g.at(idx);
            [gm.a11 * v[0] + gm.a12 * v[1], gm.a12 * v[0] + gm.a22 * v[1]]
        }),
    ))
}

/// Lowering: `ωᵢ = γᵢⱼXʲ`.
pub fn flat(g: &MetricField, x: &VectorField) -> OneFormField {
    let spec = g.spec();
    OneFormField::from_cells(
        spec,
        (0..spec.len()).map(|k| g.at(k).to_mat().apply(x.at(k))),
    )
}

/// Raising: `Xⁱ = γⁱʲωⱼ`.
pub fn sharp(g: &MetricField, w: &OneFormField) -> Result<VectorField> {
    let spec = g.spec();
    let inv = inverse_cells(g)?;
    Ok(VectorField::from_cells(spec, (0..spec.len()).map(|k| inv[k].to_mat().apply(w.at(k)))))
}

/// Pointwise `tr(γ⁻¹ S γ⁻¹ T)`.
pub fn trace_pairing(g: &MetricField, s: &SymTensorField, t: &SymTensorField) -> Result<ScalarField> {
    let spec = g.spec();
    spec.ensure_same(&s.spec())?;
    spec.ensure_same(&t.spec())?;
    let inv = inverse_cells(g)?;
    Ok(ScalarField::from_vec(
        spec,
        (0..spec.len()).map(|k| pair_at(&inv[k], &s.at(k), &t.at(k))).collect(),
    ))
}

#[inline]
pub(crate) fn pair_at(ginv: &Sym2, s: &Sym2, t: &Sym2) -> f64 {
    let a = ginv.to_mat() * s.to_mat();
    let b = ginv.to_mat() * t.to_mat();
    a.m11 * b.m11 + a.m12 * b.m21 + a.m21 * b.m12 + a.m22 * b.m22
}

/// Cached pointwise data of a metric, shared by the Lie-derivative operator,
/// its exact discrete adjoint, and the L² inner products.
///
/// The adjoint is built by summation by parts on the antisymmetric stencil, so
/// `sigma(L_X γ, S) == vector_inner(X, lie_adjoint(S))` holds to rounding at
/// every resolution.
#[derive(Debug, Clone)]
pub struct MetricGeometry {
    metric: MetricField,
    inv: Vec<Sym2>,
    density: Vec<f64>,
    dg: [SymTensorField; 2],
}

impl MetricGeometry {
    pub fn new(g: &MetricField) -> Result<Self> {
        let inv = inverse_cells(g)?;
        let density = (0..g.spec().len()).map(|k| g.at(k).det().sqrt()).collect();
        let dg = [partials(g.tensor(), Axis::X), partials(g.tensor(), Axis::Y)];
        Ok(Self { metric: g.clone(), inv, density, dg })
    }

    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    pub fn spec(&self) -> GridSpec {
        self.metric.spec()
    }

    pub fn inverse_at(&self, idx: usize) -> Sym2 {
        self.inv[idx]
    }

    pub fn density_at(&self, idx: usize) -> f64 {
        self.density[idx]
    }

    pub fn lie_derivative(&self, x: &VectorField) -> SymTensorField {
        lie_derivative_with(self.metric.tensor(), &self.dg, x)
    }

    /// Discrete L² inner product `h² Σ tr(γ⁻¹Sγ⁻¹T) √det γ`.
    pub fn sigma(&self, s: &SymTensorField, t: &SymTensorField) -> f64 {
        let h = self.spec().h();
        let sum: f64 = (0..self.spec().len())
            .map(|k| pair_at(&self.inv[k], &s.at(k), &t.at(k)) * self.density[k])
            .sum();
        h * h * sum
    }

    pub fn sigma_norm(&self, s: &SymTensorField) -> f64 {
        self.sigma(s, s).max(0.0).sqrt()
    }

    /// Weighted inner product on vector fields `h² Σ γ(X, Y) √det γ`.
    pub fn vector_inner(&self, x: &VectorField, y: &VectorField) -> f64 {
        let h = self.spec().h();
        let sum: f64 = (0..self.spec().len())
            .map(|k| {
                let a = x.at(k);
                let b = y.at(k);
                let g = self.metric.at(k);
                (g.a11 * a[0] * b[0] + g.a12 * (a[0] * b[1] + a[1] * b[0]) + g.a22 * a[1] * b[1])
                    * self.density[k]
            })
            .sum();
        h * h * sum
    }

    /// Covector `cₖ = (∂ₖγᵢⱼ)Pⁱʲ − 2∂ᵢ(γₖⱼPⁱʲ)` with `Pⁱʲ = √det γ · Sⁱʲ`.
    fn adjoint_covector(&self, s: &SymTensorField) -> [Vec<f64>; 2] {
        let spec = self.spec();
        let len = spec.len();
        let mut p = Vec::with_capacity(len);
        // M = γP = √det γ · S γ⁻¹, entries M_{k i}
        let mut m = [[vec![0.0; len], vec![0.0; len]], [vec![0.0; len], vec![0.0; len]]];
        for idx in 0..len {
            let sm = s.at(idx);
            let pk = raise_both(&self.inv[idx], &sm) * self.density[idx];
            let mk = self.metric.at(idx).to_mat() * pk.to_mat();
            m[0][0][idx] = mk.m11;
            m[0][1][idx] = mk.m12;
            m[1][0][idx] = mk.m21;
            m[1][1][idx] = mk.m22;
            p.push(pk);
        }
        let div_row = |row: &[Vec<f64>; 2]| -> Vec<f64> {
            let a = ScalarField::from_vec(spec, row[0].clone()).partial(Axis::X);
            let b = ScalarField::from_vec(spec, row[1].clone()).partial(Axis::Y);
            a.values().iter().zip(b.values()).map(|(u, v)| u + v).collect()
        };
        let dm = [div_row(&m[0]), div_row(&m[1])];
        let mut c = [vec![0.0; len], vec![0.0; len]];
        for idx in 0..len {
            for k in 0..2 {
                c[k][idx] = self.dg[k].at(idx).trace_product(&p[idx]) - 2.0 * dm[k][idx];
            }
        }
        c
    }

    /// Exact discrete adjoint of [`MetricGeometry::lie_derivative`] with respect to
    /// [`MetricGeometry::sigma`] and [`MetricGeometry::vector_inner`].
    pub fn lie_adjoint(&self, s: &SymTensorField) -> VectorField {
        let spec = self.spec();
        let c = self.adjoint_covector(s);
        VectorField::from_cells(
            spec,
            (0..spec.len()).map(|k| {
                let w = [c[0][k] / self.density[k], c[1][k] / self.density[k]];
                self.inv[k].to_mat().apply(w)
            }),
        )
    }

    /// Divergence in conservative form,
    /// `(div S)ₖ = (1/√det γ)∂ᵢ(√det γ Sⁱₖ) − ½(∂ₖγᵢⱼ)Sⁱʲ`,
    /// which equals `−½ (L*S)♭` exactly on the grid.
    pub fn divergence_adjoint(&self, s: &SymTensorField) -> OneFormField {
        let spec = self.spec();
        let c = self.adjoint_covector(s);
        OneFormField::from_cells(
            spec,
            (0..spec.len()).map(|k| [-0.5 * c[0][k] / self.density[k], -0.5 * c[1][k] / self.density[k]]),
        )
    }

    /// `‖ω‖` in the weighted 1-form norm induced by γ.
    pub fn one_form_norm(&self, w: &OneFormField) -> f64 {
        let h = self.spec().h();
        let sum: f64 = (0..self.spec().len())
            .map(|k| {
                let a = w.at(k);
                let gi = self.inv[k];
                (gi.a11 * a[0] * a[0] + 2.0 * gi.a12 * a[0] * a[1] + gi.a22 * a[1] * a[1]) * self.density[k]
            })
            .sum();
        (h * h * sum).max(0.0).sqrt()
    }

    /// Orthonormal basis (in the Euclidean sense) of the constant directions
    /// `c` with `L_c γ = cᵏ∂ₖγ = 0`.
    pub fn killing_constants(&self) -> Vec<[f64; 2]> {
        let scale = self.sigma(self.metric.tensor(), self.metric.tensor()).max(f64::MIN_POSITIVE);
        let (a, b, d) = (
            self.sigma(&self.dg[0], &self.dg[0]) / scale,
            self.sigma(&self.dg[0], &self.dg[1]) / scale,
            self.sigma(&self.dg[1], &self.dg[1]) / scale,
        );
        const ZERO: f64 = 1e-24;
        // eigenpairs of the 2×2 Gram matrix [[a, b], [b, d]]
        let mean = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        let (lo, hi) = (mean - rad, mean + rad);
        if hi <= ZERO {
            return vec![[1.0, 0.0], [0.0, 1.0]];
        }
        if lo > ZERO {
            return vec![];
        }
        // eigenvector for `lo`
        let v = if b.abs() > 0.0 { [b, lo - a] } else if a <= d { [1.0, 0.0] } else { [0.0, 1.0] };
        let n = v[0].hypot(v[1]);
        vec![[v[0] / n, v[1] / n]]
    }

    /// Whether the constant vector fields are Killing fields of γ
    /// (true exactly for spatially constant metrics).
    pub fn constants_are_killing(&self) -> bool {
        let scale = self.metric.tensor().max_abs().max(f64::MIN_POSITIVE);
        self.dg[0].max_abs() <= 1e-12 * scale && self.dg[1].max_abs() <= 1e-12 * scale
    }
}
