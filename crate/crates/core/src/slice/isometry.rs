use rayon::prelude::*;

use crate::diffeo::{signed_permutations, DiffeoGrid};
use crate::error::Result;
use crate::grid::{GridSpec, MetricField};
use crate::tensor::MetricGeometry;

use super::chart::{slice_decompose, DecomposeOptions};

/// All `8N²` maps `x ↦ A x + k h` with `A` a signed permutation.
pub fn lattice_maps(spec: GridSpec) -> Vec<DiffeoGrid> {
    let n = spec.n() as i64;
    let mut out = Vec::with_capacity(8 * spec.len());
    for a in signed_permutations() {
        for j in 0..n {
            for i in 0..n {
                out.push(DiffeoGrid::lattice(spec, a, [i, j]).expect("signed permutation"));
            }
        }
    }
    out
}

/// `‖μ(ι, γ) − γ‖_σ / ‖γ‖_σ`, norms at γ.
pub fn isometry_defect(geom: &MetricGeometry, iota: &DiffeoGrid) -> Result<f64> {
    let g = geom.metric();
    let moved = iota.pullback_tensor(g.tensor())?;
    Ok(geom.sigma_norm(&(&moved - g.tensor())) / geom.sigma_norm(g.tensor()))
}

/// Lattice maps that preserve `g` up to `tol` in relative σ-norm.
pub fn isometry_candidates(g: &MetricField, tol: f64) -> Result<Vec<DiffeoGrid>> {
    let geom = MetricGeometry::new(g)?;
    let maps = lattice_maps(g.spec());
    let keep: Vec<bool> = maps
        .par_iter()
        .map(|m| isometry_defect(&geom, m).map(|d| d <= tol))
        .collect::<Result<_>>()?;
    Ok(maps.into_iter().zip(keep).filter_map(|(m, k)| k.then_some(m)).collect())
}

#[derive(Debug, Clone)]
pub struct ConjugationOptions {
    /// Isometry tolerance for both metrics.
    pub iso_tol: f64,
    /// Largest accepted distance between a conjugate and an isometry of the base.
    pub match_tol: f64,
    pub decompose: DecomposeOptions,
}

impl Default for ConjugationOptions {
    fn default() -> Self {
        Self { iso_tol: 1e-8, match_tol: 1e-6, decompose: DecomposeOptions::default() }
    }
}

#[derive(Debug, Clone)]
pub struct ConjugationCheck {
    pub linear: [f64; 4],
    pub shift: [i64; 2],
    /// Distance from `f⁻¹ ∘ ι ∘ f` to the nearest isometry of the base.
    pub distance: f64,
    /// Isometry defect of the conjugate acting on the base.
    pub defect: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct ConjugationReport {
    pub f: DiffeoGrid,
    pub decomposition_residual: f64,
    pub base_isometries: usize,
    pub checks: Vec<ConjugationCheck>,
}

impl ConjugationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Checks `f⁻¹ Iso(g) f ⊂ Iso(γ)` over lattice isometries of `g`, with `f` the
/// gauge of the slice decomposition `g = μ(f, s)`.
pub fn conjugate_isometries(g0: &MetricField, g: &MetricField, opts: &ConjugationOptions) -> Result<ConjugationReport> {
    let dec = slice_decompose(g0, g, &opts.decompose)?;
    let f = dec.phi;
    let f_inv = f.invert()?;
    let base = isometry_candidates(g0, opts.iso_tol)?;
    let geom = MetricGeometry::new(g0)?;
    let isos = isometry_candidates(g, opts.iso_tol)?;
    let checks = isos
        .par_iter()
        .map(|iota| {
            let c = f_inv.compose(&iota.compose(&f)?)?;
            let mut distance = f64::INFINITY;
            for b in &base {
                distance = distance.min(c.distance(b)?);
            }
            let defect = isometry_defect(&geom, &c)?;
            let l = iota.linear();
            Ok(ConjugationCheck {
                linear: [l.m11, l.m12, l.m21, l.m22],
                shift: iota.lattice_shift().unwrap_or([0, 0]),
                distance,
                defect,
                passed: distance <= opts.match_tol,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConjugationReport { f, decomposition_residual: dec.residual, base_isometries: base.len(), checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SymTensorField;
    use crate::mat2::Sym2;
    use crate::rng::{perturbed_identity, SplitMix64};
    use std::f64::consts::PI;

    fn spec(n: usize) -> GridSpec {
        GridSpec::new(n).unwrap()
    }

    #[test]
    fn flat_metric_has_every_lattice_symmetry() {
        let s = spec(8);
        assert_eq!(isometry_candidates(&MetricField::identity(s), 1e-12).unwrap().len(), 8 * 64);
    }

    #[test]
    fn generic_metric_has_only_identity() {
        let s = spec(8);
        let g = perturbed_identity(s, &mut SplitMix64::new(9), 0.05);
        let isos = isometry_candidates(&g, 1e-8).unwrap();
        assert_eq!(isos.len(), 1);
        assert_eq!(isos[0].lattice_shift(), Some([0, 0]));
    }

    #[test]
    fn one_dimensional_bump_symmetries() {
        // γ₁₁ = 1 + 0.1 sin 2πx is invariant under y ↦ ±y + c and x ↦ ½ − x
        let n = 8;
        let s = spec(n);
        let g = MetricField::new(SymTensorField::from_fn(s, |x, _| Sym2::diag(1.0 + 0.1 * (2.0 * PI * x).sin(), 1.0)))
            .unwrap();
        let isos = isometry_candidates(&g, 1e-12).unwrap();
        assert_eq!(isos.len(), 4 * n);
        for m in &isos {
            let l = m.linear();
            assert!(l.m12 == 0.0 && l.m21 == 0.0);
            let sh = m.lattice_shift().unwrap();
            if l.m11 == 1.0 {
                assert_eq!(sh[0], 0);
            } else {
                assert_eq!(sh[0] as usize, n / 2);
            }
        }
    }
}
