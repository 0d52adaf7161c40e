use crate::error::{Error, Result};
use crate::grid::{MetricField, SymTensorField, VectorField};
use crate::tensor::MetricGeometry;

/// `S = L_X γ + h` with `h` σ-orthogonal to every `L_Y γ`.
#[derive(Debug, Clone)]
pub struct SplitResult {
    /// Generator of the orbit-tangent part.
    pub x: VectorField,
    /// Divergence-free part.
    pub h: SymTensorField,
    /// `|σ(L_X γ, h)| / (‖L_X γ‖ ‖h‖)`, zero when either part vanishes.
    pub orthogonality_defect: f64,
    pub iterations: usize,
    /// Final residual of the normal equations, relative to
    /// `max(‖L*S‖, ‖S‖/h)`.
    pub residual: f64,
}

pub const DEFAULT_SPLIT_TOL: f64 = 1e-10;

/// Splits `s` at `g` into orbit-tangent and divergence-free parts.
pub fn orbit_split(g: &MetricField, s: &SymTensorField, tol: f64) -> Result<SplitResult> {
    orbit_split_with(&MetricGeometry::new(g)?, s, tol)
}

/// As [`orbit_split`], reusing cached metric data.
///
/// Solves `L*L X = L*S` by conjugate gradients in the γ-weighted inner
/// product on vector fields, for which `L*L` is symmetric positive
/// semidefinite. Starting from zero keeps the iterates orthogonal to the
/// kernel (Killing fields and grid-scale modes the stencil cannot see).
pub fn orbit_split_with(geom: &MetricGeometry, s: &SymTensorField, tol: f64) -> Result<SplitResult> {
    let spec = geom.spec();
    spec.ensure_same(&s.spec())?;
    // constant Killing fields span part of the kernel; rounding would
    // otherwise let them creep into the iterates
    let kernel: Vec<VectorField> = geom.killing_constants().into_iter().map(|c| VectorField::constant(spec, c)).collect();
    let project = |mut v: VectorField| {
        for k in &kernel {
            v = v.axpy(-geom.vector_inner(&v, k) / geom.vector_inner(k, k), k);
        }
        v
    };
    let apply = |x: &VectorField| project(geom.lie_adjoint(&geom.lie_derivative(x)));
    let b = project(geom.lie_adjoint(s));
    let b_norm = geom.vector_inner(&b, &b).max(0.0).sqrt();
    // ‖L*S‖ is at most a few ‖S‖/h; for nearly normal S the right-hand side
    // is rounding noise and a purely relative test would chase it into the
    // grid-scale kernel
    let reference = b_norm.max(geom.sigma_norm(s) / spec.h());
    let max_iter = 10 * spec.len();

    let mut x = VectorField::zeros(spec);
    let mut iterations = 0;
    let mut residual = 0.0;
    if b_norm > 0.0 {
        let mut r = b.clone();
        let mut p = r.clone();
        let mut rr = geom.vector_inner(&r, &r);
        residual = b_norm / reference;
        while residual > tol {
            if iterations >= max_iter {
                return Err(Error::SolverStall { iterations, residual });
            }
            let ap = apply(&p);
            let pap = geom.vector_inner(&p, &ap);
            if pap <= 0.0 {
                // p lies in the kernel; nothing left to reduce
                break;
            }
            let alpha = rr / pap;
            x = x.axpy(alpha, &p);
            r = r.axpy(-alpha, &ap);
            let rr_new = geom.vector_inner(&r, &r);
            iterations += 1;
            residual = rr_new.max(0.0).sqrt() / reference;
            p = r.axpy(rr_new / rr, &p);
            rr = rr_new;
        }
    }
    let x = project(x);
    let lx = geom.lie_derivative(&x);
    let h = s - &lx;
    let nl = geom.sigma_norm(&lx);
    let nh = geom.sigma_norm(&h);
    let orthogonality_defect = if nl > 0.0 && nh > 0.0 { geom.sigma(&lx, &h).abs() / (nl * nh) } else { 0.0 };
    Ok(SplitResult { x, h, orthogonality_defect, iterations, residual })
}

/// The divergence-free part alone.
pub fn normal_part(g: &MetricField, s: &SymTensorField, tol: f64) -> Result<SymTensorField> {
    Ok(orbit_split(g, s, tol)?.h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{constant_field, GridSpec};
    use crate::mat2::Sym2;
    use crate::rng::{perturbed_identity, smooth_symtensor, smooth_vector, SplitMix64};
    use crate::tensor::lie_derivative_metric;

    fn spec(n: usize) -> GridSpec {
        GridSpec::new(n).unwrap()
    }

    fn zero_mean(x: VectorField) -> VectorField {
        let m = x.mean();
        x.axpy(-1.0, &VectorField::constant(x.spec(), m))
    }

    #[test]
    fn constant_tensor_on_flat_metric_is_normal() {
        let s = spec(16);
        let g = MetricField::identity(s);
        let c = constant_field(s, Sym2::new(0.3, -0.1, 0.2));
        let r = orbit_split(&g, &c, 1e-10).unwrap();
        assert_eq!(r.x.max_norm(), 0.0);
        assert_eq!(r.h, c);
    }

    #[test]
    fn recovers_constructed_generator() {
        let s = spec(32);
        let g = MetricField::identity(s);
        let y = zero_mean(smooth_vector(s, &mut SplitMix64::new(3), 0.2));
        let c = constant_field(s, Sym2::new(0.3, -0.1, 0.2));
        let ly = lie_derivative_metric(g.tensor(), &y);
        let r = orbit_split(&g, &ly, 1e-12).unwrap();
        assert!((&r.x - &y).max_norm() < 1e-8, "{}", (&r.x - &y).max_norm());
        assert!(r.h.max_abs() < 1e-8);
        let r2 = orbit_split(&g, &(&ly + &c), 1e-12).unwrap();
        assert!((&r2.x - &y).max_norm() < 1e-8);
        assert!((&r2.h - &c).max_abs() < 1e-8);
    }

    #[test]
    fn split_is_orthogonal_on_curved_metric() {
        let s = spec(16);
        let g = perturbed_identity(s, &mut SplitMix64::new(5), 0.2);
        let geom = MetricGeometry::new(&g).unwrap();
        let t = smooth_symtensor(s, &mut SplitMix64::new(6), 0.3);
        let r = orbit_split_with(&geom, &t, 1e-11).unwrap();
        let recon = &geom.lie_derivative(&r.x) + &r.h;
        assert!(geom.sigma_norm(&(&recon - &t)) <= 1e-12 * geom.sigma_norm(&t));
        let div = geom.divergence_adjoint(&r.h);
        let div_s = geom.divergence_adjoint(&t);
        assert!(geom.one_form_norm(&div) <= 1e-9 * geom.one_form_norm(&div_s));
        for seed in 0..4 {
            let xp = smooth_vector(s, &mut SplitMix64::new(100 + seed), 0.3);
            let lx = geom.lie_derivative(&xp);
            let ip = geom.sigma(&lx, &r.h).abs();
            assert!(ip <= 1e-9 * geom.sigma_norm(&lx) * geom.sigma_norm(&r.h), "{ip}");
        }
    }
}
