use crate::diffeo::DiffeoGrid;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, MetricField, ScalarField, SymTensorField, VectorField};
use crate::krylov::gmres;
use crate::l2::{l2_exp, l2_exp_fixed, l2_log_with, LogOptions};
use crate::tensor::MetricGeometry;

use super::split::{orbit_split_with, DEFAULT_SPLIT_TOL};

#[derive(Debug, Clone, Copy)]
pub struct MembershipOptions {
    /// Largest gauge fraction `‖L_X γ‖ / ‖S‖` accepted for `S = log_γ(g)`.
    pub tol: f64,
    /// Slice radius relative to `‖γ‖_σ`.
    pub radius: f64,
    pub log_tol: f64,
    pub split_tol: f64,
}

impl Default for MembershipOptions {
    fn default() -> Self {
        Self { tol: 1e-6, radius: 0.1, log_tol: 1e-10, split_tol: DEFAULT_SPLIT_TOL }
    }
}

#[derive(Debug, Clone)]
pub struct Membership {
    pub member: bool,
    /// `‖log_γ g‖_σ / ‖γ‖_σ`, or the plain relative distance when outside the chart.
    pub relative_size: f64,
    /// `‖L_X γ‖_σ / ‖S‖_σ` for the split of `S = log_γ g`.
    pub divergence_defect: f64,
    /// Set when `g` is too far from γ for the logarithm.
    pub outside_chart: Option<String>,
}

/// Whether `g = exp_γ(h)` for a divergence-free `h` inside the slice radius.
pub fn slice_membership(g0: &MetricField, g: &MetricField, opts: &MembershipOptions) -> Result<Membership> {
    let geom = MetricGeometry::new(g0)?;
    let base_norm = geom.sigma_norm(g0.tensor());
    let dist = geom.sigma_norm(&(g.tensor() - g0.tensor())) / base_norm;
    let outside = |dist: f64, why: String| Membership {
        member: false,
        relative_size: dist,
        divergence_defect: f64::NAN,
        outside_chart: Some(why),
    };
    // the logarithm of anything this far out is larger than the radius anyway
    if dist > 2.0 * opts.radius {
        return Ok(outside(dist, "distance exceeds twice the slice radius".into()));
    }
    let s = match l2_log_with(g0, g, None, &LogOptions::with_tol(opts.log_tol)) {
        Ok(r) => r.velocity,
        Err(e) if e.is_numerical() => return Ok(outside(dist, e.to_string())),
        Err(e) => return Err(e),
    };
    let size = geom.sigma_norm(&s) / base_norm;
    let split = orbit_split_with(&geom, &s, opts.split_tol)?;
    let ns = geom.sigma_norm(&s);
    let defect = if ns > 0.0 { geom.sigma_norm(&geom.lie_derivative(&split.x)) / ns } else { 0.0 };
    Ok(Membership {
        member: defect <= opts.tol && size <= opts.radius,
        relative_size: size,
        divergence_defect: defect,
        outside_chart: None,
    })
}

#[derive(Debug, Clone)]
pub struct DecomposeOptions {
    /// Target relative reconstruction residual.
    pub tol: f64,
    pub max_iter: usize,
    pub split_tol: f64,
    /// Tolerance handed to the logarithm; defaults to `tol / 100`.
    pub log_tol: Option<f64>,
    /// Starting gauge; the identity when absent.
    pub initial: Option<DiffeoGrid>,
    /// When constant fields are Killing for γ, keep the gauge's mean
    /// displacement at zero (the decomposition is otherwise only defined up
    /// to translation).
    pub recenter: bool,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 30, split_tol: DEFAULT_SPLIT_TOL, log_tol: None, initial: None, recenter: true }
    }
}

impl DecomposeOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

#[derive(Debug, Clone)]
pub struct SliceDecomposition {
    pub phi: DiffeoGrid,
    pub h: SymTensorField,
    /// `‖μ(φ, exp_γ h) − g‖_σ / ‖g‖_σ`, norms at γ.
    pub residual: f64,
    pub iterations: usize,
    /// `‖div h‖ / ‖h‖` in the weighted norms at γ (zero for `h = 0`).
    pub divergence_defect: f64,
    /// Residual after each accepted iteration.
    pub history: Vec<f64>,
}

struct State {
    phi: DiffeoGrid,
    h: SymTensorField,
    schedule: Vec<f64>,
    pred: SymTensorField,
    r: SymTensorField,
    res: f64,
}

struct Problem<'a> {
    geom: &'a MetricGeometry,
    target: &'a MetricField,
    target_norm: f64,
    ode_tol: f64,
    split_tol: f64,
}

impl Problem<'_> {
    fn evaluate(&self, phi: DiffeoGrid, h: SymTensorField) -> Result<State> {
        let path = l2_exp(self.geom.metric(), &h, 1.0, self.ode_tol)?;
        let pred = phi.pullback(path.endpoint())?.into_tensor();
        let r = self.target.tensor() - &pred;
        let res = self.geom.sigma_norm(&r) / self.target_norm;
        Ok(State { phi, h, schedule: path.schedule().to_vec(), pred, r, res })
    }

    /// Gauge generator and slice increment suggested for a residual `z`:
    /// pull `z` back into the frame of the slice and split it at γ.
    fn model(&self, inv: &DiffeoGrid, z: &SymTensorField) -> Result<(VectorField, SymTensorField)> {
        let w = inv.pullback_tensor(z)?;
        let sp = orbit_split_with(self.geom, &w, self.split_tol)?;
        Ok((sp.x, sp.h))
    }

    fn perturbed(&self, st: &State, x: &VectorField, eta: &SymTensorField, t: f64) -> Result<SymTensorField> {
        let phi = st.phi.compose(&DiffeoGrid::flow_exp(x, -t)?)?;
        let e = l2_exp_fixed(self.geom.metric(), &st.h.axpy(t, eta), &st.schedule)?;
        phi.pullback_tensor(e.tensor())
    }

    /// Newton direction: solves `J M z = r` by GMRES, where `J` is the
    /// derivative of `(φ, h) ↦ μ(φ, exp_γ h)` (by forward differences on the
    /// fixed step schedule) and `M` the split model above.
    fn newton_direction(&self, st: &State) -> Result<(VectorField, SymTensorField)> {
        let spec = self.geom.spec();
        let inv = st.phi.invert()?;
        let failure = std::cell::RefCell::new(None);
        let apply = |v: &[f64]| -> Vec<f64> {
            let z = unflatten(spec, v);
            let out = (|| -> Result<SymTensorField> {
                let (x, eta) = self.model(&inv, &z)?;
                let scale = x.max_norm().max(eta.max_abs());
                if scale == 0.0 {
                    return Ok(SymTensorField::zeros(spec));
                }
                let t = FD_STEP / scale;
                let p = self.perturbed(st, &x, &eta, t)?;
                Ok(&(&p - &st.pred) * (1.0 / t))
            })();
            match out {
                Ok(d) => flatten(&d),
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    vec![0.0; v.len()]
                }
            }
        };
        let out = gmres(apply, |v| v.to_vec(), &flatten(&st.r), KRYLOV_TOL, 20, 60);
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        if out.relative_residual >= 1.0 {
            return Err(Error::NoConvergence { what: "slice decomposition", iterations: 0, residual: st.res });
        }
        self.model(&inv, &unflatten(spec, &out.x))
    }
}

const FD_STEP: f64 = 1e-6;
const KRYLOV_TOL: f64 = 1e-3;
const STALL_RATIO: f64 = 0.9;

/// Translate the gauge so that its mean displacement vanishes, moving `h`
/// along so that `μ(φ, exp_γ h)` is unchanged.
fn recenter(phi: DiffeoGrid, h: SymTensorField) -> Result<(DiffeoGrid, SymTensorField)> {
    let m = phi.mean_displacement();
    if m == [0.0, 0.0] {
        return Ok((phi, h));
    }
    let spec = phi.spec();
    let t = DiffeoGrid::translation(spec, [-m[0], -m[1]]);
    let phi = phi.compose(&t)?;
    let h = DiffeoGrid::translation(spec, m).pullback_tensor(&h)?;
    Ok((phi, h))
}

fn flatten(s: &SymTensorField) -> Vec<f64> {
    [s.s11.values(), s.s12.values(), s.s22.values()].concat()
}

fn unflatten(spec: GridSpec, v: &[f64]) -> SymTensorField {
    let n = spec.len();
    let part = |k: usize| ScalarField::new(spec, v[k * n..(k + 1) * n].to_vec()).expect("length matches");
    SymTensorField { s11: part(0), s12: part(1), s22: part(2) }
}

/// Writes `g = μ(φ, exp_γ h)` with `h` divergence-free at γ.
///
/// Inexact Newton iteration on `(φ, h)`: the gauge moves along flows
/// `φ ← φ ∘ Fl(X, −1)` and `h` only by divergence-free increments, so `h`
/// stays in the slice throughout. Steps that do not reduce the residual are
/// halved.
pub fn slice_decompose(g0: &MetricField, g: &MetricField, opts: &DecomposeOptions) -> Result<SliceDecomposition> {
    let spec = g0.spec();
    spec.ensure_same(&g.spec())?;
    let geom = MetricGeometry::new(g0)?;
    let log_tol = opts.log_tol.unwrap_or(opts.tol * 1e-2).max(1e-14);
    let problem = Problem {
        geom: &geom,
        target: g,
        target_norm: geom.sigma_norm(g.tensor()),
        ode_tol: (log_tol * 1e-2).clamp(1e-14, 1e-8),
        split_tol: opts.split_tol,
    };
    let recentering = opts.recenter && geom.constants_are_killing();

    let phi0 = opts.initial.clone().unwrap_or_else(|| DiffeoGrid::identity(spec));
    let mut st = problem.evaluate(phi0, SymTensorField::zeros(spec))?;
    let mut history = vec![st.res];
    let mut iterations = 0;
    while st.res > opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::NoConvergence { what: "slice decomposition", iterations, residual: st.res });
        }
        iterations += 1;
        let (x, eta) = problem.newton_direction(&st)?;
        let mut lambda = 1.0;
        let mut next = None;
        for _ in 0..8 {
            let attempt = (|| -> Result<State> {
                let mut phi = st.phi.compose(&DiffeoGrid::flow_exp(&x, -lambda)?)?;
                let mut h = st.h.axpy(lambda, &eta);
                if recentering {
                    (phi, h) = recenter(phi, h)?;
                }
                problem.evaluate(phi, h)
            })();
            match attempt {
                Ok(s) if s.res < st.res => {
                    next = Some(s);
                    break;
                }
                Ok(_) => {}
                Err(e) if e.is_numerical() => {}
                Err(e) => return Err(e),
            }
            lambda *= 0.5;
        }
        match next {
            Some(s) => st = s,
            None => {
                return Err(Error::NoConvergence { what: "slice decomposition", iterations, residual: st.res })
            }
        }
        history.push(st.res);
        let n = history.len();
        if n >= 3 && history[n - 1] > STALL_RATIO * history[n - 2] && history[n - 2] > STALL_RATIO * history[n - 3] {
            return Err(Error::NoConvergence { what: "slice decomposition", iterations, residual: st.res });
        }
    }

    let nh = geom.sigma_norm(&st.h);
    let divergence_defect = if nh > 0.0 {
        let d = geom.divergence_adjoint(&st.h);
        // one-form norm scaled like a tensor norm: ‖div h‖ ≈ k‖h‖ for wavenumber k
        geom.one_form_norm(&d) / nh
    } else {
        0.0
    };
    Ok(SliceDecomposition { phi: st.phi, h: st.h, residual: st.res, iterations, divergence_defect, history })
}

/// Samples of a path of metrics on a uniform time grid.
#[derive(Debug, Clone)]
pub struct MetricPath {
    pub start: f64,
    pub end: f64,
    pub points: Vec<MetricField>,
}

impl MetricPath {
    pub fn new(start: f64, end: f64, points: Vec<MetricField>) -> Result<Self> {
        let first = points.first().ok_or_else(|| Error::Validation("empty path".into()))?.spec();
        for p in &points {
            first.ensure_same(&p.spec())?;
        }
        Ok(Self { start, end, points })
    }

    /// Samples `f` at `count` equally spaced times.
    pub fn sample(start: f64, end: f64, count: usize, f: impl Fn(f64) -> Result<MetricField>) -> Result<Self> {
        let count = count.max(2);
        let pts = (0..count).map(|k| f(Self::time_at(start, end, count, k))).collect::<Result<Vec<_>>>()?;
        Self::new(start, end, pts)
    }

    fn time_at(start: f64, end: f64, count: usize, k: usize) -> f64 {
        if count == 1 {
            start
        } else {
            start + (end - start) * k as f64 / (count - 1) as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.points.len()).map(|k| Self::time_at(self.start, self.end, self.points.len(), k)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct HorizontalLift {
    pub lifted: MetricPath,
    pub gauges: Vec<DiffeoGrid>,
    /// Largest per-step decomposition residual.
    pub max_residual: f64,
    /// Largest per-step divergence defect of the lifted velocity.
    pub max_divergence_defect: f64,
}

/// Lifts a path to one whose discrete velocities are divergence-free at the
/// current point, recording the gauge that carries it back onto the input.
pub fn horizontal_lift(path: &MetricPath, opts: &DecomposeOptions) -> Result<HorizontalLift> {
    let spec = path.points[0].spec();
    let ode_tol = (opts.log_tol.unwrap_or(opts.tol * 1e-2) * 1e-2).clamp(1e-14, 1e-8);
    let mut lifted = vec![path.points[0].clone()];
    let mut gauges = vec![DiffeoGrid::identity(spec)];
    let mut max_residual: f64 = 0.0;
    let mut max_div: f64 = 0.0;
    for k in 0..path.points.len() - 1 {
        let base = lifted[k].clone();
        let step_opts = DecomposeOptions { initial: Some(gauges[k].clone()), recenter: false, ..opts.clone() };
        let d = slice_decompose(&base, &path.points[k + 1], &step_opts)?;
        max_residual = max_residual.max(d.residual);
        max_div = max_div.max(d.divergence_defect);
        let next = if d.h.max_abs() == 0.0 { base.clone() } else { l2_exp(&base, &d.h, 1.0, ode_tol)?.endpoint().clone() };
        lifted.push(next);
        gauges.push(d.phi);
    }
    Ok(HorizontalLift {
        lifted: MetricPath::new(path.start, path.end, lifted)?,
        gauges,
        max_residual,
        max_divergence_defect: max_div,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridSpec, VectorField};
    use crate::rng::{perturbed_identity, smooth_symtensor, SplitMix64};
    use crate::slice::normal_part;
    use std::f64::consts::PI;

    fn spec(n: usize) -> GridSpec {
        GridSpec::new(n).unwrap()
    }

    fn rel(geom: &MetricGeometry, a: &SymTensorField, b: &SymTensorField) -> f64 {
        geom.sigma_norm(&(a - b)) / geom.sigma_norm(geom.metric().tensor())
    }

    #[test]
    fn decompose_base_point() {
        let s = spec(16);
        let g = perturbed_identity(s, &mut SplitMix64::new(1), 0.1);
        let d = slice_decompose(&g, &g, &DecomposeOptions::default()).unwrap();
        assert_eq!(d.residual, 0.0);
        assert_eq!(d.iterations, 0);
        assert_eq!(d.phi.lattice_shift(), Some([0, 0]));
        assert_eq!(d.h.max_abs(), 0.0);
    }

    #[test]
    fn decompose_recovers_slice_and_gauge() {
        let s = spec(32);
        let g0 = perturbed_identity(s, &mut SplitMix64::new(2), 0.3);
        let geom = MetricGeometry::new(&g0).unwrap();
        let raw = normal_part(&g0, &smooth_symtensor(s, &mut SplitMix64::new(3), 0.1), 1e-12).unwrap();
        let h0 = &raw * (0.05 * geom.sigma_norm(g0.tensor()) / geom.sigma_norm(&raw));
        let x = VectorField::from_fn(s, |x, y| [0.02 * (2.0 * PI * y).sin(), 0.015 * (2.0 * PI * (x - y)).cos()]);
        let phi0 = DiffeoGrid::flow_exp(&x, 1.0).unwrap();
        let g = phi0.pullback(l2_exp(&g0, &h0, 1.0, 1e-12).unwrap().endpoint()).unwrap();
        let d = slice_decompose(&g0, &g, &DecomposeOptions::default()).unwrap();
        assert!(d.residual <= 1e-6);
        assert!(rel(&geom, &d.h, &h0) < 1e-5);
        assert!(d.phi.distance(&phi0).unwrap() < 1e-5);
    }

    #[test]
    fn membership_examples() {
        let s = spec(16);
        let g0 = perturbed_identity(s, &mut SplitMix64::new(4), 0.1);
        let geom = MetricGeometry::new(&g0).unwrap();
        let opts = MembershipOptions::default();
        assert!(slice_membership(&g0, &g0, &opts).unwrap().member);
        let raw = normal_part(&g0, &smooth_symtensor(s, &mut SplitMix64::new(5), 0.1), 1e-12).unwrap();
        let h = &raw * (0.03 * geom.sigma_norm(g0.tensor()) / geom.sigma_norm(&raw));
        let p = l2_exp(&g0, &h, 1.0, 1e-12).unwrap().endpoint().clone();
        let m = slice_membership(&g0, &p, &opts).unwrap();
        assert!(m.member, "{m:?}");
        let x = VectorField::from_fn(s, |_, y| [(2.0 * PI * y).sin(), 0.0]);
        let gauge = DiffeoGrid::flow_exp(&x, 0.02).unwrap().pullback(&g0).unwrap();
        let m = slice_membership(&g0, &gauge, &opts).unwrap();
        assert!(!m.member && m.divergence_defect > 0.5, "{m:?}");
    }

    fn lift_opts() -> DecomposeOptions {
        DecomposeOptions::default()
    }

    #[test]
    fn lift_of_conformal_path_is_unchanged() {
        let s = spec(16);
        let path = MetricPath::sample(0.0, 1.0, 5, |t| {
            MetricField::constant(s, crate::mat2::Sym2::diag(1.0 + 0.1 * t, 1.0 + 0.1 * t))
        })
        .unwrap();
        let lift = horizontal_lift(&path, &lift_opts()).unwrap();
        for (a, b) in lift.lifted.points.iter().zip(&path.points) {
            assert!((a.tensor() - b.tensor()).max_abs() < 1e-7);
        }
        for g in &lift.gauges {
            assert!(g.max_displacement() < 1e-12);
        }
    }

    #[test]
    fn lift_of_gauge_path_is_constant() {
        let s = spec(16);
        let g0 = MetricField::identity(s);
        let x = VectorField::from_fn(s, |x, y| [0.03 * (2.0 * PI * y).sin(), 0.02 * (2.0 * PI * x).cos()]);
        let path =
            MetricPath::sample(0.0, 1.0, 5, |t| DiffeoGrid::flow_exp(&x, t)?.pullback(&g0)).unwrap();
        let lift = horizontal_lift(&path, &lift_opts()).unwrap();
        let geom = MetricGeometry::new(&g0).unwrap();
        for p in &lift.lifted.points {
            assert!(rel(&geom, p.tensor(), g0.tensor()) < 1e-6);
        }
        for (g, p) in lift.gauges.iter().zip(&path.points) {
            let back = g.pullback(&g0).unwrap();
            assert!(rel(&geom, back.tensor(), p.tensor()) < 1e-6);
        }
    }

    #[test]
    fn lift_of_mixed_path_follows_the_geodesic() {
        let s = spec(32);
        let g0 = perturbed_identity(s, &mut SplitMix64::new(6), 0.1);
        let geom = MetricGeometry::new(&g0).unwrap();
        let raw = normal_part(&g0, &smooth_symtensor(s, &mut SplitMix64::new(7), 0.1), 1e-12).unwrap();
        let h0 = &raw * (0.05 * geom.sigma_norm(g0.tensor()) / geom.sigma_norm(&raw));
        let x = VectorField::from_fn(s, |x, y| [0.02 * (2.0 * PI * y).sin(), 0.015 * (2.0 * PI * (x - y)).cos()]);
        let geo = |t: f64| -> Result<MetricField> {
            if t == 0.0 {
                return Ok(g0.clone());
            }
            Ok(l2_exp(&g0, &(&h0 * t), 1.0, 1e-12)?.endpoint().clone())
        };
        let path = MetricPath::sample(0.0, 1.0, 5, |t| DiffeoGrid::flow_exp(&x, t)?.pullback(&geo(t)?)).unwrap();
        let lift = horizontal_lift(&path, &lift_opts()).unwrap();
        for (p, t) in lift.lifted.points.iter().zip(path.times()) {
            let err = rel(&geom, p.tensor(), geo(t).unwrap().tensor());
            assert!(err < 1e-5, "t = {t}: {err}");
        }
        assert!(lift.max_residual <= 1e-6);
    }
}
