//! The L² metric on metric fields, its geodesics, and the local inverse of its
//! exponential map.
//!
//! The inner product of tangent tensors `S, T` at a metric `γ` is
//! `∫ tr(γ⁻¹Sγ⁻¹T) √det γ`. Its integrand at a cell only involves the values
//! of `γ, S, T` at that cell, so the energy `½∫ σ(c′, c′) dt` decouples and the
//! geodesic equation is a second-order ODE in each 3-dimensional SPD fiber:
//!
//! ```text
//! g″ = g′ g⁻¹ g′ − ½ tr(g⁻¹g′) g′ + ¼ tr(g⁻¹g′g⁻¹g′) g
//! ```
//!
//! obtained from the first variation of the energy. Integration is classical
//! RK4 with step doubling; the step size is shared by all cells and chosen from
//! the worst cell, which keeps the integrator equivariant under any
//! permutation of cells.

use crate::error::{Error, Result};
use crate::grid::{GridSpec, MetricField, SymTensorField};
use crate::mat2::Sym2;
use crate::tensor::{pair_at, trace_pairing, volume_density};

/// `σ_γ(S, T) = ∫ tr(γ⁻¹Sγ⁻¹T) dvol(γ)`.
pub fn l2_inner(g: &MetricField, s: &SymTensorField, t: &SymTensorField) -> Result<f64> {
    let pairing = trace_pairing(g, s, t)?;
    Ok((&pairing * &volume_density(g)).integrate())
}

pub fn l2_norm(g: &MetricField, s: &SymTensorField) -> Result<f64> {
    Ok(l2_inner(g, s, s)?.max(0.0).sqrt())
}

/// `‖a − b‖_σ / ‖base‖_σ`, all norms taken at `base`.
pub fn relative_distance(base: &MetricField, a: &SymTensorField, b: &SymTensorField) -> Result<f64> {
    Ok(l2_norm(base, &(a - b))? / l2_norm(base, base.tensor())?)
}

#[derive(Debug, Clone)]
pub struct PathSample {
    pub t: f64,
    pub point: MetricField,
    pub velocity: SymTensorField,
}

#[derive(Debug, Clone)]
pub struct GeodesicPath {
    pub base: MetricField,
    pub initial_velocity: SymTensorField,
    pub samples: Vec<PathSample>,
    /// Accepted RK4 steps.
    pub steps: usize,
    /// Largest accepted local error estimate.
    pub max_error_estimate: f64,
    schedule: Vec<f64>,
}

impl GeodesicPath {
    pub fn endpoint(&self) -> &MetricField {
        &self.samples.last().expect("path has samples").point
    }

    pub fn end_velocity(&self) -> &SymTensorField {
        &self.samples.last().expect("path has samples").velocity
    }

    /// Squared σ-speed `σ_{c(t)}(c′, c′)` at every sample.
    pub fn speeds(&self) -> Result<Vec<f64>> {
        self.samples.iter().map(|s| l2_inner(&s.point, &s.velocity, &s.velocity)).collect()
    }

    /// `max_t |speed(t) − speed(0)| / speed(0)`; zero for a constant path.
    pub fn speed_deviation(&self) -> Result<f64> {
        let v = self.speeds()?;
        let v0 = v[0];
        if v0 == 0.0 {
            return Ok(v.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        }
        Ok(v.iter().fold(0.0f64, |m, x| m.max((x - v0).abs())) / v0)
    }

    /// Signed step sizes of the accepted steps, in order.
    pub fn schedule(&self) -> &[f64] {
        &self.schedule
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExpOptions {
    pub tol: f64,
    pub max_steps: usize,
    /// Number of equal sub-intervals at whose ends the path is sampled.
    pub samples: usize,
}

impl Default for ExpOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_steps: 10_000, samples: 16 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    g: Sym2,
    v: Sym2,
}

#[inline]
fn acceleration(g: &Sym2, v: &Sym2) -> Option<Sym2> {
    if !g.is_positive_definite() {
        return None;
    }
    let gi = g.inverse()?;
    let a = gi.to_mat() * v.to_mat();
    let vgv = v.to_mat() * a;
    let tr_a = a.m11 + a.m22;
    let tr_aa = a.m11 * a.m11 + 2.0 * a.m12 * a.m21 + a.m22 * a.m22;
    let q = Sym2::new(vgv.m11, 0.5 * (vgv.m12 + vgv.m21), vgv.m22);
    Some(q - *v * (0.5 * tr_a) + *g * (0.25 * tr_aa))
}

fn rk4_cell(c: Cell, h: f64) -> Option<Cell> {
    let k1v = acceleration(&c.g, &c.v)?;
    let k1g = c.v;
    let g2 = c.g + k1g * (0.5 * h);
    let v2 = c.v + k1v * (0.5 * h);
    let k2v = acceleration(&g2, &v2)?;
    let k2g = v2;
    let g3 = c.g + k2g * (0.5 * h);
    let v3 = c.v + k2v * (0.5 * h);
    let k3v = acceleration(&g3, &v3)?;
    let k3g = v3;
    let g4 = c.g + k3g * h;
    let v4 = c.v + k3v * h;
    let k4v = acceleration(&g4, &v4)?;
    let k4g = v4;
    let w = h / 6.0;
    let g = c.g + (k1g + k2g * 2.0 + k3g * 2.0 + k4g) * w;
    let v = c.v + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * w;
    if !g.is_positive_definite() {
        return None;
    }
    Some(Cell { g, v })
}

/// Two half steps; this is the accepted update.
fn double_half(c: Cell, h: f64) -> Option<Cell> {
    rk4_cell(rk4_cell(c, 0.5 * h)?, 0.5 * h)
}

fn cells_of(g: &MetricField, s: &SymTensorField) -> Vec<Cell> {
    (0..g.spec().len()).map(|k| Cell { g: g.at(k), v: s.at(k) }).collect()
}

fn to_fields(spec: GridSpec, state: &[Cell]) -> Result<(MetricField, SymTensorField)> {
    let g = SymTensorField::from_cells(spec, state.iter().map(|c| c.g));
    let v = SymTensorField::from_cells(spec, state.iter().map(|c| c.v));
    let g = MetricField::new(g).map_err(|_| Error::PositivityLoss("geodesic left the SPD cone".into()))?;
    Ok((g, v))
}

/// Geodesic of the L² metric from `g` with initial velocity `s`, integrated to
/// `t_end` with local error tolerance `tol`.
pub fn l2_exp(g: &MetricField, s: &SymTensorField, t_end: f64, tol: f64) -> Result<GeodesicPath> {
    l2_exp_with(g, s, t_end, &ExpOptions { tol, ..ExpOptions::default() })
}

pub fn l2_exp_with(g: &MetricField, s: &SymTensorField, t_end: f64, opts: &ExpOptions) -> Result<GeodesicPath> {
    let spec = g.spec();
    spec.ensure_same(&s.spec())?;
    let n_samples = opts.samples.max(1);
    let mut state = cells_of(g, s);
    let mut samples = vec![PathSample { t: 0.0, point: g.clone(), velocity: s.clone() }];
    let mut schedule = Vec::new();
    let mut max_err: f64 = 0.0;
    let mut steps = 0usize;
    if t_end == 0.0 {
        return Ok(GeodesicPath {
            base: g.clone(),
            initial_velocity: s.clone(),
            samples,
            steps,
            max_error_estimate: 0.0,
            schedule,
        });
    }

    let dir = t_end.signum();
    let mut h = t_end.abs() / n_samples as f64;
    let min_h = t_end.abs() * 1e-12;
    let mut t = 0.0f64;
    for k in 1..=n_samples {
        // exact float target so that the final sample lands on t_end
        let target = if k == n_samples { t_end.abs() } else { t_end.abs() * k as f64 / n_samples as f64 };
        while t < target {
            let mut last = false;
            let mut step = h;
            if t + step >= target {
                step = target - t;
                last = true;
            }
            let signed = dir * step;
            let trial: Option<(Vec<Cell>, f64)> = (|| {
                let mut next = Vec::with_capacity(state.len());
                let mut err: f64 = 0.0;
                let mut scale: f64 = 1.0;
                for c in &state {
                    let full = rk4_cell(*c, signed)?;
                    let half = double_half(*c, signed)?;
                    err = err
                        .max((half.g - full.g).max_abs())
                        .max((half.v - full.v).max_abs());
                    scale = scale.max(half.g.max_abs()).max(half.v.max_abs());
                    next.push(half);
                }
                Some((next, err / 15.0 / scale))
            })();
            match trial {
                Some((next, err)) if err <= opts.tol => {
                    state = next;
                    schedule.push(signed);
                    steps += 1;
                    max_err = max_err.max(err);
                    t = if last { target } else { t + step };
                    if steps > opts.max_steps {
                        return Err(Error::ToleranceNotMet { tol: opts.tol, steps });
                    }
                    let grow = if err == 0.0 { 4.0 } else { (0.9 * (opts.tol / err).powf(0.2)).clamp(0.2, 4.0) };
                    // keep the pre-clipping step size when the step was shortened to hit a sample
                    h = if last { h.max(step * grow) } else { step * grow };
                }
                Some((_, err)) => {
                    h = step * (0.9 * (opts.tol / err).powf(0.2)).clamp(0.1, 0.5);
                    if h < min_h {
                        return Err(Error::ToleranceNotMet { tol: opts.tol, steps });
                    }
                }
                None => {
                    h = step * 0.25;
                    if h < min_h {
                        return Err(Error::PositivityLoss(format!(
                            "metric leaves the SPD cone near t = {:.6}; rescale the velocity",
                            dir * t
                        )));
                    }
                }
            }
        }
        let (point, velocity) = to_fields(spec, &state)?;
        samples.push(PathSample { t: dir * target, point, velocity });
    }

    Ok(GeodesicPath {
        base: g.clone(),
        initial_velocity: s.clone(),
        samples,
        steps,
        max_error_estimate: max_err,
        schedule,
    })
}

/// Re-integrate with a fixed step sequence; used for smooth finite differences.
fn replay(g: &MetricField, s: &SymTensorField, schedule: &[f64]) -> Option<Vec<Cell>> {
    let mut state = cells_of(g, s);
    for &h in schedule {
        for c in state.iter_mut() {
            *c = double_half(*c, h)?;
        }
    }
    Some(state)
}

/// Endpoint of the geodesic integrated with a given step sequence (as
/// recorded by [`GeodesicPath::schedule`]); smooth in `s`, unlike the adaptive
/// integrator.
pub fn l2_exp_fixed(g: &MetricField, s: &SymTensorField, schedule: &[f64]) -> Result<MetricField> {
    g.spec().ensure_same(&s.spec())?;
    let state = replay(g, s, schedule)
        .ok_or_else(|| Error::PositivityLoss("geodesic left the SPD cone".into()))?;
    Ok(to_fields(g.spec(), &state)?.0)
}

#[derive(Debug, Clone, Copy)]
pub struct LogOptions {
    pub tol: f64,
    pub ode_tol: f64,
    pub max_iter: usize,
}

impl LogOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ode_tol: (tol * 1e-2).clamp(1e-13, 1e-8), max_iter: 50 }
    }
}

#[derive(Debug, Clone)]
pub struct LogResult {
    pub velocity: SymTensorField,
    /// `‖exp(velocity) − target‖_σ / ‖target‖_σ` at the base.
    pub residual: f64,
    pub iterations: usize,
}

/// Initial velocity `S` with `exp_γ(S)` ≈ `target`, found by shooting.
pub fn l2_log(g: &MetricField, target: &MetricField, tol: f64) -> Result<SymTensorField> {
    Ok(l2_log_with(g, target, None, &LogOptions::with_tol(tol))?.velocity)
}

/// Newton shooting on the endpoint mismatch. The mismatch at a cell depends
/// only on the velocity at that cell, so the Jacobian is block diagonal; its
/// 3×3 blocks come from forward differences of the integrator replayed on the
/// accepted step sequence.
pub fn l2_log_with(
    g: &MetricField,
    target: &MetricField,
    initial: Option<&SymTensorField>,
    opts: &LogOptions,
) -> Result<LogResult> {
    let spec = g.spec();
    spec.ensure_same(&target.spec())?;
    let target_norm = l2_norm(g, target.tensor())?;
    let mut s = match initial {
        Some(s0) => s0.clone(),
        None => target.tensor() - g.tensor(),
    };
    let exp_opts = ExpOptions { tol: opts.ode_tol, samples: 1, ..ExpOptions::default() };

    let evaluate = |s: &SymTensorField| -> Result<(GeodesicPath, SymTensorField, f64)> {
        let path = l2_exp_with(g, s, 1.0, &exp_opts)?;
        let r = path.endpoint().tensor() - target.tensor();
        let res = l2_norm(g, &r)? / target_norm;
        Ok((path, r, res))
    };

    let (mut path, mut r, mut res) = match evaluate(&s) {
        Ok(v) => v,
        Err(e) if e.is_numerical() => {
            // the linear guess may overshoot the cone; start from zero instead
            s = SymTensorField::zeros(spec);
            evaluate(&s)?
        }
        Err(e) => return Err(e),
    };
    for it in 0..opts.max_iter {
        if res <= opts.tol {
            return Ok(LogResult { velocity: s, residual: res, iterations: it });
        }
        let step = newton_step(g, &s, &r, path.schedule())?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let trial = s.axpy(lambda, &step);
            if let Ok((p2, r2, res2)) = evaluate(&trial) {
                if res2 < res {
                    s = trial;
                    path = p2;
                    r = r2;
                    res = res2;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence { what: "geodesic shooting", iterations: it + 1, residual: res });
        }
    }
    if res <= opts.tol {
        return Ok(LogResult { velocity: s, residual: res, iterations: opts.max_iter });
    }
    Err(Error::NoConvergence { what: "geodesic shooting", iterations: opts.max_iter, residual: res })
}

fn newton_step(g: &MetricField, s: &SymTensorField, r: &SymTensorField, schedule: &[f64]) -> Result<SymTensorField> {
    let spec = g.spec();
    let fail = || Error::NoConvergence { what: "geodesic shooting (Jacobian)", iterations: 0, residual: f64::NAN };
    let base = replay(g, s, schedule).ok_or_else(fail)?;
    let eps = 1e-7 * (1.0 + s.max_abs());
    let units = [Sym2::new(1.0, 0.0, 0.0), Sym2::new(0.0, 1.0, 0.0), Sym2::new(0.0, 0.0, 1.0)];
    let mut cols: Vec<Vec<Cell>> = Vec::with_capacity(3);
    for u in units {
        let ps = s.map_cells(|c| c + u * eps);
        cols.push(replay(g, &ps, schedule).ok_or_else(fail)?);
    }
    let mut out = Vec::with_capacity(spec.len());
    for k in 0..spec.len() {
        let mut jac = [[0.0; 3]; 3];
        for (c, col) in cols.iter().enumerate() {
            let d = (col[k].g - base[k].g) * (1.0 / eps);
            jac[0][c] = d.a11;
            jac[1][c] = d.a12;
            jac[2][c] = d.a22;
        }
        let rk = r.at(k);
        let x = solve3(jac, [-rk.a11, -rk.a12, -rk.a22]).ok_or_else(fail)?;
        out.push(Sym2::new(x[0], x[1], x[2]));
    }
    Ok(SymTensorField::from_cells(spec, out.into_iter()))
}

/// Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for c in col..3 {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut acc = b[row];
        for c in row + 1..3 {
            acc -= a[row][c] * x[c];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Per-cell σ-integrand, exposed for the geodesic-energy checks.
pub fn pointwise_energy(g: &Sym2, v: &Sym2) -> f64 {
    match g.inverse() {
        Some(gi) => pair_at(&gi, v, v) * g.det().sqrt(),
        None => f64::NAN,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::constant_field;
    use crate::rng::{perturbed_identity, smooth_symtensor, SplitMix64};

    fn spec(n: usize) -> GridSpec {
        GridSpec::new(n).unwrap()
    }

    #[test]
    fn inner_product_examples() {
        let s = spec(8);
        let id = MetricField::identity(s);
        let one = constant_field(s, Sym2::IDENTITY);
        assert!((l2_inner(&id, &one, &one).unwrap() - 2.0).abs() < 1e-14);
        let d = MetricField::constant(s, Sym2::diag(4.0, 4.0)).unwrap();
        assert!((l2_inner(&d, &one, &one).unwrap() - 0.5).abs() < 1e-14);
        assert_eq!(l2_inner(&id, &one, &SymTensorField::zeros(s)).unwrap(), 0.0);
    }

    #[test]
    fn zero_velocity_gives_constant_path() {
        let s = spec(8);
        let g = perturbed_identity(s, &mut SplitMix64::new(3), 0.1);
        let p = l2_exp(&g, &SymTensorField::zeros(s), 1.0, 1e-8).unwrap();
        for smp in &p.samples {
            assert_eq!(&smp.point, &g);
        }
    }

    #[test]
    fn samples_start_at_base_and_speed_is_constant() {
        let s = spec(8);
        let g = perturbed_identity(s, &mut SplitMix64::new(1), 0.2);
        let v = smooth_symtensor(s, &mut SplitMix64::new(2), 0.3);
        let p = l2_exp(&g, &v, 1.0, 1e-10).unwrap();
        assert_eq!(p.samples[0].point, g);
        assert_eq!(p.samples[0].velocity, v);
        assert_eq!(p.samples.len(), 17);
        assert!(p.speed_deviation().unwrap() < 1e-8);
        // backwards in time retraces the path
        let back = l2_exp(p.endpoint(), &-p.end_velocity(), 1.0, 1e-10).unwrap();
        assert!((back.endpoint().tensor() - g.tensor()).max_abs() < 1e-8);
    }

    #[test]
    fn conformal_directions_stay_conformal() {
        let s = spec(4);
        let id = MetricField::identity(s);
        let p = l2_exp(&id, &constant_field(s, Sym2::diag(0.2, 0.2)), 1.0, 1e-10).unwrap();
        let e = p.endpoint().at(0);
        assert!(e.a12 == 0.0 && (e.a11 - e.a22).abs() < 1e-15);
    }

    #[test]
    fn positivity_loss_is_reported() {
        let s = spec(4);
        let id = MetricField::identity(s);
        // pure volume shrinkage drives det γ to zero in finite time
        let err = l2_exp(&id, &constant_field(s, Sym2::diag(-3.0, -3.0)), 1.0, 1e-8).unwrap_err();
        assert!(matches!(err, Error::PositivityLoss(_)), "{err}");
    }

    #[test]
    fn log_inverts_exp() {
        let s = spec(8);
        let g = perturbed_identity(s, &mut SplitMix64::new(5), 0.1);
        let v = smooth_symtensor(s, &mut SplitMix64::new(6), 0.08);
        let end = l2_exp(&g, &v, 1.0, 1e-12).unwrap().endpoint().clone();
        let w = l2_log(&g, &end, 1e-11).unwrap();
        assert!(l2_norm(&g, &(&w - &v)).unwrap() / l2_norm(&g, &v).unwrap() < 1e-6);
        assert_eq!(l2_log(&g, &g, 1e-10).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn solve3_matches_known_solution() {
        let a = [[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]];
        let x = solve3(a, [3.0, 5.0, 5.0]).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }
}
