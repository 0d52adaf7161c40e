//! SO(2) acting on 2×2 SPD matrices by conjugation, with the flat Frobenius
//! metric. Everything is in closed form, so the slice chart, its inverse and
//! the tube map can be checked to rounding error.
//!
//! Chart coordinates are `(u, v, w) = ((a₁₁ − a₂₂)/2, a₁₂, (a₁₁ + a₂₂)/2)`.
//! Rotation by θ turns `(u, v)` by `2θ` and fixes `w`, so orbits are circles
//! about the scalar axis and `R(π) = −I` acts trivially.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use crate::error::{Error, Result};
use crate::mat2::{Mat2, Sym2};
use crate::rng::SplitMix64;

/// Reduce to `[0, period)`.
fn wrap(x: f64, period: f64) -> f64 {
    let r = x.rem_euclid(period);
    // rem_euclid can round up to `period` for tiny negative inputs
    if r >= period {
        0.0
    } else {
        r
    }
}

/// Signed difference `a − b` reduced to `[−period/2, period/2)`.
fn wrap_delta(a: f64, b: f64, period: f64) -> f64 {
    wrap(a - b + 0.5 * period, period) - 0.5 * period
}

/// Rotation `R(θ)` with `θ ∈ [0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rot {
    angle: f64,
}

impl Rot {
    pub fn new(angle: f64) -> Self {
        Self { angle: wrap(angle, TAU) }
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn matrix(&self) -> Mat2 {
        let (s, c) = self.angle.sin_cos();
        Mat2::new(c, -s, s, c)
    }

    pub fn compose(&self, other: &Rot) -> Rot {
        Rot::new(self.angle + other.angle)
    }

    pub fn inverse(&self) -> Rot {
        Rot::new(-self.angle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpdPoint(Sym2);

impl SpdPoint {
    pub fn new(a: Sym2) -> Result<Self> {
        if a.is_positive_definite() {
            Ok(Self(a))
        } else {
            Err(Error::Validation(format!("matrix {a:?} is not positive-definite")))
        }
    }

    pub fn diag(a11: f64, a22: f64) -> Result<Self> {
        Self::new(Sym2::diag(a11, a22))
    }

    pub fn from_chart(c: [f64; 3]) -> Result<Self> {
        Self::new(Sym2::new(c[2] + c[0], c[1], c[2] - c[0]))
    }

    pub fn matrix(&self) -> Sym2 {
        self.0
    }

    /// `(u, v, w)`.
    pub fn chart(&self) -> [f64; 3] {
        let a = self.0;
        [0.5 * (a.a11 - a.a22), a.a12, 0.5 * (a.a11 + a.a22)]
    }

    /// Radius `|(u, v)|` of the orbit through this point.
    pub fn orbit_radius(&self) -> f64 {
        let [u, v, _] = self.chart();
        u.hypot(v)
    }
}

pub fn frobenius_distance(a: &SpdPoint, b: &SpdPoint) -> f64 {
    (a.0 - b.0).frobenius_sq().sqrt()
}

/// `R A Rᵀ`.
pub fn act(r: &Rot, a: &SpdPoint) -> SpdPoint {
    SpdPoint(a.0.congruence(&r.matrix().transpose()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Isotropy {
    /// All of SO(2): the point is scalar.
    Full,
    /// `{R(0), R(π)}`.
    Pair,
}

impl Isotropy {
    pub fn contains(&self, r: &Rot, tol: f64) -> bool {
        match self {
            Isotropy::Full => true,
            Isotropy::Pair => wrap_delta(r.angle, 0.0, PI).abs() <= tol,
        }
    }
}

pub fn isotropy_of(a: &SpdPoint, tol: f64) -> Isotropy {
    if a.orbit_radius() <= tol {
        Isotropy::Full
    } else {
        Isotropy::Pair
    }
}

/// The orbit through a non-scalar point, parametrized by cosets `θ ∈ [0, π)`.
#[derive(Debug, Clone, Copy)]
pub struct OrbitMap {
    base: SpdPoint,
    phase: f64,
}

impl OrbitMap {
    pub fn new(base: SpdPoint) -> Result<Self> {
        let [u, v, _] = base.chart();
        if u == 0.0 && v == 0.0 {
            return Err(Error::ScalarPoint);
        }
        Ok(Self { base, phase: v.atan2(u) })
    }

    pub fn base(&self) -> SpdPoint {
        self.base
    }

    pub fn radius(&self) -> f64 {
        self.base.orbit_radius()
    }

    pub fn point(&self, coset: f64) -> SpdPoint {
        act(&Rot::new(coset), &self.base)
    }

    /// Coset of the orbit point whose `(u, v)` direction matches `q`'s.
    pub fn coset(&self, q: &SpdPoint) -> f64 {
        let [u, v, _] = q.chart();
        wrap(0.5 * (v.atan2(u) - self.phase), PI)
    }
}

/// `exp_p` of the normal disc of radius `ε` at `p`. The flat metric makes the
/// exponential a straight line, so the slice is a flat disc spanned by the
/// radial direction `n₁` and the scalar direction `n₂ = I/√2`.
#[derive(Debug, Clone, Copy)]
pub struct FiniteSlice {
    orbit: OrbitMap,
    radius: f64,
    n1: Sym2,
    n2: Sym2,
}

/// Unit tangent to the orbit at `p`, or `None` at a scalar point.
fn orbit_tangent(p: &SpdPoint) -> Option<Sym2> {
    let [u, v, _] = p.chart();
    let r = u.hypot(v);
    // d/dθ of (u, v) rotated by 2θ is 2(−v, u); Frobenius norm of (0, 1, 0) is √2
    (r > 0.0).then(|| Sym2::new(-v / r, u / r, v / r) * FRAC_1_SQRT_2)
}

pub fn slice_at(a: &SpdPoint, radius: f64) -> Result<FiniteSlice> {
    let orbit = OrbitMap::new(*a)?;
    let [u, v, w] = a.chart();
    let r = u.hypot(v);
    // keeps the slice off the scalar axis and inside the SPD cone
    let limit = r.min(w - r);
    if !(radius > 0.0 && radius < limit) {
        return Err(Error::RadiusTooLarge { radius, limit });
    }
    let n1 = Sym2::new(u / r, v / r, -u / r) * FRAC_1_SQRT_2;
    let n2 = Sym2::IDENTITY * FRAC_1_SQRT_2;
    Ok(FiniteSlice { orbit, radius, n1, n2 })
}

impl FiniteSlice {
    pub fn base(&self) -> SpdPoint {
        self.orbit.base
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn orbit(&self) -> &OrbitMap {
        &self.orbit
    }

    /// Orthonormal normal frame `(n₁, n₂)`.
    pub fn frame(&self) -> (Sym2, Sym2) {
        (self.n1, self.n2)
    }

    pub fn point(&self, s: [f64; 2]) -> Result<SpdPoint> {
        let d = s[0].hypot(s[1]);
        if d >= self.radius {
            return Err(Error::OutsideTube { distance: d, radius: self.radius });
        }
        SpdPoint::new(self.orbit.base.0 + self.n1 * s[0] + self.n2 * s[1])
    }

    /// Frame coordinates of `q − p` together with its orbit-tangent component.
    pub fn coordinates(&self, q: &SpdPoint) -> ([f64; 2], f64) {
        let d = q.0 - self.orbit.base.0;
        let t = orbit_tangent(&self.orbit.base).expect("base is not scalar");
        ([d.trace_product(&self.n1), d.trace_product(&self.n2)], d.trace_product(&t))
    }

    pub fn contains(&self, q: &SpdPoint, tol: f64) -> bool {
        let (s, t) = self.coordinates(q);
        t.abs() <= tol && s[0].hypot(s[1]) < self.radius
    }

    /// `F(θ, s) = χ(θ)·s` with the section `χ(θ) = R(θ)`, `θ ∈ [0, π)`.
    pub fn chart(&self, coset: f64, s: &SpdPoint) -> SpdPoint {
        act(&Rot::new(wrap(coset, PI)), s)
    }

    /// `F⁻¹(q)`: the nearest orbit point gives the coset, and `χ(coset)⁻¹·q`
    /// the slice point.
    pub fn chart_inverse(&self, q: &SpdPoint) -> Result<(f64, SpdPoint)> {
        let coset = self.orbit.coset(q);
        let foot = self.orbit.point(coset);
        let distance = frobenius_distance(q, &foot);
        if distance >= self.radius {
            return Err(Error::OutsideTube { distance, radius: self.radius });
        }
        Ok((coset, act(&Rot::new(coset).inverse(), q)))
    }
}

/// An element `[R(θ), s]` of `SO(2) ×_{G_p} S_p`, with `s` in frame coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubeClass {
    pub angle: f64,
    pub s: [f64; 2],
}

/// Random classes and random tube points, both well inside the radius.
pub fn sample_tube(slice: &FiniteSlice, rng: &mut SplitMix64, count: usize) -> (Vec<TubeClass>, Vec<SpdPoint>) {
    let disc = |rng: &mut SplitMix64| loop {
        let s = [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
        if s[0].hypot(s[1]) < 0.95 {
            return [s[0] * slice.radius, s[1] * slice.radius];
        }
    };
    let classes: Vec<TubeClass> =
        (0..count).map(|_| TubeClass { angle: rng.uniform(0.0, TAU), s: disc(rng) }).collect();
    let points = (0..count)
        .map(|_| {
            let s = disc(rng);
            let theta = rng.uniform(0.0, TAU);
            slice.point(s).map(|p| act(&Rot::new(theta), &p))
        })
        .collect::<Result<_>>()
        .expect("disc samples lie in the slice");
    (classes, points)
}

#[derive(Debug, Clone, Default)]
pub struct TubeReport {
    pub classes: usize,
    pub points: usize,
    /// Largest `|ψ[R(θ), s] − ψ[R(θ+π), R(π)⁻¹·s]|`.
    pub well_defined_error: f64,
    /// Smallest image distance over pairs of distinct classes.
    pub min_pair_distance: f64,
    /// Largest `|F(F⁻¹ q) − q|` over tube points.
    pub surjectivity_error: f64,
    pub violations: Vec<String>,
}

impl TubeReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Distance between classes in `SO(2) ×_{G_p} S_p`. Here `G_p = {±I}` acts
/// trivially on the slice, so `[R(θ), s] = [R(θ+π), s]`.
fn class_distance(a: &TubeClass, b: &TubeClass) -> f64 {
    wrap_delta(a.angle, b.angle, PI).abs() + (a.s[0] - b.s[0]).hypot(a.s[1] - b.s[1])
}

/// Checks that `ψ[R, s] = R·s` is well defined on classes, injective over all
/// pairs of `classes`, and onto every point of `points` (via `F⁻¹`).
pub fn tube_quotient(slice: &FiniteSlice, classes: &[TubeClass], points: &[SpdPoint], tol: f64) -> TubeReport {
    let mut report =
        TubeReport { classes: classes.len(), points: points.len(), min_pair_distance: f64::INFINITY, ..Default::default() };
    let flip = Rot::new(PI);
    let mut images = Vec::with_capacity(classes.len());
    for (k, c) in classes.iter().enumerate() {
        let s = match slice.point(c.s) {
            Ok(s) => s,
            Err(e) => {
                report.violations.push(format!("class {k}: {e}"));
                continue;
            }
        };
        let img = act(&Rot::new(c.angle), &s);
        let other = act(&Rot::new(c.angle).compose(&flip), &act(&flip.inverse(), &s));
        let err = frobenius_distance(&img, &other);
        report.well_defined_error = report.well_defined_error.max(err);
        if err > tol {
            report.violations.push(format!("class {k}: representatives disagree by {err:e}"));
        }
        images.push((k, img));
    }
    for (i, (ki, a)) in images.iter().enumerate() {
        for (kj, b) in &images[i + 1..] {
            if class_distance(&classes[*ki], &classes[*kj]) <= tol {
                continue;
            }
            let d = frobenius_distance(a, b);
            report.min_pair_distance = report.min_pair_distance.min(d);
            if d <= tol {
                report.violations.push(format!("classes {ki} and {kj} share an image"));
            }
        }
    }
    for (k, q) in points.iter().enumerate() {
        match slice.chart_inverse(q) {
            Ok((coset, s)) => {
                let err = frobenius_distance(&slice.chart(coset, &s), q);
                report.surjectivity_error = report.surjectivity_error.max(err);
                if err > tol || !slice.contains(&s, tol) {
                    report.violations.push(format!("point {k}: no preimage within {tol:e} (error {err:e})"));
                }
            }
            Err(e) => report.violations.push(format!("point {k}: {e}")),
        }
    }
    report
}

/// Indices of a convergent subsequence of rotation angles, by repeated
/// bisection of the circle keeping the half that holds more later terms.
pub fn convergent_subsequence(angles: &[f64]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    let (mut lo, mut hi) = (0.0, TAU);
    loop {
        let start = out.last().map_or(0, |&i| i + 1);
        let inside = |a: f64, l: f64, h: f64| {
            let a = wrap(a, TAU);
            a >= l && a < h
        };
        let mid = 0.5 * (lo + hi);
        let count = |l, h| angles[start..].iter().filter(|&&a| inside(a, l, h)).count();
        let (l, h) = if count(lo, mid) >= count(mid, hi) { (lo, mid) } else { (mid, hi) };
        match (start..angles.len()).find(|&i| inside(angles[i], l, h)) {
            Some(i) => {
                out.push(i);
                (lo, hi) = (l, h);
            }
            None => return out,
        }
    }
}
