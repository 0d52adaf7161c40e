//! Pointwise 2×2 linear algebra used by every per-cell tensor operation.

use std::ops::{Add, Mul, Neg, Sub};

/// Symmetric 2×2 matrix stored as `(a11, a12, a22)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sym2 {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl Sym2 {
    pub const ZERO: Sym2 = Sym2 { a11: 0.0, a12: 0.0, a22: 0.0 };
    pub const IDENTITY: Sym2 = Sym2 { a11: 1.0, a12: 0.0, a22: 1.0 };

    pub const fn new(a11: f64, a12: f64, a22: f64) -> Self {
        Self { a11, a12, a22 }
    }

    pub fn diag(a11: f64, a22: f64) -> Self {
        Self { a11, a12: 0.0, a22 }
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a12
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    /// Sylvester criterion.
    pub fn is_positive_definite(&self) -> bool {
        self.a11 > 0.0 && self.det() > 0.0 && self.a11.is_finite() && self.a22.is_finite()
    }

    /// Inverse via the adjugate. Returns `None` for a singular or non-finite matrix.
    pub fn inverse(&self) -> Option<Sym2> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(Sym2::new(self.a22 / d, -self.a12 / d, self.a11 / d))
    }

    pub fn to_mat(self) -> Mat2 {
        Mat2::new(self.a11, self.a12, self.a12, self.a22)
    }

    /// `tr(self · other)` for symmetric arguments.
    pub fn trace_product(&self, other: &Sym2) -> f64 {
        self.a11 * other.a11 + 2.0 * self.a12 * other.a12 + self.a22 * other.a22
    }

    /// `Aᵀ · self · A`.
    pub fn congruence(&self, a: &Mat2) -> Sym2 {
        let m = a.transpose() * self.to_mat() * *a;
        // the product is symmetric up to rounding; average the off-diagonal pair
        Sym2::new(m.m11, 0.5 * (m.m12 + m.m21), m.m22)
    }

    pub fn max_abs(&self) -> f64 {
        self.a11.abs().max(self.a12.abs()).max(self.a22.abs())
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.a11 * self.a11 + 2.0 * self.a12 * self.a12 + self.a22 * self.a22
    }
}

impl Add for Sym2 {
    type Output = Sym2;
    fn add(self, o: Sym2) -> Sym2 {
        Sym2::new(self.a11 + o.a11, self.a12 + o.a12, self.a22 + o.a22)
    }
}

impl Sub for Sym2 {
    type Output = Sym2;
    fn sub(self, o: Sym2) -> Sym2 {
        Sym2::new(self.a11 - o.a11, self.a12 - o.a12, self.a22 - o.a22)
    }
}

impl Mul<f64> for Sym2 {
    type Output = Sym2;
    fn mul(self, s: f64) -> Sym2 {
        Sym2::new(self.a11 * s, self.a12 * s, self.a22 * s)
    }
}

impl Neg for Sym2 {
    type Output = Sym2;
    fn neg(self) -> Sym2 {
        self * -1.0
    }
}

/// General 2×2 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mat2 {
    pub m11: f64,
    pub m12: f64,
    pub m21: f64,
    pub m22: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 { m11: 1.0, m12: 0.0, m21: 0.0, m22: 1.0 };

    pub const fn new(m11: f64, m12: f64, m21: f64, m22: f64) -> Self {
        Self { m11, m12, m21, m22 }
    }

    pub fn det(&self) -> f64 {
        self.m11 * self.m22 - self.m12 * self.m21
    }

    pub fn transpose(&self) -> Mat2 {
        Mat2::new(self.m11, self.m21, self.m12, self.m22)
    }

    pub fn inverse(&self) -> Option<Mat2> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(Mat2::new(self.m22 / d, -self.m12 / d, -self.m21 / d, self.m11 / d))
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.m11 * v[0] + self.m12 * v[1], self.m21 * v[0] + self.m22 * v[1]]
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        Mat2::new(self.m11 + o.m11, self.m12 + o.m12, self.m21 + o.m21, self.m22 + o.m22)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.m11 * o.m11 + self.m12 * o.m21,
            self.m11 * o.m12 + self.m12 * o.m22,
            self.m21 * o.m11 + self.m22 * o.m21,
            self.m21 * o.m12 + self.m22 * o.m22,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_matches_adjugate_formula() {
        let g = Sym2::new(2.0, 1.0, 2.0);
        let inv = g.inverse().unwrap();
        assert!((inv.a11 - 2.0 / 3.0).abs() < 1e-15);
        assert!((inv.a12 + 1.0 / 3.0).abs() < 1e-15);
        assert!((inv.a22 - 2.0 / 3.0).abs() < 1e-15);
        let p = g.to_mat() * inv.to_mat();
        assert!((p.m11 - 1.0).abs() < 1e-15 && p.m12.abs() < 1e-15);
    }

    #[test]
    fn singular_has_no_inverse() {
        assert!(Sym2::new(1.0, 1.0, 1.0).inverse().is_none());
        assert!(!Sym2::new(1.0, 1.0, 1.0).is_positive_definite());
        assert!(!Sym2::new(-1.0, 0.0, -1.0).is_positive_definite());
    }

    #[test]
    fn congruence_by_rotation_preserves_trace() {
        let (s, c) = 0.3f64.sin_cos();
        let r = Mat2::new(c, -s, s, c);
        let g = Sym2::new(3.0, 0.5, 1.0);
        let h = g.congruence(&r);
        assert!((h.trace() - g.trace()).abs() < 1e-14);
        assert!((h.det() - g.det()).abs() < 1e-14);
    }
}
