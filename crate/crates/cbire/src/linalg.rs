//! Two-component vectors and 2x2 matrices.
//!
//! The state space is the nonnegative quadrant of the plane throughout, so
//! two fixed-size types cover every linear-algebra need of the crate.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use crate::scalar::Real;

/// Point in the plane, used for states, Laplace arguments, rates, and moments.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Vec2<F> {
    pub x1: F,
    pub x2: F,
}

impl<F: Real> Vec2<F> {
    pub fn new(x1: F, x2: F) -> Self {
        Self { x1, x2 }
    }

    pub fn splat(v: F) -> Self {
        Self { x1: v, x2: v }
    }

    pub fn zero() -> Self {
        Self::splat(F::zero())
    }

    /// Component by 0-based index; panics for `i > 1`.
    pub fn get(self, i: usize) -> F {
        match i {
            0 => self.x1,
            1 => self.x2,
            _ => panic!("Vec2 index out of range: {i}"),
        }
    }

    pub fn dot(self, o: Self) -> F {
        self.x1 * o.x1 + self.x2 * o.x2
    }

    pub fn sum(self) -> F {
        self.x1 + self.x2
    }

    /// L1 norm `|x1| + |x2|`.
    pub fn l1(self) -> F {
        self.x1.abs() + self.x2.abs()
    }

    /// Sup norm `max(|x1|, |x2|)`.
    pub fn linf(self) -> F {
        self.x1.abs().max(self.x2.abs())
    }

    pub fn map(self, f: impl Fn(F) -> F) -> Self {
        Self::new(f(self.x1), f(self.x2))
    }

    /// Componentwise product.
    pub fn hadamard(self, o: Self) -> Self {
        Self::new(self.x1 * o.x1, self.x2 * o.x2)
    }

    /// Componentwise minimum.
    pub fn min(self, o: Self) -> Self {
        Self::new(self.x1.min(o.x1), self.x2.min(o.x2))
    }

    /// Componentwise maximum.
    pub fn max(self, o: Self) -> Self {
        Self::new(self.x1.max(o.x1), self.x2.max(o.x2))
    }

    /// Componentwise positive part.
    pub fn pos_part(self) -> Self {
        self.max(Self::zero())
    }

    /// Componentwise negative part, returned with positive sign.
    pub fn neg_part(self) -> Self {
        (-self).max(Self::zero())
    }

    /// Componentwise absolute difference `|self - o|`.
    pub fn abs_diff(self, o: Self) -> Self {
        (self - o).map(|v| v.abs())
    }

    pub fn is_finite(self) -> bool {
        self.x1.is_finite() && self.x2.is_finite()
    }

    pub fn is_nonnegative(self) -> bool {
        self.x1 >= F::zero() && self.x2 >= F::zero()
    }

    pub fn as_f64(self) -> Vec2<f64> {
        Vec2::new(self.x1.as_f64(), self.x2.as_f64())
    }
}

impl<F: Real> Add for Vec2<F> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x1 + o.x1, self.x2 + o.x2)
    }
}

impl<F: Real> AddAssign for Vec2<F> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<F: Real> Sub for Vec2<F> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x1 - o.x1, self.x2 - o.x2)
    }
}

impl<F: Real> Neg for Vec2<F> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x1, -self.x2)
    }
}

impl<F: Real> Mul<F> for Vec2<F> {
    type Output = Self;
    fn mul(self, s: F) -> Self {
        Self::new(self.x1 * s, self.x2 * s)
    }
}

/// 2x2 matrix with named row-major entries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2<F> {
    pub a11: F,
    pub a12: F,
    pub a21: F,
    pub a22: F,
}

impl<F: Real> Mat2<F> {
    pub fn new(a11: F, a12: F, a21: F, a22: F) -> Self {
        Self { a11, a12, a21, a22 }
    }

    /// Builds from row-major nested arrays, matching the JSON layout.
    pub fn from_rows(rows: [[F; 2]; 2]) -> Self {
        Self::new(rows[0][0], rows[0][1], rows[1][0], rows[1][1])
    }

    pub fn identity() -> Self {
        Self::new(F::one(), F::zero(), F::zero(), F::one())
    }

    pub fn zero() -> Self {
        Self::new(F::zero(), F::zero(), F::zero(), F::zero())
    }

    pub fn diagonal(d1: F, d2: F) -> Self {
        Self::new(d1, F::zero(), F::zero(), d2)
    }

    pub fn transpose(self) -> Self {
        Self::new(self.a11, self.a21, self.a12, self.a22)
    }

    pub fn trace(self) -> F {
        self.a11 + self.a22
    }

    pub fn det(self) -> F {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    /// Matrix-vector product, rows dotted against `v`.
    pub fn mul_vec(self, v: Vec2<F>) -> Vec2<F> {
        Vec2::new(
            self.a11 * v.x1 + self.a12 * v.x2,
            self.a21 * v.x1 + self.a22 * v.x2,
        )
    }

    /// Transpose-vector product.
    pub fn tr_mul_vec(self, v: Vec2<F>) -> Vec2<F> {
        Vec2::new(
            self.a11 * v.x1 + self.a21 * v.x2,
            self.a12 * v.x1 + self.a22 * v.x2,
        )
    }

    pub fn mul_mat(self, o: Self) -> Self {
        Self::new(
            self.a11 * o.a11 + self.a12 * o.a21,
            self.a11 * o.a12 + self.a12 * o.a22,
            self.a21 * o.a11 + self.a22 * o.a21,
            self.a21 * o.a12 + self.a22 * o.a22,
        )
    }

    pub fn scale(self, s: F) -> Self {
        Self::new(self.a11 * s, self.a12 * s, self.a21 * s, self.a22 * s)
    }

    pub fn add_mat(self, o: Self) -> Self {
        Self::new(
            self.a11 + o.a11,
            self.a12 + o.a12,
            self.a21 + o.a21,
            self.a22 + o.a22,
        )
    }

    /// Vector of row sums `(a11 + a12, a21 + a22)`.
    pub fn row_sums(self) -> Vec2<F> {
        Vec2::new(self.a11 + self.a12, self.a21 + self.a22)
    }

    /// Largest entry magnitude.
    pub fn max_abs(self) -> F {
        self.a11
            .abs()
            .max(self.a12.abs())
            .max(self.a21.abs())
            .max(self.a22.abs())
    }

    pub fn is_finite(self) -> bool {
        self.a11.is_finite() && self.a12.is_finite() && self.a21.is_finite() && self.a22.is_finite()
    }

    pub fn as_f64(self) -> Mat2<f64> {
        Mat2::new(
            self.a11.as_f64(),
            self.a12.as_f64(),
            self.a21.as_f64(),
            self.a22.as_f64(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_arithmetic() {
        let a = Vec2::new(1.0, -2.0);
        let b = Vec2::new(0.5, 4.0);
        assert_eq!(a + b, Vec2::new(1.5, 2.0));
        assert_eq!(a - b, Vec2::new(0.5, -6.0));
        assert_eq!(a * 2.0, Vec2::new(2.0, -4.0));
        assert_eq!(a.dot(b), -7.5);
        assert_eq!(a.l1(), 3.0);
        assert_eq!(a.linf(), 2.0);
        assert_eq!(a.pos_part(), Vec2::new(1.0, 0.0));
        assert_eq!(a.neg_part(), Vec2::new(0.0, 2.0));
        assert_eq!(a.abs_diff(b), Vec2::new(0.5, 6.0));
        assert_eq!(a.min(b), Vec2::new(0.5, -2.0));
    }

    #[test]
    fn matrix_products() {
        let m = Mat2::new(2.0, -0.5, -0.5, 3.0);
        let v = Vec2::new(1.0, 2.0);
        assert_eq!(m.mul_vec(v), Vec2::new(1.0, 5.5));
        assert_eq!(m.tr_mul_vec(v), Vec2::new(1.0, 5.5));
        let n = Mat2::new(0.0, 1.0, 1.0, 0.0);
        assert_eq!(n.tr_mul_vec(v), Vec2::new(2.0, 1.0));
        assert_eq!(m.mul_mat(Mat2::identity()), m);
        assert_eq!(m.trace(), 5.0);
        assert_eq!(m.det(), 5.75);
        assert_eq!(m.row_sums(), Vec2::new(1.5, 2.5));
    }

    #[test]
    fn generic_over_f32() {
        let m = Mat2::<f32>::identity();
        let v = Vec2::<f32>::new(3.0, 4.0);
        assert_eq!(m.mul_vec(v), v);
    }
}
