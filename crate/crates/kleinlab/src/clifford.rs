//! Arithmetic in the Clifford algebra `C_m` generated by `i_1, ..., i_m` with
//! `i_j^2 = -1` and `i_j i_k = -i_k i_j` for `j != k`.
//!
//! Elements are stored densely: coefficient `k` belongs to the basis blade whose
//! generators are the set bits of `k` (bit `j` set means `i_{j+1}` is present),
//! always written with increasing generator index.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

/// Largest supported number of generators.
pub const MAX_DIM: usize = 4;
const MAX_LEN: usize = 1 << MAX_DIM;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliffordError {
    #[error("dimension mismatch: C_{left} vs C_{right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("Clifford dimension {0} exceeds the supported maximum {MAX_DIM}")]
    DimensionTooLarge(usize),
    #[error("expected {expected} coefficients, got {got}")]
    CoefficientCount { expected: usize, got: usize },
    #[error("element is not a Clifford vector")]
    NotVector,
    #[error("zero element has no inverse")]
    Zero,
    #[error("element is not in the Clifford group (x * bar(x) is not a nonzero scalar)")]
    NotInvertible,
}

/// Which of the three standard involutions to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Involution {
    /// `a'`: every generator changes sign.
    Prime,
    /// `a*`: the order of factors in every blade is reversed.
    Star,
    /// `bar(a) = (a')* = (a*)'`.
    Bar,
}

/// An element of `C_m`, `m <= MAX_DIM`.
#[derive(Clone, Copy, PartialEq)]
pub struct CliffordNumber {
    dim: u8,
    coeffs: [f64; MAX_LEN],
}

/// Sign produced by moving the generators of blade `b` past those of blade `a`
/// and contracting repeated generators (each contributes `-1`).
#[inline]
fn blade_sign(a: usize, b: usize) -> f64 {
    let mut swaps = 0u32;
    let mut s = a >> 1;
    while s != 0 {
        swaps += (s & b).count_ones();
        s >>= 1;
    }
    swaps += (a & b).count_ones();
    if swaps % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[inline]
fn grade_sign(grade: u32, kind: Involution) -> f64 {
    let g = grade as i64;
    let flips = match kind {
        Involution::Prime => g,
        Involution::Star => g * (g - 1) / 2,
        Involution::Bar => g + g * (g - 1) / 2,
    };
    if flips % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

impl CliffordNumber {
    /// The zero element of `C_dim`.
    ///
    /// # Panics
    /// If `dim > MAX_DIM`.
    pub fn zero(dim: usize) -> Self {
        assert!(dim <= MAX_DIM, "Clifford dimension {dim} exceeds {MAX_DIM}");
        Self {
            dim: dim as u8,
            coeffs: [0.0; MAX_LEN],
        }
    }

    pub fn scalar(dim: usize, value: f64) -> Self {
        let mut out = Self::zero(dim);
        out.coeffs[0] = value;
        out
    }

    pub fn one(dim: usize) -> Self {
        Self::scalar(dim, 1.0)
    }

    /// The generator `i_j` for `1 <= j <= dim`.
    pub fn generator(dim: usize, j: usize) -> Self {
        assert!(j >= 1 && j <= dim, "generator index {j} out of range for C_{dim}");
        Self::blade(dim, 1 << (j - 1), 1.0)
    }

    /// `value` times the basis blade with bitmask `mask`.
    pub fn blade(dim: usize, mask: usize, value: f64) -> Self {
        let mut out = Self::zero(dim);
        assert!(mask < (1 << dim), "blade mask {mask:#b} out of range for C_{dim}");
        out.coeffs[mask] = value;
        out
    }

    /// Builds an element from its full coefficient list (length `2^dim`).
    pub fn from_coeffs(dim: usize, coeffs: &[f64]) -> Result<Self, CliffordError> {
        if dim > MAX_DIM {
            return Err(CliffordError::DimensionTooLarge(dim));
        }
        if coeffs.len() != 1 << dim {
            return Err(CliffordError::CoefficientCount {
                expected: 1 << dim,
                got: coeffs.len(),
            });
        }
        let mut out = Self::zero(dim);
        out.coeffs[..coeffs.len()].copy_from_slice(coeffs);
        Ok(out)
    }

    /// The Clifford vector `x_0 + x_1 i_1 + ... + x_m i_m` with `m = comps.len() - 1`
    /// embedded in `C_dim`.
    pub fn vector(dim: usize, comps: &[f64]) -> Self {
        assert!(comps.len() <= dim + 1, "too many vector components for C_{dim}");
        let mut out = Self::zero(dim);
        for (j, &c) in comps.iter().enumerate() {
            let mask = if j == 0 { 0 } else { 1 << (j - 1) };
            out.coeffs[mask] = c;
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn len(&self) -> usize {
        1 << self.dim
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs[..self.len()]
    }

    pub fn coeff(&self, mask: usize) -> f64 {
        self.coeffs[mask]
    }

    pub fn scalar_part(&self) -> f64 {
        self.coeffs[0]
    }

    /// Components `(x_0, x_1, ..., x_m)` of the grade-≤1 part.
    pub fn vector_part(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim() + 1);
        v.push(self.coeffs[0]);
        for j in 0..self.dim() {
            v.push(self.coeffs[1 << j]);
        }
        v
    }

    /// Re-expresses this element in a larger algebra `C_dim` (`dim >= self.dim()`).
    pub fn embed(&self, dim: usize) -> Self {
        assert!(dim >= self.dim() && dim <= MAX_DIM);
        let mut out = *self;
        out.dim = dim as u8;
        out
    }

    /// Checked product.
    pub fn try_mul(&self, other: &Self) -> Result<Self, CliffordError> {
        if self.dim != other.dim {
            return Err(CliffordError::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(self.mul_unchecked(other))
    }

    fn mul_unchecked(&self, other: &Self) -> Self {
        let n = self.len();
        let mut out = Self::zero(self.dim());
        for a in 0..n {
            let x = self.coeffs[a];
            if x == 0.0 {
                continue;
            }
            for b in 0..n {
                let y = other.coeffs[b];
                if y == 0.0 {
                    continue;
                }
                out.coeffs[a ^ b] += blade_sign(a, b) * x * y;
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = *self;
        for c in out.coeffs.iter_mut() {
            *c *= s;
        }
        out
    }

    pub fn involute(&self, kind: Involution) -> Self {
        let mut out = *self;
        for (mask, c) in out.coeffs.iter_mut().enumerate().take(self.len()) {
            *c *= grade_sign(mask.count_ones(), kind);
        }
        out
    }

    pub fn prime(&self) -> Self {
        self.involute(Involution::Prime)
    }

    pub fn star(&self) -> Self {
        self.involute(Involution::Star)
    }

    pub fn bar(&self) -> Self {
        self.involute(Involution::Bar)
    }

    /// Sum of squared coefficients.
    pub fn norm_sq(&self) -> f64 {
        self.coeffs().iter().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Largest absolute coefficient.
    pub fn max_abs(&self) -> f64 {
        self.coeffs().iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// True when all coefficients above grade 1 are within `tol` of zero.
    pub fn is_vector(&self, tol: f64) -> bool {
        self.coeffs()
            .iter()
            .enumerate()
            .all(|(mask, c)| mask.count_ones() <= 1 || c.abs() <= tol)
    }

    /// True when all non-scalar coefficients are within `tol` of zero.
    pub fn is_scalar(&self, tol: f64) -> bool {
        self.coeffs()[1..].iter().all(|c| c.abs() <= tol)
    }

    /// Inverse of a nonzero Clifford vector: `bar(x) / |x|^2`.
    pub fn vector_inverse(&self) -> Result<Self, CliffordError> {
        if !self.is_vector(1e-12 * self.max_abs().max(1.0)) {
            return Err(CliffordError::NotVector);
        }
        let n = self.norm_sq();
        if n == 0.0 {
            return Err(CliffordError::Zero);
        }
        Ok(self.bar().scale(1.0 / n))
    }

    /// Inverse of an element of the Clifford group (a product of nonzero
    /// vectors), for which `x * bar(x)` is a positive scalar.
    pub fn group_inverse(&self) -> Result<Self, CliffordError> {
        let b = self.bar();
        let p = self.mul_unchecked(&b);
        let s = p.scalar_part();
        if s <= 0.0 {
            return Err(if self.norm_sq() == 0.0 {
                CliffordError::Zero
            } else {
                CliffordError::NotInvertible
            });
        }
        if !p.is_scalar(1e-9 * s) {
            return Err(CliffordError::NotInvertible);
        }
        Ok(b.scale(1.0 / s))
    }

    /// Largest coefficient difference, assuming equal dimensions.
    pub fn max_diff(&self, other: &Self) -> f64 {
        (0..MAX_LEN).fold(0.0, |m, k| m.max((self.coeffs[k] - other.coeffs[k]).abs()))
    }
}

/// Product in `C_m`. Dimension mismatch is an error.
pub fn clifford_mul(a: &CliffordNumber, b: &CliffordNumber) -> Result<CliffordNumber, CliffordError> {
    a.try_mul(b)
}

pub fn involute(a: &CliffordNumber, kind: Involution) -> CliffordNumber {
    a.involute(kind)
}

pub fn norm_sq(a: &CliffordNumber) -> f64 {
    a.norm_sq()
}

pub fn vector_inverse(x: &CliffordNumber) -> Result<CliffordNumber, CliffordError> {
    x.vector_inverse()
}

impl Mul for CliffordNumber {
    type Output = CliffordNumber;

    /// # Panics
    /// On dimension mismatch; use [`CliffordNumber::try_mul`] to handle it.
    fn mul(self, rhs: Self) -> Self {
        self.try_mul(&rhs).expect("Clifford product of mismatched dimensions")
    }
}

impl Add for CliffordNumber {
    type Output = CliffordNumber;
    fn add(self, rhs: Self) -> Self {
        assert_eq!(self.dim, rhs.dim, "Clifford sum of mismatched dimensions");
        let mut out = self;
        for k in 0..MAX_LEN {
            out.coeffs[k] += rhs.coeffs[k];
        }
        out
    }
}

impl Sub for CliffordNumber {
    type Output = CliffordNumber;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Neg for CliffordNumber {
    type Output = CliffordNumber;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl fmt::Debug for CliffordNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}{:?}", self.dim, self.coeffs())
    }
}

impl fmt::Display for CliffordNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (mask, &c) in self.coeffs().iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c}")?;
            for j in 0..self.dim() {
                if mask & (1 << j) != 0 {
                    write!(f, "i{}", j + 1)?;
                }
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn i(dim: usize, j: usize) -> CliffordNumber {
        CliffordNumber::generator(dim, j)
    }

    #[test]
    fn generator_squares_to_minus_one() {
        assert_eq!(i(2, 1) * i(2, 1), CliffordNumber::scalar(2, -1.0));
    }

    #[test]
    fn generators_anticommute() {
        let i12 = CliffordNumber::blade(2, 0b11, 1.0);
        assert_eq!(i(2, 1) * i(2, 2), i12);
        assert_eq!(i(2, 2) * i(2, 1), -i12);
    }

    #[test]
    fn conjugate_pair_product() {
        let one = CliffordNumber::one(1);
        let p = (one + i(1, 1)) * (one - i(1, 1));
        assert_eq!(p, CliffordNumber::scalar(1, 2.0));
    }

    #[test]
    fn mismatched_dimensions_are_rejected() {
        let err = clifford_mul(&i(1, 1), &i(2, 1)).unwrap_err();
        assert_eq!(err, CliffordError::DimensionMismatch { left: 1, right: 2 });
    }

    #[test]
    fn involutions_on_bivector() {
        let i12 = CliffordNumber::blade(2, 0b11, 1.0);
        assert_eq!(i12.prime(), i12);
        assert_eq!(i12.star(), -i12);
        assert_eq!(i12.bar(), -i12);
    }

    #[test]
    fn bar_of_vector_negates_generators() {
        let x = CliffordNumber::vector(3, &[0.5, 1.0, -2.0, 3.0]);
        assert_eq!(x.bar(), CliffordNumber::vector(3, &[0.5, -1.0, 2.0, -3.0]));
    }

    #[test]
    fn norms() {
        assert_eq!((i(2, 1) + i(2, 2)).norm_sq(), 2.0);
        assert_eq!(CliffordNumber::zero(3).norm_sq(), 0.0);
        let one = CliffordNumber::one(2);
        let p = (one + i(2, 1)) * (one + i(2, 2));
        // expands to 1 + i1 + i2 + i1i2
        let expected = CliffordNumber::from_coeffs(2, &[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(p, expected);
        assert_eq!(p.norm_sq(), 4.0);
    }

    #[test]
    fn vector_inverses() {
        assert_eq!(i(1, 1).vector_inverse().unwrap(), -i(1, 1));
        assert_eq!(
            CliffordNumber::scalar(0, 2.0).vector_inverse().unwrap(),
            CliffordNumber::scalar(0, 0.5)
        );
        let x = CliffordNumber::vector(1, &[1.0, 1.0]);
        let inv = x.vector_inverse().unwrap();
        assert_eq!(inv, CliffordNumber::vector(1, &[0.5, -0.5]));
        assert!((x * inv).max_diff(&CliffordNumber::one(1)) < 1e-15);
        assert_eq!(CliffordNumber::zero(2).vector_inverse(), Err(CliffordError::Zero));
        assert_eq!(
            CliffordNumber::blade(2, 0b11, 1.0).vector_inverse(),
            Err(CliffordError::NotVector)
        );
    }

    #[test]
    fn group_inverse_of_product() {
        let a = CliffordNumber::vector(3, &[0.3, -1.0, 0.2, 0.7]);
        let b = CliffordNumber::vector(3, &[1.1, 0.4, -0.6, 0.0]);
        let p = a * b;
        let inv = p.group_inverse().unwrap();
        assert!((p * inv).max_diff(&CliffordNumber::one(3)) < 1e-14);
    }

    #[test]
    fn display_lists_blades() {
        let x = CliffordNumber::from_coeffs(2, &[1.0, 0.0, 2.0, -1.0]).unwrap();
        assert_eq!(x.to_string(), "1 + 2i2 + -1i1i2");
    }

    fn element(dim: usize) -> impl Strategy<Value = CliffordNumber> {
        proptest::collection::vec(-1.0f64..1.0, 1 << dim)
            .prop_map(move |c| CliffordNumber::from_coeffs(dim, &c).unwrap())
    }

    fn vector(dim: usize) -> impl Strategy<Value = CliffordNumber> {
        proptest::collection::vec(-1.0f64..1.0, dim + 1)
            .prop_filter("nonzero", |c| c.iter().map(|x| x * x).sum::<f64>() > 1e-3)
            .prop_map(move |c| CliffordNumber::vector(dim, &c))
    }

    proptest! {
        #[test]
        fn associative(a in element(3), b in element(3), c in element(3)) {
            prop_assert!(((a * b) * c).max_diff(&(a * (b * c))) < 1e-12);
        }

        #[test]
        fn involution_laws(a in element(4), b in element(4)) {
            prop_assert_eq!(a.prime().prime(), a);
            prop_assert_eq!(a.star().star(), a);
            prop_assert!((a * b).star().max_diff(&(b.star() * a.star())) < 1e-12);
            prop_assert!((a * b).prime().max_diff(&(a.prime() * b.prime())) < 1e-12);
            prop_assert_eq!(a.bar(), a.star().prime());
        }

        #[test]
        fn norm_multiplicative_on_clifford_group(x in vector(3), y in vector(3), z in vector(3)) {
            let a = x * y;
            let b = z * x;
            let lhs = (a * b).norm_sq();
            let rhs = a.norm_sq() * b.norm_sq();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs);
        }

        #[test]
        fn vector_times_bar_is_norm(x in vector(4)) {
            let p = x * x.bar();
            prop_assert!(p.is_scalar(1e-14));
            prop_assert!((p.scalar_part() - x.norm_sq()).abs() < 1e-14);
        }
    }
}
