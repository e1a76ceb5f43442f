//! Prime-field arithmetic and the symmetric bivariate polynomial used as a
//! generation's master secret.
//!
//! All moduli are primes below 2^32, so a product of two reduced residues
//! always fits in a `u64` and no wide arithmetic is needed.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Mersenne prime 2^31 - 1, the default desk-scale modulus.
pub const DEFAULT_MODULUS: u64 = (1 << 31) - 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("modulus {0} is not prime")]
    NotPrime(u64),
    #[error("modulus {0} is too small (need at least {1})")]
    TooSmall(u64, u64),
    #[error("modulus {0} does not fit in 32 bits")]
    TooLarge(u64),
    #[error("coefficient matrix is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),
    #[error("coefficient at ({0}, {1}) is outside [1, Q-1]")]
    CoefficientOutOfRange(usize, usize),
    #[error("expected {expected} coefficients, got {got}")]
    WrongShape { expected: usize, got: usize },
    #[error("duplicate x-coordinate {0} in interpolation points")]
    DuplicateX(u64),
    #[error("interpolation needs at least one point")]
    NoPoints,
}

/// Deterministic trial-division primality test; fine for 32-bit moduli.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// A validated prime modulus Q with 2 <= Q < 2^32.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Modulus(u64);

/// A residue in `[0, Q)`. Only a [`Modulus`] can mint one, which keeps the
/// value reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FieldElement(u64);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);

    pub fn value(self) -> u64 {
        self.0
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Modulus {
    pub fn new(q: u64) -> Result<Self, FieldError> {
        if q < 2 {
            return Err(FieldError::TooSmall(q, 2));
        }
        if q > u32::MAX as u64 {
            return Err(FieldError::TooLarge(q));
        }
        if !is_prime(q) {
            return Err(FieldError::NotPrime(q));
        }
        Ok(Modulus(q))
    }

    pub fn value(self) -> u64 {
        self.0
    }

    /// Reduces an arbitrary integer into the field.
    pub fn elem(self, v: u64) -> FieldElement {
        FieldElement(v % self.0)
    }

    pub fn add(self, a: FieldElement, b: FieldElement) -> FieldElement {
        let s = a.0 + b.0;
        FieldElement(if s >= self.0 { s - self.0 } else { s })
    }

    pub fn sub(self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(if a.0 >= b.0 { a.0 - b.0 } else { a.0 + self.0 - b.0 })
    }

    pub fn neg(self, a: FieldElement) -> FieldElement {
        self.sub(FieldElement::ZERO, a)
    }

    pub fn mul(self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(a.0 * b.0 % self.0)
    }

    pub fn pow(self, base: FieldElement, mut exp: u64) -> FieldElement {
        let mut acc = self.elem(1);
        let mut b = base;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, b);
            }
            b = self.mul(b, b);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse by Fermat's little theorem. `a` must be non-zero.
    pub fn inv(self, a: FieldElement) -> FieldElement {
        debug_assert!(a.0 != 0, "zero has no inverse");
        self.pow(a, self.0 - 2)
    }
}

/// Univariate polynomial over Z_Q, constant term first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnivariatePoly {
    modulus: Modulus,
    coeffs: Vec<FieldElement>,
}

impl UnivariatePoly {
    pub fn new(modulus: Modulus, coeffs: Vec<FieldElement>) -> Self {
        let coeffs = coeffs.into_iter().map(|c| modulus.elem(c.0)).collect();
        UnivariatePoly { modulus, coeffs }
    }

    pub fn from_u64s(modulus: Modulus, coeffs: &[u64]) -> Self {
        UnivariatePoly {
            modulus,
            coeffs: coeffs.iter().map(|&c| modulus.elem(c)).collect(),
        }
    }

    pub fn modulus(&self) -> Modulus {
        self.modulus
    }

    pub fn coeffs(&self) -> &[FieldElement] {
        &self.coeffs
    }

    pub fn coeff_values(&self) -> Vec<u64> {
        self.coeffs.iter().map(|c| c.0).collect()
    }

    /// Horner evaluation mod Q.
    pub fn eval(&self, y: FieldElement) -> FieldElement {
        let m = self.modulus;
        self.coeffs
            .iter()
            .rev()
            .fold(FieldElement::ZERO, |acc, &c| m.add(m.mul(acc, y), c))
    }
}

/// Symmetric bivariate polynomial `P(x, y) = sum a_ij x^i y^j mod Q` with
/// `a_ij = a_ji` and every coefficient in `[1, Q-1]`.
///
/// Zero coefficients are rejected even though the classic Blundo scheme
/// allows them.
#[derive(Clone, PartialEq, Eq)]
pub struct SymmetricBivariatePoly {
    degree: usize,
    modulus: Modulus,
    // row-major (degree+1) x (degree+1)
    coeffs: Vec<FieldElement>,
}

impl fmt::Debug for SymmetricBivariatePoly {
    // Master material stays out of logs.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymmetricBivariatePoly")
            .field("degree", &self.degree)
            .field("modulus", &self.modulus.0)
            .finish_non_exhaustive()
    }
}

impl SymmetricBivariatePoly {
    /// Builds a polynomial from a full row-major coefficient matrix,
    /// checking symmetry and the `[1, Q-1]` bound.
    pub fn from_matrix(degree: usize, modulus: Modulus, matrix: &[u64]) -> Result<Self, FieldError> {
        let side = degree + 1;
        if matrix.len() != side * side {
            return Err(FieldError::WrongShape {
                expected: side * side,
                got: matrix.len(),
            });
        }
        for i in 0..side {
            for j in 0..side {
                let v = matrix[i * side + j];
                if v == 0 || v >= modulus.value() {
                    return Err(FieldError::CoefficientOutOfRange(i, j));
                }
                if v != matrix[j * side + i] {
                    return Err(FieldError::NotSymmetric(i, j));
                }
            }
        }
        Ok(SymmetricBivariatePoly {
            degree,
            modulus,
            coeffs: matrix.iter().map(|&v| FieldElement(v)).collect(),
        })
    }

    /// Draws a fresh master polynomial. The upper triangle `i <= j` is
    /// sampled in row order, uniformly over `[1, Q-1]`, then mirrored.
    pub fn generate(degree: usize, modulus: Modulus, seed: u64) -> Result<Self, FieldError> {
        let q = modulus.value();
        if q < 3 {
            return Err(FieldError::TooSmall(q, 3));
        }
        let side = degree + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coeffs = vec![FieldElement::ZERO; side * side];
        for i in 0..side {
            for j in i..side {
                // random_range rejects out-of-zone draws, so there is no modulo bias.
                let v = FieldElement(rng.random_range(1..q));
                coeffs[i * side + j] = v;
                coeffs[j * side + i] = v;
            }
        }
        Ok(SymmetricBivariatePoly {
            degree,
            modulus,
            coeffs,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn modulus(&self) -> Modulus {
        self.modulus
    }

    pub fn coeff(&self, i: usize, j: usize) -> FieldElement {
        self.coeffs[i * (self.degree + 1) + j]
    }

    /// Nested Horner evaluation of `P(x, y)`.
    pub fn eval(&self, x: FieldElement, y: FieldElement) -> FieldElement {
        let m = self.modulus;
        let side = self.degree + 1;
        (0..side).rev().fold(FieldElement::ZERO, |acc, i| {
            let row = &self.coeffs[i * side..(i + 1) * side];
            let row_at_y = row.iter().rev().fold(FieldElement::ZERO, |r, &c| m.add(m.mul(r, y), c));
            m.add(m.mul(acc, x), row_at_y)
        })
    }

    /// Fixes `x = x0`, giving the univariate share `g(y) = P(x0, y)`.
    pub fn restrict_to_x(&self, x0: FieldElement) -> UnivariatePoly {
        let m = self.modulus;
        let side = self.degree + 1;
        let mut out = vec![FieldElement::ZERO; side];
        // g_k = sum_i a_ik x0^i, accumulated with Horner over i.
        for i in (0..side).rev() {
            for (k, slot) in out.iter_mut().enumerate() {
                *slot = m.add(m.mul(*slot, x0), self.coeffs[i * side + k]);
            }
        }
        UnivariatePoly {
            modulus: m,
            coeffs: out,
        }
    }
}

/// Lagrange interpolation over Z_Q. Returns the unique polynomial of degree
/// at most `points.len() - 1` through the points, padded to `points.len()`
/// coefficients.
pub fn interpolate(points: &[(FieldElement, FieldElement)], modulus: Modulus) -> Result<UnivariatePoly, FieldError> {
    if points.is_empty() {
        return Err(FieldError::NoPoints);
    }
    for (a, (xa, _)) in points.iter().enumerate() {
        if points[..a].iter().any(|(xb, _)| xb == xa) {
            return Err(FieldError::DuplicateX(xa.value()));
        }
    }
    let m = modulus;
    let n = points.len();
    let mut result = vec![FieldElement::ZERO; n];
    for (i, &(xi, yi)) in points.iter().enumerate() {
        // Build the basis numerator prod_{j != i} (y - x_j) and its denominator.
        let mut basis = vec![FieldElement::ZERO; n];
        basis[0] = m.elem(1);
        let mut len = 1;
        let mut denom = m.elem(1);
        for (j, &(xj, _)) in points.iter().enumerate() {
            if j == i {
                continue;
            }
            // multiply basis by (y - xj)
            let neg_xj = m.neg(xj);
            for k in (0..=len).rev() {
                let shifted = if k > 0 { basis[k - 1] } else { FieldElement::ZERO };
                let scaled = if k < len {
                    m.mul(basis[k], neg_xj)
                } else {
                    FieldElement::ZERO
                };
                basis[k] = m.add(shifted, scaled);
            }
            len += 1;
            denom = m.mul(denom, m.sub(xi, xj));
        }
        let scale = m.mul(yi, m.inv(denom));
        for (r, b) in result.iter_mut().zip(&basis) {
            *r = m.add(*r, m.mul(*b, scale));
        }
    }
    Ok(UnivariatePoly {
        modulus,
        coeffs: result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn q7() -> Modulus {
        Modulus::new(7).unwrap()
    }

    // P = 2 + 3x + 3y + 5xy over Z_7
    fn worked() -> SymmetricBivariatePoly {
        SymmetricBivariatePoly::from_matrix(1, q7(), &[2, 3, 3, 5]).unwrap()
    }

    // Direct double sum, no Horner; independent of the implementation path.
    fn naive_eval(p: &SymmetricBivariatePoly, x: u64, y: u64) -> u64 {
        let q = p.modulus().value() as u128;
        let mut acc: u128 = 0;
        for i in 0..=p.degree() {
            for j in 0..=p.degree() {
                let term =
                    p.coeff(i, j).value() as u128 * (x as u128).pow(i as u32) % q * (y as u128).pow(j as u32) % q;
                acc = (acc + term) % q;
            }
        }
        acc as u64
    }

    #[test]
    fn modulus_validation() {
        assert!(Modulus::new(7).is_ok());
        assert!(Modulus::new(DEFAULT_MODULUS).is_ok());
        assert_eq!(Modulus::new(9), Err(FieldError::NotPrime(9)));
        assert_eq!(Modulus::new(1), Err(FieldError::TooSmall(1, 2)));
        assert!(matches!(Modulus::new((1 << 32) + 15), Err(FieldError::TooLarge(_))));
    }

    #[test]
    fn generate_rejects_q2() {
        let m = Modulus::new(2).unwrap();
        assert_eq!(
            SymmetricBivariatePoly::generate(1, m, 0).unwrap_err(),
            FieldError::TooSmall(2, 3)
        );
    }

    #[test]
    fn generate_degree_zero() {
        let p = SymmetricBivariatePoly::generate(0, q7(), 99).unwrap();
        let a = p.coeff(0, 0).value();
        assert!((1..=6).contains(&a));
    }

    #[test]
    fn generate_draws_upper_triangle_then_mirrors() {
        let m = Modulus::new(31).unwrap();
        let seed = 1234;
        let p = SymmetricBivariatePoly::generate(2, m, seed).unwrap();
        // Replay the generator: exactly 6 draws in (0,0),(0,1),(0,2),(1,1),(1,2),(2,2) order.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<u64> = (0..6).map(|_| rng.random_range(1..31u64)).collect();
        let order = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
        for (&(i, j), &d) in order.iter().zip(&draws) {
            assert_eq!(p.coeff(i, j).value(), d);
            assert_eq!(p.coeff(j, i).value(), d);
        }
    }

    #[test]
    fn generate_is_deterministic() {
        let a = SymmetricBivariatePoly::generate(1, q7(), 5).unwrap();
        let b = SymmetricBivariatePoly::generate(1, q7(), 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn from_matrix_checks() {
        assert_eq!(
            SymmetricBivariatePoly::from_matrix(1, q7(), &[2, 3, 4, 5]).unwrap_err(),
            FieldError::NotSymmetric(0, 1)
        );
        assert_eq!(
            SymmetricBivariatePoly::from_matrix(1, q7(), &[0, 3, 3, 5]).unwrap_err(),
            FieldError::CoefficientOutOfRange(0, 0)
        );
        assert_eq!(
            SymmetricBivariatePoly::from_matrix(1, q7(), &[2, 7, 7, 5]).unwrap_err(),
            FieldError::CoefficientOutOfRange(0, 1)
        );
        assert!(matches!(
            SymmetricBivariatePoly::from_matrix(1, q7(), &[2, 3, 3]),
            Err(FieldError::WrongShape { expected: 4, got: 3 })
        ));
    }

    #[test]
    fn eval_worked_example() {
        let p = worked();
        let m = q7();
        assert_eq!(p.eval(m.elem(2), m.elem(3)).value(), 5);
        assert_eq!(p.eval(m.elem(3), m.elem(2)).value(), 5);
        assert_eq!(p.eval(m.elem(0), m.elem(0)).value(), 2);
    }

    #[test]
    fn restrict_worked_example() {
        let p = worked();
        let m = q7();
        assert_eq!(p.restrict_to_x(m.elem(2)).coeff_values(), vec![1, 6]);
        assert_eq!(p.restrict_to_x(m.elem(3)).coeff_values(), vec![4, 4]);
        assert_eq!(p.restrict_to_x(m.elem(0)).coeff_values(), vec![2, 3]);
    }

    #[test]
    fn univariate_worked_example() {
        let m = q7();
        assert_eq!(UnivariatePoly::from_u64s(m, &[1, 6]).eval(m.elem(3)).value(), 5);
        assert_eq!(UnivariatePoly::from_u64s(m, &[4, 4]).eval(m.elem(2)).value(), 5);
        assert_eq!(UnivariatePoly::from_u64s(m, &[4, 4]).eval(m.elem(0)).value(), 4);
    }

    #[test]
    fn interpolate_examples() {
        let m = q7();
        let pts = [(m.elem(2), m.elem(5)), (m.elem(3), m.elem(5))];
        assert_eq!(interpolate(&pts, m).unwrap().coeff_values(), vec![5, 0]);
        assert_eq!(
            interpolate(&[(m.elem(4), m.elem(2))], m).unwrap().coeff_values(),
            vec![2]
        );
        assert_eq!(interpolate(&[], m).unwrap_err(), FieldError::NoPoints);
        let dup = [(m.elem(1), m.elem(2)), (m.elem(1), m.elem(3))];
        assert_eq!(interpolate(&dup, m).unwrap_err(), FieldError::DuplicateX(1));
    }

    #[test]
    fn restriction_matches_bivariate_exhaustively_small_fields() {
        for q in [3u64, 5, 7, 11, 13, 31] {
            let m = Modulus::new(q).unwrap();
            for degree in 0..=3 {
                let p = SymmetricBivariatePoly::generate(degree, m, q * 17 + degree as u64).unwrap();
                for x in 0..q {
                    let share = p.restrict_to_x(m.elem(x));
                    for y in 0..q {
                        let expect = naive_eval(&p, x, y);
                        assert_eq!(p.eval(m.elem(x), m.elem(y)).value(), expect);
                        assert_eq!(share.eval(m.elem(y)).value(), expect);
                    }
                }
            }
        }
    }

    #[test]
    fn bivariate_symmetry_ten_thousand_cases() {
        let m = Modulus::new(DEFAULT_MODULUS).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for case in 0..10_000u64 {
            let degree = (case % 5) as usize;
            let p = SymmetricBivariatePoly::generate(degree, m, case).unwrap();
            let x = m.elem(rng.random());
            let y = m.elem(rng.random());
            assert_eq!(p.eval(x, y), p.eval(y, x));
        }
    }

    proptest! {
        #[test]
        fn interpolation_recovers_share(seed in any::<u64>(), degree in 0usize..5, x0 in any::<u64>()) {
            let m = Modulus::new(DEFAULT_MODULUS).unwrap();
            let p = SymmetricBivariatePoly::generate(degree, m, seed).unwrap();
            let share = p.restrict_to_x(m.elem(x0));
            let pts: Vec<_> = (0..=degree as u64)
                .map(|y| (m.elem(y + 1), share.eval(m.elem(y + 1))))
                .collect();
            prop_assert_eq!(interpolate(&pts, m).unwrap(), share);
        }

        #[test]
        fn inverse_roundtrip(a in 1u64..DEFAULT_MODULUS) {
            let m = Modulus::new(DEFAULT_MODULUS).unwrap();
            let e = m.elem(a);
            prop_assert_eq!(m.mul(e, m.inv(e)).value(), 1);
        }
    }
}
