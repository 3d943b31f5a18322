//! Shamir sharing over a 64-bit prime field.

use alloc::vec::Vec;

use rand_core::RngCore;

use super::field::{add_mod, inv_mod_prime, mul_mod, sub_mod};
use super::MaskingError;

/// `f(x) = secret + Σ_k a_k x^k mod p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharePolynomial {
    coefficients: Vec<u64>,
    modulus: u64,
}

impl SharePolynomial {
    /// Coefficients in ascending degree, the first being the secret.
    pub fn from_coefficients(coefficients: Vec<u64>, modulus: u64) -> Self {
        let coefficients = coefficients.into_iter().map(|c| c % modulus).collect();
        SharePolynomial {
            coefficients,
            modulus,
        }
    }

    /// Degree `threshold - 1` polynomial with uniform coefficients.
    pub fn random(secret: u64, threshold: usize, modulus: u64, rng: &mut impl RngCore) -> Self {
        let mut coefficients = Vec::with_capacity(threshold);
        coefficients.push(secret % modulus);
        for _ in 1..threshold {
            coefficients.push(uniform_below(modulus, rng));
        }
        SharePolynomial {
            coefficients,
            modulus,
        }
    }

    pub fn secret(&self) -> u64 {
        self.coefficients[0]
    }

    pub fn eval(&self, x: u64) -> u64 {
        let x = x % self.modulus;
        self.coefficients
            .iter()
            .rev()
            .fold(0, |acc, c| add_mod(mul_mod(acc, x, self.modulus), *c, self.modulus))
    }
}

/// Rejection sampling: uniform in `[0, bound)`.
pub fn uniform_below(bound: u64, rng: &mut impl RngCore) -> u64 {
    let zone = u64::MAX - (u64::MAX % bound);
    loop {
        let v = rng.next_u64();
        if v < zone {
            return v % bound;
        }
    }
}

/// Interpolates `f(0)` from points with distinct nonzero x.
///
/// `f(0) = Σ_i y_i Π_{j≠i} x_j / (x_j − x_i)`.
pub fn interpolate_at_zero(points: &[(u64, u64)], p: u64) -> Result<u64, MaskingError> {
    for (n, (x, _)) in points.iter().enumerate() {
        if *x % p == 0 {
            return Err(MaskingError::ZeroShareIndex);
        }
        if points[..n].iter().any(|(y, _)| y % p == x % p) {
            return Err(MaskingError::DuplicateShareIndex(*x as usize));
        }
    }
    let mut acc = 0;
    for (i, (xi, yi)) in points.iter().enumerate() {
        let mut num = 1;
        let mut den = 1;
        for (j, (xj, _)) in points.iter().enumerate() {
            if i != j {
                num = mul_mod(num, *xj, p);
                den = mul_mod(den, sub_mod(*xj, *xi, p), p);
            }
        }
        let coeff = mul_mod(num, inv_mod_prime(den, p).expect("distinct x"), p);
        acc = add_mod(acc, mul_mod(*yi, coeff, p), p);
    }
    Ok(acc)
}
