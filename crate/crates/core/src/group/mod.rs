//! Prime-order group abstraction.
//!
//! Points are written additively (`P + Q`, `P * k`); the multiplicative
//! notation `g^k · R` used in protocol descriptions maps to `g * k + R`.

use core::fmt::Debug;
use core::ops::{Add, AddAssign, Mul, Neg, Sub};

use rand_core::CryptoRngCore;

mod secp256k1;
mod toy;

pub use secp256k1::Secp256k1;
pub use toy::{ToyGroup, ToyPoint, ToyScalar};

/// Failure to decode a scalar or a point from bytes.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncodingError {
    #[error("expected {expected} bytes, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error("scalar is not reduced modulo the group order")]
    ScalarOutOfRange,
    #[error("bytes do not encode a group element")]
    NotOnGroup,
}

/// A cyclic group of prime order `q` with a fixed generator.
pub trait Group: Copy + Clone + Debug + Default + PartialEq + Eq + Send + Sync + 'static {
    type Scalar: Copy
        + Clone
        + Debug
        + PartialEq
        + Eq
        + Send
        + Sync
        + Add<Output = Self::Scalar>
        + AddAssign
        + Sub<Output = Self::Scalar>
        + Mul<Output = Self::Scalar>
        + Neg<Output = Self::Scalar>;

    type Point: Copy
        + Clone
        + Debug
        + PartialEq
        + Eq
        + Send
        + Sync
        + Add<Output = Self::Point>
        + AddAssign
        + Sub<Output = Self::Point>
        + Neg<Output = Self::Point>
        + Mul<Self::Scalar, Output = Self::Point>;

    /// Fixed-width big-endian scalar encoding.
    type ScalarBytes: AsRef<[u8]> + Copy + Debug + Eq + Ord;
    /// Fixed-width point encoding; compressed for curves.
    type PointBytes: AsRef<[u8]> + Copy + Debug + Eq + Ord;

    /// Configuration name, e.g. `"secp256k1"`.
    const NAME: &'static str;
    const SCALAR_LEN: usize;
    const POINT_LEN: usize;

    fn generator() -> Self::Point;
    fn identity() -> Self::Point;

    fn scalar_from_u64(value: u64) -> Self::Scalar;
    /// Interprets `bytes` as a big-endian integer of any length and reduces it mod `q`.
    fn scalar_reduce(bytes: &[u8]) -> Self::Scalar;
    fn scalar_to_bytes(scalar: &Self::Scalar) -> Self::ScalarBytes;
    /// Canonical decoding; rejects values `>= q`.
    fn scalar_from_bytes(bytes: &[u8]) -> Result<Self::Scalar, EncodingError>;
    fn scalar_invert(scalar: &Self::Scalar) -> Option<Self::Scalar>;
    fn random_scalar(rng: &mut impl CryptoRngCore) -> Self::Scalar;

    fn point_to_bytes(point: &Self::Point) -> Self::PointBytes;
    /// Decodes and checks group membership. The identity is accepted.
    fn point_from_bytes(bytes: &[u8]) -> Result<Self::Point, EncodingError>;

    /// Maps `msg` to a group element whose discrete log is unknown to the caller.
    fn hash_to_point(domain: &[u8], msg: &[u8]) -> Self::Point;

    fn scalar_zero() -> Self::Scalar {
        Self::scalar_from_u64(0)
    }

    fn scalar_one() -> Self::Scalar {
        Self::scalar_from_u64(1)
    }

    fn is_zero(scalar: &Self::Scalar) -> bool {
        *scalar == Self::scalar_zero()
    }

    fn is_identity(point: &Self::Point) -> bool {
        *point == Self::identity()
    }

    fn random_nonzero_scalar(rng: &mut impl CryptoRngCore) -> Self::Scalar {
        loop {
            let s = Self::random_scalar(rng);
            if !Self::is_zero(&s) {
                return s;
            }
        }
    }

    /// `g * scalar`.
    fn mul_base(scalar: &Self::Scalar) -> Self::Point {
        Self::generator() * *scalar
    }
}

/// Scalar wire helper: appends the fixed-width encoding.
pub fn put_scalar<G: Group>(out: &mut alloc::vec::Vec<u8>, s: &G::Scalar) {
    out.extend_from_slice(G::scalar_to_bytes(s).as_ref());
}

/// Point wire helper: appends the fixed-width encoding.
pub fn put_point<G: Group>(out: &mut alloc::vec::Vec<u8>, p: &G::Point) {
    out.extend_from_slice(G::point_to_bytes(p).as_ref());
}
