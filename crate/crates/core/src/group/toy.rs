//! The order-11 subgroup of `Z_23^*` generated by 2.
//!
//! Small enough to check every formula by hand; never secure.

use core::ops::{Add, AddAssign, Mul, Neg, Sub};

use rand_core::CryptoRngCore;
use sha2::{Digest, Sha256};

use super::{EncodingError, Group};

pub const TOY_P: u8 = 23;
pub const TOY_Q: u8 = 11;
pub const TOY_G: u8 = 2;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ToyGroup;

/// Exponent in `Z_11`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ToyScalar(u8);

impl ToyScalar {
    pub fn new(v: u64) -> Self {
        ToyScalar((v % TOY_Q as u64) as u8)
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

/// Residue in `Z_23^*` lying in the subgroup generated by 2.
///
/// The group operation is multiplication mod 23, written `+` to match
/// the additive convention of [`Group`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ToyPoint(u8);

impl ToyPoint {
    /// Checked construction from a residue.
    pub fn new(v: u8) -> Option<Self> {
        (v != 0 && v < TOY_P && pow_mod(v as u64, TOY_Q as u64) == 1).then_some(ToyPoint(v))
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl Default for ToyPoint {
    fn default() -> Self {
        ToyPoint(1)
    }
}

fn pow_mod(base: u64, mut exp: u64) -> u64 {
    let p = TOY_P as u64;
    let mut b = base % p;
    let mut acc = 1u64;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * b % p;
        }
        b = b * b % p;
        exp >>= 1;
    }
    acc
}

impl Add for ToyScalar {
    type Output = ToyScalar;
    fn add(self, rhs: ToyScalar) -> ToyScalar {
        ToyScalar((self.0 + rhs.0) % TOY_Q)
    }
}

impl AddAssign for ToyScalar {
    fn add_assign(&mut self, rhs: ToyScalar) {
        *self = *self + rhs;
    }
}

impl Sub for ToyScalar {
    type Output = ToyScalar;
    fn sub(self, rhs: ToyScalar) -> ToyScalar {
        ToyScalar((self.0 + TOY_Q - rhs.0) % TOY_Q)
    }
}

impl Mul for ToyScalar {
    type Output = ToyScalar;
    fn mul(self, rhs: ToyScalar) -> ToyScalar {
        ToyScalar(((self.0 as u16 * rhs.0 as u16) % TOY_Q as u16) as u8)
    }
}

impl Neg for ToyScalar {
    type Output = ToyScalar;
    fn neg(self) -> ToyScalar {
        ToyScalar((TOY_Q - self.0) % TOY_Q)
    }
}

impl Add for ToyPoint {
    type Output = ToyPoint;
    fn add(self, rhs: ToyPoint) -> ToyPoint {
        ToyPoint(((self.0 as u16 * rhs.0 as u16) % TOY_P as u16) as u8)
    }
}

impl AddAssign for ToyPoint {
    fn add_assign(&mut self, rhs: ToyPoint) {
        *self = *self + rhs;
    }
}

impl Neg for ToyPoint {
    type Output = ToyPoint;
    fn neg(self) -> ToyPoint {
        // inverse in Z_23^*: x^(p-2)
        ToyPoint(pow_mod(self.0 as u64, TOY_P as u64 - 2) as u8)
    }
}

impl Sub for ToyPoint {
    type Output = ToyPoint;
    fn sub(self, rhs: ToyPoint) -> ToyPoint {
        self + (-rhs)
    }
}

impl Mul<ToyScalar> for ToyPoint {
    type Output = ToyPoint;
    fn mul(self, rhs: ToyScalar) -> ToyPoint {
        ToyPoint(pow_mod(self.0 as u64, rhs.0 as u64) as u8)
    }
}

impl Group for ToyGroup {
    type Scalar = ToyScalar;
    type Point = ToyPoint;
    type ScalarBytes = [u8; 1];
    type PointBytes = [u8; 1];

    const NAME: &'static str = "toy";
    const SCALAR_LEN: usize = 1;
    const POINT_LEN: usize = 1;

    fn generator() -> ToyPoint {
        ToyPoint(TOY_G)
    }

    fn identity() -> ToyPoint {
        ToyPoint(1)
    }

    fn scalar_from_u64(value: u64) -> ToyScalar {
        ToyScalar::new(value)
    }

    fn scalar_reduce(bytes: &[u8]) -> ToyScalar {
        let r = bytes
            .iter()
            .fold(0u64, |acc, b| (acc * 256 + *b as u64) % TOY_Q as u64);
        ToyScalar(r as u8)
    }

    fn scalar_to_bytes(scalar: &ToyScalar) -> [u8; 1] {
        [scalar.0]
    }

    fn scalar_from_bytes(bytes: &[u8]) -> Result<ToyScalar, EncodingError> {
        match bytes {
            [v] if *v < TOY_Q => Ok(ToyScalar(*v)),
            [_] => Err(EncodingError::ScalarOutOfRange),
            _ => Err(EncodingError::Length {
                expected: 1,
                actual: bytes.len(),
            }),
        }
    }

    fn scalar_invert(scalar: &ToyScalar) -> Option<ToyScalar> {
        (scalar.0 != 0).then(|| {
            let mut inv = 1u8;
            while (inv as u16 * scalar.0 as u16) % TOY_Q as u16 != 1 {
                inv += 1;
            }
            ToyScalar(inv)
        })
    }

    fn random_scalar(rng: &mut impl CryptoRngCore) -> ToyScalar {
        ToyScalar((rng.next_u32() % TOY_Q as u32) as u8)
    }

    fn point_to_bytes(point: &ToyPoint) -> [u8; 1] {
        [point.0]
    }

    fn point_from_bytes(bytes: &[u8]) -> Result<ToyPoint, EncodingError> {
        match bytes {
            [v] => ToyPoint::new(*v).ok_or(EncodingError::NotOnGroup),
            _ => Err(EncodingError::Length {
                expected: 1,
                actual: bytes.len(),
            }),
        }
    }

    fn hash_to_point(domain: &[u8], msg: &[u8]) -> ToyPoint {
        // Squares mod 23 are exactly the order-11 subgroup.
        let mut counter: u32 = 0;
        loop {
            let d = Sha256::new()
                .chain_update(domain)
                .chain_update(msg)
                .chain_update(counter.to_be_bytes())
                .finalize();
            let x = 1 + (d[0] as u64 % (TOY_P as u64 - 1));
            let sq = (x * x % TOY_P as u64) as u8;
            if sq != 1 && sq != TOY_G {
                return ToyPoint(sq);
            }
            counter += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent big-integer oracle for exponentiation in Z_23.
    fn naive_pow(base: u64, exp: u64) -> u64 {
        (0..exp).fold(1u64, |acc, _| acc * base % 23)
    }

    #[test]
    fn generator_has_order_eleven() {
        assert_eq!(naive_pow(2, 11), 1);
        for e in 1..11 {
            assert_ne!(naive_pow(2, e), 1);
        }
    }

    #[test]
    fn subgroup_membership() {
        let members: alloc::vec::Vec<u8> = (1..23).filter_map(|v| ToyPoint::new(v).map(|p| p.0)).collect();
        assert_eq!(members.len(), 11);
        for v in members {
            assert!((0..11).any(|e| naive_pow(2, e) == v as u64));
        }
        assert!(ToyGroup::point_from_bytes(&[5]).is_err()); // 5 is a non-residue mod 23
        assert!(ToyGroup::point_from_bytes(&[0]).is_err());
        assert!(ToyGroup::point_from_bytes(&[23]).is_err());
    }

    #[test]
    fn scalar_arithmetic_is_exhaustively_mod_eleven() {
        for a in 0..11u64 {
            for b in 0..11u64 {
                let (x, y) = (ToyScalar::new(a), ToyScalar::new(b));
                assert_eq!((x + y).0 as u64, (a + b) % 11);
                assert_eq!((x - y).0 as u64, (a + 11 - b) % 11);
                assert_eq!((x * y).0 as u64, (a * b) % 11);
                assert_eq!((-x).0 as u64, (11 - a) % 11);
            }
            if a != 0 {
                let inv = ToyGroup::scalar_invert(&ToyScalar::new(a)).unwrap();
                assert_eq!((inv.0 as u64 * a) % 11, 1);
            }
        }
    }

    #[test]
    fn exponentiation_matches_oracle() {
        for e in 0..11u64 {
            let p = ToyGroup::mul_base(&ToyScalar::new(e));
            assert_eq!(p.0 as u64, naive_pow(2, e));
        }
        // 2^3 = 8
        assert_eq!(ToyGroup::mul_base(&ToyScalar::new(3)).value(), 8);
    }

    #[test]
    fn point_law() {
        let g = ToyGroup::generator();
        assert_eq!(g - g, ToyGroup::identity());
        assert_eq!((g + g).value(), 4);
        assert_eq!(g * ToyScalar::new(11), ToyGroup::identity());
    }
}
