use k256::elliptic_curve::bigint::U256;
use k256::elliptic_curve::ops::Reduce;
use k256::elliptic_curve::sec1::{FromEncodedPoint, ToEncodedPoint};
use k256::elliptic_curve::{Field, PrimeField};
use k256::{AffinePoint, EncodedPoint, FieldBytes, ProjectivePoint, Scalar};
use rand_core::CryptoRngCore;
use sha2::{Digest, Sha256};

use super::{EncodingError, Group};

/// secp256k1 with 33-byte compressed points and 32-byte scalars.
///
/// The identity has no SEC1 compressed form; it is encoded as 33 zero bytes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Secp256k1;

impl Group for Secp256k1 {
    type Scalar = Scalar;
    type Point = ProjectivePoint;
    type ScalarBytes = [u8; 32];
    type PointBytes = [u8; 33];

    const NAME: &'static str = "secp256k1";
    const SCALAR_LEN: usize = 32;
    const POINT_LEN: usize = 33;

    fn generator() -> ProjectivePoint {
        ProjectivePoint::GENERATOR
    }

    fn identity() -> ProjectivePoint {
        ProjectivePoint::IDENTITY
    }

    fn scalar_from_u64(value: u64) -> Scalar {
        Scalar::from(value)
    }

    fn scalar_reduce(bytes: &[u8]) -> Scalar {
        // Horner over 32-byte chunks: acc = acc * 2^256 + chunk (mod q).
        let mut acc = Scalar::ZERO;
        let lead = bytes.len() % 32;
        let mut chunks: alloc::vec::Vec<[u8; 32]> = alloc::vec::Vec::new();
        if lead != 0 {
            let mut first = [0u8; 32];
            first[32 - lead..].copy_from_slice(&bytes[..lead]);
            chunks.push(first);
        }
        for c in bytes[lead..].chunks(32) {
            let mut b = [0u8; 32];
            b.copy_from_slice(c);
            chunks.push(b);
        }
        let shift = shift_256();
        for (n, c) in chunks.iter().enumerate() {
            let v = <Scalar as Reduce<U256>>::reduce_bytes(FieldBytes::from_slice(c));
            acc = if n == 0 { v } else { acc * shift + v };
        }
        acc
    }

    fn scalar_to_bytes(scalar: &Scalar) -> [u8; 32] {
        scalar.to_bytes().into()
    }

    fn scalar_from_bytes(bytes: &[u8]) -> Result<Scalar, EncodingError> {
        if bytes.len() != 32 {
            return Err(EncodingError::Length {
                expected: 32,
                actual: bytes.len(),
            });
        }
        Option::from(Scalar::from_repr(*FieldBytes::from_slice(bytes)))
            .ok_or(EncodingError::ScalarOutOfRange)
    }

    fn scalar_invert(scalar: &Scalar) -> Option<Scalar> {
        Option::from(scalar.invert())
    }

    fn random_scalar(rng: &mut impl CryptoRngCore) -> Scalar {
        Scalar::random(rng)
    }

    fn point_to_bytes(point: &ProjectivePoint) -> [u8; 33] {
        let mut out = [0u8; 33];
        if *point != ProjectivePoint::IDENTITY {
            out.copy_from_slice(point.to_affine().to_encoded_point(true).as_bytes());
        }
        out
    }

    fn point_from_bytes(bytes: &[u8]) -> Result<ProjectivePoint, EncodingError> {
        if bytes.len() != 33 {
            return Err(EncodingError::Length {
                expected: 33,
                actual: bytes.len(),
            });
        }
        if bytes.iter().all(|b| *b == 0) {
            return Ok(ProjectivePoint::IDENTITY);
        }
        if bytes[0] != 0x02 && bytes[0] != 0x03 {
            return Err(EncodingError::NotOnGroup);
        }
        let encoded = EncodedPoint::from_bytes(bytes).map_err(|_| EncodingError::NotOnGroup)?;
        Option::<AffinePoint>::from(AffinePoint::from_encoded_point(&encoded))
            .map(ProjectivePoint::from)
            .ok_or(EncodingError::NotOnGroup)
    }

    fn hash_to_point(domain: &[u8], msg: &[u8]) -> ProjectivePoint {
        // Try-and-increment on the x coordinate.
        let mut counter: u32 = 0;
        loop {
            let x = Sha256::new()
                .chain_update((domain.len() as u32).to_be_bytes())
                .chain_update(domain)
                .chain_update((msg.len() as u32).to_be_bytes())
                .chain_update(msg)
                .chain_update(counter.to_be_bytes())
                .finalize();
            let mut candidate = [0u8; 33];
            candidate[0] = 0x02;
            candidate[1..].copy_from_slice(&x);
            if let Ok(p) = Self::point_from_bytes(&candidate) {
                return p;
            }
            counter += 1;
        }
    }
}

/// 2^256 mod q.
fn shift_256() -> Scalar {
    // 2^255 fits below q, so compute it from bytes and double.
    let mut b = [0u8; 32];
    b[0] = 0x80;
    let half = <Scalar as Reduce<U256>>::reduce_bytes(FieldBytes::from_slice(&b));
    half + half
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduce_wide_matches_two_step() {
        // 64 bytes: hi * 2^256 + lo
        let mut wide = [0u8; 64];
        wide[31] = 3;
        wide[63] = 5;
        let expect = Scalar::from(3u64) * shift_256() + Scalar::from(5u64);
        assert_eq!(Secp256k1::scalar_reduce(&wide), expect);
        assert_eq!(Secp256k1::scalar_reduce(&[1, 0]), Scalar::from(256u64));
        assert_eq!(Secp256k1::scalar_reduce(&[]), Scalar::ZERO);
    }

    #[test]
    fn reduce_wraps_order() {
        // q itself reduces to zero
        let q_minus_one = Secp256k1::scalar_to_bytes(&(-Scalar::ONE));
        let s = Secp256k1::scalar_reduce(&q_minus_one) + Scalar::ONE;
        assert_eq!(s, Scalar::ZERO);
        assert!(Secp256k1::scalar_from_bytes(&[0xff; 32]).is_err());
    }

    #[test]
    fn rejects_off_curve() {
        // roughly half of all x coordinates have no curve point
        let rejected = (1u8..=32)
            .filter(|x| {
                let mut bytes = [0u8; 33];
                bytes[0] = 0x02;
                bytes[32] = *x;
                Secp256k1::point_from_bytes(&bytes).is_err()
            })
            .count();
        assert!(rejected > 0 && rejected < 32);
        assert_eq!(
            Secp256k1::point_from_bytes(&[0x04; 33]),
            Err(EncodingError::NotOnGroup)
        );
        assert!(Secp256k1::point_from_bytes(&[0x02; 32]).is_err());
    }
}
