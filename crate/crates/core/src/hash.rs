//! Domain-separated SHA-256 and the canonical key-list encoding.
//!
//! Every hash input is framed as `tag ‖ count ‖ (len ‖ part)*` with 32-bit
//! big-endian lengths, so two different part lists under two tags can never
//! produce the same preimage.

use alloc::vec::Vec;
use core::fmt;

use sha2::{Digest as _, Sha256};

use crate::group::Group;

pub type Digest = [u8; 32];

/// Registered hash domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum DomainTag {
    /// Aggregation event identifier.
    Uid = 0x01,
    /// Commitment to a reveal message.
    Com = 0x02,
    /// Key-aggregation coefficients.
    Agg = 0x03,
    /// Approval challenge.
    App = 0x04,
    /// Hash of a reconstruction parameter.
    Mask = 0x05,
    /// Identity-commitment and cluster-key digests.
    Vid = 0x06,
    /// Plain Schnorr signature challenge.
    Sig = 0x07,
    /// Key derivation from shared secrets.
    Kdf = 0x08,
    /// Hash-to-group for auxiliary generators.
    Gen = 0x09,
}

impl DomainTag {
    pub const ALL: [DomainTag; 9] = [
        DomainTag::Uid,
        DomainTag::Com,
        DomainTag::Agg,
        DomainTag::App,
        DomainTag::Mask,
        DomainTag::Vid,
        DomainTag::Sig,
        DomainTag::Kdf,
        DomainTag::Gen,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HashError {
    #[error("unregistered domain tag {0:#04x}")]
    UnknownTag(u8),
    #[error("key list is empty")]
    EmptyKeyList,
    #[error("key at position {0} is the identity element")]
    InvalidKey(usize),
}

impl TryFrom<u8> for DomainTag {
    type Error = HashError;

    fn try_from(b: u8) -> Result<Self, HashError> {
        DomainTag::ALL
            .iter()
            .copied()
            .find(|t| *t as u8 == b)
            .ok_or(HashError::UnknownTag(b))
    }
}

/// Event identifier shared by every member of a cluster for one sensing cycle.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Uid(pub Digest);

impl fmt::Debug for Uid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Uid(")?;
        for b in &self.0[..6] {
            write!(f, "{b:02x}")?;
        }
        write!(f, "..)")
    }
}

impl AsRef<[u8]> for Uid {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

pub fn domain_hash(tag: DomainTag, parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    h.update([tag as u8]);
    h.update((parts.len() as u32).to_be_bytes());
    for p in parts {
        h.update((p.len() as u32).to_be_bytes());
        h.update(p);
    }
    h.finalize().into()
}

/// Same as [`domain_hash`] but takes the tag as a raw byte.
pub fn domain_hash_raw(tag: u8, parts: &[&[u8]]) -> Result<Digest, HashError> {
    Ok(domain_hash(DomainTag::try_from(tag)?, parts))
}

/// Digest reduced modulo the group order.
pub fn hash_to_scalar<G: Group>(tag: DomainTag, parts: &[&[u8]]) -> G::Scalar {
    G::scalar_reduce(&domain_hash(tag, parts))
}

/// Order-independent encoding of a key set: `u32 count ‖ keys sorted by encoding`.
pub fn canonical_encode_keys<G: Group>(pks: &[G::Point]) -> Result<Vec<u8>, HashError> {
    if pks.is_empty() {
        return Err(HashError::EmptyKeyList);
    }
    if let Some(pos) = pks.iter().position(G::is_identity) {
        return Err(HashError::InvalidKey(pos));
    }
    let mut encoded: Vec<G::PointBytes> = pks.iter().map(G::point_to_bytes).collect();
    encoded.sort_unstable();
    let mut out = Vec::with_capacity(4 + encoded.len() * G::POINT_LEN);
    out.extend_from_slice(&(encoded.len() as u32).to_be_bytes());
    for e in &encoded {
        out.extend_from_slice(e.as_ref());
    }
    Ok(out)
}

pub fn compute_uid<G: Group>(pks: &[G::Point], tmp1: u64) -> Result<Uid, HashError> {
    let keys = canonical_encode_keys::<G>(pks)?;
    Ok(Uid(domain_hash(DomainTag::Uid, &[&keys, &tmp1.to_be_bytes()])))
}

/// `Hash_vid` of a point, used for cluster-key records and credentials.
pub fn vid_digest<G: Group>(point: &G::Point) -> Digest {
    domain_hash(DomainTag::Vid, &[G::point_to_bytes(point).as_ref()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{Secp256k1, ToyGroup};
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::collections::BTreeSet;

    fn keys(n: usize, seed: u64) -> Vec<<Secp256k1 as Group>::Point> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Secp256k1::mul_base(&Secp256k1::random_nonzero_scalar(&mut rng)))
            .collect()
    }

    #[test]
    fn encoding_is_order_invariant() {
        let k = keys(2, 1);
        let ab = canonical_encode_keys::<Secp256k1>(&[k[0], k[1]]).unwrap();
        let ba = canonical_encode_keys::<Secp256k1>(&[k[1], k[0]]).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn single_key_encoding() {
        let k = keys(1, 2);
        let enc = canonical_encode_keys::<Secp256k1>(&k).unwrap();
        assert_eq!(enc.len(), 4 + 33);
        assert_eq!(&enc[..4], &[0, 0, 0, 1]);
        assert_eq!(&enc[4..], Secp256k1::point_to_bytes(&k[0]).as_slice());
    }

    #[test]
    fn encoding_errors() {
        assert_eq!(
            canonical_encode_keys::<Secp256k1>(&[]),
            Err(HashError::EmptyKeyList)
        );
        let mut k = keys(3, 3);
        k[1] = Secp256k1::identity();
        assert_eq!(
            canonical_encode_keys::<Secp256k1>(&k),
            Err(HashError::InvalidKey(1))
        );
    }

    #[test]
    fn distinct_key_sets_encode_distinctly() {
        // brute force over every subset of a small toy key pool
        let pool: Vec<_> = (1..11u64)
            .map(|e| ToyGroup::mul_base(&ToyGroup::scalar_from_u64(e)))
            .collect();
        let mut seen = BTreeSet::new();
        for mask in 1u32..(1 << pool.len()) {
            let set: Vec<_> = (0..pool.len())
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| pool[i])
                .collect();
            assert!(seen.insert(canonical_encode_keys::<ToyGroup>(&set).unwrap()));
        }
        // and random secp256k1 sets
        let mut seen = BTreeSet::new();
        for seed in 0..50 {
            let n = 1 + (seed as usize % 4);
            assert!(seen.insert(canonical_encode_keys::<Secp256k1>(&keys(n, 100 + seed)).unwrap()));
        }
    }

    #[test]
    fn framing_separates_part_boundaries() {
        assert_eq!(
            domain_hash(DomainTag::Com, &[b"ab", b"c"]),
            domain_hash(DomainTag::Com, &[b"ab", b"c"])
        );
        assert_ne!(
            domain_hash(DomainTag::Com, &[b"ab", b"c"]),
            domain_hash(DomainTag::Com, &[b"a", b"bc"])
        );
        assert_ne!(
            domain_hash(DomainTag::Com, &[b"abc"]),
            domain_hash(DomainTag::Com, &[b"ab", b"c"])
        );
    }

    #[test]
    fn tags_separate_domains() {
        let digests: BTreeSet<_> = DomainTag::ALL
            .iter()
            .map(|t| domain_hash(*t, &[b"same"]))
            .collect();
        assert_eq!(digests.len(), DomainTag::ALL.len());
    }

    #[test]
    fn unregistered_tag_rejected() {
        assert_eq!(domain_hash_raw(0x00, &[]), Err(HashError::UnknownTag(0)));
        assert_eq!(domain_hash_raw(0x7f, &[]), Err(HashError::UnknownTag(0x7f)));
        assert_eq!(
            domain_hash_raw(0x04, &[b"x"]).unwrap(),
            domain_hash(DomainTag::App, &[b"x"])
        );
    }

    #[test]
    fn app_scalars_are_reduced() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        use rand_chacha::rand_core::RngCore;
        for _ in 0..10_000 {
            let mut buf = [0u8; 16];
            rng.fill_bytes(&mut buf);
            let s = hash_to_scalar::<ToyGroup>(DomainTag::App, &[&buf]);
            assert!(s.value() < 11);
            // secp256k1 decoding rejects anything >= q
            let t = hash_to_scalar::<Secp256k1>(DomainTag::App, &[&buf]);
            assert!(Secp256k1::scalar_from_bytes(&Secp256k1::scalar_to_bytes(&t)).is_ok());
        }
    }

    #[test]
    fn uid_properties() {
        let k = keys(5, 4);
        let mut rev = k.clone();
        rev.reverse();
        assert_eq!(
            compute_uid::<Secp256k1>(&k, 1000).unwrap(),
            compute_uid::<Secp256k1>(&rev, 1000).unwrap()
        );
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        use rand_chacha::rand_core::RngCore;
        let mut seen = BTreeSet::new();
        for _ in 0..10_000 {
            let t = rng.next_u64() >> 1;
            let a = compute_uid::<Secp256k1>(&k, t).unwrap();
            let b = compute_uid::<Secp256k1>(&k, t + 1).unwrap();
            assert_ne!(a, b);
            seen.insert(a);
        }
        assert_eq!(seen.len(), 10_000);
    }
}
