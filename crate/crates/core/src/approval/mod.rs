//! Schnorr approvals over an independently computed cluster average.
//!
//! Keys are aggregated with per-member coefficients `a_i = H_agg(L_pk ‖ pk_i)`
//! so a member cannot choose its key as a function of the others. Nonces are
//! exchanged commit-then-reveal, and the reveal carries the masked datum, so
//! every member computes the same average from the same inputs and signs it.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;

use crate::group::{EncodingError, Group};
use crate::hash::{canonical_encode_keys, hash_to_scalar, DomainTag, HashError};
use crate::masking::MaskingError;

mod session;
mod wire;

pub use session::{ApprovalSession, SessionConfig, SessionState};
pub use wire::{Commitment, EncryptedShare, RevealMsg};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ApprovalError {
    #[error("a cluster needs at least two members, got {0}")]
    ClusterTooSmall(usize),
    #[error("public key {0} appears more than once")]
    DuplicateKey(usize),
    #[error(transparent)]
    KeyList(#[from] HashError),
    #[error("operation needs state {expected:?}, session is {actual:?}")]
    State {
        expected: SessionState,
        actual: SessionState,
    },
    #[error("own commitment missing from the commitment list")]
    CommitmentMissing,
    #[error("no reveal received from member {0}")]
    MissingReveal(usize),
    #[error("reveal of member {index} does not match its commitment")]
    CommitmentMismatch { index: usize },
    #[error("member {index} revealed {got} nonces, expected {expected}")]
    NonceBatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("nonce for this approval was already used")]
    NonceConsumed,
    #[error("all pre-committed nonces are used")]
    NoncesExhausted,
    #[error("sub-approvals carry different aggregated nonces")]
    MismatchedNonce,
    #[error("no sub-approvals to aggregate")]
    NothingToAggregate,
    #[error("malformed encoding: {0}")]
    Malformed(EncodingError),
    #[error("truncated or oversized message")]
    Framing,
    #[error("reconstructed parameter of member {0} fails its hash")]
    BetaMismatch(usize),
    #[error("member {0} is not an active cluster member")]
    UnknownMember(usize),
    #[error("member list does not place own key at index {0}")]
    MemberList(usize),
    #[error("share from member {0} failed to decrypt")]
    ShareDecryption(usize),
    #[error(transparent)]
    Masking(#[from] MaskingError),
}

impl From<EncodingError> for ApprovalError {
    fn from(e: EncodingError) -> Self {
        ApprovalError::Malformed(e)
    }
}

/// Aggregated cluster key with the coefficient of each member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggKey<G: Group> {
    keys: Vec<G::Point>,
    coefficients: Vec<G::Scalar>,
    key: G::Point,
}

impl<G: Group> AggKey<G> {
    /// Aggregation with caller-supplied coefficients.
    pub fn with_coefficients(keys: &[G::Point], coefficients: &[G::Scalar]) -> Self {
        assert_eq!(keys.len(), coefficients.len());
        let key = keys
            .iter()
            .zip(coefficients)
            .fold(G::identity(), |acc, (pk, a)| acc + *pk * *a);
        AggKey {
            keys: keys.to_vec(),
            coefficients: coefficients.to_vec(),
            key,
        }
    }

    /// `pk~ = Σ a_i · pk_i`.
    pub fn key(&self) -> G::Point {
        self.key
    }

    pub fn keys(&self) -> &[G::Point] {
        &self.keys
    }

    pub fn coefficients(&self) -> &[G::Scalar] {
        &self.coefficients
    }

    /// Coefficient of a member key, if present.
    pub fn coefficient_of(&self, pk: &G::Point) -> Option<G::Scalar> {
        self.keys
            .iter()
            .position(|k| k == pk)
            .map(|i| self.coefficients[i])
    }

    /// `a_i · pk_i` for the key at position `i`.
    pub fn weighted_key(&self, i: usize) -> G::Point {
        self.keys[i] * self.coefficients[i]
    }
}

/// `a_i = H_agg(L_pk ‖ pk_i)` over the canonical key-list encoding.
pub fn key_coefficient<G: Group>(canonical_keys: &[u8], pk: &G::Point) -> G::Scalar {
    hash_to_scalar::<G>(DomainTag::Agg, &[canonical_keys, G::point_to_bytes(pk).as_ref()])
}

pub fn aggregate_key<G: Group>(pks: &[G::Point]) -> Result<AggKey<G>, ApprovalError> {
    if pks.len() < 2 {
        return Err(ApprovalError::ClusterTooSmall(pks.len()));
    }
    let mut seen = BTreeSet::new();
    for (i, pk) in pks.iter().enumerate() {
        if !seen.insert(G::point_to_bytes(pk)) {
            return Err(ApprovalError::DuplicateKey(i));
        }
    }
    let canonical = canonical_encode_keys::<G>(pks)?;
    let coefficients: Vec<G::Scalar> = pks
        .iter()
        .map(|pk| key_coefficient::<G>(&canonical, pk))
        .collect();
    Ok(AggKey::with_coefficients(pks, &coefficients))
}

/// Cluster average as an exact fraction `sum / count`.
///
/// Hashed as `sum (u64 BE) ‖ count (u16 BE)` so every member produces the
/// same challenge input without any rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AverageValue {
    pub sum: u64,
    pub count: u16,
}

impl AverageValue {
    pub const LEN: usize = 10;

    pub fn new(sum: u64, count: usize) -> Self {
        AverageValue {
            sum,
            count: u16::try_from(count).expect("cluster size fits u16"),
        }
    }

    pub fn to_bytes(&self) -> [u8; Self::LEN] {
        let mut out = [0u8; Self::LEN];
        out[..8].copy_from_slice(&self.sum.to_be_bytes());
        out[8..].copy_from_slice(&self.count.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ApprovalError> {
        if bytes.len() != Self::LEN {
            return Err(ApprovalError::Framing);
        }
        let sum = u64::from_be_bytes(bytes[..8].try_into().expect("len checked"));
        let count = u16::from_be_bytes(bytes[8..].try_into().expect("len checked"));
        if count == 0 {
            return Err(ApprovalError::Framing);
        }
        Ok(AverageValue { sum, count })
    }

    pub fn to_f64(&self) -> f64 {
        self.sum as f64 / self.count as f64
    }
}

impl fmt::Display for AverageValue {
    /// Fixed point with six decimals, computed in integers.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let count = self.count.max(1) as u128;
        let scaled = (self.sum as u128 * 1_000_000 + count / 2) / count;
        write!(f, "{}.{:06}", scaled / 1_000_000, scaled % 1_000_000)
    }
}

/// `(s, R)` pair shared by sub-approvals and cluster approvals; 65 bytes on secp256k1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Approval<G: Group> {
    pub s: G::Scalar,
    pub r: G::Point,
}

pub type SubApproval<G> = Approval<G>;
pub type ClusterApproval<G> = Approval<G>;

impl<G: Group> Approval<G> {
    pub const LEN: usize = G::SCALAR_LEN + G::POINT_LEN;

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::LEN);
        out.extend_from_slice(G::scalar_to_bytes(&self.s).as_ref());
        out.extend_from_slice(G::point_to_bytes(&self.r).as_ref());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ApprovalError> {
        if bytes.len() != Self::LEN {
            return Err(ApprovalError::Malformed(EncodingError::Length {
                expected: Self::LEN,
                actual: bytes.len(),
            }));
        }
        let (s, r) = bytes.split_at(G::SCALAR_LEN);
        Ok(Approval {
            s: G::scalar_from_bytes(s)?,
            r: G::point_from_bytes(r)?,
        })
    }
}

/// `e = H_app(pk~ ‖ R~ ‖ avg)`.
pub fn approval_challenge<G: Group>(agg_key: &G::Point, agg_nonce: &G::Point, avg: &AverageValue) -> G::Scalar {
    hash_to_scalar::<G>(
        DomainTag::App,
        &[
            G::point_to_bytes(agg_key).as_ref(),
            G::point_to_bytes(agg_nonce).as_ref(),
            &avg.to_bytes(),
        ],
    )
}

/// `s_i = k_i + a_i · sk_i · e`.
pub fn sub_approval_response<G: Group>(
    nonce: &G::Scalar,
    coefficient: &G::Scalar,
    secret: &G::Scalar,
    challenge: &G::Scalar,
) -> G::Scalar {
    *nonce + *coefficient * *secret * *challenge
}

/// `s~ = Σ s_i` over sub-approvals sharing one aggregated nonce.
pub fn aggregate_approval<G: Group>(subs: &[SubApproval<G>]) -> Result<ClusterApproval<G>, ApprovalError> {
    let first = subs.first().ok_or(ApprovalError::NothingToAggregate)?;
    if subs.iter().any(|s| s.r != first.r) {
        return Err(ApprovalError::MismatchedNonce);
    }
    let mut s = G::scalar_zero();
    for sub in subs {
        s += sub.s;
    }
    Ok(Approval { s, r: first.r })
}

/// `g·s~ == R~ + pk~·e` for an explicit challenge.
pub fn verify_with_challenge<G: Group>(agg_key: &G::Point, appr: &ClusterApproval<G>, e: &G::Scalar) -> bool {
    G::mul_base(&appr.s) == appr.r + *agg_key * *e
}

pub fn verify_approval<G: Group>(agg_key: &G::Point, avg: &AverageValue, appr: &ClusterApproval<G>) -> bool {
    verify_with_challenge(agg_key, appr, &approval_challenge::<G>(agg_key, &appr.r, avg))
}

/// Verification from wire bytes; decoding failures are returned as errors.
pub fn verify_approval_encoded<G: Group>(agg_key: &[u8], avg: &[u8], appr: &[u8]) -> Result<bool, ApprovalError> {
    let key = G::point_from_bytes(agg_key)?;
    let avg = AverageValue::from_bytes(avg)?;
    let appr = Approval::<G>::from_bytes(appr)?;
    Ok(verify_approval(&key, &avg, &appr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use crate::group::{Secp256k1, ToyGroup, ToyScalar};
    use crate::schnorr::KeyPair;
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    type K = Secp256k1;

    fn keypairs(n: usize, rng: &mut ChaCha20Rng) -> Vec<KeyPair<K>> {
        (0..n).map(|_| KeyPair::generate(rng)).collect()
    }

    #[test]
    fn aggregation_is_permutation_invariant() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let kps = keypairs(6, &mut rng);
        let pks: Vec<_> = kps.iter().map(|k| k.public()).collect();
        let mut shuffled = pks.clone();
        shuffled.rotate_left(2);
        shuffled.swap(0, 3);
        let a = aggregate_key::<K>(&pks).unwrap();
        let b = aggregate_key::<K>(&shuffled).unwrap();
        assert_eq!(a.key(), b.key());
        for pk in &pks {
            assert_eq!(a.coefficient_of(pk), b.coefficient_of(pk));
        }
    }

    #[test]
    fn unit_coefficients_multiply_keys() {
        let p1 = ToyGroup::mul_base(&ToyScalar::new(3));
        let p2 = ToyGroup::mul_base(&ToyScalar::new(4));
        let one = ToyScalar::new(1);
        let agg = AggKey::<ToyGroup>::with_coefficients(&[p1, p2], &[one, one]);
        // 8 · 16 mod 23 = 13
        assert_eq!(agg.key().value(), 8 * 16 % 23);
    }

    #[test]
    fn aggregate_matches_naive_recomputation() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let n = 2 + (rng.next_u32() % 5) as usize;
            let pks: Vec<_> = keypairs(n, &mut rng).iter().map(|k| k.public()).collect();
            let agg = aggregate_key::<K>(&pks).unwrap();
            // independent recomputation: sort encodings by hand, hash, multiply one by one
            let mut enc: Vec<[u8; 33]> = pks.iter().map(K::point_to_bytes).collect();
            enc.sort();
            let mut list = (n as u32).to_be_bytes().to_vec();
            for e in &enc {
                list.extend_from_slice(e);
            }
            let mut naive = K::identity();
            for pk in &pks {
                let digest = crate::hash::domain_hash(DomainTag::Agg, &[&list, &K::point_to_bytes(pk)]);
                naive += *pk * K::scalar_reduce(&digest);
            }
            assert_eq!(agg.key(), naive);
        }
    }

    #[test]
    fn aggregation_errors() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let pks: Vec<_> = keypairs(3, &mut rng).iter().map(|k| k.public()).collect();
        assert_eq!(
            aggregate_key::<K>(&pks[..1]),
            Err(ApprovalError::ClusterTooSmall(1))
        );
        assert_eq!(
            aggregate_key::<K>(&[pks[0], pks[1], pks[0]]),
            Err(ApprovalError::DuplicateKey(2))
        );
    }

    #[test]
    fn toy_sub_approval_by_hand() {
        let s = sub_approval_response::<ToyGroup>(
            &ToyScalar::new(4),
            &ToyScalar::new(1),
            &ToyScalar::new(3),
            &ToyScalar::new(5),
        );
        assert_eq!(s.value(), 8);
        let degenerate = sub_approval_response::<ToyGroup>(
            &ToyScalar::new(4),
            &ToyScalar::new(0),
            &ToyScalar::new(3),
            &ToyScalar::new(5),
        );
        assert_eq!(degenerate.value(), 4);
    }

    #[test]
    fn toy_two_member_aggregate_by_hand() {
        // sk = (3, 5), k = (4, 2), a = (1, 1), e stubbed to 5
        let one = ToyScalar::new(1);
        let e = ToyScalar::new(5);
        let sks = [ToyScalar::new(3), ToyScalar::new(5)];
        let ks = [ToyScalar::new(4), ToyScalar::new(2)];
        let pks: Vec<_> = sks.iter().map(ToyGroup::mul_base).collect();
        let agg = AggKey::<ToyGroup>::with_coefficients(&pks, &[one, one]);
        let r = ToyGroup::mul_base(&ks[0]) + ToyGroup::mul_base(&ks[1]);
        let subs: Vec<_> = (0..2)
            .map(|i| Approval::<ToyGroup> {
                s: sub_approval_response::<ToyGroup>(&ks[i], &one, &sks[i], &e),
                r,
            })
            .collect();
        // s1 = 4 + 15 = 19 ≡ 8, s2 = 2 + 25 = 27 ≡ 5, s~ = 13 ≡ 2
        assert_eq!((subs[0].s.value(), subs[1].s.value()), (8, 5));
        let appr = aggregate_approval(&subs).unwrap();
        assert_eq!(appr.s.value(), 2);
        // g^2 = 4; R~ = 16·4 = 64 ≡ 18; pk~ = 8·32≡8·9 = 72 ≡ 3; 3^5 = 243 ≡ 13; 18·13 = 234 ≡ 4
        assert_eq!(ToyGroup::mul_base(&appr.s).value(), 4);
        assert_eq!((appr.r + agg.key() * e).value(), 4);
        assert!(verify_with_challenge(&agg.key(), &appr, &e));
    }

    #[test]
    fn aggregate_is_order_independent_and_checks_nonce() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let r = K::mul_base(&K::random_scalar(&mut rng));
        let subs: Vec<_> = (0..5)
            .map(|_| Approval::<K> {
                s: K::random_scalar(&mut rng),
                r,
            })
            .collect();
        let mut rev = subs.clone();
        rev.reverse();
        assert_eq!(aggregate_approval(&subs), aggregate_approval(&rev));
        let mut odd = subs.clone();
        odd[3].r = K::generator();
        assert_eq!(aggregate_approval(&odd), Err(ApprovalError::MismatchedNonce));
        assert_eq!(
            aggregate_approval::<K>(&[]),
            Err(ApprovalError::NothingToAggregate)
        );
    }

    #[test]
    fn average_encoding_and_display() {
        let avg = AverageValue::new(60, 3);
        assert_eq!(avg.to_f64(), 20.0);
        assert_eq!(avg.to_string(), "20.000000");
        assert_eq!(AverageValue::new(10, 3).to_string(), "3.333333");
        assert_eq!(AverageValue::from_bytes(&avg.to_bytes()).unwrap(), avg);
        assert_eq!(avg.to_bytes(), [0, 0, 0, 0, 0, 0, 0, 60, 0, 3]);
        assert!(AverageValue::from_bytes(&[0; 10]).is_err());
        assert!(AverageValue::from_bytes(&[0; 9]).is_err());
    }

    #[test]
    fn approval_wire_and_encoded_verify() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let appr = Approval::<K> {
            s: K::random_scalar(&mut rng),
            r: K::generator(),
        };
        let bytes = appr.to_bytes();
        assert_eq!(bytes.len(), 65);
        assert_eq!(Approval::<K>::from_bytes(&bytes).unwrap(), appr);
        let key = K::point_to_bytes(&K::generator());
        let avg = AverageValue::new(1, 2).to_bytes();
        assert_eq!(verify_approval_encoded::<K>(&key, &avg, &bytes), Ok(false));
        assert!(matches!(
            verify_approval_encoded::<K>(&key, &avg, &bytes[1..]),
            Err(ApprovalError::Malformed(_))
        ));
        assert!(verify_approval_encoded::<K>(&[0x07; 33], &avg, &bytes).is_err());
    }
}
