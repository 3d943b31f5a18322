//! Key-prefixed Schnorr signatures with batch verification.
//!
//! Signing: `R = g·k`, `e = H(pk ‖ R ‖ m)`, `s = k + sk·e`.
//! Verification: `g·s == R + pk·e`.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand_core::CryptoRngCore;

use crate::group::{EncodingError, Group};
use crate::hash::{hash_to_scalar, DomainTag};
use crate::multiexp;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SignatureError {
    #[error("malformed signature: {0}")]
    Malformed(EncodingError),
    #[error("malformed public key: {0}")]
    MalformedKey(EncodingError),
    #[error("batch item {index} is malformed: {source}")]
    MalformedItem { index: usize, source: EncodingError },
    #[error("signature equation does not hold")]
    Invalid,
}

/// Secret key (nonzero) and its public key `g·sk`.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct KeyPair<G: Group> {
    secret: G::Scalar,
    public: G::Point,
}

impl<G: Group> core::fmt::Debug for KeyPair<G> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("KeyPair")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

impl<G: Group> KeyPair<G> {
    pub fn generate(rng: &mut impl CryptoRngCore) -> Self {
        let secret = G::random_nonzero_scalar(rng);
        KeyPair {
            secret,
            public: G::mul_base(&secret),
        }
    }

    /// `None` for a zero secret.
    pub fn from_secret(secret: G::Scalar) -> Option<Self> {
        (!G::is_zero(&secret)).then(|| KeyPair {
            secret,
            public: G::mul_base(&secret),
        })
    }

    pub fn public(&self) -> G::Point {
        self.public
    }

    pub fn secret(&self) -> &G::Scalar {
        &self.secret
    }
}

pub fn keygen<G: Group>(rng: &mut impl CryptoRngCore) -> KeyPair<G> {
    KeyPair::generate(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Signature<G: Group> {
    pub s: G::Scalar,
    pub r: G::Point,
}

impl<G: Group> Signature<G> {
    /// `s ‖ R`: 65 bytes on secp256k1.
    pub const LEN: usize = G::SCALAR_LEN + G::POINT_LEN;

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::LEN);
        out.extend_from_slice(G::scalar_to_bytes(&self.s).as_ref());
        out.extend_from_slice(G::point_to_bytes(&self.r).as_ref());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SignatureError> {
        if bytes.len() != Self::LEN {
            return Err(SignatureError::Malformed(EncodingError::Length {
                expected: Self::LEN,
                actual: bytes.len(),
            }));
        }
        let (s, r) = bytes.split_at(G::SCALAR_LEN);
        Ok(Signature {
            s: G::scalar_from_bytes(s).map_err(SignatureError::Malformed)?,
            r: G::point_from_bytes(r).map_err(SignatureError::Malformed)?,
        })
    }
}

/// `H_sig(pk ‖ R ‖ m)`.
pub fn challenge<G: Group>(pk: &G::Point, r: &G::Point, msg: &[u8]) -> G::Scalar {
    hash_to_scalar::<G>(
        DomainTag::Sig,
        &[
            G::point_to_bytes(pk).as_ref(),
            G::point_to_bytes(r).as_ref(),
            msg,
        ],
    )
}

/// `k + sk·e`.
pub fn response<G: Group>(nonce: &G::Scalar, secret: &G::Scalar, challenge: &G::Scalar) -> G::Scalar {
    *nonce + *secret * *challenge
}

pub fn sign<G: Group>(kp: &KeyPair<G>, msg: &[u8], rng: &mut impl CryptoRngCore) -> Signature<G> {
    let k = G::random_nonzero_scalar(rng);
    sign_with_nonce(kp, msg, &k)
}

pub fn sign_with_nonce<G: Group>(kp: &KeyPair<G>, msg: &[u8], nonce: &G::Scalar) -> Signature<G> {
    let r = G::mul_base(nonce);
    let e = challenge::<G>(&kp.public, &r, msg);
    Signature {
        s: response::<G>(nonce, &kp.secret, &e),
        r,
    }
}

/// `g·s == R + pk·e` for a given challenge.
pub fn verify_with_challenge<G: Group>(pk: &G::Point, sig: &Signature<G>, e: &G::Scalar) -> bool {
    G::mul_base(&sig.s) == sig.r + *pk * *e
}

pub fn verify<G: Group>(pk: &G::Point, msg: &[u8], sig: &Signature<G>) -> bool {
    verify_with_challenge(pk, sig, &challenge::<G>(pk, &sig.r, msg))
}

/// Verification from wire bytes, with the decoding failure as error detail.
pub fn verify_encoded<G: Group>(pk: &[u8], msg: &[u8], sig: &[u8]) -> Result<(), SignatureError> {
    let pk = G::point_from_bytes(pk).map_err(SignatureError::MalformedKey)?;
    let sig = Signature::<G>::from_bytes(sig)?;
    if verify(&pk, msg, &sig) {
        Ok(())
    } else {
        Err(SignatureError::Invalid)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BatchItem<'a, G: Group> {
    pub pk: G::Point,
    pub msg: &'a [u8],
    pub sig: Signature<G>,
}

impl<'a, G: Group> BatchItem<'a, G> {
    pub fn new(pk: G::Point, msg: &'a [u8], sig: Signature<G>) -> Self {
        BatchItem { pk, msg, sig }
    }

    fn verify(&self) -> bool {
        verify(&self.pk, self.msg, &self.sig)
    }
}

/// Random batch weights: the first is 1, the rest are nonzero 128-bit values.
pub fn batch_weights<G: Group>(n: usize, rng: &mut impl CryptoRngCore) -> Vec<G::Scalar> {
    let mut out = Vec::with_capacity(n);
    if n > 0 {
        out.push(G::scalar_one());
    }
    while out.len() < n {
        let mut buf = [0u8; 16];
        rng.fill_bytes(&mut buf);
        let w = G::scalar_reduce(&buf);
        if !G::is_zero(&w) {
            out.push(w);
        }
    }
    out
}

/// Checks `g·Σ a_i s_i == Σ a_i R_i + Σ (a_i e_i) pk_i` with fresh random weights.
///
/// An honest batch always passes. A batch containing a bad signature passes
/// only if the weights happen to cancel the error.
pub fn batch_verify<G: Group>(items: &[BatchItem<'_, G>], rng: &mut impl CryptoRngCore) -> bool {
    let weights = batch_weights::<G>(items.len(), rng);
    batch_verify_weighted(items, &weights)
}

fn batch_verify_weighted<G: Group>(items: &[BatchItem<'_, G>], weights: &[G::Scalar]) -> bool {
    if items.is_empty() {
        return true;
    }
    let mut s_sum = G::scalar_zero();
    let mut terms = Vec::with_capacity(items.len() * 2);
    for (item, a) in items.iter().zip(weights) {
        let e = challenge::<G>(&item.pk, &item.sig.r, item.msg);
        s_sum += *a * item.sig.s;
        terms.push((*a, item.sig.r));
        terms.push((*a * e, item.pk));
    }
    G::mul_base(&s_sum) == multiexp::bos_coster::<G>(&terms)
}

/// The batch equation evaluated as a plain product, one exponentiation per factor.
pub fn batch_verify_naive<G: Group>(items: &[BatchItem<'_, G>], weights: &[G::Scalar]) -> bool {
    assert_eq!(items.len(), weights.len());
    let mut lhs = G::identity();
    let mut rhs = G::identity();
    for (item, a) in items.iter().zip(weights) {
        let e = challenge::<G>(&item.pk, &item.sig.r, item.msg);
        lhs += G::mul_base(&item.sig.s) * *a;
        rhs += (item.sig.r + item.pk * e) * *a;
    }
    lhs == rhs
}

/// Batch verification over wire-encoded `(pk, msg, sig)` triples.
pub fn batch_verify_encoded<G: Group>(
    items: &[(&[u8], &[u8], &[u8])],
    rng: &mut impl CryptoRngCore,
) -> Result<bool, SignatureError> {
    let mut decoded = Vec::with_capacity(items.len());
    for (index, (pk, msg, sig)) in items.iter().enumerate() {
        let pk = G::point_from_bytes(pk).map_err(|source| SignatureError::MalformedItem { index, source })?;
        let sig = Signature::<G>::from_bytes(sig).map_err(|e| match e {
            SignatureError::Malformed(source) => SignatureError::MalformedItem { index, source },
            other => other,
        })?;
        decoded.push(BatchItem::new(pk, msg, sig));
    }
    Ok(batch_verify(&decoded, rng))
}

/// Binary search for the bad signatures of a failed batch.
///
/// Halves are re-checked with fresh weights; single items are verified
/// individually, so every returned index is a signature that really fails.
pub fn identify_bad_signatures<G: Group>(
    items: &[BatchItem<'_, G>],
    rng: &mut impl CryptoRngCore,
) -> BTreeSet<usize> {
    let mut bad = BTreeSet::new();
    search(items, 0, rng, &mut bad);
    bad
}

fn search<G: Group>(
    items: &[BatchItem<'_, G>],
    offset: usize,
    rng: &mut impl CryptoRngCore,
    bad: &mut BTreeSet<usize>,
) {
    match items.len() {
        0 => {}
        1 => {
            if !items[0].verify() {
                bad.insert(offset);
            }
        }
        n => {
            if batch_verify(items, rng) {
                return;
            }
            let mid = n / 2;
            search(&items[..mid], offset, rng, bad);
            search(&items[mid..], offset + mid, rng, bad);
        }
    }
}
