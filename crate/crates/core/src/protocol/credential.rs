//! Escrowed credentials: a TA signature over a Pedersen commitment to the holder's ID.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand_core::CryptoRngCore;

use crate::group::Group;
use crate::hash::{vid_digest, DomainTag};
use crate::schnorr::{self, KeyPair, Signature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum CredentialError {
    #[error("commitment not in the TA registry")]
    UnknownCommitment,
    #[error("registry opening does not match the commitment")]
    OpeningMismatch,
    #[error("malformed credential bytes")]
    Malformed,
}

/// Second Pedersen generator, with no known discrete log relative to `g`.
pub fn pedersen_h<G: Group>() -> G::Point {
    G::hash_to_point(&[DomainTag::Gen as u8], b"pedersen-h")
}

/// `g·id + h·r`.
pub fn pedersen_commit<G: Group>(id: u64, blinding: &G::Scalar) -> G::Point {
    G::mul_base(&G::scalar_from_u64(id)) + pedersen_h::<G>() * *blinding
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Credential<G: Group> {
    pub commitment: G::Point,
    pub expiry: u64,
    pub signature: Signature<G>,
}

fn signed_message<G: Group>(commitment: &G::Point, expiry: u64) -> Vec<u8> {
    let mut m = vid_digest::<G>(commitment).to_vec();
    m.extend_from_slice(&expiry.to_be_bytes());
    m
}

impl<G: Group> Credential<G> {
    pub const LEN: usize = G::POINT_LEN + 8 + Signature::<G>::LEN;

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::LEN);
        out.extend_from_slice(G::point_to_bytes(&self.commitment).as_ref());
        out.extend_from_slice(&self.expiry.to_be_bytes());
        out.extend_from_slice(&self.signature.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CredentialError> {
        if bytes.len() != Self::LEN {
            return Err(CredentialError::Malformed);
        }
        let (c, rest) = bytes.split_at(G::POINT_LEN);
        let (t, sig) = rest.split_at(8);
        Ok(Credential {
            commitment: G::point_from_bytes(c).map_err(|_| CredentialError::Malformed)?,
            expiry: u64::from_be_bytes(t.try_into().expect("8 bytes")),
            signature: Signature::from_bytes(sig).map_err(|_| CredentialError::Malformed)?,
        })
    }
}

/// Checks the TA signature and expiry; the holder's ID stays hidden.
pub fn verify_credential<G: Group>(pka: &G::Point, cre: &Credential<G>, now: u64) -> bool {
    now <= cre.expiry && schnorr::verify(pka, &signed_message::<G>(&cre.commitment, cre.expiry), &cre.signature)
}

#[derive(Debug, Clone)]
struct Escrow<G: Group> {
    id: u64,
    blinding: G::Scalar,
    revoked: bool,
}

#[derive(Debug)]
pub struct TrustedAuthority<G: Group> {
    keypair: KeyPair<G>,
    registry: BTreeMap<G::PointBytes, Escrow<G>>,
}

impl<G: Group> TrustedAuthority<G> {
    pub fn new(rng: &mut impl CryptoRngCore) -> Self {
        TrustedAuthority {
            keypair: KeyPair::generate(rng),
            registry: BTreeMap::new(),
        }
    }

    /// `pka`.
    pub fn public(&self) -> G::Point {
        self.keypair.public()
    }

    pub fn issue_credential(&mut self, id: u64, expiry: u64, rng: &mut impl CryptoRngCore) -> Credential<G> {
        let blinding = G::random_nonzero_scalar(rng);
        let commitment = pedersen_commit::<G>(id, &blinding);
        self.registry.insert(
            G::point_to_bytes(&commitment),
            Escrow {
                id,
                blinding,
                revoked: false,
            },
        );
        Credential {
            commitment,
            expiry,
            signature: schnorr::sign(&self.keypair, &signed_message::<G>(&commitment, expiry), rng),
        }
    }

    /// Opens the commitment of a flagged credential and revokes it.
    pub fn open(&mut self, cre: &Credential<G>) -> Result<u64, CredentialError> {
        let escrow = self
            .registry
            .get_mut(&G::point_to_bytes(&cre.commitment))
            .ok_or(CredentialError::UnknownCommitment)?;
        if pedersen_commit::<G>(escrow.id, &escrow.blinding) != cre.commitment {
            return Err(CredentialError::OpeningMismatch);
        }
        escrow.revoked = true;
        Ok(escrow.id)
    }

    pub fn is_revoked(&self, cre: &Credential<G>) -> bool {
        self.registry
            .get(&G::point_to_bytes(&cre.commitment))
            .is_some_and(|e| e.revoked)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::Secp256k1;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    type K = Secp256k1;

    #[test]
    fn issue_verify_expire() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut ta = TrustedAuthority::<K>::new(&mut rng);
        let cre = ta.issue_credential(42, 1000, &mut rng);
        assert!(verify_credential(&ta.public(), &cre, 999));
        assert!(verify_credential(&ta.public(), &cre, 1000));
        assert!(!verify_credential(&ta.public(), &cre, 1001));
        let other = TrustedAuthority::<K>::new(&mut rng);
        assert!(!verify_credential(&other.public(), &cre, 0));
        assert_eq!(Credential::<K>::from_bytes(&cre.to_bytes()).unwrap(), cre);
        assert_eq!(cre.to_bytes().len(), 106);
    }

    #[test]
    fn commitment_byte_flips_break_signature() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let mut ta = TrustedAuthority::<K>::new(&mut rng);
        let cre = ta.issue_credential(7, 1000, &mut rng);
        let bytes = cre.to_bytes();
        for bit in 0..33 * 8 {
            let mut bad = bytes.clone();
            bad[bit / 8] ^= 1 << (bit % 8);
            match Credential::<K>::from_bytes(&bad) {
                Ok(c) => assert!(!verify_credential(&ta.public(), &c, 0), "bit {bit}"),
                Err(e) => assert_eq!(e, CredentialError::Malformed),
            }
        }
    }

    #[test]
    fn open_returns_id_and_revokes() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut ta = TrustedAuthority::<K>::new(&mut rng);
        let a = ta.issue_credential(11, 1000, &mut rng);
        let b = ta.issue_credential(11, 1000, &mut rng);
        assert_ne!(a.commitment, b.commitment);
        assert_eq!(ta.open(&a), Ok(11));
        assert!(ta.is_revoked(&a));
        assert!(!ta.is_revoked(&b));
        let mut tampered = b;
        tampered.commitment += K::generator();
        assert_eq!(ta.open(&tampered), Err(CredentialError::UnknownCommitment));
    }
}
