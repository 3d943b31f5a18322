//! Public-key encryption used for session keys and the reported average.

use alloc::boxed::Box;
use alloc::vec::Vec;

use rand_core::CryptoRngCore;

use crate::group::Group;
use crate::hash::{domain_hash, DomainTag};
use crate::schnorr::KeyPair;
use crate::seal::{self, Purpose, TAG_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum PkeError {
    #[error("ciphertext malformed")]
    Malformed,
    #[error("decryption failed")]
    Decryption,
    #[error("plaintext of {0} bytes is too long for this scheme")]
    TooLong(usize),
}

pub trait PkeEncryptor {
    fn scheme(&self) -> &'static str;
    fn encrypt(&self, plaintext: &[u8], rng: &mut dyn CryptoRngCore) -> Result<Vec<u8>, PkeError>;
    fn ciphertext_len(&self, plaintext_len: usize) -> usize;
}

pub trait PkeDecryptor {
    fn decrypt(&self, ciphertext: &[u8]) -> Result<Vec<u8>, PkeError>;
}

impl<T: PkeEncryptor + ?Sized> PkeEncryptor for Box<T> {
    fn scheme(&self) -> &'static str {
        (**self).scheme()
    }

    fn encrypt(&self, plaintext: &[u8], rng: &mut dyn CryptoRngCore) -> Result<Vec<u8>, PkeError> {
        (**self).encrypt(plaintext, rng)
    }

    fn ciphertext_len(&self, plaintext_len: usize) -> usize {
        (**self).ciphertext_len(plaintext_len)
    }
}

impl<T: PkeDecryptor + ?Sized> PkeDecryptor for Box<T> {
    fn decrypt(&self, ciphertext: &[u8]) -> Result<Vec<u8>, PkeError> {
        (**self).decrypt(ciphertext)
    }
}

/// ECIES-style hybrid encryption over `G`: `E = g·r ‖ AEAD_{KDF(E, pk·r)}(m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HybridPublicKey<G: Group> {
    pub point: G::Point,
}

#[derive(Debug, Clone)]
pub struct HybridSecretKey<G: Group> {
    keypair: KeyPair<G>,
}

impl<G: Group> HybridSecretKey<G> {
    pub fn generate(rng: &mut impl CryptoRngCore) -> Self {
        HybridSecretKey {
            keypair: KeyPair::generate(rng),
        }
    }

    pub fn public(&self) -> HybridPublicKey<G> {
        HybridPublicKey {
            point: self.keypair.public(),
        }
    }
}

fn hybrid_key<G: Group>(ephemeral: &[u8], shared: &G::Point) -> [u8; 32] {
    domain_hash(
        DomainTag::Kdf,
        &[b"hybrid", ephemeral, G::point_to_bytes(shared).as_ref()],
    )
}

fn hybrid_nonce() -> [u8; 12] {
    seal::nonce(Purpose::Hybrid, 0, 0, 0)
}

impl<G: Group> PkeEncryptor for HybridPublicKey<G> {
    fn scheme(&self) -> &'static str {
        "hybrid"
    }

    fn encrypt(&self, plaintext: &[u8], mut rng: &mut dyn CryptoRngCore) -> Result<Vec<u8>, PkeError> {
        let r = G::random_nonzero_scalar(&mut rng);
        let eph = G::point_to_bytes(&G::mul_base(&r));
        let key = hybrid_key::<G>(eph.as_ref(), &(self.point * r));
        let mut out = eph.as_ref().to_vec();
        out.extend_from_slice(&seal::seal(&key, &hybrid_nonce(), eph.as_ref(), plaintext));
        Ok(out)
    }

    fn ciphertext_len(&self, plaintext_len: usize) -> usize {
        G::POINT_LEN + plaintext_len + TAG_LEN
    }
}

impl<G: Group> PkeDecryptor for HybridSecretKey<G> {
    fn decrypt(&self, ciphertext: &[u8]) -> Result<Vec<u8>, PkeError> {
        if ciphertext.len() < G::POINT_LEN + TAG_LEN {
            return Err(PkeError::Malformed);
        }
        let (eph, body) = ciphertext.split_at(G::POINT_LEN);
        let point = G::point_from_bytes(eph).map_err(|_| PkeError::Malformed)?;
        if G::is_identity(&point) {
            return Err(PkeError::Malformed);
        }
        let key = hybrid_key::<G>(eph, &(point * *self.keypair.secret()));
        seal::open(&key, &hybrid_nonce(), eph, body).map_err(|_| PkeError::Decryption)
    }
}
