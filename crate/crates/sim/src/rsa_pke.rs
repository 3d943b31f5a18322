//! RSA-2048 OAEP for byte-accounting runs.

use rand_core::CryptoRngCore;
use rsa::{Oaep, RsaPrivateKey, RsaPublicKey};
use sada_core::protocol::{PkeDecryptor, PkeEncryptor, PkeError};
use sha2::Sha256;

pub const RSA_BITS: usize = 2048;
const MODULUS_LEN: usize = RSA_BITS / 8;
const MAX_PLAINTEXT: usize = MODULUS_LEN - 2 * 32 - 2;

#[derive(Debug, Clone)]
pub struct RsaEncryptor(RsaPublicKey);

#[derive(Debug, Clone)]
pub struct RsaDecryptor(RsaPrivateKey);

pub fn generate(rng: &mut impl CryptoRngCore) -> (RsaEncryptor, RsaDecryptor) {
    let sk = RsaPrivateKey::new(rng, RSA_BITS).expect("RSA key generation");
    (RsaEncryptor(sk.to_public_key()), RsaDecryptor(sk))
}

impl PkeEncryptor for RsaEncryptor {
    fn scheme(&self) -> &'static str {
        "rsa-2048-oaep"
    }

    fn encrypt(&self, plaintext: &[u8], mut rng: &mut dyn CryptoRngCore) -> Result<Vec<u8>, PkeError> {
        if plaintext.len() > MAX_PLAINTEXT {
            return Err(PkeError::TooLong(plaintext.len()));
        }
        self.0
            .encrypt(&mut rng, Oaep::new::<Sha256>(), plaintext)
            .map_err(|_| PkeError::TooLong(plaintext.len()))
    }

    fn ciphertext_len(&self, _plaintext_len: usize) -> usize {
        MODULUS_LEN
    }
}

impl PkeDecryptor for RsaDecryptor {
    fn decrypt(&self, ciphertext: &[u8]) -> Result<Vec<u8>, PkeError> {
        if ciphertext.len() != MODULUS_LEN {
            return Err(PkeError::Malformed);
        }
        self.0
            .decrypt(Oaep::new::<Sha256>(), ciphertext)
            .map_err(|_| PkeError::Decryption)
    }
}
