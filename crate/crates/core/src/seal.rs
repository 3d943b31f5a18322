//! ChaCha20-Poly1305 sealing with explicit nonces.
//!
//! Keys used here are fresh per event or per upload session, so nonces are
//! derived from `(purpose, sender, receiver, counter)` instead of being sent.

use alloc::vec::Vec;

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};

pub const KEY_LEN: usize = 32;
pub const TAG_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("authenticated decryption failed")]
pub struct SealError;

/// Nonce purposes; one per message family sharing a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    Share = 1,
    Envelope = 2,
    Report = 3,
    Records = 4,
    Hybrid = 5,
    Relay = 6,
}

pub fn nonce(purpose: Purpose, sender: u8, receiver: u8, counter: u64) -> [u8; 12] {
    let mut n = [0u8; 12];
    n[0] = purpose as u8;
    n[1] = sender;
    n[2] = receiver;
    n[4..].copy_from_slice(&counter.to_be_bytes());
    n
}

pub fn seal(key: &[u8; KEY_LEN], nonce: &[u8; 12], aad: &[u8], plaintext: &[u8]) -> Vec<u8> {
    ChaCha20Poly1305::new(Key::from_slice(key))
        .encrypt(Nonce::from_slice(nonce), Payload { msg: plaintext, aad })
        .expect("in-memory encryption cannot fail")
}

pub fn open(key: &[u8; KEY_LEN], nonce: &[u8; 12], aad: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, SealError> {
    ChaCha20Poly1305::new(Key::from_slice(key))
        .decrypt(Nonce::from_slice(nonce), Payload { msg: ciphertext, aad })
        .map_err(|_| SealError)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_tamper() {
        let key = [3u8; 32];
        let n = nonce(Purpose::Share, 1, 2, 0);
        let ct = seal(&key, &n, b"ad", b"hello");
        assert_eq!(ct.len(), 5 + TAG_LEN);
        assert_eq!(open(&key, &n, b"ad", &ct).unwrap(), b"hello");
        assert_eq!(open(&key, &n, b"xx", &ct), Err(SealError));
        assert_eq!(open(&key, &nonce(Purpose::Share, 2, 1, 0), b"ad", &ct), Err(SealError));
        for bit in 0..ct.len() * 8 {
            let mut bad = ct.clone();
            bad[bit / 8] ^= 1 << (bit % 8);
            assert_eq!(open(&key, &n, b"ad", &bad), Err(SealError));
        }
    }
}
