use alloc::vec::Vec;

use crate::group::Group;
use crate::hash::{domain_hash, Digest, DomainTag};
use crate::seal::TAG_LEN;

use super::ApprovalError;

/// `com_i`, 32 bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Commitment(pub Digest);

impl Commitment {
    pub const LEN: usize = 32;
}

/// `f_i(j)` sealed under the pair key of `i` and `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedShare {
    pub peer: u8,
    pub ciphertext: Vec<u8>,
}

/// `m_i`: nonce batch, masked datum, `h_i` and the encrypted shares.
///
/// Layout: `count ‖ R_1..R_count ‖ c_i (u64 BE) ‖ h_i ‖ count ‖ (peer ‖ ciphertext)*`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RevealMsg<G: Group> {
    pub nonces: Vec<G::Point>,
    pub masked: u64,
    pub beta_hash: Digest,
    pub shares: Vec<EncryptedShare>,
}

impl<G: Group> RevealMsg<G> {
    fn nonce_segment(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(1 + self.nonces.len() * G::POINT_LEN);
        out.push(self.nonces.len() as u8);
        for r in &self.nonces {
            out.extend_from_slice(G::point_to_bytes(r).as_ref());
        }
        out
    }

    fn share_segment(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.push(self.shares.len() as u8);
        for sh in &self.shares {
            out.push(sh.peer);
            out.extend_from_slice(&sh.ciphertext);
        }
        out
    }

    /// `Hash_com` over the four segments of the message.
    pub fn commitment(&self) -> Commitment {
        Commitment(domain_hash(
            DomainTag::Com,
            &[
                &self.nonce_segment(),
                &self.masked.to_be_bytes(),
                &self.beta_hash,
                &self.share_segment(),
            ],
        ))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.nonce_segment();
        out.extend_from_slice(&self.masked.to_be_bytes());
        out.extend_from_slice(&self.beta_hash);
        out.extend_from_slice(&self.share_segment());
        out
    }

    pub fn encoded_len(&self) -> usize {
        1 + self.nonces.len() * G::POINT_LEN
            + 8
            + 32
            + 1
            + self
                .shares
                .iter()
                .map(|s| 1 + s.ciphertext.len())
                .sum::<usize>()
    }

    /// Decodes a message whose share ciphertexts carry `share_width`-byte plaintexts.
    pub fn decode(bytes: &[u8], share_width: usize) -> Result<Self, ApprovalError> {
        let mut rd = Reader(bytes);
        let n = rd.byte()? as usize;
        let mut nonces = Vec::with_capacity(n);
        for _ in 0..n {
            nonces.push(G::point_from_bytes(rd.take(G::POINT_LEN)?)?);
        }
        let masked = u64::from_be_bytes(rd.take(8)?.try_into().expect("8 bytes"));
        let beta_hash: Digest = rd.take(32)?.try_into().expect("32 bytes");
        let m = rd.byte()? as usize;
        let ct_len = share_width + TAG_LEN;
        let mut shares = Vec::with_capacity(m);
        for _ in 0..m {
            let peer = rd.byte()?;
            shares.push(EncryptedShare {
                peer,
                ciphertext: rd.take(ct_len)?.to_vec(),
            });
        }
        if !rd.0.is_empty() {
            return Err(ApprovalError::Framing);
        }
        Ok(RevealMsg {
            nonces,
            masked,
            beta_hash,
            shares,
        })
    }
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ApprovalError> {
        if self.0.len() < n {
            return Err(ApprovalError::Framing);
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn byte(&mut self) -> Result<u8, ApprovalError> {
        Ok(self.take(1)?[0])
    }
}
