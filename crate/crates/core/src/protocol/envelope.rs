//! Length-prefixed frames and sign-then-encrypt envelopes.
//!
//! Frame: `type (1) ‖ length (u32 BE) ‖ body`. An envelope body is the AEAD
//! ciphertext of `payload ‖ Schnorr(type ‖ payload)` with the type byte as
//! associated data.

use alloc::vec::Vec;

use rand_core::CryptoRngCore;

use crate::group::Group;
use crate::schnorr::{self, KeyPair, Signature};
use crate::seal;

use super::ProtocolError;

pub const HEADER_LEN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum MsgType {
    Commitment = 0x01,
    CommitList = 0x02,
    Reveal = 0x03,
    RevealBundle = 0x04,
    SubApproval = 0x05,
    ExclusionNotice = 0x06,
    ShareRelease = 0x07,
    BetaList = 0x08,
    SessionKeys = 0x09,
    Report = 0x0a,
    Records = 0x0b,
    Relay = 0x0c,
}

impl MsgType {
    pub const ALL: [MsgType; 12] = [
        MsgType::Commitment,
        MsgType::CommitList,
        MsgType::Reveal,
        MsgType::RevealBundle,
        MsgType::SubApproval,
        MsgType::ExclusionNotice,
        MsgType::ShareRelease,
        MsgType::BetaList,
        MsgType::SessionKeys,
        MsgType::Report,
        MsgType::Records,
        MsgType::Relay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MsgType::Commitment => "commitment",
            MsgType::CommitList => "commit_list",
            MsgType::Reveal => "reveal",
            MsgType::RevealBundle => "reveal_bundle",
            MsgType::SubApproval => "sub_approval",
            MsgType::ExclusionNotice => "exclusion_notice",
            MsgType::ShareRelease => "share_release",
            MsgType::BetaList => "beta_list",
            MsgType::SessionKeys => "session_keys",
            MsgType::Report => "report",
            MsgType::Records => "records",
            MsgType::Relay => "relay",
        }
    }
}

impl TryFrom<u8> for MsgType {
    type Error = ProtocolError;

    fn try_from(b: u8) -> Result<Self, ProtocolError> {
        MsgType::ALL
            .iter()
            .copied()
            .find(|t| *t as u8 == b)
            .ok_or(ProtocolError::UnknownType(b))
    }
}

pub fn frame(tag: MsgType, body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.push(tag as u8);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(body);
    out
}

pub fn unframe(bytes: &[u8]) -> Result<(MsgType, &[u8]), ProtocolError> {
    if bytes.len() < HEADER_LEN {
        return Err(ProtocolError::Framing);
    }
    let tag = MsgType::try_from(bytes[0])?;
    let len = u32::from_be_bytes(bytes[1..5].try_into().expect("4 bytes")) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != len {
        return Err(ProtocolError::Framing);
    }
    Ok((tag, body))
}

fn signed_message(tag: MsgType, payload: &[u8]) -> Vec<u8> {
    let mut m = Vec::with_capacity(1 + payload.len());
    m.push(tag as u8);
    m.extend_from_slice(payload);
    m
}

pub fn seal_envelope<G: Group>(
    signer: &KeyPair<G>,
    key: &[u8; seal::KEY_LEN],
    nonce: &[u8; 12],
    tag: MsgType,
    payload: &[u8],
    rng: &mut impl CryptoRngCore,
) -> Vec<u8> {
    let sig = schnorr::sign(signer, &signed_message(tag, payload), rng);
    let mut plain = payload.to_vec();
    plain.extend_from_slice(&sig.to_bytes());
    frame(tag, &seal::seal(key, nonce, &[tag as u8], &plain))
}

pub fn open_envelope<G: Group>(
    sender: &G::Point,
    key: &[u8; seal::KEY_LEN],
    nonce: &[u8; 12],
    bytes: &[u8],
) -> Result<(MsgType, Vec<u8>), ProtocolError> {
    let (tag, body) = unframe(bytes)?;
    let mut plain = seal::open(key, nonce, &[tag as u8], body).map_err(|_| ProtocolError::Decryption)?;
    let sig_len = Signature::<G>::LEN;
    if plain.len() < sig_len {
        return Err(ProtocolError::Framing);
    }
    let sig_bytes = plain.split_off(plain.len() - sig_len);
    let sig = Signature::<G>::from_bytes(&sig_bytes).map_err(|_| ProtocolError::BadSignature)?;
    if !schnorr::verify(sender, &signed_message(tag, &plain), &sig) {
        return Err(ProtocolError::BadSignature);
    }
    Ok((tag, plain))
}

/// Envelope size for a payload of `len` bytes.
pub fn envelope_len<G: Group>(len: usize) -> usize {
    HEADER_LEN + len + Signature::<G>::LEN + seal::TAG_LEN
}
