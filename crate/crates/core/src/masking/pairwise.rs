use crate::group::Group;
use crate::hash::{domain_hash, DomainTag, Uid};
use crate::schnorr::KeyPair;

use super::field::reduce_be;
use super::MaskingError;

/// Mask and channel key agreed between two members for one event.
///
/// Both ends derive identical values, so `α_{i,j} = α_{j,i}`.
#[derive(Clone, PartialEq, Eq)]
pub struct PairwiseSecret {
    pub peer: usize,
    mask: [u8; 32],
    key: [u8; 32],
}

impl core::fmt::Debug for PairwiseSecret {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("PairwiseSecret")
            .field("peer", &self.peer)
            .finish_non_exhaustive()
    }
}

impl PairwiseSecret {
    /// Raw 256-bit mask.
    pub fn mask(&self) -> &[u8; 32] {
        &self.mask
    }

    /// The mask reduced into `Z_modulus`.
    pub fn mask_mod(&self, modulus: u64) -> u64 {
        reduce_be(&self.mask, modulus)
    }

    /// Symmetric key for the pair's share ciphertexts and envelopes.
    pub fn key(&self) -> &[u8; 32] {
        &self.key
    }
}

/// Diffie-Hellman point `peer_pk · sk`.
pub fn shared_point<G: Group>(my: &KeyPair<G>, peer_pk: &G::Point) -> G::Point {
    *peer_pk * *my.secret()
}

pub fn agree_pairwise<G: Group>(
    my: &KeyPair<G>,
    peer: usize,
    peer_pk: &G::Point,
    context: &Uid,
) -> Result<PairwiseSecret, MaskingError> {
    if G::is_identity(peer_pk) {
        return Err(MaskingError::IdentityPeerKey);
    }
    if *peer_pk == my.public() {
        return Err(MaskingError::PeerIsSelf);
    }
    Ok(derive_pairwise::<G>(peer, &shared_point(my, peer_pk), context))
}

/// Per-event mask and key from an already computed DH point.
pub fn derive_pairwise<G: Group>(peer: usize, shared: &G::Point, context: &Uid) -> PairwiseSecret {
    let shared = G::point_to_bytes(shared);
    let derive = |label: &[u8]| domain_hash(DomainTag::Kdf, &[label, shared.as_ref(), &context.0]);
    PairwiseSecret {
        peer,
        mask: derive(b"mask"),
        key: derive(b"key"),
    }
}
