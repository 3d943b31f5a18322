//! Recoverable masking.
//!
//! Member `i` hides `data_i` behind `β_i = Σ_{j>i} α_{i,j} − Σ_{j<i} α_{j,i}`
//! (mod `p_mk`). The β values cancel across the cluster, so the masked sum
//! equals the plain sum. Each β is also Shamir-shared to the other members,
//! which lets the head remove a bad member's contribution with `t_sm` shares
//! instead of re-running the mask exchange.
//!
//! Member indices are 1-based and double as share x-coordinates.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::hash::{domain_hash, Digest, DomainTag};

pub mod field;
mod pairwise;
mod shamir;

pub use pairwise::{agree_pairwise, derive_pairwise, shared_point, PairwiseSecret};
pub use shamir::{interpolate_at_zero, uniform_below, SharePolynomial};

use field::{add_mod, sub_mod};

/// Largest cluster the one-byte index fields can address.
pub const MAX_CLUSTER: usize = 255;

/// Mersenne prime 2^61 − 1.
pub const DEFAULT_P_MK: u64 = (1 << 61) - 1;
/// Smallest prime above [`DEFAULT_P_MK`].
pub const DEFAULT_P_SM: u64 = 2_305_843_009_213_693_967;
pub const TOY_P_MK: u64 = 97;
pub const TOY_P_SM: u64 = 101;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MaskingError {
    #[error("cluster size {0} outside 2..={MAX_CLUSTER}")]
    ClusterSize(usize),
    #[error("threshold {t_sm} invalid for cluster of {n_v}")]
    Threshold { t_sm: usize, n_v: usize },
    #[error("share modulus {0} is not prime")]
    ShareModulusNotPrime(u64),
    #[error("share modulus {p_sm} must exceed mask modulus {p_mk}")]
    ShareModulusTooSmall { p_mk: u64, p_sm: u64 },
    #[error("mask modulus must be at least 2")]
    MaskModulus,
    #[error("member index {0} outside the cluster")]
    IndexOutOfRange(usize),
    #[error("datum {data} not below p_mk = {p_mk}")]
    DataOutOfRange { data: u64, p_mk: u64 },
    #[error("no mask agreed with member {0}")]
    MissingMask(usize),
    #[error("got {got} masked values for a cluster of {expected}")]
    CountMismatch { expected: usize, got: usize },
    #[error("need at least {needed} shares, got {got}")]
    TooFewShares { needed: usize, got: usize },
    #[error("share index {0} appears twice")]
    DuplicateShareIndex(usize),
    #[error("share index must be nonzero")]
    ZeroShareIndex,
    #[error("share from member {0}, the excluded member itself")]
    ShareFromExcluded(usize),
    #[error("peer public key is the identity")]
    IdentityPeerKey,
    #[error("peer public key equals own key")]
    PeerIsSelf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskingParams {
    pub p_mk: u64,
    pub p_sm: u64,
    pub t_sm: usize,
    pub n_v: usize,
}

impl MaskingParams {
    /// Validates `2 ≤ t_sm ≤ n_v − 1`, `p_sm` prime and `p_sm > p_mk`.
    ///
    /// A two-member cluster has a single peer, so its threshold is 1.
    pub fn new(p_mk: u64, p_sm: u64, t_sm: usize, n_v: usize) -> Result<Self, MaskingError> {
        if !(2..=MAX_CLUSTER).contains(&n_v) {
            return Err(MaskingError::ClusterSize(n_v));
        }
        let threshold_ok = if n_v == 2 {
            t_sm == 1
        } else {
            (2..n_v).contains(&t_sm)
        };
        if !threshold_ok {
            return Err(MaskingError::Threshold { t_sm, n_v });
        }
        if p_mk < 2 {
            return Err(MaskingError::MaskModulus);
        }
        if !field::is_prime(p_sm) {
            return Err(MaskingError::ShareModulusNotPrime(p_sm));
        }
        if p_sm <= p_mk {
            return Err(MaskingError::ShareModulusTooSmall { p_mk, p_sm });
        }
        Ok(MaskingParams {
            p_mk,
            p_sm,
            t_sm,
            n_v,
        })
    }

    /// `p_mk = 2^61 − 1` with the next prime as share field.
    pub fn standard(n_v: usize, t_sm: usize) -> Result<Self, MaskingError> {
        Self::new(DEFAULT_P_MK, DEFAULT_P_SM, t_sm, n_v)
    }

    /// `(p_mk, p_sm) = (97, 101)`.
    pub fn toy(n_v: usize, t_sm: usize) -> Result<Self, MaskingError> {
        Self::new(TOY_P_MK, TOY_P_SM, t_sm, n_v)
    }

    /// Share wire width: 2 bytes when the field fits, else 8.
    pub fn share_width(&self) -> usize {
        if self.p_sm < 1 << 16 {
            2
        } else {
            8
        }
    }

    pub fn encode_share(&self, value: u64) -> Vec<u8> {
        let be = value.to_be_bytes();
        be[8 - self.share_width()..].to_vec()
    }

    pub fn decode_share(&self, bytes: &[u8]) -> Option<u64> {
        if bytes.len() != self.share_width() {
            return None;
        }
        let mut be = [0u8; 8];
        be[8 - bytes.len()..].copy_from_slice(bytes);
        let v = u64::from_be_bytes(be);
        (v < self.p_sm).then_some(v)
    }

    fn check_index(&self, i: usize) -> Result<(), MaskingError> {
        if (1..=self.n_v).contains(&i) {
            Ok(())
        } else {
            Err(MaskingError::IndexOutOfRange(i))
        }
    }
}

/// Result of masking one member's datum.
#[derive(Clone, PartialEq, Eq)]
pub struct MaskingOutput {
    /// `c_i = data_i + β_i mod p_mk`.
    pub masked: u64,
    /// `h_i = Hash_mask(β_i)`.
    pub beta_hash: Digest,
    /// `j → f_i(j)` for every peer `j`.
    pub shares: BTreeMap<usize, u64>,
    beta: u64,
}

impl core::fmt::Debug for MaskingOutput {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("MaskingOutput")
            .field("masked", &self.masked)
            .finish_non_exhaustive()
    }
}

impl MaskingOutput {
    pub fn beta(&self) -> u64 {
        self.beta
    }
}

pub fn hash_beta(beta: u64) -> Digest {
    domain_hash(DomainTag::Mask, &[&beta.to_be_bytes()])
}

/// `β_i` from the masks agreed with every peer.
pub fn reconstruction_parameter(
    index: usize,
    params: &MaskingParams,
    masks: &BTreeMap<usize, u64>,
) -> Result<u64, MaskingError> {
    params.check_index(index)?;
    let mut beta = 0;
    for j in (1..=params.n_v).filter(|j| *j != index) {
        let alpha = masks.get(&j).ok_or(MaskingError::MissingMask(j))? % params.p_mk;
        beta = if j > index {
            add_mod(beta, alpha, params.p_mk)
        } else {
            sub_mod(beta, alpha, params.p_mk)
        };
    }
    Ok(beta)
}

/// Masks `data` with fresh share polynomial coefficients from `rng`.
pub fn mask_data(
    index: usize,
    data: u64,
    params: &MaskingParams,
    masks: &BTreeMap<usize, u64>,
    rng: &mut impl RngCore,
) -> Result<MaskingOutput, MaskingError> {
    let beta = reconstruction_parameter(index, params, masks)?;
    let poly = SharePolynomial::random(beta, params.t_sm, params.p_sm, rng);
    mask_with_polynomial(index, data, params, beta, &poly)
}

/// Masking with a caller-chosen share polynomial whose constant term is `β_i`.
pub fn mask_with_polynomial(
    index: usize,
    data: u64,
    params: &MaskingParams,
    beta: u64,
    poly: &SharePolynomial,
) -> Result<MaskingOutput, MaskingError> {
    params.check_index(index)?;
    if data >= params.p_mk {
        return Err(MaskingError::DataOutOfRange {
            data,
            p_mk: params.p_mk,
        });
    }
    debug_assert_eq!(poly.secret(), beta % params.p_sm);
    let shares = (1..=params.n_v)
        .filter(|j| *j != index)
        .map(|j| (j, poly.eval(j as u64)))
        .collect();
    Ok(MaskingOutput {
        masked: add_mod(data, beta, params.p_mk),
        beta_hash: hash_beta(beta),
        shares,
        beta,
    })
}

/// `Σ c_i mod p_mk` over the whole cluster.
pub fn sum_masked(masked: &[u64], params: &MaskingParams) -> Result<u64, MaskingError> {
    if masked.len() != params.n_v {
        return Err(MaskingError::CountMismatch {
            expected: params.n_v,
            got: masked.len(),
        });
    }
    Ok(masked.iter().fold(0, |acc, c| add_mod(acc, *c, params.p_mk)))
}

/// Lagrange reconstruction of an excluded member's `β` from `(index, share)` pairs.
pub fn reconstruct_beta(
    shares: &[(usize, u64)],
    params: &MaskingParams,
    excluded: usize,
) -> Result<u64, MaskingError> {
    if shares.len() < params.t_sm {
        return Err(MaskingError::TooFewShares {
            needed: params.t_sm,
            got: shares.len(),
        });
    }
    for (idx, _) in shares {
        if *idx == excluded {
            return Err(MaskingError::ShareFromExcluded(excluded));
        }
    }
    let points: Vec<(u64, u64)> = shares.iter().map(|(i, y)| (*i as u64, *y)).collect();
    interpolate_at_zero(&points, params.p_sm)
}

pub fn verify_beta(beta: u64, expected_hash: &Digest) -> bool {
    hash_beta(beta) == *expected_hash
}

/// `sum_old − c_re + β_re mod p_mk`.
pub fn exclude_and_resum(sum_old: u64, masked_excluded: u64, beta_excluded: u64, p_mk: u64) -> u64 {
    add_mod(sub_mod(sum_old, masked_excluded, p_mk), beta_excluded % p_mk, p_mk)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn toy_masks() -> [BTreeMap<usize, u64>; 3] {
        // α12 = 5, α13 = 7, α23 = 11
        [
            BTreeMap::from([(2, 5), (3, 7)]),
            BTreeMap::from([(1, 5), (3, 11)]),
            BTreeMap::from([(1, 7), (2, 11)]),
        ]
    }

    #[test]
    fn params_validation() {
        assert!(MaskingParams::toy(3, 2).is_ok());
        assert!(MaskingParams::toy(2, 1).is_ok());
        assert_eq!(MaskingParams::toy(1, 1), Err(MaskingError::ClusterSize(1)));
        assert!(matches!(MaskingParams::toy(3, 3), Err(MaskingError::Threshold { .. })));
        assert!(matches!(MaskingParams::toy(5, 1), Err(MaskingError::Threshold { .. })));
        assert_eq!(
            MaskingParams::new(97, 100, 2, 3),
            Err(MaskingError::ShareModulusNotPrime(100))
        );
        assert!(matches!(
            MaskingParams::new(101, 101, 2, 3),
            Err(MaskingError::ShareModulusTooSmall { .. })
        ));
        let std = MaskingParams::standard(20, 10).unwrap();
        assert_eq!(std.share_width(), 8);
        assert_eq!(MaskingParams::toy(3, 2).unwrap().share_width(), 2);
    }

    #[test]
    fn share_encoding() {
        let p = MaskingParams::toy(3, 2).unwrap();
        assert_eq!(p.encode_share(100), alloc::vec![0, 100]);
        assert_eq!(p.decode_share(&[0, 100]), Some(100));
        assert_eq!(p.decode_share(&[0, 101]), None);
        assert_eq!(p.decode_share(&[100]), None);
    }

    #[test]
    fn toy_betas_by_hand() {
        let p = MaskingParams::toy(3, 2).unwrap();
        let m = toy_masks();
        let betas: Vec<u64> = (1..=3)
            .map(|i| reconstruction_parameter(i, &p, &m[i - 1]).unwrap())
            .collect();
        assert_eq!(betas, [12, 6, 79]);
        assert_eq!(betas.iter().sum::<u64>() % 97, 0);
    }

    #[test]
    fn toy_masked_sum_by_hand() {
        let p = MaskingParams::toy(3, 2).unwrap();
        let m = toy_masks();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let outs: Vec<_> = [10, 20, 30]
            .iter()
            .enumerate()
            .map(|(n, d)| mask_data(n + 1, *d, &p, &m[n], &mut rng).unwrap())
            .collect();
        let cs: Vec<u64> = outs.iter().map(|o| o.masked).collect();
        assert_eq!(cs, [22, 26, 12]);
        assert_eq!(sum_masked(&cs, &p), Ok(60));
        // exclude member 3 (c = 12, β = 79)
        assert_eq!(exclude_and_resum(60, 12, 79, 97), 30);
        // and via its shares held by members 1 and 2
        let shares = [(1, outs[2].shares[&1]), (2, outs[2].shares[&2])];
        let beta = reconstruct_beta(&shares, &p, 3).unwrap();
        assert_eq!(beta, 79);
        assert!(verify_beta(beta, &outs[2].beta_hash));
    }

    #[test]
    fn toy_share_polynomial_from_beta() {
        let p = MaskingParams::toy(3, 2).unwrap();
        let poly = SharePolynomial::from_coefficients(alloc::vec![12, 3], p.p_sm);
        let out = mask_with_polynomial(1, 10, &p, 12, &poly).unwrap();
        assert_eq!(out.shares, BTreeMap::from([(2, 18), (3, 21)]));
        assert_eq!(reconstruct_beta(&[(2, 18), (3, 21)], &p, 1), Ok(12));
    }

    #[test]
    fn zero_masks_and_zero_data() {
        let p = MaskingParams::toy(3, 2).unwrap();
        let zeros = BTreeMap::from([(2, 0), (3, 0)]);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let out = mask_data(1, 42, &p, &zeros, &mut rng).unwrap();
        assert_eq!(out.masked, 42);
        assert_eq!(out.beta(), 0);

        let m = toy_masks();
        let cs: Vec<u64> = (1..=3)
            .map(|i| mask_data(i, 0, &p, &m[i - 1], &mut rng).unwrap().masked)
            .collect();
        assert_eq!(sum_masked(&cs, &p), Ok(0));
    }

    #[test]
    fn two_member_hand_case() {
        let p = MaskingParams::toy(2, 1).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let c1 = mask_data(1, 1, &p, &BTreeMap::from([(2, 96)]), &mut rng).unwrap().masked;
        let c2 = mask_data(2, 1, &p, &BTreeMap::from([(1, 96)]), &mut rng).unwrap().masked;
        assert_eq!((c1, c2), (0, 2));
        assert_eq!(sum_masked(&[c1, c2], &p), Ok(2));
    }

    #[test]
    fn masking_errors() {
        let p = MaskingParams::toy(3, 2).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        assert_eq!(
            mask_data(1, 5, &p, &BTreeMap::from([(2, 1)]), &mut rng),
            Err(MaskingError::MissingMask(3))
        );
        assert_eq!(
            mask_data(1, 97, &p, &toy_masks()[0], &mut rng),
            Err(MaskingError::DataOutOfRange { data: 97, p_mk: 97 })
        );
        assert_eq!(
            mask_data(4, 5, &p, &toy_masks()[0], &mut rng),
            Err(MaskingError::IndexOutOfRange(4))
        );
        assert_eq!(
            sum_masked(&[1, 2], &p),
            Err(MaskingError::CountMismatch { expected: 3, got: 2 })
        );
        assert_eq!(
            reconstruct_beta(&[(1, 5)], &p, 3),
            Err(MaskingError::TooFewShares { needed: 2, got: 1 })
        );
        assert_eq!(
            reconstruct_beta(&[(1, 5), (1, 6)], &p, 3),
            Err(MaskingError::DuplicateShareIndex(1))
        );
        assert_eq!(
            reconstruct_beta(&[(1, 5), (3, 6)], &p, 3),
            Err(MaskingError::ShareFromExcluded(3))
        );
    }

    #[test]
    fn verify_beta_cases() {
        assert!(verify_beta(12, &hash_beta(12)));
        assert!(!verify_beta(13, &hash_beta(12)));
    }

    #[test]
    fn exclusion_is_invertible() {
        let p_mk = 97;
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..200 {
            let (s, c, b) = (rng.next_u64() % p_mk, rng.next_u64() % p_mk, rng.next_u64() % p_mk);
            let removed = exclude_and_resum(s, c, b, p_mk);
            assert_eq!(add_mod(sub_mod(removed, b, p_mk), c, p_mk), s);
        }
        // removing the only nonzero contributor leaves zero
        assert_eq!(exclude_and_resum(12 + 79, 12 + 79, 0, 97), 0);
    }

    /// Random cluster: symmetric masks, random data, full masking run.
    fn random_cluster(
        n_v: usize,
        t_sm: usize,
        rng: &mut ChaCha20Rng,
    ) -> (MaskingParams, Vec<u64>, Vec<MaskingOutput>) {
        let p = MaskingParams::standard(n_v, t_sm).unwrap();
        let mut alpha = BTreeMap::new();
        for i in 1..=n_v {
            for j in (i + 1)..=n_v {
                alpha.insert((i, j), rng.next_u64());
            }
        }
        let bound = p.p_mk / n_v as u64;
        let data: Vec<u64> = (0..n_v).map(|_| rng.next_u64() % bound).collect();
        let outs = (1..=n_v)
            .map(|i| {
                let m = (1..=n_v)
                    .filter(|j| *j != i)
                    .map(|j| (j, alpha[&(i.min(j), i.max(j))]))
                    .collect();
                mask_data(i, data[i - 1], &p, &m, rng).unwrap()
            })
            .collect();
        (p, data, outs)
    }

    #[test]
    fn betas_cancel_and_sum_is_exact() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        for _ in 0..300 {
            let n_v = 3 + (rng.next_u32() % 38) as usize;
            let (p, data, outs) = random_cluster(n_v, 2, &mut rng);
            let beta_sum = outs.iter().fold(0, |a, o| add_mod(a, o.beta(), p.p_mk));
            assert_eq!(beta_sum, 0);
            let cs: Vec<u64> = outs.iter().map(|o| o.masked).collect();
            assert_eq!(sum_masked(&cs, &p).unwrap(), data.iter().sum::<u64>() % p.p_mk);
        }
    }

    #[test]
    fn reconstruction_always_verifies_and_matches_fresh_run() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let n_v = 4 + (rng.next_u32() % 12) as usize;
            let t_sm = 2 + (rng.next_u32() as usize % (n_v - 2));
            let (p, data, outs) = random_cluster(n_v, t_sm, &mut rng);
            let bad = 1 + (rng.next_u32() as usize % n_v);
            let shares: Vec<(usize, u64)> = (1..=n_v)
                .filter(|j| *j != bad)
                .take(t_sm)
                .map(|j| (j, outs[bad - 1].shares[&j]))
                .collect();
            let beta = reconstruct_beta(&shares, &p, bad).unwrap();
            assert!(verify_beta(beta, &outs[bad - 1].beta_hash));
            let cs: Vec<u64> = outs.iter().map(|o| o.masked).collect();
            let sum_new = exclude_and_resum(sum_masked(&cs, &p).unwrap(), cs[bad - 1], beta, p.p_mk);
            let expected: u64 = data.iter().enumerate().filter(|(i, _)| i + 1 != bad).map(|(_, d)| d).sum();
            assert_eq!(sum_new, expected % p.p_mk);
        }
    }

    #[test]
    fn corrupted_share_is_caught_by_hash() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        for _ in 0..200 {
            let (p, _, outs) = random_cluster(8, 3, &mut rng);
            let mut shares: Vec<(usize, u64)> = (2..=4).map(|j| (j, outs[0].shares[&j])).collect();
            let k = (rng.next_u32() % 3) as usize;
            shares[k].1 = (shares[k].1 + 1 + rng.next_u64() % (p.p_sm - 1)) % p.p_sm;
            let beta = reconstruct_beta(&shares, &p, 1).unwrap();
            assert_ne!(beta, outs[0].beta());
            assert!(!verify_beta(beta, &outs[0].beta_hash));
        }
    }
}
