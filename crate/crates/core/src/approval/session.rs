use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use rand_core::CryptoRngCore;

use crate::group::Group;
use crate::hash::Uid;
use crate::masking::field::add_mod;
use crate::masking::{
    agree_pairwise, exclude_and_resum, mask_data, verify_beta, MaskingOutput, MaskingParams,
    PairwiseSecret,
};
use crate::schnorr::KeyPair;
use crate::seal::{self, Purpose};

use super::wire::{Commitment, EncryptedShare, RevealMsg};
use super::{
    aggregate_key, approval_challenge, sub_approval_response, AggKey, Approval, ApprovalError,
    AverageValue, SubApproval,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    /// Masked, nonces drawn, commitment not yet sent.
    Fresh,
    AwaitLcom,
    AwaitReveals,
    /// Reveals verified; sub-approvals can be produced.
    Ready,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionConfig {
    /// 1-based position of this member in the cluster list.
    pub index: usize,
    pub params: MaskingParams,
    pub nonce_batch: usize,
}

impl SessionConfig {
    pub const DEFAULT_NONCE_BATCH: usize = 2;

    pub fn new(index: usize, params: MaskingParams) -> Self {
        SessionConfig {
            index,
            params,
            nonce_batch: Self::DEFAULT_NONCE_BATCH,
        }
    }
}

/// One member's view of one aggregation event.
pub struct ApprovalSession<G: Group> {
    config: SessionConfig,
    keypair: KeyPair<G>,
    members: Vec<G::Point>,
    uid: Uid,
    pairs: BTreeMap<usize, PairwiseSecret>,
    masking: MaskingOutput,
    nonces: Vec<Option<G::Scalar>>,
    own: RevealMsg<G>,
    state: SessionState,
    reveals: BTreeMap<usize, RevealMsg<G>>,
    active: BTreeSet<usize>,
    slot: usize,
    sum: u64,
    agg: Option<AggKey<G>>,
    agg_nonce: G::Point,
}

impl<G: Group> core::fmt::Debug for ApprovalSession<G> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ApprovalSession")
            .field("index", &self.config.index)
            .field("state", &self.state)
            .field("slot", &self.slot)
            .finish_non_exhaustive()
    }
}

fn share_nonce(sender: usize, receiver: usize) -> [u8; 12] {
    seal::nonce(Purpose::Share, sender as u8, receiver as u8, 0)
}

impl<G: Group> ApprovalSession<G> {
    /// Agrees pairwise secrets, masks `data`, seals the shares and draws the nonce batch.
    pub fn new(
        config: SessionConfig,
        keypair: KeyPair<G>,
        members: &[G::Point],
        uid: Uid,
        data: u64,
        rng: &mut impl CryptoRngCore,
    ) -> Result<Self, ApprovalError> {
        let n_v = members.len();
        if n_v < 2 {
            return Err(ApprovalError::ClusterTooSmall(n_v));
        }
        let params = config.params;
        let i = config.index;
        if params.n_v != n_v || !(1..=n_v).contains(&i) || members[i - 1] != keypair.public() {
            return Err(ApprovalError::MemberList(i));
        }
        if config.nonce_batch == 0 || config.nonce_batch > u8::MAX as usize {
            return Err(ApprovalError::NoncesExhausted);
        }
        let mut pairs = BTreeMap::new();
        for (pos, pk) in members.iter().enumerate() {
            let j = pos + 1;
            if j != i {
                pairs.insert(j, agree_pairwise(&keypair, j, pk, &uid)?);
            }
        }
        let masks = pairs
            .iter()
            .map(|(j, s)| (*j, s.mask_mod(params.p_mk)))
            .collect();
        let masking = mask_data(i, data, &params, &masks, rng)?;
        let shares = masking
            .shares
            .iter()
            .map(|(j, f)| EncryptedShare {
                peer: *j as u8,
                ciphertext: seal::seal(
                    pairs[j].key(),
                    &share_nonce(i, *j),
                    &uid.0,
                    &params.encode_share(*f),
                ),
            })
            .collect();
        let nonces: Vec<G::Scalar> = (0..config.nonce_batch)
            .map(|_| G::random_nonzero_scalar(rng))
            .collect();
        let own = RevealMsg {
            nonces: nonces.iter().map(G::mul_base).collect(),
            masked: masking.masked,
            beta_hash: masking.beta_hash,
            shares,
        };
        Ok(ApprovalSession {
            config,
            keypair,
            members: members.to_vec(),
            uid,
            pairs,
            masking,
            nonces: nonces.into_iter().map(Some).collect(),
            own,
            state: SessionState::Fresh,
            reveals: BTreeMap::new(),
            active: (1..=n_v).collect(),
            slot: 0,
            sum: 0,
            agg: None,
            agg_nonce: G::identity(),
        })
    }

    fn expect(&self, expected: SessionState) -> Result<(), ApprovalError> {
        if self.state == expected {
            Ok(())
        } else {
            Err(ApprovalError::State {
                expected,
                actual: self.state,
            })
        }
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn index(&self) -> usize {
        self.config.index
    }

    pub fn uid(&self) -> &Uid {
        &self.uid
    }

    pub fn masking(&self) -> &MaskingOutput {
        &self.masking
    }

    /// This member's `m_i`.
    pub fn reveal_message(&self) -> &RevealMsg<G> {
        &self.own
    }

    pub fn commit(&mut self) -> Result<Commitment, ApprovalError> {
        self.expect(SessionState::Fresh)?;
        self.state = SessionState::AwaitLcom;
        Ok(self.own.commitment())
    }

    /// Releases `m_i` once `L_com` contains this member's commitment.
    pub fn reveal(&mut self, l_com: &[Commitment]) -> Result<RevealMsg<G>, ApprovalError> {
        self.expect(SessionState::AwaitLcom)?;
        let own = self.own.commitment();
        if l_com.get(self.config.index - 1) != Some(&own) {
            return Err(ApprovalError::CommitmentMissing);
        }
        self.state = SessionState::AwaitReveals;
        Ok(self.own.clone())
    }

    /// Checks every `m_j` against `com_j` and derives `R~` and the average.
    ///
    /// `l_com` and `reveals` are indexed by member position; this member's own
    /// entry may be omitted from `reveals`.
    pub fn receive_reveals(
        &mut self,
        l_com: &[Commitment],
        reveals: &BTreeMap<usize, RevealMsg<G>>,
    ) -> Result<(G::Point, AverageValue), ApprovalError> {
        self.expect(SessionState::AwaitReveals)?;
        let n_v = self.members.len();
        let mut checked = BTreeMap::new();
        for j in 1..=n_v {
            let msg = if j == self.config.index {
                reveals.get(&j).unwrap_or(&self.own)
            } else {
                reveals.get(&j).ok_or(ApprovalError::MissingReveal(j))?
            };
            if l_com.get(j - 1) != Some(&msg.commitment()) {
                return Err(ApprovalError::CommitmentMismatch { index: j });
            }
            if msg.nonces.len() != self.config.nonce_batch {
                return Err(ApprovalError::NonceBatch {
                    index: j,
                    expected: self.config.nonce_batch,
                    got: msg.nonces.len(),
                });
            }
            checked.insert(j, msg.clone());
        }
        self.reveals = checked;
        let p_mk = self.config.params.p_mk;
        self.sum = self
            .reveals
            .values()
            .fold(0, |acc, m| add_mod(acc, m.masked % p_mk, p_mk));
        self.agg = Some(aggregate_key(&self.members)?);
        self.agg_nonce = self.nonce_sum();
        self.state = SessionState::Ready;
        Ok((self.agg_nonce, self.average()))
    }

    fn nonce_sum(&self) -> G::Point {
        self.active
            .iter()
            .fold(G::identity(), |acc, j| acc + self.reveals[j].nonces[self.slot])
    }

    /// `(S, |active|)` as computed by this member.
    pub fn average(&self) -> AverageValue {
        AverageValue::new(self.sum, self.active.len())
    }

    pub fn aggregated_nonce(&self) -> G::Point {
        self.agg_nonce
    }

    pub fn agg_key(&self) -> Option<&AggKey<G>> {
        self.agg.as_ref()
    }

    pub fn active(&self) -> &BTreeSet<usize> {
        &self.active
    }

    /// `R_j` of the current nonce slot, as revealed by member `j`.
    pub fn member_nonce(&self, j: usize) -> Option<G::Point> {
        self.reveals.get(&j).map(|m| m.nonces[self.slot])
    }

    pub fn member_reveal(&self, j: usize) -> Option<&RevealMsg<G>> {
        self.reveals.get(&j)
    }

    /// Sub-approval on the self-computed average.
    pub fn sub_approve(&mut self) -> Result<SubApproval<G>, ApprovalError> {
        let avg = self.average();
        self.sub_approve_claimed(&avg)
    }

    /// Sub-approval on an arbitrary claimed average.
    ///
    /// Honest members never call this with anything but [`Self::average`]; it
    /// exists so attack scripts can produce shares over a value of their choice.
    pub fn sub_approve_claimed(&mut self, avg: &AverageValue) -> Result<SubApproval<G>, ApprovalError> {
        self.expect(SessionState::Ready)?;
        let agg = self.agg.as_ref().expect("set when ready");
        let nonce = self.nonces[self.slot]
            .take()
            .ok_or(ApprovalError::NonceConsumed)?;
        let a = agg
            .coefficient_of(&self.keypair.public())
            .ok_or(ApprovalError::UnknownMember(self.config.index))?;
        let e = approval_challenge::<G>(&agg.key(), &self.agg_nonce, avg);
        Ok(Approval {
            s: sub_approval_response::<G>(&nonce, &a, self.keypair.secret(), &e),
            r: self.agg_nonce,
        })
    }

    /// Opens the share `f_j(i)` that member `j` sealed for this member.
    pub fn share_for(&self, j: usize) -> Result<u64, ApprovalError> {
        let msg = self.reveals.get(&j).ok_or(ApprovalError::MissingReveal(j))?;
        let me = self.config.index;
        let sealed = msg
            .shares
            .iter()
            .find(|s| s.peer as usize == me)
            .ok_or(ApprovalError::ShareDecryption(j))?;
        let pair = self.pairs.get(&j).ok_or(ApprovalError::UnknownMember(j))?;
        let plain = seal::open(pair.key(), &share_nonce(j, me), &self.uid.0, &sealed.ciphertext)
            .map_err(|_| ApprovalError::ShareDecryption(j))?;
        self.config
            .params
            .decode_share(&plain)
            .ok_or(ApprovalError::ShareDecryption(j))
    }

    /// Removes `excluded` using their reconstructed `β`s and moves to the next nonce slot.
    pub fn apply_exclusion(
        &mut self,
        betas: &BTreeMap<usize, u64>,
    ) -> Result<(G::Point, AverageValue), ApprovalError> {
        self.expect(SessionState::Ready)?;
        for (bad, beta) in betas {
            if *bad == self.config.index || !self.active.contains(bad) {
                return Err(ApprovalError::UnknownMember(*bad));
            }
            if !verify_beta(*beta, &self.reveals[bad].beta_hash) {
                return Err(ApprovalError::BetaMismatch(*bad));
            }
        }
        if self.slot + 1 >= self.nonces.len() {
            return Err(ApprovalError::NoncesExhausted);
        }
        let p_mk = self.config.params.p_mk;
        for (bad, beta) in betas {
            self.sum = exclude_and_resum(self.sum, self.reveals[bad].masked % p_mk, *beta, p_mk);
            self.active.remove(bad);
        }
        self.slot += 1;
        let keys: Vec<G::Point> = self.active.iter().map(|j| self.members[j - 1]).collect();
        self.agg = Some(aggregate_key(&keys)?);
        self.agg_nonce = self.nonce_sum();
        Ok((self.agg_nonce, self.average()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use crate::approval::{aggregate_approval, verify_approval};
    use crate::group::{Secp256k1, ToyGroup};
    use crate::hash::compute_uid;
    use crate::masking::{reconstruct_beta, DEFAULT_P_MK};
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    type K = Secp256k1;

    struct Cluster<G: Group> {
        sessions: Vec<ApprovalSession<G>>,
        l_com: Vec<Commitment>,
        data: Vec<u64>,
    }

    fn setup<G: Group>(n: usize, params: MaskingParams, rng: &mut ChaCha20Rng) -> Cluster<G> {
        let kps: Vec<KeyPair<G>> = loop {
            let kps: Vec<KeyPair<G>> = (0..n).map(|_| KeyPair::generate(rng)).collect();
            let distinct: BTreeSet<_> = kps.iter().map(|k| G::point_to_bytes(&k.public())).collect();
            if distinct.len() == n {
                break kps;
            }
        };
        let pks: Vec<_> = kps.iter().map(|k| k.public()).collect();
        let uid = compute_uid::<G>(&pks, 77).unwrap();
        let data: Vec<u64> = (0..n).map(|_| rng.next_u64() % params.p_mk.min(1000)).collect();
        let mut sessions: Vec<_> = kps
            .into_iter()
            .enumerate()
            .map(|(i, kp)| {
                ApprovalSession::new(SessionConfig::new(i + 1, params), kp, &pks, uid, data[i], rng).unwrap()
            })
            .collect();
        let l_com = sessions.iter_mut().map(|s| s.commit().unwrap()).collect();
        Cluster {
            sessions,
            l_com,
            data,
        }
    }

    fn reveal_all<G: Group>(c: &mut Cluster<G>) -> BTreeMap<usize, RevealMsg<G>> {
        let l_com = c.l_com.clone();
        c.sessions
            .iter_mut()
            .map(|s| (s.index(), s.reveal(&l_com).unwrap()))
            .collect()
    }

    #[test]
    fn honest_cluster_approves_mean() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let params = MaskingParams::standard(6, 3).unwrap();
        let mut c = setup::<K>(6, params, &mut rng);
        let reveals = reveal_all(&mut c);
        let l_com = c.l_com.clone();
        let mut avgs = BTreeSet::new();
        for s in &mut c.sessions {
            let (_, avg) = s.receive_reveals(&l_com, &reveals).unwrap();
            avgs.insert(avg.to_bytes());
        }
        assert_eq!(avgs.len(), 1);
        let avg = c.sessions[0].average();
        assert_eq!(avg.sum, c.data.iter().sum::<u64>() % DEFAULT_P_MK);
        assert_eq!(avg.count, 6);
        let subs: Vec<_> = c.sessions.iter_mut().map(|s| s.sub_approve().unwrap()).collect();
        let appr = aggregate_approval(&subs).unwrap();
        let key = c.sessions[2].agg_key().unwrap().key();
        assert!(verify_approval(&key, &avg, &appr));
        let mut bumped = avg;
        bumped.sum += 1;
        assert!(!verify_approval(&key, &bumped, &appr));
        assert_eq!(c.sessions[0].sub_approve(), Err(ApprovalError::NonceConsumed));
    }

    #[test]
    fn state_machine_order() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let params = MaskingParams::standard(3, 2).unwrap();
        let mut c = setup::<K>(3, params, &mut rng);
        let s = &mut c.sessions[0];
        assert!(matches!(s.commit(), Err(ApprovalError::State { .. })));
        assert!(matches!(s.sub_approve(), Err(ApprovalError::State { .. })));
        let mut missing = c.l_com.clone();
        missing[0] = Commitment([0; 32]);
        assert_eq!(s.reveal(&missing), Err(ApprovalError::CommitmentMissing));
        assert_eq!(s.state(), SessionState::AwaitLcom);

        let kp = KeyPair::<K>::generate(&mut rng);
        let pk = kp.public();
        let uid = compute_uid::<K>(&[pk], 1).unwrap();
        let mut fresh = ApprovalSession::new(
            SessionConfig::new(1, params),
            kp,
            &[pk, K::generator(), K::generator() + K::generator()],
            uid,
            5,
            &mut rng,
        )
        .unwrap();
        assert!(matches!(fresh.reveal(&c.l_com), Err(ApprovalError::State { .. })));
        assert!(fresh.commit().is_ok());
    }

    #[test]
    fn single_member_cluster_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let kp = KeyPair::<K>::generate(&mut rng);
        let pk = kp.public();
        let uid = compute_uid::<K>(&[pk], 1).unwrap();
        let params = MaskingParams::standard(2, 1).unwrap();
        assert_eq!(
            ApprovalSession::new(SessionConfig::new(1, params), kp, &[pk], uid, 1, &mut rng).unwrap_err(),
            ApprovalError::ClusterTooSmall(1)
        );
    }

    #[test]
    fn altered_reveal_aborts_naming_sender() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let params = MaskingParams::standard(4, 2).unwrap();
        let mut c = setup::<K>(4, params, &mut rng);
        let mut reveals = reveal_all(&mut c);
        reveals.get_mut(&3).unwrap().masked += 1;
        let l_com = c.l_com.clone();
        assert_eq!(
            c.sessions[0].receive_reveals(&l_com, &reveals),
            Err(ApprovalError::CommitmentMismatch { index: 3 })
        );
        reveals.remove(&2);
        assert_eq!(
            c.sessions[0].receive_reveals(&l_com, &reveals),
            Err(ApprovalError::MissingReveal(2))
        );
    }

    #[test]
    fn fresh_nonces_change_commitments() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let params = MaskingParams::standard(3, 2).unwrap();
        let kps: Vec<KeyPair<K>> = (0..3).map(|_| KeyPair::generate(&mut rng)).collect();
        let pks: Vec<_> = kps.iter().map(|k| k.public()).collect();
        let uid = compute_uid::<K>(&pks, 9).unwrap();
        let mut seen = BTreeSet::new();
        for _ in 0..50 {
            let mut s = ApprovalSession::new(
                SessionConfig::new(1, params),
                kps[0],
                &pks,
                uid,
                42,
                &mut rng,
            )
            .unwrap();
            assert!(seen.insert(s.commit().unwrap()));
        }
    }

    #[test]
    fn toy_average_from_masked_values() {
        // c = (22, 26, 12) under p_mk = 97 gives S = 60
        let p = 97;
        let sum = [22u64, 26, 12].iter().fold(0, |a, c| (a + c) % p);
        let avg = AverageValue::new(sum, 3);
        assert_eq!((avg.sum, avg.count), (60, 3));
        assert_eq!(avg.to_string(), "20.000000");
    }

    #[test]
    fn toy_group_session_roundtrip() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let params = MaskingParams::toy(3, 2).unwrap();
        let mut c = setup::<ToyGroup>(3, params, &mut rng);
        let reveals = reveal_all(&mut c);
        let l_com = c.l_com.clone();
        for s in &mut c.sessions {
            s.receive_reveals(&l_com, &reveals).unwrap();
        }
        let avg = c.sessions[0].average();
        assert_eq!(avg.sum, c.data.iter().map(|d| d % 97).sum::<u64>() % 97);
        let subs: Vec<_> = c.sessions.iter_mut().map(|s| s.sub_approve().unwrap()).collect();
        let appr = aggregate_approval(&subs).unwrap();
        assert!(verify_approval(&c.sessions[1].agg_key().unwrap().key(), &avg, &appr));
    }

    #[test]
    fn exclusion_and_reapproval() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let n = 8;
        let params = MaskingParams::standard(n, 4).unwrap();
        let mut c = setup::<K>(n, params, &mut rng);
        let reveals = reveal_all(&mut c);
        let l_com = c.l_com.clone();
        for s in &mut c.sessions {
            s.receive_reveals(&l_com, &reveals).unwrap();
        }
        let bad = 5usize;
        let helpers: Vec<usize> = (1..=n).filter(|j| *j != bad).take(4).collect();
        let shares: Vec<(usize, u64)> = helpers
            .iter()
            .map(|h| (*h, c.sessions[h - 1].share_for(bad).unwrap()))
            .collect();
        let beta = reconstruct_beta(&shares, &params, bad).unwrap();
        let betas: BTreeMap<usize, u64> = [(bad, beta)].into_iter().collect();
        let mut wrong = betas.clone();
        *wrong.get_mut(&bad).unwrap() += 1;
        assert_eq!(
            c.sessions[0].apply_exclusion(&wrong),
            Err(ApprovalError::BetaMismatch(bad))
        );
        let mut subs = Vec::new();
        for s in c.sessions.iter_mut().filter(|s| s.index() != bad) {
            s.apply_exclusion(&betas).unwrap();
            subs.push(s.sub_approve().unwrap());
        }
        let avg = c.sessions[0].average();
        let expected: u64 = c.data.iter().enumerate().filter(|(i, _)| i + 1 != bad).map(|(_, d)| d).sum();
        assert_eq!((avg.sum, avg.count as usize), (expected, n - 1));
        let appr = aggregate_approval(&subs).unwrap();
        assert!(verify_approval(&c.sessions[0].agg_key().unwrap().key(), &avg, &appr));
        assert_eq!(
            c.sessions[0].apply_exclusion(&BTreeMap::new()),
            Err(ApprovalError::NoncesExhausted)
        );
    }

    #[test]
    fn tampered_share_fails_to_open() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let params = MaskingParams::standard(3, 2).unwrap();
        let mut c = setup::<K>(3, params, &mut rng);
        let mut reveals = reveal_all(&mut c);
        let l_com = c.l_com.clone();
        c.sessions[0].receive_reveals(&l_com, &reveals).unwrap();
        assert!(c.sessions[0].share_for(2).is_ok());
        reveals.get_mut(&2).unwrap().shares[0].ciphertext[0] ^= 1;
        let s = &mut c.sessions[1];
        assert_eq!(
            s.receive_reveals(&l_com, &reveals),
            Err(ApprovalError::CommitmentMismatch { index: 2 })
        );
    }
}
