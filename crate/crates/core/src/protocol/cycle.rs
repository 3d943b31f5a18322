//! One sensing cycle end to end: masking, commit-reveal, approval, pre-check,
//! optional exclusion with re-approval, upload and audit.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use rand_core::CryptoRngCore;

use crate::approval::{
    aggregate_approval, approval_challenge, Approval, ApprovalError, ApprovalSession,
    AverageValue, ClusterApproval, Commitment, RevealMsg, SessionConfig,
};
use crate::group::Group;
use crate::hash::{compute_uid, Uid};
use crate::masking::{agree_pairwise, reconstruct_beta, MaskingParams};
use crate::precheck::{build_trees, locate_invalid, CheckStats};
use crate::schnorr::KeyPair;
use crate::seal::{self, Purpose};

use super::credential::{Credential, TrustedAuthority};
use super::envelope::{open_envelope, seal_envelope, MsgType};
use super::pke::{PkeDecryptor, PkeEncryptor};
use super::report::{
    build_m3, build_report, decode_records, encode_records, establish_session, identify_bad_head,
    CloudServer, CsEvent, Flag, Record, ReportBody, Rsu,
};
use super::ProtocolError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AttackKind {
    /// A member sends a corrupted sub-approval.
    InvalidSubApproval,
    /// The head signs, and pre-checks against, an average of its choosing.
    FakeAverage,
    /// The head uploads an approval under its own key as the cluster key.
    SelfKeyApproval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Attack {
    pub kind: AttackKind,
    /// 1-based member index of the attacker.
    pub actor: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Setup,
    Commit,
    Reveal,
    Average,
    SubApprove,
    Precheck,
    Recovery,
    Reapproval,
    Upload,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Setup => "setup",
            Stage::Commit => "commit",
            Stage::Reveal => "reveal",
            Stage::Average => "average",
            Stage::SubApprove => "sub_approve",
            Stage::Precheck => "precheck",
            Stage::Recovery => "recovery",
            Stage::Reapproval => "reapproval",
            Stage::Upload => "upload",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Endpoint {
    Member(usize),
    Rsu,
    Cs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MessageRecord {
    pub kind: MsgType,
    pub from: Endpoint,
    pub to: Endpoint,
    /// Protocol payload size, without envelope overhead or piggybacked records.
    pub payload: usize,
    /// Bytes on the wire.
    pub wire: usize,
    pub recovery: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CycleStatus {
    Completed,
    Aborted {
        stage: Stage,
        culprit: Option<usize>,
        error: ProtocolError,
    },
}

#[derive(Debug, Clone)]
pub struct CycleOutcome<G: Group> {
    pub cycle: u32,
    pub uid: Option<Uid>,
    pub head: usize,
    pub status: CycleStatus,
    /// Average the approving members computed and signed.
    pub member_average: Option<AverageValue>,
    pub cs_average: Option<AverageValue>,
    pub cs_verified: bool,
    pub exclusions: BTreeSet<usize>,
    pub flags: Vec<Flag<G>>,
    /// IDs opened by the TA for flagged credentials.
    pub bad_heads: Vec<u64>,
    pub checks: CheckStats,
    pub exponentiations: u64,
    pub messages: Vec<MessageRecord>,
}

impl<G: Group> CycleOutcome<G> {
    pub fn completed(&self) -> bool {
        self.status == CycleStatus::Completed
    }

    /// Recovery messages sent or received per member, the head excluded.
    pub fn recovery_messages(&self) -> BTreeMap<usize, u32> {
        let mut out = BTreeMap::new();
        for m in self.messages.iter().filter(|m| m.recovery) {
            for end in [m.from, m.to] {
                if let Endpoint::Member(j) = end {
                    if j != self.head {
                        *out.entry(j).or_insert(0) += 1;
                    }
                }
            }
        }
        out
    }

    /// Payload sizes of all messages of one kind.
    pub fn payload_sizes(&self, kind: MsgType) -> Vec<usize> {
        self.messages
            .iter()
            .filter(|m| m.kind == kind)
            .map(|m| m.payload)
            .collect()
    }

    pub fn wire_sizes(&self, kind: MsgType) -> Vec<usize> {
        self.messages
            .iter()
            .filter(|m| m.kind == kind)
            .map(|m| m.wire)
            .collect()
    }
}

pub struct Vehicle<G: Group> {
    pub id: u64,
    keypair: KeyPair<G>,
    pub credential: Credential<G>,
    pending: Vec<Record>,
    uploaded: BTreeSet<Record>,
}

impl<G: Group> Vehicle<G> {
    pub fn new(id: u64, keypair: KeyPair<G>, credential: Credential<G>) -> Self {
        Vehicle {
            id,
            keypair,
            credential,
            pending: Vec::new(),
            uploaded: BTreeSet::new(),
        }
    }

    pub fn public(&self) -> G::Point {
        self.keypair.public()
    }

    pub fn keypair(&self) -> &KeyPair<G> {
        &self.keypair
    }

    pub fn note_record(&mut self, record: Record) {
        self.pending.push(record);
    }

    /// Records not uploaded before; each is handed out once.
    pub fn submit_records(&mut self) -> Vec<Record> {
        let mut out = Vec::new();
        for r in core::mem::take(&mut self.pending) {
            if self.uploaded.insert(r) {
                out.push(r);
            }
        }
        out
    }
}

pub struct World<G: Group> {
    pub vehicles: Vec<Vehicle<G>>,
    pub ta: TrustedAuthority<G>,
    pub rsu: Rsu,
    pub cs: CloudServer<G>,
    rsu_pke: Box<dyn PkeEncryptor>,
    cs_pke: Box<dyn PkeEncryptor>,
    pub params: MaskingParams,
    pub nonce_batch: usize,
    next_sid: u32,
}

/// Public/secret halves of a PKE key pair.
pub type PkePair = (Box<dyn PkeEncryptor>, Box<dyn PkeDecryptor>);

impl<G: Group> World<G> {
    /// Registers `params.n_v` vehicles with distinct keys and TA credentials.
    pub fn new(
        params: MaskingParams,
        t_aud: u32,
        rsu_pke: PkePair,
        cs_pke: PkePair,
        credential_expiry: u64,
        rng: &mut impl CryptoRngCore,
    ) -> Self {
        let mut ta = TrustedAuthority::new(rng);
        let mut seen = BTreeSet::new();
        let mut vehicles = Vec::with_capacity(params.n_v);
        while vehicles.len() < params.n_v {
            let kp = KeyPair::<G>::generate(rng);
            if !seen.insert(G::point_to_bytes(&kp.public())) {
                continue;
            }
            let id = 1000 + vehicles.len() as u64 + 1;
            let cre = ta.issue_credential(id, credential_expiry, rng);
            vehicles.push(Vehicle::new(id, kp, cre));
        }
        let mut relay_key = [0u8; seal::KEY_LEN];
        rng.fill_bytes(&mut relay_key);
        let cs = CloudServer::new(cs_pke.1, ta.public(), relay_key, t_aud);
        World {
            vehicles,
            ta,
            rsu: Rsu::new(rsu_pke.1, relay_key),
            cs,
            rsu_pke: rsu_pke.0,
            cs_pke: cs_pke.0,
            params,
            nonce_batch: SessionConfig::DEFAULT_NONCE_BATCH,
            next_sid: 1,
        }
    }

    pub fn n_v(&self) -> usize {
        self.vehicles.len()
    }

    pub fn public_keys(&self) -> Vec<G::Point> {
        self.vehicles.iter().map(|v| v.public()).collect()
    }

    pub fn rsu_scheme(&self) -> &'static str {
        self.rsu_pke.scheme()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleInput {
    pub cycle: u32,
    /// Simulated time in seconds; used as `tmp¹` and `tmp³`.
    pub now: u64,
    /// 1-based index of the cluster head.
    pub head: usize,
    pub data: Vec<u64>,
    pub attacks: Vec<Attack>,
}

impl CycleInput {
    /// Whether member `index` runs an attack of `kind` this cycle.
    pub fn acts(&self, kind: AttackKind, index: usize) -> bool {
        self.attacks.iter().any(|a| a.kind == kind && a.actor == index)
    }
}

struct Abort {
    stage: Stage,
    culprit: Option<usize>,
    error: ProtocolError,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, Abort>;
}

impl<T, E: Into<ProtocolError>> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, Abort> {
        self.map_err(|e| {
            let error = e.into();
            let culprit = match &error {
                ProtocolError::Approval(ApprovalError::CommitmentMismatch { index }) => Some(*index),
                ProtocolError::Approval(ApprovalError::BetaMismatch(i)) => Some(*i),
                _ => None,
            };
            Abort {
                stage,
                culprit,
                error,
            }
        })
    }
}

fn put_chunk(out: &mut Vec<u8>, chunk: &[u8]) {
    out.extend_from_slice(&(chunk.len() as u32).to_be_bytes());
    out.extend_from_slice(chunk);
}

fn take_chunk<'a>(bytes: &mut &'a [u8]) -> Result<&'a [u8], ProtocolError> {
    if bytes.len() < 4 {
        return Err(ProtocolError::Framing);
    }
    let len = u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
    if bytes.len() < 4 + len {
        return Err(ProtocolError::Framing);
    }
    let chunk = &bytes[4..4 + len];
    *bytes = &bytes[4 + len..];
    Ok(chunk)
}

fn encode_pairs(pairs: &[(usize, u64)]) -> Vec<u8> {
    let mut out = alloc::vec![pairs.len() as u8];
    for (i, v) in pairs {
        out.push(*i as u8);
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

fn decode_pairs(bytes: &[u8]) -> Result<Vec<(usize, u64)>, ProtocolError> {
    let (&n, rest) = bytes.split_first().ok_or(ProtocolError::Framing)?;
    if rest.len() != n as usize * 9 {
        return Err(ProtocolError::Framing);
    }
    Ok(rest
        .chunks_exact(9)
        .map(|c| (c[0] as usize, u64::from_be_bytes(c[1..].try_into().expect("8 bytes"))))
        .collect())
}

/// Point-to-point traffic between members and the head.
struct Radio<'a, G: Group> {
    head: usize,
    keypairs: Vec<&'a KeyPair<G>>,
    /// `key[i]`: channel key between member `i` and the head.
    keys: BTreeMap<usize, [u8; seal::KEY_LEN]>,
    messages: Vec<MessageRecord>,
}

impl<'a, G: Group> Radio<'a, G> {
    #[allow(clippy::too_many_arguments)]
    fn send(
        &mut self,
        from: usize,
        to: usize,
        kind: MsgType,
        round: u8,
        payload: &[u8],
        accounted: usize,
        recovery: bool,
        rng: &mut impl CryptoRngCore,
    ) -> Result<Vec<u8>, ProtocolError> {
        let member = if from == self.head { to } else { from };
        let key = self.keys[&member];
        let nonce = seal::nonce(
            Purpose::Envelope,
            from as u8,
            to as u8,
            ((kind as u64) << 8) | round as u64,
        );
        let env = seal_envelope(self.keypairs[from - 1], &key, &nonce, kind, payload, rng);
        self.messages.push(MessageRecord {
            kind,
            from: Endpoint::Member(from),
            to: Endpoint::Member(to),
            payload: accounted,
            wire: env.len(),
            recovery,
        });
        let sender = self.keypairs[from - 1].public();
        let (got, body) = open_envelope::<G>(&sender, &key, &nonce, &env)?;
        if got != kind {
            return Err(ProtocolError::UnexpectedType { expected: kind, got });
        }
        Ok(body)
    }
}

/// Approval a head makes alone under its own key.
fn self_key_approval<G: Group>(
    head: &KeyPair<G>,
    avg: &AverageValue,
    rng: &mut impl CryptoRngCore,
) -> ClusterApproval<G> {
    let k = G::random_nonzero_scalar(rng);
    let r = G::mul_base(&k);
    let e = approval_challenge::<G>(&head.public(), &r, avg);
    Approval {
        s: k + *head.secret() * e,
        r,
    }
}

struct ClusterResult<G: Group> {
    approval: ClusterApproval<G>,
    agg_key: G::Point,
    average: AverageValue,
}

struct Run<'a, G: Group> {
    input: &'a CycleInput,
    params: MaskingParams,
    nonce_batch: usize,
    uid: Option<Uid>,
    exclusions: BTreeSet<usize>,
    checks: CheckStats,
    records: Vec<Record>,
    member_average: Option<AverageValue>,
    radio: Radio<'a, G>,
}

impl<'a, G: Group> Run<'a, G> {
    fn cluster(
        &mut self,
        pks: &[G::Point],
        rng: &mut impl CryptoRngCore,
        submit: &mut dyn FnMut(usize) -> Vec<Record>,
    ) -> Result<(ClusterResult<G>, Vec<ApprovalSession<G>>), Abort> {
        let n = pks.len();
        let head = self.input.head;
        if self.input.data.len() != n || !(1..=n).contains(&head) {
            return Err(Abort {
                stage: Stage::Setup,
                culprit: None,
                error: ProtocolError::Framing,
            });
        }
        let uid = compute_uid::<G>(pks, self.input.now).at(Stage::Setup)?;
        self.uid = Some(uid);

        for i in (1..=n).filter(|i| *i != head) {
            let member_side = agree_pairwise(self.radio.keypairs[i - 1], head, &pks[head - 1], &uid).at(Stage::Setup)?;
            let head_side = agree_pairwise(self.radio.keypairs[head - 1], i, &pks[i - 1], &uid).at(Stage::Setup)?;
            debug_assert_eq!(member_side.key(), head_side.key());
            self.radio.keys.insert(i, *head_side.key());
        }

        let mut sessions = Vec::with_capacity(n);
        for i in 1..=n {
            let config = SessionConfig {
                index: i,
                params: self.params,
                nonce_batch: self.nonce_batch,
            };
            let kp = *self.radio.keypairs[i - 1];
            sessions.push(ApprovalSession::new(config, kp, pks, uid, self.input.data[i - 1], rng).at(Stage::Setup)?);
        }

        // commitments to the head, L_com back to every member
        let mut l_com = Vec::with_capacity(n);
        for i in 1..=n {
            let com = sessions[i - 1].commit().at(Stage::Commit)?;
            if i != head {
                let got = self
                    .radio
                    .send(i, head, MsgType::Commitment, 0, &com.0, com.0.len(), false, rng)
                    .at(Stage::Commit)?;
                l_com.push(Commitment(got.as_slice().try_into().map_err(|_| ProtocolError::Framing).at(Stage::Commit)?));
            } else {
                l_com.push(com);
            }
        }
        let l_com_bytes: Vec<u8> = l_com.iter().flat_map(|c| c.0).collect();

        let mut reveals: BTreeMap<usize, RevealMsg<G>> = BTreeMap::new();
        let width = self.params.share_width();
        for i in 1..=n {
            let view = if i == head {
                l_com.clone()
            } else {
                let got = self
                    .radio
                    .send(head, i, MsgType::CommitList, 0, &l_com_bytes, l_com_bytes.len(), false, rng)
                    .at(Stage::Commit)?;
                got.chunks_exact(32)
                    .map(|c| Commitment(c.try_into().expect("32 bytes")))
                    .collect()
            };
            let m = sessions[i - 1].reveal(&view).at(Stage::Reveal)?;
            let records = submit(i);
            if i == head {
                self.records.extend(records);
                reveals.insert(i, m);
                continue;
            }
            let encoded = m.encode();
            let mut payload = Vec::new();
            put_chunk(&mut payload, &encoded);
            payload.extend_from_slice(&encode_records(&records));
            let got = self
                .radio
                .send(i, head, MsgType::Reveal, 0, &payload, encoded.len(), false, rng)
                .at(Stage::Reveal)?;
            let mut rest = got.as_slice();
            let chunk = take_chunk(&mut rest).at(Stage::Reveal)?;
            reveals.insert(i, RevealMsg::decode(chunk, width).at(Stage::Reveal)?);
            self.records.extend(decode_records(rest).at(Stage::Reveal)?);
        }

        let mut bundle = Vec::new();
        for m in reveals.values() {
            put_chunk(&mut bundle, &m.encode());
        }
        for i in 1..=n {
            let view = if i == head {
                reveals.clone()
            } else {
                let got = self
                    .radio
                    .send(head, i, MsgType::RevealBundle, 0, &bundle, bundle.len(), false, rng)
                    .at(Stage::Reveal)?;
                let mut rest = got.as_slice();
                let mut view = BTreeMap::new();
                for j in 1..=n {
                    let chunk = take_chunk(&mut rest).at(Stage::Reveal)?;
                    view.insert(j, RevealMsg::decode(chunk, width).at(Stage::Reveal)?);
                }
                view
            };
            sessions[i - 1].receive_reveals(&l_com, &view).at(Stage::Average)?;
        }

        let mut subs: BTreeMap<usize, Approval<G>> = BTreeMap::new();
        for round in 0..2u8 {
            let active: Vec<usize> = sessions[head - 1].active().iter().copied().collect();
            let true_avg = sessions[head - 1].average();
            let fake_avg = AverageValue {
                sum: true_avg.sum + 10 * true_avg.count as u64,
                count: true_avg.count,
            };
            let head_claims = if self.input.acts(AttackKind::FakeAverage, head) {
                fake_avg
            } else {
                true_avg
            };

            for &i in &active {
                let session = &mut sessions[i - 1];
                let mut sub = if i == head && head_claims != true_avg {
                    session.sub_approve_claimed(&head_claims)
                } else {
                    session.sub_approve()
                }
                .at(Stage::SubApprove)?;
                if self.input.acts(AttackKind::InvalidSubApproval, i) {
                    sub.s += G::random_nonzero_scalar(rng);
                }
                if i != head {
                    let bytes = sub.to_bytes();
                    let got = self
                        .radio
                        .send(i, head, MsgType::SubApproval, round, &bytes, bytes.len(), false, rng)
                        .at(Stage::SubApprove)?;
                    sub = Approval::from_bytes(&got).at(Stage::SubApprove)?;
                }
                subs.insert(i, sub);
            }

            let head_session = &sessions[head - 1];
            let agg = head_session.agg_key().expect("ready").clone();
            let responses: Vec<G::Scalar> = active.iter().map(|i| subs[i].s).collect();
            let nonces: Vec<G::Point> = active
                .iter()
                .map(|i| head_session.member_nonce(*i).expect("revealed"))
                .collect();
            let tree = build_trees(&agg, &responses, &nonces).at(Stage::Precheck)?;
            let (bad_pos, stats) = locate_invalid(&tree, &head_claims);
            self.checks.merge(&stats);
            if bad_pos.is_empty() {
                let approval = aggregate_approval(&active.iter().map(|i| subs[i]).collect::<Vec<_>>())
                    .at(Stage::Precheck)?;
                self.member_average = Some(sessions[head - 1].average());
                return Ok((
                    ClusterResult {
                        approval,
                        agg_key: agg.key(),
                        average: head_claims,
                    },
                    sessions,
                ));
            }
            if round == 1 {
                return Err(Abort {
                    stage: Stage::Reapproval,
                    culprit: None,
                    error: ProtocolError::NoValidApproval,
                });
            }
            let bad: Vec<usize> = bad_pos.iter().map(|p| active[*p]).collect();
            let good: Vec<usize> = active.iter().copied().filter(|i| !bad.contains(i)).collect();
            let needed = self.params.t_sm.max(2);
            if good.len() < needed || !good.contains(&head) {
                return Err(Abort {
                    stage: Stage::Recovery,
                    culprit: if bad.len() == 1 { Some(bad[0]) } else { None },
                    error: ProtocolError::InsufficientHelpers {
                        good: good.len(),
                        needed,
                    },
                });
            }
            self.exclusions.extend(bad.iter().copied());
            let helpers: Vec<usize> = good.iter().copied().take(self.params.t_sm).collect();

            let mut notice = alloc::vec![bad.len() as u8];
            notice.extend(bad.iter().map(|b| *b as u8));
            notice.push(helpers.len() as u8);
            notice.extend(helpers.iter().map(|h| *h as u8));
            for &i in active.iter().filter(|i| **i != head) {
                self.radio
                    .send(head, i, MsgType::ExclusionNotice, 0, &notice, notice.len(), true, rng)
                    .at(Stage::Recovery)?;
            }

            let mut shares: BTreeMap<usize, Vec<(usize, u64)>> = BTreeMap::new();
            for &h in &helpers {
                let mut released = Vec::new();
                for &b in &bad {
                    released.push((b, sessions[h - 1].share_for(b).at(Stage::Recovery)?));
                }
                if h != head {
                    let bytes = encode_pairs(&released);
                    let got = self
                        .radio
                        .send(h, head, MsgType::ShareRelease, 0, &bytes, bytes.len(), true, rng)
                        .at(Stage::Recovery)?;
                    released = decode_pairs(&got).at(Stage::Recovery)?;
                }
                for (b, y) in released {
                    shares.entry(b).or_default().push((h, y));
                }
            }
            let mut betas = BTreeMap::new();
            for &b in &bad {
                let beta = reconstruct_beta(&shares[&b], &self.params, b).at(Stage::Recovery)?;
                betas.insert(b, beta);
            }
            let beta_bytes = encode_pairs(&betas.iter().map(|(b, v)| (*b, *v)).collect::<Vec<_>>());
            for &i in &good {
                let view = if i == head {
                    betas.clone()
                } else {
                    let got = self
                        .radio
                        .send(head, i, MsgType::BetaList, 0, &beta_bytes, beta_bytes.len(), true, rng)
                        .at(Stage::Recovery)?;
                    decode_pairs(&got).at(Stage::Recovery)?.into_iter().collect()
                };
                sessions[i - 1].apply_exclusion(&view).at(Stage::Recovery)?;
            }
        }
        unreachable!("second round returns")
    }
}

/// Runs one cycle over every vehicle in `world`.
pub fn run_sensing_cycle<G: Group>(
    world: &mut World<G>,
    input: &CycleInput,
    rng: &mut impl CryptoRngCore,
) -> CycleOutcome<G> {
    let pks = world.public_keys();
    let head = input.head;
    let vehicles = &mut world.vehicles;
    let keypairs: Vec<KeyPair<G>> = vehicles.iter().map(|v| v.keypair).collect();
    let mut run = Run {
        input,
        params: world.params,
        nonce_batch: world.nonce_batch,
        uid: None,
        exclusions: BTreeSet::new(),
        checks: CheckStats::default(),
        records: Vec::new(),
        member_average: None,
        radio: Radio {
            head,
            keypairs: keypairs.iter().collect(),
            keys: BTreeMap::new(),
            messages: Vec::new(),
        },
    };
    let mut submit = |i: usize| vehicles[i - 1].submit_records();
    let result = run.cluster(&pks, rng, &mut submit);

    let mut outcome = CycleOutcome {
        cycle: input.cycle,
        uid: run.uid,
        head,
        status: CycleStatus::Completed,
        member_average: run.member_average,
        cs_average: None,
        cs_verified: false,
        exclusions: run.exclusions.clone(),
        flags: Vec::new(),
        bad_heads: Vec::new(),
        checks: run.checks,
        exponentiations: run.checks.exponentiations,
        messages: core::mem::take(&mut run.radio.messages),
    };
    let records = core::mem::take(&mut run.records);
    drop(run);

    let cluster = match result {
        Ok((cluster, sessions)) => {
            let uid = outcome.uid.expect("set before approval");
            let self_key = input.acts(AttackKind::SelfKeyApproval, head);
            for s in sessions.iter().filter(|s| !outcome.exclusions.contains(&s.index())) {
                let key = if self_key && s.index() == head {
                    pks[head - 1]
                } else {
                    s.agg_key().expect("ready").key()
                };
                world.vehicles[s.index() - 1].note_record(Record::new::<G>(&key, uid));
            }
            Some(cluster)
        }
        Err(abort) => {
            outcome.status = CycleStatus::Aborted {
                stage: abort.stage,
                culprit: abort.culprit,
                error: abort.error,
            };
            None
        }
    };

    if cluster.is_none() && records.is_empty() {
        return outcome;
    }
    if let Err(error) = upload(world, input, cluster, &records, &mut outcome, rng) {
        if outcome.completed() {
            outcome.status = CycleStatus::Aborted {
                stage: Stage::Upload,
                culprit: None,
                error,
            };
        }
    }
    outcome
}

fn upload<G: Group>(
    world: &mut World<G>,
    input: &CycleInput,
    cluster: Option<ClusterResult<G>>,
    records: &[Record],
    outcome: &mut CycleOutcome<G>,
    mut rng: &mut impl CryptoRngCore,
) -> Result<(), ProtocolError> {
    let head = input.head;
    let now = input.now;
    let sid = world.next_sid;
    world.next_sid += 1;
    let (keys, key_msg) = establish_session(world.rsu_pke.as_ref(), sid, &mut rng)?;
    outcome.messages.push(MessageRecord {
        kind: MsgType::SessionKeys,
        from: Endpoint::Member(head),
        to: Endpoint::Rsu,
        payload: key_msg.len(),
        wire: key_msg.len(),
        recovery: false,
    });
    world.rsu.accept_session(&key_msg)?;

    let relay = |world: &mut World<G>, outcome: &mut CycleOutcome<G>, kind: MsgType, msg: Vec<u8>| {
        outcome.messages.push(MessageRecord {
            kind,
            from: Endpoint::Member(head),
            to: Endpoint::Rsu,
            payload: msg.len(),
            wire: msg.len(),
            recovery: false,
        });
        let relayed = world.rsu.relay(&msg)?;
        outcome.messages.push(MessageRecord {
            kind: MsgType::Relay,
            from: Endpoint::Rsu,
            to: Endpoint::Cs,
            payload: relayed.len(),
            wire: relayed.len(),
            recovery: false,
        });
        world.cs.receive(&relayed, now)
    };

    if let Some(cluster) = cluster {
        let head_kp = world.vehicles[head - 1].keypair;
        let (approval, agg_key) = if input.acts(AttackKind::SelfKeyApproval, head) {
            (self_key_approval(&head_kp, &cluster.average, rng), head_kp.public())
        } else {
            (cluster.approval, cluster.agg_key)
        };
        let body = ReportBody {
            uid: outcome.uid.expect("set"),
            approval,
            encrypted_avg: world.cs_pke.encrypt(&cluster.average.to_bytes(), &mut rng)?,
            agg_key,
            credential: world.vehicles[head - 1].credential,
            tmp3: now,
        };
        let m2 = build_report(&keys, sid, &body);
        if let CsEvent::Report(report) = relay(world, outcome, MsgType::Report, m2)? {
            outcome.exponentiations += 2;
            outcome.cs_average = Some(report.avg);
            outcome.cs_verified = report.verified;
            if let Some(flag) = report.flag {
                outcome.flags.push(flag);
            }
        }
    }

    if !records.is_empty() {
        let m3 = build_m3(&keys, sid, records);
        if let CsEvent::Audit(flags) = relay(world, outcome, MsgType::Records, m3)? {
            outcome.flags.extend(flags);
        }
    }
    for flag in &outcome.flags {
        if let Ok(id) = identify_bad_head(&mut world.ta, flag) {
            outcome.bad_heads.push(id);
        }
    }
    Ok(())
}
