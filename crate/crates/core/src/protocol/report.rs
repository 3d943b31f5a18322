//! Upload path: session keys, the report `m²`, record lists `m³`, RSU relay and CS audit.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use hmac::{Hmac, Mac};
use rand_core::CryptoRngCore;
use sha2::Sha256;

use crate::approval::{verify_approval, AverageValue, ClusterApproval};
use crate::group::Group;
use crate::hash::{domain_hash, vid_digest, Digest, DomainTag, Uid};
use crate::seal::{self, Purpose, KEY_LEN};

use super::credential::{verify_credential, Credential, CredentialError, TrustedAuthority};
use super::envelope::{frame, unframe, MsgType};
use super::pke::{PkeDecryptor, PkeEncryptor};
use super::ProtocolError;

type HmacSha256 = Hmac<Sha256>;

pub const DEFAULT_FRESHNESS: u64 = 120;
pub const DEFAULT_T_AUD: u32 = 1;

/// `key₁` encrypts uploads, `key₂` authenticates record lists.
#[derive(Clone, PartialEq, Eq)]
pub struct SessionKeys {
    pub key1: [u8; KEY_LEN],
    pub key2: [u8; KEY_LEN],
}

impl core::fmt::Debug for SessionKeys {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str("SessionKeys(..)")
    }
}

/// Fresh keys and the frame `sid ‖ E_pkr(key₁ ‖ key₂)` for the RSU.
pub fn establish_session(
    rsu: &dyn PkeEncryptor,
    sid: u32,
    rng: &mut dyn CryptoRngCore,
) -> Result<(SessionKeys, Vec<u8>), ProtocolError> {
    let mut keys = SessionKeys {
        key1: [0; KEY_LEN],
        key2: [0; KEY_LEN],
    };
    rng.fill_bytes(&mut keys.key1);
    rng.fill_bytes(&mut keys.key2);
    let mut plain = keys.key1.to_vec();
    plain.extend_from_slice(&keys.key2);
    let mut body = sid.to_be_bytes().to_vec();
    body.extend_from_slice(&rsu.encrypt(&plain, rng)?);
    Ok((keys, frame(MsgType::SessionKeys, &body)))
}

/// `(Hash_vid(pk~), UID)` kept by a member after each event it approved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Record {
    pub vid: Digest,
    pub uid: Uid,
}

impl Record {
    pub const LEN: usize = 64;

    pub fn new<G: Group>(agg_key: &G::Point, uid: Uid) -> Self {
        Record {
            vid: vid_digest::<G>(agg_key),
            uid,
        }
    }
}

pub fn encode_records(records: &[Record]) -> Vec<u8> {
    let mut out = Vec::with_capacity(2 + records.len() * Record::LEN);
    out.extend_from_slice(&(records.len() as u16).to_be_bytes());
    for r in records {
        out.extend_from_slice(&r.vid);
        out.extend_from_slice(&r.uid.0);
    }
    out
}

pub fn decode_records(bytes: &[u8]) -> Result<Vec<Record>, ProtocolError> {
    if bytes.len() < 2 {
        return Err(ProtocolError::Framing);
    }
    let n = u16::from_be_bytes([bytes[0], bytes[1]]) as usize;
    let body = &bytes[2..];
    if body.len() != n * Record::LEN {
        return Err(ProtocolError::Framing);
    }
    Ok(body
        .chunks_exact(Record::LEN)
        .map(|c| Record {
            vid: c[..32].try_into().expect("32 bytes"),
            uid: Uid(c[32..].try_into().expect("32 bytes")),
        })
        .collect())
}

/// Plaintext of `m²`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportBody<G: Group> {
    pub uid: Uid,
    pub approval: ClusterApproval<G>,
    /// `E_pks(avg)`.
    pub encrypted_avg: Vec<u8>,
    pub agg_key: G::Point,
    pub credential: Credential<G>,
    pub tmp3: u64,
}

impl<G: Group> ReportBody<G> {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.uid.0.to_vec();
        out.extend_from_slice(&self.approval.to_bytes());
        out.extend_from_slice(&(self.encrypted_avg.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.encrypted_avg);
        out.extend_from_slice(G::point_to_bytes(&self.agg_key).as_ref());
        out.extend_from_slice(&self.credential.to_bytes());
        out.extend_from_slice(&self.tmp3.to_be_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ProtocolError> {
        let appr_len = ClusterApproval::<G>::LEN;
        let fixed = 32 + appr_len + 2;
        if bytes.len() < fixed {
            return Err(ProtocolError::Framing);
        }
        let uid = Uid(bytes[..32].try_into().expect("32 bytes"));
        let approval = ClusterApproval::<G>::from_bytes(&bytes[32..32 + appr_len])
            .map_err(|_| ProtocolError::Framing)?;
        let ct_len = u16::from_be_bytes([bytes[fixed - 2], bytes[fixed - 1]]) as usize;
        let rest = &bytes[fixed..];
        if rest.len() != ct_len + G::POINT_LEN + Credential::<G>::LEN + 8 {
            return Err(ProtocolError::Framing);
        }
        let (encrypted_avg, rest) = rest.split_at(ct_len);
        let (key, rest) = rest.split_at(G::POINT_LEN);
        let (cre, tmp) = rest.split_at(Credential::<G>::LEN);
        Ok(ReportBody {
            uid,
            approval,
            encrypted_avg: encrypted_avg.to_vec(),
            agg_key: G::point_from_bytes(key).map_err(|_| ProtocolError::Framing)?,
            credential: Credential::from_bytes(cre)?,
            tmp3: u64::from_be_bytes(tmp.try_into().expect("8 bytes")),
        })
    }
}

fn upload_nonce(tag: MsgType, sid: u32) -> [u8; 12] {
    let purpose = if tag == MsgType::Report {
        Purpose::Report
    } else {
        Purpose::Records
    };
    seal::nonce(purpose, 0, 0, sid as u64)
}

fn sealed_upload(tag: MsgType, key: &[u8; KEY_LEN], sid: u32, plain: &[u8]) -> Vec<u8> {
    let mut body = sid.to_be_bytes().to_vec();
    body.extend_from_slice(&seal::seal(key, &upload_nonce(tag, sid), &[tag as u8], plain));
    frame(tag, &body)
}

/// `m²`: the report body sealed under `key₁`.
pub fn build_report<G: Group>(keys: &SessionKeys, sid: u32, body: &ReportBody<G>) -> Vec<u8> {
    sealed_upload(MsgType::Report, &keys.key1, sid, &body.encode())
}

fn record_mac(key2: &[u8; KEY_LEN], list: &[u8]) -> [u8; 32] {
    let mut mac = HmacSha256::new_from_slice(key2).expect("any key length");
    mac.update(list);
    mac.finalize().into_bytes().into()
}

/// `m³`: `L_rc ‖ HMAC_{key₂}(L_rc)` sealed under `key₁`.
pub fn build_m3(keys: &SessionKeys, sid: u32, records: &[Record]) -> Vec<u8> {
    let mut plain = encode_records(records);
    let mac = record_mac(&keys.key2, &plain);
    plain.extend_from_slice(&mac);
    sealed_upload(MsgType::Records, &keys.key1, sid, &plain)
}

fn relay_nonce(counter: u64) -> [u8; 12] {
    seal::nonce(Purpose::Relay, 0, 0, counter)
}

/// Roadside unit: holds session keys and forwards uploads to the CS.
pub struct Rsu {
    decryptor: Box<dyn PkeDecryptor>,
    relay_key: [u8; KEY_LEN],
    sessions: BTreeMap<u32, SessionKeys>,
    counter: u64,
}

impl Rsu {
    pub fn new(decryptor: Box<dyn PkeDecryptor>, relay_key: [u8; KEY_LEN]) -> Self {
        Rsu {
            decryptor,
            relay_key,
            sessions: BTreeMap::new(),
            counter: 0,
        }
    }

    pub fn accept_session(&mut self, bytes: &[u8]) -> Result<u32, ProtocolError> {
        let (tag, body) = unframe(bytes)?;
        if tag != MsgType::SessionKeys {
            return Err(ProtocolError::UnexpectedType {
                expected: MsgType::SessionKeys,
                got: tag,
            });
        }
        if body.len() < 4 {
            return Err(ProtocolError::Framing);
        }
        let sid = u32::from_be_bytes(body[..4].try_into().expect("4 bytes"));
        let plain = self.decryptor.decrypt(&body[4..])?;
        if plain.len() != 2 * KEY_LEN {
            return Err(ProtocolError::Framing);
        }
        let keys = SessionKeys {
            key1: plain[..KEY_LEN].try_into().expect("32 bytes"),
            key2: plain[KEY_LEN..].try_into().expect("32 bytes"),
        };
        self.sessions.insert(sid, keys);
        Ok(sid)
    }

    pub fn session(&self, sid: u32) -> Option<&SessionKeys> {
        self.sessions.get(&sid)
    }

    /// Opens `m²` or `m³` and re-seals its content for the CS.
    pub fn relay(&mut self, bytes: &[u8]) -> Result<Vec<u8>, ProtocolError> {
        let (tag, body) = unframe(bytes)?;
        if !matches!(tag, MsgType::Report | MsgType::Records) {
            return Err(ProtocolError::UnexpectedType {
                expected: MsgType::Report,
                got: tag,
            });
        }
        if body.len() < 4 {
            return Err(ProtocolError::Framing);
        }
        let sid = u32::from_be_bytes(body[..4].try_into().expect("4 bytes"));
        let keys = self.sessions.get(&sid).ok_or(ProtocolError::NoSession)?;
        let plain = seal::open(&keys.key1, &upload_nonce(tag, sid), &[tag as u8], &body[4..])
            .map_err(|_| ProtocolError::Decryption)?;
        let mut inner = alloc::vec![tag as u8];
        if tag == MsgType::Records {
            inner.extend_from_slice(&keys.key2);
        }
        inner.extend_from_slice(&plain);
        self.counter += 1;
        let mut out = self.counter.to_be_bytes().to_vec();
        out.extend_from_slice(&seal::seal(
            &self.relay_key,
            &relay_nonce(self.counter),
            &self.counter.to_be_bytes(),
            &inner,
        ));
        Ok(frame(MsgType::Relay, &out))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FlagReason {
    /// The uploaded approval failed verification.
    InvalidApproval,
    /// Member records disagree with the reported cluster key.
    KeyMismatch,
}

/// Liability raised against the credential that uploaded `uid`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flag<G: Group> {
    pub uid: Uid,
    pub credential: Credential<G>,
    pub reason: FlagReason,
}

#[derive(Debug, Clone)]
pub struct AuditState<G: Group> {
    pub t_aud: u32,
    expected: BTreeMap<Uid, (Digest, Credential<G>)>,
    mismatches: BTreeMap<Uid, u32>,
    flagged: BTreeSet<Uid>,
}

impl<G: Group> AuditState<G> {
    pub fn new(t_aud: u32) -> Self {
        AuditState {
            t_aud: t_aud.max(1),
            expected: BTreeMap::new(),
            mismatches: BTreeMap::new(),
            flagged: BTreeSet::new(),
        }
    }

    /// Records the first-seen cluster key of an event.
    pub fn expect(&mut self, uid: Uid, vid: Digest, credential: Credential<G>) {
        self.expected.entry(uid).or_insert((vid, credential));
    }

    pub fn mismatches(&self, uid: &Uid) -> u32 {
        self.mismatches.get(uid).copied().unwrap_or(0)
    }

    pub fn is_flagged(&self, uid: &Uid) -> bool {
        self.flagged.contains(uid)
    }

    pub fn audit(&mut self, records: &[Record]) -> Vec<Flag<G>> {
        let mut flags = Vec::new();
        for r in records {
            let Some((vid, cre)) = self.expected.get(&r.uid) else {
                continue;
            };
            if r.vid == *vid {
                continue;
            }
            let count = self.mismatches.entry(r.uid).or_insert(0);
            *count += 1;
            if *count >= self.t_aud && self.flagged.insert(r.uid) {
                flags.push(Flag {
                    uid: r.uid,
                    credential: *cre,
                    reason: FlagReason::KeyMismatch,
                });
            }
        }
        flags
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportOutcome<G: Group> {
    pub uid: Uid,
    pub avg: AverageValue,
    pub verified: bool,
    pub flag: Option<Flag<G>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CsEvent<G: Group> {
    Report(ReportOutcome<G>),
    Audit(Vec<Flag<G>>),
}

/// Cloud server: verifies reports and audits cluster keys.
pub struct CloudServer<G: Group> {
    decryptor: Box<dyn PkeDecryptor>,
    pka: G::Point,
    relay_key: [u8; KEY_LEN],
    last_relay: u64,
    pub freshness: u64,
    seen: BTreeSet<Uid>,
    seen_lists: BTreeSet<Digest>,
    pub audit: AuditState<G>,
    inbox: Vec<Vec<u8>>,
}

impl<G: Group> CloudServer<G> {
    pub fn new(decryptor: Box<dyn PkeDecryptor>, pka: G::Point, relay_key: [u8; KEY_LEN], t_aud: u32) -> Self {
        CloudServer {
            decryptor,
            pka,
            relay_key,
            last_relay: 0,
            freshness: DEFAULT_FRESHNESS,
            seen: BTreeSet::new(),
            seen_lists: BTreeSet::new(),
            audit: AuditState::new(t_aud),
            inbox: Vec::new(),
        }
    }

    /// Every plaintext the CS has seen, in arrival order.
    pub fn inbox(&self) -> &[Vec<u8>] {
        &self.inbox
    }

    pub fn receive(&mut self, bytes: &[u8], now: u64) -> Result<CsEvent<G>, ProtocolError> {
        let (tag, body) = unframe(bytes)?;
        if tag != MsgType::Relay {
            return Err(ProtocolError::UnexpectedType {
                expected: MsgType::Relay,
                got: tag,
            });
        }
        if body.len() < 8 {
            return Err(ProtocolError::Framing);
        }
        let counter = u64::from_be_bytes(body[..8].try_into().expect("8 bytes"));
        let inner = seal::open(&self.relay_key, &relay_nonce(counter), &body[..8], &body[8..])
            .map_err(|_| ProtocolError::Decryption)?;
        if counter <= self.last_relay {
            return Err(ProtocolError::Replay);
        }
        self.last_relay = counter;
        self.inbox.push(inner.clone());
        let (&kind, payload) = inner.split_first().ok_or(ProtocolError::Framing)?;
        match MsgType::try_from(kind)? {
            MsgType::Report => self.open_report(payload, now).map(CsEvent::Report),
            MsgType::Records => self.receive_records(payload).map(CsEvent::Audit),
            other => Err(ProtocolError::UnexpectedType {
                expected: MsgType::Report,
                got: other,
            }),
        }
    }

    fn open_report(&mut self, payload: &[u8], now: u64) -> Result<ReportOutcome<G>, ProtocolError> {
        let body = ReportBody::<G>::decode(payload)?;
        if body.tmp3.saturating_add(self.freshness) < now || body.tmp3 > now.saturating_add(self.freshness) {
            return Err(ProtocolError::Stale { tmp: body.tmp3, now });
        }
        if self.seen.contains(&body.uid) {
            return Err(ProtocolError::DuplicateUid);
        }
        if !verify_credential(&self.pka, &body.credential, now) {
            return Err(ProtocolError::CredentialInvalid);
        }
        let avg = AverageValue::from_bytes(&self.decryptor.decrypt(&body.encrypted_avg)?)
            .map_err(|_| ProtocolError::Framing)?;
        self.seen.insert(body.uid);
        let verified = verify_approval(&body.agg_key, &avg, &body.approval);
        let flag = if verified {
            self.audit
                .expect(body.uid, vid_digest::<G>(&body.agg_key), body.credential);
            None
        } else {
            Some(Flag {
                uid: body.uid,
                credential: body.credential,
                reason: FlagReason::InvalidApproval,
            })
        };
        Ok(ReportOutcome {
            uid: body.uid,
            avg,
            verified,
            flag,
        })
    }

    fn receive_records(&mut self, payload: &[u8]) -> Result<Vec<Flag<G>>, ProtocolError> {
        if payload.len() < KEY_LEN + 32 {
            return Err(ProtocolError::Framing);
        }
        let (key2, rest) = payload.split_at(KEY_LEN);
        let (list, mac) = rest.split_at(rest.len() - 32);
        let key2: [u8; KEY_LEN] = key2.try_into().expect("32 bytes");
        if record_mac(&key2, list).as_slice() != mac {
            return Err(ProtocolError::Hmac);
        }
        if !self.seen_lists.insert(domain_hash(DomainTag::Vid, &[list, mac])) {
            return Ok(Vec::new());
        }
        Ok(self.audit.audit(&decode_records(list)?))
    }
}

/// TA opening of a flagged credential.
pub fn identify_bad_head<G: Group>(ta: &mut TrustedAuthority<G>, flag: &Flag<G>) -> Result<u64, CredentialError> {
    ta.open(&flag.credential)
}
