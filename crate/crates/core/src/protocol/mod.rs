//! Entities and wire formats: vehicles, cluster head, RSU, cloud server and TA.

use crate::approval::ApprovalError;
use crate::hash::HashError;
use crate::masking::MaskingError;
use crate::precheck::PrecheckError;

pub mod credential;
pub mod cycle;
pub mod envelope;
pub mod pke;
pub mod report;

pub use credential::{verify_credential, Credential, CredentialError, TrustedAuthority};
pub use cycle::{
    run_sensing_cycle, Attack, AttackKind, CycleInput, CycleOutcome, CycleStatus, Endpoint,
    MessageRecord, Stage, Vehicle, World,
};
pub use envelope::{open_envelope, seal_envelope, MsgType};
pub use pke::{HybridPublicKey, HybridSecretKey, PkeDecryptor, PkeEncryptor, PkeError};
pub use report::{
    build_m3, build_report, establish_session, identify_bad_head, AuditState, CloudServer,
    CsEvent, Flag, FlagReason, Record, ReportBody, ReportOutcome, Rsu, SessionKeys,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("truncated or malformed frame")]
    Framing,
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("expected {expected:?}, got {got:?}")]
    UnexpectedType { expected: MsgType, got: MsgType },
    #[error("authenticated decryption failed")]
    Decryption,
    #[error("envelope signature does not verify")]
    BadSignature,
    #[error(transparent)]
    Pke(#[from] PkeError),
    #[error("timestamp {tmp} outside the freshness window at {now}")]
    Stale { tmp: u64, now: u64 },
    #[error("event identifier already reported")]
    DuplicateUid,
    #[error("relayed frame counter did not increase")]
    Replay,
    #[error("credential expired or not signed by the TA")]
    CredentialInvalid,
    #[error(transparent)]
    Credential(#[from] CredentialError),
    #[error("record list authentication code mismatch")]
    Hmac,
    #[error("no session keys established")]
    NoSession,
    #[error("only {good} valid members remain, {needed} needed to recover")]
    InsufficientHelpers { good: usize, needed: usize },
    #[error("approval still fails after exclusion")]
    NoValidApproval,
    #[error(transparent)]
    Approval(#[from] ApprovalError),
    #[error(transparent)]
    Masking(#[from] MaskingError),
    #[error(transparent)]
    Precheck(#[from] PrecheckError),
    #[error(transparent)]
    Hash(#[from] HashError),
}
