//! Multi-cycle scenario runs.

use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sada_core::approval::AverageValue;
use sada_core::hash::Uid;
use sada_core::protocol::cycle::{CycleOutcome, PkePair};
use sada_core::protocol::{
    run_sensing_cycle, Attack, CycleInput, CycleStatus, FlagReason, HybridSecretKey, Stage, World,
};
use sada_core::{Group, Secp256k1, ToyGroup};
use serde::Serialize;

use crate::config::{AttackName, AttackSpec, ConfigError, GroupName, ScenarioConfig};
use crate::rsa_pke;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AverageReport {
    pub sum: u64,
    pub count: u16,
    pub value: String,
}

impl From<AverageValue> for AverageReport {
    fn from(a: AverageValue) -> Self {
        AverageReport {
            sum: a.sum,
            count: a.count,
            value: a.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AbortReport {
    pub stage: &'static str,
    pub culprit: Option<usize>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlagReport {
    /// Cycle whose upload the flag refers to, if it was run in this scenario.
    pub event_cycle: Option<u32>,
    pub uid: String,
    pub reason: &'static str,
    pub credential: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MessageBytes {
    pub count: u64,
    pub payload: u64,
    pub wire: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CheckReport {
    pub verifications: u64,
    pub exponentiations: u64,
    pub additions: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CycleReport {
    pub cycle: u32,
    pub head: usize,
    pub attack: Option<AttackSpec>,
    pub completed: bool,
    pub abort: Option<AbortReport>,
    /// Plaintext mean over the members left after exclusion.
    pub expected_average: Option<AverageReport>,
    pub final_average: Option<AverageReport>,
    pub cs_verified: bool,
    pub exclusions: Vec<usize>,
    pub flags: Vec<FlagReport>,
    pub bad_heads: Vec<u64>,
    pub messages: BTreeMap<&'static str, MessageBytes>,
    pub max_recovery_messages_per_member: u32,
    pub checks: CheckReport,
    pub exponentiations: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AttackReport {
    pub kind: AttackName,
    pub cycle: u32,
    pub actor: usize,
    pub expected: bool,
    pub detected: bool,
    pub mechanism: &'static str,
    pub detected_in_cycle: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Totals {
    pub cycles: u32,
    pub completed: u32,
    pub aborted: u32,
    pub flags: u32,
    pub exclusions: u32,
    pub verifications: u64,
    pub exponentiations: u64,
    pub wire_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunVerdict {
    Clean,
    AttacksDetected,
    Unexpected,
}

impl RunVerdict {
    pub fn exit_code(self) -> i32 {
        match self {
            RunVerdict::Clean => 0,
            RunVerdict::AttacksDetected => 2,
            RunVerdict::Unexpected => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub config: ScenarioConfig,
    pub group: GroupName,
    pub pke: &'static str,
    pub cycles: Vec<CycleReport>,
    pub attacks: Vec<AttackReport>,
    pub totals: Totals,
    pub unexpected: Vec<String>,
    pub verdict: RunVerdict,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Runs every cycle of `config` under its own seed.
pub fn run(config: &ScenarioConfig) -> Result<MetricsReport, SimError> {
    config.validate()?;
    Ok(match config.group {
        GroupName::Secp256k1 => run_in::<Secp256k1>(config),
        GroupName::Toy => run_in::<ToyGroup>(config),
    })
}

pub(crate) fn pke_pair<G: Group>(rsa: bool, rng: &mut ChaCha20Rng) -> PkePair {
    if rsa {
        let (pk, sk) = rsa_pke::generate(rng);
        (Box::new(pk), Box::new(sk))
    } else {
        let sk = HybridSecretKey::<G>::generate(rng);
        (Box::new(sk.public()), Box::new(sk))
    }
}

pub(crate) fn build_world<G: Group>(config: &ScenarioConfig, rng: &mut ChaCha20Rng) -> World<G> {
    let params = config.masking_params().expect("validated");
    let rsu = pke_pair::<G>(config.byte_accounting, rng);
    let cs = pke_pair::<G>(config.byte_accounting, rng);
    let mut world = World::new(params, config.t_aud, rsu, cs, u64::MAX, rng);
    world.cs.freshness = config.freshness;
    world
}

fn pick_head(n_v: usize, attack: Option<&AttackSpec>, rng: &mut ChaCha20Rng) -> usize {
    let drawn = (rng.next_u64() % n_v as u64) as usize;
    match attack {
        Some(a) if a.kind != AttackName::InvalidSubApproval => a.actor,
        Some(a) if drawn == a.actor => (drawn + 1) % n_v,
        _ => drawn,
    }
}

fn reason_name(r: FlagReason) -> &'static str {
    match r {
        FlagReason::InvalidApproval => "invalid_approval",
        FlagReason::KeyMismatch => "key_mismatch",
    }
}

fn run_in<G: Group>(config: &ScenarioConfig) -> MetricsReport {
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut world = build_world::<G>(config, &mut rng);
    let pke = world.rsu_scheme();
    let n_v = config.n_v;
    let mut uid_cycle: BTreeMap<Uid, u32> = BTreeMap::new();
    let mut cycles = Vec::new();
    let mut unexpected = Vec::new();

    for cycle in 1..=config.cycles {
        let attack = config.attacks.iter().find(|a| a.cycle == cycle);
        let head = pick_head(n_v, attack, &mut rng);
        let data: Vec<u64> = (0..n_v).map(|_| rng.next_u64() % (config.data_max + 1)).collect();
        let input = CycleInput {
            cycle,
            now: cycle as u64 * config.cycle_period,
            head: head + 1,
            data: data.clone(),
            attacks: attack
                .map(|a| Attack {
                    kind: a.kind.into(),
                    actor: a.actor + 1,
                })
                .into_iter()
                .collect(),
        };
        let out = run_sensing_cycle(&mut world, &input, &mut rng);
        if let Some(uid) = out.uid {
            uid_cycle.insert(uid, cycle);
        }
        let report = cycle_report(&out, &input, attack, &uid_cycle);
        check_cycle(&report, &mut unexpected);
        cycles.push(report);
    }

    let attacks: Vec<AttackReport> = config
        .attacks
        .iter()
        .map(|a| assess_attack(a, &cycles, world.vehicles[a.actor].id))
        .collect();
    for f in cycles.iter().flat_map(|c| c.flags.iter().map(move |f| (c.cycle, f))) {
        let explained = config.attacks.iter().any(|a| {
            a.kind == AttackName::SelfKeyApproval && f.1.event_cycle == Some(a.cycle)
        });
        if !explained {
            unexpected.push(format!("cycle {}: unexplained flag on {}", f.0, f.1.uid));
        }
    }
    for a in &attacks {
        if !a.detected {
            unexpected.push(format!("{:?} in cycle {} was not detected", a.kind, a.cycle));
        } else if !a.expected {
            unexpected.push(format!("{:?} in cycle {} detected but not marked expected", a.kind, a.cycle));
        }
    }

    let mut totals = Totals {
        cycles: config.cycles,
        ..Totals::default()
    };
    for c in &cycles {
        if c.completed {
            totals.completed += 1;
        } else {
            totals.aborted += 1;
        }
        totals.flags += c.flags.len() as u32;
        totals.exclusions += c.exclusions.len() as u32;
        totals.verifications += c.checks.verifications;
        totals.exponentiations += c.exponentiations;
        totals.wire_bytes += c.messages.values().map(|m| m.wire).sum::<u64>();
    }
    let verdict = if !unexpected.is_empty() {
        RunVerdict::Unexpected
    } else if attacks.is_empty() {
        RunVerdict::Clean
    } else {
        RunVerdict::AttacksDetected
    };
    MetricsReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: config.clone(),
        group: config.group,
        pke,
        cycles,
        attacks,
        totals,
        unexpected,
        verdict,
    }
}

fn cycle_report<G: Group>(
    out: &CycleOutcome<G>,
    input: &CycleInput,
    attack: Option<&AttackSpec>,
    uid_cycle: &BTreeMap<Uid, u32>,
) -> CycleReport {
    let exclusions: Vec<usize> = out.exclusions.iter().map(|i| i - 1).collect();
    let remaining: Vec<u64> = input
        .data
        .iter()
        .enumerate()
        .filter(|(i, _)| !out.exclusions.contains(&(i + 1)))
        .map(|(_, d)| *d)
        .collect();
    let completed = out.completed();
    let abort = match &out.status {
        CycleStatus::Completed => None,
        CycleStatus::Aborted { stage, culprit, error } => Some(AbortReport {
            stage: stage.name(),
            culprit: culprit.map(|c| c - 1),
            error: error.to_string(),
        }),
    };
    let mut messages: BTreeMap<&'static str, MessageBytes> = BTreeMap::new();
    for m in &out.messages {
        let e = messages.entry(m.kind.name()).or_default();
        e.count += 1;
        e.payload += m.payload as u64;
        e.wire += m.wire as u64;
    }
    let flags = out
        .flags
        .iter()
        .map(|f| FlagReport {
            event_cycle: uid_cycle.get(&f.uid).copied(),
            uid: hex::encode(f.uid.0),
            reason: reason_name(f.reason),
            credential: hex::encode(G::point_to_bytes(&f.credential.commitment)),
        })
        .collect();
    CycleReport {
        cycle: input.cycle,
        head: input.head - 1,
        attack: attack.cloned(),
        completed,
        abort,
        expected_average: completed.then(|| AverageValue::new(remaining.iter().sum(), remaining.len()).into()),
        final_average: out.cs_average.map(Into::into),
        cs_verified: out.cs_verified,
        exclusions,
        flags,
        bad_heads: out.bad_heads.clone(),
        messages,
        max_recovery_messages_per_member: out.recovery_messages().values().copied().max().unwrap_or(0),
        checks: CheckReport {
            verifications: out.checks.verifications,
            exponentiations: out.checks.exponentiations,
            additions: out.checks.additions,
        },
        exponentiations: out.exponentiations,
    }
}

fn check_cycle(c: &CycleReport, unexpected: &mut Vec<String>) {
    let kind = c.attack.as_ref().map(|a| a.kind);
    match (&c.abort, kind) {
        (Some(_), Some(AttackName::FakeAverage)) => {}
        (Some(a), _) => unexpected.push(format!("cycle {}: aborted at {}: {}", c.cycle, a.stage, a.error)),
        (None, _) => {
            if c.final_average != c.expected_average || !c.cs_verified {
                unexpected.push(format!("cycle {}: reported average differs from the plaintext mean", c.cycle));
            }
        }
    }
    let allowed: BTreeSet<usize> = match &c.attack {
        Some(a) if a.kind == AttackName::InvalidSubApproval => [a.actor].into(),
        _ => BTreeSet::new(),
    };
    if c.exclusions.iter().any(|e| !allowed.contains(e)) {
        unexpected.push(format!("cycle {}: unexpected exclusions {:?}", c.cycle, c.exclusions));
    }
}

fn assess_attack(a: &AttackSpec, cycles: &[CycleReport], actor_id: u64) -> AttackReport {
    let at = &cycles[a.cycle as usize - 1];
    let (mechanism, detected_in_cycle) = match a.kind {
        AttackName::InvalidSubApproval => (
            "precheck",
            (at.completed && at.exclusions == [a.actor]).then_some(a.cycle),
        ),
        AttackName::FakeAverage => {
            let blocked = matches!(&at.abort, Some(r) if r.stage == Stage::Recovery.name() || r.stage == Stage::Reapproval.name());
            ("no_valid_approval", (blocked && at.final_average.is_none()).then_some(a.cycle))
        }
        AttackName::SelfKeyApproval => (
            "audit",
            cycles
                .iter()
                .skip(a.cycle as usize)
                .take(1)
                .find(|c| c.bad_heads.contains(&actor_id))
                .map(|c| c.cycle),
        ),
    };
    AttackReport {
        kind: a.kind,
        cycle: a.cycle,
        actor: a.actor,
        expected: a.expected,
        detected: detected_in_cycle.is_some(),
        mechanism,
        detected_in_cycle,
    }
}
