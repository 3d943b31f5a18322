//! Per-message sizes against the published figures.

use std::fmt::Write as _;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sada_core::approval::Approval;
use sada_core::protocol::cycle::CycleOutcome;
use sada_core::protocol::{run_sensing_cycle, CycleInput, MsgType};
use sada_core::{Group, Secp256k1};
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::runner::build_world;
use crate::SimError;

type K = Secp256k1;

/// Reference sizes; the list figure is for a 20-member cluster.
pub const REFERENCE_COM: usize = 32;
pub const REFERENCE_L_COM_20: usize = 640;
pub const REFERENCE_M_I: usize = 370;
pub const REFERENCE_M2: usize = 864;
pub const REFERENCE_M3: usize = 1024;
pub const REFERENCE_SIGNATURE: usize = 48;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ByteRow {
    pub item: &'static str,
    pub pke: &'static str,
    pub computed: usize,
    pub reference: Option<usize>,
    /// `computed / reference`, two decimals.
    pub ratio: Option<String>,
    pub within_2x: Option<bool>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BytesReport {
    pub n_v: usize,
    pub t_sm: usize,
    pub records_in_m3: usize,
    pub rows: Vec<ByteRow>,
}

impl BytesReport {
    pub fn get(&self, item: &str, pke: &str) -> Option<&ByteRow> {
        self.rows.iter().find(|r| r.item == item && r.pke == pke)
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "n_v={} t_sm={} records in m3={}\n{:<14} {:<14} {:>8} {:>6} {:>6} {:>6}  note\n",
            self.n_v, self.t_sm, self.records_in_m3, "item", "pke", "computed", "ref", "ratio", "2x"
        );
        for r in &self.rows {
            let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
            let _ = writeln!(
                s,
                "{:<14} {:<14} {:>8} {:>6} {:>6} {:>6}  {}",
                r.item,
                r.pke,
                r.computed,
                opt(r.reference.map(|p| p.to_string())),
                opt(r.ratio.clone()),
                opt(r.within_2x.map(|b| if b { "yes" } else { "NO" }.to_string())),
                r.note
            );
        }
        s
    }
}

fn row(item: &'static str, pke: &'static str, computed: usize, reference: Option<usize>, note: impl Into<String>) -> ByteRow {
    let ratio = reference.map(|p| {
        let hundredths = computed * 100 / p;
        format!("{}.{:02}", hundredths / 100, hundredths % 100)
    });
    let within_2x = reference.map(|p| computed * 2 >= p && computed <= 2 * p);
    let mut note = note.into();
    if let (Some(p), Some(false)) = (reference, within_2x) {
        if !note.is_empty() {
            note.push_str("; ");
        }
        let _ = write!(note, "deviation {:+} B", computed as i64 - p as i64);
    }
    ByteRow {
        item,
        pke,
        computed,
        reference,
        ratio,
        within_2x,
        note,
    }
}

fn first(out: &CycleOutcome<K>, kind: MsgType, wire: bool) -> usize {
    let sizes = if wire { out.wire_sizes(kind) } else { out.payload_sizes(kind) };
    sizes[0]
}

/// Two honest cycles per PKE scheme; sizes come from the second so m³ carries every member's record.
fn measure(config: &ScenarioConfig, rsa: bool) -> (CycleOutcome<K>, &'static str) {
    let mut c = config.clone();
    c.byte_accounting = rsa;
    c.attacks.clear();
    let mut rng = ChaCha20Rng::seed_from_u64(c.seed);
    let mut world = build_world::<K>(&c, &mut rng);
    let scheme = world.rsu_scheme();
    let mut last = None;
    for cycle in 1..=2u32 {
        let input = CycleInput {
            cycle,
            now: cycle as u64 * c.cycle_period,
            head: 1 + (rng.next_u64() % c.n_v as u64) as usize,
            data: (0..c.n_v).map(|_| rng.next_u64() % (c.data_max + 1)).collect(),
            attacks: Vec::new(),
        };
        let out = run_sensing_cycle(&mut world, &input, &mut rng);
        assert!(out.completed(), "honest byte-accounting cycle aborted: {:?}", out.status);
        last = Some(out);
    }
    (last.expect("two cycles"), scheme)
}

/// Byte accounting for the scenario's cluster size, under hybrid and RSA-2048 encryption.
pub fn bytes_report(config: &ScenarioConfig) -> Result<BytesReport, SimError> {
    config.validate()?;
    let mut rows = Vec::new();
    let mut records = 0;
    let l_com_reference = (config.n_v == 20).then_some(REFERENCE_L_COM_20);
    for rsa in [false, true] {
        let (out, pke) = measure(config, rsa);
        if !rsa {
            rows.push(row("com_i", "-", first(&out, MsgType::Commitment, false), Some(REFERENCE_COM), ""));
            rows.push(row(
                "L_com",
                "-",
                first(&out, MsgType::CommitList, false),
                l_com_reference,
                if l_com_reference.is_some() { "" } else { "reference figure is for n_v=20" },
            ));
            rows.push(row(
                "m_i",
                "-",
                first(&out, MsgType::Reveal, false),
                Some(REFERENCE_M_I),
                "R batch, c_i, h_i, encrypted shares",
            ));
            rows.push(row(
                "m_i envelope",
                "-",
                first(&out, MsgType::Reveal, true),
                None,
                "signed and sealed, piggybacked records included",
            ));
            rows.push(row(
                "signature",
                "-",
                Approval::<K>::LEN,
                Some(REFERENCE_SIGNATURE),
                format!(
                    "(s, R) with a {}-byte compressed point; 48 B cannot hold a 32 B scalar plus a secp256k1 point",
                    K::POINT_LEN
                ),
            ));
        }
        records = (first(&out, MsgType::Records, true) - EMPTY_M3) / RECORD_LEN;
        rows.push(row("session_keys", pke, first(&out, MsgType::SessionKeys, true), None, ""));
        rows.push(row(
            "m2",
            pke,
            first(&out, MsgType::Report, true),
            Some(REFERENCE_M2),
            if rsa { "byte-accounting mode" } else { "" },
        ));
        rows.push(row("m3", pke, first(&out, MsgType::Records, true), Some(REFERENCE_M3), format!("{records} records")));
    }
    Ok(BytesReport {
        n_v: config.n_v,
        t_sm: config.t_sm,
        records_in_m3: records,
        rows,
    })
}

/// Frame, session ID, tag, count and HMAC around the record list.
const EMPTY_M3: usize = 5 + 4 + 16 + 2 + 32;
const RECORD_LEN: usize = 64;
