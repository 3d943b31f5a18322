//! Cost of locating bad sub-approvals: tree descent, binary search that
//! re-aggregates from leaves, and one-by-one verification.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::ops::Range;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sada_core::approval::{aggregate_key, approval_challenge, sub_approval_response, AggKey, AverageValue};
use sada_core::precheck::{build_trees, locate_invalid_with, CheckStats, DescentRule};
use sada_core::schnorr::KeyPair;
use sada_core::{Group, Secp256k1};
use serde::Serialize;

type K = Secp256k1;
type Scalar = <K as Group>::Scalar;
type Point = <K as Group>::Point;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum IdentError {
    #[error("n_v must be in 2..=255, got {0}")]
    ClusterSize(usize),
    #[error("n_bad = {n_bad} exceeds n_v = {n_v}")]
    TooManyBad { n_bad: usize, n_v: usize },
    #[error("trials must be at least 1")]
    NoTrials,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MethodRow {
    pub method: &'static str,
    pub min: u64,
    pub max: u64,
    pub total: u64,
    /// `total / trials`, three decimals.
    pub mean: String,
    pub additions: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IdentTable {
    pub n_v: usize,
    pub n_bad: usize,
    pub trials: u32,
    pub seed: u64,
    pub rows: Vec<MethodRow>,
    /// Tree counts equal the counting oracle in every trial.
    pub oracle_agrees: bool,
    /// Every method returned exactly the corrupted set in every trial.
    pub all_located: bool,
}

impl IdentTable {
    pub fn row(&self, method: &str) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "n_v={} n_bad={} trials={} seed={}\n{:<28} {:>6} {:>8} {:>6} {:>10}\n",
            self.n_v, self.n_bad, self.trials, self.seed, "method", "min", "mean", "max", "additions"
        );
        for r in &self.rows {
            let _ = writeln!(s, "{:<28} {:>6} {:>8} {:>6} {:>10}", r.method, r.min, r.mean, r.max, r.additions);
        }
        let _ = writeln!(s, "oracle agrees: {}  all located: {}", self.oracle_agrees, self.all_located);
        s
    }
}

struct Instance {
    agg: AggKey<K>,
    responses: Vec<Scalar>,
    nonces: Vec<Point>,
    avg: AverageValue,
}

fn instance(n_v: usize, bad: &BTreeSet<usize>, rng: &mut ChaCha20Rng) -> Instance {
    let kps: Vec<KeyPair<K>> = (0..n_v).map(|_| KeyPair::generate(rng)).collect();
    let pks: Vec<Point> = kps.iter().map(|k| k.public()).collect();
    let agg = aggregate_key::<K>(&pks).expect("distinct keys");
    let ks: Vec<Scalar> = (0..n_v).map(|_| K::random_nonzero_scalar(rng)).collect();
    let nonces: Vec<Point> = ks.iter().map(K::mul_base).collect();
    let r = nonces.iter().fold(K::identity(), |a, p| a + *p);
    let avg = AverageValue::new(rng.next_u64() >> 16, n_v);
    let e = approval_challenge::<K>(&agg.key(), &r, &avg);
    let responses = (0..n_v)
        .map(|i| {
            let s = sub_approval_response::<K>(&ks[i], &agg.coefficients()[i], kps[i].secret(), &e);
            if bad.contains(&i) {
                s + K::random_nonzero_scalar(rng)
            } else {
                s
            }
        })
        .collect();
    Instance {
        agg,
        responses,
        nonces,
        avg,
    }
}

fn leaf_check(inst: &Instance, range: Range<usize>, e: &Scalar, stats: &mut CheckStats) -> bool {
    let mut key = K::identity();
    let mut s = K::scalar_zero();
    let mut r = K::identity();
    for i in range.clone() {
        key += inst.agg.weighted_key(i);
        s += inst.responses[i];
        r += inst.nonces[i];
    }
    stats.verifications += 1;
    stats.exponentiations += 2;
    stats.additions += 1 + 2 * (range.len() as u64 - 1);
    K::mul_base(&s) == r + key * *e
}

/// Same split and sibling inference as the trees, every range re-summed from leaves.
fn binary_search(inst: &Instance) -> (BTreeSet<usize>, CheckStats) {
    let n = inst.responses.len();
    let mut stats = CheckStats::default();
    let mut bad = BTreeSet::new();
    let r = inst.nonces.iter().fold(K::identity(), |a, p| a + *p);
    let e = approval_challenge::<K>(&inst.agg.key(), &r, &inst.avg);
    stats.additions += n as u64 - 1;
    fn go(inst: &Instance, range: Range<usize>, e: &Scalar, bad: &mut BTreeSet<usize>, stats: &mut CheckStats) {
        if range.len() == 1 {
            bad.insert(range.start);
            return;
        }
        let mid = range.start + range.len() / 2;
        let left_fails = !leaf_check(inst, range.start..mid, e, stats);
        if left_fails {
            go(inst, range.start..mid, e, bad, stats);
        }
        if !left_fails || !leaf_check(inst, mid..range.end, e, stats) {
            go(inst, mid..range.end, e, bad, stats);
        }
    }
    if !leaf_check(inst, 0..n, &e, &mut stats) {
        go(inst, 0..n, &e, &mut bad, &mut stats);
    }
    (bad, stats)
}

fn one_by_one(inst: &Instance) -> (BTreeSet<usize>, CheckStats) {
    let n = inst.responses.len();
    let mut stats = CheckStats::default();
    let r = inst.nonces.iter().fold(K::identity(), |a, p| a + *p);
    let e = approval_challenge::<K>(&inst.agg.key(), &r, &inst.avg);
    stats.additions += n as u64 - 1;
    if leaf_check(inst, 0..n, &e, &mut stats) {
        return (BTreeSet::new(), stats);
    }
    let bad = (0..n).filter(|i| !leaf_check(inst, *i..*i + 1, &e, &mut stats)).collect();
    (bad, stats)
}

/// Counting model of the tree descent: checks made when the leaves in `bad` fail.
pub fn oracle_count(n: usize, bad: &BTreeSet<usize>) -> u64 {
    fn fails(lo: usize, hi: usize, bad: &BTreeSet<usize>) -> bool {
        bad.range(lo..hi).next().is_some()
    }
    fn descend(lo: usize, hi: usize, bad: &BTreeSet<usize>) -> u64 {
        if hi - lo == 1 {
            return 0;
        }
        let mid = lo + (hi - lo) / 2;
        let mut count = 1;
        if fails(lo, mid, bad) {
            count += descend(lo, mid, bad) + 1;
            if fails(mid, hi, bad) {
                count += descend(mid, hi, bad);
            }
        } else {
            count += descend(mid, hi, bad);
        }
        count
    }
    if fails(0, n, bad) {
        1 + descend(0, n, bad)
    } else {
        1
    }
}

fn sample_bad(n_v: usize, n_bad: usize, rng: &mut ChaCha20Rng) -> BTreeSet<usize> {
    let mut bad = BTreeSet::new();
    while bad.len() < n_bad {
        bad.insert((rng.next_u64() % n_v as u64) as usize);
    }
    bad
}

struct Tally {
    method: &'static str,
    counts: Vec<u64>,
    additions: u64,
}

impl Tally {
    fn new(method: &'static str) -> Self {
        Tally {
            method,
            counts: Vec::new(),
            additions: 0,
        }
    }

    fn add(&mut self, stats: &CheckStats) {
        self.counts.push(stats.verifications);
        self.additions += stats.additions;
    }

    fn row(&self) -> MethodRow {
        let total: u64 = self.counts.iter().sum();
        let n = self.counts.len() as u64;
        MethodRow {
            method: self.method,
            min: self.counts.iter().copied().min().unwrap_or(0),
            max: self.counts.iter().copied().max().unwrap_or(0),
            total,
            mean: format!("{}.{:03}", total / n, (total % n) * 1000 / n),
            additions: self.additions,
        }
    }
}

pub fn compare_identification(n_v: usize, n_bad: usize, trials: u32, seed: u64) -> Result<IdentTable, IdentError> {
    if !(2..=255).contains(&n_v) {
        return Err(IdentError::ClusterSize(n_v));
    }
    if n_bad > n_v {
        return Err(IdentError::TooManyBad { n_bad, n_v });
    }
    if trials == 0 {
        return Err(IdentError::NoTrials);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut tree = Tally::new("tree");
    let mut tree_both = Tally::new("tree_check_both");
    let mut search = Tally::new("binary_search_without_trees");
    let mut single = Tally::new("one_by_one");
    let mut oracle_agrees = true;
    let mut all_located = true;

    for _ in 0..trials {
        let bad_members = sample_bad(n_v, n_bad, &mut rng);
        let inst = instance(n_v, &bad_members, &mut rng);
        let trees = build_trees(&inst.agg, &inst.responses, &inst.nonces).expect("n_v >= 2");
        let truth = bad_members;
        let (found, stats) = locate_invalid_with(&trees, &inst.avg, DescentRule::InferSibling);
        all_located &= found == truth;
        oracle_agrees &= stats.verifications == oracle_count(n_v, &truth);
        tree.add(&CheckStats {
            additions: stats.additions + 3 * (n_v as u64 - 1),
            ..stats
        });

        let (found, stats) = locate_invalid_with(&trees, &inst.avg, DescentRule::CheckBoth);
        all_located &= found == truth;
        tree_both.add(&CheckStats {
            additions: stats.additions + 3 * (n_v as u64 - 1),
            ..stats
        });

        let (found, stats) = binary_search(&inst);
        all_located &= found == truth;
        search.add(&stats);

        let (found, stats) = one_by_one(&inst);
        all_located &= found == truth;
        single.add(&stats);
    }
    Ok(IdentTable {
        n_v,
        n_bad,
        trials,
        seed,
        rows: [tree, tree_both, search, single].iter().map(Tally::row).collect(),
        oracle_agrees,
        all_located,
    })
}
