//! Insertion benchmarks: cumulative time and page traffic per checkpoint.
//!
//! Store creation is not timed; only `add_contact` calls are. Counters are
//! device-level reads and writes observed by the pager since creation.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{create_engine, EngineKind, ReachabilityEngine};
use crate::error::{Error, Result};
use crate::ingest::shuffle;
use crate::pager::PagerConfig;
use crate::types::{Contact, GraphParams};

pub const CSV_HEADER: [&str; 9] = ["engine", "n", "tau", "delta", "inserted", "repetition", "elapsed_ns", "device_reads", "device_writes"];

#[derive(Debug, Clone)]
pub struct BenchPlan {
    pub engine: EngineKind,
    pub params: GraphParams,
    /// Inserted in this order unless `seed` is set.
    pub contacts: Vec<Contact>,
    /// Ascending insertion counts; the last one must equal `contacts.len()`.
    pub checkpoints: Vec<usize>,
    pub repetitions: u32,
    /// Repetition `r` shuffles the contacts with `seed + r`.
    pub seed: Option<u64>,
    pub pager: PagerConfig,
    pub time_limit: Option<Duration>,
    /// Where the temporary stores live.
    pub work_dir: PathBuf,
}

impl BenchPlan {
    pub fn validate(&self) -> Result<()> {
        if self.checkpoints.is_empty() || !self.checkpoints.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("checkpoints must be non-empty and strictly ascending"));
        }
        if self.checkpoints.last() != Some(&self.contacts.len()) {
            return Err(Error::invalid(format!(
                "last checkpoint {} must equal the contact count {}",
                self.checkpoints.last().unwrap(),
                self.contacts.len()
            )));
        }
        if self.repetitions == 0 {
            return Err(Error::invalid("at least one repetition is needed"));
        }
        Ok(())
    }
}

/// `k` evenly spaced checkpoints ending at `total`.
pub fn even_checkpoints(total: usize, k: usize) -> Vec<usize> {
    let k = k.clamp(1, total.max(1));
    let mut out: Vec<usize> = (1..=k).map(|i| total * i / k).filter(|&c| c > 0).collect();
    out.dedup();
    if out.is_empty() {
        out.push(total);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchRow {
    pub engine: String,
    pub n: u32,
    pub tau: u32,
    pub delta: u32,
    pub inserted: usize,
    pub repetition: u32,
    pub elapsed_ns: u64,
    pub device_reads: u64,
    pub device_writes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchOutcome {
    pub rows: Vec<BenchRow>,
    /// Repetitions stopped by the time limit.
    pub aborted: Vec<u32>,
}

pub fn run(plan: &BenchPlan) -> Result<BenchOutcome> {
    plan.validate()?;
    let mut rows = Vec::new();
    let mut aborted = Vec::new();
    for rep in 0..plan.repetitions {
        let contacts = match plan.seed {
            Some(s) => shuffle(&plan.contacts, s.wrapping_add(u64::from(rep))),
            None => plan.contacts.clone(),
        };
        let path = plan.work_dir.join(format!("bench-{}-{rep}.store", plan.engine));
        let _ = std::fs::remove_file(&path);
        let result = run_once(plan, rep, &contacts, &path, &mut rows);
        let _ = std::fs::remove_file(&path);
        match result {
            Ok(true) => {}
            Ok(false) => aborted.push(rep),
            Err(Error::Io(e)) => {
                return Err(Error::Io(std::io::Error::new(
                    e.kind(),
                    format!("{} n={} tau={} repetition {rep}: {e}", plan.engine, plan.params.n, plan.params.tau),
                )))
            }
            Err(e) => return Err(e),
        }
    }
    Ok(BenchOutcome { rows, aborted })
}

/// Returns false if the time limit cut the run short.
fn run_once(plan: &BenchPlan, rep: u32, contacts: &[Contact], path: &std::path::Path, rows: &mut Vec<BenchRow>) -> Result<bool> {
    let mut engine = create_engine(plan.engine, path, plan.params, plan.pager)?;
    engine.reset_counters();
    let mut elapsed = Duration::ZERO;
    let mut next = 0;
    for (i, c) in contacts.iter().enumerate() {
        let start = Instant::now();
        engine.add_contact(*c)?;
        elapsed += start.elapsed();
        if plan.checkpoints.get(next) == Some(&(i + 1)) {
            let io = engine.counters();
            rows.push(BenchRow {
                engine: plan.engine.to_string(),
                n: plan.params.n,
                tau: plan.params.tau,
                delta: plan.params.delta,
                inserted: i + 1,
                repetition: rep,
                elapsed_ns: elapsed.as_nanos() as u64,
                device_reads: io.device_reads,
                device_writes: io.device_writes,
            });
            next += 1;
        }
        if plan.time_limit.is_some_and(|limit| elapsed > limit) {
            return Ok(next == plan.checkpoints.len());
        }
    }
    Ok(true)
}

pub fn write_rows(out: impl Write, rows: &[BenchRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(input: impl std::io::Read) -> Result<Vec<BenchRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

pub fn mean_std(xs: &[f64]) -> Option<MeanStd> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some(MeanStd { mean, std: var.sqrt() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub engine: String,
    pub n: u32,
    pub tau: u32,
    pub delta: u32,
    pub inserted: usize,
    pub repetitions: usize,
    /// `None` when some repetition never reached this checkpoint.
    pub elapsed_ns: Option<MeanStd>,
    pub device_reads: Option<MeanStd>,
    pub device_writes: Option<MeanStd>,
}

/// Mean and standard deviation per (engine, configuration, checkpoint).
/// Groups with fewer than `expected_reps` rows are reported as incomplete.
pub fn summarize(rows: &[BenchRow], expected_reps: Option<usize>) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, u32, u32, u32, usize), Vec<&BenchRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.engine.clone(), r.n, r.tau, r.delta, r.inserted)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((engine, n, tau, delta, inserted), rs)| {
            let complete = expected_reps.is_none_or(|e| rs.len() >= e);
            let stat = |f: fn(&BenchRow) -> u64| {
                if complete {
                    mean_std(&rs.iter().map(|r| f(r) as f64).collect::<Vec<_>>())
                } else {
                    None
                }
            };
            SummaryRow {
                engine,
                n,
                tau,
                delta,
                inserted,
                repetitions: rs.len(),
                elapsed_ns: stat(|r| r.elapsed_ns),
                device_reads: stat(|r| r.device_reads),
                device_writes: stat(|r| r.device_writes),
            }
        })
        .collect()
}

pub fn write_summary(out: impl Write, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "engine",
        "n",
        "tau",
        "delta",
        "inserted",
        "repetitions",
        "elapsed_ns_mean",
        "elapsed_ns_std",
        "device_reads_mean",
        "device_reads_std",
        "device_writes_mean",
        "device_writes_std",
    ])?;
    for r in rows {
        let mut rec = vec![
            r.engine.clone(),
            r.n.to_string(),
            r.tau.to_string(),
            r.delta.to_string(),
            r.inserted.to_string(),
            r.repetitions.to_string(),
        ];
        for s in [r.elapsed_ns, r.device_reads, r.device_writes] {
            match s {
                Some(s) => rec.extend([format!("{:.2}", s.mean), format!("{:.2}", s.std)]),
                None => rec.extend(["-".to_string(), "-".to_string()]),
            }
        }
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Latency and page reads of random `can_reach` queries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryStats {
    pub queries: u64,
    pub mean_ns: f64,
    pub device_reads_per_query: f64,
}

/// Runs `count` random `can_reach` queries against a built engine.
/// Meant for a store opened with the cache disabled.
pub fn query_bench(engine: &mut dyn ReachabilityEngine, count: u64, seed: u64) -> Result<QueryStats> {
    let p = engine.params();
    if p.n < 2 {
        return Err(Error::invalid("query benchmark needs at least two vertices"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    engine.reset_counters();
    let mut elapsed = Duration::ZERO;
    for _ in 0..count {
        let u = rng.gen_range(0..p.n);
        let v = (u + rng.gen_range(1..p.n)) % p.n;
        let t1 = rng.gen_range(1..=p.tau);
        let t2 = rng.gen_range(t1..=p.max_arrival());
        let start = Instant::now();
        engine.can_reach(u, v, t1, t2)?;
        elapsed += start.elapsed();
    }
    let reads = engine.counters().device_reads;
    let q = count.max(1) as f64;
    Ok(QueryStats { queries: count, mean_ns: elapsed.as_nanos() as f64 / q, device_reads_per_query: reads as f64 / q })
}
