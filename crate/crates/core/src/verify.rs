//! Cross-checks of both engines against the brute-force oracle.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::array::TtcArrayStore;
use crate::engine::EngineKind;
use crate::error::Result;
use crate::ingest::shuffle;
use crate::oracle;
use crate::pager::PagerConfig;
use crate::tree::TtcTreeStore;
use crate::types::{journey_window, Contact, ContactSet, GraphParams, Timestamp, Vertex};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Query {
    CanReach { u: Vertex, v: Vertex, t1: Timestamp, t2: Timestamp },
    IsConnected { t1: Timestamp, t2: Timestamp },
    /// A reconstructed journey that is invalid, or misses the window or
    /// the earliest arrival.
    Journey { u: Vertex, v: Vertex, t1: Timestamp, t2: Timestamp },
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Query::CanReach { u, v, t1, t2 } => write!(f, "can-reach {u} {v} {t1} {t2}"),
            Query::IsConnected { t1, t2 } => write!(f, "is-connected {t1} {t2}"),
            Query::Journey { u, v, t1, t2 } => write!(f, "journey {u} {v} {t1} {t2}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    pub engine: EngineKind,
    pub query: Query,
    pub expected: bool,
    pub got: bool,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} expected {} got {}", self.engine, self.query, self.expected, self.got)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VerifyReport {
    pub instances: usize,
    pub queries: u64,
    pub mismatches: Vec<Mismatch>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }

    fn absorb(&mut self, other: VerifyReport) {
        self.instances += other.instances;
        self.queries += other.queries;
        self.mismatches.extend(other.mismatches);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    /// Compare with the oracle; otherwise the tree engine is compared with
    /// the array engine.
    pub against_oracle: bool,
    /// Random `is_connected` windows per instance.
    pub windows: usize,
    pub pager: PagerConfig,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { against_oracle: true, windows: 20, pager: PagerConfig::new(512, 64), seed: 0 }
    }
}

/// A random instance and a random insertion order for it.
pub fn random_instance(rng: &mut impl Rng, max_n: u32, max_tau: u32) -> (ContactSet, Vec<Contact>) {
    let n = rng.gen_range(2..=max_n.max(2));
    let tau = rng.gen_range(1..=max_tau.max(1));
    let delta = rng.gen_range(0..=2);
    let params = GraphParams::new(n, tau, delta).expect("small parameters");
    let max_count = (n * n * tau / 2) as usize;
    let count = rng.gen_range(0..=max_count);
    let raw: Vec<Contact> = (0..count)
        .map(|_| {
            let u = rng.gen_range(0..n);
            let v = (u + rng.gen_range(1..n)) % n;
            Contact::new(u, v, rng.gen_range(1..=tau))
        })
        .collect();
    let cs = ContactSet::new(params, raw).expect("generated contacts are valid");
    let order = shuffle(cs.contacts(), rng.gen());
    (cs, order)
}

/// Inserts `order` into both engines and checks every `can_reach` query,
/// `windows` random `is_connected` windows and, for the array engine,
/// journey reconstruction.
pub fn verify_instance(cs: &ContactSet, order: &[Contact], dir: &Path, opts: &VerifyOptions) -> Result<VerifyReport> {
    let p = cs.params();
    let array_path = dir.join("verify.ttca");
    let tree_path = dir.join("verify.ttct");
    for path in [&array_path, &tree_path] {
        let _ = std::fs::remove_file(path);
    }
    let mut array = TtcArrayStore::create(&array_path, p, opts.pager)?;
    let mut tree = TtcTreeStore::create(&tree_path, p, opts.pager)?;
    for c in order {
        array.add_contact(*c)?;
        tree.add_contact(*c)?;
    }
    let mut report = VerifyReport { instances: 1, ..Default::default() };
    let check = |report: &mut VerifyReport, engine, query, expected, got| {
        report.queries += 1;
        if expected != got {
            report.mismatches.push(Mismatch { engine, query, expected, got });
        }
    };

    for u in 0..p.n {
        for t1 in 1..=p.tau {
            let arrivals = opts.against_oracle.then(|| oracle::earliest_arrivals_from(cs, u, t1));
            for v in (0..p.n).filter(|&v| v != u) {
                for t2 in t1..=p.max_arrival() {
                    let query = Query::CanReach { u, v, t1, t2 };
                    let a = array.can_reach(u, v, t1, t2)?;
                    let t = tree.can_reach(u, v, t1, t2)?;
                    match &arrivals {
                        Some(arr) => {
                            let expected = arr[v as usize].is_some_and(|x| x <= t2);
                            check(&mut report, EngineKind::Array, query, expected, a);
                            check(&mut report, EngineKind::Tree, query, expected, t);
                        }
                        None => check(&mut report, EngineKind::Tree, query, a, t),
                    }
                }
                // one journey per (u, t1, v), over the widest window
                let t2 = p.max_arrival();
                let j = array.reconstruct_journey(u, v, t1, t2)?;
                if !j.is_empty() || arrivals.as_ref().is_some_and(|arr| arr[v as usize].is_some()) {
                    let best = arrivals.as_ref().and_then(|arr| arr[v as usize]);
                    let ok = match journey_window(&j, &p) {
                        Ok((dep, arr)) => {
                            j.source() == Some(u) && j.target() == Some(v) && dep >= t1 && best.is_none_or(|b| arr == b)
                        }
                        Err(_) => false,
                    };
                    check(&mut report, EngineKind::Array, Query::Journey { u, v, t1, t2 }, true, ok);
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (cs.len() as u64).rotate_left(17));
    for _ in 0..opts.windows {
        let t1 = rng.gen_range(1..=p.tau);
        let t2 = rng.gen_range(t1..=p.max_arrival());
        let query = Query::IsConnected { t1, t2 };
        let a = array.is_connected(t1, t2)?;
        let t = tree.is_connected(t1, t2)?;
        if opts.against_oracle {
            let expected = oracle::is_connected(cs, t1, t2);
            check(&mut report, EngineKind::Array, query, expected, a);
            check(&mut report, EngineKind::Tree, query, expected, t);
        } else {
            check(&mut report, EngineKind::Tree, query, a, t);
        }
    }
    drop(array);
    drop(tree);
    for path in [&array_path, &tree_path] {
        let _ = std::fs::remove_file(path);
    }
    Ok(report)
}

/// Runs `instances` random instances with `n <= max_n`, `tau <= max_tau`.
pub fn verify_random(instances: usize, max_n: u32, max_tau: u32, dir: &Path, opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = VerifyReport::default();
    for _ in 0..instances {
        let (cs, order) = random_instance(&mut rng, max_n, max_tau);
        report.absorb(verify_instance(&cs, &order, dir, opts)?);
    }
    Ok(report)
}
