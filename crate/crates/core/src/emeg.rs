//! Synthetic temporal graphs: edge-Markovian, complete and uniform.
//!
//! Every vertex pair runs an independent two-state chain over `t = 1..=tau`:
//! an active edge disappears with probability `p`, an inactive one appears
//! with probability `q`. A contact is emitted for every active step.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Contact, ContactSet, GraphParams, DEFAULT_DELTA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum InitialState {
    /// Every edge is inactive at `t = 1`.
    Empty,
    /// Each edge is active at `t = 1` with probability `q / (p + q)`.
    #[default]
    Stationary,
}

impl FromStr for InitialState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "empty" => Ok(InitialState::Empty),
            "stationary" => Ok(InitialState::Stationary),
            _ => Err(Error::invalid(format!("unknown initial state {s:?} (expected empty or stationary)"))),
        }
    }
}

impl fmt::Display for InitialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitialState::Empty => "empty",
            InitialState::Stationary => "stationary",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmegConfig {
    pub n: u32,
    pub tau: u32,
    /// Probability that an active edge disappears.
    pub p: f64,
    /// Probability that an inactive edge appears.
    pub q: f64,
    pub seed: u64,
    pub directed: bool,
    pub initial: InitialState,
    pub delta: u32,
}

impl EmegConfig {
    pub fn new(n: u32, tau: u32, p: f64, q: f64, seed: u64) -> Self {
        EmegConfig { n, tau, p, q, seed, directed: true, initial: InitialState::Stationary, delta: DEFAULT_DELTA }
    }

    pub fn validate(&self) -> Result<GraphParams> {
        for (name, x) in [("p", self.p), ("q", self.q)] {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::InvalidParams(format!("{name} = {x} is not a probability")));
            }
        }
        if self.initial == InitialState::Stationary && self.p + self.q == 0.0 {
            return Err(Error::InvalidParams("stationary start is undefined for p = q = 0".into()));
        }
        GraphParams::new(self.n, self.tau, self.delta)
    }

    /// Long-run fraction of active edge-steps.
    pub fn stationary_active(&self) -> f64 {
        self.q / (self.p + self.q)
    }
}

fn pairs(n: u32, directed: bool) -> impl Iterator<Item = (u32, u32)> {
    (0..n).flat_map(move |u| (0..n).filter(move |&v| if directed { v != u } else { v > u }).map(move |v| (u, v)))
}

/// Contacts sorted by time, then source, then target. Undirected pairs are
/// emitted in both directions.
pub fn generate(cfg: &EmegConfig) -> Result<ContactSet> {
    let params = cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    for (u, v) in pairs(cfg.n, cfg.directed) {
        let mut active = match cfg.initial {
            InitialState::Empty => false,
            InitialState::Stationary => rng.gen_bool(cfg.stationary_active()),
        };
        for t in 1..=cfg.tau {
            if t > 1 {
                active = if active { !rng.gen_bool(cfg.p) } else { rng.gen_bool(cfg.q) };
            }
            if active {
                out.push(Contact::new(u, v, t));
                if !cfg.directed {
                    out.push(Contact::new(v, u, t));
                }
            }
        }
    }
    out.sort_by_key(|c| (c.t, c.u, c.v));
    ContactSet::new(params, out)
}

/// Every ordered pair active at every step: `n (n - 1) tau` contacts.
pub fn generate_complete(n: u32, tau: u32, delta: u32) -> Result<ContactSet> {
    let params = GraphParams::new(n, tau, delta)?;
    let mut out = Vec::with_capacity(n as usize * n.saturating_sub(1) as usize * tau as usize);
    for t in 1..=tau {
        out.extend(pairs(n, true).map(|(u, v)| Contact::new(u, v, t)));
    }
    ContactSet::new(params, out)
}

/// `count` distinct contacts drawn uniformly among non-loop pairs and times,
/// sorted by time. Fails if fewer than `count` exist.
pub fn generate_uniform(n: u32, tau: u32, count: usize, seed: u64, delta: u32) -> Result<ContactSet> {
    let params = GraphParams::new(n, tau, delta)?;
    let available = u64::from(n) * u64::from(n.saturating_sub(1)) * u64::from(tau);
    if count as u64 > available {
        return Err(Error::InvalidParams(format!("only {available} distinct contacts exist, asked for {count}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::BTreeSet::new();
    while seen.len() < count {
        let u = rng.gen_range(0..n);
        let v = (u + rng.gen_range(1..n)) % n;
        seen.insert((rng.gen_range(1..=tau), u, v));
    }
    ContactSet::new(params, seen.into_iter().map(|(t, u, v)| Contact::new(u, v, t)))
}

/// Empirical chain statistics of a generated contact set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainStats {
    pub edge_steps: u64,
    pub active_steps: u64,
    /// Steps leaving an active state, and how many of them deactivated.
    pub from_active: u64,
    pub deactivations: u64,
    pub from_inactive: u64,
    pub activations: u64,
}

impl ChainStats {
    pub fn active_fraction(&self) -> f64 {
        self.active_steps as f64 / self.edge_steps as f64
    }

    pub fn p_hat(&self) -> f64 {
        self.deactivations as f64 / self.from_active as f64
    }

    pub fn q_hat(&self) -> f64 {
        self.activations as f64 / self.from_inactive as f64
    }

    /// Binomial standard error of an estimated rate `x` over `trials`.
    pub fn sigma(x: f64, trials: u64) -> f64 {
        (x * (1.0 - x) / trials as f64).sqrt()
    }
}

/// Recovers per-pair state sequences from `cs` and counts transitions
/// between consecutive steps.
pub fn chain_stats(cs: &ContactSet, directed: bool) -> ChainStats {
    let p = cs.params();
    let n = p.n as usize;
    let tau = p.tau as usize;
    let mut grid = vec![false; n * n * tau];
    for c in cs.contacts() {
        grid[(c.u as usize * n + c.v as usize) * tau + c.t as usize - 1] = true;
    }
    let mut s = ChainStats { edge_steps: 0, active_steps: 0, from_active: 0, deactivations: 0, from_inactive: 0, activations: 0 };
    for (u, v) in pairs(p.n, directed) {
        let row = &grid[(u as usize * n + v as usize) * tau..][..tau];
        s.edge_steps += tau as u64;
        s.active_steps += row.iter().filter(|&&a| a).count() as u64;
        for w in row.windows(2) {
            if w[0] {
                s.from_active += 1;
                s.deactivations += u64::from(!w[1]);
            } else {
                s.from_inactive += 1;
                s.activations += u64::from(w[1]);
            }
        }
    }
    s
}
