//! Domain types shared by every engine: graph parameters, contacts,
//! journeys and R-tuples.
//!
//! Vertices are dense 0-based ids. Timestamps are 1-based: departures lie in
//! `[1, tau]` and arrivals in `[1 + delta, tau + delta]`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vertex = u32;
pub type Timestamp = u32;

/// Default latency, the value used throughout the experiments.
pub const DEFAULT_DELTA: Timestamp = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GraphParams {
    pub n: u32,
    pub tau: u32,
    pub delta: u32,
}

impl GraphParams {
    pub fn new(n: u32, tau: u32, delta: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParams("n must be at least 1".into()));
        }
        if n == u32::MAX {
            return Err(Error::InvalidParams("n must leave room for the successor sentinel".into()));
        }
        if tau == 0 {
            return Err(Error::InvalidParams("tau must be at least 1".into()));
        }
        // u32::MAX is the "no arrival" sentinel, so tau + delta must stay below it.
        match tau.checked_add(delta) {
            Some(max) if max < u32::MAX => Ok(GraphParams { n, tau, delta }),
            _ => Err(Error::InvalidParams(format!(
                "tau + delta overflows the timestamp range (tau={tau}, delta={delta})"
            ))),
        }
    }

    /// Latest possible arrival, `tau + delta`.
    pub fn max_arrival(&self) -> Timestamp {
        self.tau + self.delta
    }

    /// Number of cells in one `n x tau x n` array.
    pub fn cells_per_array(&self) -> u64 {
        u64::from(self.n) * u64::from(self.n) * u64::from(self.tau)
    }

    pub fn check_vertex(&self, w: Vertex) -> Result<()> {
        if w < self.n {
            Ok(())
        } else {
            Err(Error::invalid(format!("vertex {w} out of range [0, {})", self.n)))
        }
    }

    pub fn check_departure(&self, t: Timestamp) -> Result<()> {
        if (1..=self.tau).contains(&t) {
            Ok(())
        } else {
            Err(Error::invalid(format!("timestamp {t} out of range [1, {}]", self.tau)))
        }
    }

    pub fn check_contact(&self, c: &Contact) -> Result<()> {
        self.check_vertex(c.u)?;
        self.check_vertex(c.v)?;
        if c.u == c.v {
            return Err(Error::invalid(format!("self-loop contact {c}")));
        }
        self.check_departure(c.t)
    }

    /// Validates a query window `[t1, t2]` and clamps `t2` to `tau + delta`.
    pub fn check_window(&self, t1: Timestamp, t2: Timestamp) -> Result<Timestamp> {
        self.check_departure(t1)?;
        if t2 < t1 {
            return Err(Error::invalid(format!("empty window [{t1}, {t2}]")));
        }
        Ok(t2.min(self.max_arrival()))
    }
}

/// A single edge activation `(u, v, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Contact {
    pub u: Vertex,
    pub v: Vertex,
    pub t: Timestamp,
}

impl Contact {
    pub const fn new(u: Vertex, v: Vertex, t: Timestamp) -> Self {
        Contact { u, v, t }
    }
}

impl fmt::Display for Contact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.u, self.v, self.t)
    }
}

impl From<(Vertex, Vertex, Timestamp)> for Contact {
    fn from((u, v, t): (Vertex, Vertex, Timestamp)) -> Self {
        Contact { u, v, t }
    }
}

/// A sequence of contacts. Validity is checked separately because
/// it depends on the latency.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Journey {
    pub contacts: Vec<Contact>,
}

impl Journey {
    pub fn new(contacts: Vec<Contact>) -> Self {
        Journey { contacts }
    }

    pub fn is_empty(&self) -> bool {
        self.contacts.is_empty()
    }

    pub fn len(&self) -> usize {
        self.contacts.len()
    }

    pub fn source(&self) -> Option<Vertex> {
        self.contacts.first().map(|c| c.u)
    }

    pub fn target(&self) -> Option<Vertex> {
        self.contacts.last().map(|c| c.v)
    }
}

impl FromIterator<Contact> for Journey {
    fn from_iter<I: IntoIterator<Item = Contact>>(iter: I) -> Self {
        Journey { contacts: iter.into_iter().collect() }
    }
}

/// True iff `j` is a non-empty, chained, time-respecting journey whose
/// contacts are all valid for `params`.
pub fn validate_journey(j: &Journey, params: &GraphParams) -> bool {
    if j.contacts.is_empty() {
        return false;
    }
    if j.contacts.iter().any(|c| params.check_contact(c).is_err()) {
        return false;
    }
    j.contacts.windows(2).all(|w| {
        let (a, b) = (w[0], w[1]);
        a.v == b.u && u64::from(b.t) >= u64::from(a.t) + u64::from(params.delta)
    })
}

/// `(departure, arrival)` of a valid journey.
pub fn journey_window(j: &Journey, params: &GraphParams) -> Result<(Timestamp, Timestamp)> {
    if !validate_journey(j, params) {
        return Err(Error::invalid("journey is empty or not time-respecting"));
    }
    let first = j.contacts[0];
    let last = j.contacts[j.contacts.len() - 1];
    Ok((first.t, last.t + params.delta))
}

/// Reachability record: `u` reaches `v` departing at `t_minus`, arriving at `t_plus`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RTuple {
    pub u: Vertex,
    pub v: Vertex,
    pub t_minus: Timestamp,
    pub t_plus: Timestamp,
}

/// A validated, deduplicated collection of contacts together with the
/// parameters they were checked against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContactSet {
    params: GraphParams,
    contacts: Vec<Contact>,
}

impl ContactSet {
    /// Validates every contact and drops duplicates, keeping first occurrences
    /// in their original order.
    pub fn new(params: GraphParams, contacts: impl IntoIterator<Item = Contact>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for c in contacts {
            params.check_contact(&c)?;
            if seen.insert(c) {
                out.push(c);
            }
        }
        Ok(ContactSet { params, contacts: out })
    }

    pub fn params(&self) -> GraphParams {
        self.params
    }

    pub fn contacts(&self) -> &[Contact] {
        &self.contacts
    }

    pub fn len(&self) -> usize {
        self.contacts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contacts.is_empty()
    }

    pub fn into_contacts(self) -> Vec<Contact> {
        self.contacts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(delta: u32) -> GraphParams {
        GraphParams::new(3, 4, delta).unwrap()
    }

    fn journey(cs: &[(u32, u32, u32)]) -> Journey {
        cs.iter().copied().map(Contact::from).collect()
    }

    #[test]
    fn triangle_journey_via_w_is_valid() {
        let j = journey(&[(0, 2, 3), (2, 1, 4)]);
        assert!(validate_journey(&j, &params(1)));
        assert_eq!(journey_window(&j, &params(1)).unwrap(), (3, 5));
    }

    #[test]
    fn rejects_latency_violation() {
        let p = GraphParams::new(3, 4, 1).unwrap();
        assert!(!validate_journey(&journey(&[(0, 1, 2), (1, 2, 2)]), &p));
        // the same pair is fine with zero latency
        let p0 = GraphParams::new(3, 4, 0).unwrap();
        assert!(validate_journey(&journey(&[(0, 1, 2), (1, 2, 2)]), &p0));
    }

    #[test]
    fn rejects_broken_chain() {
        let p = GraphParams::new(4, 5, 1).unwrap();
        assert!(!validate_journey(&journey(&[(0, 1, 1), (2, 3, 5)]), &p));
    }

    #[test]
    fn rejects_empty_and_out_of_range() {
        let p = params(1);
        assert!(!validate_journey(&Journey::default(), &p));
        assert!(journey_window(&Journey::default(), &p).is_err());
        assert!(!validate_journey(&journey(&[(0, 1, 5)]), &p));
        assert!(!validate_journey(&journey(&[(0, 3, 1)]), &p));
        assert!(!validate_journey(&journey(&[(1, 1, 1)]), &p));
    }

    #[test]
    fn single_contact_windows() {
        let j = journey(&[(0, 1, 1)]);
        assert_eq!(journey_window(&j, &params(1)).unwrap(), (1, 2));
        assert_eq!(journey_window(&j, &params(0)).unwrap(), (1, 1));
    }

    #[test]
    fn params_validation() {
        assert!(GraphParams::new(0, 1, 1).is_err());
        assert!(GraphParams::new(1, 0, 1).is_err());
        assert!(GraphParams::new(1, u32::MAX - 1, 1).is_err());
        let p = GraphParams::new(1, 1, 0).unwrap();
        assert_eq!(p.cells_per_array(), 1);
        assert_eq!(GraphParams::new(512, 64, 1).unwrap().cells_per_array() * 2, 33_554_432);
    }

    #[test]
    fn window_clamps_and_rejects() {
        let p = params(1);
        assert_eq!(p.check_window(1, 100).unwrap(), 5);
        assert!(p.check_window(0, 3).is_err());
        assert!(p.check_window(3, 2).is_err());
        assert!(p.check_window(5, 9).is_err());
    }

    #[test]
    fn contact_set_dedups_in_order() {
        let p = params(1);
        let cs = ContactSet::new(p, [(0, 1, 1), (1, 2, 2), (0, 1, 1)].map(Contact::from)).unwrap();
        assert_eq!(cs.contacts(), &[Contact::new(0, 1, 1), Contact::new(1, 2, 2)]);
        assert!(ContactSet::new(p, [Contact::new(0, 0, 1)]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn chain() -> impl Strategy<Value = (u32, Vec<Contact>)> {
            (0u32..3, 2usize..6).prop_flat_map(|(delta, len)| {
                (
                    Just(delta),
                    proptest::collection::vec(0u32..6, len + 1),
                    proptest::collection::vec(0u32..3, len),
                )
                    .prop_filter_map("self loops", move |(delta, verts, gaps)| {
                        if verts.windows(2).any(|w| w[0] == w[1]) {
                            return None;
                        }
                        let mut t = 1;
                        let mut out = Vec::new();
                        for i in 0..len {
                            out.push(Contact::new(verts[i], verts[i + 1], t));
                            t += delta + gaps[i];
                        }
                        Some((delta, out))
                    })
            })
        }

        proptest! {
            #[test]
            fn valid_journeys_respect_latency_budget((delta, cs) in chain()) {
                let p = GraphParams::new(6, 64, delta).unwrap();
                let j = Journey::new(cs.clone());
                prop_assert!(validate_journey(&j, &p));
                let (dep, arr) = journey_window(&j, &p).unwrap();
                prop_assert!(u64::from(dep) + cs.len() as u64 * u64::from(delta) <= u64::from(arr));
            }

            #[test]
            fn unchained_permutations_are_rejected((delta, cs) in chain(), rot in 1usize..5) {
                let p = GraphParams::new(6, 64, delta).unwrap();
                let mut perm = cs.clone();
                perm.rotate_left(rot % cs.len());
                let chained = perm.windows(2).all(|w| w[0].v == w[1].u);
                prop_assume!(!chained);
                prop_assert!(!validate_journey(&Journey::new(perm), &p));
            }
        }
    }
}
