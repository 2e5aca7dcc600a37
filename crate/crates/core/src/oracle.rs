//! Brute-force reachability, used as ground truth by the test suites.
//!
//! Everything here works directly on the contact list by relaxing contacts
//! to a fixpoint. It is quadratic or worse and meant for small instances.

use std::collections::BTreeSet;

use crate::bptree::IntervalKey;
use crate::types::{ContactSet, Timestamp, Vertex};

/// Earliest arrival at every vertex for journeys leaving `u` at or after `t1`.
/// The entry for `u` itself is `None`.
pub fn earliest_arrivals_from(cs: &ContactSet, u: Vertex, t1: Timestamp) -> Vec<Option<Timestamp>> {
    let delta = cs.params().delta;
    let mut ready: Vec<Option<Timestamp>> = vec![None; cs.params().n as usize];
    ready[u as usize] = Some(t1);
    loop {
        let mut changed = false;
        for c in cs.contacts() {
            let Some(at) = ready[c.u as usize] else { continue };
            if c.t < at || c.v == u {
                continue;
            }
            let arrival = c.t + delta;
            let slot = &mut ready[c.v as usize];
            if slot.is_none_or(|cur| arrival < cur) {
                *slot = Some(arrival);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    ready[u as usize] = None;
    ready
}

pub fn earliest_arrival(cs: &ContactSet, u: Vertex, t1: Timestamp, v: Vertex) -> Option<Timestamp> {
    earliest_arrivals_from(cs, u, t1)[v as usize]
}

/// Latest departure from every vertex for journeys reaching `v` no later
/// than `t2`. The entry for `v` itself is `None`.
pub fn latest_departures_to(cs: &ContactSet, v: Vertex, t2: Timestamp) -> Vec<Option<Timestamp>> {
    let delta = u64::from(cs.params().delta);
    let mut deadline: Vec<Option<Timestamp>> = vec![None; cs.params().n as usize];
    deadline[v as usize] = Some(t2);
    loop {
        let mut changed = false;
        for c in cs.contacts() {
            let Some(by) = deadline[c.v as usize] else { continue };
            if u64::from(c.t) + delta > u64::from(by) || c.u == v {
                continue;
            }
            let slot = &mut deadline[c.u as usize];
            if slot.is_none_or(|cur| c.t > cur) {
                *slot = Some(c.t);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    deadline[v as usize] = None;
    deadline
}

pub fn latest_departure(cs: &ContactSet, v: Vertex, t2: Timestamp, u: Vertex) -> Option<Timestamp> {
    latest_departures_to(cs, v, t2)[u as usize]
}

pub fn can_reach(cs: &ContactSet, u: Vertex, v: Vertex, t1: Timestamp, t2: Timestamp) -> bool {
    earliest_arrival(cs, u, t1, v).is_some_and(|a| a <= t2)
}

/// True iff every ordered pair of distinct vertices is connected within `[t1, t2]`.
pub fn is_connected(cs: &ContactSet, t1: Timestamp, t2: Timestamp) -> bool {
    let n = cs.params().n;
    (0..n).all(|u| {
        let arr = earliest_arrivals_from(cs, u, t1);
        (0..n).filter(|&v| v != u).all(|v| arr[v as usize].is_some_and(|a| a <= t2))
    })
}

/// The containment-minimal set of `[departure, arrival]` intervals of
/// journeys from `u` to `v`, sorted.
pub fn enumerate_nonredundant(cs: &ContactSet, u: Vertex, v: Vertex) -> Vec<IntervalKey> {
    let mut found = BTreeSet::new();
    for d in 1..=cs.params().tau {
        if let Some(arrival) = earliest_arrival(cs, u, d, v) {
            let departure = latest_departure(cs, v, arrival, u).expect("a journey arriving at `arrival` exists");
            found.insert(IntervalKey::new(departure, arrival));
        }
    }
    let all: Vec<IntervalKey> = found.into_iter().collect();
    all.iter()
        .filter(|a| !all.iter().any(|b| b != *a && b.t_minus >= a.t_minus && b.t_plus <= a.t_plus))
        .copied()
        .collect()
}
