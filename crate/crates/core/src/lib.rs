//! External-memory reachability indexes for temporal graphs.
//!
//! Two engines answer the same questions over a stream of contacts
//! `(u, v, t)`: [`TtcArrayStore`] keeps two dense `n x tau x n` arrays on
//! disk, [`TtcTreeStore`] keeps one B+-tree of intervals per vertex pair.
//! Both go through a counting [`PageStore`] so page traffic can be measured.

pub mod array;
pub mod bench;
pub mod bptree;
pub mod emeg;
pub mod engine;
pub mod error;
pub mod ingest;
pub mod oracle;
pub mod pager;
pub mod tree;
pub mod types;
pub mod verify;

pub use array::TtcArrayStore;
pub use bptree::{BpTree, IntervalKey, NodeLayout, TreeStore};
pub use engine::{create_engine, detect_engine, EngineKind, ReachabilityEngine};
pub use error::{Error, Result};
pub use pager::{IoCounters, PageId, PageStore, PagerConfig, DEFAULT_CACHE_PAGES, DEFAULT_PAGE_SIZE};
pub use tree::TtcTreeStore;
pub use types::{validate_journey, Contact, ContactSet, GraphParams, Journey, RTuple, Timestamp, Vertex, DEFAULT_DELTA};
