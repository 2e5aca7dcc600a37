//! The operations both storage engines support.

use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use crate::array::TtcArrayStore;
use crate::error::{Error, Result};
use crate::pager::{IoCounters, PagerConfig};
use crate::tree::TtcTreeStore;
use crate::types::{Contact, GraphParams, Timestamp, Vertex};

pub trait ReachabilityEngine {
    fn params(&self) -> GraphParams;

    /// Inserts a contact and updates every affected reachability record.
    /// Returns false when the contact was already implied.
    fn add_contact(&mut self, c: Contact) -> Result<bool>;

    fn can_reach(&mut self, u: Vertex, v: Vertex, t1: Timestamp, t2: Timestamp) -> Result<bool>;

    fn is_connected(&mut self, t1: Timestamp, t2: Timestamp) -> Result<bool>;

    fn counters(&self) -> IoCounters;

    fn reset_counters(&mut self);

    fn flush(&mut self) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EngineKind {
    Array,
    Tree,
}

impl EngineKind {
    pub const ALL: [EngineKind; 2] = [EngineKind::Array, EngineKind::Tree];

    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Array => "ttc-array",
            EngineKind::Tree => "ttc-tree",
        }
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EngineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ttc-array" | "array" => Ok(EngineKind::Array),
            "ttc-tree" | "tree" => Ok(EngineKind::Tree),
            _ => Err(Error::invalid(format!("unknown engine {s:?} (expected ttc-array or ttc-tree)"))),
        }
    }
}

/// Creates a fresh store of the given kind at `path`.
pub fn create_engine(kind: EngineKind, path: &Path, params: GraphParams, config: PagerConfig) -> Result<Box<dyn ReachabilityEngine>> {
    Ok(match kind {
        EngineKind::Array => Box::new(TtcArrayStore::create(path, params, config)?),
        EngineKind::Tree => Box::new(TtcTreeStore::create(path, params, config)?),
    })
}

/// Which engine wrote the store at `path`, judged by its magic bytes.
pub fn detect_engine(path: &Path) -> Result<EngineKind> {
    let mut file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => e.into(),
    })?;
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic).map_err(|_| Error::BadHeader(format!("{} is too short to be a store", path.display())))?;
    if magic == crate::array::MAGIC {
        Ok(EngineKind::Array)
    } else if magic == crate::tree::MAGIC {
        Ok(EngineKind::Tree)
    } else {
        Err(Error::BadHeader(format!("{} is not a reachability store", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in EngineKind::ALL {
            assert_eq!(k.name().parse::<EngineKind>().unwrap(), k);
        }
        assert_eq!("tree".parse::<EngineKind>().unwrap(), EngineKind::Tree);
        assert!("btree".parse::<EngineKind>().is_err());
    }
}
