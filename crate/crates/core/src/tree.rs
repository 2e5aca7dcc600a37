//! The tree baseline: one B+-tree of non-redundant intervals per ordered
//! vertex pair.
//!
//! File layout: page 0 holds a header, then a directory of `n * n` tree
//! handles, then tree nodes allocated on demand. Directory entries are 48
//! bytes, little-endian:
//!
//! ```text
//! root u64 | height u32 | reserved u32 | leftmost u64 | rightmost u64 | min (u32, u32) | max (u32, u32)
//! ```
//!
//! The directory is kept in memory and written back on [`TtcTreeStore::flush`].
//! Pages freed by interval excision are reused within a session but are not
//! recorded in the file.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::bptree::{BpTree, IntervalKey, NodeLayout, TreeStore, NIL};
use crate::engine::ReachabilityEngine;
use crate::error::{Error, Result};
use crate::pager::{IoCounters, PageId, PageStore, PagerConfig};
use crate::types::{Contact, GraphParams, Timestamp, Vertex};

pub const MAGIC: [u8; 4] = *b"TTCT";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 36;
pub const DIR_ENTRY_LEN: usize = 48;
const DIR_START: PageId = 1;

fn dir_pages(n: u32, page_size: usize) -> u64 {
    let bytes = u64::from(n) * u64::from(n) * DIR_ENTRY_LEN as u64;
    bytes.div_ceil(page_size as u64)
}

fn encode_entry(t: &BpTree, b: &mut [u8]) {
    b[0..8].copy_from_slice(&t.root.to_le_bytes());
    b[8..12].copy_from_slice(&t.height.to_le_bytes());
    b[12..16].fill(0);
    b[16..24].copy_from_slice(&t.leftmost.to_le_bytes());
    b[24..32].copy_from_slice(&t.rightmost.to_le_bytes());
    for (off, k) in [(32, t.min), (40, t.max)] {
        b[off..off + 4].copy_from_slice(&k.t_minus.to_le_bytes());
        b[off + 4..off + 8].copy_from_slice(&k.t_plus.to_le_bytes());
    }
}

fn decode_entry(b: &[u8]) -> BpTree {
    let u64_at = |o: usize| u64::from_le_bytes(b[o..o + 8].try_into().unwrap());
    let u32_at = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap());
    BpTree {
        root: u64_at(0),
        height: u32_at(8),
        leftmost: u64_at(16),
        rightmost: u64_at(24),
        min: IntervalKey::new(u32_at(32), u32_at(36)),
        max: IntervalKey::new(u32_at(40), u32_at(44)),
    }
}

pub struct TtcTreeStore {
    params: GraphParams,
    trees: TreeStore,
    dir: Vec<BpTree>,
    dir_dirty: bool,
}

impl std::fmt::Debug for TtcTreeStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TtcTreeStore").field("params", &self.params).field("trees", &self.trees).finish()
    }
}

impl TtcTreeStore {
    /// Creates an empty store at `path`, which must be absent or empty.
    pub fn create(path: impl AsRef<Path>, params: GraphParams, config: PagerConfig) -> Result<Self> {
        let path = path.as_ref();
        if path.exists() && std::fs::metadata(path)?.len() > 0 {
            return Err(Error::invalid(format!("{} already exists and is not empty", path.display())));
        }
        let mut pager = PageStore::open_with(path, config)?;
        let ps = pager.page_size();
        pager.allocate(1 + dir_pages(params.n, ps))?;
        let mut page = vec![0u8; ps];
        page[0..4].copy_from_slice(&MAGIC);
        page[4..8].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
        page[8..16].copy_from_slice(&u64::from(params.n).to_le_bytes());
        page[16..24].copy_from_slice(&u64::from(params.tau).to_le_bytes());
        page[24..32].copy_from_slice(&u64::from(params.delta).to_le_bytes());
        page[32..36].copy_from_slice(&(ps as u32).to_le_bytes());
        pager.write_page(0, &page)?;
        let layout = NodeLayout::for_page_size(ps);
        let mut store = TtcTreeStore {
            params,
            trees: TreeStore::new(pager, layout),
            dir: vec![BpTree::empty(); params.n as usize * params.n as usize],
            dir_dirty: true,
        };
        store.flush()?;
        store.reset_counters();
        Ok(store)
    }

    pub fn open(path: impl AsRef<Path>, cache_pages: usize) -> Result<Self> {
        let path = path.as_ref();
        let mut file = File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
            _ => e.into(),
        })?;
        let mut h = [0u8; HEADER_LEN];
        file.read_exact(&mut h).map_err(|_| Error::BadHeader("file shorter than a header".into()))?;
        if h[0..4] != MAGIC {
            return Err(Error::BadHeader("not a tree store (bad magic)".into()));
        }
        let version = u32::from_le_bytes(h[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::BadHeader(format!("unsupported version {version}")));
        }
        let field = |o: usize| u64::from_le_bytes(h[o..o + 8].try_into().unwrap());
        let narrow = |x: u64, what: &str| u32::try_from(x).map_err(|_| Error::BadHeader(format!("{what} {x} too large")));
        let params = GraphParams::new(narrow(field(8), "n")?, narrow(field(16), "tau")?, narrow(field(24), "delta")?)
            .map_err(|e| Error::BadHeader(e.to_string()))?;
        let ps = u32::from_le_bytes(h[32..36].try_into().unwrap()) as usize;
        let mut pager = PageStore::open(path, ps, cache_pages)?;
        let pages = dir_pages(params.n, ps);
        if pager.page_count() < 1 + pages {
            return Err(Error::Corrupt("directory truncated".into()));
        }
        let mut raw = Vec::with_capacity(pages as usize * ps);
        for p in 0..pages {
            pager.read(DIR_START + p, |b| raw.extend_from_slice(b))?;
        }
        let dir = raw
            .chunks_exact(DIR_ENTRY_LEN)
            .take(params.n as usize * params.n as usize)
            .map(decode_entry)
            .collect();
        pager.reset_counters();
        let layout = NodeLayout::for_page_size(ps);
        Ok(TtcTreeStore { params, trees: TreeStore::new(pager, layout), dir, dir_dirty: false })
    }

    pub fn params(&self) -> GraphParams {
        self.params
    }

    pub fn page_size(&self) -> usize {
        self.trees.pager().page_size()
    }

    pub fn counters(&self) -> IoCounters {
        self.trees.counters()
    }

    pub fn reset_counters(&mut self) {
        self.trees.reset_counters();
    }

    pub fn set_cache_capacity(&mut self, pages: usize) -> Result<()> {
        self.trees.set_cache_capacity(pages)
    }

    /// Writes the directory and every dirty node page.
    pub fn flush(&mut self) -> Result<()> {
        if self.dir_dirty {
            let ps = self.page_size();
            let mut raw = vec![0u8; dir_pages(self.params.n, ps) as usize * ps];
            for (t, b) in self.dir.iter().zip(raw.chunks_exact_mut(DIR_ENTRY_LEN)) {
                encode_entry(t, b);
            }
            for (i, page) in raw.chunks_exact(ps).enumerate() {
                self.trees.pager_mut().write_page(DIR_START + i as u64, page)?;
            }
            self.dir_dirty = false;
        }
        self.trees.flush()
    }

    fn slot(&self, u: Vertex, v: Vertex) -> usize {
        u as usize * self.params.n as usize + v as usize
    }

    fn check_pair(&self, u: Vertex, v: Vertex) -> Result<()> {
        self.params.check_vertex(u)?;
        self.params.check_vertex(v)?;
        if u == v {
            return Err(Error::invalid(format!("query endpoints must differ (got {u} twice)")));
        }
        Ok(())
    }

    /// Handle of tree `(u, v)`.
    pub fn tree(&self, u: Vertex, v: Vertex) -> Result<BpTree> {
        self.check_pair(u, v)?;
        Ok(self.dir[self.slot(u, v)])
    }

    /// Stored intervals of `(u, v)` in key order.
    pub fn intervals(&mut self, u: Vertex, v: Vertex) -> Result<Vec<IntervalKey>> {
        let t = self.tree(u, v)?;
        self.trees.keys(&t)
    }

    /// Adds `iv` to tree `(u, v)` unless a stored interval lies inside it.
    /// Stored intervals that contain `iv` are removed.
    pub fn insert_interval(&mut self, u: Vertex, v: Vertex, iv: IntervalKey) -> Result<bool> {
        self.check_pair(u, v)?;
        let p = self.params;
        if iv.t_minus < 1 || iv.t_minus > p.tau || iv.t_plus > p.max_arrival() || u64::from(iv.t_plus) < u64::from(iv.t_minus) + u64::from(p.delta) {
            return Err(Error::invalid(format!("interval {iv} is not a journey window")));
        }
        let slot = self.slot(u, v);
        let mut tree = self.dir[slot];
        if let Some(k) = self.trees.search_min_geq(&tree, iv.t_minus)? {
            if k.t_plus <= iv.t_plus {
                return Ok(false);
            }
        }
        // intervals containing iv: arrival >= iv.t_plus (a suffix) and
        // departure <= iv.t_minus (a prefix)
        let lo = self.trees.first_where(&tree, |k| k.t_plus >= iv.t_plus)?;
        let hi = self.trees.last_where(&tree, |k| k.t_minus <= iv.t_minus)?;
        if let (Some(lo), Some(hi)) = (lo, hi) {
            if lo <= hi {
                self.trees.delete_range(&mut tree, lo, hi)?;
            }
        }
        self.trees.insert(&mut tree, iv)?;
        self.dir[slot] = tree;
        self.dir_dirty = true;
        Ok(true)
    }

    /// Inserts contact `(u, v, t)` and every interval it creates.
    ///
    /// A pair `(a, b)` with `a != u` and `b != v` only gains an interval if
    /// both `(a, v)` and `(u, b)` did: otherwise an existing journey already
    /// witnesses something at least as good.
    pub fn add_contact(&mut self, c: Contact) -> Result<bool> {
        let p = self.params;
        p.check_contact(&c)?;
        let Contact { u, v, t } = c;
        let arrival = t + p.delta;
        let direct = IntervalKey::new(t, arrival);
        if let Some(k) = self.trees.search_min_geq(&self.dir[self.slot(u, v)], t)? {
            if k.t_plus <= arrival {
                return Ok(false);
            }
        }

        let n = p.n as usize;
        let mut before: Vec<Option<Timestamp>> = vec![None; n];
        let mut after: Vec<Option<Timestamp>> = vec![None; n];
        before[u as usize] = Some(t);
        after[v as usize] = Some(arrival);
        for w in (0..p.n).filter(|&w| w != u) {
            let tree = self.dir[self.slot(w, u)];
            before[w as usize] = self.trees.search_max_leq_arrival(&tree, t)?.map(|k| k.t_minus);
        }
        for w in (0..p.n).filter(|&w| w != v) {
            let tree = self.dir[self.slot(v, w)];
            after[w as usize] = self.trees.search_min_geq(&tree, arrival)?.map(|k| k.t_plus);
        }

        let mut left = vec![false; n];
        let mut right = vec![false; n];
        left[u as usize] = self.insert_interval(u, v, direct)?;
        right[v as usize] = left[u as usize];
        for w in (0..p.n).filter(|&w| w != u && w != v) {
            if let Some(dep) = before[w as usize] {
                left[w as usize] = self.insert_interval(w, v, IntervalKey::new(dep, arrival))?;
            }
            if let Some(arr) = after[w as usize] {
                right[w as usize] = self.insert_interval(u, w, IntervalKey::new(t, arr))?;
            }
        }
        for a in (0..p.n).filter(|&a| a != u && left[a as usize]) {
            let dep = before[a as usize].expect("changed pairs are reachable");
            for b in (0..p.n).filter(|&b| b != v && b != a && right[b as usize]) {
                let arr = after[b as usize].expect("changed pairs are reachable");
                self.insert_interval(a, b, IntervalKey::new(dep, arr))?;
            }
        }
        Ok(true)
    }

    pub fn can_reach(&mut self, u: Vertex, v: Vertex, t1: Timestamp, t2: Timestamp) -> Result<bool> {
        self.check_pair(u, v)?;
        let t2 = self.params.check_window(t1, t2)?;
        let tree = self.dir[self.slot(u, v)];
        Ok(self.trees.search_min_geq(&tree, t1)?.is_some_and(|k| k.t_plus <= t2))
    }

    pub fn is_connected(&mut self, t1: Timestamp, t2: Timestamp) -> Result<bool> {
        self.params.check_window(t1, t2)?;
        for u in 0..self.params.n {
            for v in (0..self.params.n).filter(|&v| v != u) {
                if !self.can_reach(u, v, t1, t2)? {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Structural problems in any tree plus violations of pairwise
    /// non-containment.
    pub fn check_invariants(&mut self) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for u in 0..self.params.n {
            for v in (0..self.params.n).filter(|&v| v != u) {
                let tree = self.dir[self.slot(u, v)];
                for msg in self.trees.validate(&tree)? {
                    bad.push(format!("tree ({u}, {v}): {msg}"));
                }
                let keys = self.trees.keys(&tree)?;
                if !keys.windows(2).all(|w| w[0].t_minus < w[1].t_minus && w[0].t_plus < w[1].t_plus) {
                    bad.push(format!("tree ({u}, {v}): departure and arrival orders disagree"));
                }
            }
        }
        Ok(bad)
    }

    /// Number of non-empty trees.
    pub fn occupied_pairs(&self) -> usize {
        self.dir.iter().filter(|t| t.root != NIL).count()
    }
}

impl ReachabilityEngine for TtcTreeStore {
    fn params(&self) -> GraphParams {
        self.params
    }

    fn add_contact(&mut self, c: Contact) -> Result<bool> {
        TtcTreeStore::add_contact(self, c)
    }

    fn can_reach(&mut self, u: Vertex, v: Vertex, t1: Timestamp, t2: Timestamp) -> Result<bool> {
        TtcTreeStore::can_reach(self, u, v, t1, t2)
    }

    fn is_connected(&mut self, t1: Timestamp, t2: Timestamp) -> Result<bool> {
        TtcTreeStore::is_connected(self, t1, t2)
    }

    fn counters(&self) -> IoCounters {
        TtcTreeStore::counters(self)
    }

    fn reset_counters(&mut self) {
        TtcTreeStore::reset_counters(self)
    }

    fn flush(&mut self) -> Result<()> {
        TtcTreeStore::flush(self)
    }
}
