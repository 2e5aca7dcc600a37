//! Disk-resident B+-tree over interval keys with join and split.
//!
//! One node per page. Node layout (little-endian):
//!
//! ```text
//! 0       kind u8 (1 = leaf, 2 = internal)
//! 1       reserved u8
//! 2..4    key count u16
//! 4..8    reserved u32
//! 8..16   leaf: next sibling page id (u64::MAX = none); internal: unused
//! 16..    leaf: count x (t_minus u32, t_plus u32)
//!         internal: count x key (8 bytes), then count + 1 child page ids (u64)
//! ```
//!
//! A tree is a [`BpTree`] handle (root, height, leftmost and rightmost leaf,
//! smallest and largest key). The handle is the only place that metadata
//! lives; nodes only know their keys and children. Separators are exact:
//! the separator left of child `i` equals the smallest key in that child.
//!
//! Every public operation runs against a private node buffer so a page is
//! read and written at most once per operation.
//! [`TreeStore::last_op_pages`] reports how many distinct pages the last
//! operation touched.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pager::{IoCounters, PageId, PageStore, PagerConfig};
use crate::types::Timestamp;

pub const NIL: PageId = u64::MAX;
pub const NODE_HEADER: usize = 16;
const KEY_WIDTH: usize = 8;
const CHILD_WIDTH: usize = 8;
const KIND_LEAF: u8 = 1;
const KIND_INTERNAL: u8 = 2;

/// A reachability interval `[t_minus, t_plus]`.
///
/// Keys order by departure, then arrival. Within a containment-free set the
/// two orders agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IntervalKey {
    pub t_minus: Timestamp,
    pub t_plus: Timestamp,
}

impl IntervalKey {
    pub const fn new(t_minus: Timestamp, t_plus: Timestamp) -> Self {
        IntervalKey { t_minus, t_plus }
    }

    /// `self` contains `other` (non-strictly).
    pub fn contains(&self, other: &IntervalKey) -> bool {
        self.t_minus <= other.t_minus && self.t_plus >= other.t_plus
    }

    /// The smallest key strictly greater than `self`.
    pub fn successor(&self) -> IntervalKey {
        match self.t_plus.checked_add(1) {
            Some(p) => IntervalKey::new(self.t_minus, p),
            None => IntervalKey::new(self.t_minus + 1, 0),
        }
    }

    fn decode(b: &[u8]) -> Self {
        IntervalKey {
            t_minus: u32::from_le_bytes(b[0..4].try_into().unwrap()),
            t_plus: u32::from_le_bytes(b[4..8].try_into().unwrap()),
        }
    }

    fn encode(&self, b: &mut [u8]) {
        b[0..4].copy_from_slice(&self.t_minus.to_le_bytes());
        b[4..8].copy_from_slice(&self.t_plus.to_le_bytes());
    }
}

impl std::fmt::Display for IntervalKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.t_minus, self.t_plus)
    }
}

/// Handle to one tree. `height` is 1 for a single leaf and 0 when empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BpTree {
    pub root: PageId,
    pub height: u32,
    pub leftmost: PageId,
    pub rightmost: PageId,
    pub min: IntervalKey,
    pub max: IntervalKey,
}

impl Default for BpTree {
    fn default() -> Self {
        BpTree::empty()
    }
}

impl BpTree {
    pub const fn empty() -> Self {
        BpTree {
            root: NIL,
            height: 0,
            leftmost: NIL,
            rightmost: NIL,
            min: IntervalKey::new(0, 0),
            max: IntervalKey::new(0, 0),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.root == NIL
    }

    pub fn min_key(&self) -> Option<IntervalKey> {
        (!self.is_empty()).then_some(self.min)
    }

    pub fn max_key(&self) -> Option<IntervalKey> {
        (!self.is_empty()).then_some(self.max)
    }
}

/// Node capacities. Derived from the page size unless overridden.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeLayout {
    /// Maximum keys in a leaf.
    pub leaf_capacity: usize,
    /// Maximum keys (separators) in an internal node.
    pub internal_capacity: usize,
}

impl NodeLayout {
    pub fn for_page_size(page_size: usize) -> Self {
        NodeLayout {
            leaf_capacity: (page_size - NODE_HEADER) / KEY_WIDTH,
            internal_capacity: (page_size - NODE_HEADER - CHILD_WIDTH) / (KEY_WIDTH + CHILD_WIDTH),
        }
    }

    /// Smaller nodes on the same page size, to get tall trees from few keys.
    pub fn with_capacities(page_size: usize, leaf_capacity: usize, internal_capacity: usize) -> Result<Self> {
        let max = Self::for_page_size(page_size);
        if !(3..=max.leaf_capacity).contains(&leaf_capacity) || !(3..=max.internal_capacity).contains(&internal_capacity) {
            return Err(Error::InvalidParams(format!(
                "capacities {leaf_capacity}/{internal_capacity} outside [3, {}]/[3, {}]",
                max.leaf_capacity, max.internal_capacity
            )));
        }
        Ok(NodeLayout { leaf_capacity, internal_capacity })
    }

    pub fn leaf_min(&self) -> usize {
        self.leaf_capacity.div_ceil(2)
    }

    pub fn internal_min_children(&self) -> usize {
        (self.internal_capacity + 2) / 2
    }

    /// Smallest fanout of a non-root internal node.
    pub fn min_fanout(&self) -> usize {
        self.internal_min_children()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Node {
    Leaf { keys: Vec<IntervalKey>, next: PageId },
    Internal { keys: Vec<IntervalKey>, children: Vec<PageId> },
}

impl Node {
    fn decode(b: &[u8]) -> Result<Node> {
        let count = u16::from_le_bytes([b[2], b[3]]) as usize;
        let key = |i: usize| IntervalKey::decode(&b[NODE_HEADER + i * KEY_WIDTH..]);
        match b[0] {
            KIND_LEAF => {
                let next = u64::from_le_bytes(b[8..16].try_into().unwrap());
                Ok(Node::Leaf { keys: (0..count).map(key).collect(), next })
            }
            KIND_INTERNAL => {
                let base = NODE_HEADER + count * KEY_WIDTH;
                let children = (0..=count)
                    .map(|i| u64::from_le_bytes(b[base + i * CHILD_WIDTH..base + (i + 1) * CHILD_WIDTH].try_into().unwrap()))
                    .collect();
                Ok(Node::Internal { keys: (0..count).map(key).collect(), children })
            }
            k => Err(Error::Corrupt(format!("unknown node kind {k}"))),
        }
    }

    fn encode(&self, b: &mut [u8]) {
        b.fill(0);
        match self {
            Node::Leaf { keys, next } => {
                b[0] = KIND_LEAF;
                b[2..4].copy_from_slice(&(keys.len() as u16).to_le_bytes());
                b[8..16].copy_from_slice(&next.to_le_bytes());
                for (i, k) in keys.iter().enumerate() {
                    k.encode(&mut b[NODE_HEADER + i * KEY_WIDTH..]);
                }
            }
            Node::Internal { keys, children } => {
                b[0] = KIND_INTERNAL;
                b[2..4].copy_from_slice(&(keys.len() as u16).to_le_bytes());
                for (i, k) in keys.iter().enumerate() {
                    k.encode(&mut b[NODE_HEADER + i * KEY_WIDTH..]);
                }
                let base = NODE_HEADER + keys.len() * KEY_WIDTH;
                for (i, c) in children.iter().enumerate() {
                    b[base + i * CHILD_WIDTH..base + (i + 1) * CHILD_WIDTH].copy_from_slice(&c.to_le_bytes());
                }
            }
        }
    }

    fn keys(&self) -> &[IntervalKey] {
        match self {
            Node::Leaf { keys, .. } | Node::Internal { keys, .. } => keys,
        }
    }

    fn children(&self) -> &[PageId] {
        match self {
            Node::Internal { children, .. } => children,
            Node::Leaf { .. } => &[],
        }
    }

    /// Entries counted the way capacities are: keys for leaves, children
    /// for internal nodes.
    fn size(&self) -> usize {
        match self {
            Node::Leaf { keys, .. } => keys.len(),
            Node::Internal { children, .. } => children.len(),
        }
    }
}

/// A subtree without leaf metadata, as used inside split and join.
#[derive(Debug, Clone, Copy)]
struct Part {
    root: PageId,
    height: u32,
    min: IntervalKey,
}

impl Part {
    const EMPTY: Part = Part { root: NIL, height: 0, min: IntervalKey::new(0, 0) };

    fn is_empty(&self) -> bool {
        self.root == NIL
    }
}

/// Facts about the leaf level collected while splitting.
#[derive(Debug, Default)]
struct SplitLeaf {
    left_leaf: PageId,
    left_max: Option<IntervalKey>,
    right_leaf: PageId,
    /// The split leaf and the new page that took its upper half.
    moved: Option<(PageId, PageId)>,
}

/// Node buffer for one operation.
struct Op<'a> {
    pager: &'a mut PageStore,
    free: &'a mut Vec<PageId>,
    layout: NodeLayout,
    nodes: HashMap<PageId, Node>,
    dirty: HashSet<PageId>,
    touched: HashSet<PageId>,
    /// leaf pages absorbed by a merge, mapped to the surviving page
    renamed: HashMap<PageId, PageId>,
    released: Vec<PageId>,
}

impl<'a> Op<'a> {
    fn node(&mut self, id: PageId) -> Result<&Node> {
        if !self.nodes.contains_key(&id) {
            let node = self.pager.read(id, Node::decode)??;
            self.touched.insert(id);
            self.nodes.insert(id, node);
        }
        Ok(&self.nodes[&id])
    }

    fn take(&mut self, id: PageId) -> Result<Node> {
        self.node(id)?;
        Ok(self.nodes.remove(&id).expect("node loaded"))
    }

    fn put(&mut self, id: PageId, node: Node) {
        self.touched.insert(id);
        self.dirty.insert(id);
        self.nodes.insert(id, node);
    }

    fn alloc(&mut self, node: Node) -> Result<PageId> {
        let id = match self.free.pop() {
            Some(id) => id,
            None => self.pager.allocate(1)?,
        };
        self.put(id, node);
        Ok(id)
    }

    /// Frees a page. It becomes reusable only after this operation, so
    /// stale ids in `renamed` never alias a new node.
    fn release(&mut self, id: PageId) {
        self.nodes.remove(&id);
        self.dirty.remove(&id);
        self.released.push(id);
    }

    fn resolve(&self, mut id: PageId) -> PageId {
        while let Some(&to) = self.renamed.get(&id) {
            id = to;
        }
        id
    }

    fn finish(self) -> Result<usize> {
        let mut ids: Vec<PageId> = self.dirty.iter().copied().collect();
        ids.sort_unstable();
        let mut buf = vec![0u8; self.pager.page_size()];
        for id in ids {
            self.nodes[&id].encode(&mut buf);
            self.pager.write_page(id, &buf)?;
        }
        self.free.extend(self.released);
        Ok(self.touched.len())
    }

    fn underfull(&self, node: &Node) -> bool {
        match node {
            Node::Leaf { keys, .. } => keys.len() < self.layout.leaf_min(),
            Node::Internal { children, .. } => children.len() < self.layout.internal_min_children(),
        }
    }

    fn fits(&self, a: &Node, b: &Node) -> bool {
        match a {
            Node::Leaf { .. } => a.size() + b.size() <= self.layout.leaf_capacity,
            Node::Internal { .. } => a.size() + b.size() <= self.layout.internal_capacity + 1,
        }
    }

    fn overflows(&self, node: &Node) -> bool {
        match node {
            Node::Leaf { keys, .. } => keys.len() > self.layout.leaf_capacity,
            Node::Internal { keys, .. } => keys.len() > self.layout.internal_capacity,
        }
    }

    // ---- search -------------------------------------------------------

    /// First key for which `pred` holds; `pred` must be false on a prefix
    /// of the key order and true on the rest.
    fn first_where(&mut self, tree: &BpTree, pred: impl Fn(&IntervalKey) -> bool) -> Result<Option<IntervalKey>> {
        if tree.is_empty() {
            return Ok(None);
        }
        let mut id = tree.root;
        let mut candidate = None;
        loop {
            match self.node(id)? {
                Node::Internal { keys, children } => {
                    let j = keys.partition_point(|k| !pred(k));
                    if j < keys.len() {
                        candidate = Some(keys[j]);
                    }
                    id = children[j];
                }
                Node::Leaf { keys, .. } => {
                    let j = keys.partition_point(|k| !pred(k));
                    return Ok(keys.get(j).copied().or(candidate));
                }
            }
        }
    }

    /// Last key for which `pred` holds; `pred` must be true on a prefix.
    fn last_where(&mut self, tree: &BpTree, pred: impl Fn(&IntervalKey) -> bool) -> Result<Option<IntervalKey>> {
        if tree.is_empty() {
            return Ok(None);
        }
        let mut id = tree.root;
        loop {
            match self.node(id)? {
                Node::Internal { keys, children } => {
                    id = children[keys.partition_point(|k| pred(k))];
                }
                Node::Leaf { keys, .. } => {
                    let j = keys.partition_point(|k| pred(k));
                    return Ok(j.checked_sub(1).map(|j| keys[j]));
                }
            }
        }
    }

    // ---- insert -------------------------------------------------------

    fn insert(&mut self, tree: &mut BpTree, key: IntervalKey) -> Result<bool> {
        if tree.is_empty() {
            let id = self.alloc(Node::Leaf { keys: vec![key], next: NIL })?;
            *tree = BpTree { root: id, height: 1, leftmost: id, rightmost: id, min: key, max: key };
            return Ok(true);
        }
        let mut path: Vec<(PageId, usize)> = Vec::new();
        let mut id = tree.root;
        while let Node::Internal { keys, children } = self.node(id)? {
            let idx = keys.partition_point(|k| *k <= key);
            path.push((id, idx));
            id = children[idx];
        }
        let mut leaf = self.take(id)?;
        let Node::Leaf { keys, next } = &mut leaf else { unreachable!() };
        let pos = match keys.binary_search(&key) {
            Ok(_) => {
                self.nodes.insert(id, leaf);
                return Ok(false);
            }
            Err(pos) => pos,
        };
        keys.insert(pos, key);
        tree.min = tree.min.min(key);
        tree.max = tree.max.max(key);

        let mut carry = None;
        if keys.len() > self.layout.leaf_capacity {
            let upper = keys.split_off(keys.len().div_ceil(2));
            let sep = upper[0];
            let right = self.alloc(Node::Leaf { keys: upper, next: *next })?;
            *next = right;
            if tree.rightmost == id {
                tree.rightmost = right;
            }
            carry = Some((sep, right));
        }
        self.put(id, leaf);

        while let Some((sep, right)) = carry.take() {
            match path.pop() {
                Some((pid, idx)) => {
                    let mut parent = self.take(pid)?;
                    if let Node::Internal { keys, children } = &mut parent {
                        keys.insert(idx, sep);
                        children.insert(idx + 1, right);
                    }
                    if self.overflows(&parent) {
                        carry = Some(self.split_internal(&mut parent)?);
                    }
                    self.put(pid, parent);
                }
                None => {
                    tree.root = self.alloc(Node::Internal { keys: vec![sep], children: vec![tree.root, right] })?;
                    tree.height += 1;
                }
            }
        }
        Ok(true)
    }

    /// Moves the upper half of an overflowing internal node to a new page.
    fn split_internal(&mut self, node: &mut Node) -> Result<(IntervalKey, PageId)> {
        let Node::Internal { keys, children } = node else { unreachable!() };
        let left_children = children.len().div_ceil(2);
        let upper_children = children.split_off(left_children);
        let mut upper_keys = keys.split_off(left_children - 1);
        let sep = upper_keys.remove(0);
        let right = self.alloc(Node::Internal { keys: upper_keys, children: upper_children })?;
        Ok((sep, right))
    }

    // ---- join ---------------------------------------------------------

    /// Merges `right` (whose subtree starts at `sep`) into `left`.
    fn merge_into(&mut self, left: &mut Node, right: Node, sep: IntervalKey) {
        match (left, right) {
            (Node::Leaf { keys, next }, Node::Leaf { keys: rk, next: rn }) => {
                keys.extend(rk);
                *next = rn;
            }
            (Node::Internal { keys, children }, Node::Internal { keys: rk, children: rc }) => {
                keys.push(sep);
                keys.extend(rk);
                children.extend(rc);
            }
            _ => unreachable!("merging nodes of different heights"),
        }
    }

    /// Rebalances two adjacent nodes evenly, the left one taking the odd
    /// entry. Returns the new smallest key of the right node.
    fn share(&mut self, left: &mut Node, right: &mut Node, sep: IntervalKey) -> IntervalKey {
        match (left, right) {
            (Node::Leaf { keys, .. }, Node::Leaf { keys: rk, .. }) => {
                let mut all = std::mem::take(keys);
                all.append(rk);
                *rk = all.split_off(all.len().div_ceil(2));
                *keys = all;
                rk[0]
            }
            (Node::Internal { keys, children }, Node::Internal { keys: rk, children: rc }) => {
                let mut all_keys = std::mem::take(keys);
                all_keys.push(sep);
                all_keys.append(rk);
                let mut all_children = std::mem::take(children);
                all_children.append(rc);
                let left_children = all_children.len().div_ceil(2);
                *rc = all_children.split_off(left_children);
                *children = all_children;
                let mut upper = all_keys.split_off(left_children - 1);
                let new_sep = upper.remove(0);
                *rk = upper;
                *keys = all_keys;
                new_sep
            }
            _ => unreachable!("sharing nodes of different heights"),
        }
    }

    /// Joins two subtrees whose leaf chains are already linked.
    fn join_parts(&mut self, a: Part, b: Part) -> Result<Part> {
        if a.is_empty() {
            return Ok(b);
        }
        if b.is_empty() {
            return Ok(a);
        }
        if a.height >= b.height {
            self.join_right(a, b)
        } else {
            self.join_left(a, b)
        }
    }

    /// `a` is at least as tall as `b`: hang `b` off the right spine of `a`.
    fn join_right(&mut self, a: Part, b: Part) -> Result<Part> {
        if a.height == b.height {
            return self.join_roots(a, b);
        }
        // descend to the node one level above b's root
        let mut path = vec![a.root];
        let mut id = a.root;
        for _ in 0..a.height - b.height - 1 {
            id = *self.node(id)?.children().last().expect("internal node");
            path.push(id);
        }
        let mut rb = self.take(b.root)?;
        let attach = if self.underfull(&rb) {
            let q_id = *self.node(id)?.children().last().expect("internal node");
            let mut q = self.take(q_id)?;
            if self.fits(&q, &rb) {
                self.merge_into(&mut q, rb, b.min);
                self.put(q_id, q);
                self.release(b.root);
                self.renamed.insert(b.root, q_id);
                None
            } else {
                let sep = self.share(&mut q, &mut rb, b.min);
                self.put(q_id, q);
                self.put(b.root, rb);
                Some(sep)
            }
        } else {
            self.nodes.insert(b.root, rb);
            Some(b.min)
        };
        let Some(sep) = attach else {
            return Ok(a);
        };

        let mut carry = Some((sep, b.root));
        let mut root = a.root;
        let mut height = a.height;
        while let Some((sep, right)) = carry.take() {
            match path.pop() {
                Some(pid) => {
                    let mut p = self.take(pid)?;
                    if let Node::Internal { keys, children } = &mut p {
                        keys.push(sep);
                        children.push(right);
                    }
                    if self.overflows(&p) {
                        carry = Some(self.split_internal(&mut p)?);
                    }
                    self.put(pid, p);
                }
                None => {
                    root = self.alloc(Node::Internal { keys: vec![sep], children: vec![root, right] })?;
                    height += 1;
                }
            }
        }
        Ok(Part { root, height, min: a.min })
    }

    /// `b` is taller: hang `a` off the left spine of `b`.
    fn join_left(&mut self, a: Part, b: Part) -> Result<Part> {
        let mut path = vec![b.root];
        let mut id = b.root;
        for _ in 0..b.height - a.height - 1 {
            id = self.node(id)?.children()[0];
            path.push(id);
        }
        let mut ra = self.take(a.root)?;
        let attach = if self.underfull(&ra) {
            let q_id = self.node(id)?.children()[0];
            let mut q = self.take(q_id)?;
            if self.fits(&ra, &q) {
                // a's page survives and replaces q as the first child
                self.merge_into(&mut ra, q, b.min);
                self.put(a.root, ra);
                self.release(q_id);
                self.renamed.insert(q_id, a.root);
                let mut p = self.take(id)?;
                if let Node::Internal { children, .. } = &mut p {
                    children[0] = a.root;
                }
                self.put(id, p);
                None
            } else {
                let sep = self.share(&mut ra, &mut q, b.min);
                self.put(a.root, ra);
                self.put(q_id, q);
                Some(sep)
            }
        } else {
            self.nodes.insert(a.root, ra);
            Some(b.min)
        };
        let Some(sep) = attach else {
            return Ok(Part { root: b.root, height: b.height, min: a.min });
        };

        let mut carry = Some((sep, a.root, true));
        let mut root = b.root;
        let mut height = b.height;
        // the first insertion puts a in front; splits then push their upper
        // half right after the node that split, which is always child 0
        while let Some((sep, child, front)) = carry.take() {
            match path.pop() {
                Some(pid) => {
                    let mut p = self.take(pid)?;
                    if let Node::Internal { keys, children } = &mut p {
                        if front {
                            keys.insert(0, sep);
                            children.insert(0, child);
                        } else {
                            keys.insert(0, sep);
                            children.insert(1, child);
                        }
                    }
                    if self.overflows(&p) {
                        let (s, r) = self.split_internal(&mut p)?;
                        carry = Some((s, r, false));
                    }
                    self.put(pid, p);
                }
                None => {
                    root = self.alloc(Node::Internal { keys: vec![sep], children: vec![root, child] })?;
                    height += 1;
                }
            }
        }
        Ok(Part { root, height, min: a.min })
    }

    /// Joins two trees of equal height.
    fn join_roots(&mut self, a: Part, b: Part) -> Result<Part> {
        let mut ra = self.take(a.root)?;
        let mut rb = self.take(b.root)?;
        if self.fits(&ra, &rb) {
            self.merge_into(&mut ra, rb, b.min);
            self.put(a.root, ra);
            self.release(b.root);
            self.renamed.insert(b.root, a.root);
            return Ok(a);
        }
        let sep = if self.underfull(&ra) || self.underfull(&rb) {
            let sep = self.share(&mut ra, &mut rb, b.min);
            self.put(a.root, ra);
            self.put(b.root, rb);
            sep
        } else {
            self.nodes.insert(a.root, ra);
            self.nodes.insert(b.root, rb);
            b.min
        };
        let root = self.alloc(Node::Internal { keys: vec![sep], children: vec![a.root, b.root] })?;
        Ok(Part { root, height: a.height + 1, min: a.min })
    }

    fn join(&mut self, a: BpTree, b: BpTree) -> Result<BpTree> {
        self.renamed.clear();
        if a.is_empty() {
            return Ok(b);
        }
        if b.is_empty() {
            return Ok(a);
        }
        if a.max >= b.min {
            return Err(Error::JoinOrder(format!("left maximum {} is not below right minimum {}", a.max, b.min)));
        }
        let mut last = self.take(a.rightmost)?;
        if let Node::Leaf { next, .. } = &mut last {
            *next = b.leftmost;
        }
        self.put(a.rightmost, last);
        let part = self.join_parts(
            Part { root: a.root, height: a.height, min: a.min },
            Part { root: b.root, height: b.height, min: b.min },
        )?;
        Ok(BpTree {
            root: part.root,
            height: part.height,
            leftmost: self.resolve(a.leftmost),
            rightmost: self.resolve(b.rightmost),
            min: a.min,
            max: b.max,
        })
    }

    // ---- split --------------------------------------------------------

    fn split(&mut self, tree: BpTree, key: IntervalKey) -> Result<(BpTree, BpTree)> {
        self.renamed.clear();
        if tree.is_empty() || key <= tree.min {
            return Ok((BpTree::empty(), tree));
        }
        if key > tree.max {
            return Ok((tree, BpTree::empty()));
        }
        let mut leaf = SplitLeaf::default();
        let (l, r) = self.split_rec(tree.root, tree.height, tree.min, key, &mut leaf)?;
        let left_max = leaf.left_max.expect("left side holds the minimum");
        let mut right_last = tree.rightmost;
        if let Some((from, to)) = leaf.moved {
            if from == tree.rightmost {
                right_last = to;
            }
        }
        let left = BpTree {
            root: l.root,
            height: l.height,
            leftmost: self.resolve(tree.leftmost),
            rightmost: self.resolve(leaf.left_leaf),
            min: tree.min,
            max: left_max,
        };
        let right = BpTree {
            root: r.root,
            height: r.height,
            leftmost: self.resolve(leaf.right_leaf),
            rightmost: self.resolve(right_last),
            min: r.min,
            max: tree.max,
        };
        Ok((left, right))
    }

    fn split_rec(
        &mut self,
        id: PageId,
        height: u32,
        min: IntervalKey,
        key: IntervalKey,
        leaf: &mut SplitLeaf,
    ) -> Result<(Part, Part)> {
        let mut node = self.take(id)?;
        if height == 1 {
            let Node::Leaf { keys, next } = &mut node else {
                return Err(Error::Corrupt(format!("page {id} should be a leaf")));
            };
            let k = keys.partition_point(|x| *x < key);
            if k == 0 {
                // only reachable when nothing is below `key`
                leaf.right_leaf = id;
                self.nodes.insert(id, node);
                return Ok((Part::EMPTY, Part { root: id, height: 1, min }));
            }
            leaf.left_leaf = id;
            leaf.left_max = Some(keys[k - 1]);
            if k == keys.len() {
                leaf.right_leaf = *next;
                let had_next = *next != NIL;
                *next = NIL;
                if had_next {
                    self.put(id, node);
                } else {
                    self.nodes.insert(id, node);
                }
                return Ok((Part { root: id, height: 1, min }, Part::EMPTY));
            }
            let upper = keys.split_off(k);
            let upper_min = upper[0];
            let right = self.alloc(Node::Leaf { keys: upper, next: *next })?;
            *next = NIL;
            self.put(id, node);
            leaf.right_leaf = right;
            leaf.moved = Some((id, right));
            return Ok((Part { root: id, height: 1, min }, Part { root: right, height: 1, min: upper_min }));
        }

        let Node::Internal { keys, children } = node else {
            return Err(Error::Corrupt(format!("page {id} should be internal")));
        };
        let j = keys.partition_point(|x| *x < key);
        let child = children[j];
        let child_min = if j == 0 { min } else { keys[j - 1] };
        let right_min = keys.get(j).copied();
        let left_children = children[..j].to_vec();
        let left_keys = keys[..j.saturating_sub(1)].to_vec();
        let right_children = children[j + 1..].to_vec();
        let right_keys = if j + 1 < keys.len() { keys[j + 1..].to_vec() } else { Vec::new() };

        let (cl, cr) = self.split_rec(child, height - 1, child_min, key, leaf)?;

        let mut page = Some(id);
        let left_piece = self.piece(&mut page, left_keys, left_children, height, min)?;
        let right_piece = match right_min {
            Some(m) => self.piece(&mut page, right_keys, right_children, height, m)?,
            None => Part::EMPTY,
        };
        if let Some(unused) = page {
            self.release(unused);
        }
        Ok((self.join_parts(left_piece, cl)?, self.join_parts(cr, right_piece)?))
    }

    /// Turns a slice of an internal node into a subtree, collapsing
    /// single-child roots. Reuses `page` when a node is needed.
    fn piece(
        &mut self,
        page: &mut Option<PageId>,
        keys: Vec<IntervalKey>,
        children: Vec<PageId>,
        height: u32,
        min: IntervalKey,
    ) -> Result<Part> {
        match children.len() {
            0 => Ok(Part::EMPTY),
            1 => Ok(Part { root: children[0], height: height - 1, min }),
            _ => {
                let node = Node::Internal { keys, children };
                let id = match page.take() {
                    Some(id) => {
                        self.put(id, node);
                        id
                    }
                    None => self.alloc(node)?,
                };
                Ok(Part { root: id, height, min })
            }
        }
    }

    fn free_tree(&mut self, tree: &BpTree) -> Result<()> {
        if tree.is_empty() {
            return Ok(());
        }
        let mut stack = vec![tree.root];
        while let Some(id) = stack.pop() {
            let node = self.take(id)?;
            stack.extend_from_slice(node.children());
            self.release(id);
        }
        Ok(())
    }
}

/// A page file holding any number of trees.
pub struct TreeStore {
    pager: PageStore,
    layout: NodeLayout,
    free: Vec<PageId>,
    last_op_pages: usize,
}

impl std::fmt::Debug for TreeStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TreeStore").field("pager", &self.pager).field("layout", &self.layout).finish()
    }
}

impl TreeStore {
    pub fn new(pager: PageStore, layout: NodeLayout) -> Self {
        TreeStore { pager, layout, free: Vec::new(), last_op_pages: 0 }
    }

    /// A store in its own file with capacities derived from the page size.
    pub fn create(path: impl AsRef<Path>, config: PagerConfig) -> Result<Self> {
        let pager = PageStore::open_with(path, config)?;
        let layout = NodeLayout::for_page_size(pager.page_size());
        Ok(TreeStore::new(pager, layout))
    }

    pub fn layout(&self) -> NodeLayout {
        self.layout
    }

    pub fn pager(&self) -> &PageStore {
        &self.pager
    }

    pub fn pager_mut(&mut self) -> &mut PageStore {
        &mut self.pager
    }

    pub fn counters(&self) -> IoCounters {
        self.pager.counters()
    }

    pub fn reset_counters(&mut self) {
        self.pager.reset_counters();
    }

    pub fn set_cache_capacity(&mut self, pages: usize) -> Result<()> {
        self.pager.set_cache_capacity(pages)
    }

    pub fn flush(&mut self) -> Result<()> {
        self.pager.flush()
    }

    /// Pages released by deletions and not yet reused.
    pub fn free_pages(&self) -> usize {
        self.free.len()
    }

    /// Distinct pages read or written by the most recent operation.
    pub fn last_op_pages(&self) -> usize {
        self.last_op_pages
    }

    fn run<R>(&mut self, f: impl FnOnce(&mut Op<'_>) -> Result<R>) -> Result<R> {
        let mut op = Op {
            pager: &mut self.pager,
            free: &mut self.free,
            layout: self.layout,
            nodes: HashMap::new(),
            dirty: HashSet::new(),
            touched: HashSet::new(),
            renamed: HashMap::new(),
            released: Vec::new(),
        };
        let out = f(&mut op)?;
        self.last_op_pages = op.finish()?;
        Ok(out)
    }

    /// Inserts `key`; returns false if it was already present.
    pub fn insert(&mut self, tree: &mut BpTree, key: IntervalKey) -> Result<bool> {
        self.run(|op| op.insert(tree, key))
    }

    /// Smallest key with `t_minus >= t`.
    pub fn search_min_geq(&mut self, tree: &BpTree, t: Timestamp) -> Result<Option<IntervalKey>> {
        self.run(|op| op.first_where(tree, |k| k.t_minus >= t))
    }

    /// Largest key with `t_plus <= t`. Only meaningful on containment-free
    /// trees, where arrivals increase along with departures.
    pub fn search_max_leq_arrival(&mut self, tree: &BpTree, t: Timestamp) -> Result<Option<IntervalKey>> {
        self.run(|op| op.last_where(tree, |k| k.t_plus <= t))
    }

    /// First key satisfying a predicate that is false-then-true in key order.
    pub fn first_where(&mut self, tree: &BpTree, pred: impl Fn(&IntervalKey) -> bool) -> Result<Option<IntervalKey>> {
        self.run(|op| op.first_where(tree, pred))
    }

    /// Last key satisfying a predicate that is true-then-false in key order.
    pub fn last_where(&mut self, tree: &BpTree, pred: impl Fn(&IntervalKey) -> bool) -> Result<Option<IntervalKey>> {
        self.run(|op| op.last_where(tree, pred))
    }

    /// Concatenates two trees; every key of `left` must be below every key
    /// of `right`. Both inputs are consumed.
    pub fn join(&mut self, left: BpTree, right: BpTree) -> Result<BpTree> {
        self.run(|op| op.join(left, right))
    }

    /// Splits into keys `< key` and keys `>= key`.
    pub fn split(&mut self, tree: BpTree, key: IntervalKey) -> Result<(BpTree, BpTree)> {
        self.run(|op| op.split(tree, key))
    }

    /// Removes every key in `[lo, hi]` and frees the pages that held them.
    pub fn delete_range(&mut self, tree: &mut BpTree, lo: IntervalKey, hi: IntervalKey) -> Result<()> {
        if lo > hi {
            return Ok(());
        }
        self.run(|op| {
            let (left, rest) = op.split(*tree, lo)?;
            let (mid, right) = op.split(rest, hi.successor())?;
            op.free_tree(&mid)?;
            *tree = op.join(left, right)?;
            Ok(())
        })
    }

    /// Frees every page of `tree`.
    pub fn free_tree(&mut self, tree: BpTree) -> Result<()> {
        self.run(|op| op.free_tree(&tree))
    }

    /// All keys in order, following the leaf chain.
    pub fn keys(&mut self, tree: &BpTree) -> Result<Vec<IntervalKey>> {
        self.run(|op| {
            let mut out = Vec::new();
            let mut id = if tree.is_empty() { NIL } else { tree.leftmost };
            while id != NIL {
                match op.node(id)? {
                    Node::Leaf { keys, next } => {
                        out.extend_from_slice(keys);
                        id = *next;
                    }
                    Node::Internal { .. } => return Err(Error::Corrupt(format!("leaf chain reaches internal page {id}"))),
                }
            }
            Ok(out)
        })
    }

    /// Structural check: uniform leaf depth, sorted keys, exact separators,
    /// fill bounds below the root, leaf chain and handle metadata.
    pub fn validate(&mut self, tree: &BpTree) -> Result<Vec<String>> {
        let layout = self.layout;
        self.run(|op| {
            let mut bad = Vec::new();
            if tree.is_empty() {
                if tree.height != 0 {
                    bad.push("empty tree with non-zero height".into());
                }
                return Ok(bad);
            }
            let mut leaves = Vec::new();
            let mut in_order = Vec::new();
            let mut stack = vec![(tree.root, tree.height, true, None::<IntervalKey>)];
            // depth-first, children pushed in reverse so leaves come out in order
            while let Some((id, h, is_root, sep)) = stack.pop() {
                let node = op.node(id)?.clone();
                let keys = node.keys();
                if !keys.windows(2).all(|w| w[0] < w[1]) {
                    bad.push(format!("page {id}: keys not strictly sorted"));
                }
                if !is_root && op.underfull(&node) {
                    bad.push(format!("page {id}: underfull ({} entries)", node.size()));
                }
                if op.overflows(&node) {
                    bad.push(format!("page {id}: overfull"));
                }
                match &node {
                    Node::Leaf { keys, .. } => {
                        if h != 1 {
                            bad.push(format!("page {id}: leaf at height {h}"));
                        }
                        if let Some(s) = sep {
                            if keys.first() != Some(&s) {
                                bad.push(format!("page {id}: separator {s} is not the first key"));
                            }
                        }
                        leaves.push(id);
                        in_order.extend_from_slice(keys);
                    }
                    Node::Internal { keys, children } => {
                        if h <= 1 {
                            bad.push(format!("page {id}: internal node at height {h}"));
                            continue;
                        }
                        if children.len() != keys.len() + 1 || (is_root && children.len() < 2) {
                            bad.push(format!("page {id}: {} keys for {} children", keys.len(), children.len()));
                        }
                        for (i, &c) in children.iter().enumerate().rev() {
                            let s = if i == 0 { sep } else { keys.get(i - 1).copied() };
                            stack.push((c, h - 1, false, s));
                        }
                    }
                }
            }
            if in_order.first() != Some(&tree.min) || in_order.last() != Some(&tree.max) {
                bad.push("handle min/max disagree with contents".into());
            }
            if !in_order.windows(2).all(|w| w[0] < w[1]) {
                bad.push("in-order keys not strictly increasing".into());
            }
            if leaves.first() != Some(&tree.leftmost) || leaves.last() != Some(&tree.rightmost) {
                bad.push(format!(
                    "leftmost/rightmost {}/{} but leaves run {:?}..{:?}",
                    tree.leftmost,
                    tree.rightmost,
                    leaves.first(),
                    leaves.last()
                ));
            }
            let mut chain = Vec::new();
            let mut id = tree.leftmost;
            while id != NIL && chain.len() <= leaves.len() {
                chain.push(id);
                id = match op.node(id)? {
                    Node::Leaf { next, .. } => *next,
                    Node::Internal { .. } => NIL,
                };
            }
            if chain != leaves {
                bad.push(format!("leaf chain {chain:?} differs from tree order {leaves:?}"));
            }
            let _ = layout;
            Ok(bad)
        })
    }
}
