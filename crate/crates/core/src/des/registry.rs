//! Order-statistic multiset of the priority levels currently in system.
//!
//! Backed by an arena treap with subtree sizes, so inserts, removals, rank
//! and select queries are all `O(log n)` expected. Heap priorities come from
//! a hash of the customer id, which keeps the tree shape a pure function of
//! the inserted keys and leaves the simulation's random stream untouched.

use std::cmp::Ordering;

use crate::error::{Error, Result};

const NIL: u32 = u32::MAX;

/// One customer in system: its uniform priority level and arrival sequence number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub level: f64,
    pub id: u64,
}

impl Entry {
    /// Scheduling order: higher level ranks higher, and on an exact tie the
    /// earlier arrival ranks higher.
    #[inline]
    pub fn order(&self, other: &Entry) -> Ordering {
        self.level
            .total_cmp(&other.level)
            .then_with(|| other.id.cmp(&self.id))
    }
}

#[derive(Debug, Clone)]
struct Node {
    entry: Entry,
    heap: u64,
    left: u32,
    right: u32,
    size: u32,
}

#[derive(Debug, Clone, Default)]
pub struct PriorityRegistry {
    nodes: Vec<Node>,
    free: Vec<u32>,
    root: u32,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl PriorityRegistry {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            free: Vec::new(),
            root: NIL,
        }
    }

    pub fn from_entries(entries: impl IntoIterator<Item = Entry>) -> Self {
        let mut registry = Self::new();
        for e in entries {
            registry.insert(e);
        }
        registry
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.size(self.root) as usize
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.root == NIL
    }

    #[inline]
    fn size(&self, n: u32) -> u32 {
        if n == NIL {
            0
        } else {
            self.nodes[n as usize].size
        }
    }

    #[inline]
    fn update(&mut self, n: u32) {
        let (l, r) = {
            let node = &self.nodes[n as usize];
            (node.left, node.right)
        };
        self.nodes[n as usize].size = 1 + self.size(l) + self.size(r);
    }

    fn alloc(&mut self, entry: Entry) -> u32 {
        let node = Node {
            entry,
            heap: splitmix64(entry.id),
            left: NIL,
            right: NIL,
            size: 1,
        };
        if let Some(slot) = self.free.pop() {
            self.nodes[slot as usize] = node;
            slot
        } else {
            self.nodes.push(node);
            u32::try_from(self.nodes.len() - 1).expect("registry capacity exceeded")
        }
    }

    /// Splits `n` into (keys ordered below `key`, keys at or above `key`).
    fn split(&mut self, n: u32, key: &Entry) -> (u32, u32) {
        if n == NIL {
            return (NIL, NIL);
        }
        if self.nodes[n as usize].entry.order(key) == Ordering::Less {
            let right = self.nodes[n as usize].right;
            let (a, b) = self.split(right, key);
            self.nodes[n as usize].right = a;
            self.update(n);
            (n, b)
        } else {
            let left = self.nodes[n as usize].left;
            let (a, b) = self.split(left, key);
            self.nodes[n as usize].left = b;
            self.update(n);
            (a, n)
        }
    }

    /// Splits off the `count` lowest entries.
    fn split_count(&mut self, n: u32, count: u32) -> (u32, u32) {
        if n == NIL {
            return (NIL, NIL);
        }
        let left = self.nodes[n as usize].left;
        let left_size = self.size(left);
        if count <= left_size {
            let (a, b) = self.split_count(left, count);
            self.nodes[n as usize].left = b;
            self.update(n);
            (a, n)
        } else {
            let right = self.nodes[n as usize].right;
            let (a, b) = self.split_count(right, count - left_size - 1);
            self.nodes[n as usize].right = a;
            self.update(n);
            (n, b)
        }
    }

    fn merge(&mut self, a: u32, b: u32) -> u32 {
        if a == NIL {
            return b;
        }
        if b == NIL {
            return a;
        }
        if self.nodes[a as usize].heap >= self.nodes[b as usize].heap {
            let right = self.nodes[a as usize].right;
            let merged = self.merge(right, b);
            self.nodes[a as usize].right = merged;
            self.update(a);
            a
        } else {
            let left = self.nodes[b as usize].left;
            let merged = self.merge(a, left);
            self.nodes[b as usize].left = merged;
            self.update(b);
            b
        }
    }

    pub fn insert(&mut self, entry: Entry) {
        let node = self.alloc(entry);
        let (lo, hi) = self.split(self.root, &entry);
        let lo = self.merge(lo, node);
        self.root = self.merge(lo, hi);
    }

    /// Removes the entry with exactly this level and id. Returns whether it was present.
    pub fn remove(&mut self, entry: &Entry) -> bool {
        let (lo, hi) = self.split(self.root, entry);
        let (mid, rest) = self.split_count(hi, 1);
        let found = mid != NIL && {
            let e = &self.nodes[mid as usize].entry;
            e.level.to_bits() == entry.level.to_bits() && e.id == entry.id
        };
        let rest = if found {
            self.free.push(mid);
            rest
        } else {
            self.merge(mid, rest)
        };
        self.root = self.merge(lo, rest);
        found
    }

    /// Counts entries whose level satisfies `below(level)`, assuming `below`
    /// is monotone (true for a prefix of the level order).
    fn count_prefix(&self, below: impl Fn(f64) -> bool) -> usize {
        let mut n = self.root;
        let mut count = 0u32;
        while n != NIL {
            let node = &self.nodes[n as usize];
            if below(node.entry.level) {
                count += self.size(node.left) + 1;
                n = node.right;
            } else {
                n = node.left;
            }
        }
        count as usize
    }

    /// Entries with level strictly below `p`.
    pub fn count_lt(&self, p: f64) -> usize {
        self.count_prefix(|level| level < p)
    }

    /// `X_t(p)`: entries with level in `[0, p]`.
    pub fn count_leq(&self, p: f64) -> usize {
        self.count_prefix(|level| level <= p)
    }

    /// `X̄_t(p)`: entries with level strictly above `p`.
    pub fn count_gt(&self, p: f64) -> usize {
        self.len() - self.count_leq(p)
    }

    /// Entries with level in the half-open bin `[lo, hi)`.
    pub fn count_in(&self, lo: f64, hi: f64) -> Result<usize> {
        if lo > hi || lo.is_nan() || hi.is_nan() {
            return Err(Error::InvalidArgument(format!(
                "count_in needs lo <= hi, got [{lo}, {hi})"
            )));
        }
        Ok(self.count_lt(hi) - self.count_lt(lo))
    }

    /// Number of entries ordered strictly below `entry`.
    pub fn rank(&self, entry: &Entry) -> usize {
        let mut n = self.root;
        let mut count = 0u32;
        while n != NIL {
            let node = &self.nodes[n as usize];
            if node.entry.order(entry) == Ordering::Less {
                count += self.size(node.left) + 1;
                n = node.right;
            } else {
                n = node.left;
            }
        }
        count as usize
    }

    /// The entry at ascending position `k` (0 is the lowest-ordered).
    pub fn select(&self, k: usize) -> Option<Entry> {
        if k >= self.len() {
            return None;
        }
        let mut k = k as u32;
        let mut n = self.root;
        loop {
            let node = &self.nodes[n as usize];
            let left_size = self.size(node.left);
            match k.cmp(&left_size) {
                Ordering::Less => n = node.left,
                Ordering::Equal => return Some(node.entry),
                Ordering::Greater => {
                    k -= left_size + 1;
                    n = node.right;
                }
            }
        }
    }

    /// The `k`-th highest entry, `k = 0` being the top priority.
    pub fn nth_highest(&self, k: usize) -> Option<Entry> {
        let len = self.len();
        if k >= len {
            None
        } else {
            self.select(len - 1 - k)
        }
    }

    /// Lowest-ordered customer among the `servers` in service, or `None` if a
    /// server is idle.
    pub fn lowest_in_service(&self, servers: usize) -> Option<Entry> {
        let len = self.len();
        if len < servers || servers == 0 {
            None
        } else {
            self.select(len - servers)
        }
    }

    /// Whether `entry` is among the top `servers` entries.
    pub fn is_in_service(&self, entry: &Entry, servers: usize) -> bool {
        self.rank(entry) + servers >= self.len()
    }

    /// Ascending in-order traversal.
    pub fn iter(&self) -> Iter<'_> {
        let mut iter = Iter {
            registry: self,
            stack: Vec::new(),
        };
        iter.push_left(self.root);
        iter
    }

    pub fn levels(&self) -> Vec<f64> {
        self.iter().map(|e| e.level).collect()
    }
}

pub struct Iter<'a> {
    registry: &'a PriorityRegistry,
    stack: Vec<u32>,
}

impl Iter<'_> {
    fn push_left(&mut self, mut n: u32) {
        while n != NIL {
            self.stack.push(n);
            n = self.registry.nodes[n as usize].left;
        }
    }
}

impl Iterator for Iter<'_> {
    type Item = Entry;

    fn next(&mut self) -> Option<Entry> {
        let n = self.stack.pop()?;
        let node = &self.registry.nodes[n as usize];
        self.push_left(node.right);
        Some(node.entry)
    }
}
