//! Canonical crit-bit map over fixed-width word keys.
//!
//! Every inner node stores the first bit position (MSB-first across the key
//! words) at which its two subtrees' keys differ, and branch positions
//! strictly increase toward the leaves, so the tree shape is a pure
//! function of the key set — no balancing choices, no randomness, no
//! dependence on insertion order. In-order traversal therefore yields keys
//! in ascending lexicographic (numeric big-endian) order, which makes the
//! map a canonical backing store: serializing a walk of the tree depends
//! only on its contents.

// --- nodes -----------------------------------------------------------------

#[derive(Debug, Clone)]
enum Node<V> {
    Leaf { key: Vec<u64>, value: V },
    Branch { bit: u32, zero: Box<Node<V>>, one: Box<Node<V>> },
}

/// Deterministic-shape map from fixed-length `u64` key vectors to values.
#[derive(Debug, Clone, Default)]
pub struct CritBitMap<V> {
    root: Option<Node<V>>,
    len: usize,
}

fn bit_at(key: &[u64], bit: u32) -> u64 {
    let word = (bit / 64) as usize;
    let shift = 63 - (bit % 64);
    (key[word] >> shift) & 1
}

/// First differing bit position between equal-length keys, if any.
fn first_diff(a: &[u64], b: &[u64]) -> Option<u32> {
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        if x != y {
            return Some(i as u32 * 64 + (x ^ y).leading_zeros());
        }
    }
    None
}

impl<V> CritBitMap<V> {
    pub fn new() -> Self {
        CritBitMap { root: None, len: 0 }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// The leaf whose key shares the guided path with `key`; the only
    /// candidate that can equal `key`.
    fn candidate<'a>(&'a self, key: &[u64]) -> Option<&'a Node<V>> {
        let mut node = self.root.as_ref()?;
        loop {
            match node {
                Node::Leaf { .. } => return Some(node),
                Node::Branch { bit, zero, one } => {
                    node = if bit_at(key, *bit) == 0 { zero } else { one };
                }
            }
        }
    }

    pub fn get(&self, key: &[u64]) -> Option<&V> {
        match self.candidate(key)? {
            Node::Leaf { key: k, value } if k.as_slice() == key => Some(value),
            _ => None,
        }
    }

    pub fn get_mut(&mut self, key: &[u64]) -> Option<&mut V> {
        let mut node = self.root.as_mut()?;
        loop {
            match node {
                Node::Leaf { key: k, value } => {
                    return if k.as_slice() == key { Some(value) } else { None };
                }
                Node::Branch { bit, zero, one } => {
                    node = if bit_at(key, *bit) == 0 { zero } else { one };
                }
            }
        }
    }

    pub fn contains_key(&self, key: &[u64]) -> bool {
        self.get(key).is_some()
    }

    /// Insert or replace. Returns the previous value when the key existed.
    pub fn insert(&mut self, key: &[u64], value: V) -> Option<V> {
        let diff = match self.candidate(key) {
            None => {
                self.root = Some(Node::Leaf { key: key.to_vec(), value });
                self.len = 1;
                return None;
            }
            Some(Node::Leaf { key: k, .. }) => first_diff(key, k),
            Some(Node::Branch { .. }) => unreachable!("candidate returns leaves"),
        };
        let Some(diff) = diff else {
            return Some(std::mem::replace(self.get_mut(key).expect("key present"), value));
        };
        let root = self.root.take().expect("non-empty tree");
        self.root = Some(Self::splice(root, key, diff, value));
        self.len += 1;
        None
    }

    /// Insert a branch at position `diff`: above the first node whose
    /// branch bit exceeds it — the unique spot keeping bits increasing.
    fn splice(node: Node<V>, key: &[u64], diff: u32, value: V) -> Node<V> {
        match node {
            Node::Branch { bit, zero, one } if bit < diff => {
                if bit_at(key, bit) == 0 {
                    Node::Branch { bit, zero: Box::new(Self::splice(*zero, key, diff, value)), one }
                } else {
                    Node::Branch { bit, zero, one: Box::new(Self::splice(*one, key, diff, value)) }
                }
            }
            other => {
                let leaf = Node::Leaf { key: key.to_vec(), value };
                if bit_at(key, diff) == 0 {
                    Node::Branch { bit: diff, zero: Box::new(leaf), one: Box::new(other) }
                } else {
                    Node::Branch { bit: diff, zero: Box::new(other), one: Box::new(leaf) }
                }
            }
        }
    }

    /// Remove a key, returning its value. An emptied branch collapses into
    /// its sibling, restoring the canonical shape of the remaining set.
    pub fn remove(&mut self, key: &[u64]) -> Option<V> {
        let root = self.root.take()?;
        let (rest, removed) = Self::extract(root, key);
        self.root = rest;
        if removed.is_some() {
            self.len -= 1;
        }
        removed
    }

    fn extract(node: Node<V>, key: &[u64]) -> (Option<Node<V>>, Option<V>) {
        match node {
            Node::Leaf { key: k, value } => {
                if k.as_slice() == key {
                    (None, Some(value))
                } else {
                    (Some(Node::Leaf { key: k, value }), None)
                }
            }
            Node::Branch { bit, zero, one } => {
                if bit_at(key, bit) == 0 {
                    match Self::extract(*zero, key) {
                        (Some(z), got) => {
                            (Some(Node::Branch { bit, zero: Box::new(z), one }), got)
                        }
                        (None, got) => (Some(*one), got),
                    }
                } else {
                    match Self::extract(*one, key) {
                        (Some(o), got) => {
                            (Some(Node::Branch { bit, zero, one: Box::new(o) }), got)
                        }
                        (None, got) => (Some(*zero), got),
                    }
                }
            }
        }
    }

    /// In-order traversal: ascending lexicographic key order.
    pub fn iter(&self) -> Iter<'_, V> {
        let mut stack = Vec::new();
        if let Some(root) = &self.root {
            stack.push(root);
        }
        Iter { stack }
    }

    /// Keys only, ascending.
    pub fn keys(&self) -> impl Iterator<Item = &[u64]> + '_ {
        self.iter().map(|(k, _)| k)
    }
}

pub struct Iter<'a, V> {
    stack: Vec<&'a Node<V>>,
}

impl<'a, V> Iterator for Iter<'a, V> {
    type Item = (&'a [u64], &'a V);

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            match self.stack.pop()? {
                Node::Leaf { key, value } => return Some((key, value)),
                Node::Branch { zero, one, .. } => {
                    self.stack.push(one);
                    self.stack.push(zero);
                }
            }
        }
    }
}

// --- tests -----------------------------------------------------------------
