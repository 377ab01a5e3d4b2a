use std::fmt;

use serde::{Deserialize, Serialize};

/// A subset of the stream indices `0..k`, stored as a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct StreamSet(u64);

impl StreamSet {
    /// Largest number of streams a set can address.
    pub const CAPACITY: usize = 64;

    pub const fn empty() -> Self {
        Self(0)
    }

    /// `{0, .., k-1}`.
    pub fn full(k: usize) -> Self {
        debug_assert!(k <= Self::CAPACITY);
        if k == Self::CAPACITY {
            Self(u64::MAX)
        } else {
            Self((1u64 << k) - 1)
        }
    }

    pub const fn from_bits(bits: u64) -> Self {
        Self(bits)
    }

    pub const fn bits(self) -> u64 {
        self.0
    }

    pub fn contains(self, k: usize) -> bool {
        k < Self::CAPACITY && self.0 >> k & 1 == 1
    }

    pub fn insert(&mut self, k: usize) {
        debug_assert!(k < Self::CAPACITY);
        self.0 |= 1 << k;
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Elements of `self` not in `other`.
    pub fn difference(self, other: Self) -> Self {
        Self(self.0 & !other.0)
    }

    /// Complement relative to `{0, .., k-1}`.
    pub fn complement(self, k: usize) -> Self {
        Self(!self.0 & Self::full(k).0)
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..Self::CAPACITY).filter(move |&k| bits >> k & 1 == 1)
    }

    /// Every subset of `{0, .., k-1}`, in increasing bitmask order.
    pub fn all_subsets(k: usize) -> impl Iterator<Item = StreamSet> {
        debug_assert!(k < Self::CAPACITY);
        (0..1u64 << k).map(StreamSet)
    }
}

impl FromIterator<usize> for StreamSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut set = StreamSet::empty();
        for k in iter {
            set.insert(k);
        }
        set
    }
}

impl fmt::Debug for StreamSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Space-separated, 1-based stream labels, e.g. `{1 3}`.
impl fmt::Display for StreamSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, k) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}", k + 1)?;
        }
        f.write_str("}")
    }
}
