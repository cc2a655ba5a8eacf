//! Relation-set bitsets with combinatorial unranking and subset expansion.
//!
//! Every enumerator in this crate works on sets of relation indices. A
//! [`RelSet`] is a fixed-width bit vector over indices `0..n-1`; its width is
//! chosen when a query graph is built and stays constant for every set derived
//! from that graph, so set algebra never reallocates and comparisons are plain
//! word comparisons.
//!
//! Two enumeration primitives live here:
//!
//! * [`unrank_combination`] maps a rank to the rank-th `k`-subset of
//!   `{0..n-1}` in colexicographic order, letting a level of the dynamic
//!   program split `C(n,k)` candidate sets into contiguous work items.
//! * [`deposit_subset`] maps a dense subset mask onto the set bits of a
//!   superset (a software parallel-bit-deposit), which is how subset splits of
//!   a concrete relation set are enumerated.

use smallvec::SmallVec;

/// Binomial coefficients `C(n, k)` for `n, k <= 64`.
///
/// `C(64, 32)` is the largest entry and fits comfortably in a `u64`.
static BINOMIAL: [[u64; 65]; 65] = binomial_table();

const fn binomial_table() -> [[u64; 65]; 65] {
    let mut table = [[0u64; 65]; 65];
    let mut n = 0;
    while n <= 64 {
        table[n][0] = 1;
        let mut k = 1;
        while k <= n {
            table[n][k] = table[n - 1][k - 1] + if k <= n - 1 { table[n - 1][k] } else { 0 };
            k += 1;
        }
        n += 1;
    }
    table
}

/// `C(n, k)` for `n, k <= 64`; zero when `k > n`.
///
/// # Panics
///
/// Panics if `n > 64` or `k > 64`; ranks beyond 64-bit combinatorics are out
/// of scope (exact enumeration never exceeds 64 relations).
pub fn binomial(n: usize, k: usize) -> u64 {
    assert!(n <= 64 && k <= 64, "binomial({n}, {k}) exceeds the 64-bit table");
    BINOMIAL[n][k]
}

/// A set of relation indices, stored as a fixed-width bit vector.
///
/// Sets are created with an explicit capacity (the relation count of the
/// owning query graph, rounded up to whole 64-bit words) and all binary
/// operations require both operands to come from the same context. One word is
/// stored inline, so sets over up to 64 relations never allocate.
///
/// The derived ordering compares words lexicographically starting at the word
/// holding indices 0..63; it is a total order used for deterministic
/// tie-breaking throughout the optimizer.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelSet {
    words: SmallVec<[u64; 1]>,
}

impl RelSet {
    /// The empty set over a universe of `capacity` indices.
    pub fn empty(capacity: usize) -> Self {
        let n_words = capacity.div_ceil(64).max(1);
        RelSet { words: smallvec::smallvec![0; n_words] }
    }

    /// The singleton `{index}`.
    pub fn singleton(capacity: usize, index: usize) -> Self {
        let mut s = Self::empty(capacity);
        s.insert(index);
        s
    }

    /// Builds a set from a list of indices.
    pub fn from_indices(capacity: usize, indices: &[usize]) -> Self {
        let mut s = Self::empty(capacity);
        for &i in indices {
            s.insert(i);
        }
        s
    }

    /// Number of indices this set can hold (a multiple of 64).
    pub fn capacity(&self) -> usize {
        self.words.len() * 64
    }

    /// Number of set bits.
    pub fn cardinality(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn contains(&self, index: usize) -> bool {
        let (w, b) = (index / 64, index % 64);
        w < self.words.len() && self.words[w] & (1 << b) != 0
    }

    pub fn insert(&mut self, index: usize) {
        assert!(index < self.capacity(), "index {index} outside capacity {}", self.capacity());
        self.words[index / 64] |= 1 << (index % 64);
    }

    pub fn remove(&mut self, index: usize) {
        if index < self.capacity() {
            self.words[index / 64] &= !(1 << (index % 64));
        }
    }

    /// Smallest index in the set, or `None` if empty.
    pub fn min_index(&self) -> Option<usize> {
        for (i, &w) in self.words.iter().enumerate() {
            if w != 0 {
                return Some(i * 64 + w.trailing_zeros() as usize);
            }
        }
        None
    }

    pub fn union(&self, other: &RelSet) -> RelSet {
        let mut out = self.clone();
        out.union_with(other);
        out
    }

    pub fn intersection(&self, other: &RelSet) -> RelSet {
        let mut out = self.clone();
        out.intersect_with(other);
        out
    }

    pub fn difference(&self, other: &RelSet) -> RelSet {
        let mut out = self.clone();
        out.subtract(other);
        out
    }

    pub fn union_with(&mut self, other: &RelSet) {
        debug_assert_eq!(self.words.len(), other.words.len(), "sets from different contexts");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn intersect_with(&mut self, other: &RelSet) {
        debug_assert_eq!(self.words.len(), other.words.len(), "sets from different contexts");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    pub fn subtract(&mut self, other: &RelSet) {
        debug_assert_eq!(self.words.len(), other.words.len(), "sets from different contexts");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= !b;
        }
    }

    pub fn intersects(&self, other: &RelSet) -> bool {
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    pub fn is_disjoint(&self, other: &RelSet) -> bool {
        !self.intersects(other)
    }

    pub fn is_subset(&self, other: &RelSet) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    /// Iterates set indices in increasing order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &word)| {
            std::iter::successors((word != 0).then_some(word), |&w| {
                let rest = w & (w - 1);
                (rest != 0).then_some(rest)
            })
            .map(move |w| wi * 64 + w.trailing_zeros() as usize)
        })
    }

    /// Raw storage words, lowest indices first.
    pub fn as_words(&self) -> &[u64] {
        &self.words
    }

    /// Wraps a single word as a set (for universes of at most 64 indices).
    pub(crate) fn from_word(capacity: usize, word: u64) -> Self {
        debug_assert!(capacity <= 64);
        let mut s = Self::empty(capacity);
        s.words[0] = word;
        s
    }
}

impl std::fmt::Debug for RelSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Returns the rank-th `k`-subset of `{0..n-1}` in colexicographic order.
///
/// Colex order compares subsets by their largest differing element, which
/// admits an `O(n)` unranking via the combinadic decomposition
/// `rank = C(a_k, k) + ... + C(a_1, 1)` with `a_1 < a_2 < ... < a_k` the
/// subset's elements. Rank 0 is `{0..k-1}`, rank `C(n,k)-1` is `{n-k..n-1}`,
/// and the map is a bijection over all `C(n, k)` subsets.
///
/// # Panics
///
/// Panics if `k > n`, `n > 64`, or `rank >= C(n, k)`.
pub fn unrank_combination(rank: u64, k: usize, n: usize) -> RelSet {
    assert!(k <= n, "subset size {k} exceeds universe size {n}");
    assert!(n <= 64, "exact enumeration supports at most 64 relations, got {n}");
    assert!(rank < binomial(n, k), "rank {rank} out of range for C({n}, {k})");
    let mut set = RelSet::empty(n);
    let mut rank = rank;
    let mut upper = n; // exclusive bound for the next element, descending
    for i in (1..=k).rev() {
        // Largest a with C(a, i) <= rank; elements decrease as i does.
        let mut a = upper - 1;
        while BINOMIAL[a][i] > rank {
            a -= 1;
        }
        rank -= BINOMIAL[a][i];
        set.insert(a);
        upper = a;
    }
    set
}

/// Colex rank of a single-word `k`-subset; the inverse of
/// [`unrank_combination`] on 64-bit universes, kept to cross-check the
/// enumeration primitives against each other.
#[cfg(test)]
pub(crate) fn rank_of_word(mut word: u64) -> u64 {
    let mut rank = 0;
    let mut i = 0;
    while word != 0 {
        let a = word.trailing_zeros() as usize;
        i += 1;
        rank += BINOMIAL[a][i];
        word &= word - 1;
    }
    rank
}

/// Successor of `word` among single-word subsets of equal cardinality in
/// colexicographic order (Gosper's hack). The caller is responsible for
/// stopping before the subset range of the universe is exhausted.
pub(crate) fn next_combination_word(word: u64) -> u64 {
    debug_assert!(word != 0);
    let lowest = word & word.wrapping_neg();
    let ripple = word + lowest;
    let shifted = (word ^ ripple) >> (2 + lowest.trailing_zeros());
    ripple | shifted
}

/// Expands a dense subset mask onto the set bits of `superset`.
///
/// Bit `j` of `mask` selects the `j`-th lowest set bit of `superset`, so masks
/// `1..2^m-1` (with `m` the superset cardinality) enumerate exactly the
/// nonempty proper-and-full subsets of `superset`, bijectively. This is a
/// software parallel-bit-deposit over the set's words.
///
/// # Panics
///
/// Panics if `mask` is zero or `mask >= 2^m`.
pub fn deposit_subset(mask: u64, superset: &RelSet) -> RelSet {
    let m = superset.cardinality();
    assert!(mask != 0, "subset mask must be nonzero");
    assert!(
        m >= 64 || mask < (1u64 << m),
        "subset mask {mask:#x} has bits beyond the superset cardinality {m}"
    );
    let mut out = RelSet::empty(superset.capacity());
    let mut mask = mask;
    for (wi, &w) in superset.words.iter().enumerate() {
        if mask == 0 {
            break;
        }
        let mut bits = w;
        while bits != 0 {
            if mask & 1 != 0 {
                out.words[wi] |= bits & bits.wrapping_neg();
            }
            mask >>= 1;
            bits &= bits - 1;
        }
    }
    out
}
