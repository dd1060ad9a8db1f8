//! Variable subsets and their colexicographic (combinadic) layer order.
//!
//! A [`VarSet`] is a bitmask over variable indices `0..n` with `n <= 63`.
//! Within a layer (all sets of one cardinality) sets are ordered
//! colexicographically: compare the largest element on which they differ.
//! For sets of equal size this coincides with comparing the raw masks as
//! integers, which is what every on-disk sort in this crate relies on.

use std::fmt;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Largest supported variable count.
pub const MAX_VARS: usize = 63;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct VarSet(u64);

/// Position of a set inside its layer's colex sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LayerRank(pub u64);

impl VarSet {
    pub const EMPTY: VarSet = VarSet(0);

    #[inline]
    pub const fn from_bits(bits: u64) -> Self {
        VarSet(bits)
    }

    #[inline]
    pub const fn bits(self) -> u64 {
        self.0
    }

    /// All variables `0..n`.
    #[inline]
    pub fn full(n: usize) -> Self {
        debug_assert!(n <= MAX_VARS);
        VarSet((1u64 << n) - 1)
    }

    #[inline]
    pub fn singleton(x: usize) -> Self {
        VarSet(1 << x)
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(it: I) -> Self {
        it.into_iter().fold(VarSet::EMPTY, |s, x| s.with(x))
    }

    #[inline]
    pub fn contains(self, x: usize) -> bool {
        self.0 >> x & 1 == 1
    }

    #[inline]
    pub fn with(self, x: usize) -> Self {
        VarSet(self.0 | 1 << x)
    }

    #[inline]
    pub fn without(self, x: usize) -> Self {
        VarSet(self.0 & !(1 << x))
    }

    #[inline]
    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Largest element, `None` for the empty set.
    #[inline]
    pub fn max(self) -> Option<usize> {
        (self.0 != 0).then(|| 63 - self.0.leading_zeros() as usize)
    }

    #[inline]
    pub fn is_subset_of(self, other: VarSet) -> bool {
        self.0 & !other.0 == 0
    }

    #[inline]
    pub fn union(self, other: VarSet) -> Self {
        VarSet(self.0 | other.0)
    }

    #[inline]
    pub fn difference(self, other: VarSet) -> Self {
        VarSet(self.0 & !other.0)
    }

    /// True when no bit at or above `n` is set.
    #[inline]
    pub fn fits(self, n: usize) -> bool {
        n >= 64 || self.0 >> n == 0
    }

    /// Elements in ascending order.
    pub fn iter(self) -> Members {
        Members(self.0)
    }
}

impl fmt::Debug for VarSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl FromIterator<usize> for VarSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        VarSet::from_indices(iter)
    }
}

pub struct Members(u64);

impl Iterator for Members {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let x = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(x)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let k = self.0.count_ones() as usize;
        (k, Some(k))
    }
}

impl ExactSizeIterator for Members {}

fn table() -> &'static [[u64; 65]; 65] {
    static TABLE: OnceLock<Box<[[u64; 65]; 65]>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Box::new([[0u64; 65]; 65]);
        for n in 0..=64 {
            t[n][0] = 1;
            for k in 1..=n {
                // C(64, 32) still fits in a u64; saturate just in case.
                t[n][k] = t[n - 1][k - 1].saturating_add(t[n - 1][k]);
            }
        }
        t
    })
}

/// `C(n, k)`, zero when `k > n`. Valid for `n <= 64`.
#[inline]
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        0
    } else {
        table()[n][k]
    }
}

/// Exact binomial coefficient with 128-bit intermediates.
pub fn binomial_checked(n: u64, k: u64) -> Result<u64> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) is exact at every step.
        acc = acc
            .checked_mul((n - i) as u128)
            .ok_or_else(|| Error::Range(format!("C({n}, {k}) overflows")))?
            / (i as u128 + 1);
    }
    u64::try_from(acc).map_err(|_| Error::Range(format!("C({n}, {k}) exceeds 64 bits")))
}

/// Number of nodes in layer `l` of a lattice over `n` variables.
pub fn layer_size(n: usize, l: usize) -> Result<u64> {
    if l > n {
        return Err(Error::Range(format!("layer {l} exceeds variable count {n}")));
    }
    binomial_checked(n as u64, l as u64)
}

/// Combinadic rank: `sum_i C(c_i, i + 1)` over the ascending elements `c_i`.
#[inline]
pub fn colex_rank(s: VarSet) -> LayerRank {
    let mut r = 0u64;
    for (i, c) in s.iter().enumerate() {
        r += binomial(c, i + 1);
    }
    LayerRank(r)
}

/// Inverse of [`colex_rank`] for sets of size `k` drawn from `n` variables.
pub fn colex_unrank(rank: LayerRank, k: usize, n: usize) -> Result<VarSet> {
    if n > MAX_VARS || k > n {
        return Err(Error::Range(format!("no layer {k} over {n} variables")));
    }
    let size = binomial(n, k);
    if rank.0 >= size {
        return Err(Error::Range(format!(
            "rank {} outside layer of size {size}",
            rank.0
        )));
    }
    let mut r = rank.0;
    let mut set = VarSet::EMPTY;
    let mut hi = n;
    for i in (1..=k).rev() {
        // largest c < hi with C(c, i) <= r
        let mut c = hi - 1;
        while binomial(c, i) > r {
            c -= 1;
        }
        set = set.with(c);
        r -= binomial(c, i);
        hi = c;
    }
    Ok(set)
}

/// `(X, U ∪ {X})` for every `X ∉ U`, `X` ascending.
pub fn successors(u: VarSet, n: usize) -> impl Iterator<Item = (usize, VarSet)> {
    VarSet::full(n)
        .difference(u)
        .iter()
        .map(move |x| (x, u.with(x)))
}

/// All size-`k` subsets of `0..n` in colex order.
pub fn layer(n: usize, k: usize) -> impl Iterator<Item = VarSet> {
    let count = binomial(n, k);
    let mut next = (k <= n).then(|| VarSet::full(k));
    (0..count).map(move |_| {
        let cur = next.expect("layer iterator overrun");
        next = next_colex(cur.bits()).map(VarSet);
        cur
    })
}

/// Gosper's hack: next larger integer with the same popcount.
#[inline]
fn next_colex(v: u64) -> Option<u64> {
    if v == 0 {
        return None;
    }
    let c = v & v.wrapping_neg();
    let r = v.checked_add(c)?;
    Some((((r ^ v) >> 2) / c) | r)
}
