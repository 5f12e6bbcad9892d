//! The discrete memory variable `p ∈ {0,1}^N` and its admissible switches.
//!
//! Target `j` (1-based, in the order the targets are listed) is stored at
//! bit position `N - j`, so the bit string of a state, written most
//! significant first, reads exactly like the tuple `(p^1, ..., p^N)`:
//! `"100"` means only the first target has been visited or discarded.
//! States are enumerated in ascending bitmask order, which is also the
//! index used by every per-state array in the crate.

use std::fmt;

use crate::error::{Error, Result};

/// Largest supported number of targets (`2^16` discrete states).
pub const MAX_TARGETS: usize = 16;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DiscreteState {
    bits: u32,
    n_targets: u8,
}

impl DiscreteState {
    pub fn new(bits: u32, n_targets: usize) -> Result<Self> {
        if n_targets == 0 || n_targets > MAX_TARGETS {
            return Err(Error::InvalidArgument(format!(
                "number of targets must be in 1..={MAX_TARGETS}, got {n_targets}"
            )));
        }
        if bits >> n_targets != 0 {
            return Err(Error::InvalidArgument(format!(
                "bitmask {bits:#b} uses more than {n_targets} bits"
            )));
        }
        Ok(Self {
            bits,
            n_targets: n_targets as u8,
        })
    }

    /// The all-zero state: no target visited yet.
    pub fn initial(n_targets: usize) -> Result<Self> {
        Self::new(0, n_targets)
    }

    /// The all-ones state `p̄` where the game is over.
    pub fn final_state(n_targets: usize) -> Result<Self> {
        Self::new(0, n_targets).map(|s| Self {
            bits: s.full_mask(),
            ..s
        })
    }

    /// Parses a bit string such as `"101"`; its length fixes `N`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() || text.len() > MAX_TARGETS {
            return Err(Error::InvalidArgument(format!(
                "state bit string must have 1..={MAX_TARGETS} characters, got {text:?}"
            )));
        }
        let mut bits = 0u32;
        for c in text.chars() {
            bits <<= 1;
            match c {
                '0' => {}
                '1' => bits |= 1,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "invalid character {other:?} in state bit string {text:?}"
                    )))
                }
            }
        }
        Self::new(bits, text.len())
    }

    #[inline]
    pub fn bits(self) -> u32 {
        self.bits
    }

    /// Position of this state in the canonical enumeration.
    #[inline]
    pub fn index(self) -> usize {
        self.bits as usize
    }

    #[inline]
    pub fn n_targets(self) -> usize {
        self.n_targets as usize
    }

    #[inline]
    fn full_mask(self) -> u32 {
        ((1u64 << self.n_targets) - 1) as u32
    }

    #[inline]
    pub fn is_final(self) -> bool {
        self.bits == self.full_mask()
    }

    #[inline]
    pub fn popcount(self) -> usize {
        self.bits.count_ones() as usize
    }

    #[inline]
    fn bit_of(self, target: usize) -> u32 {
        1 << (self.n_targets as usize - 1 - target)
    }

    /// Whether the target with 0-based index `target` is already done.
    #[inline]
    pub fn is_done(self, target: usize) -> bool {
        debug_assert!(target < self.n_targets());
        self.bits & self.bit_of(target) != 0
    }

    /// The state with `target` (0-based) additionally marked as done.
    pub fn with_done(self, target: usize) -> Self {
        Self {
            bits: self.bits | self.bit_of(target),
            ..self
        }
    }

    /// Bitwise dominance: every target done in `self` is done in `other`.
    #[inline]
    pub fn is_dominated_by(self, other: DiscreteState) -> bool {
        self.bits & other.bits == self.bits
    }

    /// Whether `other ∈ I_self`.
    #[inline]
    pub fn can_switch_to(self, other: DiscreteState) -> bool {
        self.n_targets == other.n_targets && self.is_dominated_by(other) && self.bits != other.bits
    }

    /// All states reachable by one switch, in ascending bitmask order.
    ///
    /// The result has `2^(N - popcount) - 1` elements and is empty for `p̄`.
    pub fn admissible_switches(self) -> Vec<DiscreteState> {
        let free = self.full_mask() & !self.bits;
        let mut out = Vec::with_capacity((1usize << free.count_ones()) - 1);
        // Enumerate non-empty submasks of the free bits.
        let mut sub = free;
        while sub != 0 {
            out.push(Self {
                bits: self.bits | sub,
                ..self
            });
            sub = (sub - 1) & free;
        }
        out.reverse();
        out
    }

    /// Bit string, most significant target first.
    pub fn to_bitstring(self) -> String {
        (0..self.n_targets())
            .map(|t| if self.is_done(t) { '1' } else { '0' })
            .collect()
    }
}

impl fmt::Debug for DiscreteState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DiscreteState({})", self.to_bitstring())
    }
}

impl fmt::Display for DiscreteState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bitstring())
    }
}

/// `χ_j(p, p')`: 1 when the two states disagree on target `j` (1-based).
pub fn switch_indicator(p: DiscreteState, q: DiscreteState, j: usize) -> Result<u8> {
    if p.n_targets != q.n_targets {
        return Err(Error::InvalidArgument(format!(
            "states {p} and {q} have different target counts"
        )));
    }
    if j == 0 || j > p.n_targets() {
        return Err(Error::InvalidArgument(format!(
            "target index {j} outside 1..={}",
            p.n_targets()
        )));
    }
    Ok(u8::from(p.is_done(j - 1) != q.is_done(j - 1)))
}

/// The full set `I = {0,1}^N` in canonical order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateSpace {
    n_targets: usize,
}

impl StateSpace {
    pub fn new(n_targets: usize) -> Result<Self> {
        DiscreteState::initial(n_targets)?;
        Ok(Self { n_targets })
    }

    pub fn n_targets(&self) -> usize {
        self.n_targets
    }

    pub fn len(&self) -> usize {
        1usize << self.n_targets
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn state(&self, index: usize) -> DiscreteState {
        assert!(index < self.len(), "state index {index} out of range");
        DiscreteState {
            bits: index as u32,
            n_targets: self.n_targets as u8,
        }
    }

    pub fn states(&self) -> impl DoubleEndedIterator<Item = DiscreteState> + '_ {
        (0..self.len()).map(move |i| self.state(i))
    }

    pub fn initial(&self) -> DiscreteState {
        self.state(0)
    }

    pub fn final_state(&self) -> DiscreteState {
        self.state(self.len() - 1)
    }

    pub fn contains(&self, p: DiscreteState) -> bool {
        p.n_targets() == self.n_targets
    }

    pub fn parse_state(&self, text: &str) -> Result<DiscreteState> {
        let p = DiscreteState::parse(text)?;
        if !self.contains(p) {
            return Err(Error::InvalidArgument(format!(
                "state {text:?} has {} targets, expected {}",
                p.n_targets(),
                self.n_targets
            )));
        }
        Ok(p)
    }
}
