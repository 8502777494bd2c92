//! 32-bit presence masks.
//!
//! A mask covers 32 consecutive slots. Slot `s` lives at bit `31 - s`, so slot
//! 0 is the most significant bit and ascending slot order is ledger order.

use alloc::vec::Vec;
use core::fmt;

use crate::error::{param_err, Result};

/// Number of slots one mask word can address.
pub const MASK_SLOTS: u32 = 32;

const DE_BRUIJN: u32 = 0x077C_B531;

const fn de_bruijn_table() -> [u8; 32] {
    let mut table = [0u8; 32];
    let mut i = 0;
    while i < 32 {
        table[((DE_BRUIJN << i) >> 27) as usize] = i as u8;
        i += 1;
    }
    table
}

static DE_BRUIJN_POSITION: [u8; 32] = de_bruijn_table();

/// Bit position of the lowest set bit, by de Bruijn multiply-and-lookup.
#[inline]
pub fn lowest_set_bit(word: u32) -> Option<u32> {
    if word == 0 {
        return None;
    }
    let isolated = word & word.wrapping_neg();
    Some(DE_BRUIJN_POSITION[(isolated.wrapping_mul(DE_BRUIJN) >> 27) as usize] as u32)
}

/// A 32-slot presence mask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
#[repr(transparent)]
pub struct Mask(pub u32);

impl Mask {
    pub const EMPTY: Mask = Mask(0);
    pub const FULL: Mask = Mask(u32::MAX);

    #[inline]
    pub const fn new(word: u32) -> Self {
        Mask(word)
    }

    #[inline]
    pub const fn word(self) -> u32 {
        self.0
    }

    #[inline]
    pub const fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Number of set slots.
    #[inline]
    pub const fn count(self) -> u32 {
        self.0.count_ones()
    }

    #[inline]
    const fn bit(slot: u32) -> u32 {
        1 << (MASK_SLOTS - 1 - slot)
    }

    /// Mask with `slot` set. Idempotent.
    pub fn set_slot(self, slot: u32) -> Result<Mask> {
        check_slot(slot)?;
        Ok(Mask(self.0 | Self::bit(slot)))
    }

    #[inline]
    pub(crate) fn insert(&mut self, slot: u32) {
        debug_assert!(slot < MASK_SLOTS);
        self.0 |= Self::bit(slot);
    }

    #[inline]
    pub fn contains(self, slot: u32) -> bool {
        slot < MASK_SLOTS && self.0 & Self::bit(slot) != 0
    }

    /// Number of set slots strictly before `slot`.
    pub fn rank(self, slot: u32) -> Result<u32> {
        check_slot(slot)?;
        Ok(self.rank_unchecked(slot))
    }

    #[inline]
    pub(crate) fn rank_unchecked(self, slot: u32) -> u32 {
        // slots before `slot` occupy the top `slot` bits
        if slot == 0 {
            0
        } else {
            (self.0 >> (MASK_SLOTS - slot)).count_ones()
        }
    }

    /// Mask of every slot in `from..32`.
    #[inline]
    pub const fn from_slot(from: u32) -> Mask {
        if from >= MASK_SLOTS {
            Mask(0)
        } else {
            Mask(u32::MAX >> from)
        }
    }

    /// Mask of the first `n` slots.
    #[inline]
    pub const fn first_slots(n: u32) -> Mask {
        if n >= MASK_SLOTS {
            Mask(u32::MAX)
        } else {
            Mask(!(u32::MAX >> n))
        }
    }

    /// Smallest set slot.
    #[inline]
    pub fn first_slot(self) -> Option<u32> {
        lowest_set_bit(self.0.reverse_bits())
    }

    /// Largest set slot, i.e. the most recent position in ledger order.
    #[inline]
    pub fn last_slot(self) -> Option<u32> {
        lowest_set_bit(self.0).map(|bit| MASK_SLOTS - 1 - bit)
    }

    /// Set slots in ascending order.
    #[inline]
    pub fn slots(self) -> Slots {
        Slots(self.0.reverse_bits())
    }
}

impl core::ops::BitAnd for Mask {
    type Output = Mask;
    #[inline]
    fn bitand(self, rhs: Mask) -> Mask {
        Mask(self.0 & rhs.0)
    }
}

impl core::ops::BitAndAssign for Mask {
    #[inline]
    fn bitand_assign(&mut self, rhs: Mask) {
        self.0 &= rhs.0;
    }
}

impl core::ops::BitOr for Mask {
    type Output = Mask;
    #[inline]
    fn bitor(self, rhs: Mask) -> Mask {
        Mask(self.0 | rhs.0)
    }
}

impl fmt::Debug for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mask({:#010x})", self.0)
    }
}

impl fmt::Display for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#010x}", self.0)
    }
}

impl From<u32> for Mask {
    fn from(word: u32) -> Self {
        Mask(word)
    }
}

/// Iterator over set slots, smallest first.
#[derive(Clone, Debug)]
pub struct Slots(u32);

impl Iterator for Slots {
    type Item = u32;

    #[inline]
    fn next(&mut self) -> Option<u32> {
        let slot = lowest_set_bit(self.0)?;
        self.0 &= self.0 - 1;
        Some(slot)
    }

    #[inline]
    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.0.count_ones() as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Slots {}

fn check_slot(slot: u32) -> Result<()> {
    if slot < MASK_SLOTS {
        Ok(())
    } else {
        Err(param_err!("slot {slot} outside 0..{MASK_SLOTS}"))
    }
}

/// Slots of all set bits, ascending.
pub fn find_all_bit_on(mask: Mask) -> Vec<u32> {
    mask.slots().collect()
}

/// Bitwise AND of a non-empty list of masks.
pub fn conjoin(masks: &[Mask]) -> Result<Mask> {
    let (first, rest) = masks
        .split_first()
        .ok_or_else(|| param_err!("conjoin needs at least one mask"))?;
    Ok(rest.iter().fold(*first, |acc, m| acc & *m))
}
