use core::fmt;

use crate::error::{param_err, Result};
use crate::mask::MASK_SLOTS;

/// Tree level. Trees always have exactly three.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Level {
    Root = 0,
    Middle = 1,
    Leaf = 2,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Root, Level::Middle, Level::Leaf];

    pub fn name(self) -> &'static str {
        match self {
            Level::Root => "root",
            Level::Middle => "middle",
            Level::Leaf => "leaf",
        }
    }

    pub fn from_tag(tag: u8) -> Option<Level> {
        Level::ALL.get(tag as usize).copied()
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Shape of every tree in the forest.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ForestConfig {
    branching: u32,
    height: u32,
    create_batch_threshold: usize,
}

pub const DEFAULT_BRANCHING: u32 = 32;
pub const DEFAULT_HEIGHT: u32 = 3;
pub const DEFAULT_CREATE_BATCH_THRESHOLD: usize = 8;

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            branching: DEFAULT_BRANCHING,
            height: DEFAULT_HEIGHT,
            create_batch_threshold: DEFAULT_CREATE_BATCH_THRESHOLD,
        }
    }
}

impl ForestConfig {
    /// `branching` must be a power of two no larger than 32 so that one mask
    /// word holds one node; only height 3 (root/middle/leaf) is supported.
    pub fn new(branching: u32, height: u32, create_batch_threshold: usize) -> Result<Self> {
        if !branching.is_power_of_two() || !(2..=MASK_SLOTS).contains(&branching) {
            return Err(param_err!(
                "branching {branching} must be a power of two in 2..=32"
            ));
        }
        if height != 3 {
            return Err(param_err!(
                "height {height} unsupported; trees have root, middle and leaf levels"
            ));
        }
        Ok(ForestConfig {
            branching,
            height,
            create_batch_threshold,
        })
    }

    pub fn with_branching(branching: u32) -> Result<Self> {
        Self::new(branching, DEFAULT_HEIGHT, DEFAULT_CREATE_BATCH_THRESHOLD)
    }

    #[inline]
    pub fn branching(&self) -> u32 {
        self.branching
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn create_batch_threshold(&self) -> usize {
        self.create_batch_threshold
    }

    #[inline]
    pub fn slot_bits(&self) -> u32 {
        self.branching.trailing_zeros()
    }

    /// Records per leaf node.
    #[inline]
    pub fn leaf_capacity(&self) -> u64 {
        self.branching as u64
    }

    /// Records per middle node.
    #[inline]
    pub fn middle_capacity(&self) -> u64 {
        1 << (2 * self.slot_bits())
    }

    /// Records per tree.
    #[inline]
    pub fn tree_capacity(&self) -> u64 {
        1 << (3 * self.slot_bits())
    }

    /// Mask words in one fully materialized tree.
    pub fn masks_per_tree(&self) -> u64 {
        let b = self.branching as u64;
        1 + b + b * b
    }

    /// Number of trees needed for `records` entries, counting a partial one.
    #[inline]
    pub fn tree_count(&self, records: u64) -> u64 {
        records.div_ceil(self.tree_capacity())
    }

    #[inline]
    pub fn locate(&self, index: u64) -> Position {
        let bits = self.slot_bits();
        let slot_mask = (self.branching - 1) as u64;
        Position {
            tree: index >> (3 * bits),
            middle: ((index >> (2 * bits)) & slot_mask) as u32,
            leaf: ((index >> bits) & slot_mask) as u32,
            data: (index & slot_mask) as u32,
        }
    }

    /// `tree << log2(len) + middle << log2(M_n) + leaf << log2(L_n) + data`.
    #[inline]
    pub fn global_index(&self, tree: u64, middle: u32, leaf: u32, data: u32) -> u64 {
        let bits = self.slot_bits();
        (tree << (3 * bits))
            + ((middle as u64) << (2 * bits))
            + ((leaf as u64) << bits)
            + data as u64
    }
}

/// Coordinates of one record inside the forest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Position {
    pub tree: u64,
    pub middle: u32,
    pub leaf: u32,
    pub data: u32,
}
