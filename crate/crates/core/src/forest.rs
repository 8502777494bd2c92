//! The uncompressed forest.
//!
//! Every feature keeps one positional mask list per level: root mask `t`
//! summarizes tree `t`, middle mask `t * B + j` summarizes middle node `j` of
//! that tree, and so on. Lists grow lazily; a position past the end of a list
//! reads as the zero mask.

use alloc::vec;
use alloc::vec::Vec;

use crate::config::{ForestConfig, Level};
use crate::error::{Error, Result};
use crate::feature::{FeatureId, FeatureSpec};
use crate::mask::Mask;
use crate::record::TransactionRecord;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Levels {
    root: Vec<Mask>,
    middle: Vec<Mask>,
    leaf: Vec<Mask>,
}

impl Levels {
    fn list(&self, level: Level) -> &[Mask] {
        match level {
            Level::Root => &self.root,
            Level::Middle => &self.middle,
            Level::Leaf => &self.leaf,
        }
    }
}

#[inline]
fn read(list: &[Mask], index: u64) -> Mask {
    list.get(index as usize).copied().unwrap_or(Mask::EMPTY)
}

/// Mask words changed by one insert.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct InsertEffect {
    /// Existing words that gained a bit.
    pub mutated: usize,
    /// Words appended to a list (zero padding included).
    pub appended: usize,
}

/// Uncompressed bitmap forest.
#[derive(Clone, Debug)]
pub struct BmfForest {
    config: ForestConfig,
    columns: Vec<Option<Levels>>,
    record_count: u64,
}

impl BmfForest {
    pub fn new(config: ForestConfig) -> Self {
        BmfForest {
            config,
            columns: Vec::new(),
            record_count: 0,
        }
    }

    /// Builds a forest over `records` for `specs` in one scan.
    pub fn build(
        config: ForestConfig,
        specs: &[FeatureSpec],
        records: &[TransactionRecord],
    ) -> Result<Self> {
        let mut forest = Self::new(config);
        forest.create_features(specs, records)?;
        Ok(forest)
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn record_count(&self) -> u64 {
        self.record_count
    }

    pub fn tree_count(&self) -> u64 {
        self.config.tree_count(self.record_count)
    }

    pub fn feature_count(&self) -> usize {
        self.columns.iter().filter(|c| c.is_some()).count()
    }

    pub fn has_feature(&self, id: FeatureId) -> bool {
        matches!(self.columns.get(id.index()), Some(Some(_)))
    }

    /// Indexed feature ids, ascending.
    pub fn feature_ids(&self) -> impl Iterator<Item = FeatureId> + '_ {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_some())
            .map(|(i, _)| FeatureId(i as u32))
    }

    fn column(&self, id: FeatureId) -> Result<&Levels> {
        self.columns
            .get(id.index())
            .and_then(Option::as_ref)
            .ok_or(Error::Lookup(id.0))
    }

    fn slot_for(&mut self, id: FeatureId) -> &mut Option<Levels> {
        if self.columns.len() <= id.index() {
            self.columns.resize(id.index() + 1, None);
        }
        &mut self.columns[id.index()]
    }

    /// Adds a feature whose masks over all existing records are zero.
    pub fn add_empty_feature(&mut self, id: FeatureId) -> Result<()> {
        let slot = self.slot_for(id);
        if slot.is_some() {
            return Err(Error::Registration(alloc::format!(
                "feature {id} already indexed"
            )));
        }
        *slot = Some(Levels::default());
        Ok(())
    }

    /// Batch feature creation over the full ledger.
    ///
    /// Leaf masks are filled by scanning `records` (bit counter starting at
    /// the most significant slot); middle and root masks are then aggregated
    /// bottom-up. `records` must cover at least every record already counted.
    pub fn create_features(
        &mut self,
        specs: &[FeatureSpec],
        records: &[TransactionRecord],
    ) -> Result<()> {
        if (records.len() as u64) < self.record_count {
            return Err(Error::Parameter(alloc::format!(
                "history has {} records, forest already holds {}",
                records.len(),
                self.record_count
            )));
        }
        for spec in specs {
            if self.has_feature(spec.id) {
                return Err(Error::Registration(spec.name.clone()));
            }
            FeatureSpec::check_schema(spec.dimension, &spec.matcher)?;
        }
        let slots = self.config.branching();
        for spec in specs {
            let mut leaf = Vec::with_capacity(records.len().div_ceil(slots as usize));
            let mut counter = slots - 1;
            let mut buffer = 0u32;
            for record in records {
                if spec.matches(record) {
                    buffer |= 1 << (counter + 32 - slots);
                }
                if counter == 0 {
                    leaf.push(Mask(buffer));
                    counter = slots - 1;
                    buffer = 0;
                } else {
                    counter -= 1;
                }
            }
            if counter != slots - 1 {
                leaf.push(Mask(buffer));
            }
            let middle = aggregate(&leaf, slots);
            let root = aggregate(&middle, slots);
            let mut levels = Levels { root, middle, leaf };
            trim(&mut levels);
            *self.slot_for(spec.id) = Some(levels);
        }
        self.record_count = records.len() as u64;
        Ok(())
    }

    /// Appends one record matching exactly `matched`.
    ///
    /// Features not yet indexed are added with all prior masks zero.
    pub fn insert(&mut self, matched: &[FeatureId]) -> InsertEffect {
        let pos = self.config.locate(self.record_count);
        let b = self.config.branching() as u64;
        let root_at = pos.tree;
        let middle_at = pos.tree * b + pos.middle as u64;
        let leaf_at = middle_at * b + pos.leaf as u64;
        let mut effect = InsertEffect::default();
        for &id in matched {
            let levels = self.slot_for(id).get_or_insert_with(Levels::default);
            set(&mut levels.root, root_at, pos.middle, &mut effect);
            set(&mut levels.middle, middle_at, pos.leaf, &mut effect);
            set(&mut levels.leaf, leaf_at, pos.data, &mut effect);
        }
        self.record_count += 1;
        effect
    }

    /// Evaluates `specs` against `record` and appends it.
    pub fn insert_record(
        &mut self,
        specs: &[FeatureSpec],
        record: &TransactionRecord,
    ) -> InsertEffect {
        let matched: Vec<FeatureId> = specs
            .iter()
            .filter(|s| s.matches(record))
            .map(|s| s.id)
            .collect();
        self.insert(&matched)
    }

    /// Global indices of records matching every feature in `features`, ascending.
    pub fn search(&self, features: &[FeatureId]) -> Result<Vec<u64>> {
        self.search_from(features, 0)
    }

    /// Like [`Self::search`], restricted to indices `>= from`.
    pub fn search_from(&self, features: &[FeatureId], from: u64) -> Result<Vec<u64>> {
        if features.is_empty() {
            return Err(Error::Parameter("search needs at least one feature".into()));
        }
        let columns = features
            .iter()
            .map(|&f| self.column(f))
            .collect::<Result<Vec<_>>>()?;
        let b = self.config.branching() as u64;
        let mut out = Vec::new();
        let first_tree = from >> (3 * self.config.slot_bits());
        for tree in first_tree..self.tree_count() {
            let root = columns
                .iter()
                .fold(Mask::FULL, |acc, c| acc & read(&c.root, tree));
            for j in root.slots() {
                let middle_at = tree * b + j as u64;
                let middle = columns
                    .iter()
                    .fold(Mask::FULL, |acc, c| acc & read(&c.middle, middle_at));
                for k in middle.slots() {
                    let leaf_at = middle_at * b + k as u64;
                    let leaf = columns
                        .iter()
                        .fold(Mask::FULL, |acc, c| acc & read(&c.leaf, leaf_at));
                    for l in leaf.slots() {
                        let index = self.config.global_index(tree, j, k, l);
                        if index >= from {
                            out.push(index);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Positional mask at `index` on `level` (zero when never materialized).
    pub fn mask(&self, feature: FeatureId, level: Level, index: u64) -> Result<Mask> {
        Ok(read(self.column(feature)?.list(level), index))
    }

    /// Materialized mask list of one level (trailing zeros may be absent).
    pub fn masks(&self, feature: FeatureId, level: Level) -> Result<&[Mask]> {
        Ok(self.column(feature)?.list(level))
    }

    /// Every mask of tree `tree` for `feature`, root first, zero-filled.
    pub fn tree_masks(&self, feature: FeatureId, tree: u64) -> Result<Vec<Mask>> {
        let c = self.column(feature)?;
        let b = self.config.branching() as u64;
        let mut out = Vec::with_capacity(self.config.masks_per_tree() as usize);
        out.push(read(&c.root, tree));
        out.extend((tree * b..(tree + 1) * b).map(|i| read(&c.middle, i)));
        out.extend((tree * b * b..(tree + 1) * b * b).map(|i| read(&c.leaf, i)));
        Ok(out)
    }

    /// Little-endian bytes of every feature's masks for tree `tree`, in id order.
    pub fn serialize_tree(&self, tree: u64) -> Vec<u8> {
        let mut out = Vec::new();
        for (id, column) in self.columns.iter().enumerate() {
            if column.is_some() {
                for m in self
                    .tree_masks(FeatureId(id as u32), tree)
                    .expect("indexed")
                {
                    out.extend_from_slice(&m.0.to_le_bytes());
                }
            }
        }
        out
    }

    /// Size of the fully materialized forest: every feature, every tree, every node.
    pub fn uncompressed_bytes(&self) -> u64 {
        self.feature_count() as u64 * self.tree_count() * self.config.masks_per_tree() * 4
    }
}

fn set(list: &mut Vec<Mask>, at: u64, slot: u32, effect: &mut InsertEffect) {
    let at = at as usize;
    if list.len() <= at {
        effect.appended += at + 1 - list.len();
        list.resize(at + 1, Mask::EMPTY);
    }
    let before = list[at];
    list[at].insert(slot);
    if list[at] != before {
        effect.mutated += 1;
    }
}

/// One parent mask per group of `slots` children; a bit is set when the child is nonzero.
fn aggregate(children: &[Mask], slots: u32) -> Vec<Mask> {
    children
        .chunks(slots as usize)
        .map(|group| {
            let mut parent = Mask::EMPTY;
            for (i, child) in group.iter().enumerate() {
                if !child.is_empty() {
                    parent.insert(i as u32);
                }
            }
            parent
        })
        .collect()
}

fn trim(levels: &mut Levels) {
    for list in [&mut levels.root, &mut levels.middle, &mut levels.leaf] {
        while list.last().is_some_and(|m| m.is_empty()) {
            list.pop();
        }
    }
}

/// Builds the per-level lists for a dense match vector; used by tests and size accounting.
pub fn dense_levels(config: &ForestConfig, matches: &[bool]) -> [Vec<Mask>; 3] {
    let slots = config.branching();
    let mut leaf = vec![Mask::EMPTY; matches.len().div_ceil(slots as usize)];
    for (i, _) in matches.iter().enumerate().filter(|(_, m)| **m) {
        leaf[i / slots as usize].insert(i as u32 % slots);
    }
    let middle = aggregate(&leaf, slots);
    let root = aggregate(&middle, slots);
    [root, middle, leaf]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature::Matcher;
    use crate::record::{Dimension, Value};

    fn spec(id: u32, from: &str) -> FeatureSpec {
        FeatureSpec {
            id: FeatureId(id),
            name: alloc::format!("from={from}"),
            dimension: Dimension::From,
            matcher: Matcher::Keyword(Value::Text(from.into())),
        }
    }

    fn records(froms: &[&str]) -> Vec<TransactionRecord> {
        froms
            .iter()
            .map(|f| TransactionRecord {
                from: (*f).into(),
                ..TransactionRecord::sample()
            })
            .collect()
    }

    /// The five-record, branching-2 example with feature b on the fourth entry.
    #[test]
    fn small_branching_example() {
        let config = ForestConfig::new(2, 3, 1).unwrap();
        let data = records(&["a", "c", "a", "b", "c"]);
        let forest =
            BmfForest::build(config, &[spec(0, "a"), spec(1, "b"), spec(2, "c")], &data).unwrap();
        let b = FeatureId(1);
        assert_eq!(forest.search(&[b]).unwrap(), vec![3]);
        // root: only the left middle node; middle: its second leaf; leaf: second slot
        assert_eq!(forest.mask(b, Level::Root, 0).unwrap(), Mask(0x8000_0000));
        assert_eq!(forest.mask(b, Level::Middle, 0).unwrap(), Mask(0x4000_0000));
        assert_eq!(forest.mask(b, Level::Leaf, 1).unwrap(), Mask(0x4000_0000));
        assert_eq!(forest.search(&[FeatureId(0)]).unwrap(), vec![0, 2]);
        assert_eq!(forest.search(&[FeatureId(2)]).unwrap(), vec![1, 4]);
    }

    #[test]
    fn empty_ledger() {
        let forest = BmfForest::build(ForestConfig::default(), &[spec(0, "a")], &[]).unwrap();
        assert!(forest.masks(FeatureId(0), Level::Leaf).unwrap().is_empty());
        assert!(forest.search(&[FeatureId(0)]).unwrap().is_empty());
        assert!(matches!(
            forest.search(&[FeatureId(9)]),
            Err(Error::Lookup(9))
        ));
        assert!(forest.search(&[]).is_err());
    }

    #[test]
    fn first_insert_sets_msb_everywhere() {
        let mut forest = BmfForest::new(ForestConfig::default());
        let f = FeatureId(0);
        let effect = forest.insert(&[f]);
        assert_eq!(forest.masks(f, Level::Leaf).unwrap(), &[Mask(0x8000_0000)]);
        assert_eq!(
            forest.masks(f, Level::Middle).unwrap(),
            &[Mask(0x8000_0000)]
        );
        assert_eq!(forest.masks(f, Level::Root).unwrap(), &[Mask(0x8000_0000)]);
        assert_eq!(effect.appended, 3);
        let before = forest.serialize_tree(0);
        let effect = forest.insert(&[]);
        assert_eq!(effect, InsertEffect::default());
        assert_eq!(forest.serialize_tree(0), before);
        assert_eq!(forest.record_count(), 2);
    }

    #[test]
    fn tree_boundary_freezes_previous_tree() {
        let mut forest = BmfForest::new(ForestConfig::default());
        let f = FeatureId(0);
        for i in 0..32_768u64 {
            forest.insert(if i % 7 == 0 {
                core::slice::from_ref(&f)
            } else {
                &[]
            });
        }
        let frozen = forest.serialize_tree(0);
        assert_eq!(forest.tree_count(), 1);
        forest.insert(&[f]);
        assert_eq!(forest.tree_count(), 2);
        for _ in 0..100 {
            forest.insert(&[f]);
        }
        assert_eq!(forest.serialize_tree(0), frozen);
        assert_eq!(forest.mask(f, Level::Root, 1).unwrap(), Mask(0x8000_0000));
    }

    #[test]
    fn create_then_insert_agree_with_incremental() {
        let config = ForestConfig::new(4, 3, 1).unwrap();
        let data: Vec<_> = (0..300)
            .map(|i| if i % 5 == 0 { "x" } else { "y" })
            .collect();
        let data = records(&data);
        let specs = [spec(0, "x"), spec(1, "y")];
        let batch = BmfForest::build(config, &specs, &data).unwrap();
        let mut incremental = BmfForest::new(config);
        for id in 0..2 {
            incremental.add_empty_feature(FeatureId(id)).unwrap();
        }
        for r in &data {
            incremental.insert_record(&specs, r);
        }
        for id in 0..2 {
            for tree in 0..batch.tree_count() {
                assert_eq!(
                    batch.tree_masks(FeatureId(id), tree).unwrap(),
                    incremental.tree_masks(FeatureId(id), tree).unwrap()
                );
            }
        }
    }

    #[test]
    fn dense_levels_shape() {
        let config = ForestConfig::default();
        let [root, middle, leaf] = dense_levels(&config, &vec![true; 32_768]);
        assert_eq!((root.len(), middle.len(), leaf.len()), (1, 32, 1024));
        assert!(leaf
            .iter()
            .chain(&middle)
            .chain(&root)
            .all(|m| *m == Mask::FULL));
    }
}
