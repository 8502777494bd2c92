//! The compressed forest: zero masks are never stored.
//!
//! Per feature the forest keeps three dense lists of nonzero masks (root,
//! middle, leaf), an empty-tree filter with one bit per tree, and a
//! first-node table with one `(middle_start, leaf_start)` pair per tree that
//! contains the feature. Positions inside a tree are recovered by rank:
//!
//! - root mask of tree `t` = `roots[rank_ebf(t)]`
//! - middle mask of slot `j` = `middles[middle_start + rank(root, j)]`
//! - leaf mask of slot `k` under middle `m` =
//!   `leaves[leaf_start + popcount(middles before m in this tree) + rank(m, k)]`
//!
//! Records arrive in ledger order, so new bits always land in the last mask
//! of each list (or a freshly appended one) and the growing tree is kept in
//! the same zero-elided form as completed trees.

use alloc::format;
use alloc::vec::Vec;

use crate::config::{ForestConfig, Level};
use crate::error::{Error, Result};
use crate::feature::{FeatureId, FeatureSpec};
use crate::forest::BmfForest;
use crate::mask::Mask;
use crate::record::TransactionRecord;

/// Empty-tree filter: bit `t` is set when tree `t` contains the feature.
///
/// The logical length is the forest's tree count; words past the stored
/// prefix are zero. A prefix-count directory makes `rank` constant time.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TreeFilter {
    words: Vec<u64>,
    ranks: Vec<u32>,
    ones: u32,
}

impl TreeFilter {
    pub fn contains(&self, tree: u64) -> bool {
        let (w, b) = ((tree / 64) as usize, tree % 64);
        self.words.get(w).is_some_and(|word| word & (1 << b) != 0)
    }

    /// Set bits strictly before `tree`.
    #[inline]
    pub fn rank(&self, tree: u64) -> u32 {
        let (w, b) = ((tree / 64) as usize, tree % 64);
        match self.words.get(w) {
            Some(word) => self.ranks[w] + (word & ((1u64 << b) - 1)).count_ones(),
            None => self.ones,
        }
    }

    pub fn count_ones(&self) -> u32 {
        self.ones
    }

    pub fn set(&mut self, tree: u64) {
        let w = (tree / 64) as usize;
        while self.words.len() <= w {
            self.ranks.push(self.ones);
            self.words.push(0);
        }
        let bit = 1u64 << (tree % 64);
        if self.words[w] & bit == 0 {
            self.words[w] |= bit;
            self.ones += 1;
            for r in &mut self.ranks[w + 1..] {
                *r += 1;
            }
        }
    }

    /// Highest set tree.
    pub fn last(&self) -> Option<u64> {
        self.words
            .iter()
            .enumerate()
            .rev()
            .find(|(_, w)| **w != 0)
            .map(|(i, w)| i as u64 * 64 + 63 - w.leading_zeros() as u64)
    }

    #[inline]
    pub(crate) fn word(&self, i: usize) -> u64 {
        self.words.get(i).copied().unwrap_or(0)
    }

    /// Set trees in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        self.words
            .iter()
            .enumerate()
            .flat_map(|(i, &w)| BitIter(w).map(move |b| i as u64 * 64 + b as u64))
    }

    /// Membership of trees `0..len`.
    pub fn to_bits(&self, len: u64) -> Vec<bool> {
        (0..len).map(|t| self.contains(t)).collect()
    }
}

struct BitIter(u64);

impl Iterator for BitIter {
    type Item = u32;
    fn next(&mut self) -> Option<u32> {
        if self.0 == 0 {
            return None;
        }
        let b = self.0.trailing_zeros();
        self.0 &= self.0 - 1;
        Some(b)
    }
}

/// First-node table entry for one non-empty tree: indices of the tree's first
/// middle and leaf mask within the feature's compressed lists.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitEntry {
    pub middle_start: u32,
    pub leaf_start: u32,
}

/// One feature's compressed index.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Column {
    ebf: TreeFilter,
    fit: Vec<FitEntry>,
    roots: Vec<Mask>,
    middles: Vec<Mask>,
    leaves: Vec<Mask>,
    last_tree: Option<u64>,
    touched: bool,
}

impl Column {
    pub fn filter(&self) -> &TreeFilter {
        &self.ebf
    }

    pub fn fit(&self) -> &[FitEntry] {
        &self.fit
    }

    pub fn masks(&self, level: Level) -> &[Mask] {
        match level {
            Level::Root => &self.roots,
            Level::Middle => &self.middles,
            Level::Leaf => &self.leaves,
        }
    }

    pub fn mask_count(&self) -> usize {
        self.roots.len() + self.middles.len() + self.leaves.len()
    }

    /// Records a match at `pos`; positions must be non-decreasing.
    #[inline]
    fn push(&mut self, tree: u64, middle: u32, leaf: u32, data: u32) {
        if self.last_tree != Some(tree) {
            debug_assert!(self.last_tree.is_none_or(|t| t < tree));
            self.ebf.set(tree);
            self.fit.push(FitEntry {
                middle_start: self.middles.len() as u32,
                leaf_start: self.leaves.len() as u32,
            });
            self.roots.push(Mask::EMPTY);
            self.last_tree = Some(tree);
        }
        let root = self.roots.last_mut().expect("root pushed");
        if !root.contains(middle) {
            root.insert(middle);
            self.middles.push(Mask::EMPTY);
        }
        let mid = self.middles.last_mut().expect("middle pushed");
        if !mid.contains(leaf) {
            mid.insert(leaf);
            self.leaves.push(Mask::EMPTY);
        }
        self.leaves.last_mut().expect("leaf pushed").insert(data);
    }

    /// Number of stored masks belonging to tree `tree`.
    pub fn tree_mask_count(&self, tree: u64) -> u64 {
        if !self.ebf.contains(tree) {
            return 0;
        }
        let r = self.ebf.rank(tree) as usize;
        let root = self.roots[r];
        let start = self.fit[r].middle_start as usize;
        let middles = &self.middles[start..start + root.count() as usize];
        1 + middles.len() as u64 + middles.iter().map(|m| m.count() as u64).sum::<u64>()
    }
}

/// Stored masks of one feature, as recovered from durable storage.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ColumnParts {
    /// `(tree, entry)` for every non-empty tree, ascending by tree.
    pub fit: Vec<(u64, FitEntry)>,
    pub roots: Vec<Mask>,
    pub middles: Vec<Mask>,
    pub leaves: Vec<Mask>,
}

/// Mask words read by a query.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct QueryStats {
    pub trees_visited: u64,
    pub root_reads: u64,
    /// Distinct middle masks touched, including ones only read for their popcount.
    pub middle_reads: u64,
    pub leaf_reads: u64,
}

impl QueryStats {
    pub fn mask_words(&self) -> u64 {
        self.root_reads + self.middle_reads + self.leaf_reads
    }
}

/// One candidate tree visited by a traced query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeVisit {
    pub tree: u64,
    /// Per queried feature: filter rank of the tree and its first-node entry.
    pub entries: Vec<(u32, FitEntry)>,
    pub root_masks: Vec<Mask>,
    /// Middle slots surviving the conjunction of root masks.
    pub middle_slots: Vec<u32>,
    /// Middle-list indices read for the first queried feature.
    pub middle_indices: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct QueryResult {
    pub indices: Vec<u64>,
    /// Record count at query time: the first index not yet scanned.
    pub cursor: u64,
    pub stats: QueryStats,
}

/// Stored sizes, split by level and by feature kind.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SizeReport {
    pub root_bytes: u64,
    pub middle_bytes: u64,
    pub leaf_bytes: u64,
    /// Mask bytes of dimension-valued (keyword) features.
    pub general_bytes: u64,
    /// Mask bytes of custom-condition features.
    pub define_bytes: u64,
    /// Total empty-tree filter bits (features x trees).
    pub filter_bits: u64,
    /// First-node table bytes (two 32-bit indices per entry).
    pub fit_bytes: u64,
}

impl SizeReport {
    pub fn mask_bytes(&self) -> u64 {
        self.root_bytes + self.middle_bytes + self.leaf_bytes
    }

    pub fn total_bytes(&self) -> u64 {
        self.mask_bytes() + self.fit_bytes + self.filter_bits.div_ceil(8)
    }
}

/// Zero-elided bitmap forest.
#[derive(Clone, Debug)]
pub struct CompressedForest {
    config: ForestConfig,
    columns: Vec<Option<Column>>,
    record_count: u64,
    touched: Vec<FeatureId>,
}

impl CompressedForest {
    pub fn new(config: ForestConfig) -> Self {
        CompressedForest {
            config,
            columns: Vec::new(),
            record_count: 0,
            touched: Vec::new(),
        }
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn record_count(&self) -> u64 {
        self.record_count
    }

    /// Completed trees plus the growing one.
    pub fn tree_count(&self) -> u64 {
        self.config.tree_count(self.record_count)
    }

    /// Trees holding their full capacity of records.
    pub fn completed_trees(&self) -> u64 {
        self.record_count / self.config.tree_capacity()
    }

    pub fn feature_count(&self) -> usize {
        self.columns.iter().filter(|c| c.is_some()).count()
    }

    pub fn has_feature(&self, id: FeatureId) -> bool {
        matches!(self.columns.get(id.index()), Some(Some(_)))
    }

    pub fn column(&self, id: FeatureId) -> Result<&Column> {
        self.columns
            .get(id.index())
            .and_then(Option::as_ref)
            .ok_or(Error::Lookup(id.0))
    }

    pub fn columns(&self) -> impl Iterator<Item = (FeatureId, &Column)> + '_ {
        self.columns
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.as_ref().map(|c| (FeatureId(i as u32), c)))
    }

    fn column_mut(&mut self, id: FeatureId) -> &mut Column {
        if self.columns.len() <= id.index() {
            self.columns.resize(id.index() + 1, None);
        }
        let column = self.columns[id.index()].get_or_insert_with(Column::default);
        if !column.touched {
            column.touched = true;
            self.touched.push(id);
        }
        column
    }

    /// Features whose stored masks changed since the last call, ascending.
    pub fn take_touched(&mut self) -> Vec<FeatureId> {
        let mut touched = core::mem::take(&mut self.touched);
        for id in &touched {
            if let Some(Some(c)) = self.columns.get_mut(id.index()) {
                c.touched = false;
            }
        }
        touched.sort_unstable();
        touched
    }

    /// Registers a feature that matches no existing record; nothing is scanned.
    pub fn add_empty_feature(&mut self, id: FeatureId) -> Result<()> {
        if self.has_feature(id) {
            return Err(Error::Registration(format!("feature {id} already indexed")));
        }
        self.column_mut(id);
        Ok(())
    }

    /// Appends one record matching exactly `matched`. Returns the id of the
    /// tree this record completed, if any.
    #[inline]
    pub fn insert(&mut self, matched: &[FeatureId]) -> Option<u64> {
        let pos = self.config.locate(self.record_count);
        for &id in matched {
            self.column_mut(id)
                .push(pos.tree, pos.middle, pos.leaf, pos.data);
        }
        self.record_count += 1;
        self.record_count
            .is_multiple_of(self.config.tree_capacity())
            .then_some(pos.tree)
    }

    /// Appends `n` records that match nothing. Returns the trees completed.
    pub fn advance(&mut self, n: u64) -> Vec<u64> {
        let cap = self.config.tree_capacity();
        let before = self.record_count / cap;
        self.record_count += n;
        (before..self.record_count / cap).collect()
    }

    /// Creates features over the existing ledger by scanning `records`.
    pub fn create_features(
        &mut self,
        specs: &[FeatureSpec],
        records: &[TransactionRecord],
    ) -> Result<()> {
        if records.len() as u64 != self.record_count {
            return Err(Error::Parameter(format!(
                "history has {} records, forest holds {}",
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
        for spec in specs {
            let config = self.config;
            let column = self.column_mut(spec.id);
            for (i, record) in records.iter().enumerate() {
                if spec.matches(record) {
                    let p = config.locate(i as u64);
                    column.push(p.tree, p.middle, p.leaf, p.data);
                }
            }
        }
        Ok(())
    }

    /// Appends the full tree `tree` of an uncompressed forest: its nonzero
    /// masks in level order, one first-node entry and a filter bit per
    /// feature present. The tree must be the next one this forest expects.
    pub fn compress_completed_tree(&mut self, source: &BmfForest, tree: u64) -> Result<()> {
        let cap = self.config.tree_capacity();
        if source.config() != &self.config {
            return Err(Error::Parameter("forest shapes differ".into()));
        }
        if source.record_count() < (tree + 1) * cap {
            return Err(Error::State(format!("tree {tree} is not full")));
        }
        if self.record_count != tree * cap {
            return Err(Error::State(format!(
                "expected tree {} next, got {tree}",
                self.record_count.div_ceil(cap)
            )));
        }
        self.append_tree(source, tree, cap)
    }

    /// Converts an uncompressed forest, including its partial last tree.
    pub fn from_forest(source: &BmfForest) -> Result<Self> {
        let mut out = Self::new(*source.config());
        let cap = out.config.tree_capacity();
        for id in source.feature_ids() {
            out.column_mut(id);
        }
        for tree in 0..source.tree_count() {
            let records = (source.record_count() - tree * cap).min(cap);
            out.append_tree(source, tree, records)?;
        }
        Ok(out)
    }

    fn append_tree(&mut self, source: &BmfForest, tree: u64, records: u64) -> Result<()> {
        let b = self.config.branching();
        let ids: Vec<FeatureId> = source.feature_ids().collect();
        for id in ids {
            let masks = source.tree_masks(id, tree)?;
            let root = masks[0];
            self.column_mut(id);
            if root.is_empty() {
                continue;
            }
            let column = self.column_mut(id);
            column.ebf.set(tree);
            column.fit.push(FitEntry {
                middle_start: column.middles.len() as u32,
                leaf_start: column.leaves.len() as u32,
            });
            column.roots.push(root);
            column.last_tree = Some(tree);
            let middles = &masks[1..1 + b as usize];
            let leaves = &masks[1 + b as usize..];
            for j in root.slots() {
                column.middles.push(middles[j as usize]);
            }
            for j in root.slots() {
                for k in middles[j as usize].slots() {
                    column.leaves.push(leaves[(j * b + k) as usize]);
                }
            }
        }
        self.record_count = tree * self.config.tree_capacity() + records;
        Ok(())
    }

    /// Records matching every feature in `features`, from index `from` on.
    pub fn query(&self, features: &[FeatureId], from: u64) -> Result<QueryResult> {
        self.run_query(features, from, None)
    }

    /// [`Self::query`] that also reports every candidate tree it visited.
    pub fn query_traced(
        &self,
        features: &[FeatureId],
        from: u64,
    ) -> Result<(QueryResult, Vec<TreeVisit>)> {
        let mut trace = Vec::new();
        let result = self.run_query(features, from, Some(&mut trace))?;
        Ok((result, trace))
    }

    fn run_query(
        &self,
        features: &[FeatureId],
        from: u64,
        mut trace: Option<&mut Vec<TreeVisit>>,
    ) -> Result<QueryResult> {
        if features.is_empty() {
            return Err(Error::Parameter("query needs at least one feature".into()));
        }
        let columns = features
            .iter()
            .map(|&f| self.column(f))
            .collect::<Result<Vec<_>>>()?;
        let mut result = QueryResult {
            indices: Vec::new(),
            cursor: self.record_count,
            stats: QueryStats::default(),
        };
        if from >= self.record_count {
            return Ok(result);
        }
        let start = self.config.locate(from);
        let trees = self.tree_count();
        let mut cursors: Vec<TreeCursor> = Vec::with_capacity(columns.len());

        let first_word = (start.tree / 64) as usize;
        let last_word = ((trees - 1) / 64) as usize;
        for w in first_word..=last_word {
            let mut candidates = columns.iter().fold(u64::MAX, |acc, c| acc & c.ebf.word(w));
            if w == first_word {
                candidates &= u64::MAX << (start.tree % 64);
            }
            for bit in BitIter(candidates) {
                let tree = w as u64 * 64 + bit as u64;
                if tree >= trees {
                    break;
                }
                result.stats.trees_visited += 1;
                cursors.clear();
                let mut root = Mask::FULL;
                for c in &columns {
                    let rank = c.ebf.rank(tree);
                    let entry = c.fit[rank as usize];
                    let r = c.roots[rank as usize];
                    result.stats.root_reads += 1;
                    root &= r;
                    cursors.push(TreeCursor::new(rank, entry, r));
                }
                let at_start = tree == start.tree;
                if at_start {
                    root &= Mask::from_slot(start.middle);
                }
                let mut visit = trace.as_ref().map(|_| TreeVisit {
                    tree,
                    entries: cursors.iter().map(|c| (c.rank, c.entry)).collect(),
                    root_masks: cursors.iter().map(|c| c.root).collect(),
                    middle_slots: root.slots().collect(),
                    middle_indices: Vec::new(),
                });
                for j in root.slots() {
                    let mut middle = Mask::FULL;
                    for (c, col) in cursors.iter_mut().zip(&columns) {
                        middle &= c.seek_middle(col, j, &mut result.stats);
                    }
                    if let Some(v) = visit.as_mut() {
                        v.middle_indices
                            .push(cursors[0].last_middle.expect("middle read"));
                    }
                    let at_middle = at_start && j == start.middle;
                    if at_middle {
                        middle &= Mask::from_slot(start.leaf);
                    }
                    for k in middle.slots() {
                        let mut leaf = Mask::FULL;
                        for (c, col) in cursors.iter().zip(&columns) {
                            leaf &= col.leaves[c.leaf_index(k)];
                            result.stats.leaf_reads += 1;
                        }
                        if at_middle && k == start.leaf {
                            leaf &= Mask::from_slot(start.data);
                        }
                        result.indices.extend(
                            leaf.slots()
                                .map(|l| self.config.global_index(tree, j, k, l)),
                        );
                    }
                }
                if let (Some(t), Some(v)) = (trace.as_mut(), visit) {
                    t.push(v);
                }
            }
        }
        Ok(result)
    }

    /// Bytes stored per level, split into keyword and condition features.
    pub fn measured_size(&self, is_condition: impl Fn(FeatureId) -> bool) -> SizeReport {
        let mut report = SizeReport::default();
        let trees = self.tree_count();
        for (id, c) in self.columns() {
            report.root_bytes += 4 * c.roots.len() as u64;
            report.middle_bytes += 4 * c.middles.len() as u64;
            report.leaf_bytes += 4 * c.leaves.len() as u64;
            let bytes = 4 * c.mask_count() as u64;
            if is_condition(id) {
                report.define_bytes += bytes;
            } else {
                report.general_bytes += bytes;
            }
            report.filter_bits += trees;
            report.fit_bytes += 8 * c.fit.len() as u64;
        }
        report
    }

    /// Stored mask bits of tree `tree` over the features selected by `include`.
    pub fn tree_bits(&self, tree: u64, include: impl Fn(FeatureId) -> bool) -> u64 {
        self.columns()
            .filter(|(id, _)| include(*id))
            .map(|(_, c)| 32 * c.tree_mask_count(tree))
            .sum()
    }

    /// Exclusive end index of the ledger range covered by the last stored
    /// root, middle and leaf mask of `feature`.
    pub fn last_node_ends(&self, feature: FeatureId) -> Result<Option<[u64; 3]>> {
        let c = self.column(feature)?;
        let Some(tree) = c.last_tree else {
            return Ok(None);
        };
        let root = *c.roots.last().expect("non-empty tree has a root");
        let mid = *c.middles.last().expect("non-empty tree has a middle");
        let j = root.last_slot().expect("nonzero root") as u64;
        let k = mid.last_slot().expect("nonzero middle") as u64;
        let cap = self.config.tree_capacity();
        let m = self.config.middle_capacity();
        let l = self.config.leaf_capacity();
        let base = tree * cap;
        Ok(Some([
            base + cap,
            base + (j + 1) * m,
            base + j * m + (k + 1) * l,
        ]))
    }

    /// Rebuilds a forest from stored parts, checking every structural invariant.
    pub fn from_parts(
        config: ForestConfig,
        record_count: u64,
        parts: Vec<Option<ColumnParts>>,
    ) -> Result<Self> {
        let trees = config.tree_count(record_count);
        let mut columns = Vec::with_capacity(parts.len());
        for (i, part) in parts.into_iter().enumerate() {
            let Some(p) = part else {
                columns.push(None);
                continue;
            };
            let corrupt = |what: &str| Error::Integrity(format!("feature {i}: {what}"));
            if p.fit.len() != p.roots.len() {
                return Err(corrupt("first-node table and root list lengths differ"));
            }
            let mut column = Column::default();
            let (mut mids, mut leaves) = (0usize, 0usize);
            for ((tree, entry), root) in p.fit.iter().zip(&p.roots) {
                if *tree >= trees || column.last_tree.is_some_and(|t| t >= *tree) {
                    return Err(corrupt("tree ids out of order or past the ledger end"));
                }
                if entry.middle_start as usize != mids || entry.leaf_start as usize != leaves {
                    return Err(corrupt(
                        "first-node entry does not match stored mask counts",
                    ));
                }
                if root.is_empty() || root.0 & !Mask::first_slots(config.branching()).0 != 0 {
                    return Err(corrupt("invalid root mask"));
                }
                let end = mids + root.count() as usize;
                let tree_middles = p
                    .middles
                    .get(mids..end)
                    .ok_or_else(|| corrupt("middle list too short"))?;
                for m in tree_middles {
                    if m.is_empty() {
                        return Err(corrupt("zero middle mask stored"));
                    }
                    leaves += m.count() as usize;
                }
                mids = end;
                column.ebf.set(*tree);
                column.last_tree = Some(*tree);
            }
            if mids != p.middles.len() || leaves != p.leaves.len() {
                return Err(corrupt("mask list lengths disagree with their parents"));
            }
            if p.leaves.iter().any(|m| m.is_empty()) {
                return Err(corrupt("zero leaf mask stored"));
            }
            column.fit = p.fit.into_iter().map(|(_, e)| e).collect();
            column.roots = p.roots;
            column.middles = p.middles;
            column.leaves = p.leaves;
            columns.push(Some(column));
        }
        let forest = CompressedForest {
            config,
            columns,
            record_count,
            touched: Vec::new(),
        };
        for (id, _) in forest.columns() {
            if let Some(ends) = forest.last_node_ends(id)? {
                let leaf_start = ends[2] - forest.config.leaf_capacity();
                let last = forest.column(id)?.leaves.last().expect("leaf stored");
                let last_data = last.last_slot().expect("nonzero leaf") as u64;
                if leaf_start + last_data >= record_count {
                    return Err(Error::Integrity(format!(
                        "feature {id}: match recorded past the ledger end"
                    )));
                }
            }
        }
        Ok(forest)
    }
}

/// Per-feature position inside one candidate tree.
struct TreeCursor {
    rank: u32,
    entry: FitEntry,
    root: Mask,
    next_middle: usize,
    leaf_offset: usize,
    last_middle: Option<usize>,
    middle: Mask,
    leaf_base: usize,
}

impl TreeCursor {
    fn new(rank: u32, entry: FitEntry, root: Mask) -> Self {
        TreeCursor {
            rank,
            entry,
            root,
            next_middle: entry.middle_start as usize,
            leaf_offset: 0,
            last_middle: None,
            middle: Mask::EMPTY,
            leaf_base: 0,
        }
    }

    /// Loads the middle mask of slot `j`, accumulating popcounts of the
    /// tree's earlier middle masks to find where its leaves start.
    #[inline]
    fn seek_middle(&mut self, column: &Column, j: u32, stats: &mut QueryStats) -> Mask {
        let index = self.entry.middle_start as usize + self.root.rank_unchecked(j) as usize;
        while self.next_middle < index {
            if self.last_middle != Some(self.next_middle) {
                stats.middle_reads += 1;
            }
            self.leaf_offset += column.middles[self.next_middle].count() as usize;
            self.next_middle += 1;
        }
        self.middle = column.middles[index];
        stats.middle_reads += 1;
        self.last_middle = Some(index);
        self.leaf_base = self.entry.leaf_start as usize + self.leaf_offset;
        self.middle
    }

    #[inline]
    fn leaf_index(&self, k: u32) -> usize {
        self.leaf_base + self.middle.rank_unchecked(k) as usize
    }
}
