//! Durable keyword index in a data directory.
//!
//! Layout:
//!
//! - `root.masks`, `middle.masks`, `leaf.masks`: 32-bit little-endian mask
//!   words, append-only. Each flush appends, level by level, the new masks of
//!   every changed feature in feature order.
//! - `records.log`: the raw records, one JSON object per line.
//! - `manifest`: commit records (see [`crate::manifest`]).
//! - `config`: `key=value` settings.
//! - `lock`: held exclusively while the store is open.
//!
//! A flush writes the record log, then the mask pages, then a commit record.
//! Only after the commit is durable are previously flushed partial masks
//! updated in place; the commit lists each such overwrite, so recovery can
//! replay it. Anything past the last intact commit is discarded on load.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use bitforest_core::compressed::ColumnParts;
use bitforest_core::{
    CompressedForest, Dimension, FeatureId, FitEntry, KeywordIndex, Level, MappingTable, Mask,
    Matcher, TransactionRecord, Value,
};

use crate::error::{StoreError, StoreResult};
use crate::manifest::{self, Commit, CommitKind, Extent, FitDelta, Overwrite, Run, RECORD_LOG};
use crate::settings::{Overrides, Settings};

pub const LEVEL_FILES: [&str; 3] = ["root.masks", "middle.masks", "leaf.masks"];
pub const RECORD_FILE: &str = "records.log";
pub const MANIFEST_FILE: &str = "manifest";
pub const CONFIG_FILE: &str = "config";
pub const LOCK_FILE: &str = "lock";

/// Points in the flush sequence where a crash can be simulated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaultPoint {
    /// The record log is written, no mask pages yet.
    AfterRecordLog,
    /// Root pages are written.
    AfterRootPages,
    /// Half of the leaf pages are written.
    MidLeafPages,
    /// Every page is written, the commit record is not.
    BeforeCommit,
    /// Half of the commit record is written.
    TornCommit,
    /// The commit is durable, the in-place merges are not applied.
    AfterCommitBeforeOverwrite,
}

impl FaultPoint {
    pub const ALL: [FaultPoint; 6] = [
        FaultPoint::AfterRecordLog,
        FaultPoint::AfterRootPages,
        FaultPoint::MidLeafPages,
        FaultPoint::BeforeCommit,
        FaultPoint::TornCommit,
        FaultPoint::AfterCommitBeforeOverwrite,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StoreOptions {
    /// `fsync` after pages and after each commit record.
    pub fsync: bool,
    /// Flush whenever a tree fills up.
    pub auto_persist: bool,
}

impl Default for StoreOptions {
    fn default() -> Self {
        StoreOptions {
            fsync: true,
            auto_persist: true,
        }
    }
}

/// Summary of one written commit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CommitInfo {
    pub kind: CommitKind,
    pub record_count: u64,
    pub appended_words: [u64; 3],
    pub overwrites: usize,
    pub features: usize,
}

/// What is durable for one feature.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Durable {
    counts: [u32; 3],
    last_position: [u64; 3],
    last_value: [u32; 3],
    fit: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoreStats {
    pub record_count: u64,
    pub tree_count: u64,
    pub feature_count: usize,
    /// Empty-tree filter length of every feature, in bits.
    pub filter_bits: u64,
    /// Bytes of the root, middle and leaf files.
    pub level_bytes: [u64; 3],
    pub record_log_bytes: u64,
    pub manifest_bytes: u64,
    pub commits: usize,
    pub last_commit: Option<(CommitKind, u64)>,
    /// Records not yet covered by a commit.
    pub pending_records: u64,
}

pub struct Store {
    dir: PathBuf,
    settings: Settings,
    options: StoreOptions,
    index: KeywordIndex,
    levels: [File; 3],
    level_len: [u64; 3],
    log: File,
    log_len: u64,
    manifest: File,
    manifest_len: u64,
    durable: Vec<Durable>,
    durable_mapping: usize,
    durable_records: u64,
    record_offsets: Vec<u64>,
    pending_log: Vec<u8>,
    staged: Vec<(String, Dimension, Matcher)>,
    fault: Option<FaultPoint>,
    poisoned: bool,
    commits: usize,
    last_commit: Option<(CommitKind, u64)>,
    _lock: File,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store")
            .field("dir", &self.dir)
            .field("record_count", &self.index.record_count())
            .field("commits", &self.commits)
            .finish_non_exhaustive()
    }
}

fn open_rw(path: &Path) -> StoreResult<File> {
    OpenOptions::new()
        .read(true)
        .write(true)
        .create(true)
        .truncate(false)
        .open(path)
        .map_err(StoreError::io(path))
}

impl Store {
    /// Opens or creates the store in `dir`, recovering the last committed state.
    pub fn open(
        dir: impl AsRef<Path>,
        overrides: &Overrides,
        options: StoreOptions,
    ) -> StoreResult<Store> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).map_err(StoreError::io(&dir))?;
        let lock = open_rw(&dir.join(LOCK_FILE))?;
        lock.try_lock()
            .map_err(|_| StoreError::Locked(dir.clone()))?;

        let config_path = dir.join(CONFIG_FILE);
        let settings = if config_path.exists() {
            let text =
                std::fs::read_to_string(&config_path).map_err(StoreError::io(&config_path))?;
            Settings::parse(&text)?.reconcile(overrides)?
        } else {
            let settings = Settings::default().apply(overrides)?;
            std::fs::write(&config_path, settings.render())
                .map_err(StoreError::io(&config_path))?;
            settings
        };

        let manifest_path = dir.join(MANIFEST_FILE);
        let fresh = !manifest_path.exists();
        let mut manifest = open_rw(&manifest_path)?;
        if fresh {
            manifest
                .write_all(&manifest::header())
                .map_err(StoreError::io(&manifest_path))?;
        }
        let levels = LEVEL_FILES.map(|name| open_rw(&dir.join(name)));
        let [root, middle, leaf] = levels;
        let levels = [root?, middle?, leaf?];
        let log = open_rw(&dir.join(RECORD_FILE))?;

        let mut store = Store {
            index: KeywordIndex::new(settings.forest),
            dir,
            settings,
            options,
            levels,
            level_len: [0; 3],
            log,
            log_len: 0,
            manifest,
            manifest_len: manifest::HEADER_LEN,
            durable: Vec::new(),
            durable_mapping: 0,
            durable_records: 0,
            record_offsets: Vec::new(),
            pending_log: Vec::new(),
            staged: Vec::new(),
            fault: None,
            poisoned: false,
            commits: 0,
            last_commit: None,
            _lock: lock,
        };
        store.recover()?;
        Ok(store)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn recover(&mut self) -> StoreResult<()> {
        let manifest_path = self.path(MANIFEST_FILE);
        let mut bytes = Vec::new();
        self.manifest
            .seek(SeekFrom::Start(0))
            .map_err(StoreError::io(&manifest_path))?;
        self.manifest
            .read_to_end(&mut bytes)
            .map_err(StoreError::io(&manifest_path))?;
        let parsed = manifest::parse(&bytes)?;
        if parsed.discarded > 0 {
            self.manifest
                .set_len(parsed.valid_len)
                .map_err(StoreError::io(&manifest_path))?;
        }
        self.manifest_len = parsed.valid_len;
        let commits = parsed.commits;
        let last = commits.last().map(|c| c.extents).unwrap_or_default();

        // committed lengths: shorter files are corrupt, longer ones carry a torn tail
        let mut words: Vec<Vec<u32>> = Vec::with_capacity(3);
        for (i, name) in LEVEL_FILES.iter().enumerate() {
            let bytes = read_committed(&mut self.levels[i], &self.dir.join(name), last[i].length)?;
            if bytes.len() % 4 != 0 {
                return Err(StoreError::Integrity(format!(
                    "{name}: committed length is not whole words"
                )));
            }
            words.push(
                bytes
                    .chunks_exact(4)
                    .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            );
            self.level_len[i] = last[i].length;
        }
        let log_path = self.path(RECORD_FILE);
        let log_bytes = read_committed(&mut self.log, &log_path, last[RECORD_LOG].length)?;
        self.log_len = last[RECORD_LOG].length;

        self.replay_overwrites(&commits, &mut words)?;
        verify_extents(&commits, &words, &log_bytes)?;
        self.rebuild(&commits, &words)?;

        self.record_offsets = line_offsets(&log_bytes);
        if self.record_offsets.len() as u64 != self.index.record_count() {
            return Err(StoreError::Integrity(format!(
                "record log holds {} records, manifest commits {}",
                self.record_offsets.len(),
                self.index.record_count()
            )));
        }
        self.durable_records = self.index.record_count();
        self.commits = commits.len();
        self.last_commit = commits.last().map(|c| (c.kind, c.record_count));
        Ok(())
    }

    /// Applies committed in-place merges that a crash may have cut off.
    fn replay_overwrites(&mut self, commits: &[Commit], words: &mut [Vec<u32>]) -> StoreResult<()> {
        let mut last: HashMap<(Level, u64), Overwrite> = HashMap::new();
        for o in commits.iter().flat_map(|c| &c.overwrites) {
            last.insert((o.level, o.position), *o);
        }
        for ((level, pos), o) in last {
            let word = words[level as usize].get_mut(pos as usize).ok_or_else(|| {
                StoreError::Integrity(format!("{level} overwrite at word {pos} past the file end"))
            })?;
            if *word == o.new {
                continue;
            }
            if *word != o.old {
                return Err(StoreError::Integrity(format!(
                    "{level} word {pos} is {:#010x}, expected {:#010x} or {:#010x}",
                    *word, o.old, o.new
                )));
            }
            *word = o.new;
            write_word(
                &mut self.levels[level as usize],
                &self.dir.join(LEVEL_FILES[level as usize]),
                pos,
                o.new,
            )?;
        }
        Ok(())
    }

    fn rebuild(&mut self, commits: &[Commit], words: &[Vec<u32>]) -> StoreResult<()> {
        let mut mapping = MappingTable::new();
        for spec in commits.iter().flat_map(|c| &c.mapping) {
            mapping
                .restore(spec.clone())
                .map_err(|e| StoreError::Integrity(format!("mapping table: {e}")))?;
        }
        let n = mapping.len();
        let mut parts: Vec<Option<ColumnParts>> = vec![Some(ColumnParts::default()); n];
        let mut durable = vec![Durable::default(); n];
        let unknown = |f: FeatureId| {
            StoreError::Integrity(format!("commit references unregistered feature {f}"))
        };
        for run in commits.iter().flat_map(|c| &c.runs) {
            let li = run.level as usize;
            let part = parts
                .get_mut(run.feature.index())
                .and_then(Option::as_mut)
                .ok_or_else(|| unknown(run.feature))?;
            let end = run.start + run.count as u64;
            let slice = words[li]
                .get(run.start as usize..end as usize)
                .ok_or_else(|| {
                    StoreError::Integrity(format!("{} run past the committed file end", run.level))
                })?;
            let list = match run.level {
                Level::Root => &mut part.roots,
                Level::Middle => &mut part.middles,
                Level::Leaf => &mut part.leaves,
            };
            list.extend(slice.iter().map(|&w| Mask(w)));
            let d = &mut durable[run.feature.index()];
            d.counts[li] += run.count;
            d.last_position[li] = end - 1;
            d.last_value[li] = words[li][end as usize - 1];
        }
        for f in commits.iter().flat_map(|c| &c.fit) {
            let part = parts
                .get_mut(f.feature.index())
                .and_then(Option::as_mut)
                .ok_or_else(|| unknown(f.feature))?;
            part.fit.push((
                f.tree,
                FitEntry {
                    middle_start: f.middle_start,
                    leaf_start: f.leaf_start,
                },
            ));
            durable[f.feature.index()].fit += 1;
        }
        let record_count = commits.last().map_or(0, |c| c.record_count);
        let forest = CompressedForest::from_parts(self.settings.forest, record_count, parts)?;
        self.index = KeywordIndex::from_parts(mapping, forest)?;
        self.index.forest_mut().take_touched();
        self.durable = durable;
        self.durable_mapping = n;
        Ok(())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    pub fn index(&self) -> &KeywordIndex {
        &self.index
    }

    pub fn record_count(&self) -> u64 {
        self.index.record_count()
    }

    /// Arms a simulated crash at `point` for the next flush.
    pub fn inject_fault(&mut self, point: FaultPoint) {
        self.fault = Some(point);
    }

    fn check_usable(&self) -> StoreResult<()> {
        if self.poisoned {
            Err(StoreError::Poisoned)
        } else {
            Ok(())
        }
    }

    /// Appends one record; flushes automatically when it completes a tree.
    pub fn insert(&mut self, record: &TransactionRecord) -> StoreResult<Option<CommitInfo>> {
        self.check_usable()?;
        let completed = self.index.insert_record(record)?;
        self.record_offsets
            .push(self.log_len + self.pending_log.len() as u64);
        serde_json::to_writer(&mut self.pending_log, record).expect("records serialize");
        self.pending_log.push(b'\n');
        match completed {
            Some(_) if self.options.auto_persist => self.flush(CommitKind::Auto),
            _ => Ok(None),
        }
    }

    /// Flushes everything not yet durable; the last masks may be partial.
    pub fn persist(&mut self) -> StoreResult<Option<CommitInfo>> {
        self.flush(CommitKind::Manual)
    }

    /// Registers a keyword feature and makes it durable.
    pub fn add_keyword(
        &mut self,
        name: Option<String>,
        dimension: Dimension,
        value: Value,
    ) -> StoreResult<FeatureId> {
        self.check_usable()?;
        let id = if dimension == Dimension::Value {
            let name = name.unwrap_or_else(|| {
                bitforest_core::FeatureSpec::keyword_name(dimension, value.as_ref())
            });
            self.build_conditions(vec![(name, dimension, Matcher::Keyword(value))])?[0]
        } else {
            self.index.add_keyword(name, dimension, value)?
        };
        self.flush(CommitKind::Registration)?;
        Ok(id)
    }

    /// Queues a condition feature. Queued conditions are built together in
    /// one history scan once the queue reaches the batch threshold; returns
    /// the ids built by this call, if any.
    pub fn stage_condition(
        &mut self,
        name: String,
        dimension: Dimension,
        matcher: Matcher,
    ) -> StoreResult<Vec<FeatureId>> {
        self.check_usable()?;
        bitforest_core::FeatureSpec::check_schema(dimension, &matcher)?;
        if self.index.mapping().by_name(&name).is_some()
            || self.staged.iter().any(|(n, _, _)| *n == name)
        {
            return Err(bitforest_core::Error::Registration(name).into());
        }
        self.staged.push((name, dimension, matcher));
        if self.staged.len() >= self.settings.forest.create_batch_threshold() {
            self.finish_conditions()
        } else {
            Ok(Vec::new())
        }
    }

    /// Builds every queued condition now, whatever the queue length.
    pub fn finish_conditions(&mut self) -> StoreResult<Vec<FeatureId>> {
        if self.staged.is_empty() {
            return Ok(Vec::new());
        }
        let staged = std::mem::take(&mut self.staged);
        let ids = self.build_conditions(staged)?;
        self.flush(CommitKind::Registration)?;
        Ok(ids)
    }

    /// Registers and builds one condition immediately.
    pub fn add_condition(
        &mut self,
        name: String,
        dimension: Dimension,
        matcher: Matcher,
    ) -> StoreResult<FeatureId> {
        self.stage_condition(name, dimension, matcher)?;
        let ids = self.finish_conditions()?;
        Ok(*ids.last().expect("a staged condition was built"))
    }

    pub fn staged_conditions(&self) -> usize {
        self.staged.len()
    }

    fn build_conditions(
        &mut self,
        specs: Vec<(String, Dimension, Matcher)>,
    ) -> StoreResult<Vec<FeatureId>> {
        let history = self.all_records()?;
        Ok(self.index.add_conditions(&specs, Some(&history))?)
    }

    fn record_range(&self, i: usize) -> (u64, u64) {
        let start = self.record_offsets[i];
        let end = self
            .record_offsets
            .get(i + 1)
            .copied()
            .unwrap_or(self.log_len + self.pending_log.len() as u64);
        (start, end)
    }

    /// Records at the given ledger indices.
    pub fn records(&mut self, indices: &[u64]) -> StoreResult<Vec<TransactionRecord>> {
        let path = self.path(RECORD_FILE);
        let mut out = Vec::with_capacity(indices.len());
        let mut buf = Vec::new();
        for &i in indices {
            if i >= self.record_offsets.len() as u64 {
                return Err(
                    bitforest_core::Error::Parameter(format!("record {i} does not exist")).into(),
                );
            }
            let (start, end) = self.record_range(i as usize);
            let line: &[u8] = if start >= self.log_len {
                &self.pending_log[(start - self.log_len) as usize..(end - self.log_len) as usize]
            } else {
                buf.resize((end - start) as usize, 0);
                self.log
                    .seek(SeekFrom::Start(start))
                    .map_err(StoreError::io(&path))?;
                self.log
                    .read_exact(&mut buf)
                    .map_err(StoreError::io(&path))?;
                &buf
            };
            out.push(parse_logged(line, i)?);
        }
        Ok(out)
    }

    /// Every record in ledger order.
    pub fn all_records(&mut self) -> StoreResult<Vec<TransactionRecord>> {
        let path = self.path(RECORD_FILE);
        let mut bytes = vec![0; self.log_len as usize];
        self.log
            .seek(SeekFrom::Start(0))
            .map_err(StoreError::io(&path))?;
        self.log
            .read_exact(&mut bytes)
            .map_err(StoreError::io(&path))?;
        bytes.extend_from_slice(&self.pending_log);
        bytes
            .split(|&b| b == b'\n')
            .filter(|l| !l.is_empty())
            .enumerate()
            .map(|(i, line)| parse_logged(line, i as u64))
            .collect()
    }

    fn flush(&mut self, kind: CommitKind) -> StoreResult<Option<CommitInfo>> {
        self.check_usable()?;
        let result = self.write_commit(kind);
        if result.is_err() {
            self.poisoned = true;
        }
        result
    }

    fn write_commit(&mut self, kind: CommitKind) -> StoreResult<Option<CommitInfo>> {
        let touched = self.index.forest_mut().take_touched();
        let mapping = self.index.mapping().specs()[self.durable_mapping..].to_vec();
        let record_count = self.index.record_count();
        if touched.is_empty() && mapping.is_empty() && record_count == self.durable_records {
            return Ok(None);
        }
        if self.durable.len() < self.index.mapping().len() {
            self.durable
                .resize(self.index.mapping().len(), Durable::default());
        }

        // plan pages, runs and merges without touching any file
        let forest = self.index.forest();
        let mut pages: [Vec<u8>; 3] = Default::default();
        let mut runs = Vec::new();
        let mut overwrites = Vec::new();
        let mut fit = Vec::new();
        let mut next = self.durable.clone();
        for level in Level::ALL {
            let li = level as usize;
            let base = self.level_len[li] / 4;
            for &f in &touched {
                let masks = forest.column(f)?.masks(level);
                let d = &mut next[f.index()];
                let done = d.counts[li] as usize;
                if done > 0 && masks[done - 1].0 != d.last_value[li] {
                    let new = masks[done - 1].0;
                    if new & d.last_value[li] != d.last_value[li] {
                        return Err(StoreError::Integrity(format!(
                            "feature {f}: {level} mask lost bits since its flush"
                        )));
                    }
                    overwrites.push(Overwrite {
                        level,
                        position: d.last_position[li],
                        old: d.last_value[li],
                        new,
                    });
                    d.last_value[li] = new;
                }
                if masks.len() > done {
                    let start = base + (pages[li].len() / 4) as u64;
                    for m in &masks[done..] {
                        pages[li].extend_from_slice(&m.0.to_le_bytes());
                    }
                    let count = (masks.len() - done) as u32;
                    runs.push(Run {
                        feature: f,
                        level,
                        start,
                        count,
                    });
                    d.counts[li] = masks.len() as u32;
                    d.last_position[li] = start + count as u64 - 1;
                    d.last_value[li] = masks[masks.len() - 1].0;
                }
            }
        }
        for &f in &touched {
            let column = forest.column(f)?;
            let d = &mut next[f.index()];
            let entries = column.fit();
            for (tree, e) in column.filter().iter().zip(entries).skip(d.fit as usize) {
                fit.push(FitDelta {
                    feature: f,
                    tree,
                    middle_start: e.middle_start,
                    leaf_start: e.leaf_start,
                });
            }
            d.fit = entries.len() as u32;
        }

        let mut extents = [Extent::default(); 4];
        for li in 0..3 {
            extents[li] = Extent {
                length: self.level_len[li] + pages[li].len() as u64,
                appended_crc: crc32fast::hash(&pages[li]),
            };
        }
        extents[RECORD_LOG] = Extent {
            length: self.log_len + self.pending_log.len() as u64,
            appended_crc: crc32fast::hash(&self.pending_log),
        };
        let commit = Commit {
            kind,
            record_count,
            extents,
            mapping,
            runs,
            fit,
            overwrites,
        };

        // record log, then pages level by level, then the commit
        let log_path = self.path(RECORD_FILE);
        write_at(&mut self.log, &log_path, self.log_len, &self.pending_log)?;
        self.sync(&log_path, Sync::Log)?;
        self.trip(FaultPoint::AfterRecordLog)?;
        for li in 0..3 {
            let path = self.path(LEVEL_FILES[li]);
            let page = &pages[li];
            if li == 2 && self.fault == Some(FaultPoint::MidLeafPages) {
                write_at(
                    &mut self.levels[li],
                    &path,
                    self.level_len[li],
                    &page[..page.len() / 2],
                )?;
                self.trip(FaultPoint::MidLeafPages)?;
            }
            write_at(&mut self.levels[li], &path, self.level_len[li], page)?;
            self.sync(&path, Sync::Level(li))?;
            if li == 0 {
                self.trip(FaultPoint::AfterRootPages)?;
            }
        }
        self.trip(FaultPoint::BeforeCommit)?;
        let encoded = commit.encode();
        let manifest_path = self.path(MANIFEST_FILE);
        if self.fault == Some(FaultPoint::TornCommit) {
            write_at(
                &mut self.manifest,
                &manifest_path,
                self.manifest_len,
                &encoded[..encoded.len() / 2],
            )?;
            self.trip(FaultPoint::TornCommit)?;
        }
        write_at(
            &mut self.manifest,
            &manifest_path,
            self.manifest_len,
            &encoded,
        )?;
        self.sync(&manifest_path, Sync::Manifest)?;
        self.trip(FaultPoint::AfterCommitBeforeOverwrite)?;
        for o in &commit.overwrites {
            let li = o.level as usize;
            write_word(
                &mut self.levels[li],
                &self.dir.join(LEVEL_FILES[li]),
                o.position,
                o.new,
            )?;
        }
        if !commit.overwrites.is_empty() {
            for (li, name) in LEVEL_FILES.iter().enumerate() {
                self.sync(&self.path(name), Sync::Level(li))?;
            }
        }

        let info = CommitInfo {
            kind,
            record_count,
            appended_words: [0, 1, 2].map(|li| pages[li].len() as u64 / 4),
            overwrites: commit.overwrites.len(),
            features: touched.len(),
        };
        self.durable = next;
        self.durable_mapping += commit.mapping.len();
        self.durable_records = record_count;
        self.level_len = [0, 1, 2].map(|li| extents[li].length);
        self.log_len = extents[RECORD_LOG].length;
        self.pending_log.clear();
        self.manifest_len += encoded.len() as u64;
        self.commits += 1;
        self.last_commit = Some((kind, record_count));
        Ok(Some(info))
    }

    fn trip(&mut self, point: FaultPoint) -> StoreResult<()> {
        if self.fault == Some(point) {
            self.fault = None;
            return Err(StoreError::Injected(point));
        }
        Ok(())
    }

    fn sync(&self, path: &Path, which: Sync) -> StoreResult<()> {
        if !self.options.fsync {
            return Ok(());
        }
        let file = match which {
            Sync::Level(li) => &self.levels[li],
            Sync::Log => &self.log,
            Sync::Manifest => &self.manifest,
        };
        file.sync_data().map_err(StoreError::io(path))
    }

    pub fn stats(&self) -> StoreStats {
        let forest = self.index.forest();
        StoreStats {
            record_count: forest.record_count(),
            tree_count: forest.tree_count(),
            feature_count: self.index.mapping().len(),
            filter_bits: forest.tree_count(),
            level_bytes: self.level_len,
            record_log_bytes: self.log_len,
            manifest_bytes: self.manifest_len,
            commits: self.commits,
            last_commit: self.last_commit,
            pending_records: forest.record_count() - self.durable_records,
        }
    }

    /// Committed words of one level file, read back from disk.
    pub fn level_words(&mut self, level: Level) -> StoreResult<Vec<u32>> {
        let li = level as usize;
        let bytes = read_committed(
            &mut self.levels[li],
            &self.dir.join(LEVEL_FILES[li]),
            self.level_len[li],
        )?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

enum Sync {
    Level(usize),
    Log,
    Manifest,
}

fn parse_logged(line: &[u8], i: u64) -> StoreResult<TransactionRecord> {
    let line = line.strip_suffix(b"\n").unwrap_or(line);
    serde_json::from_slice(line)
        .map_err(|e| StoreError::Integrity(format!("record log entry {i}: {e}")))
}

/// Start offset of every newline-terminated line.
fn line_offsets(bytes: &[u8]) -> Vec<u64> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'\n' {
            out.push(start as u64);
            start = i + 1;
        }
    }
    out
}

/// Reads the committed prefix of `file`, dropping any uncommitted tail.
fn read_committed(file: &mut File, path: &Path, committed: u64) -> StoreResult<Vec<u8>> {
    let actual = file.metadata().map_err(StoreError::io(path))?.len();
    if actual < committed {
        return Err(StoreError::Integrity(format!(
            "{} holds {actual} bytes, {committed} are committed",
            path.display()
        )));
    }
    if actual > committed {
        file.set_len(committed).map_err(StoreError::io(path))?;
    }
    let mut bytes = vec![0; committed as usize];
    file.seek(SeekFrom::Start(0))
        .map_err(StoreError::io(path))?;
    file.read_exact(&mut bytes).map_err(StoreError::io(path))?;
    Ok(bytes)
}

fn write_at(file: &mut File, path: &Path, offset: u64, bytes: &[u8]) -> StoreResult<()> {
    if bytes.is_empty() {
        return Ok(());
    }
    file.seek(SeekFrom::Start(offset))
        .map_err(StoreError::io(path))?;
    file.write_all(bytes).map_err(StoreError::io(path))
}

fn write_word(file: &mut File, path: &Path, position: u64, word: u32) -> StoreResult<()> {
    write_at(file, path, position * 4, &word.to_le_bytes())
}

/// Checks every commit's appended-range checksum. Words later merged in
/// place are compared at the value they had when their commit was written.
fn verify_extents(commits: &[Commit], words: &[Vec<u32>], log: &[u8]) -> StoreResult<()> {
    let mut as_written: HashMap<(Level, u64), u32> = HashMap::new();
    for (i, c) in commits.iter().enumerate().rev() {
        let prev = if i == 0 {
            [Extent::default(); 4]
        } else {
            commits[i - 1].extents
        };
        for level in Level::ALL {
            let li = level as usize;
            let (from, to) = (prev[li].length / 4, c.extents[li].length / 4);
            if to < from {
                return Err(StoreError::Integrity(format!(
                    "commit {i}: {level} file shrank"
                )));
            }
            let mut h = crc32fast::Hasher::new();
            for pos in from..to {
                let w = as_written
                    .get(&(level, pos))
                    .copied()
                    .unwrap_or(words[li][pos as usize]);
                h.update(&w.to_le_bytes());
            }
            if h.finalize() != c.extents[li].appended_crc {
                return Err(StoreError::Integrity(format!(
                    "commit {i}: {level} pages fail their checksum"
                )));
            }
        }
        let (from, to) = (
            prev[RECORD_LOG].length as usize,
            c.extents[RECORD_LOG].length as usize,
        );
        if to < from || crc32fast::hash(&log[from..to]) != c.extents[RECORD_LOG].appended_crc {
            return Err(StoreError::Integrity(format!(
                "commit {i}: record log fails its checksum"
            )));
        }
        for o in &c.overwrites {
            as_written.insert((o.level, o.position), o.old);
        }
    }
    Ok(())
}
