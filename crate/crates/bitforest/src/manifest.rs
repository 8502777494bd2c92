//! Commit records of the manifest file.
//!
//! The manifest starts with an 8-byte magic and a version word. Each commit
//! record follows as `magic, payload length, payload, CRC-32(payload)`, all
//! little-endian. Payloads are deltas: only what changed since the previous
//! commit is recorded, so a commit's size depends on the records it adds and
//! not on the size of the ledger.

use bitforest_core::{FeatureId, FeatureSpec, Level};

use crate::error::{StoreError, StoreResult};

pub const FILE_MAGIC: &[u8; 8] = b"BFMANIF\0";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 12;
const RECORD_MAGIC: u32 = 0x5243_4642; // "BFCR"
const FRAME_OVERHEAD: usize = 12;

/// Why a commit was written.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommitKind {
    /// A tree filled up.
    Auto,
    /// Requested by the caller; the last masks may be partial.
    Manual,
    /// Feature registration only.
    Registration,
}

impl CommitKind {
    fn tag(self) -> u8 {
        match self {
            CommitKind::Auto => 0,
            CommitKind::Manual => 1,
            CommitKind::Registration => 2,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => CommitKind::Auto,
            1 => CommitKind::Manual,
            2 => CommitKind::Registration,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            CommitKind::Auto => "auto",
            CommitKind::Manual => "manual",
            CommitKind::Registration => "registration",
        }
    }
}

/// New contiguous masks of one feature at one level.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Run {
    pub feature: FeatureId,
    pub level: Level,
    /// First word index in the level file.
    pub start: u64,
    pub count: u32,
}

/// First-node entry of a tree newly containing a feature.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FitDelta {
    pub feature: FeatureId,
    pub tree: u64,
    pub middle_start: u32,
    pub leaf_start: u32,
}

/// In-place OR-merge of a previously flushed partial mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Overwrite {
    pub level: Level,
    pub position: u64,
    pub old: u32,
    pub new: u32,
}

/// Committed length and CRC-32 of the newly appended byte range of one file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Extent {
    pub length: u64,
    pub appended_crc: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Commit {
    pub kind: CommitKind,
    pub record_count: u64,
    /// Root, middle, leaf files (lengths in bytes), then the record log.
    pub extents: [Extent; 4],
    pub mapping: Vec<FeatureSpec>,
    pub runs: Vec<Run>,
    pub fit: Vec<FitDelta>,
    pub overwrites: Vec<Overwrite>,
}

pub const RECORD_LOG: usize = 3;

impl Commit {
    pub fn encode(&self) -> Vec<u8> {
        let mut p = Vec::new();
        p.push(self.kind.tag());
        put_u64(&mut p, self.record_count);
        for e in &self.extents {
            put_u64(&mut p, e.length);
            put_u32(&mut p, e.appended_crc);
        }
        put_u32(&mut p, self.mapping.len() as u32);
        for spec in &self.mapping {
            let json = serde_json::to_vec(spec).expect("feature specs serialize");
            put_u32(&mut p, json.len() as u32);
            p.extend_from_slice(&json);
        }
        put_u32(&mut p, self.runs.len() as u32);
        for r in &self.runs {
            put_u32(&mut p, r.feature.0);
            p.push(r.level as u8);
            put_u64(&mut p, r.start);
            put_u32(&mut p, r.count);
        }
        put_u32(&mut p, self.fit.len() as u32);
        for f in &self.fit {
            put_u32(&mut p, f.feature.0);
            put_u64(&mut p, f.tree);
            put_u32(&mut p, f.middle_start);
            put_u32(&mut p, f.leaf_start);
        }
        put_u32(&mut p, self.overwrites.len() as u32);
        for o in &self.overwrites {
            p.push(o.level as u8);
            put_u64(&mut p, o.position);
            put_u32(&mut p, o.old);
            put_u32(&mut p, o.new);
        }
        let mut framed = Vec::with_capacity(p.len() + FRAME_OVERHEAD);
        put_u32(&mut framed, RECORD_MAGIC);
        put_u32(&mut framed, p.len() as u32);
        framed.extend_from_slice(&p);
        put_u32(&mut framed, crc32fast::hash(&p));
        framed
    }

    fn decode_payload(p: &[u8]) -> StoreResult<Commit> {
        let mut r = Reader { buf: p, at: 0 };
        let kind = CommitKind::from_tag(r.u8()?).ok_or_else(|| corrupt("unknown commit kind"))?;
        let record_count = r.u64()?;
        let mut extents = [Extent::default(); 4];
        for e in &mut extents {
            *e = Extent {
                length: r.u64()?,
                appended_crc: r.u32()?,
            };
        }
        let mut mapping = Vec::new();
        for _ in 0..r.u32()? {
            let len = r.u32()? as usize;
            let spec = serde_json::from_slice(r.bytes(len)?)
                .map_err(|e| corrupt(&format!("mapping entry: {e}")))?;
            mapping.push(spec);
        }
        let mut runs = Vec::new();
        for _ in 0..r.u32()? {
            runs.push(Run {
                feature: FeatureId(r.u32()?),
                level: r.level()?,
                start: r.u64()?,
                count: r.u32()?,
            });
        }
        let mut fit = Vec::new();
        for _ in 0..r.u32()? {
            fit.push(FitDelta {
                feature: FeatureId(r.u32()?),
                tree: r.u64()?,
                middle_start: r.u32()?,
                leaf_start: r.u32()?,
            });
        }
        let mut overwrites = Vec::new();
        for _ in 0..r.u32()? {
            overwrites.push(Overwrite {
                level: r.level()?,
                position: r.u64()?,
                old: r.u32()?,
                new: r.u32()?,
            });
        }
        if r.at != p.len() {
            return Err(corrupt("trailing bytes in commit payload"));
        }
        Ok(Commit {
            kind,
            record_count,
            extents,
            mapping,
            runs,
            fit,
            overwrites,
        })
    }
}

/// Commit records parsed from a manifest, plus where the valid prefix ends.
#[derive(Debug)]
pub struct Parsed {
    pub commits: Vec<Commit>,
    /// Byte length of the header plus every intact record.
    pub valid_len: u64,
    /// Bytes after the valid prefix (a torn or corrupt tail).
    pub discarded: u64,
}

pub fn header() -> Vec<u8> {
    let mut h = FILE_MAGIC.to_vec();
    put_u32(&mut h, VERSION);
    h
}

/// Parses commit records, stopping at the first one that is incomplete or
/// fails its checksum. A bad header is an error.
pub fn parse(bytes: &[u8]) -> StoreResult<Parsed> {
    if bytes.len() < HEADER_LEN as usize || &bytes[..8] != FILE_MAGIC {
        return Err(StoreError::Integrity(
            "manifest header missing or corrupt".into(),
        ));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(StoreError::Integrity(format!(
            "unsupported manifest version {version}"
        )));
    }
    let mut at = HEADER_LEN as usize;
    let mut commits = Vec::new();
    while let Some(commit) = next_record(bytes, at) {
        let (commit, len) = commit;
        commits.push(commit);
        at += len;
    }
    Ok(Parsed {
        commits,
        valid_len: at as u64,
        discarded: (bytes.len() - at) as u64,
    })
}

fn next_record(bytes: &[u8], at: usize) -> Option<(Commit, usize)> {
    let rest = bytes.get(at..)?;
    if rest.len() < FRAME_OVERHEAD {
        return None;
    }
    let magic = u32::from_le_bytes(rest[..4].try_into().ok()?);
    let len = u32::from_le_bytes(rest[4..8].try_into().ok()?) as usize;
    if magic != RECORD_MAGIC || rest.len() < len + FRAME_OVERHEAD {
        return None;
    }
    let payload = &rest[8..8 + len];
    let crc = u32::from_le_bytes(rest[8 + len..12 + len].try_into().ok()?);
    if crc32fast::hash(payload) != crc {
        return None;
    }
    Commit::decode_payload(payload)
        .ok()
        .map(|c| (c, len + FRAME_OVERHEAD))
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn corrupt(what: &str) -> StoreError {
    StoreError::Integrity(format!("manifest: {what}"))
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn bytes(&mut self, n: usize) -> StoreResult<&'a [u8]> {
        let out = self
            .buf
            .get(self.at..self.at + n)
            .ok_or_else(|| corrupt("payload truncated"))?;
        self.at += n;
        Ok(out)
    }

    fn u8(&mut self) -> StoreResult<u8> {
        Ok(self.bytes(1)?[0])
    }

    fn u32(&mut self) -> StoreResult<u32> {
        Ok(u32::from_le_bytes(
            self.bytes(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> StoreResult<u64> {
        Ok(u64::from_le_bytes(
            self.bytes(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn level(&mut self) -> StoreResult<Level> {
        Level::from_tag(self.u8()?).ok_or_else(|| corrupt("unknown level tag"))
    }
}
