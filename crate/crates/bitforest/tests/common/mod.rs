#![allow(dead_code)]

use std::path::Path;

use bitforest::bitforest_core::sim::DatasetSpec;
use bitforest::bitforest_core::{
    Dimension, FeatureId, ForestConfig, KeywordIndex, TransactionRecord,
};
use bitforest::{Overrides, Store, StoreOptions};

pub const FAST: StoreOptions = StoreOptions {
    fsync: false,
    auto_persist: true,
};

pub fn ledger(n: u64, seed: u64) -> Vec<TransactionRecord> {
    DatasetSpec::reference(n, seed)
        .with_planted(Dimension::From, "0xkp", 0.05)
        .collect()
        .unwrap()
}

pub fn open(dir: &Path) -> Store {
    Store::open(dir, &Overrides::default(), FAST).unwrap()
}

/// In-memory engine over `records`, registered in the same order a store would.
pub fn in_memory(config: ForestConfig, records: &[TransactionRecord]) -> KeywordIndex {
    let mut index = KeywordIndex::new(config);
    for r in records {
        index.insert_record(r).unwrap();
    }
    index
}

/// A fixed query suite: every feature alone plus a few conjunctions.
pub fn suite(index: &KeywordIndex) -> Vec<Vec<FeatureId>> {
    let ids: Vec<FeatureId> = index.mapping().specs().iter().map(|s| s.id).collect();
    let mut queries: Vec<Vec<FeatureId>> = ids.iter().map(|&f| vec![f]).collect();
    for w in ids.windows(3).step_by(7) {
        queries.push(vec![w[0], w[2]]);
        queries.push(w.to_vec());
    }
    queries
}

/// Serialized answers of the suite, for byte-level comparison.
pub fn answers(index: &KeywordIndex, queries: &[Vec<FeatureId>]) -> Vec<u8> {
    let mut out = Vec::new();
    for q in queries {
        let (result, token) = index.query(q).unwrap();
        out.extend_from_slice(&(result.indices.len() as u64).to_le_bytes());
        for i in result.indices {
            out.extend_from_slice(&i.to_le_bytes());
        }
        out.extend_from_slice(&token.to_bits().to_le_bytes());
    }
    out
}

/// Both engines hold the same features and answer every suite query alike.
pub fn assert_equivalent(actual: &KeywordIndex, expected: &KeywordIndex) {
    assert_eq!(actual.record_count(), expected.record_count());
    assert_eq!(actual.mapping().specs(), expected.mapping().specs());
    let queries = suite(expected);
    assert!(
        answers(actual, &queries) == answers(expected, &queries),
        "query answers differ"
    );
}
