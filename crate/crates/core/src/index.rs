//! A compressed forest paired with its mapping table: the record-level API.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::compressed::{CompressedForest, QueryResult};
use crate::config::ForestConfig;
use crate::error::{Error, Result};
use crate::feature::{FeatureId, FeatureSpec, MappingTable, Matcher};
use crate::record::{Dimension, TransactionRecord, Value};
use crate::token::{FeatureSetId, Token};

/// Keyword and condition index over an append-only record sequence.
#[derive(Clone, Debug)]
pub struct KeywordIndex {
    mapping: MappingTable,
    forest: CompressedForest,
    scratch: Vec<FeatureId>,
}

impl KeywordIndex {
    pub fn new(config: ForestConfig) -> Self {
        KeywordIndex {
            mapping: MappingTable::new(),
            forest: CompressedForest::new(config),
            scratch: Vec::new(),
        }
    }

    /// Index over an empty ledger with every feature of `mapping` pre-registered.
    pub fn with_mapping(config: ForestConfig, mapping: MappingTable) -> Self {
        let mut forest = CompressedForest::new(config);
        for spec in mapping.specs() {
            forest.add_empty_feature(spec.id).expect("fresh forest");
        }
        KeywordIndex {
            mapping,
            forest,
            scratch: Vec::new(),
        }
    }

    /// Reassembles an index from restored parts.
    pub fn from_parts(mapping: MappingTable, forest: CompressedForest) -> Result<Self> {
        if let Some((id, _)) = forest.columns().find(|(id, _)| mapping.get(*id).is_none()) {
            return Err(Error::Integrity(format!(
                "indexed feature {id} has no mapping entry"
            )));
        }
        Ok(KeywordIndex {
            mapping,
            forest,
            scratch: Vec::new(),
        })
    }

    pub fn mapping(&self) -> &MappingTable {
        &self.mapping
    }

    pub fn forest(&self) -> &CompressedForest {
        &self.forest
    }

    pub fn forest_mut(&mut self) -> &mut CompressedForest {
        &mut self.forest
    }

    pub fn config(&self) -> &ForestConfig {
        self.forest.config()
    }

    pub fn record_count(&self) -> u64 {
        self.forest.record_count()
    }

    /// Indexes one record: every non-value dimension as a keyword (registered
    /// on first sight) plus every matching condition. Returns the tree the
    /// record completed, if any.
    pub fn insert_record(&mut self, record: &TransactionRecord) -> Result<Option<u64>> {
        record.validate()?;
        let mut matched = core::mem::take(&mut self.scratch);
        self.mapping.match_record(record, &mut matched)?;
        let completed = self.forest.insert(&matched);
        self.scratch = matched;
        Ok(completed)
    }

    /// Feature ids matched by the most recently inserted record.
    pub fn last_matches(&self) -> &[FeatureId] {
        &self.scratch
    }

    /// Registers a keyword feature. Keywords are matched automatically as
    /// records arrive, so a keyword not yet registered matches no prior
    /// record and nothing is scanned.
    pub fn add_keyword(
        &mut self,
        name: Option<String>,
        dimension: Dimension,
        value: Value,
    ) -> Result<FeatureId> {
        let name = name.unwrap_or_else(|| FeatureSpec::keyword_name(dimension, value.as_ref()));
        let matcher = Matcher::Keyword(value);
        if dimension == Dimension::Value {
            // value keywords are evaluated per record like conditions
            return self
                .add_conditions(&[(name, dimension, matcher)], None)
                .map(|ids| ids[0]);
        }
        let id = self.mapping.register(name, dimension, matcher)?;
        self.forest.add_empty_feature(id)?;
        Ok(id)
    }

    /// Registers condition features and builds them over `history` in one
    /// scan. `history` must hold every record indexed so far; it may be
    /// `None` only while the ledger is empty.
    pub fn add_conditions(
        &mut self,
        conditions: &[(String, Dimension, Matcher)],
        history: Option<&[TransactionRecord]>,
    ) -> Result<Vec<FeatureId>> {
        let history = match history {
            Some(h) => h,
            None if self.record_count() == 0 => &[],
            None => {
                return Err(Error::State(
                    "condition creation needs the record history".into(),
                ))
            }
        };
        if history.len() as u64 != self.record_count() {
            return Err(Error::Parameter(format!(
                "history has {} records, index holds {}",
                history.len(),
                self.record_count()
            )));
        }
        let mut staged = self.mapping.clone();
        let mut specs = Vec::with_capacity(conditions.len());
        for (name, dimension, matcher) in conditions {
            let id = staged.register(name.clone(), *dimension, matcher.clone())?;
            specs.push(staged.spec(id)?.clone());
        }
        self.forest.create_features(&specs, history)?;
        self.mapping = staged;
        Ok(specs.iter().map(|s| s.id).collect())
    }

    /// Fresh query over the whole ledger.
    pub fn query(&self, features: &[FeatureId]) -> Result<(QueryResult, Token)> {
        self.query_from(features, 0)
    }

    /// Records appended since `token` was issued. Fails closed when the token
    /// belongs to another feature set or points past the ledger end.
    pub fn resume(&self, token: Token, features: &[FeatureId]) -> Result<(QueryResult, Token)> {
        token.check(features)?;
        if token.cursor() > self.record_count() {
            return Err(Error::Token(format!(
                "cursor {} is past the ledger end {}",
                token.cursor(),
                self.record_count()
            )));
        }
        self.query_from(features, token.cursor())
    }

    fn query_from(&self, features: &[FeatureId], from: u64) -> Result<(QueryResult, Token)> {
        let set = FeatureSetId::of(features)?;
        let result = self.forest.query(features, from)?;
        let token = Token::new(set, result.cursor)?;
        Ok((result, token))
    }

    /// Resolves comma-free feature references (id, name, or `dimension=value`).
    pub fn resolve(&self, references: &[&str]) -> Result<Vec<FeatureId>> {
        references.iter().map(|r| self.mapping.resolve(r)).collect()
    }
}
