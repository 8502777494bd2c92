//! Features and the mapping table that assigns their identifiers.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use hashbrown::HashMap;

use crate::error::{Error, Result};
use crate::record::{Dimension, TransactionRecord, Value, ValueRef};

/// Registered feature identifier. Assigned monotonically, never reused.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct FeatureId(pub u32);

impl FeatureId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The predicate a feature applies to its dimension.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Matcher {
    /// The dimension equals this value.
    Keyword(Value),
    /// The integer dimension lies in `min..=max`; a missing bound is open.
    Range { min: Option<u64>, max: Option<u64> },
}

impl Matcher {
    pub fn is_condition(&self) -> bool {
        matches!(self, Matcher::Range { .. })
    }
}

/// A named predicate over one record dimension.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureSpec {
    pub id: FeatureId,
    pub name: String,
    pub dimension: Dimension,
    pub matcher: Matcher,
}

impl FeatureSpec {
    #[inline]
    pub fn matches(&self, record: &TransactionRecord) -> bool {
        match (&self.matcher, record.get(self.dimension)) {
            (Matcher::Keyword(Value::Int(want)), ValueRef::Int(got)) => *want == got,
            (Matcher::Keyword(Value::Text(want)), ValueRef::Text(got)) => want == got,
            (Matcher::Range { min, max }, ValueRef::Int(v)) => {
                min.is_none_or(|lo| v >= lo) && max.is_none_or(|hi| v <= hi)
            }
            _ => false,
        }
    }

    pub fn is_condition(&self) -> bool {
        self.matcher.is_condition()
    }

    /// Checks the matcher against the dimension's field type.
    pub fn check_schema(dimension: Dimension, matcher: &Matcher) -> Result<()> {
        match matcher {
            Matcher::Keyword(Value::Text(_)) if !dimension.is_text() => Err(Error::Schema(
                format!("dimension {dimension} holds integers, keyword is text"),
            )),
            Matcher::Keyword(Value::Int(_)) if dimension.is_text() => Err(Error::Schema(format!(
                "dimension {dimension} holds text, keyword is an integer"
            ))),
            Matcher::Range { .. } if dimension.is_text() => Err(Error::Schema(format!(
                "range conditions need an integer dimension, {dimension} is text"
            ))),
            Matcher::Range {
                min: Some(lo),
                max: Some(hi),
            } if lo > hi => Err(Error::Schema(format!("empty range {lo}..={hi}"))),
            _ => Ok(()),
        }
    }

    /// Default name of an automatically created keyword feature.
    pub fn keyword_name(dimension: Dimension, value: ValueRef<'_>) -> String {
        format!("{dimension}={value}")
    }
}

#[derive(Clone, Debug)]
enum KeywordMap {
    Text(HashMap<String, FeatureId>),
    Int(HashMap<u64, FeatureId>),
}

/// Association from (dimension, keyword or condition name) to feature id.
#[derive(Clone, Debug)]
pub struct MappingTable {
    specs: Vec<FeatureSpec>,
    keywords: Vec<KeywordMap>,
    names: HashMap<String, FeatureId>,
    conditions: Vec<FeatureId>,
}

impl Default for MappingTable {
    fn default() -> Self {
        Self::new()
    }
}

impl MappingTable {
    pub fn new() -> Self {
        let keywords = Dimension::ALL
            .into_iter()
            .map(|d| {
                if d.is_text() {
                    KeywordMap::Text(HashMap::new())
                } else {
                    KeywordMap::Int(HashMap::new())
                }
            })
            .collect();
        MappingTable {
            specs: Vec::new(),
            keywords,
            names: HashMap::new(),
            conditions: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    /// Id the next registration will receive.
    pub fn next_id(&self) -> FeatureId {
        FeatureId(self.specs.len() as u32)
    }

    pub fn get(&self, id: FeatureId) -> Option<&FeatureSpec> {
        self.specs.get(id.index())
    }

    pub fn spec(&self, id: FeatureId) -> Result<&FeatureSpec> {
        self.get(id).ok_or(Error::Lookup(id.0))
    }

    pub fn specs(&self) -> &[FeatureSpec] {
        &self.specs
    }

    /// Custom-condition features, in registration order.
    pub fn conditions(&self) -> impl Iterator<Item = &FeatureSpec> + '_ {
        self.conditions.iter().map(|id| &self.specs[id.index()])
    }

    pub fn by_name(&self, name: &str) -> Option<FeatureId> {
        self.names.get(name).copied()
    }

    #[inline]
    pub fn keyword_id(&self, dimension: Dimension, value: ValueRef<'_>) -> Option<FeatureId> {
        match (&self.keywords[dimension.index()], value) {
            (KeywordMap::Text(map), ValueRef::Text(s)) => map.get(s).copied(),
            (KeywordMap::Int(map), ValueRef::Int(v)) => map.get(&v).copied(),
            _ => None,
        }
    }

    /// Registers a keyword feature under its default name.
    pub fn register_keyword(
        &mut self,
        dimension: Dimension,
        value: ValueRef<'_>,
    ) -> Result<FeatureId> {
        let name = FeatureSpec::keyword_name(dimension, value);
        self.register(name, dimension, Matcher::Keyword(value.to_owned()))
    }

    pub fn register(
        &mut self,
        name: String,
        dimension: Dimension,
        matcher: Matcher,
    ) -> Result<FeatureId> {
        FeatureSpec::check_schema(dimension, &matcher)?;
        if self.names.contains_key(&name) {
            return Err(Error::Registration(name));
        }
        if let Matcher::Keyword(v) = &matcher {
            if self.keyword_id(dimension, v.as_ref()).is_some() {
                return Err(Error::Registration(format!("{dimension}={v}")));
            }
        }
        let id = self.next_id();
        match (&matcher, &mut self.keywords[dimension.index()]) {
            (Matcher::Keyword(Value::Text(s)), KeywordMap::Text(map)) => {
                map.insert(s.clone(), id);
            }
            (Matcher::Keyword(Value::Int(v)), KeywordMap::Int(map)) => {
                map.insert(*v, id);
            }
            _ => {}
        }
        // value keywords are never auto-matched, so they are evaluated like conditions
        if matcher.is_condition() || dimension == Dimension::Value {
            self.conditions.push(id);
        }
        self.names.insert(name.clone(), id);
        self.specs.push(FeatureSpec {
            id,
            name,
            dimension,
            matcher,
        });
        Ok(id)
    }

    /// Re-inserts a spec recovered from durable storage; ids must arrive in order.
    pub fn restore(&mut self, spec: FeatureSpec) -> Result<()> {
        if spec.id != self.next_id() {
            return Err(Error::State(format!(
                "mapping entry {} out of order, expected {}",
                spec.id,
                self.next_id()
            )));
        }
        let id = self.register(spec.name, spec.dimension, spec.matcher)?;
        debug_assert_eq!(id, spec.id);
        Ok(())
    }

    /// Ids of every feature `record` matches, keyword features first.
    /// Keywords seen for the first time are registered on the spot.
    pub fn match_record(
        &mut self,
        record: &TransactionRecord,
        out: &mut Vec<FeatureId>,
    ) -> Result<()> {
        out.clear();
        for d in Dimension::keyword_dimensions() {
            let v = record.get(d);
            let id = match self.keyword_id(d, v) {
                Some(id) => id,
                None => self.register_keyword(d, v)?,
            };
            out.push(id);
        }
        for id in &self.conditions {
            if self.specs[id.index()].matches(record) {
                out.push(*id);
            }
        }
        Ok(())
    }

    /// Like [`Self::match_record`] but never registers anything.
    pub fn match_known(&self, record: &TransactionRecord, out: &mut Vec<FeatureId>) {
        out.clear();
        for d in Dimension::keyword_dimensions() {
            if let Some(id) = self.keyword_id(d, record.get(d)) {
                out.push(id);
            }
        }
        for id in &self.conditions {
            if self.specs[id.index()].matches(record) {
                out.push(*id);
            }
        }
    }

    /// Resolves a feature reference: a numeric id, a registered name, or `dimension=keyword`.
    pub fn resolve(&self, reference: &str) -> Result<FeatureId> {
        if let Ok(id) = reference.parse::<u32>() {
            return self
                .get(FeatureId(id))
                .map(|s| s.id)
                .ok_or(Error::Lookup(id));
        }
        if let Some(id) = self.by_name(reference) {
            return Ok(id);
        }
        if let Some((dim, raw)) = reference.split_once('=') {
            let dimension: Dimension = dim.parse()?;
            let value = Value::parse_for(dimension, raw)?;
            if let Some(id) = self.keyword_id(dimension, value.as_ref()) {
                return Ok(id);
            }
        }
        Err(Error::Schema(format!("no feature matches `{reference}`")))
    }
}
