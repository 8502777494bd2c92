//! Resume tokens and the client-side token version table.
//!
//! A token is a 64-bit word: bits 63..40 hold the feature-set id, bits 39..0
//! hold the cursor (the number of records scanned when it was issued).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::feature::FeatureId;

pub const FEATURE_SET_BITS: u32 = 24;
pub const CURSOR_BITS: u32 = 40;
pub const FEATURE_SET_LIMIT: u32 = 1 << FEATURE_SET_BITS;
pub const CURSOR_LIMIT: u64 = 1 << CURSOR_BITS;

/// Canonical 24-bit identifier of a feature conjunction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureSetId(u32);

impl FeatureSetId {
    pub fn new(id: u32) -> Result<Self> {
        if id >= FEATURE_SET_LIMIT {
            return Err(Error::TokenEncoding(format!(
                "feature-set id {id:#x} needs more than 24 bits"
            )));
        }
        Ok(FeatureSetId(id))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// Id of a conjunction; order and duplicates in `features` do not matter.
    ///
    /// A single feature whose id fits keeps it. Anything else maps to the low
    /// 24 bits of FNV-1a over the sorted ids' little-endian bytes.
    pub fn of(features: &[FeatureId]) -> Result<Self> {
        let mut ids: Vec<u32> = features.iter().map(|f| f.0).collect();
        ids.sort_unstable();
        ids.dedup();
        match ids.as_slice() {
            [] => Err(Error::Parameter("empty feature set".into())),
            [single] if *single < FEATURE_SET_LIMIT => Ok(FeatureSetId(*single)),
            _ => {
                let mut h: u64 = 0xcbf2_9ce4_8422_2325;
                for b in ids.iter().flat_map(|id| id.to_le_bytes()) {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
                Ok(FeatureSetId((h as u32) & (FEATURE_SET_LIMIT - 1)))
            }
        }
    }
}

impl fmt::Display for FeatureSetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Where a query over one feature set stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Token {
    feature_set: FeatureSetId,
    cursor: u64,
}

impl Token {
    pub fn new(feature_set: FeatureSetId, cursor: u64) -> Result<Self> {
        if cursor >= CURSOR_LIMIT {
            return Err(Error::TokenEncoding(format!(
                "cursor {cursor} needs more than 40 bits"
            )));
        }
        Ok(Token {
            feature_set,
            cursor,
        })
    }

    /// Encodes raw fields, checking both widths.
    pub fn encode(feature_set: u32, cursor: u64) -> Result<u64> {
        Ok(Token::new(FeatureSetId::new(feature_set)?, cursor)?.to_bits())
    }

    pub fn decode(bits: u64) -> (u32, u64) {
        let t = Token::from_bits(bits);
        (t.feature_set.0, t.cursor)
    }

    pub fn feature_set(self) -> FeatureSetId {
        self.feature_set
    }

    pub fn cursor(self) -> u64 {
        self.cursor
    }

    pub fn to_bits(self) -> u64 {
        ((self.feature_set.0 as u64) << CURSOR_BITS) | self.cursor
    }

    /// Every 64-bit word is a valid token.
    pub fn from_bits(bits: u64) -> Self {
        Token {
            feature_set: FeatureSetId((bits >> CURSOR_BITS) as u32),
            cursor: bits & (CURSOR_LIMIT - 1),
        }
    }

    /// Fails unless this token was issued for `features`.
    pub fn check(self, features: &[FeatureId]) -> Result<()> {
        let want = FeatureSetId::of(features)?;
        if want != self.feature_set {
            return Err(Error::Token(format!(
                "token is for feature set {}, query is for {want}",
                self.feature_set
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.to_bits())
    }
}

impl FromStr for Token {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Decode(format!("token `{s}` is not 16 hex digits"));
        if s.len() != 16 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(bad());
        }
        u64::from_str_radix(s, 16)
            .map(Token::from_bits)
            .map_err(|_| bad())
    }
}

impl From<Token> for String {
    fn from(t: Token) -> String {
        format!("{t}")
    }
}

/// Every token a data user has received, per feature set, in receipt order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TokenVersionTable {
    entries: BTreeMap<FeatureSetId, Vec<Token>>,
}

impl TokenVersionTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `token`. A token whose cursor is behind the latest one for its
    /// set is rejected so each history stays non-decreasing.
    pub fn record(&mut self, token: Token) -> Result<()> {
        let history = self.entries.entry(token.feature_set).or_default();
        if let Some(last) = history.last() {
            if last.cursor > token.cursor {
                return Err(Error::Token(format!(
                    "cursor {} is behind the latest recorded cursor {}",
                    token.cursor, last.cursor
                )));
            }
        }
        history.push(token);
        Ok(())
    }

    pub fn latest(&self, set: FeatureSetId) -> Option<Token> {
        self.entries.get(&set).and_then(|h| h.last().copied())
    }

    pub fn history(&self, set: FeatureSetId) -> &[Token] {
        self.entries.get(&set).map_or(&[], Vec::as_slice)
    }

    /// Feature sets in ascending id order.
    pub fn feature_sets(&self) -> impl Iterator<Item = FeatureSetId> + '_ {
        self.entries.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
