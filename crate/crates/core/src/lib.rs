//! Append-only keyword index for immutable, temporally ordered record streams.
//!
//! Records are addressed purely by their position in the ledger. Every
//! feature (a keyword on one dimension, or a custom condition) owns a forest
//! of fixed-height trees of 32-bit masks: leaf masks mark matching records,
//! middle and root masks summarize their children. Completed trees never
//! change, so insertion cost stays constant as the ledger grows.
//!
//! The crate is `no_std` (it needs `alloc`). File IO, the command-line tool
//! and record file formats live in the `bitforest` crate.
//!
//! Module map:
//! - [`mask`]: word-level primitives (slot addressing, rank, set-bit scan).
//! - [`forest`]: the uncompressed positional forest.
//! - [`compressed`]: the zero-elided forest with tree filter and first-node table.
//! - [`token`]: resumable query cursors and the client-side token table.
//! - [`verify`]: randomized variable-width CRC and verification objects.
//! - [`index`]: keyword auto-registration on top of the compressed forest.
//! - [`sim`]: owner / provider / chain / user protocol simulation.
#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod compressed;
pub mod config;
pub mod error;
pub mod feature;
pub mod forest;
pub mod index;
pub mod mask;
pub mod record;
pub mod sim;
pub mod token;
pub mod verify;

pub use compressed::{CompressedForest, FitEntry, QueryResult, QueryStats, TreeFilter};
pub use config::{ForestConfig, Level, Position};
pub use error::{Error, Result};
pub use feature::{FeatureId, FeatureSpec, MappingTable, Matcher};
pub use forest::BmfForest;
pub use index::KeywordIndex;
pub use mask::Mask;
pub use record::{Dimension, TransactionRecord, Value};
pub use token::{FeatureSetId, Token, TokenVersionTable};
pub use verify::{Verdict, VerdictKind, VerificationObject, VerificationSeed};
