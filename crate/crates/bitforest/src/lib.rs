//! Persistent storage, record formats and the command-line front end for
//! the `bitforest-core` keyword index.

pub mod bench;
pub mod cli;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod settings;
pub mod store;

pub use bitforest_core;
pub use error::{StoreError, StoreResult};
pub use settings::{Overrides, Settings};
pub use store::{CommitInfo, FaultPoint, Store, StoreOptions, StoreStats};
