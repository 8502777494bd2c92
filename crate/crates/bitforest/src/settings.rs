//! The `config` file: plain `key=value` lines.

use std::fmt::Write as _;
use std::str::FromStr;

use bitforest_core::sim::SecurityParams;
use bitforest_core::ForestConfig;

use crate::error::{StoreError, StoreResult};

/// Engine shape plus verification parameters of one data directory.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Settings {
    pub forest: ForestConfig,
    pub security: SecurityParams,
    pub seed: u64,
}

/// Values given on the command line; `None` keeps the stored or default value.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Overrides {
    pub branching: Option<u32>,
    pub height: Option<u32>,
    pub create_batch_threshold: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub seed: Option<u64>,
}

impl Overrides {
    fn structural(&self) -> bool {
        self.branching.is_some() || self.height.is_some() || self.create_batch_threshold.is_some()
    }
}

impl Settings {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let f = &self.forest;
        let s = &self.security;
        writeln!(out, "branching={}", f.branching()).unwrap();
        writeln!(out, "height={}", f.height()).unwrap();
        writeln!(out, "createBatchThreshold={}", f.create_batch_threshold()).unwrap();
        writeln!(out, "alpha={}", s.alpha).unwrap();
        writeln!(out, "beta={}", s.beta).unwrap();
        writeln!(out, "gamma={}", s.gamma).unwrap();
        writeln!(out, "seed={}", self.seed).unwrap();
        out
    }

    pub fn parse(text: &str) -> StoreResult<Settings> {
        let mut o = Overrides::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                StoreError::Config(format!("config line {}: expected key=value", n + 1))
            })?;
            let value = value.trim();
            match key.trim() {
                "branching" => o.branching = Some(num(key, value)?),
                "height" => o.height = Some(num(key, value)?),
                "createBatchThreshold" => o.create_batch_threshold = Some(num(key, value)?),
                "alpha" => o.alpha = Some(num(key, value)?),
                "beta" => o.beta = Some(num(key, value)?),
                "gamma" => o.gamma = Some(num(key, value)?),
                "seed" => o.seed = Some(num(key, value)?),
                other => return Err(StoreError::Config(format!("unknown config key `{other}`"))),
            }
        }
        Settings::default().apply(&o)
    }

    /// Applies every override, validating the result.
    pub fn apply(&self, o: &Overrides) -> StoreResult<Settings> {
        let forest = ForestConfig::new(
            o.branching.unwrap_or(self.forest.branching()),
            o.height.unwrap_or(self.forest.height()),
            o.create_batch_threshold
                .unwrap_or(self.forest.create_batch_threshold()),
        )
        .map_err(|e| StoreError::Config(e.to_string()))?;
        let security = SecurityParams {
            alpha: o.alpha.unwrap_or(self.security.alpha),
            beta: o.beta.unwrap_or(self.security.beta),
            gamma: o.gamma.unwrap_or(self.security.gamma),
        };
        for (name, p) in [("alpha", security.alpha), ("beta", security.beta)] {
            if !(p > 0.0 && p < 1.0) {
                return Err(StoreError::Config(format!(
                    "{name} must lie in (0, 1), got {p}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&security.gamma) {
            return Err(StoreError::Config(format!(
                "gamma must lie in [0, 1], got {}",
                security.gamma
            )));
        }
        Ok(Settings {
            forest,
            security,
            seed: o.seed.unwrap_or(self.seed),
        })
    }

    /// Applies overrides to the settings of an existing directory. The forest
    /// shape is fixed once data exists, so structural overrides must agree.
    pub fn reconcile(&self, o: &Overrides) -> StoreResult<Settings> {
        let next = self.apply(o)?;
        if o.structural() && next.forest != self.forest {
            return Err(StoreError::Config(format!(
                "data directory was created with branching={} height={} createBatchThreshold={}; \
                 the forest shape cannot change",
                self.forest.branching(),
                self.forest.height(),
                self.forest.create_batch_threshold()
            )));
        }
        Ok(next)
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> StoreResult<T> {
    value
        .parse()
        .map_err(|_| StoreError::Config(format!("config key `{key}`: cannot parse `{value}`")))
}
