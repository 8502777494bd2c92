//! In-process model of the outsourced ledger: a data owner, a service
//! provider holding raw records, a chain node holding digests, and the data
//! user who verifies what the provider returns.
//!
//! Also hosts the deterministic synthetic dataset generator.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::config::ForestConfig;
use crate::error::{Error, Result};
use crate::feature::{FeatureId, MappingTable, Matcher};
use crate::index::KeywordIndex;
use crate::record::{Digest, Dimension, TransactionRecord};
use crate::token::Token;
use crate::verify::{self, Verdict, VerdictKind, VerificationObject, VerificationSeed, Width};

/// SHA-256 of the canonical record serialization.
pub fn digest(record: &TransactionRecord) -> Digest {
    record.digest()
}

/// How the service provider answers a query.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpBehavior {
    Honest,
    /// Adds this many records that are not in the ledger.
    InjectFabricated(usize),
    /// Drops this many true results.
    Omit(usize),
    /// Replaces every result with a fabricated record.
    FullyMalicious,
}

impl SpBehavior {
    pub fn validate(self) -> Result<()> {
        match self {
            SpBehavior::InjectFabricated(0) | SpBehavior::Omit(0) => Err(Error::Parameter(
                "behavior counts must be at least 1".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Verification parameters chosen by the user.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SecurityParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for SecurityParams {
    fn default() -> Self {
        SecurityParams {
            alpha: 1.0 - 1e-5,
            beta: 0.99,
            gamma: 0.5,
        }
    }
}

/// Off-chain store: raw records plus their index.
#[derive(Clone, Debug)]
pub struct ServiceProvider {
    index: KeywordIndex,
    records: Vec<TransactionRecord>,
}

impl ServiceProvider {
    pub fn index(&self) -> &KeywordIndex {
        &self.index
    }

    pub fn records(&self) -> &[TransactionRecord] {
        &self.records
    }

    /// Exact matches from `from` on, plus the resume token.
    pub fn honest_query(
        &self,
        features: &[FeatureId],
        resume: Option<Token>,
    ) -> Result<(Vec<TransactionRecord>, Token)> {
        let (result, token) = match resume {
            Some(t) => self.index.resume(t, features)?,
            None => self.index.query(features)?,
        };
        Ok((
            result
                .indices
                .iter()
                .map(|&i| self.records[i as usize].clone())
                .collect(),
            token,
        ))
    }
}

/// Chain node: digests plus an index over the same keyword tuples.
#[derive(Clone, Debug)]
pub struct ChainNode {
    index: KeywordIndex,
    digests: Vec<Digest>,
}

impl ChainNode {
    pub fn index(&self) -> &KeywordIndex {
        &self.index
    }

    pub fn digests(&self) -> &[Digest] {
        &self.digests
    }

    /// Digests of the correct results.
    pub fn result_digests(
        &self,
        features: &[FeatureId],
        resume: Option<Token>,
    ) -> Result<Vec<Digest>> {
        let (result, _) = match resume {
            Some(t) => self.index.resume(t, features)?,
            None => self.index.query(features)?,
        };
        Ok(result
            .indices
            .iter()
            .map(|&i| self.digests[i as usize])
            .collect())
    }
}

/// Everything the user learns from one query.
#[derive(Clone, Debug)]
pub struct QueryOutcome {
    /// Accepted records, including any recovered by local re-verification.
    pub results: Vec<TransactionRecord>,
    pub verdict: Verdict,
    pub token: Token,
    /// Verification objects fetched from the chain.
    pub vo_round_trips: u32,
    pub width: Width,
    pub vo_bytes: usize,
    /// Correct-result count on the chain side.
    pub n_h: usize,
    /// Records returned by the provider on the first answer.
    pub n_r: usize,
    /// Withheld records accepted later through local re-verification.
    pub recovered: usize,
    /// Checksums still unmatched after recovery.
    pub still_missing: usize,
}

/// The whole system: owner-side ingestion, both stores, and the user.
#[derive(Clone, Debug)]
pub struct Hsb {
    sp: ServiceProvider,
    chain: ChainNode,
    rng: ChaCha8Rng,
    params: SecurityParams,
}

impl Hsb {
    pub fn new(config: ForestConfig, seed: u64) -> Self {
        Self::with_mapping(config, MappingTable::new(), seed)
    }

    /// Both stores start empty with the features of `mapping` pre-registered.
    pub fn with_mapping(config: ForestConfig, mapping: MappingTable, seed: u64) -> Self {
        Hsb {
            sp: ServiceProvider {
                index: KeywordIndex::with_mapping(config, mapping.clone()),
                records: Vec::new(),
            },
            chain: ChainNode {
                index: KeywordIndex::with_mapping(config, mapping),
                digests: Vec::new(),
            },
            rng: ChaCha8Rng::seed_from_u64(seed),
            params: SecurityParams::default(),
        }
    }

    pub fn set_params(&mut self, params: SecurityParams) {
        self.params = params;
    }

    pub fn params(&self) -> SecurityParams {
        self.params
    }

    pub fn sp(&self) -> &ServiceProvider {
        &self.sp
    }

    pub fn chain(&self) -> &ChainNode {
        &self.chain
    }

    pub fn record_count(&self) -> u64 {
        self.sp.index.record_count()
    }

    /// Sends the record to the provider and its digest to the chain; both
    /// index the same keyword tuple.
    pub fn outsource(&mut self, record: &TransactionRecord) -> Result<()> {
        record.validate()?;
        self.sp.index.insert_record(record)?;
        self.chain.index.insert_record(record)?;
        self.sp.records.push(record.clone());
        self.chain.digests.push(digest(record));
        debug_assert_eq!(
            self.sp.index.last_matches(),
            self.chain.index.last_matches()
        );
        Ok(())
    }

    /// Registers a condition on both sides and builds it over the history.
    pub fn define_condition(
        &mut self,
        name: &str,
        dimension: Dimension,
        matcher: Matcher,
    ) -> Result<FeatureId> {
        let spec = [(String::from(name), dimension, matcher)];
        let history = self.sp.records.as_slice();
        let id = self.sp.index.add_conditions(&spec, Some(history))?[0];
        let chain_id = self.chain.index.add_conditions(&spec, Some(history))?[0];
        debug_assert_eq!(id, chain_id);
        Ok(id)
    }

    /// Resolves references against the provider's mapping table.
    pub fn resolve(&self, references: &[&str]) -> Result<Vec<FeatureId>> {
        self.sp.index.resolve(references)
    }

    /// The provider's answer under `behavior`.
    pub fn sp_query(
        &mut self,
        features: &[FeatureId],
        behavior: SpBehavior,
        resume: Option<Token>,
    ) -> Result<(Vec<TransactionRecord>, Token)> {
        behavior.validate()?;
        let (mut records, token) = self.sp.honest_query(features, resume)?;
        match behavior {
            SpBehavior::Honest => {}
            SpBehavior::InjectFabricated(n) => {
                for _ in 0..n {
                    let at = self.rng.random_range(0..=records.len());
                    records.insert(at, fabricate(&mut self.rng));
                }
            }
            SpBehavior::Omit(n) => {
                for _ in 0..n.min(records.len()) {
                    let at = self.rng.random_range(0..records.len());
                    records.remove(at);
                }
            }
            SpBehavior::FullyMalicious => {
                let n = records.len().max(1);
                records = (0..n).map(|_| fabricate(&mut self.rng)).collect();
            }
        }
        Ok((records, token))
    }

    /// The chain's verification object for the correct results.
    pub fn chain_verify(
        &self,
        features: &[FeatureId],
        seed: VerificationSeed,
        alpha: f64,
        beta: f64,
        resume: Option<Token>,
    ) -> Result<VerificationObject> {
        let digests = self.chain.result_digests(features, resume)?;
        verify::build_vo(&digests, seed, alpha, beta)
    }

    /// Full user flow: query the provider, fetch one verification object,
    /// classify the answer. When results were withheld, the provider is asked
    /// again and the late records are checked against the leftover checksums
    /// without another chain request.
    pub fn user_round_trip(
        &mut self,
        features: &[FeatureId],
        behavior: SpBehavior,
    ) -> Result<QueryOutcome> {
        self.round_trip(features, behavior, None)
    }

    /// [`Self::user_round_trip`] restricted to records after `resume`.
    pub fn round_trip(
        &mut self,
        features: &[FeatureId],
        behavior: SpBehavior,
        resume: Option<Token>,
    ) -> Result<QueryOutcome> {
        let SecurityParams { alpha, beta, gamma } = self.params;
        let (returned, token) = self.sp_query(features, behavior, resume)?;
        let seed = VerificationSeed::random(&mut self.rng);
        let vo = self.chain_verify(features, seed, alpha, beta, resume)?;
        let vo_round_trips = 1;
        let digests: Vec<Digest> = returned.iter().map(digest).collect();
        let verdict = verify::verify_results(&digests, &vo, seed, gamma)?;
        let mut results: Vec<TransactionRecord> = verdict
            .accepted
            .iter()
            .map(|&i| returned[i].clone())
            .collect();
        let mut recovered = 0;
        let mut still_missing = verdict.unmatched.len();
        if verdict.kind == VerdictKind::Withheld {
            let (again, _) = self.sp.honest_query(features, resume)?;
            let again_digests: Vec<Digest> = again.iter().map(digest).collect();
            let accepted: Vec<Digest> = verdict.accepted.iter().map(|&i| digests[i]).collect();
            // re-check only records the first answer did not already cover
            let (late, late_digests) = subtract(&again, &again_digests, &accepted);
            let re = verify::local_reverify(&late_digests, &verdict.unmatched, seed)?;
            recovered = re.accepted.len();
            still_missing = re.remaining.len();
            results.extend(re.accepted.iter().map(|&i| late[i].clone()));
        }
        Ok(QueryOutcome {
            results,
            width: vo.width(),
            vo_bytes: vo.encode().len(),
            n_h: vo.len(),
            n_r: returned.len(),
            verdict,
            token,
            vo_round_trips,
            recovered,
            still_missing,
        })
    }
}

/// Records of `all` left after removing one occurrence per digest in `taken`.
fn subtract(
    all: &[TransactionRecord],
    digests: &[Digest],
    taken: &[Digest],
) -> (Vec<TransactionRecord>, Vec<Digest>) {
    let mut pending: hashbrown::HashMap<Digest, usize> = hashbrown::HashMap::new();
    for d in taken {
        *pending.entry(*d).or_default() += 1;
    }
    let mut records = Vec::new();
    let mut out = Vec::new();
    for (r, d) in all.iter().zip(digests) {
        match pending.get_mut(d) {
            Some(n) if *n > 0 => *n -= 1,
            _ => {
                records.push(r.clone());
                out.push(*d);
            }
        }
    }
    (records, out)
}

/// A schema-valid record with fresh random content.
pub fn fabricate<R: Rng + ?Sized>(rng: &mut R) -> TransactionRecord {
    TransactionRecord {
        from: format!("0x{:040x}", rng.random::<u128>()),
        to: format!("0x{:040x}", rng.random::<u128>()),
        to_create: rng.random_range(0..2),
        from_is_contract: rng.random_range(0..2),
        to_is_contract: rng.random_range(0..2),
        value: rng.random_range(0..100_000_000),
        gas_limit: rng.random_range(21_000..1_000_000),
        gas_price: rng.random_range(1..1_000_000_000),
        gas_used: rng.random_range(21_000..1_000_000),
        calling_function: format!("0x{:08x}", rng.random::<u32>()),
        is_error: rng.random_range(0..2),
        eip2718_type: rng.random_range(0..3),
        max_fee_per_gas: rng.random_range(0..1_000_000_000),
        max_priority_fee_per_gas: rng.random_range(0..1_000_000_000),
    }
}

/// Distinct-value counts per dimension of the reference ledger, which held
/// 7,305,457 records.
pub const REFERENCE_CARDINALITIES: [u64; Dimension::COUNT] = [
    348_726, 336_980, 56_474, 2, 2, 1689, 35_179, 204_560, 39_505, 42_871, 2, 2, 2, 2,
];
pub const REFERENCE_RECORDS: u64 = 7_305_457;

/// How dimension values are drawn.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Draw {
    /// Value rank `r` in `1..=C` with probability proportional to `r^-s`.
    Zipf(f64),
    /// Uniform over `0..C`.
    Uniform,
    /// Record `i` takes rank `i mod C`: every value equally often, evenly spread.
    Cyclic,
}

/// A predicate forced true at a fixed rate: the dimension is set to `value`
/// with probability `probability`, otherwise drawn normally.
#[derive(Clone, Debug, PartialEq)]
pub struct Planted {
    pub dimension: Dimension,
    pub value: String,
    pub probability: f64,
}

/// Deterministic synthetic ledger description.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub records: u64,
    pub seed: u64,
    pub cardinalities: [u64; Dimension::COUNT],
    pub draw: Draw,
    pub planted: Vec<Planted>,
}

impl DatasetSpec {
    /// Reference cardinalities scaled to `records` (at least 2 values per
    /// dimension), Zipf-skewed draws.
    pub fn reference(records: u64, seed: u64) -> Self {
        let mut cardinalities = REFERENCE_CARDINALITIES;
        for c in &mut cardinalities {
            if *c > 2 {
                *c = (*c as u128 * records as u128 / REFERENCE_RECORDS as u128).max(2) as u64;
            }
        }
        // the value dimension keeps its full level count so thresholds stay meaningful
        cardinalities[Dimension::Value.index()] = REFERENCE_CARDINALITIES[Dimension::Value.index()];
        DatasetSpec {
            records,
            seed,
            cardinalities,
            draw: Draw::Zipf(1.1),
            planted: Vec::new(),
        }
    }

    /// Same cardinality `c` on every non-flag dimension, drawn cyclically.
    pub fn cyclic(records: u64, c: u64, seed: u64) -> Self {
        let mut cardinalities = [c; Dimension::COUNT];
        for d in Dimension::ALL.into_iter().filter(|d| d.is_flag()) {
            cardinalities[d.index()] = 2;
        }
        DatasetSpec {
            records,
            seed,
            cardinalities,
            draw: Draw::Cyclic,
            planted: Vec::new(),
        }
    }

    pub fn with_planted(
        mut self,
        dimension: Dimension,
        value: impl Into<String>,
        probability: f64,
    ) -> Self {
        self.planted.push(Planted {
            dimension,
            value: value.into(),
            probability,
        });
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(d) = Dimension::ALL
            .into_iter()
            .find(|d| self.cardinalities[d.index()] == 0)
        {
            return Err(Error::Parameter(format!(
                "dimension {d} needs at least one value"
            )));
        }
        if let Some(d) = Dimension::ALL
            .into_iter()
            .find(|d| d.is_flag() && self.cardinalities[d.index()] > 2)
        {
            return Err(Error::Parameter(format!(
                "flag dimension {d} has at most two values"
            )));
        }
        for p in &self.planted {
            if !(0.0..=1.0).contains(&p.probability) {
                return Err(Error::Parameter(format!(
                    "planted probability {} outside [0, 1]",
                    p.probability
                )));
            }
            crate::record::Value::parse_for(p.dimension, &p.value)?;
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<Dataset> {
        self.validate()?;
        let zipf = match self.draw {
            Draw::Zipf(s) => Some(
                self.cardinalities
                    .iter()
                    .map(|&c| {
                        Zipf::new(c as f64, s).map_err(|e| Error::Parameter(format!("zipf: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
            _ => None,
        };
        Ok(Dataset {
            spec: self.clone(),
            rng: ChaCha8Rng::seed_from_u64(self.seed),
            zipf,
            next: 0,
        })
    }

    /// All records at once.
    pub fn collect(&self) -> Result<Vec<TransactionRecord>> {
        Ok(self.generate()?.collect())
    }
}

/// Iterator over a generated ledger.
#[derive(Clone, Debug)]
pub struct Dataset {
    spec: DatasetSpec,
    rng: ChaCha8Rng,
    zipf: Option<Vec<Zipf<f64>>>,
    next: u64,
}

impl Dataset {
    fn rank(&mut self, d: Dimension) -> u64 {
        let c = self.spec.cardinalities[d.index()];
        if d == Dimension::Value && !matches!(self.spec.draw, Draw::Cyclic) {
            // value levels are uniform so the share above a threshold is a fixed fraction
            return self.rng.random_range(0..c);
        }
        match (&self.zipf, self.spec.draw) {
            (Some(z), _) => z[d.index()].sample(&mut self.rng) as u64 - 1,
            (None, Draw::Cyclic) => self.next % c,
            (None, _) => self.rng.random_range(0..c),
        }
    }
}

impl Iterator for Dataset {
    type Item = TransactionRecord;

    fn next(&mut self) -> Option<TransactionRecord> {
        if self.next >= self.spec.records {
            return None;
        }
        let mut record = TransactionRecord::default();
        for d in Dimension::ALL {
            let rank = self.rank(d);
            let c = self.spec.cardinalities[d.index()];
            set_from_rank(&mut record, d, rank, c);
        }
        for i in 0..self.spec.planted.len() {
            let p = &self.spec.planted[i];
            if self.rng.random_bool(p.probability) {
                record
                    .set(p.dimension, &p.value)
                    .expect("validated planted value");
            }
        }
        self.next += 1;
        Some(record)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.spec.records - self.next) as usize;
        (left, Some(left))
    }
}

/// Maps a value rank to a concrete field value.
fn set_from_rank(record: &mut TransactionRecord, d: Dimension, rank: u64, cardinality: u64) {
    let salt = d.index() as u64;
    match d {
        Dimension::From | Dimension::To => {
            record
                .set(d, &format!("0x{:040x}", spread(rank, salt)))
                .expect("text field");
        }
        Dimension::CallingFunction => {
            record
                .set(
                    d,
                    &format!("0x{:08x}", spread(rank, salt) as u32 ^ rank as u32),
                )
                .expect("text field");
        }
        Dimension::Value => {
            // level l of C maps to floor(10^(8 l / C)): a log-spread amount scale
            let v = libm::floor(libm::pow(10.0, 8.0 * rank as f64 / cardinality as f64)) as u64;
            record.value = v;
        }
        Dimension::GasLimit | Dimension::GasUsed => {
            let _ = record.set(d, &format!("{}", 21_000 + rank));
        }
        Dimension::GasPrice => {
            let _ = record.set(d, &format!("{}", 1_000_000_000 + rank * 1000));
        }
        _ => {
            let _ = record.set(d, &format!("{rank}"));
        }
    }
}

/// Bijective 64-bit mix (splitmix finalizer) so addresses look unrelated.
fn spread(rank: u64, salt: u64) -> u128 {
    let mut z = rank.wrapping_add(salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z as u128) << 32 | rank as u128
}
