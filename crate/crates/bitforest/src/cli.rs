//! Command-line interface.

use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bitforest_core::sim::{DatasetSpec, Hsb, SpBehavior};
use bitforest_core::verify::Width;
use bitforest_core::{Dimension, Matcher, Token, Value, VerdictKind};

use crate::bench::{self, BenchConfig};
use crate::error::{StoreError, StoreResult};
use crate::formats::{self, Format};
use crate::settings::Overrides;
use crate::store::{Store, StoreOptions};

#[derive(Debug, Parser)]
#[command(
    name = "bitforest",
    version,
    about = "Append-only bitmap keyword index with verifiable results"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Data directory.
    #[arg(
        long,
        env = "BITFOREST_DATA_DIR",
        default_value = "bitforest-data",
        global = true
    )]
    pub data_dir: PathBuf,
    /// Children per node (power of two, at most 32). Fixed when the directory is created.
    #[arg(long, global = true)]
    pub branching: Option<u32>,
    /// Tree height. Only 3 is supported.
    #[arg(long, global = true)]
    pub height: Option<u32>,
    /// Condition features queued before one history scan builds them.
    #[arg(long, global = true)]
    pub create_batch_threshold: Option<usize>,
    /// Required probability of detecting a fabricated result.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Required probability that result checksums are pairwise distinct.
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    /// Minimum accepted fraction below which every result is rejected.
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Skip fsync on writes.
    #[arg(long, global = true)]
    pub no_fsync: bool,
}

impl Global {
    fn overrides(&self) -> Overrides {
        Overrides {
            branching: self.branching,
            height: self.height,
            create_batch_threshold: self.create_batch_threshold,
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            seed: self.seed,
        }
    }

    fn open(&self) -> StoreResult<Store> {
        Store::open(
            &self.data_dir,
            &self.overrides(),
            StoreOptions {
                fsync: !self.no_fsync,
                auto_persist: true,
            },
        )
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Append records from a file.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "jsonl")]
        format: Format,
    },
    /// Register a keyword feature or a range condition.
    FeatureAdd {
        #[arg(long)]
        name: String,
        #[arg(long)]
        dimension: String,
        #[arg(long, conflicts_with_all = ["min", "max"])]
        keyword: Option<String>,
        #[arg(long)]
        min: Option<u64>,
        #[arg(long)]
        max: Option<u64>,
    },
    /// Records matching every listed feature.
    Query {
        /// Comma-separated ids, names or `dimension=value` references.
        #[arg(long, value_delimiter = ',', required = true)]
        features: Vec<String>,
        /// Resume after this token (16 hex digits).
        #[arg(long)]
        token: Option<String>,
        /// Print the token for resuming this query.
        #[arg(long)]
        emit_token: bool,
        /// Print each matching record as JSON.
        #[arg(long)]
        records: bool,
    },
    /// Run one verified query against a simulated provider and chain.
    VerifyDemo {
        #[arg(long, value_enum, default_value = "honest")]
        behavior: Behavior,
        /// Comma-separated ids, names or `dimension=value` references.
        #[arg(long, value_delimiter = ',', required = true)]
        features: Vec<String>,
        /// Items fabricated (b1) or withheld (b2).
        #[arg(long, default_value_t = 2)]
        count: usize,
    },
    /// Measure query, resume and insert cost over generated ledgers.
    Bench {
        /// Comma-separated ledger sizes, e.g. 1e4,1e5.
        #[arg(long, value_delimiter = ',', default_value = "1e4,1e5")]
        sizes: Vec<String>,
        /// CSV output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Records appended between the full query and the resumed one.
        #[arg(long, default_value_t = 10_000)]
        batch: u64,
    },
    /// Engine and file statistics.
    Stats,
    /// Write a synthetic ledger with reference-shaped value distributions.
    Generate {
        #[arg(long)]
        records: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "jsonl")]
        format: Format,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Behavior {
    Honest,
    B1,
    B2,
    B3,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn io_out(e: std::io::Error) -> StoreError {
    StoreError::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    }
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> StoreResult<()> {
    match &cli.command {
        Command::Ingest { input, format } => ingest(&cli.global, input, *format, out),
        Command::FeatureAdd {
            name,
            dimension,
            keyword,
            min,
            max,
        } => feature_add(
            &cli.global,
            name,
            dimension,
            keyword.as_deref(),
            *min,
            *max,
            out,
        ),
        Command::Query {
            features,
            token,
            emit_token,
            records,
        } => query(
            &cli.global,
            features,
            token.as_deref(),
            *emit_token,
            *records,
            out,
        ),
        Command::VerifyDemo {
            behavior,
            features,
            count,
        } => verify_demo(&cli.global, *behavior, features, *count, out),
        Command::Bench {
            sizes,
            out: path,
            batch,
        } => {
            let sizes = sizes
                .iter()
                .map(|s| parse_size(s))
                .collect::<StoreResult<Vec<_>>>()?;
            let settings = crate::settings::Settings::default().apply(&cli.global.overrides())?;
            let config = BenchConfig {
                sizes,
                batch: *batch,
                seed: settings.seed,
                forest: settings.forest,
            };
            let rows = bench::run(&config)?;
            match path {
                Some(p) => {
                    let mut f = File::create(p).map_err(StoreError::io(p))?;
                    bench::write_csv(&rows, &mut f).map_err(StoreError::io(p))?;
                    writeln!(out, "wrote {} rows to {}", rows.len(), p.display()).map_err(io_out)
                }
                None => bench::write_csv(&rows, out).map_err(io_out),
            }
        }
        Command::Stats => stats(&cli.global, out),
        Command::Generate {
            records,
            out: path,
            format,
        } => generate(&cli.global, *records, path, *format, out),
    }
}

fn parse_size(s: &str) -> StoreResult<u64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| StoreError::Config(format!("bad size `{s}`")))?;
    if !(v >= 1.0 && v.fract() == 0.0 && v < 1e13) {
        return Err(StoreError::Config(format!(
            "size `{s}` must be a positive whole number"
        )));
    }
    Ok(v as u64)
}

fn ingest(g: &Global, input: &PathBuf, format: Format, out: &mut dyn Write) -> StoreResult<()> {
    let start = Instant::now();
    let file = File::open(input).map_err(StoreError::io(input))?;
    let records = formats::read_records(file, format).collect::<StoreResult<Vec<_>>>()?;
    let mut store = g.open()?;
    for r in &records {
        store.insert(r)?;
    }
    store.persist()?;
    writeln!(
        out,
        "ingested {} in {} ms",
        records.len(),
        start.elapsed().as_millis()
    )
    .map_err(io_out)
}

fn feature_add(
    g: &Global,
    name: &str,
    dimension: &str,
    keyword: Option<&str>,
    min: Option<u64>,
    max: Option<u64>,
    out: &mut dyn Write,
) -> StoreResult<()> {
    let dimension: Dimension = dimension.parse()?;
    let mut store = g.open()?;
    let id = match keyword {
        Some(k) => store.add_keyword(
            Some(name.to_string()),
            dimension,
            Value::parse_for(dimension, k)?,
        )?,
        None if min.is_some() || max.is_some() => {
            store.add_condition(name.to_string(), dimension, Matcher::Range { min, max })?
        }
        None => {
            return Err(StoreError::Config(
                "feature-add needs --keyword or --min/--max".into(),
            ))
        }
    };
    writeln!(out, "feature {id} {name}").map_err(io_out)
}

fn query(
    g: &Global,
    features: &[String],
    token: Option<&str>,
    emit_token: bool,
    print_records: bool,
    out: &mut dyn Write,
) -> StoreResult<()> {
    let mut store = g.open()?;
    let refs: Vec<&str> = features.iter().map(String::as_str).collect();
    let ids = store.index().resolve(&refs)?;
    let (result, next) = match token {
        Some(t) => {
            let t: Token = t.parse()?;
            store.index().resume(t, &ids)?
        }
        None => store.index().query(&ids)?,
    };
    writeln!(out, "matches: {}", result.indices.len()).map_err(io_out)?;
    if print_records {
        let records = store.records(&result.indices)?;
        for (i, r) in result.indices.iter().zip(records) {
            writeln!(
                out,
                "{i}\t{}",
                serde_json::to_string(&r).expect("records serialize")
            )
            .map_err(io_out)?;
        }
    } else {
        for i in &result.indices {
            writeln!(out, "{i}").map_err(io_out)?;
        }
    }
    if emit_token {
        writeln!(out, "token: {next}").map_err(io_out)?;
    }
    Ok(())
}

fn verify_demo(
    g: &Global,
    behavior: Behavior,
    features: &[String],
    count: usize,
    out: &mut dyn Write,
) -> StoreResult<()> {
    let mut store = g.open()?;
    let settings = *store.settings();
    let records = store.all_records()?;
    let mut hsb = Hsb::with_mapping(
        settings.forest,
        store.index().mapping().clone(),
        settings.seed,
    );
    hsb.set_params(settings.security);
    for r in &records {
        hsb.outsource(r)?;
    }
    let refs: Vec<&str> = features.iter().map(String::as_str).collect();
    let ids = hsb.resolve(&refs)?;
    let sp = match behavior {
        Behavior::Honest => SpBehavior::Honest,
        Behavior::B1 => SpBehavior::InjectFabricated(count),
        Behavior::B2 => SpBehavior::Omit(count),
        Behavior::B3 => SpBehavior::FullyMalicious,
    };
    let o = hsb.user_round_trip(&ids, sp)?;
    let w = |out: &mut dyn Write, line: String| writeln!(out, "{line}").map_err(io_out);
    w(
        out,
        format!(
            "k: {}",
            match o.width {
                Width::Mapped(k) => k.to_string(),
                Width::Raw => "raw".into(),
            }
        ),
    )?;
    w(out, format!("vo bytes: {}", o.vo_bytes))?;
    w(out, format!("N_h: {}", o.n_h))?;
    w(out, format!("N_R: {}", o.n_r))?;
    w(out, format!("N_acc: {}", o.verdict.matched))?;
    let v = &o.verdict;
    let line = match v.kind {
        VerdictKind::Ok => "verdict: OK".to_string(),
        VerdictKind::Fabricated => format!(
            "verdict: B1 rejected {} fabricated, accepted {}",
            v.fabricated.len(),
            v.accepted.len()
        ),
        VerdictKind::Withheld => format!(
            "verdict: B2 withheld {}; recovered {} via local reverify ({} extra chain calls)",
            v.unmatched.len(),
            o.recovered,
            o.vo_round_trips - 1
        ),
        VerdictKind::Rejected => "verdict: B3 rejected all".to_string(),
    };
    w(out, line)?;
    w(out, format!("accepted: {}", o.results.len()))?;
    w(out, format!("token: {}", o.token))
}

fn generate(
    g: &Global,
    records: u64,
    path: &PathBuf,
    format: Format,
    out: &mut dyn Write,
) -> StoreResult<()> {
    let spec = DatasetSpec::reference(records, g.seed.unwrap_or(0));
    let file = File::create(path).map_err(StoreError::io(path))?;
    let mut w = std::io::BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        if format == Format::Csv {
            writeln!(w, "{}", formats::csv_header())?;
        }
        for r in spec.generate().map_err(std::io::Error::other)? {
            match format {
                Format::Jsonl => writeln!(
                    w,
                    "{}",
                    serde_json::to_string(&r).expect("records serialize")
                )?,
                Format::Csv => writeln!(w, "{}", formats::csv_row(&r))?,
            }
        }
        w.flush()
    };
    write().map_err(StoreError::io(path))?;
    writeln!(out, "generated {records} records to {}", path.display()).map_err(io_out)
}

fn stats(g: &Global, out: &mut dyn Write) -> StoreResult<()> {
    let store = g.open()?;
    let s = store.stats();
    let last = match s.last_commit {
        Some((kind, n)) => format!("{} at {n} records", kind.name()),
        None => "none".into(),
    };
    let lines = [
        format!("records: {}", s.record_count),
        format!("trees: {}", s.tree_count),
        format!("features: {}", s.feature_count),
        format!("filter bits per feature: {}", s.filter_bits),
        format!("root.masks bytes: {}", s.level_bytes[0]),
        format!("middle.masks bytes: {}", s.level_bytes[1]),
        format!("leaf.masks bytes: {}", s.level_bytes[2]),
        format!("records.log bytes: {}", s.record_log_bytes),
        format!("manifest bytes: {}", s.manifest_bytes),
        format!("commits: {}", s.commits),
        format!("last commit: {last}"),
    ];
    for l in lines {
        writeln!(out, "{l}").map_err(io_out)?;
    }
    Ok(())
}
