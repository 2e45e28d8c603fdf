//! Subcommands of the `poi-alias` executable.
//!
//! Every command computes all of its artifacts in memory first and only then
//! writes them, each through a temporary file and a rename, so a failing run
//! leaves no partial output behind.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use poi_alias::discovery::{AliasMatrix, Decision, Method, MetricConfig, ScoredPair};
use poi_alias::eval::{evaluate_matrices, sweep_csv};
use poi_alias::ingestion::{Corpus, CorpusReport};
use poi_alias::pipeline::{self, PrepareConfig, PreparedDataset, ThresholdSpec};
use poi_alias::synth::{generate_city, SynthConfig};

pub mod log;

#[derive(Debug, Parser)]
#[command(name = "poi-alias", version, about = "Discover POI name aliases from user mobility")]
pub struct Cli {
    /// Worker threads for scoring (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// TOML file with defaults for any tunable and a `[synth]` table.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Only print warnings and errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic city with exhaustive labels.
    Synth(SynthArgs),
    /// Load an input directory and report row-level problems.
    IngestCheck(InputArgs),
    /// Canonicalize names and summarize mobility profiles.
    Preprocess(InputArgs),
    /// Score every (standard, candidate) pair and emit links.
    Discover(InputArgs),
    /// Score emitted links against the ground-truth labels.
    Evaluate(EvaluateArgs),
    /// District cross-validation of the calibrated threshold.
    Crossval(CrossvalArgs),
    /// Calibrate on one city and apply the threshold to another.
    Transfer(TransferArgs),
    /// Calibrate and evaluate across grid resolutions.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Generator overrides as `key=value`, e.g. `pois_per_district=50`.
    pub overrides: Vec<String>,
}

#[derive(Debug, Args, Default, Clone)]
pub struct Tunables {
    /// centroid | loccent | kl | jaccard | editdist
    #[arg(long)]
    pub method: Option<Method>,
    /// A number, or `calibrate` to pick the F1-maximizing threshold.
    #[arg(long)]
    pub threshold: Option<ThresholdSpec>,
    #[arg(long)]
    pub local_window_m: Option<f64>,
    #[arg(long)]
    pub grid_n: Option<usize>,
    #[arg(long)]
    pub kl_epsilon: Option<f64>,
    #[arg(long)]
    pub min_profile_points: Option<usize>,
    #[arg(long)]
    pub cluster_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub tunables: Tunables,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Links to score (default: `aliases.csv` in the output directory).
    #[arg(long)]
    pub aliases: Option<PathBuf>,
    #[command(flatten)]
    pub tunables: Tunables,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Share of labeled districts used for calibration in each fold.
    #[arg(long)]
    pub train_frac: Option<f64>,
    #[command(flatten)]
    pub tunables: Tunables,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub tunables: Tunables,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated grid sizes.
    #[arg(long, value_delimiter = ',')]
    pub grids: Option<Vec<usize>>,
    #[command(flatten)]
    pub tunables: Tunables,
}

/// Optional values read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub method: Option<String>,
    pub threshold: Option<toml::Value>,
    pub local_window_m: Option<f64>,
    pub grid_n: Option<usize>,
    pub kl_epsilon: Option<f64>,
    pub min_profile_points: Option<usize>,
    pub cluster_threshold: Option<f64>,
    pub train_frac: Option<f64>,
    pub grids: Option<Vec<usize>>,
    #[serde(default)]
    pub synth: BTreeMap<String, toml::Value>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

fn toml_scalar(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Fully explicit settings of one run, echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub method: String,
    pub threshold: String,
    pub local_window_m: f64,
    pub grid_n: usize,
    pub kl_epsilon: f64,
    pub min_profile_points: usize,
    pub cluster_threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_frac: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grids: Option<Vec<usize>>,
}

impl ResolvedConfig {
    fn resolve(t: &Tunables, file: &FileConfig, default_threshold: ThresholdSpec) -> Result<(Self, MetricConfig, ThresholdSpec)> {
        let method = match (&t.method, &file.method) {
            (Some(m), _) => *m,
            (None, Some(s)) => s.parse().map_err(anyhow::Error::msg)?,
            (None, None) => Method::Jaccard,
        };
        let threshold = match (&t.threshold, &file.threshold) {
            (Some(th), _) => *th,
            (None, Some(v)) => toml_scalar(v).parse().map_err(anyhow::Error::msg)?,
            (None, None) => default_threshold,
        };
        let mut metric = MetricConfig::new(method);
        metric.local_window_m = t.local_window_m.or(file.local_window_m).unwrap_or(metric.local_window_m);
        metric.grid_n = t.grid_n.or(file.grid_n).unwrap_or(metric.grid_n);
        metric.kl_epsilon = t.kl_epsilon.or(file.kl_epsilon).unwrap_or(metric.kl_epsilon);
        metric.min_profile_points = t.min_profile_points.or(file.min_profile_points).unwrap_or(metric.min_profile_points);
        if let ThresholdSpec::Fixed(v) = threshold {
            metric.threshold = v;
        }
        metric.validate()?;
        let cluster_threshold =
            t.cluster_threshold.or(file.cluster_threshold).unwrap_or(PrepareConfig::default().cluster_threshold);
        if !(0.0..1.0).contains(&cluster_threshold) {
            bail!("cluster threshold must lie in [0, 1), got {cluster_threshold}");
        }
        let resolved = Self {
            method: method.cli_name().to_owned(),
            threshold: threshold.to_string(),
            local_window_m: metric.local_window_m,
            grid_n: metric.grid_n,
            kl_epsilon: metric.kl_epsilon,
            min_profile_points: metric.min_profile_points,
            cluster_threshold,
            train_frac: None,
            grids: None,
        };
        Ok((resolved, metric, threshold))
    }

    fn prepare_config(&self) -> PrepareConfig {
        PrepareConfig { cluster_threshold: self.cluster_threshold }
    }
}

/// Output envelope: command name, resolved settings, then the result fields.
#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    pipeline: &'a ResolvedConfig,
    #[serde(flatten)]
    result: T,
}

#[derive(Debug, Clone, Serialize)]
struct StageRecord {
    stage: String,
    millis: f64,
    counts: BTreeMap<String, u64>,
}

/// Stage timings and counts; written to `run_manifest.json`.
struct Run {
    command: &'static str,
    quiet: bool,
    stages: Vec<StageRecord>,
    artifacts: Vec<(String, Vec<u8>)>,
}

impl Run {
    fn new(command: &'static str, quiet: bool) -> Self {
        Self { command, quiet, stages: Vec::new(), artifacts: Vec::new() }
    }

    fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().with_context(|| format!("stage {name} failed"))?;
        let millis = start.elapsed().as_secs_f64() * 1e3;
        if !self.quiet {
            log::info(self.command, name, &[("millis", format!("{millis:.1}"))]);
        }
        self.stages.push(StageRecord { stage: name.to_owned(), millis, counts: BTreeMap::new() });
        Ok(out)
    }

    fn count(&mut self, key: &str, value: u64) {
        if let Some(s) = self.stages.last_mut() {
            s.counts.insert(key.to_owned(), value);
        }
        if !self.quiet {
            let stage = self.stages.last().map_or("", |s| s.stage.as_str()).to_owned();
            log::info(self.command, &stage, &[(key, value.to_string())]);
        }
    }

    fn artifact(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.artifacts.push((name.to_owned(), bytes.into()));
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.artifact(name, text);
        Ok(())
    }

    /// Writes every artifact plus the manifest into `out`.
    fn commit(mut self, out: &Path, config: &impl Serialize, inputs: &[&Path]) -> Result<()> {
        let manifest = serde_json::json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "inputs": inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "config": config,
            "stages": self.stages,
            "artifacts": self.artifacts.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
        });
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        self.artifacts.push(("run_manifest.json".into(), text.into_bytes()));
        fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))?;
        for (name, bytes) in &self.artifacts {
            write_atomic(&out.join(name), bytes)?;
        }
        if !self.quiet {
            log::info(self.command, "write", &[("out", out.display().to_string()), ("files", self.artifacts.len().to_string())]);
        }
        Ok(())
    }
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.with_context(|| format!("writing {}", path.display()))
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Synth(a) => synth(&a, &file, cli.quiet),
        Command::IngestCheck(a) => ingest_check(&a, cli.quiet),
        Command::Preprocess(a) => preprocess(&a, &file, cli.quiet),
        Command::Discover(a) => discover(&a, &file, cli.quiet),
        Command::Evaluate(a) => evaluate(&a, &file, cli.quiet),
        Command::Crossval(a) => crossval(&a, &file, cli.quiet),
        Command::Transfer(a) => transfer(&a, &file, cli.quiet),
        Command::Sweep(a) => sweep(&a, &file, cli.quiet),
    }
}

fn synth(a: &SynthArgs, file: &FileConfig, quiet: bool) -> Result<()> {
    let mut run = Run::new("synth", quiet);
    let mut config = SynthConfig::default();
    for (k, v) in &file.synth {
        config.set(k, &toml_scalar(v))?;
    }
    for kv in &a.overrides {
        let (k, v) = kv.split_once('=').with_context(|| format!("override `{kv}` is not key=value"))?;
        config.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    let city = run.stage("generate", || Ok(generate_city(&config)?))?;
    run.count("addresses", city.addresses.len() as u64);
    run.count("users", city.locations.len() as u64);
    run.count("labels", city.labels.len() as u64);
    run.count("planted_aliases", city.meta.planted_alias_count() as u64);

    // Render into a scratch directory, then move each file through the
    // atomic writer.
    let scratch = tempfile::tempdir().context("creating scratch directory")?;
    city.write_to_dir(scratch.path()).context("rendering synthetic city")?;
    for name in ["addresses.csv", "locations.csv", "labels.csv", "standards.csv", "truth_meta.json"] {
        run.artifact(name, fs::read(scratch.path().join(name))?);
    }
    run.commit(&a.out, &config, &[])
}

fn load(run: &mut Run, dir: &Path) -> Result<Corpus> {
    let corpus = run.stage("ingest", || Corpus::load_dir(dir).with_context(|| format!("loading {}", dir.display())))?;
    run.count("addresses", corpus.addresses.len() as u64);
    run.count("users_with_locations", corpus.locations.len() as u64);
    run.count("labels", corpus.labels.len() as u64);
    run.count("row_errors", corpus.report.total_errors() as u64);
    if !run.quiet {
        for w in corpus_warnings(&corpus.report) {
            log::warn(run.command, "ingest", &[("msg", w)]);
        }
    }
    Ok(corpus)
}

fn corpus_warnings(r: &CorpusReport) -> Vec<String> {
    let mut out = Vec::new();
    for rep in [Some(&r.addresses), Some(&r.locations), r.labels.as_ref(), r.standards.as_ref()].into_iter().flatten() {
        for e in &rep.errors {
            out.push(format!("{}:{}: {}", rep.source, e.line, e.message));
        }
        out.extend(rep.warnings.iter().cloned());
    }
    if !r.orphan_labels.is_empty() {
        out.push(format!("{} labels name a POI absent from the addresses", r.orphan_labels.len()));
    }
    out
}

fn prepare(run: &mut Run, corpus: &Corpus, config: &ResolvedConfig) -> Result<PreparedDataset> {
    let ds = run.stage("preprocess", || Ok(pipeline::prepare(corpus, &config.prepare_config())))?;
    let names: usize = ds.districts.iter().map(|d| d.standards.len() + d.candidates.len()).sum();
    run.count("districts", ds.districts.len() as u64);
    run.count("canonical_names", names as u64);
    run.count("labeled_pairs", ds.truth.len() as u64);
    if !run.quiet {
        for w in &ds.warnings {
            log::warn(run.command, "preprocess", &[("msg", w.clone())]);
        }
    }
    Ok(ds)
}

fn ingest_check(a: &InputArgs, quiet: bool) -> Result<()> {
    let mut run = Run::new("ingest-check", quiet);
    let corpus = load(&mut run, &a.input)?;
    let report = serde_json::json!({
        "districts": corpus.districts,
        "addresses": corpus.addresses.len(),
        "users_with_locations": corpus.locations.len(),
        "labels": corpus.labels.len(),
        "standards": corpus.standards.len(),
        "row_errors": corpus.report.total_errors(),
        "report": corpus.report,
    });
    run.json("ingest_report.json", &report)?;
    run.commit(&a.out, &serde_json::json!({}), &[&a.input])
}

#[derive(Serialize)]
struct ProfileLine<'a> {
    district: &'a str,
    name: &'a str,
    role: &'a str,
    user_count: usize,
    point_count: usize,
    sufficient: bool,
}

fn profiles_jsonl(ds: &PreparedDataset, min_points: usize) -> Result<String> {
    let mut out = String::new();
    for d in &ds.districts {
        let roles = d.standards.iter().map(|p| ("standard", p)).chain(d.candidates.iter().map(|p| ("candidate", p)));
        for (role, p) in roles {
            let line = ProfileLine {
                district: &d.district,
                name: &p.name,
                role,
                user_count: p.user_count,
                point_count: p.point_count,
                sufficient: p.is_sufficient(min_points),
            };
            out.push_str(&serde_json::to_string(&line)?);
            out.push('\n');
        }
    }
    Ok(out)
}

fn canonical_csv(ds: &PreparedDataset) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["district", "raw_name", "canonical_name"])?;
    for d in &ds.districts {
        for (raw, canon) in &d.raw_to_canonical {
            w.write_record([d.district.as_str(), raw, canon])?;
        }
    }
    Ok(w.into_inner()?)
}

fn preprocess(a: &InputArgs, file: &FileConfig, quiet: bool) -> Result<()> {
    let (config, metric, _) = ResolvedConfig::resolve(&a.tunables, file, ThresholdSpec::Calibrate)?;
    let mut run = Run::new("preprocess", quiet);
    let corpus = load(&mut run, &a.input)?;
    let ds = prepare(&mut run, &corpus, &config)?;
    run.artifact("canonical_map.csv", canonical_csv(&ds)?);
    run.artifact("profiles.jsonl", profiles_jsonl(&ds, metric.min_profile_points)?);
    run.commit(&a.out, &config, &[&a.input])
}

fn aliases_csv(scored: &[ScoredPair]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["district", "standard_name", "candidate_name", "score", "decision"])?;
    for p in scored {
        let score = p.score.map(|s| s.to_string()).unwrap_or_default();
        w.write_record([&p.district, &p.standard_name, &p.candidate_name, &score, p.decision.as_str()])?;
    }
    Ok(w.into_inner()?)
}

#[derive(Serialize)]
struct DiscoverySummary {
    #[serde(with = "poi_alias::serde_util::threshold")]
    applied_threshold: f64,
    calibration: Option<poi_alias::eval::Calibration>,
    pairs: usize,
    links: usize,
    insufficient: usize,
}

fn discover(a: &InputArgs, file: &FileConfig, quiet: bool) -> Result<()> {
    let (config, metric, threshold) = ResolvedConfig::resolve(&a.tunables, file, ThresholdSpec::Calibrate)?;
    let mut run = Run::new("discover", quiet);
    let corpus = load(&mut run, &a.input)?;
    let ds = prepare(&mut run, &corpus, &config)?;
    let found = run.stage("score", || Ok(pipeline::discover(&ds, &metric, threshold)?))?;
    let links = found.scored.iter().filter(|p| p.decision == Decision::Alias).count();
    let insufficient = found.scored.iter().filter(|p| p.decision == Decision::Insufficient).count();
    run.count("pairs", found.scored.len() as u64);
    run.count("links", links as u64);
    run.count("insufficient", insufficient as u64);

    run.artifact("aliases.csv", aliases_csv(&found.scored)?);
    run.artifact("profiles.jsonl", profiles_jsonl(&ds, metric.min_profile_points)?);
    let summary = DiscoverySummary {
        applied_threshold: found.config.threshold,
        calibration: found.calibration,
        pairs: found.scored.len(),
        links,
        insufficient,
    };
    run.json("discovery.json", &Envelope { command: "discover", pipeline: &config, result: summary })?;
    run.commit(&a.out, &config, &[&a.input])
}

#[derive(Deserialize)]
struct AliasRow {
    district: String,
    standard_name: String,
    candidate_name: String,
    decision: String,
}

fn read_aliases(path: &Path) -> Result<Vec<AliasRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    r.deserialize().map(|row| row.with_context(|| format!("parsing {}", path.display()))).collect()
}

fn evaluate(a: &EvaluateArgs, file: &FileConfig, quiet: bool) -> Result<()> {
    let aliases_path = a.aliases.clone().unwrap_or_else(|| a.out.join("aliases.csv"));
    let (mut config, _, _) = ResolvedConfig::resolve(&a.tunables, file, ThresholdSpec::Calibrate)?;
    let mut run = Run::new("evaluate", quiet);
    let rows = run.stage("read-links", || read_aliases(&aliases_path))?;
    // When the links come with their discovery.json, report the settings
    // that produced them.
    let discovery: Option<serde_json::Value> = fs::read(aliases_path.with_file_name("discovery.json"))
        .ok()
        .and_then(|b| serde_json::from_slice(&b).ok());
    if let Some(p) = discovery.as_ref().and_then(|d| d.get("pipeline")) {
        config = serde_json::from_value(p.clone()).context("reading settings from discovery.json")?;
    }
    let applied = discovery.as_ref().and_then(|d| d.get("applied_threshold")).cloned();

    let corpus = load(&mut run, &a.input)?;
    let ds = prepare(&mut run, &corpus, &config)?;
    let report = run.stage("evaluate", || {
        let mut by_district: BTreeMap<&str, Vec<&AliasRow>> = BTreeMap::new();
        for r in &rows {
            by_district.entry(&r.district).or_default().push(r);
        }
        let mut matrices = Vec::new();
        for d in &ds.districts {
            let mut m = AliasMatrix::new(
                d.district.clone(),
                d.standards.iter().map(|p| p.name.clone()).collect(),
                d.candidates.iter().map(|p| p.name.clone()).collect(),
            );
            for r in by_district.get(d.district.as_str()).into_iter().flatten() {
                if r.decision.parse::<Decision>().map_err(anyhow::Error::msg)? != Decision::Alias {
                    continue;
                }
                let i = m.standard_names.iter().position(|n| *n == r.standard_name);
                let j = m.candidate_names.iter().position(|n| *n == r.candidate_name);
                match (i, j) {
                    (Some(i), Some(j)) => {
                        m.links.insert((i, j));
                    }
                    _ => bail!("link ({}, {}, {}) names a POI not in the input", r.district, r.standard_name, r.candidate_name),
                }
            }
            matrices.push(m);
        }
        Ok(evaluate_matrices(&matrices, &ds.truth))
    })?;
    run.count("true_positive", report.true_positive);
    run.count("predicted_positive", report.predicted_positive);
    run.count("actual_positive", report.actual_positive);
    if !quiet {
        log::info("evaluate", "result", &[("precision", format!("{:.4}", report.precision)), ("recall", format!("{:.4}", report.recall)), ("f1", format!("{:.4}", report.f1))]);
    }
    #[derive(Serialize)]
    struct WithThreshold<T> {
        #[serde(flatten)]
        report: T,
        applied_threshold: Option<serde_json::Value>,
    }
    let result = WithThreshold { report, applied_threshold: applied };
    run.json("report.json", &Envelope { command: "evaluate", pipeline: &config, result })?;
    run.commit(&a.out, &config, &[&a.input, &aliases_path])
}

fn crossval(a: &CrossvalArgs, file: &FileConfig, quiet: bool) -> Result<()> {
    let (mut config, metric, _) = ResolvedConfig::resolve(&a.tunables, file, ThresholdSpec::Calibrate)?;
    let train_frac = a.train_frac.or(file.train_frac).unwrap_or(0.8);
    config.train_frac = Some(train_frac);
    config.threshold = ThresholdSpec::Calibrate.to_string();
    let mut run = Run::new("crossval", quiet);
    let corpus = load(&mut run, &a.input)?;
    let ds = prepare(&mut run, &corpus, &config)?;
    let report = run.stage("crossval", || Ok(pipeline::cross_validate(&ds, &metric, train_frac)?))?;
    run.count("folds", report.folds.len() as u64);
    if !quiet {
        log::info("crossval", "result", &[("mean_f1", format!("{:.4}", report.mean_f1)), ("pooled_f1", format!("{:.4}", report.pooled.f1))]);
    }
    run.json("crossval.json", &Envelope { command: "crossval", pipeline: &config, result: &report })?;
    run.commit(&a.out, &config, &[&a.input])
}

fn transfer(a: &TransferArgs, file: &FileConfig, quiet: bool) -> Result<()> {
    let (mut config, metric, _) = ResolvedConfig::resolve(&a.tunables, file, ThresholdSpec::Calibrate)?;
    config.threshold = ThresholdSpec::Calibrate.to_string();
    let mut run = Run::new("transfer", quiet);
    let source = load(&mut run, &a.source)?;
    let source = prepare(&mut run, &source, &config)?;
    let target = load(&mut run, &a.target)?;
    let target = prepare(&mut run, &target, &config)?;
    let report = run.stage("transfer", || Ok(pipeline::transfer(&source, &target, &metric)?))?;
    if !quiet {
        log::info(
            "transfer",
            "result",
            &[("source_f1", format!("{:.4}", report.source.f1)), ("target_f1", format!("{:.4}", report.target.f1)), ("target_in_city_f1", format!("{:.4}", report.target_in_city.f1))],
        );
    }
    run.json("transfer.json", &Envelope { command: "transfer", pipeline: &config, result: &report })?;
    run.commit(&a.out, &config, &[&a.source, &a.target])
}

fn sweep(a: &SweepArgs, file: &FileConfig, quiet: bool) -> Result<()> {
    let (mut config, metric, _) = ResolvedConfig::resolve(&a.tunables, file, ThresholdSpec::Calibrate)?;
    let grids = a.grids.clone().or_else(|| file.grids.clone()).unwrap_or_else(|| vec![20, 50, 150, 300, 500]);
    if grids.is_empty() {
        bail!("--grids needs at least one value");
    }
    config.grids = Some(grids.clone());
    config.threshold = ThresholdSpec::Calibrate.to_string();
    let mut run = Run::new("sweep", quiet);
    let corpus = load(&mut run, &a.input)?;
    let ds = prepare(&mut run, &corpus, &config)?;
    let points = run.stage("sweep", || Ok(pipeline::resolution_sweep(&ds, &metric, metric.method, &grids)?))?;
    if !quiet {
        for p in &points {
            log::info("sweep", "point", &[("grid_n", p.grid_n.to_string()), ("f1", format!("{:.4}", p.report.f1))]);
        }
    }
    run.artifact("sweep.csv", sweep_csv(&points));
    run.json("sweep.json", &Envelope { command: "sweep", pipeline: &config, result: serde_json::json!({ "points": points }) })?;
    run.commit(&a.out, &config, &[&a.input])
}
