//! `cocluster`: fit, coarsen and report MDL co-clusterings of event logs.

mod config;
mod manifest;

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cocluster::analysis::{calendar_report, entity_report, mi_contributions_spatial, mi_contributions_temporal};
use cocluster::corpus::{ingest_csv, CoordinateTable, CsvSchema, EventCorpus};
use cocluster::export::{write_calendar_csv, write_contribution_csv, write_curve_csv, write_geojson, Unit};
use cocluster::hierarchy::{coarsen_spatial, coarsen_temporal, cut_spatial, cut_temporal, informativity_curve, CutCriterion};
use cocluster::optimizer::{fit_spatial_with_progress, fit_temporal_with_progress, FitResult, Progress};
use cocluster::serialize::{
    dendrogram_document, load_json, load_spatial, load_temporal, save_json, spatial_document,
    temporal_document, ModelDocument, ModelKind,
};
use cocluster::synth::{synth_spatial, synth_temporal, SpatialSynthConfig, TemporalSynthConfig};

use config::FileConfig;
use manifest::{default_manifest_path, RunManifest};

#[derive(Parser)]
#[command(name = "cocluster", version, about = "MDL-based co-clustering of sparse event logs")]
struct Cli {
    /// Cap internal parallelism at this many threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Flat `key = value` config file; flags and COCLUSTER_* environment
    /// variables take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize an event CSV and print corpus statistics.
    Ingest(IngestArgs),
    /// Fit a spatial or temporal co-clustering model.
    Fit(FitArgs),
    /// Coarsen a fitted model into a dendrogram, curve CSV and cut model.
    Coarsen(CoarsenArgs),
    /// Export contribution, GeoJSON or calendar reports from a model.
    Report(ReportArgs),
    /// Generate a seeded planted-structure corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Spatial,
    Temporal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Mi,
    Geojson,
    Calendar,
}

#[derive(Args)]
struct SchemaArgs {
    /// Input event CSV.
    #[arg(long)]
    input: PathBuf,
    /// Name of the source column.
    #[arg(long, default_value = "source")]
    source_col: String,
    /// Name of the destination column.
    #[arg(long)]
    dest_col: Option<String>,
    /// Name of the timestamp column (integer day index or YYYY-MM-DD).
    #[arg(long)]
    time_col: Option<String>,
    /// Name of the count column; rows count once when absent.
    #[arg(long)]
    count_col: Option<String>,
    /// Field separator.
    #[arg(long, default_value = ",")]
    separator: char,
    /// File with one entity label per line; matching records are dropped.
    #[arg(long)]
    ignore_list: Option<PathBuf>,
}

impl SchemaArgs {
    fn schema(&self) -> Result<CsvSchema, String> {
        if !self.separator.is_ascii() {
            return Err(format!("separator `{}` is not an ASCII character", self.separator));
        }
        let mut schema = CsvSchema::new(&self.source_col).separator(self.separator as u8);
        if let Some(c) = &self.dest_col {
            schema = schema.destination(c);
        }
        if let Some(c) = &self.time_col {
            schema = schema.timestamp(c);
        }
        if let Some(c) = &self.count_col {
            schema = schema.count(c);
        }
        if let Some(path) = &self.ignore_list {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read ignore list {}: {e}", path.display()))?;
            schema.ignore = text
                .lines()
                .map(|l| l.trim().to_string())
                .filter(|l| !l.is_empty())
                .collect::<HashSet<_>>();
        }
        Ok(schema)
    }

    fn load_corpus(&self) -> Result<EventCorpus, String> {
        let schema = self.schema()?;
        ingest_csv(&self.input, &schema).map_err(|e| e.to_string())
    }

    fn config_json(&self) -> serde_json::Value {
        serde_json::json!({
            "input": self.input.display().to_string(),
            "source_col": self.source_col,
            "dest_col": self.dest_col,
            "time_col": self.time_col,
            "count_col": self.count_col,
            "separator": self.separator.to_string(),
            "ignore_list": self.ignore_list.as_ref().map(|p| p.display().to_string()),
        })
    }
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    schema: SchemaArgs,
    /// Normalized corpus CSV to write.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    schema: SchemaArgs,
    /// Which model to fit.
    #[arg(long, value_enum)]
    kind: Kind,
    /// Model JSON to write.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    restarts: Option<u32>,
    #[arg(long)]
    max_preclusters: Option<u32>,
    #[arg(long)]
    post_opt_passes: Option<u32>,
    #[arg(long)]
    cost_tolerance: Option<f64>,
    /// Print every accepted optimization step instead of a sample.
    #[arg(long)]
    verbose: bool,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct CoarsenArgs {
    #[command(flatten)]
    schema: SchemaArgs,
    /// Fitted model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Cut at the coarsest model keeping at least this informativity rate.
    #[arg(long, conflicts_with = "clusters")]
    tau: Option<f64>,
    /// Cut at the first model with at most this many clusters per axis.
    #[arg(long)]
    clusters: Option<u32>,
    /// Dendrogram JSON (default: model path with .dendrogram.json).
    #[arg(long)]
    dendrogram: Option<PathBuf>,
    /// Informativity curve CSV (default: model path with .curve.csv).
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Cut model JSON (default: model path with .cut.json).
    #[arg(long)]
    cut_model: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    schema: SchemaArgs,
    /// Fitted or cut model JSON.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    format: ReportFormat,
    /// Report file to write.
    #[arg(long)]
    output: PathBuf,
    /// Focus source cluster for geojson reports.
    #[arg(long)]
    focus: Option<u32>,
    /// Coordinate CSV (id,lat,lon); required for geojson.
    #[arg(long)]
    coords: Option<PathBuf>,
    /// Relative deviation from independence before a cell is flagged.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Report contributions in bits instead of nats.
    #[arg(long)]
    bits: bool,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long)]
    sources: u32,
    /// Destination count (spatial).
    #[arg(long)]
    dests: Option<u32>,
    /// Day count (temporal).
    #[arg(long)]
    days: Option<u32>,
    /// Planted source blocks.
    #[arg(long, default_value_t = 4)]
    blocks: u32,
    /// Planted destination blocks (default: same as --blocks).
    #[arg(long)]
    dest_blocks: Option<u32>,
    /// Planted time segments (default: same as --blocks).
    #[arg(long)]
    segments: Option<u32>,
    #[arg(long)]
    calls: u64,
    /// Fraction of uniformly random calls.
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Corpus CSV to write.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), String> {
    let file_cfg = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    if let Some(n) = config::resolve_threads(&file_cfg, cli.threads)? {
        // Ignore the error when a global pool already exists (tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Fit(args) => cmd_fit(args, &file_cfg),
        Command::Coarsen(args) => cmd_coarsen(args),
        Command::Report(args) => cmd_report(args, &file_cfg),
        Command::Synth(args) => cmd_synth(args, &file_cfg),
    }
}

fn write_manifest(
    manifest: &mut RunManifest,
    start: Instant,
    path: Option<&PathBuf>,
    first_output: &Path,
) -> Result<(), String> {
    manifest.wall_time_ms = start.elapsed().as_millis() as u64;
    let path = path
        .cloned()
        .unwrap_or_else(|| default_manifest_path(first_output));
    manifest.write(&path).map_err(|e| e.to_string())
}

fn cmd_ingest(args: IngestArgs) -> Result<(), String> {
    let start = Instant::now();
    let corpus = args.schema.load_corpus()?;
    let file = std::fs::File::create(&args.output)
        .map_err(|e| format!("cannot write {}: {e}", args.output.display()))?;
    corpus.export_csv(file).map_err(|e| e.to_string())?;
    println!(
        "sources={} destinations={} days={} calls={} digest={}",
        corpus.n_sources(),
        corpus.n_destinations(),
        if corpus.has_times() { corpus.n_times() } else { 0 },
        corpus.total(),
        corpus.digest()
    );
    let mut manifest = RunManifest::new("ingest", args.schema.config_json());
    manifest.corpus_digest = Some(corpus.digest());
    manifest.add_output(&args.output);
    write_manifest(&mut manifest, start, args.manifest.as_ref(), &args.output)
}

fn progress_printer(verbose: bool) -> impl FnMut(Progress) {
    move |p: Progress| {
        if verbose || p.step % 1000 == 0 {
            eprintln!(
                "restart {} step {} cost {:.6} k_row {} k_col {}",
                p.restart, p.step, p.cost, p.k_row, p.k_col
            );
        }
    }
}

fn cmd_fit(args: FitArgs, file_cfg: &FileConfig) -> Result<(), String> {
    let start = Instant::now();
    let resolved = config::resolve_fit(
        file_cfg,
        args.seed,
        args.restarts,
        args.max_preclusters,
        args.post_opt_passes,
        args.cost_tolerance,
    )?;
    let corpus = args.schema.load_corpus()?;
    let optimizer = resolved.to_optimizer_config();
    let mut progress = progress_printer(args.verbose);
    let (doc, final_cost, null_cost, wall) = match args.kind {
        Kind::Spatial => {
            let fit = fit_spatial_with_progress(&corpus, &optimizer, &mut progress)
                .map_err(|e| e.to_string())?;
            let doc = spatial_document(&fit.model, &corpus, fit.null_cost, Some(&fit.restarts));
            (doc, fit.final_cost, fit.null_cost, fit.wall_time)
        }
        Kind::Temporal => {
            let fit = fit_temporal_with_progress(&corpus, &optimizer, &mut progress)
                .map_err(|e| e.to_string())?;
            let doc = temporal_document(&fit.model, &corpus, fit.null_cost, Some(&fit.restarts));
            (doc, fit.final_cost, fit.null_cost, fit.wall_time)
        }
    };
    save_json(&args.output, &doc).map_err(|e| e.to_string())?;
    eprintln!(
        "fitted cost {:.6} (null {:.6}) in {:.2}s",
        final_cost,
        null_cost,
        wall.as_secs_f64()
    );
    let mut cfg = serde_json::to_value(&resolved).map_err(|e| e.to_string())?;
    cfg["kind"] = serde_json::json!(match args.kind {
        Kind::Spatial => "spatial",
        Kind::Temporal => "temporal",
    });
    cfg["schema"] = args.schema.config_json();
    let mut manifest = RunManifest::new("fit", cfg);
    manifest.corpus_digest = Some(corpus.digest());
    manifest.add_output(&args.output);
    write_manifest(&mut manifest, start, args.manifest.as_ref(), &args.output)
}

fn derived_path(model: &Path, suffix: &str) -> PathBuf {
    model.with_extension(suffix)
}

fn cmd_coarsen(args: CoarsenArgs) -> Result<(), String> {
    let start = Instant::now();
    let criterion = match (args.tau, args.clusters) {
        (Some(t), None) => CutCriterion::Tau(t),
        (None, Some(c)) => CutCriterion::MaxCount(c),
        _ => return Err("exactly one of --tau or --clusters is required".into()),
    };
    let corpus = args.schema.load_corpus()?;
    let doc: ModelDocument = load_json(&args.model).map_err(|e| e.to_string())?;
    let dendrogram_path = args
        .dendrogram
        .unwrap_or_else(|| derived_path(&args.model, "dendrogram.json"));
    let curve_path = args.curve.unwrap_or_else(|| derived_path(&args.model, "curve.csv"));
    let cut_path = args
        .cut_model
        .unwrap_or_else(|| derived_path(&args.model, "cut.json"));

    let (dendro_doc, cut_doc) = match doc.kind {
        ModelKind::Spatial => {
            let model = load_spatial(&doc, &corpus).map_err(|e| e.to_string())?;
            let fit = FitResult {
                final_cost: model.cost(),
                null_cost: doc.null_cost,
                model,
                restarts: Vec::new(),
                wall_time: std::time::Duration::ZERO,
            };
            let dendro = coarsen_spatial(&fit, &corpus).map_err(|e| e.to_string())?;
            let cut = cut_spatial(&dendro, &corpus, criterion).map_err(|e| e.to_string())?;
            let curve = informativity_curve(&dendro);
            let file = std::fs::File::create(&curve_path)
                .map_err(|e| format!("cannot write {}: {e}", curve_path.display()))?;
            write_curve_csv(file, &curve).map_err(|e| e.to_string())?;
            (
                dendrogram_document(&dendro, &corpus),
                spatial_document(&cut, &corpus, doc.null_cost, None),
            )
        }
        ModelKind::Temporal => {
            let model = load_temporal(&doc, &corpus).map_err(|e| e.to_string())?;
            let fit = FitResult {
                final_cost: model.cost(),
                null_cost: doc.null_cost,
                model,
                restarts: Vec::new(),
                wall_time: std::time::Duration::ZERO,
            };
            let dendro = coarsen_temporal(&fit, &corpus).map_err(|e| e.to_string())?;
            let cut = cut_temporal(&dendro, &corpus, criterion).map_err(|e| e.to_string())?;
            let curve = informativity_curve(&dendro);
            let file = std::fs::File::create(&curve_path)
                .map_err(|e| format!("cannot write {}: {e}", curve_path.display()))?;
            write_curve_csv(file, &curve).map_err(|e| e.to_string())?;
            (
                dendrogram_document(&dendro, &corpus),
                temporal_document(&cut, &corpus, doc.null_cost, None),
            )
        }
    };
    save_json(&dendrogram_path, &dendro_doc).map_err(|e| e.to_string())?;
    save_json(&cut_path, &cut_doc).map_err(|e| e.to_string())?;

    let mut manifest = RunManifest::new(
        "coarsen",
        serde_json::json!({
            "model": args.model.display().to_string(),
            "tau": args.tau,
            "clusters": args.clusters,
            "schema": args.schema.config_json(),
        }),
    );
    manifest.corpus_digest = Some(corpus.digest());
    manifest.add_output(&dendrogram_path);
    manifest.add_output(&curve_path);
    manifest.add_output(&cut_path);
    write_manifest(&mut manifest, start, args.manifest.as_ref(), &dendrogram_path)
}

fn cmd_report(args: ReportArgs, file_cfg: &FileConfig) -> Result<(), String> {
    let start = Instant::now();
    let epsilon = config::resolve_epsilon(file_cfg, args.epsilon)?;
    let unit = if args.bits { Unit::Bits } else { Unit::Nats };
    let corpus = args.schema.load_corpus()?;
    let doc: ModelDocument = load_json(&args.model).map_err(|e| e.to_string())?;
    let file = std::fs::File::create(&args.output)
        .map_err(|e| format!("cannot write {}: {e}", args.output.display()))?;
    match (args.format, doc.kind) {
        (ReportFormat::Mi, ModelKind::Spatial) => {
            let model = load_spatial(&doc, &corpus).map_err(|e| e.to_string())?;
            let report =
                mi_contributions_spatial(&model, &corpus, epsilon).map_err(|e| e.to_string())?;
            write_contribution_csv(file, &report, unit).map_err(|e| e.to_string())?;
        }
        (ReportFormat::Mi, ModelKind::Temporal) => {
            let model = load_temporal(&doc, &corpus).map_err(|e| e.to_string())?;
            let report =
                mi_contributions_temporal(&model, &corpus, epsilon).map_err(|e| e.to_string())?;
            write_contribution_csv(file, &report, unit).map_err(|e| e.to_string())?;
        }
        (ReportFormat::Geojson, ModelKind::Spatial) => {
            let coords_path = args.coords.as_ref().ok_or("--coords is required for geojson")?;
            let focus = args.focus.ok_or("--focus is required for geojson")?;
            let coords = CoordinateTable::from_csv(coords_path).map_err(|e| e.to_string())?;
            let model = load_spatial(&doc, &corpus).map_err(|e| e.to_string())?;
            let report =
                mi_contributions_spatial(&model, &corpus, epsilon).map_err(|e| e.to_string())?;
            let er = entity_report(&report, &model, &corpus, &coords, focus)
                .map_err(|e| e.to_string())?;
            if er.skipped_missing_coords > 0 {
                eprintln!(
                    "warning: skipped {} entities without coordinates",
                    er.skipped_missing_coords
                );
            }
            write_geojson(file, &er, unit).map_err(|e| e.to_string())?;
        }
        (ReportFormat::Geojson, ModelKind::Temporal) => {
            return Err("geojson reports need a spatial model".into());
        }
        (ReportFormat::Calendar, ModelKind::Temporal) => {
            let model = load_temporal(&doc, &corpus).map_err(|e| e.to_string())?;
            let report = calendar_report(&model, &corpus, epsilon).map_err(|e| e.to_string())?;
            write_calendar_csv(file, &report).map_err(|e| e.to_string())?;
        }
        (ReportFormat::Calendar, ModelKind::Spatial) => {
            return Err("calendar reports need a temporal model".into());
        }
    }
    let mut manifest = RunManifest::new(
        "report",
        serde_json::json!({
            "model": args.model.display().to_string(),
            "format": format!("{:?}", args.format).to_lowercase(),
            "focus": args.focus,
            "coords": args.coords.as_ref().map(|p| p.display().to_string()),
            "epsilon": epsilon,
            "bits": args.bits,
            "schema": args.schema.config_json(),
        }),
    );
    manifest.corpus_digest = Some(corpus.digest());
    manifest.add_output(&args.output);
    write_manifest(&mut manifest, start, args.manifest.as_ref(), &args.output)
}

fn cmd_synth(args: SynthArgs, file_cfg: &FileConfig) -> Result<(), String> {
    let start = Instant::now();
    let seed = config::resolve(args.seed, file_cfg, "seed", 0u64)?;
    let corpus = match args.kind {
        Kind::Spatial => {
            let dests = args.dests.ok_or("--dests is required for spatial synthesis")?;
            let cfg = SpatialSynthConfig {
                sources: args.sources,
                destinations: dests,
                source_blocks: args.blocks,
                dest_blocks: args.dest_blocks.unwrap_or(args.blocks),
                calls: args.calls,
                noise: args.noise,
                seed,
            };
            synth_spatial(&cfg).map_err(|e| e.to_string())?.corpus
        }
        Kind::Temporal => {
            let days = args.days.ok_or("--days is required for temporal synthesis")?;
            let cfg = TemporalSynthConfig {
                sources: args.sources,
                days,
                source_blocks: args.blocks,
                segments: args.segments.unwrap_or(args.blocks),
                calls: args.calls,
                noise: args.noise,
                seed,
            };
            synth_temporal(&cfg).map_err(|e| e.to_string())?.corpus
        }
    };
    let file = std::fs::File::create(&args.output)
        .map_err(|e| format!("cannot write {}: {e}", args.output.display()))?;
    corpus.export_csv(file).map_err(|e| e.to_string())?;
    println!(
        "sources={} destinations={} days={} calls={} digest={}",
        corpus.n_sources(),
        corpus.n_destinations(),
        if corpus.has_times() { corpus.n_times() } else { 0 },
        corpus.total(),
        corpus.digest()
    );
    let mut manifest = RunManifest::new(
        "synth",
        serde_json::json!({
            "kind": format!("{:?}", args.kind).to_lowercase(),
            "sources": args.sources,
            "dests": args.dests,
            "days": args.days,
            "blocks": args.blocks,
            "dest_blocks": args.dest_blocks,
            "segments": args.segments,
            "calls": args.calls,
            "noise": args.noise,
            "seed": seed,
        }),
    );
    manifest.corpus_digest = Some(corpus.digest());
    manifest.add_output(&args.output);
    write_manifest(&mut manifest, start, args.manifest.as_ref(), &args.output)
}

