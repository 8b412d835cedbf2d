use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use eventspike::baseline::spike_frequency;
use eventspike::correlation::{export_features, lead_time_cdf, write_features_csv, RegionMap, SpikeEventMatch};
use eventspike::harness::report::{write_coverage_csv, write_lead_time_csv, write_spike_frequency_csv};
use eventspike::harness::{coverage_summary, run_pipeline, run_stages, write_synthetic, PipelineConfig, PlantLabel, RunReport, Scenario, Stage};
use eventspike::model::{EventAbstraction, SpikeRecord};
use eventspike::store::{load_live, read_jsonl};

#[derive(Parser)]
#[command(name = "eventspike", version, about = "Detect traffic spikes and explain them with events announced online")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic scenario (traffic, corpus, fixtures, pipeline config).
    Synth {
        /// Scenario JSON; the built-in scenario when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run every stage from scratch.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fetch, filter and clean discussion threads into records.jsonl.
    Ingest {
        #[arg(long)]
        config: PathBuf,
    },
    /// Extract events from records and infer their metadata.
    InferEvents {
        #[arg(long)]
        config: PathBuf,
    },
    /// Embed events, merge duplicates and re-infer merged events.
    Dedup {
        #[arg(long)]
        config: PathBuf,
        /// Cosine similarity at which same-date events merge.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Assign multi-level semantic signatures.
    Cluster {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated k per level, coarse to fine.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<usize>>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score traffic against the rolling baseline and extract spikes.
    DetectSpikes {
        #[arg(long)]
        config: PathBuf,
    },
    /// Match spikes to events.
    Correlate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        window_hours: Option<f64>,
    },
    /// Print a report computed from the artifacts of a run.
    Report {
        #[arg(value_enum)]
        kind: ReportKind,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Write the forecaster feature table.
    ExportFeatures {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportKind {
    Coverage,
    LeadTime,
    SpikeFrequency,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}

/// The error chain, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !msg.contains(&c) {
            msg.push_str(": ");
            msg.push_str(&c);
        }
    }
    msg
}

fn load_config(path: &Path) -> Result<PipelineConfig> {
    PipelineConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn stages(config: &Path, stages: &[Stage]) -> Result<()> {
    stages_with(config, stages, |_| {})
}

fn stages_with(config: &Path, stages: &[Stage], edit: impl FnOnce(&mut PipelineConfig)) -> Result<()> {
    let mut cfg = load_config(config)?;
    edit(&mut cfg);
    cfg.validate()?;
    let report = run_stages(&cfg, None, stages)?;
    print_summary(&report);
    Ok(())
}

fn print_summary(report: &RunReport) {
    for (k, v) in &report.counts {
        println!("{k}: {v}");
    }
    for (stage, t) in &report.timings {
        log::info!("{stage} took {t:?}");
    }
    if !report.failures.is_empty() {
        println!("non-fatal failures: {} (see run_report.json)", report.failures.len());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { scenario, out_dir } => {
            let s = match scenario {
                Some(p) => Scenario::load(&p).with_context(|| format!("loading {}", p.display()))?,
                None => Scenario::default_synthetic(),
            };
            let out = write_synthetic(&s, &out_dir)?;
            println!("wrote scenario to {}; run with --config {}", out.dir.display(), out.pipeline.display());
        }
        Command::Run { config } => {
            let cfg = load_config(&config)?;
            let report = run_pipeline(&cfg)?;
            print_summary(&report);
            if let Some(c) = report.coverage.as_ref().and_then(|c| c.coverage) {
                println!("coverage of planted events: {c:.3}");
            }
        }
        Command::Ingest { config } => stages(&config, &[Stage::Ingest])?,
        Command::InferEvents { config } => stages(&config, &[Stage::Extract, Stage::Enrich])?,
        Command::Dedup { config, threshold } => stages_with(&config, &[Stage::Embed, Stage::Dedup, Stage::Reinfer], |c| {
            if let Some(t) = threshold {
                c.dedup_threshold = t;
            }
        })?,
        Command::Cluster { config, levels, seed } => stages_with(&config, &[Stage::Cluster], |c| {
            if let Some(l) = levels {
                c.cluster.levels = l;
            }
            if let Some(s) = seed {
                c.cluster.seed = s;
            }
        })?,
        Command::DetectSpikes { config } => stages(&config, &[Stage::Detect])?,
        Command::Correlate { config, window_hours } => stages_with(&config, &[Stage::Correlate], |c| {
            if let Some(w) = window_hours {
                c.matching.window_hours = w;
            }
        })?,
        Command::Report { kind, config, format } => report(kind, &load_config(&config)?, format)?,
        Command::ExportFeatures { config, out } => {
            let cfg = load_config(&config)?;
            let events: Vec<EventAbstraction> = load_live(cfg.out_path("events.jsonl"))?;
            let spikes: Vec<SpikeRecord> = load_live(cfg.out_path("spikes.jsonl"))?;
            let regions: RegionMap = match &cfg.regions {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(cfg.resolve(p))?)?,
                None => RegionMap::new(),
            };
            let mut traffic = eventspike::traffic::read_traffic_csv(cfg.resolve(&cfg.traffic))?;
            traffic.sort_by(|a, b| a.network_id.cmp(&b.network_id));
            let b = cfg.baseline;
            let zs = traffic
                .iter()
                .map(|s| eventspike::baseline::score_rolling(s, b.window_weeks, b.bin_minutes, b.std_floor_fraction))
                .collect::<Result<Vec<_>, _>>()?;
            let rows = export_features(&events, &spikes, &zs, &regions, &cfg.features)?;
            let levels = cfg.cluster.levels.len();
            match out {
                Some(p) => write_features_csv(BufWriter::new(File::create(&p).with_context(|| p.display().to_string())?), &rows, levels)?,
                None => write_features_csv(io::stdout().lock(), &rows, levels)?,
            }
        }
    }
    Ok(())
}

fn report(kind: ReportKind, cfg: &PipelineConfig, format: Format) -> Result<()> {
    let mut out = io::stdout().lock();
    let spikes: Vec<SpikeRecord> = load_live(cfg.out_path("spikes.jsonl"))?;
    match kind {
        ReportKind::Coverage => {
            let Some(labels) = &cfg.labels else { bail!("coverage needs `labels` in the pipeline configuration") };
            let plants: Vec<PlantLabel> = read_jsonl(cfg.resolve(labels))?;
            let events: Vec<EventAbstraction> = load_live(cfg.out_path("events.jsonl"))?;
            let matches: Vec<SpikeEventMatch> = read_jsonl(cfg.out_path("matches.jsonl")).context("matches.jsonl (run correlate first)")?;
            let summary = coverage_summary(&plants, &spikes, &matches, &events);
            match format {
                Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&summary)?)?,
                Format::Csv => write_coverage_csv(out, &summary.spikes)?,
            }
        }
        ReportKind::LeadTime => {
            let events: Vec<EventAbstraction> = load_live(cfg.out_path("events.jsonl"))?;
            let lead = lead_time_cdf(&events, &cfg.lead_time);
            match format {
                Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&lead)?)?,
                Format::Csv => write_lead_time_csv(out, &lead)?,
            }
        }
        ReportKind::SpikeFrequency => {
            let rows = spike_frequency(&spikes, &cfg.spike_frequency_bins)?;
            match format {
                Format::Json => {
                    let v: Vec<serde_json::Value> =
                        rows.iter().map(|(z, n)| serde_json::json!({"z_threshold": z, "spike_count": n})).collect();
                    writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?;
                }
                Format::Csv => write_spike_frequency_csv(out, &rows)?,
            }
        }
    }
    Ok(())
}
