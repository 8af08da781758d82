use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use editgrpo_core::edit::edit_seeded;
use editgrpo_core::io::{metric_csv, parse_metric_csv, read_corpus, to_jsonl, write_corpus};
use editgrpo_core::plot::{line_chart_svg, Series};
use editgrpo_core::stats::median;
use editgrpo_core::trainer::{corpus_splits, evaluate, train, TrainOutcome};
use editgrpo_core::world::make_corpus;
use editgrpo_core::{
    build_default_ontology, wilcoxon_signed_rank, EditConfig, ExtractionMode, Ontology,
    PolicyParams, RunConfig, Variant,
};

mod sweep;

#[derive(Parser)]
#[command(
    name = "editgrpo",
    version,
    about = "EditGRPO experiments on a synthetic report world"
)]
struct Cli {
    /// Worker threads for rollout groups; 1 is the deterministic reference.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// `key=value` override; dotted paths or unique field names.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run SFT and/or RL and write metrics, traces and checkpoints.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Start from this checkpoint instead of zeros.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Greedy-decode a checkpoint on the eval split (or a corpus file).
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Per-case JSONL destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Edit one report toward a reference and print the trace.
    Edit {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long, default_value_t = 0.6)]
        tau: f64,
        #[arg(long, env = "EDITGRPO_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        max_edits: Option<usize>,
        /// Surface identity instead of embedding cosine.
        #[arg(long)]
        exact: bool,
    },
    /// One EditGRPO run per tau and seed, plus rule histograms.
    SweepTau {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.3, 0.6, 0.9])]
        taus: Vec<f64>,
        /// Defaults to the configured trainer seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 200)]
        probe_size: usize,
    },
    /// Wilcoxon signed-rank test between two per-case JSONL files.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value = "composite")]
        metric: String,
    },
    /// Render metric-vs-step SVG from metric CSVs.
    Plot {
        #[arg(long = "csv", required = true)]
        csvs: Vec<PathBuf>,
        #[arg(long, default_value = "mean_reward")]
        metric: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the configured world's corpus as JSONL.
    GenWorld {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

/// A config path that does not exist; reported with exit code 2.
#[derive(Debug)]
struct MissingConfig(PathBuf);

impl std::fmt::Display for MissingConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config file {} not found", self.0.display())
    }
}

impl std::error::Error for MissingConfig {}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var("EDITGRPO_SEED") {
        Ok(s) => Ok(Some(s.trim().parse().with_context(|| {
            format!("EDITGRPO_SEED={s:?} is not an integer")
        })?)),
        Err(_) => Ok(None),
    }
}

fn load_config(args: &ConfigArgs, threads: Option<usize>) -> Result<RunConfig> {
    if !args.config.is_file() {
        return Err(MissingConfig(args.config.clone()).into());
    }
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut run = RunConfig::from_json_with(&text, &args.sets, env_seed()?)
        .with_context(|| format!("invalid config {}", args.config.display()))?;
    if let Some(t) = threads {
        run.trainer.threads = t;
        run.validate()?;
    }
    Ok(run)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub(crate) fn ontology_for(run: &RunConfig) -> Ontology {
    build_default_ontology(run.ontology_seed)
}

/// Writes every artifact of one run into `dir`.
pub(crate) fn write_run(dir: &Path, run: &RunConfig, out: &TrainOutcome) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write(&dir.join("resolved_config.json"), run.to_json()? + "\n")?;
    write(&dir.join("metrics.csv"), metric_csv(&out.metrics))?;
    write(&dir.join("traces.jsonl"), to_jsonl(&out.traces)?)?;
    write(&dir.join("eval_cases.jsonl"), to_jsonl(&out.eval.per_case)?)?;
    let summary = serde_json::json!({
        "variant": run.trainer.variant.name(),
        "sft_losses": out.sft_losses,
        "eval": out.eval.metrics,
    });
    write(
        &dir.join("eval.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    for (step, params) in &out.checkpoints {
        write(
            &dir.join(format!("ckpt_step{step}.json")),
            params.to_json()?,
        )?;
    }
    Ok(())
}

fn cmd_train(args: &ConfigArgs, init: Option<&Path>, threads: Option<usize>) -> Result<()> {
    let run = load_config(args, threads)?;
    eprintln!("resolved config:\n{}", run.to_json()?);
    let o = ontology_for(&run);
    let init = init
        .map(|p| PolicyParams::from_json(&read_text(p)?).context("checkpoint"))
        .transpose()?;
    let out = train(&run, &o, init)?;
    write_run(&run.output_dir, &run, &out)?;
    let m = &out.eval.metrics;
    println!(
        "{} composite={:.4} macro14={:.4} micro14={:.4} no_finding={:.3} -> {}",
        run.trainer.variant.name(),
        m.composite,
        m.chexbert_macro_14,
        m.chexbert_micro_14,
        m.no_finding_frac,
        run.output_dir.display()
    );
    Ok(())
}

fn cmd_eval(
    args: &ConfigArgs,
    checkpoint: &Path,
    corpus: Option<&Path>,
    out: Option<&Path>,
    threads: Option<usize>,
) -> Result<()> {
    let run = load_config(args, threads)?;
    let o = ontology_for(&run);
    let params = PolicyParams::from_json(&read_text(checkpoint)?).context("checkpoint")?;
    let cases = match corpus {
        Some(p) => read_corpus(p).with_context(|| format!("reading corpus {}", p.display()))?,
        None => corpus_splits(&run.world, &run.trainer, &o)?.1,
    };
    let report = evaluate(
        &params,
        &cases,
        &o,
        run.trainer.max_len,
        &run.effective_rewards(),
    )?;
    if let Some(p) = out {
        write(p, to_jsonl(&report.per_case)?)?;
    }
    println!("{}", serde_json::to_string_pretty(&report.metrics)?);
    Ok(())
}

fn cmd_edit(
    x: &Path,
    y: &Path,
    tau: f64,
    seed: u64,
    max_edits: Option<usize>,
    exact: bool,
) -> Result<()> {
    let cfg = EditConfig {
        tau,
        max_edits,
        mode: if exact {
            ExtractionMode::ExactMatch
        } else {
            ExtractionMode::EmbeddingMatch
        },
        rng_seed: seed,
    };
    cfg.validate()?;
    let o = build_default_ontology(0);
    let out = edit_seeded(read_text(x)?.trim(), read_text(y)?.trim(), &cfg, &o);
    println!("{}", out.edited_text);
    println!("{}", serde_json::to_string(&out.trace)?);
    Ok(())
}

fn metric_of(v: &serde_json::Value, metric: &str) -> Option<f64> {
    v.get(metric)
        .or_else(|| v.get("reward").and_then(|r| r.get(metric)))
        .and_then(|x| x.as_f64())
}

fn read_metric(path: &Path, metric: &str) -> Result<Vec<f64>> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            let v: serde_json::Value =
                serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), n + 1))?;
            metric_of(&v, metric)
                .with_context(|| format!("{}:{}: no numeric {metric:?}", path.display(), n + 1))
        })
        .collect()
}

fn cmd_compare(a: &Path, b: &Path, metric: &str) -> Result<()> {
    let xa = read_metric(a, metric)?;
    let xb = read_metric(b, metric)?;
    if xa.len() != xb.len() {
        bail!(
            "{} has {} records, {} has {}",
            a.display(),
            xa.len(),
            b.display(),
            xb.len()
        );
    }
    let w = wilcoxon_signed_rank(&xa, &xb)?;
    let out = serde_json::json!({
        "metric": metric,
        "n": xa.len(),
        "median_a": median(&xa),
        "median_b": median(&xb),
        "wilcoxon": w,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn cmd_plot(csvs: &[PathBuf], metric: &str, out: &Path) -> Result<()> {
    let mut series = Vec::new();
    for path in csvs {
        let rows = parse_metric_csv(&read_text(path)?)
            .with_context(|| format!("parsing {}", path.display()))?;
        let points = rows
            .iter()
            .map(|r| r.value(metric).map(|v| (r.step as f64, v)))
            .collect::<Option<Vec<_>>>()
            .with_context(|| format!("unknown metric column {metric:?}"))?;
        let variant = rows.first().map(|r| r.variant.as_str()).unwrap_or("empty");
        let stem = path
            .parent()
            .and_then(|p| p.file_name())
            .map(|s| s.to_string_lossy().into_owned());
        let name = match stem {
            Some(s) if !s.is_empty() => format!("{variant} ({s})"),
            _ => variant.to_string(),
        };
        series.push(Series { name, points });
    }
    write(
        out,
        line_chart_svg(&format!("{metric} by step"), metric, &series),
    )
}

fn cmd_gen_world(args: &ConfigArgs, out: &Path) -> Result<()> {
    let run = load_config(args, None)?;
    let o = ontology_for(&run);
    let corpus = make_corpus(&run.world, &o, run.world.n_cases)?;
    write_corpus(out, &corpus).with_context(|| format!("writing {}", out.display()))?;
    println!("{} cases -> {}", corpus.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Train { cfg, init } => cmd_train(cfg, init.as_deref(), cli.threads),
        Command::Eval {
            cfg,
            checkpoint,
            corpus,
            out,
        } => cmd_eval(
            cfg,
            checkpoint,
            corpus.as_deref(),
            out.as_deref(),
            cli.threads,
        ),
        Command::Edit {
            x,
            y,
            tau,
            seed,
            max_edits,
            exact,
        } => cmd_edit(x, y, *tau, *seed, *max_edits, *exact),
        Command::SweepTau {
            cfg,
            taus,
            seeds,
            probe_size,
        } => {
            let mut run = load_config(cfg, cli.threads)?;
            run.trainer.variant = Variant::EditGrpo;
            sweep::sweep_tau(&run, taus, seeds, *probe_size)
        }
        Command::Compare { a, b, metric } => cmd_compare(a, b, metric),
        Command::Plot { csvs, metric, out } => cmd_plot(csvs, metric, out),
        Command::GenWorld { cfg, out } => cmd_gen_world(cfg, out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<MissingConfig>() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
