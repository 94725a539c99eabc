//! Command-line front end.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::citation::{parse_citations, visibility_scores};
use crate::pipeline::{
    ablate, export_report, probe_topic, run_with_session, AblationResult, BackendKind, PipelineError, ProbeResult,
    RunConfig, RunRecord, Session,
};
use crate::moo::SelectionPolicy;

#[derive(Debug, Parser)]
#[command(name = "featgeo", version, about = "Feature-level page optimization for generative-engine visibility")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the optimizer seed and the sim world seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `live` or `sim`.
    #[arg(long, global = true)]
    pub backend: Option<BackendKind>,
    /// Final selection policy: max_visibility, max_quality or knee.
    #[arg(long, global = true)]
    pub policy: Option<SelectionPolicy>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Replace existing output.
    #[arg(long, global = true)]
    pub overwrite: bool,
    /// Parallel evaluations per generation.
    #[arg(long, global = true)]
    pub concurrency: Option<usize>,
    /// More logging; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract the ad strategy, queries and exemplar feature vectors.
    Probe,
    /// Probe, then optimize and write a run directory.
    Optimize,
    /// Compare the baseline against runs with features pinned at their minimum.
    Ablate(AblateArgs),
    /// Optimize under the bundled simulated engine.
    Simulate,
    /// Citation metrics of a saved answer.
    Score(ScoreArgs),
    /// Export tables from a run directory.
    Report {
        dir: PathBuf,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct AblateArgs {
    #[arg(long)]
    pub feature: Option<String>,
    #[arg(long)]
    pub all: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub answer: PathBuf,
    #[arg(long)]
    pub sources: usize,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn load_config(g: &GlobalArgs, bundled: bool) -> Result<RunConfig, PipelineError> {
    let mut cfg = match (&g.config, bundled) {
        (Some(path), false) => RunConfig::load(path)?,
        (None, true) | (Some(_), true) => RunConfig::bundled_sim(),
        (None, false) => return Err(PipelineError::Config("--config is required for this command".into())),
    };
    if let Some(seed) = g.seed {
        cfg.ga.seed = seed;
        if let Some(sim) = cfg.sim.as_mut() {
            sim.seed = seed;
        }
    }
    if let Some(b) = g.backend {
        cfg.backend = b;
    }
    if let Some(p) = g.policy {
        cfg.final_policy = p;
    }
    if let Some(c) = g.concurrency {
        cfg.concurrency = c;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(g: &GlobalArgs, cfg: &RunConfig, name: &str) -> PathBuf {
    g.out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(format!("runs/{name}-seed{}", cfg.ga.seed)))
}

fn summarize(record: &RunRecord, dir: &Path) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "run directory: {}", dir.display());
    if let Some(hv) = record.outcome.trace.last() {
        let _ = writeln!(s, "archive: {} solutions, hypervolume {hv:.6}", record.outcome.front.len());
    }
    for f in &record.finals {
        let o = f.individual.objectives();
        let _ = writeln!(s, "{}: vis {:.2}, qual {:.2}", f.policy, o.vis, o.qual);
    }
    s
}

fn optimize(g: &GlobalArgs, cfg: &RunConfig, name: &str) -> Result<(), PipelineError> {
    let dir = out_dir(g, cfg, name);
    let session = Session::open(cfg)?;
    let record = run_with_session(&session, None, &[])?;
    record.write(&dir, g.overwrite)?;
    print!("{}", summarize(&record, &dir));
    record.ensure_complete()
}

fn ablation_table(rows: &[AblationResult]) -> String {
    let mut s = String::from("feature\tseed\tbaseline_vis\tablated_vis\tdelta\tbaseline_qual\tablated_qual\tquality_delta\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
            r.feature, r.seed, r.baseline_vis, r.ablated_vis, r.delta, r.baseline_qual, r.ablated_qual, r.quality_delta
        );
    }
    s
}

fn run_ablate(g: &GlobalArgs, a: &AblateArgs) -> Result<(), PipelineError> {
    let catalog = crate::features::catalog_default();
    let keys: Vec<&str> = match &a.feature {
        Some(k) => vec![k.as_str()],
        None => catalog.keys().collect(),
    };
    for k in &keys {
        crate::pipeline::feature_index(&catalog, k)?;
    }
    let cfg = load_config(g, false)?;
    let dir = out_dir(g, &cfg, "ablate");
    if !g.overwrite && dir.read_dir().map(|mut d| d.next().is_some()).unwrap_or(false) {
        return Err(PipelineError::Exists(dir));
    }
    let (baseline, runs) = ablate(&cfg, &keys)?;
    baseline.write(&dir.join("baseline"), true)?;
    for (r, rec) in &runs {
        rec.write(&dir.join(format!("ablate-{}", r.feature)), true)?;
    }
    let rows: Vec<AblationResult> = runs.into_iter().map(|(r, _)| r).collect();
    let table = ablation_table(&rows);
    let path = dir.join("ablation.tsv");
    fs::write(&path, &table).map_err(|e| PipelineError::io(&path, e))?;
    print!("{table}");
    Ok(())
}

fn run_probe(g: &GlobalArgs) -> Result<(), PipelineError> {
    let cfg = load_config(g, false)?;
    let session = Session::open(&cfg)?;
    let client = session.client();
    let mut probe = ProbeResult::default();
    let result = probe_topic(&session, &client, &mut probe);
    let json = serde_json::to_string_pretty(&probe).expect("probe serializes") + "\n";
    match &g.out {
        Some(dir) => {
            let path = dir.join("probe.json");
            if path.exists() && !g.overwrite {
                return Err(PipelineError::Exists(path));
            }
            fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
            fs::write(&path, json).map_err(|e| PipelineError::io(&path, e))?;
            println!("probe written to {}", path.display());
        }
        None => print!("{json}"),
    }
    result
}

/// One line per source: `[k] word_k=.. pos_k=.. vis_k=..`.
pub fn score_lines(answer: &str, sources: usize) -> Result<String, PipelineError> {
    let parse = parse_citations(answer, sources)?;
    let scores = visibility_scores(&parse);
    let mut s = String::new();
    for k in 1..=sources {
        let v = scores.source(k);
        let _ = writeln!(s, "[{k}] word_{k}={:.4} pos_{k}={:.4} vis_{k}={:.4}", v.word, v.pos, v.vis);
    }
    Ok(s)
}

fn dispatch(cli: &Cli) -> Result<(), PipelineError> {
    let g = &cli.global;
    match &cli.command {
        Command::Probe => run_probe(g),
        Command::Optimize => {
            let cfg = load_config(g, false)?;
            optimize(g, &cfg, "optimize")
        }
        Command::Simulate => {
            let cfg = load_config(g, true)?;
            optimize(g, &cfg, "simulate")
        }
        Command::Ablate(a) => run_ablate(g, a),
        Command::Score(s) => {
            if s.sources == 0 {
                return Err(PipelineError::Config("--sources must be at least 1".into()));
            }
            let text = fs::read_to_string(&s.answer).map_err(|e| PipelineError::io(&s.answer, e))?;
            print!("{}", score_lines(&text, s.sources)?);
            Ok(())
        }
        Command::Report { dir } => {
            let out = export_report(dir, g.overwrite)?;
            println!("report written to {}", out.display());
            Ok(())
        }
    }
}

/// Parses `args` and runs the command. Returns the process exit status:
/// 0 success, 1 validation, 2 engine, 3 integrity.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging(cli.global.verbose);
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
