//! `rtiac`: train models, fit pointing estimators, run simulations, serve
//! live sessions and replay their logs.

mod serve;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rtiac::learner::{fit_parametric, DensityEstimator, ParametricEstimator, Symmetry, TrainingPair};
use rtiac::session::{replay, SessionLog};
use rtiac::sim::{median, phrases, sweep, targets, write_csv, SweepSpec, UserModel, TRAINING_SIGMA2};
use rtiac::{Alphabet, EngineKind, LanguageModel, LayoutKind, NGramModel, SessionConfig};

/// Length of sampled targets when no phrase corpus is given.
const TARGET_LEN: usize = 25;
const PHRASE_SEED: u64 = 7;

#[derive(Parser)]
#[command(name = "rtiac", version, about = "Real-time inverse arithmetic coding text entry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count a character n-gram model from a text corpus, one string per line.
    TrainModel {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 2)]
        order: usize,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the pointing estimator from a directory of session logs.
    Learn {
        #[arg(long)]
        logs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also score a KDE conditional on held-out pairs.
        #[arg(long)]
        kde_eval: bool,
        /// Model file to use instead of the one named in each log.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run simulated users and write one CSV row per session.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "rtiac")]
        engine: EngineKind,
        #[arg(long, default_value = "linear")]
        layout: LayoutKind,
        /// Cursor noise levels, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        noise: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        /// Tick budget per session.
        #[arg(long, default_value_t = 5400)]
        ticks: u64,
        #[arg(long)]
        csv: PathBuf,
        /// Draw target phrases from this text instead of sampling the model.
        #[arg(long)]
        phrases: Option<PathBuf>,
        /// Prompted sessions used to bootstrap the estimator.
        #[arg(long, default_value_t = 10)]
        training: usize,
        #[arg(long, default_value_t = 2)]
        rounds: usize,
        /// Press timing jitter of the simulated user, seconds.
        #[arg(long, default_value_t = 0.1)]
        sigma_t: f64,
        /// Indicator speed for the scan layout.
        #[arg(long)]
        scan_speed: Option<f64>,
    },
    /// Host live sessions over WebSocket on localhost.
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        estimator: Option<PathBuf>,
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value_t = 30.0)]
        tick_rate: f64,
        /// Layout used when the client hello does not pick one.
        #[arg(long, default_value = "linear")]
        layout: LayoutKind,
    },
    /// Re-run a session log and check it reproduces the logged commits.
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// Model file to use instead of the one named in the log.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::TrainModel { corpus, order, alpha, out } => train_model(&corpus, order, alpha, &out),
        Command::Learn { logs, out, kde_eval, model } => learn(&logs, &out, kde_eval, model.as_deref()),
        Command::Simulate { model, engine, layout, noise, seeds, ticks, csv, phrases, training, rounds, sigma_t, scan_speed } => {
            let sim = Simulation { engine, layout, noise, seeds, ticks, training, rounds, sigma_t, scan_speed };
            simulate(&model, &sim, phrases.as_deref(), &csv)
        }
        Command::Serve { model, estimator, port, tick_rate, layout } => {
            let estimator = estimator.map(ParametricEstimator::load).transpose().context("loading estimator")?;
            let mut base = SessionConfig { tick_rate, layout, ..SessionConfig::default() };
            if estimator.is_none() {
                base.adapter.sigma2_default = TRAINING_SIGMA2;
            }
            base.validate()?;
            let opts = serve::Options {
                model: load_model(&model)?,
                model_path: model,
                estimator,
                base,
                log_dir: std::env::var_os("RTIAC_LOG_DIR").map(PathBuf::from),
            };
            let listener = TcpListener::bind(("127.0.0.1", port)).with_context(|| format!("binding port {port}"))?;
            serve::run(listener, Arc::new(opts))
        }
        Command::Replay { log, model } => replay_log(&log, model.as_deref()),
    }
}

fn load_model(path: &Path) -> Result<Arc<dyn LanguageModel>> {
    let m = NGramModel::load(path).with_context(|| format!("loading model {}", path.display()))?;
    Ok(Arc::new(m))
}

fn train_model(corpus: &Path, order: usize, alpha: f64, out: &Path) -> Result<()> {
    let f = File::open(corpus).with_context(|| format!("opening {}", corpus.display()))?;
    let lines = BufReader::new(f).lines().map(|l| l.map(|l| l.to_lowercase())).collect::<std::io::Result<Vec<_>>>()?;
    let (model, report) = NGramModel::ingest(&lines, Alphabet::lowercase_latin(), order, alpha)?;
    model.save(out)?;
    println!(
        "{} lines, {} characters kept, {} dropped, {} contexts -> {}",
        report.lines,
        report.kept_chars,
        report.dropped_chars,
        model.context_count(),
        out.display()
    );
    if !report.dropped.is_empty() {
        let top: Vec<String> = report.dropped.iter().take(10).map(|(c, n)| format!("{c:?}x{n}")).collect();
        log::info!("dropped characters: {}", top.join(" "));
    }
    Ok(())
}

fn log_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    Ok(files)
}

fn learn(dir: &Path, out: &Path, kde_eval: bool, model: Option<&Path>) -> Result<()> {
    let fixed = model.map(load_model).transpose()?;
    let mut by_path: HashMap<String, Arc<dyn LanguageModel>> = HashMap::new();
    let mut pairs: Vec<TrainingPair> = Vec::new();
    let files = log_files(dir)?;
    for path in &files {
        let log = SessionLog::open(path).with_context(|| format!("reading {}", path.display()))?;
        let model = match (&fixed, &log.header.model_path) {
            (Some(m), _) => m.clone(),
            (None, Some(p)) if by_path.contains_key(p) => by_path[p].clone(),
            (None, Some(p)) => {
                let m = log.load_model().with_context(|| format!("model for {}", path.display()))?;
                by_path.insert(p.clone(), m.clone());
                m
            }
            (None, None) => bail!("{} names no model; pass --model", path.display()),
        };
        let got = rtiac::learner::record_pairs(&log, model)?;
        log::info!("{}: {} pairs", path.display(), got.len());
        pairs.extend(got);
    }
    let samples: Vec<_> = pairs.iter().map(TrainingPair::sample).collect();
    let est = fit_parametric(&samples, Symmetry::None, 0.0).context("fitting estimator")?;
    est.save(out)?;
    let var = median(pairs.iter().map(|p| est.variance(&p.features)));
    println!("{} logs, {} pairs, median kernel variance {var:.5} -> {}", files.len(), pairs.len(), out.display());
    if kde_eval {
        // a constant feature has no bandwidth and carries nothing
        let keep: Vec<usize> = (0..est.dim())
            .filter(|&j| pairs.iter().any(|p| p.features[j] != pairs[0].features[j]))
            .collect();
        if keep.len() < est.dim() {
            let names = &est.feature_spec.names;
            let dropped: Vec<&str> =
                (0..est.dim()).filter(|j| !keep.contains(j)).map(|j| names[j].as_str()).collect();
            println!("kde ignores constant features: {}", dropped.join(", "));
        }
        let project = |p: &TrainingPair| keep.iter().map(|&j| p.features[j]).collect::<Vec<_>>();
        let (held, fit): (Vec<_>, Vec<_>) = pairs.iter().enumerate().partition(|(i, _)| i % 5 == 0);
        let kde = DensityEstimator::from_samples(fit.iter().map(|(_, p)| (p.y_final, project(p))))?;
        let grid = rtiac::learner::kde::GRID;
        let mut total = 0.0;
        for (_, p) in &held {
            let c = kde.conditional(&project(p))?;
            let g = ((p.y_final * grid as f64) as usize).min(grid - 1);
            total += c[g].max(f64::MIN_POSITIVE).ln();
        }
        println!(
            "kde held-out log density {:.4} nats/pair over {} pairs (uniform scores 0)",
            total / held.len().max(1) as f64,
            held.len()
        );
    }
    Ok(())
}

struct Simulation {
    engine: EngineKind,
    layout: LayoutKind,
    noise: Vec<f64>,
    seeds: usize,
    ticks: u64,
    training: usize,
    rounds: usize,
    sigma_t: f64,
    scan_speed: Option<f64>,
}

fn simulate(model_path: &Path, sim: &Simulation, phrase_file: Option<&Path>, csv: &Path) -> Result<()> {
    let model = load_model(model_path)?;
    let n = sim.seeds + sim.training;
    let texts = phrase_file
        .map(|p| std::fs::read_to_string(p).map(|t| phrases(&t.to_lowercase(), n, TARGET_LEN, PHRASE_SEED)))
        .transpose()?;
    let all = targets(model.as_ref(), texts.as_deref(), n, TARGET_LEN)?;
    let (test, train) = all.split_at(sim.seeds);
    let mut base = SessionConfig::default();
    if let Some(s) = sim.scan_speed {
        base.scan.speed = s;
    }
    // the timed adapter needs no fitted estimator
    let train = if sim.layout == LayoutKind::Scan { &[][..] } else { train };
    if train.is_empty() {
        base.adapter.sigma2_default = TRAINING_SIGMA2;
    }
    let spec = SweepSpec {
        engines: vec![sim.engine],
        layout: sim.layout,
        noise: sim.noise.clone(),
        seeds: sim.seeds,
        max_ticks: sim.ticks,
        user: UserModel { sigma_t: sim.sigma_t, ..UserModel::default() },
        rounds: sim.rounds,
    };
    let recs = sweep(model, &base, &spec, test, train)?;
    write_csv(&recs, BufWriter::new(File::create(csv).with_context(|| format!("creating {}", csv.display()))?))?;
    for &s in &sim.noise {
        let rows: Vec<_> = recs.iter().filter(|r| r.sigma_u == s).collect();
        println!(
            "{} {} sigma_u={s}: median {:.2} chars/min, {:.1} errors, {}/{} complete",
            sim.engine,
            sim.layout,
            median(rows.iter().map(|r| r.chars_per_min)),
            median(rows.iter().map(|r| r.errors as f64)),
            rows.iter().filter(|r| r.complete).count(),
            rows.len()
        );
    }
    Ok(())
}

fn replay_log(path: &Path, model: Option<&Path>) -> Result<()> {
    let log = SessionLog::open(path).with_context(|| format!("reading {}", path.display()))?;
    let model = match model {
        Some(p) => load_model(p)?,
        None => log.load_model()?,
    };
    let r = replay(&log, model)?;
    println!("ticks {}", r.ticks);
    println!("commits {} (logged {})", r.commits.len(), r.logged_commits.len());
    for c in &r.commits {
        println!("  {:>6} {} {:?}", c.tick, if c.undo { "undo  " } else { "commit" }, c.text);
    }
    println!("max mass difference {:.3e}", r.max_mass_diff);
    println!("final text {:?}", r.final_text);
    if r.truncated {
        println!("log was truncated; replayed the surviving ticks");
    }
    if !r.commits_match() || r.max_mass_diff > 1e-9 {
        bail!("replay diverged from the log");
    }
    println!("replay matches");
    Ok(())
}
