use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use subcluster::eval::{evaluate, roc_curve};
use subcluster::harness::{
    knn_experiment, run_experiment, sweep_clusters, ExperimentConfig, KnnExperimentConfig, ResultRow,
};
use subcluster::scoring::ScoreReport;
use subcluster::{Error, Result};

#[derive(Parser)]
#[command(
    name = "subcluster",
    version,
    about = "Sub-cluster classifier anomaly detection experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `out`, then `./out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster, train, score and evaluate every configured k.
    Run(RunArgs),
    /// Like `run`, plus a sweep table and an AUROC-vs-k plot.
    Sweep(RunArgs),
    /// kNN scores over precomputed embeddings, for every K and metric.
    KnnScore {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// AUROC (and ROC curves) of an existing score dump.
    Eval {
        /// Score CSV with columns sample_index,role,method,score.
        #[arg(long)]
        scores: PathBuf,
        /// Writes eval.csv and one roc_<method>.csv per method here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) | Error::Parameter(_) | Error::Protocol(_) => 2,
        Error::Diverged { .. } => 4,
        _ => 3,
    }
}

fn load(args: &RunArgs) -> Result<(ExperimentConfig, PathBuf)> {
    let mut config = ExperimentConfig::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out = args
        .out
        .clone()
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    config.out = Some(out.clone());
    Ok((config, out))
}

fn print_rows(rows: &[ResultRow]) {
    println!(
        "{:>6} {:>4} {:<20} {:>8} {:>8} {:>9}",
        "seed", "k", "method", "auroc", "normal", "anomaly"
    );
    for r in rows {
        println!(
            "{:>6} {:>4} {:<20} {:>8.4} {:>8} {:>9}",
            r.seed, r.k, r.method, r.auroc, r.n_normal, r.n_anomaly
        );
    }
}

fn eval_scores(scores: &Path, out: Option<&Path>) -> Result<()> {
    let reports = ScoreReport::read_csv(scores)?;
    if reports.is_empty() {
        return Err(Error::Data(format!("{} holds no scores", scores.display())));
    }
    let mut csv = String::from("method,auroc,n_normal,n_anomaly\n");
    for r in &reports {
        let e = evaluate(r)?;
        println!(
            "{:<20} {:.4}  ({} normal, {} anomaly)",
            e.method, e.auroc, e.n_normal, e.n_anomaly
        );
        csv.push_str(&format!("{},{},{},{}\n", e.method, e.auroc, e.n_normal, e.n_anomaly));
        if let Some(dir) = out {
            std::fs::create_dir_all(dir)?;
            let curve = roc_curve(
                &r.scores_for(subcluster::dataset::Role::TestNormal),
                &r.scores_for(subcluster::dataset::Role::TestAnomaly),
            )?;
            curve.write_csv(dir.join(format!("roc_{}.csv", e.method)))?;
        }
    }
    if let Some(dir) = out {
        std::fs::write(dir.join("eval.csv"), csv)?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let (config, out) = load(&args)?;
            let (_, rows) = run_experiment(&config, &out)?;
            print_rows(&rows);
            eprintln!("results written to {}", out.display());
        }
        Command::Sweep(args) => {
            let (config, out) = load(&args)?;
            let outcome = sweep_clusters(&config, &out)?;
            print_rows(&outcome.rows);
            eprintln!("sweep written to {}", out.display());
        }
        Command::KnnScore { config, out } => {
            let config = KnnExperimentConfig::from_file(&config)?;
            let out = out.or_else(|| config.out.clone());
            let rows = knn_experiment(&config, out.as_deref())?;
            println!("{:>5} {:<10} {:>8}", "K", "metric", "auroc");
            for r in rows {
                println!("{:>5} {:<10} {:>8.4}", r.k, r.metric.as_str(), r.auroc);
            }
        }
        Command::Eval { scores, out } => eval_scores(&scores, out.as_deref())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
