use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use scnet::config::Config;
use scnet::pipeline;

#[derive(Parser)]
#[command(name = "scnet", version, about = "Spectral clustering of single-cell count matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// overrides output.directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// overrides every stage seed
    #[arg(long)]
    seed: Option<u64>,
    /// worker threads; 0 runs single-threaded
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// ingest, qc, features, embedding, clustering, layout
    Pipeline(Common),
    /// sample a block-model count matrix with truth labels
    Simulate(Common),
    /// render layout.tsv coloured by labels.tsv as SVG
    Scatter {
        #[arg(long)]
        layout: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// quality control only
    Qc(Common),
    /// score clusters against marker panels
    Validate(Common),
}

fn load(common: &Common) -> scnet::Result<Config> {
    let mut cfg = match &common.config {
        Some(p) => Config::from_file(p)?,
        None => Config::default(),
    };
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.set_all_seeds(seed);
    }
    cfg.validate()?;
    for p in [&cfg.input.path, &cfg.input.truth, &cfg.validate.labels, &cfg.validate.panels].into_iter().flatten() {
        if !p.exists() {
            return Err(scnet::Error::Config(format!("{} does not exist", p.display())));
        }
    }
    Ok(cfg)
}

fn run(cli: Cli) -> scnet::Result<()> {
    let common = match &cli.command {
        Command::Pipeline(c) | Command::Simulate(c) | Command::Qc(c) | Command::Validate(c) => c,
        Command::Scatter { common, .. } => common,
    };
    // one thread keeps every parallel reduction in a fixed order
    rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads.max(1))
        .build_global()
        .map_err(|e| scnet::Error::Config(format!("thread pool: {e}")))?;
    match &cli.command {
        Command::Scatter { layout, labels, common } => {
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("scatter.svg"));
            let path = pipeline::run_scatter(layout, labels, &out)?;
            log::info!("wrote {}", path.display());
        }
        Command::Pipeline(_) => {
            let cfg = load(common)?;
            let run = pipeline::run_pipeline(&cfg)?;
            log::info!("{} cells in {} clusters", run.cell_ids.len(), run.labels.k());
        }
        Command::Simulate(_) => {
            let cfg = load(common)?;
            let s = pipeline::run_simulate(&cfg)?;
            log::info!("{} x {} matrix, {} nonzeros", s.matrix.n_features(), s.matrix.n_cells(), s.matrix.nnz());
        }
        Command::Qc(_) => {
            let cfg = load(common)?;
            let report = pipeline::run_qc_command(&cfg)?;
            println!("{}", report.to_json());
        }
        Command::Validate(_) => {
            let cfg = load(common)?;
            let summary = pipeline::run_validate(&cfg)?;
            for (cluster, name, tie) in &summary.cluster_types {
                println!("{cluster}\t{}{}", name.as_deref().unwrap_or("NA"), if *tie { "\t(tie)" } else { "" });
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
