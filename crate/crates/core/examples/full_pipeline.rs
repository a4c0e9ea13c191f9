//! Simulate, then run the whole pipeline into a directory.
//! Usage: cargo run --example full_pipeline -- [out_dir]
use std::path::PathBuf;

use scnet::config::Config;
use scnet::pipeline::{run_pipeline, run_simulate};

fn main() -> scnet::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("scnet_pipeline"));
    let mut cfg = Config {
        output: out.join("sim"),
        ..Config::default()
    };
    run_simulate(&cfg)?;

    cfg.input.path = Some(out.join("sim/counts.mtx"));
    cfg.input.truth = Some(out.join("sim/truth_cells.tsv"));
    cfg.qc_enable = false;
    cfg.output = out.join("run");
    cfg.validate()?;
    let run = run_pipeline(&cfg)?;
    let m = &run.metrics;
    println!("d = {}, K = {}, modularity {:?}, ARI {:?}", m.embedding_dim, m.cluster.k, m.modularity, m.ari_vs_truth);
    println!("artifacts in {}", cfg.output.display());
    Ok(())
}
