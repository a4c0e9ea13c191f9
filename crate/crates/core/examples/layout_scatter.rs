//! Two-dimensional layout of an embedding, rendered to SVG.
//! Usage: cargo run --example layout_scatter -- [out_dir]
use std::path::PathBuf;

use scnet::labels::ClusterLabels;
use scnet::layout::{layout, LayoutParams};
use scnet::matrix::synthetic_ids;
use scnet::pipeline::run_scatter;
use scnet::rng::Rng;

fn main() -> scnet::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("scnet_layout"));
    std::fs::create_dir_all(&out).map_err(|e| scnet::Error::InvalidArgument(e.to_string()))?;
    let mut rng = Rng::new(4);
    let (mut points, mut labels) = (Vec::new(), Vec::new());
    for c in 0..4 {
        for _ in 0..80 {
            points.push((0..5).map(|d| if d == c { 8.0 } else { 0.0 } + rng.normal()).collect::<Vec<f64>>());
            labels.push(c);
        }
    }
    let lay = layout(&points, &LayoutParams::default(), 0)?;
    let ids = synthetic_ids("c", points.len());
    lay.write_tsv(out.join("layout.tsv"), &ids)?;
    ClusterLabels::from_vec(labels)?.write_tsv(out.join("labels.tsv"), &ids)?;
    let svg = run_scatter(&out.join("layout.tsv"), &out.join("labels.tsv"), &out.join("scatter.svg"))?;
    println!("wrote {}", svg.display());
    Ok(())
}
