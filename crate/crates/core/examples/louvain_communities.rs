//! Louvain on a kNN graph of three point clouds.
use scnet::community::{knn_graph, louvain};
use scnet::rng::Rng;

fn main() -> scnet::Result<()> {
    let mut rng = Rng::new(2);
    let mut points = Vec::new();
    for c in 0..3 {
        for _ in 0..100 {
            points.push(vec![10.0 * c as f64 + rng.normal(), rng.normal()]);
        }
    }
    let g = knn_graph(&points, 10)?;
    // modularity keeps splitting each cloud into local patches; a coarser
    // resolution merges them back
    let r = louvain(&g, 0, 1.0)?;
    println!("{} nodes, {} edges", g.n_nodes(), g.n_edges());
    println!("{} communities, sizes {:?}, Q = {:.4}, {} levels", r.labels.k(), r.labels.sizes(), r.modularity, r.levels);
    let coarse = louvain(&g, 0, 0.1)?;
    println!("resolution 0.1: {} communities, sizes {:?}", coarse.labels.k(), coarse.labels.sizes());
    Ok(())
}
