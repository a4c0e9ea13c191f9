//! Two-dimensional layout of embedded cells by fuzzy-graph SGD.

mod fuzzy;
mod optimize;

pub use fuzzy::{fuzzy_graph, fuzzy_union, solve_sigma, FuzzyGraph};
pub use optimize::{
    attractive_gradient, attractive_loss, initial_coords, optimize_layout, repulsive_gradient, repulsive_loss,
    rescale_init, Layout2D, LayoutParams,
};

use crate::error::Result;

/// Fuzzy graph on the embedding, initialised from its first two axes.
pub fn layout(points: &[Vec<f64>], params: &LayoutParams, seed: u64) -> Result<Layout2D> {
    let k = params.n_neighbors.min(points.len().saturating_sub(1));
    let fg = fuzzy_graph(points, k)?;
    let init = initial_coords(points, seed)?;
    optimize_layout(&fg.graph, &init, params, seed)
}
