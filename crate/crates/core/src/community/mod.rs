//! Cell-cell graphs, network modularity and the Louvain baseline.

mod graph;
mod louvain;
mod modularity;

pub use graph::{knn, knn_graph, CellGraph};
pub use louvain::{louvain, LouvainResult};
pub use modularity::{modularity, modularity_with_resolution};
