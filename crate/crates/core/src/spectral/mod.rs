//! Normalized graph-Laplacian of the count network and its spectral embedding.

mod embed;
mod laplacian;
mod svd;

pub use embed::{embed, EmbedPolicy, Embedding, ScalingMode};
pub use laplacian::{
    adjacency_matrix, normalized_laplacian, random_walk_laplacian, spectral_matrix, NormalizedLaplacian,
    SpectralVariant,
};
pub use svd::{orient, truncated_svd, SvdOptions, TruncatedSvd};
