//! Gaussian mixture clustering of embedded cells.

mod gmm;
mod kmeans;
mod select;

pub use gmm::{bic, fit_gmm, free_parameters, GmmConfig, GmmFit, GmmModel};
pub use kmeans::{assign_nearest, fit_kmeans, plus_plus_init, KMeansFit, MAX_LLOYD_ITERATIONS};
pub use select::{select_k, KDiagnostic, KSelection, KStrategy};
