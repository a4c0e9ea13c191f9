//! Normalized bipartite Laplacian and its leading singular directions.
use scnet::simulate::{sample_sbm, SbmConfig};
use scnet::spectral::{embed, spectral_matrix, EmbedPolicy, SpectralVariant};

fn main() -> scnet::Result<()> {
    let s = sample_sbm(&SbmConfig::planted(vec![100; 4], vec![150; 4], 6.0, 0.5, 3))?;
    let l = spectral_matrix(&s.matrix, SpectralVariant::Normalized)?;
    let e = embed(&l, &EmbedPolicy::default())?;
    println!("singular values: {:?}", e.singular_values);
    println!("kept {} dimensions, shares {:?}", e.dim(), e.component_shares);
    for j in (0..s.matrix.n_cells()).step_by(150) {
        println!("cell {j} (block {}): {:?}", s.cell_labels[j], e.coords[j]);
    }
    Ok(())
}
