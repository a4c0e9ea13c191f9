//! Quality control then overdispersion ranking on a simulated matrix.
use scnet::features::{dispersion_scores, select_top_k};
use scnet::qc::{run_qc, QcConfig};
use scnet::simulate::{sample_sbm, SbmConfig};

fn main() -> scnet::Result<()> {
    let s = sample_sbm(&SbmConfig::planted(vec![100, 100, 100], vec![200, 200, 200], 5.0, 0.5, 1))?;
    let cfg = QcConfig {
        min_cells_per_feature: 5,
        min_features_per_cell: 100,
        ..QcConfig::default()
    };
    let (x, report) = run_qc(&s.matrix, &cfg)?;
    println!("qc: {} -> {} features, {} -> {} cells", report.features_in, report.features_out, report.cells_in, report.cells_out);
    let scores = dispersion_scores(&x)?;
    let top = select_top_k(&scores, 10)?;
    for &i in &top.order {
        println!("{}\tmean {:.2}\tvar {:.2}\tscore {:.3}", x.feature_ids()[i], scores[i].mean, scores[i].variance, scores[i].score);
    }
    Ok(())
}
