//! Names clusters by marker panels and reports marker expression ratios.
use scnet::labels::ClusterLabels;
use scnet::simulate::{sample_sbm, SbmConfig};
use scnet::validate::{assign_cluster_types, marker_ratio_table, MarkerPanel, RatioDenominator};

fn main() -> scnet::Result<()> {
    let s = sample_sbm(&SbmConfig::planted(vec![50; 3], vec![100; 3], 4.0, 0.5, 9))?;
    let labels = ClusterLabels::from_vec(s.cell_labels.clone())?;
    let panels: Vec<MarkerPanel> = ["alpha", "beta", "gamma"]
        .iter()
        .enumerate()
        .map(|(b, name)| MarkerPanel {
            name: name.to_string(),
            features: (0..5).map(|i| format!("gene{}", 50 * b + i)).collect(),
        })
        .collect();
    for a in assign_cluster_types(&s.matrix, &labels, &panels)? {
        let name = a.panel.map_or("NA", |p| panels[p].name.as_str());
        println!("cluster {} -> {name} (scores {:?})", a.cluster, a.scores);
    }
    for row in marker_ratio_table(&s.matrix, &labels, &panels)? {
        println!("{}\tpooled {:?}\tper-type {:?}", row.cell_type, row.ratio(RatioDenominator::Pooled), row.ratio(RatioDenominator::PerTypeAverage));
    }
    Ok(())
}
