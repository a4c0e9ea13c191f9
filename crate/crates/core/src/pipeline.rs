//! End-to-end runs behind the command-line tool.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::community::{knn_graph, louvain, modularity};
use crate::config::{ClusterMethod, Config, InputFormat};
use crate::error::{Error, Result};
use crate::features::{dispersion_scores, select_top_k};
use crate::io::{read_dense_tsv, read_matrix_market, write_atomic, write_matrix_market};
use crate::labels::ClusterLabels;
use crate::layout::{layout, Layout2D};
use crate::matrix::CountMatrix;
use crate::mixture::{fit_kmeans, select_k, KDiagnostic, KStrategy};
use crate::qc::{run_qc, QcReport};
use crate::simulate::{adjusted_rand_index, sample_sbm, SbmSample};
use crate::spectral::{embed, spectral_matrix, Embedding};
use crate::validate::{assign_cluster_types, gate_cells, marker_ratio_table, read_panels_tsv, write_ratio_tsv, MarkerPanel};

trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| match e {
            Error::Stage { .. } => e,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        })
    }
}

pub fn read_input(path: &Path, format: InputFormat) -> Result<CountMatrix> {
    let dense = match format {
        InputFormat::DenseTsv => true,
        InputFormat::MatrixMarket => false,
        InputFormat::Auto => matches!(path.extension().and_then(|e| e.to_str()), Some("tsv" | "txt")),
    };
    if dense {
        read_dense_tsv(path)
    } else {
        read_matrix_market(path)
    }
}

fn input_matrix(cfg: &Config) -> Result<CountMatrix> {
    let path = cfg.input.path.as_ref().ok_or_else(|| Error::Config("input.path is not set".into()))?;
    read_input(path, cfg.input.format)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct Shape {
    pub features: usize,
    pub cells: usize,
    pub nnz: usize,
}

impl Shape {
    fn of(x: &CountMatrix) -> Self {
        Self {
            features: x.n_features(),
            cells: x.n_cells(),
            nnz: x.nnz(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterMetrics {
    pub method: ClusterMethod,
    pub k: usize,
    pub cluster_sizes: Vec<usize>,
    pub log_likelihood: Option<f64>,
    pub bic: Option<f64>,
    pub k_diagnostics: Vec<KDiagnostic>,
    pub dropped_clusters: Vec<usize>,
}

/// Field order is the key order in metrics.json.
#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub input: Shape,
    pub after_qc: Shape,
    pub after_feature_selection: Shape,
    pub zero_degree_features_dropped: usize,
    pub zero_degree_cells_dropped: usize,
    pub embedding_dim: usize,
    pub singular_values: Vec<f64>,
    pub component_shares: Vec<f64>,
    pub cluster: ClusterMetrics,
    pub modularity_graph_k: usize,
    pub modularity: Option<f64>,
    pub ari_vs_truth: Option<f64>,
    pub wall_seconds: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub cell_ids: Vec<String>,
    pub labels: ClusterLabels,
    pub embedding: Embedding,
    pub layout: Option<Layout2D>,
    pub metrics: Metrics,
}

/// Drops features and cells with no counts so the Laplacian is defined.
fn drop_zero_degree(x: CountMatrix) -> Result<(CountMatrix, usize, usize)> {
    let d = x.degrees();
    let fmask: Vec<bool> = d.row_degrees.iter().map(|&v| v > 0).collect();
    let cmask: Vec<bool> = d.col_degrees.iter().map(|&v| v > 0).collect();
    let nf = fmask.iter().filter(|&&b| !b).count();
    let nc = cmask.iter().filter(|&&b| !b).count();
    if nf == 0 && nc == 0 {
        return Ok((x, 0, 0));
    }
    if nc > 0 {
        log::warn!("{nc} cells have no counts on the selected features and are left out");
    }
    Ok((x.submatrix(&fmask, &cmask)?, nf, nc))
}

fn truth_ari(path: &Path, cell_ids: &[String], labels: &ClusterLabels) -> Result<f64> {
    let (ids, truth) = ClusterLabels::read_tsv(path)?;
    let map: HashMap<&str, usize> = ids.iter().map(String::as_str).zip(truth.labels().iter().copied()).collect();
    let t: Vec<usize> = cell_ids
        .iter()
        .map(|id| map.get(id.as_str()).copied().ok_or_else(|| Error::InvalidArgument(format!("cell '{id}' missing from truth labels"))))
        .collect::<Result<_>>()?;
    adjusted_rand_index(labels.labels(), &t)
}

/// ingest, qc, feature selection, spectral embedding, clustering and layout.
/// Artifacts are written to `cfg.output` as each stage finishes.
pub fn run_pipeline(cfg: &Config) -> Result<PipelineRun> {
    let out = &cfg.output;
    let mut wall = BTreeMap::new();
    let mut tick = Instant::now();
    let mut lap = |name: &str, wall: &mut BTreeMap<String, f64>| {
        wall.insert(name.to_string(), tick.elapsed().as_secs_f64());
        tick = Instant::now();
    };

    let x = input_matrix(cfg).stage("ingest")?;
    create_dir(out).stage("ingest")?;
    let input = Shape::of(&x);
    lap("ingest", &mut wall);

    let x = if cfg.qc_enable {
        match run_qc(&x, &cfg.qc) {
            Ok((filtered, report)) => {
                write_atomic(&out.join("qc_report.json"), report.to_json().as_bytes()).stage("qc")?;
                filtered
            }
            Err(Error::EmptyAfterQc { report }) => {
                write_atomic(&out.join("qc_report.json"), report.to_json().as_bytes()).stage("qc")?;
                return Err(Error::EmptyAfterQc { report }).stage("qc");
            }
            Err(e) => return Err(e).stage("qc"),
        }
    } else {
        x
    };
    let after_qc = Shape::of(&x);
    lap("qc", &mut wall);

    let x = if cfg.features.enable {
        let scores = dispersion_scores(&x).stage("features")?;
        let k = cfg.features.top_k.min(x.n_features());
        if k < cfg.features.top_k {
            log::warn!("features.top_k = {} exceeds {} features; keeping all", cfg.features.top_k, x.n_features());
        }
        let top = select_top_k(&scores, k).stage("features")?;
        x.submatrix(&top.mask, &vec![true; x.n_cells()]).stage("features")?
    } else {
        x
    };
    let (x, zf, zc) = drop_zero_degree(x).stage("features")?;
    let after_features = Shape::of(&x);
    lap("features", &mut wall);

    let l = spectral_matrix(&x, cfg.spectral.variant).stage("spectral")?;
    let emb = embed(&l, &cfg.spectral.policy).stage("spectral")?;
    let cell_ids = x.cell_ids().to_vec();
    emb.write_tsv(out.join("embedding.tsv"), &cell_ids).stage("spectral")?;
    write_atomic(&out.join("embedding.json"), emb.sidecar_json().as_bytes()).stage("spectral")?;
    lap("spectral", &mut wall);

    let points = &emb.coords;
    let n = points.len();
    let (labels, cluster) = cluster_points(points, cfg, out).stage("cluster")?;
    labels.write_tsv(out.join("labels.tsv"), &cell_ids).stage("cluster")?;
    lap("cluster", &mut wall);

    let graph_k = cfg.cluster.graph_k.min(n.saturating_sub(1));
    let modularity = if graph_k >= 1 {
        let g = knn_graph(points, graph_k).stage("metrics")?;
        modularity(&g, &labels).ok()
    } else {
        None
    };
    let ari_vs_truth = match &cfg.input.truth {
        Some(p) => Some(truth_ari(p, &cell_ids, &labels).stage("metrics")?),
        None => None,
    };
    lap("metrics", &mut wall);

    let lay = if cfg.layout.enable && n >= 3 {
        let l = layout(points, &cfg.layout.params, cfg.layout.seed).stage("layout")?;
        l.write_tsv(out.join("layout.tsv"), &cell_ids).stage("layout")?;
        Some(l)
    } else {
        None
    };
    lap("layout", &mut wall);

    let metrics = Metrics {
        input,
        after_qc,
        after_feature_selection: after_features,
        zero_degree_features_dropped: zf,
        zero_degree_cells_dropped: zc,
        embedding_dim: emb.dim(),
        singular_values: emb.singular_values.clone(),
        component_shares: emb.component_shares.clone(),
        cluster,
        modularity_graph_k: graph_k,
        modularity,
        ari_vs_truth,
        wall_seconds: wall,
    };
    let json = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    write_atomic(&out.join("metrics.json"), json.as_bytes()).stage("metrics")?;
    Ok(PipelineRun {
        cell_ids,
        labels,
        embedding: emb,
        layout: lay,
        metrics,
    })
}

fn cluster_points(points: &[Vec<f64>], cfg: &Config, out: &Path) -> Result<(ClusterLabels, ClusterMetrics)> {
    let c = &cfg.cluster;
    let d = points.first().map_or(0, Vec::len);
    match c.method {
        ClusterMethod::Gmm => {
            let sel = select_k(points, &c.k, c.seed, &c.gmm)?;
            let b = crate::mixture::bic(&sel.fit.model, points.len()).ok();
            write_atomic(&out.join("model.json"), sel.fit.model.to_json(b).as_bytes())?;
            let labels = sel.fit.labels.clone();
            Ok((
                labels.clone(),
                ClusterMetrics {
                    method: c.method,
                    k: labels.k(),
                    cluster_sizes: labels.sizes(),
                    log_likelihood: Some(sel.fit.model.log_likelihood),
                    bic: b,
                    k_diagnostics: sel.diagnostics,
                    dropped_clusters: sel.fit.dropped_clusters,
                },
            ))
        }
        ClusterMethod::Kmeans => {
            // a BIC range picks K with the mixture model, then k-means runs at that K
            let (k, diagnostics) = match c.k {
                KStrategy::Fixed(k) => (k, vec![]),
                KStrategy::DPlusOne => (d + 1, vec![]),
                KStrategy::Bic { .. } => {
                    let sel = select_k(points, &c.k, c.seed, &c.gmm)?;
                    (sel.k, sel.diagnostics)
                }
            };
            let fit = fit_kmeans(points, k, c.seed)?;
            let (labels, dropped) = fit.labels.compact();
            Ok((
                labels.clone(),
                ClusterMetrics {
                    method: c.method,
                    k: labels.k(),
                    cluster_sizes: labels.sizes(),
                    log_likelihood: None,
                    bic: None,
                    k_diagnostics: diagnostics,
                    dropped_clusters: dropped,
                },
            ))
        }
        ClusterMethod::Louvain => {
            let g = knn_graph(points, c.graph_k.min(points.len().saturating_sub(1)))?;
            let r = louvain(&g, c.seed, c.resolution)?;
            Ok((
                r.labels.clone(),
                ClusterMetrics {
                    method: c.method,
                    k: r.labels.k(),
                    cluster_sizes: r.labels.sizes(),
                    log_likelihood: None,
                    bic: None,
                    k_diagnostics: vec![],
                    dropped_clusters: vec![],
                },
            ))
        }
    }
}

/// Samples the configured block model and writes `counts.mtx` (with id
/// sidecars), `truth_cells.tsv` and `truth_genes.tsv`.
pub fn run_simulate(cfg: &Config) -> Result<SbmSample> {
    let s = sample_sbm(&cfg.sbm).stage("simulate")?;
    create_dir(&cfg.output).stage("simulate")?;
    write_matrix_market(cfg.output.join("counts.mtx"), &s.matrix).stage("simulate")?;
    let cells = ClusterLabels::from_vec(s.cell_labels.clone()).stage("simulate")?;
    cells.write_tsv(cfg.output.join("truth_cells.tsv"), s.matrix.cell_ids()).stage("simulate")?;
    let genes = ClusterLabels::from_vec(s.gene_labels.clone()).stage("simulate")?;
    let mut text = String::from("feature_id\tblock\n");
    for (id, b) in s.matrix.feature_ids().iter().zip(genes.labels()) {
        text.push_str(&format!("{id}\t{b}\n"));
    }
    write_atomic(&cfg.output.join("truth_genes.tsv"), text.as_bytes()).stage("simulate")?;
    Ok(s)
}

/// Runs quality control alone; writes `qc_report.json` and `filtered.mtx`.
pub fn run_qc_command(cfg: &Config) -> Result<QcReport> {
    let x = input_matrix(cfg).stage("ingest")?;
    create_dir(&cfg.output).stage("qc")?;
    match run_qc(&x, &cfg.qc) {
        Ok((filtered, report)) => {
            write_atomic(&cfg.output.join("qc_report.json"), report.to_json().as_bytes()).stage("qc")?;
            write_matrix_market(cfg.output.join("filtered.mtx"), &filtered).stage("qc")?;
            Ok(report)
        }
        Err(Error::EmptyAfterQc { report }) => {
            write_atomic(&cfg.output.join("qc_report.json"), report.to_json().as_bytes()).stage("qc")?;
            Err(Error::EmptyAfterQc { report }).stage("qc")
        }
        Err(e) => Err(e).stage("qc"),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidateSummary {
    pub cluster_types: Vec<(usize, Option<String>, bool)>,
    pub gated_cells: Option<Vec<String>>,
}

/// Scores clusters against marker panels; writes `cluster_types.tsv`,
/// `marker_ratios.tsv` and, when gate markers are configured, `gated_cells.tsv`.
pub fn run_validate(cfg: &Config) -> Result<ValidateSummary> {
    let v = &cfg.validate;
    let x = input_matrix(cfg).stage("ingest")?;
    let labels_path = v.labels.as_ref().ok_or_else(|| Error::Config("validate.labels is not set".into())).stage("validate")?;
    let panels_path = v.panels.as_ref().ok_or_else(|| Error::Config("validate.panels is not set".into())).stage("validate")?;
    let (ids, labels) = ClusterLabels::read_tsv(labels_path).stage("validate")?;
    let panels: Vec<MarkerPanel> = read_panels_tsv(panels_path).stage("validate")?;
    let column: HashMap<&str, usize> = x.cell_ids().iter().enumerate().map(|(j, id)| (id.as_str(), j)).collect();
    let cols: Vec<usize> = ids
        .iter()
        .map(|id| column.get(id.as_str()).copied().ok_or_else(|| Error::InvalidArgument(format!("labelled cell '{id}' not in matrix"))))
        .collect::<Result<_>>()
        .stage("validate")?;
    let x = x.select_cells(&cols).stage("validate")?;
    create_dir(&cfg.output).stage("validate")?;

    let assigned = assign_cluster_types(&x, &labels, &panels).stage("validate")?;
    let mut text = String::from("cluster\tn_cells\ttype\ttie");
    for p in &panels {
        text.push_str(&format!("\t{}", p.name));
    }
    text.push('\n');
    let sizes = labels.sizes();
    for a in &assigned {
        let name = a.panel.map_or("NA", |p| panels[p].name.as_str());
        text.push_str(&format!("{}\t{}\t{name}\t{}", a.cluster, sizes[a.cluster], a.tie));
        for s in &a.scores {
            text.push_str(&format!("\t{s:.6}"));
        }
        text.push('\n');
    }
    write_atomic(&cfg.output.join("cluster_types.tsv"), text.as_bytes()).stage("validate")?;
    let rows = marker_ratio_table(&x, &labels, &panels).stage("validate")?;
    write_ratio_tsv(cfg.output.join("marker_ratios.tsv"), &rows, v.denominator).stage("validate")?;

    let gated_cells = if v.gate_positive.is_empty() && v.gate_negative.is_empty() {
        None
    } else {
        let target = match &v.gate_type {
            Some(t) => panels
                .iter()
                .position(|p| &p.name == t)
                .ok_or_else(|| Error::Config(format!("validate.gate_type '{t}' is not a panel")))
                .stage("validate")?,
            None => 0,
        };
        let members = labels.members();
        let cells: Vec<usize> = assigned
            .iter()
            .filter(|a| a.panel == Some(target))
            .flat_map(|a| members[a.cluster].iter().copied())
            .collect();
        let pos: Vec<&str> = v.gate_positive.iter().map(String::as_str).collect();
        let neg: Vec<&str> = v.gate_negative.iter().map(String::as_str).collect();
        let kept = gate_cells(&x, &cells, &pos, &neg, v.min_pos, v.max_neg).stage("validate")?;
        let names: Vec<String> = kept.iter().map(|&j| x.cell_ids()[j].clone()).collect();
        let mut text = String::from("cell_id\n");
        for id in &names {
            text.push_str(id);
            text.push('\n');
        }
        write_atomic(&cfg.output.join("gated_cells.tsv"), text.as_bytes()).stage("validate")?;
        Some(names)
    };
    Ok(ValidateSummary {
        cluster_types: assigned.iter().map(|a| (a.cluster, a.panel.map(|p| panels[p].name.clone()), a.tie)).collect(),
        gated_cells,
    })
}

const PALETTE: [&str; 20] = [
    "#1f77b4", "#aec7e8", "#ff7f0e", "#ffbb78", "#2ca02c", "#98df8a", "#d62728", "#ff9896", "#9467bd", "#c5b0d5",
    "#8c564b", "#c49c94", "#e377c2", "#f7b6d2", "#7f7f7f", "#c7c7c7", "#bcbd22", "#dbdb8d", "#17becf", "#9edae5",
];

fn read_table(path: &Path, columns: usize) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let tok: Vec<String> = line.split('\t').map(|t| t.trim().to_string()).collect();
        if tok.len() != columns {
            return Err(Error::parse(path, i + 1, format!("expected {columns} columns, found {}", tok.len())));
        }
        rows.push(tok);
    }
    Ok(rows)
}

/// SVG scatter of a layout coloured by cluster.
pub fn render_scatter(layout: &Path, labels: &Path) -> Result<String> {
    let pts = read_table(layout, 3)?;
    let labs = read_table(labels, 2)?;
    if pts.is_empty() {
        return Err(Error::Empty(format!("no points in {}", layout.display())));
    }
    let mut label_of: HashMap<&str, &str> = HashMap::new();
    for r in &labs {
        if label_of.insert(&r[0], &r[1]).is_some() {
            return Err(Error::InvalidArgument(format!("cell '{}' labelled twice", r[0])));
        }
    }
    if label_of.len() != pts.len() {
        return Err(Error::InvalidArgument(format!("{} labelled cells but {} layout points", label_of.len(), pts.len())));
    }
    let mut coords = Vec::with_capacity(pts.len());
    for r in &pts {
        let x: f64 = r[1].parse().map_err(|_| Error::parse(layout, 0, format!("bad x '{}'", r[1])))?;
        let y: f64 = r[2].parse().map_err(|_| Error::parse(layout, 0, format!("bad y '{}'", r[2])))?;
        let lab = *label_of
            .get(r[0].as_str())
            .ok_or_else(|| Error::InvalidArgument(format!("cell '{}' has no label", r[0])))?;
        coords.push((x, y, lab));
    }
    // numeric labels in numeric order, otherwise order of first appearance
    let mut names: Vec<&str> = Vec::new();
    for &(_, _, l) in &coords {
        if !names.contains(&l) {
            names.push(l);
        }
    }
    if names.iter().all(|n| n.parse::<i64>().is_ok()) {
        names.sort_by_key(|n| n.parse::<i64>().unwrap());
    }
    let colour: HashMap<&str, &str> = names.iter().enumerate().map(|(i, &n)| (n, PALETTE[i % PALETTE.len()])).collect();

    let (size, margin) = (600.0, 20.0);
    let (x0, x1) = coords.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.0), a.1.max(p.0)));
    let (y0, y1) = coords.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.1), a.1.max(p.1)));
    let span = (x1 - x0).max(y1 - y0);
    let scale = if span > 0.0 { (size - 2.0 * margin) / span } else { 1.0 };
    let legend_w = 120.0;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{size}\" viewBox=\"0 0 {w} {size}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        w = size + legend_w
    );
    for &(x, y, l) in &coords {
        let cx = margin + (x - x0) * scale;
        let cy = size - margin - (y - y0) * scale;
        svg.push_str(&format!("<circle cx=\"{cx:.3}\" cy=\"{cy:.3}\" r=\"2.5\" fill=\"{}\"/>\n", colour[l]));
    }
    for (i, n) in names.iter().enumerate() {
        let y = margin + 16.0 * i as f64;
        svg.push_str(&format!(
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" font-family=\"sans-serif\">{}</text>\n",
            size + 10.0,
            y,
            colour[n],
            size + 26.0,
            y + 9.0,
            n.replace('&', "&amp;").replace('<', "&lt;")
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn run_scatter(layout: &Path, labels: &Path, out: &Path) -> Result<PathBuf> {
    let svg = render_scatter(layout, labels).stage("scatter")?;
    let path = if out.extension().is_some_and(|e| e == "svg") { out.to_path_buf() } else { out.join("scatter.svg") };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir).stage("scatter")?;
    }
    write_atomic(&path, svg.as_bytes()).stage("scatter")?;
    Ok(path)
}
