use std::path::Path;
use std::process::Command;

fn scnet(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_scnet")).args(args).output().expect("binary runs")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_key_fails_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    write(&conf, "features.top_k = 100\ncluster.kk = 3\n");
    let out = dir.path().join("out");
    let r = scnet(&["pipeline", "--config", s(&conf), "--out", s(&out)]);
    assert!(!r.status.success());
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("cluster.kk"), "{err}");
    assert!(!out.exists());
}

#[test]
fn simulate_then_pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim.conf");
    write(&sim, "sbm.seed = 7\noutput.directory = sim\n");
    assert!(scnet(&["simulate", "--config", s(&sim)]).status.success());
    assert!(scnet(&["simulate", "--config", s(&sim), "--out", s(&dir.path().join("sim2"))]).status.success());
    for f in ["counts.mtx", "truth_cells.tsv", "truth_genes.tsv"] {
        assert_eq!(std::fs::read(dir.path().join("sim").join(f)).unwrap(), std::fs::read(dir.path().join("sim2").join(f)).unwrap(), "{f}");
    }

    let conf = dir.path().join("run.conf");
    write(&conf, "input.path = sim/counts.mtx\ninput.truth = sim/truth_cells.tsv\nqc.enable = false\n");
    let runs: Vec<_> = ["a", "b"]
        .iter()
        .map(|r| {
            let out = dir.path().join(r);
            let res = scnet(&["pipeline", "--config", s(&conf), "--out", s(&out), "--seed", "3"]);
            assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
            out
        })
        .collect();
    for f in ["labels.tsv", "layout.tsv", "embedding.tsv"] {
        assert_eq!(std::fs::read(runs[0].join(f)).unwrap(), std::fs::read(runs[1].join(f)).unwrap(), "{f}");
    }
    let metrics: serde_json::Value = serde_json::from_slice(&std::fs::read(runs[0].join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["ari_vs_truth"].as_f64().unwrap() >= 0.95);
    assert_eq!(metrics["cluster"]["k"], 3);

    let svg = dir.path().join("plot.svg");
    let r = scnet(&["scatter", "--layout", s(&runs[0].join("layout.tsv")), "--labels", s(&runs[0].join("labels.tsv")), "--out", s(&svg)]);
    assert!(r.status.success());
    assert_eq!(std::fs::read_to_string(&svg).unwrap().matches("<circle").count(), 600);
}

#[test]
fn zero_rates_give_an_empty_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("zero.conf");
    write(&conf, "sbm.gene_block_sizes = 3, 3\nsbm.cell_block_sizes = 4\nsbm.rates = 0; 0\n");
    assert!(scnet(&["simulate", "--config", s(&conf), "--out", s(dir.path())]).status.success());
    let mtx = std::fs::read_to_string(dir.path().join("counts.mtx")).unwrap();
    let size = mtx.lines().find(|l| !l.starts_with('%')).unwrap();
    assert_eq!(size.split_whitespace().collect::<Vec<_>>(), ["6", "4", "0"]);
}

#[test]
fn failing_stage_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let mtx = dir.path().join("tiny.mtx");
    write(&mtx, "%%MatrixMarket matrix coordinate integer general\n2 2 2\n1 1 1\n2 2 1\n");
    let conf = dir.path().join("c.conf");
    write(&conf, "input.path = tiny.mtx\n");
    let r = scnet(&["pipeline", "--config", s(&conf), "--out", s(&dir.path().join("o"))]);
    assert!(!r.status.success());
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("stage 'qc'"), "{err}");
    // the report of the failed stage is kept
    assert!(dir.path().join("o/qc_report.json").exists());
}

#[test]
fn validate_names_planted_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim.conf");
    write(&sim, "sbm.gene_block_sizes = 20, 20\nsbm.cell_block_sizes = 30, 30\nsbm.rates = 4, 0.2; 0.2, 4\n");
    assert!(scnet(&["simulate", "--config", s(&sim), "--out", s(dir.path())]).status.success());
    write(&dir.path().join("panels.tsv"), "type\tfeature_id\nfirst\tgene0\nfirst\tgene1\nsecond\tgene20\nsecond\tgene21\n");
    let conf = dir.path().join("v.conf");
    write(
        &conf,
        "input.path = counts.mtx\nvalidate.labels = truth_cells.tsv\nvalidate.panels = panels.tsv\nvalidate.gate_positive = gene0\nvalidate.min_pos = 1\n",
    );
    let out = dir.path().join("v");
    let r = scnet(&["validate", "--config", s(&conf), "--out", s(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let types = std::fs::read_to_string(out.join("cluster_types.tsv")).unwrap();
    let names: Vec<&str> = types.lines().skip(1).map(|l| l.split('\t').nth(2).unwrap()).collect();
    assert_eq!(names, ["first", "second"]);
    assert!(out.join("marker_ratios.tsv").exists());
    assert!(out.join("gated_cells.tsv").exists());
}

#[test]
fn bundled_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    for name in ["sbm.conf", "pipeline.conf", "embryo.conf"] {
        let cfg = scnet::config::Config::from_file(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        cfg.validate().unwrap();
    }
    let panels = scnet::validate::read_panels_tsv(dir.join("embryo_markers.tsv")).unwrap();
    assert_eq!(panels.len(), 3);
}
