mod common;

use std::path::Path;

use common::{gwmv, json, path, snapshot};

use gwmv::config::ExperimentConfig;
use gwmv::io::{read_labels, read_matrix, write_matrix};
use gwmv_core::geometry::{generate_manifold, knn_geodesic_distances, KnnGraphConfig};
use gwmv_core::matrix::Matrix;
use gwmv_core::pipelines::bary_gwmds;
use gwmv_core::relational::{euclidean_distances, MultiViewDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn ok(args: &[&str]) {
    let out = gwmv(args);
    assert!(
        out.status.success(),
        "gwmv {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn blobs(dir: &Path, n: usize, count: usize) {
    let cfg = dir.with_extension("json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"generate": {{"manifold": "blobs", "n": {n}, "blobs": {{"count": {count}}}}}}}"#
        ),
    )
    .unwrap();
    ok(&["generate", "--config", path(&cfg), "--out", path(dir)]);
}

fn planar_points(n: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0))
}

#[test]
fn generate_writes_views_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("roll");
    let args = ["generate", "--n", "100", "--seed", "3", "--out", path(&out)];
    ok(&args);
    let mut names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "manifest.json",
            "params.csv",
            "points.csv",
            "view_1.csv",
            "view_2.csv"
        ]
    );
    let first = snapshot(&out);
    ok(&args);
    assert_eq!(first, snapshot(&out));

    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["command"], "generate");
    assert_eq!(manifest["config"]["seed"], 3);
    assert!(manifest["runtime_seconds"].is_number());
}

#[test]
fn oversized_neighbourhood_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    let o = gwmv(&[
        "generate",
        "--n",
        "20",
        "--k-neighbors",
        "20",
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn moebius_view_matches_library_geodesics() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("moebius");
    ok(&[
        "generate",
        "--manifold",
        "moebius",
        "--n",
        "500",
        "--out",
        path(&out),
    ]);
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["summary"]["dropped"], 0);
    let cfg = ExperimentConfig::from_value(manifest["config"].clone()).unwrap();
    let sample = generate_manifold(&cfg.generate.manifold_spec(cfg.manifold_seed())).unwrap();
    let rotated = cfg.generate.transforms[0].apply(&sample.points).unwrap();
    let expected = knn_geodesic_distances(&rotated, &KnnGraphConfig::default()).unwrap();
    let written = read_matrix(&out.join("view_1.csv")).unwrap();
    assert_eq!(&written, expected.matrix());
    assert_eq!(read_matrix(&out.join("points.csv")).unwrap(), sample.points);
}

#[test]
fn embed_reports_per_view_correlations() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("scurve");
    ok(&[
        "generate",
        "--manifold",
        "s-curve",
        "--n",
        "80",
        "--out",
        path(&data),
    ]);
    let out = tmp.path().join("embed");
    ok(&["embed", path(&data), "--restarts", "1", "--out", path(&out)]);
    let metrics = json(&out.join("metrics.json"));
    for key in ["view_1", "view_2", "mean"] {
        assert!(metrics[key].is_number(), "missing {key}");
    }
    let mean = (metrics["view_1"].as_f64().unwrap() + metrics["view_2"].as_f64().unwrap()) / 2.0;
    assert!((metrics["mean"].as_f64().unwrap() - mean).abs() < 1e-12);
    let y = read_matrix(&out.join("embedding.csv")).unwrap();
    assert_eq!((y.rows(), y.cols()), (80, 2));
    assert_eq!(read_matrix(&out.join("barycenter.csv")).unwrap().rows(), 80);
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("iter,cost,grad_norm,step_size\n"));

    let base = tmp.path().join("baseline");
    ok(&[
        "embed",
        path(&data),
        "--method",
        "baseline-avg-mds",
        "--out",
        path(&base),
    ]);
    assert!(json(&base.join("metrics.json"))["mean"].is_number());
    assert!(!base.join("barycenter.csv").exists());
}

#[test]
fn embed_matches_the_library_pipeline_at_any_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("roll");
    ok(&["generate", "--n", "60", "--seed", "5", "--out", path(&data)]);
    let one = tmp.path().join("one");
    let two = tmp.path().join("two");
    ok(&[
        "embed",
        path(&data),
        "--seed",
        "5",
        "--threads",
        "1",
        "--out",
        path(&one),
    ]);
    ok(&[
        "embed",
        path(&data),
        "--seed",
        "5",
        "--threads",
        "2",
        "--out",
        path(&two),
    ]);
    let y1 = std::fs::read(one.join("embedding.csv")).unwrap();
    assert_eq!(y1, std::fs::read(two.join("embedding.csv")).unwrap());

    let mut cfg = ExperimentConfig {
        seed: 5,
        ..Default::default()
    };
    cfg.resolve_seeds();
    let views = vec![
        gwmv_core::relational::validate_distance_matrix(
            read_matrix(&data.join("view_1.csv")).unwrap(),
        )
        .unwrap(),
        gwmv_core::relational::validate_distance_matrix(
            read_matrix(&data.join("view_2.csv")).unwrap(),
        )
        .unwrap(),
    ];
    let ds = MultiViewDataset::new(views, None).unwrap();
    let r = bary_gwmds(&ds, &cfg.embed.barycenter, &cfg.embed.mds, cfg.restarts).unwrap();
    assert_eq!(
        &read_matrix(&one.join("embedding.csv")).unwrap(),
        r.embedding.matrix()
    );
}

#[test]
fn identical_views_embed_almost_perfectly() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("same");
    std::fs::create_dir(&data).unwrap();
    let d = euclidean_distances(&planar_points(25, 1)).unwrap();
    write_matrix(&data.join("view_1.csv"), d.matrix(), None).unwrap();
    write_matrix(&data.join("view_2.csv"), d.matrix(), None).unwrap();
    let out = tmp.path().join("out");
    ok(&["embed", path(&data), "--out", path(&out)]);
    let metrics = json(&out.join("metrics.json"));
    assert!(metrics["view_1"].as_f64().unwrap() >= 0.99, "{metrics}");
    assert!(metrics["view_2"].as_f64().unwrap() >= 0.99, "{metrics}");
}

#[test]
fn features_are_turned_into_views() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("features");
    std::fs::create_dir(&data).unwrap();
    let x = planar_points(30, 2);
    write_matrix(&data.join("features_1.csv"), &x, None).unwrap();
    write_matrix(&data.join("features_2.csv"), &x.scale(2.0), None).unwrap();
    let out = tmp.path().join("out");
    ok(&["cluster", path(&data), "-k", "3", "--out", path(&out)]);
    assert_eq!(read_labels(&out.join("labels.csv")).unwrap().len(), 30);
}

#[test]
fn separable_blobs_cluster_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("blobs");
    blobs(&data, 100, 2);
    let out = tmp.path().join("k2");
    ok(&["cluster", path(&data), "-k", "2", "--out", path(&out)]);
    let metrics = json(&out.join("metrics.json"));
    assert_eq!(metrics["ari"].as_f64(), Some(1.0));
    assert_eq!(metrics["nmi"].as_f64(), Some(1.0));
    assert_eq!(metrics["cluster_mass"].as_array().unwrap().len(), 2);
    let plan = read_matrix(&out.join("plan.csv")).unwrap();
    assert_eq!((plan.rows(), plan.cols()), (100, 2));
    assert_eq!(read_matrix(&out.join("prototypes.csv")).unwrap().rows(), 2);

    let single = tmp.path().join("k1");
    ok(&["cluster", path(&data), "-k", "1", "--out", path(&single)]);
    let labels = read_labels(&single.join("labels.csv")).unwrap();
    assert!(labels.iter().all(|&l| l == 0));
    let metrics = json(&single.join("metrics.json"));
    assert_eq!(metrics["ari"].as_f64(), Some(0.0));
    assert_eq!(metrics["nmi"].as_f64(), Some(0.0));
}

#[test]
fn missing_labels_only_report_mass() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("blobs");
    blobs(&data, 40, 2);
    std::fs::remove_file(data.join("labels.csv")).unwrap();
    let out = tmp.path().join("out");
    ok(&["cluster", path(&data), "-k", "2", "--out", path(&out)]);
    let metrics = json(&out.join("metrics.json"));
    let keys: Vec<&String> = metrics.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["cluster_mass", "no_ground_truth"]);
    assert_eq!(metrics["no_ground_truth"], true);
}

#[test]
fn sweep_writes_one_row_per_value() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("blobs");
    blobs(&data, 80, 4);
    let out = tmp.path().join("sweep");
    let args = [
        "sweep",
        "--dataset",
        path(&data),
        "--param",
        "dim",
        "--values",
        "2,4,8",
        "--out",
        path(&out),
    ];
    ok(&args);
    let table = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "parameter,value,nmi,ari,runtime_seconds");
    assert_eq!(lines.len(), 4);
    for (line, v) in lines[1..].iter().zip(["2", "4", "8"]) {
        assert!(line.starts_with(&format!("dim,{v},")), "{line}");
    }
    let run = out.join("run_002_dim_4");
    assert_eq!(read_matrix(&run.join("prototypes.csv")).unwrap().cols(), 4);

    let first = snapshot(&out);
    ok(&args);
    assert_eq!(first, snapshot(&out));

    let bad = gwmv(&[
        "sweep",
        "--dataset",
        path(&data),
        "--param",
        "dim",
        "--values",
        "two",
        "--out",
        path(&tmp.path().join("bad")),
    ]);
    assert_eq!(bad.status.code(), Some(2));
    let bad = gwmv(&[
        "sweep",
        "--dataset",
        path(&data),
        "--param",
        "cluster.nope",
        "--values",
        "1",
        "--out",
        path(&tmp.path().join("bad")),
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn neighbour_sweep_rebuilds_views_from_points() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("roll");
    ok(&["generate", "--n", "60", "--out", path(&data)]);
    let out = tmp.path().join("sweep");
    ok(&[
        "sweep",
        "--command",
        "embed",
        "--dataset",
        path(&data),
        "--param",
        "k_neighbors",
        "--values",
        "6,12",
        "--restarts",
        "1",
        "--out",
        path(&out),
    ]);
    let table = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(
        table.starts_with("parameter,value,view_1,view_2,mean,runtime_seconds\n"),
        "{table}"
    );
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn manifest_reproduces_its_run() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("blobs");
    blobs(&data, 60, 3);
    let first = tmp.path().join("first");
    ok(&[
        "cluster",
        path(&data),
        "-k",
        "3",
        "--seed",
        "11",
        "--out",
        path(&first),
    ]);
    let second = tmp.path().join("second");
    ok(&[
        "cluster",
        "--config",
        path(&first.join("manifest.json")),
        "--out",
        path(&second),
    ]);
    let (mut a, mut b) = (snapshot(&first), snapshot(&second));
    let ma = a.remove(Path::new("manifest.json")).unwrap();
    let mb = b.remove(Path::new("manifest.json")).unwrap();
    assert_eq!(a, b);
    let (mut ma, mut mb): (Value, Value) = (
        serde_json::from_slice(&ma).unwrap(),
        serde_json::from_slice(&mb).unwrap(),
    );
    ma["config"]["output_dir"] = Value::Null;
    mb["config"]["output_dir"] = Value::Null;
    assert_eq!(ma, mb);
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"seed": 1, "restarts": 2, "generate": {"n": 30}}"#).unwrap();
    let out = tmp.path().join("out");
    ok(&[
        "generate",
        "--config",
        path(&cfg),
        "--seed",
        "2",
        "--out",
        path(&out),
    ]);
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["config"]["seed"], 2);
    assert_eq!(m["config"]["restarts"], 2);
    assert_eq!(m["summary"]["n"], 30);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, r#"{"sede": 1}"#).unwrap();
    assert_eq!(
        gwmv(&["generate", "--config", path(&cfg)]).status.code(),
        Some(2)
    );
    assert_eq!(
        gwmv(&["cluster", "--out", path(&tmp.path().join("x"))])
            .status
            .code(),
        Some(2)
    );

    let missing = tmp.path().join("missing");
    assert_eq!(
        gwmv(&[
            "cluster",
            path(&missing),
            "--out",
            path(&tmp.path().join("y"))
        ])
        .status
        .code(),
        Some(3)
    );

    let broken = tmp.path().join("broken");
    std::fs::create_dir(&broken).unwrap();
    std::fs::write(broken.join("view_1.csv"), "0,1\n2,0\n").unwrap();
    assert_eq!(
        gwmv(&[
            "cluster",
            path(&broken),
            "-k",
            "1",
            "--out",
            path(&tmp.path().join("z"))
        ])
        .status
        .code(),
        Some(3)
    );

    let data = tmp.path().join("blobs");
    blobs(&data, 30, 2);
    let out = tmp.path().join("k");
    assert_eq!(
        gwmv(&["cluster", path(&data), "-k", "31", "--out", path(&out)])
            .status
            .code(),
        Some(2)
    );

    let strict = tmp.path().join("strict.json");
    std::fs::write(
        &strict,
        r#"{"cluster": {"mds": {"outer_iters": 1, "tol": 0.0}}}"#,
    )
    .unwrap();
    let out = tmp.path().join("strict");
    let args = [
        "cluster",
        path(&data),
        "-k",
        "2",
        "--config",
        path(&strict),
        "--out",
        path(&out),
    ];
    ok(&args);
    let mut strict_args = args.to_vec();
    strict_args.push("--strict");
    assert_eq!(gwmv(&strict_args).status.code(), Some(4));
    assert!(out.join("manifest.json").exists());
}
