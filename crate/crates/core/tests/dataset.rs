use std::fs;

use dpgcn::dataset::{generate_synthetic, load_dataset, save_dataset, Dataset, FeatureKind, SynthSpec, UNLABELED};
use dpgcn::error::DatasetErrorKind;
use dpgcn::features::FeatureMatrix;
use dpgcn::graph::SparseGraph;
use dpgcn::Error;
use ndarray::array;
use tempfile::TempDir;

fn fixture(dir: &std::path::Path) {
    fs::write(
        dir.join("meta.json"),
        r#"{"name": "tiny", "num_nodes": 3, "num_classes": 2, "feature_dim": 2, "feature_kind": "dense"}"#,
    )
    .unwrap();
    fs::write(dir.join("edges.tsv"), "0\t1\n1\t2\n").unwrap();
    fs::write(dir.join("features.csv"), "1.0,0.0\n0.5,0.5\n0.0,1.0\n").unwrap();
    fs::write(dir.join("labels.tsv"), "0\t0\n1\t1\n2\t1\n").unwrap();
    fs::write(dir.join("masks.tsv"), "0\ttrain\n1\tval\n2\ttest\n").unwrap();
}

fn kind_of(result: dpgcn::Result<Dataset>) -> DatasetErrorKind {
    match result {
        Err(Error::Dataset { kind, .. }) => kind,
        other => panic!("expected dataset error, got {other:?}"),
    }
}

#[test]
fn hand_written_fixture_loads_and_round_trips() {
    let dir = TempDir::new().unwrap();
    fixture(dir.path());
    let data = load_dataset(dir.path()).unwrap();
    assert_eq!(data.num_nodes(), 3);
    assert_eq!(data.graph.num_edges(), 2);
    assert_eq!(data.features.view(), array![[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]]);
    assert_eq!((data.train.clone(), data.val.clone(), data.test.clone()), (vec![0], vec![1], vec![2]));

    let out = TempDir::new().unwrap();
    save_dataset(&data, out.path()).unwrap();
    assert_eq!(load_dataset(out.path()).unwrap(), data);
}

#[test]
fn malformed_inputs_get_specific_errors() {
    let cases: [(&str, &str, DatasetErrorKind); 7] = [
        ("edges.tsv", "0\t3\n", DatasetErrorKind::IndexOutOfRange),
        ("edges.tsv", "0\tone\n", DatasetErrorKind::Malformed),
        ("masks.tsv", "0\ttrain\n0\ttest\n", DatasetErrorKind::OverlappingMasks),
        ("features.csv", "1.0,0.0\nNaN,0.5\n0.0,1.0\n", DatasetErrorKind::NonFiniteFeature),
        ("features.csv", "1.0,0.0\n0.0,1.0\n", DatasetErrorKind::InconsistentMetadata),
        ("labels.tsv", "0\t0\n1\t1\n", DatasetErrorKind::UnlabeledMaskedNode),
        ("labels.tsv", "0\t0\n1\t1\n2\t5\n", DatasetErrorKind::IndexOutOfRange),
    ];
    for (file, content, expected) in cases {
        let dir = TempDir::new().unwrap();
        fixture(dir.path());
        fs::write(dir.path().join(file), content).unwrap();
        assert_eq!(kind_of(load_dataset(dir.path())), expected, "{file}: {content:?}");
    }
    let dir = TempDir::new().unwrap();
    fixture(dir.path());
    fs::remove_file(dir.path().join("labels.tsv")).unwrap();
    assert_eq!(kind_of(load_dataset(dir.path())), DatasetErrorKind::MissingFile);
}

#[test]
fn synthetic_round_trip_is_byte_identical() {
    let spec = SynthSpec::balanced("sbm", 3, 30, 0.2, 0.02, 5, 1.0, 4);
    let data = generate_synthetic(&spec).unwrap();
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    save_dataset(&data, a.path()).unwrap();
    let reloaded = load_dataset(a.path()).unwrap();
    assert_eq!(reloaded, data);
    save_dataset(&reloaded, b.path()).unwrap();
    for file in ["meta.json", "edges.tsv", "features.csv", "labels.tsv", "masks.tsv"] {
        assert_eq!(fs::read(a.path().join(file)).unwrap(), fs::read(b.path().join(file)).unwrap(), "{file}");
    }
}

#[test]
fn sparse_features_and_unlabeled_nodes_round_trip() {
    let graph = SparseGraph::from_edges(5, &[]).unwrap();
    let features = FeatureMatrix::from_triplets(5, 100, &[(0, 3, 1.0), (2, 99, 0.25), (4, 0, -2.5)]).unwrap();
    let data = Dataset {
        name: "sparse".into(),
        graph,
        features,
        feature_kind: FeatureKind::Sparse,
        labels: vec![0, 1, UNLABELED, 1, 0],
        num_classes: 2,
        train: vec![0, 1],
        val: vec![3],
        test: vec![4],
    };
    let dir = TempDir::new().unwrap();
    save_dataset(&data, dir.path()).unwrap();
    assert_eq!(fs::read_to_string(dir.path().join("edges.tsv")).unwrap(), "");
    assert_eq!(load_dataset(dir.path()).unwrap(), data);
}

#[test]
fn block_model_edge_counts_match_binomial_expectation() {
    let spec = SynthSpec::balanced("sbm", 2, 50, 0.2, 0.01, 4, 1.0, 17);
    let data = generate_synthetic(&spec).unwrap();
    let intra = data.graph.edge_list().into_iter().filter(|&(i, j)| data.labels[i] == data.labels[j]).count();
    let inter = data.graph.num_edges() - intra;
    let pairs = 2.0 * (50.0 * 49.0 / 2.0);
    let (mean, sd) = (pairs * 0.2, (pairs * 0.2 * 0.8_f64).sqrt());
    assert_eq!(mean, 490.0);
    assert!((intra as f64 - mean).abs() < 3.0 * sd, "intra edges {intra}");
    let (mean, sd) = (2500.0 * 0.01, (2500.0 * 0.01 * 0.99_f64).sqrt());
    assert!((inter as f64 - mean).abs() < 3.0 * sd, "inter edges {inter}");
}

#[test]
fn block_model_without_inter_edges_is_disconnected() {
    let data = generate_synthetic(&SynthSpec::balanced("sbm", 3, 20, 0.3, 0.0, 2, 1.0, 1)).unwrap();
    assert!(data.graph.edge_list().into_iter().all(|(i, j)| data.labels[i] == data.labels[j]));
}

#[test]
fn block_model_features_are_shifted_by_class() {
    let spec = SynthSpec::balanced("sbm", 2, 400, 0.01, 0.01, 3, 2.0, 8);
    let data = generate_synthetic(&spec).unwrap();
    let x = data.features.view();
    for c in 0..2 {
        let rows: Vec<usize> = (0..data.num_nodes()).filter(|&v| data.labels[v] == c).collect();
        for dim in 0..3 {
            let mean = rows.iter().map(|&v| x[[v, dim]]).sum::<f64>() / rows.len() as f64;
            let expected = if dim == c { 2.0 } else { 0.0 };
            assert!((mean - expected).abs() < 4.0 / (rows.len() as f64).sqrt(), "class {c} dim {dim}: {mean}");
        }
    }
}

#[test]
fn block_model_is_seed_deterministic_with_60_20_20_split() {
    let spec = SynthSpec::balanced("sbm", 4, 25, 0.1, 0.01, 6, 1.0, 2);
    let a = generate_synthetic(&spec).unwrap();
    assert_eq!(a, generate_synthetic(&spec).unwrap());
    assert_eq!((a.train.len(), a.val.len(), a.test.len()), (60, 20, 20));
    let mut other = spec.clone();
    other.seed = 3;
    assert_ne!(a, generate_synthetic(&other).unwrap());
}

#[test]
fn invalid_block_model_specs_are_rejected() {
    assert!(generate_synthetic(&SynthSpec::balanced("x", 2, 10, 1.5, 0.0, 2, 1.0, 0)).is_err());
    assert!(generate_synthetic(&SynthSpec::balanced("x", 2, 10, 0.5, -0.1, 2, 1.0, 0)).is_err());
    assert!(SynthSpec::parse("blocks = 10,10\nbogus = 1\n").is_err());
}
