//! Datasets on disk and a stochastic-block-model generator.
//!
//! A dataset directory holds five UTF-8 files:
//!
//! | file | content |
//! |------|---------|
//! | `meta.json` | `{name, num_nodes, num_classes, feature_dim, feature_kind}` |
//! | `edges.tsv` | `i<TAB>j` per undirected edge, `i < j`, sorted |
//! | `features.csv` / `features.tsv` | dense rows, or sparse `node<TAB>dim<TAB>value` |
//! | `labels.tsv` | `node<TAB>class` |
//! | `masks.tsv` | `node<TAB>train\|val\|test` |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{DatasetErrorKind as Kind, Error, Result};
use crate::features::FeatureMatrix;
use crate::graph::SparseGraph;
use crate::rng::{SeededRng, Stream};

/// Label of nodes that carry none (never part of a mask).
pub const UNLABELED: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Dense,
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub graph: SparseGraph,
    pub features: FeatureMatrix,
    pub feature_kind: FeatureKind,
    /// Class per node, [`UNLABELED`] where unknown.
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    name: String,
    num_nodes: usize,
    num_classes: usize,
    feature_dim: usize,
    feature_kind: FeatureKind,
}

impl Dataset {
    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.dim()
    }

    pub fn mask(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    /// Checks every structural invariant; `path` only labels errors.
    pub fn validate(&self, path: &Path) -> Result<()> {
        let n = self.num_nodes();
        if self.features.num_rows() != n || self.labels.len() != n {
            return Err(Error::dataset(path, Kind::InconsistentMetadata, "node counts disagree"));
        }
        if self.num_classes < 2 {
            return Err(Error::dataset(path, Kind::InconsistentMetadata, "need at least two classes"));
        }
        let mut owner = vec![None; n];
        for split in [Split::Train, Split::Val, Split::Test] {
            for &v in self.mask(split) {
                if v >= n {
                    return Err(Error::dataset(
                        path,
                        Kind::IndexOutOfRange,
                        format!("{} mask node {v} >= {n}", split.as_str()),
                    ));
                }
                if let Some(prev) = owner[v].replace(split) {
                    return Err(Error::dataset(
                        path,
                        Kind::OverlappingMasks,
                        format!("node {v} in both {} and {}", Split::as_str(prev), split.as_str()),
                    ));
                }
                if self.labels[v] == UNLABELED {
                    return Err(Error::dataset(
                        path,
                        Kind::UnlabeledMaskedNode,
                        format!("masked node {v} has no label"),
                    ));
                }
            }
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l != UNLABELED && l >= self.num_classes) {
            return Err(Error::dataset(
                path,
                Kind::IndexOutOfRange,
                format!("label {bad} >= {} classes", self.num_classes),
            ));
        }
        Ok(())
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::dataset(path, Kind::MissingFile, "file not found")
        } else {
            Error::Io(e)
        }
    })
}

/// Non-empty, non-comment lines split on tabs, with 1-based line numbers.
fn tsv_rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i + 1, l.split('\t').map(str::trim).collect()))
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, field: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::dataset(path, Kind::Malformed, format!("line {line}: cannot parse {field:?}")))
}

fn expect_columns(path: &Path, line: usize, row: &[&str], count: usize) -> Result<()> {
    if row.len() != count {
        return Err(Error::dataset(
            path,
            Kind::Malformed,
            format!("line {line}: expected {count} columns, found {}", row.len()),
        ));
    }
    Ok(())
}

fn check_node(path: &Path, line: usize, node: usize, n: usize) -> Result<()> {
    if node >= n {
        return Err(Error::dataset(
            path,
            Kind::IndexOutOfRange,
            format!("line {line}: node {node} >= {n}"),
        ));
    }
    Ok(())
}

/// Reads and validates a dataset directory.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    let meta: Meta = serde_json::from_str(&read(&meta_path)?)
        .map_err(|e| Error::dataset(&meta_path, Kind::Malformed, e.to_string()))?;
    let n = meta.num_nodes;

    let edges_path = dir.join("edges.tsv");
    let mut edges = Vec::new();
    for (line, row) in tsv_rows(&read(&edges_path)?) {
        expect_columns(&edges_path, line, &row, 2)?;
        let i: usize = parse_field(&edges_path, line, row[0])?;
        let j: usize = parse_field(&edges_path, line, row[1])?;
        check_node(&edges_path, line, i, n)?;
        check_node(&edges_path, line, j, n)?;
        edges.push((i, j));
    }
    let graph = SparseGraph::from_edges(n, &edges)?;

    let features = match meta.feature_kind {
        FeatureKind::Dense => load_dense_features(&dir.join("features.csv"), n, meta.feature_dim)?,
        FeatureKind::Sparse => load_sparse_features(&dir.join("features.tsv"), n, meta.feature_dim)?,
    };

    let labels_path = dir.join("labels.tsv");
    let mut labels = vec![UNLABELED; n];
    for (line, row) in tsv_rows(&read(&labels_path)?) {
        expect_columns(&labels_path, line, &row, 2)?;
        let node: usize = parse_field(&labels_path, line, row[0])?;
        let class: usize = parse_field(&labels_path, line, row[1])?;
        check_node(&labels_path, line, node, n)?;
        if class >= meta.num_classes {
            return Err(Error::dataset(
                &labels_path,
                Kind::IndexOutOfRange,
                format!("line {line}: class {class} >= {}", meta.num_classes),
            ));
        }
        labels[node] = class;
    }

    let masks_path = dir.join("masks.tsv");
    let mut masks: BTreeMap<Split, Vec<usize>> = BTreeMap::new();
    let mut seen = vec![false; n];
    for (line, row) in tsv_rows(&read(&masks_path)?) {
        expect_columns(&masks_path, line, &row, 2)?;
        let node: usize = parse_field(&masks_path, line, row[0])?;
        check_node(&masks_path, line, node, n)?;
        let split = match row[1] {
            "train" => Split::Train,
            "val" => Split::Val,
            "test" => Split::Test,
            other => {
                return Err(Error::dataset(
                    &masks_path,
                    Kind::Malformed,
                    format!("line {line}: unknown split {other:?}"),
                ))
            }
        };
        if std::mem::replace(&mut seen[node], true) {
            return Err(Error::dataset(
                &masks_path,
                Kind::OverlappingMasks,
                format!("line {line}: node {node} listed twice"),
            ));
        }
        masks.entry(split).or_default().push(node);
    }
    let mut take = |s: Split| {
        let mut v = masks.remove(&s).unwrap_or_default();
        v.sort_unstable();
        v
    };
    let dataset = Dataset {
        name: meta.name,
        graph,
        features,
        feature_kind: meta.feature_kind,
        labels,
        num_classes: meta.num_classes,
        train: take(Split::Train),
        val: take(Split::Val),
        test: take(Split::Test),
    };
    dataset.validate(dir)?;
    Ok(dataset)
}

fn load_dense_features(path: &Path, n: usize, d: usize) -> Result<FeatureMatrix> {
    let text = read(path)?;
    let mut data = Vec::with_capacity(n * d);
    let mut rows = 0;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let before = data.len();
        for field in line.split(',') {
            let v: f64 = parse_field(path, i + 1, field.trim())?;
            if !v.is_finite() {
                return Err(Error::dataset(path, Kind::NonFiniteFeature, format!("line {}", i + 1)));
            }
            data.push(v);
        }
        if data.len() - before != d {
            return Err(Error::dataset(
                path,
                Kind::Malformed,
                format!("line {}: expected {d} values", i + 1),
            ));
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::dataset(
            path,
            Kind::InconsistentMetadata,
            format!("{rows} feature rows for {n} nodes"),
        ));
    }
    FeatureMatrix::new(Array2::from_shape_vec((n, d), data).expect("checked shape"))
}

fn load_sparse_features(path: &Path, n: usize, d: usize) -> Result<FeatureMatrix> {
    let mut triplets = Vec::new();
    for (line, row) in tsv_rows(&read(path)?) {
        expect_columns(path, line, &row, 3)?;
        let node: usize = parse_field(path, line, row[0])?;
        let dim: usize = parse_field(path, line, row[1])?;
        let value: f64 = parse_field(path, line, row[2])?;
        check_node(path, line, node, n)?;
        if dim >= d {
            return Err(Error::dataset(
                path,
                Kind::IndexOutOfRange,
                format!("line {line}: dimension {dim} >= {d}"),
            ));
        }
        if !value.is_finite() {
            return Err(Error::dataset(path, Kind::NonFiniteFeature, format!("line {line}")));
        }
        triplets.push((node, dim, value));
    }
    FeatureMatrix::from_triplets(n, d, &triplets)
}

/// Writes `dataset` in the directory format; the output is a pure function
/// of the dataset, so saving twice yields identical bytes.
pub fn save_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let meta = Meta {
        name: dataset.name.clone(),
        num_nodes: dataset.num_nodes(),
        num_classes: dataset.num_classes,
        feature_dim: dataset.feature_dim(),
        feature_kind: dataset.feature_kind,
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;

    let mut edges = String::new();
    for (i, j) in dataset.graph.edge_list() {
        writeln!(edges, "{i}\t{j}").expect("write to string");
    }
    fs::write(dir.join("edges.tsv"), edges)?;

    let mut feats = String::new();
    match dataset.feature_kind {
        FeatureKind::Dense => {
            for row in dataset.features.view().rows() {
                let fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                feats.push_str(&fields.join(","));
                feats.push('\n');
            }
            fs::write(dir.join("features.csv"), feats)?;
        }
        FeatureKind::Sparse => {
            for i in 0..dataset.num_nodes() {
                for (j, v) in dataset.features.row_nonzeros(i) {
                    writeln!(feats, "{i}\t{j}\t{v:?}").expect("write to string");
                }
            }
            fs::write(dir.join("features.tsv"), feats)?;
        }
    }

    let mut labels = String::new();
    for (i, &l) in dataset.labels.iter().enumerate() {
        if l != UNLABELED {
            writeln!(labels, "{i}\t{l}").expect("write to string");
        }
    }
    fs::write(dir.join("labels.tsv"), labels)?;

    let mut rows: Vec<(usize, Split)> = Vec::new();
    for split in [Split::Train, Split::Val, Split::Test] {
        rows.extend(dataset.mask(split).iter().map(|&v| (v, split)));
    }
    rows.sort_unstable();
    let mut masks = String::new();
    for (v, split) in rows {
        writeln!(masks, "{v}\t{}", split.as_str()).expect("write to string");
    }
    fs::write(dir.join("masks.tsv"), masks)?;
    Ok(())
}

/// Planted-partition graph with class-dependent Gaussian features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub name: String,
    /// Size of each planted community; community index is the class label.
    pub blocks: Vec<usize>,
    pub p_intra: f64,
    pub p_inter: f64,
    pub feature_dim: usize,
    /// Class `c` features have mean `mean_shift · e_(c mod d)` and unit variance.
    pub mean_shift: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn num_nodes(&self) -> usize {
        self.blocks.iter().sum()
    }

    pub fn num_classes(&self) -> usize {
        self.blocks.len()
    }

    /// `count` equal blocks of `size` nodes.
    pub fn balanced(name: &str, count: usize, size: usize, p_intra: f64, p_inter: f64, feature_dim: usize, mean_shift: f64, seed: u64) -> Self {
        Self {
            name: name.to_string(),
            blocks: vec![size; count],
            p_intra,
            p_inter,
            feature_dim,
            mean_shift,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (label, p) in [("p_intra", self.p_intra), ("p_inter", self.p_inter)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{label} = {p} is not a probability")));
            }
        }
        if self.blocks.len() < 2 || self.blocks.contains(&0) {
            return Err(Error::invalid("need at least two non-empty blocks"));
        }
        if self.feature_dim == 0 {
            return Err(Error::invalid("feature dimension must be positive"));
        }
        if !self.mean_shift.is_finite() {
            return Err(Error::invalid("mean shift must be finite"));
        }
        Ok(())
    }

    /// Parses the flat `key=value` spec format used by the CLI.
    pub fn parse(text: &str) -> Result<Self> {
        let mut name = None;
        let mut blocks = None;
        let mut p_intra = None;
        let mut p_inter = None;
        let mut feature_dim = None;
        let mut mean_shift = None;
        let mut seed = None;
        for (key, value) in crate::harness::key_values(text)? {
            let bad = |e: String| Error::Config(format!("{key}: {e}"));
            match key.as_str() {
                "name" => name = Some(value.clone()),
                "blocks" => {
                    blocks = Some(
                        value
                            .split(',')
                            .map(|b| b.trim().parse::<usize>().map_err(|e| bad(e.to_string())))
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                "p_intra" => p_intra = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "p_inter" => p_inter = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "feature_dim" => feature_dim = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "mean_shift" => mean_shift = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "seed" => seed = Some(value.parse::<u64>().map_err(|e| bad(e.to_string()))?),
                other => return Err(Error::Config(format!("unknown key {other:?}"))),
            }
        }
        let missing = |k: &str| Error::Config(format!("missing key {k:?}"));
        let spec = Self {
            name: name.unwrap_or_else(|| "synthetic".to_string()),
            blocks: blocks.ok_or_else(|| missing("blocks"))?,
            p_intra: p_intra.ok_or_else(|| missing("p_intra"))?,
            p_inter: p_inter.ok_or_else(|| missing("p_inter"))?,
            feature_dim: feature_dim.ok_or_else(|| missing("feature_dim"))?,
            mean_shift: mean_shift.unwrap_or(1.0),
            seed: seed.unwrap_or(0),
        };
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }
}

/// Samples a stochastic block model dataset with a 60/20/20 random split.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = SeededRng::stream(spec.seed, Stream::Synthetic);
    let n = spec.num_nodes();
    let labels: Vec<usize> = spec
        .blocks
        .iter()
        .enumerate()
        .flat_map(|(c, &size)| std::iter::repeat_n(c, size))
        .collect();

    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { spec.p_intra } else { spec.p_inter };
            if rng.bernoulli(p) {
                edges.push((i, j));
            }
        }
    }
    let graph = SparseGraph::from_edges(n, &edges)?;

    let d = spec.feature_dim;
    let mut dense = Array2::zeros((n, d));
    for (i, mut row) in dense.rows_mut().into_iter().enumerate() {
        for v in row.iter_mut() {
            *v = rng.standard_normal();
        }
        row[labels[i] % d] += spec.mean_shift;
    }
    let features = FeatureMatrix::new(dense)?;

    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let n_train = (0.6 * n as f64).round() as usize;
    let n_val = (0.2 * n as f64).round() as usize;
    let sorted = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };
    let dataset = Dataset {
        name: spec.name.clone(),
        graph,
        features,
        feature_kind: FeatureKind::Dense,
        labels,
        num_classes: spec.num_classes(),
        train: sorted(&order[..n_train]),
        val: sorted(&order[n_train..n_train + n_val]),
        test: sorted(&order[n_train + n_val..]),
    };
    dataset.validate(&PathBuf::from(format!("<synthetic:{}>", spec.name)))?;
    Ok(dataset)
}
