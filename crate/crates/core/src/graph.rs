//! Graph bundles: structure, features, labels and the train/val/test split.
//!
//! A bundle lives on disk as a directory of five files:
//!
//! | file           | contents                                                    |
//! |----------------|-------------------------------------------------------------|
//! | `meta.json`    | `{"num_nodes": N, "num_features": d, "num_classes": C}`    |
//! | `edges.csv`    | header `src,dst`, one undirected edge per line, `src < dst` |
//! | `features.csv` | `N` lines of `d` comma-separated floats                     |
//! | `labels.csv`   | `N` lines, class id or `-1` for unknown                     |
//! | `splits.json`  | `{"train": [..], "val": [..], "test": [..]}`, ids ascending |
//!
//! Nodes listed in no split form the *extra* set. The unlabeled set used by
//! the sharpening objective is everything outside `train`.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::SparseOperator;
use crate::error::GraphError;
use crate::fmt::sig17;
use crate::tensor::{spmm, DenseMatrix, SparseCSR};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Meta {
    num_nodes: usize,
    num_features: usize,
    num_classes: usize,
}

/// Immutable, validated node-classification dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBundle {
    num_classes: usize,
    edges: Vec<(usize, usize)>,
    features: DenseMatrix,
    labels: Vec<Option<usize>>,
    split: Split,
}

impl GraphBundle {
    /// Validates and assembles a bundle. Edges may be given in either
    /// orientation; they are stored as `(min, max)` in sorted order.
    pub fn new(
        num_classes: usize,
        edges: Vec<(usize, usize)>,
        features: DenseMatrix,
        labels: Vec<Option<usize>>,
        split: Split,
    ) -> Result<Self, GraphError> {
        let n = features.rows();
        if labels.len() != n {
            return Err(GraphError::Invalid(format!(
                "{} labels for {n} feature rows",
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(GraphError::Invalid("num_classes must be positive".into()));
        }
        if let Some(row) = features.first_non_finite_row() {
            return Err(GraphError::Invalid(format!("non-finite feature in node {row}")));
        }
        for (v, l) in labels.iter().enumerate() {
            if let Some(c) = l {
                if *c >= num_classes {
                    return Err(GraphError::Invalid(format!(
                        "node {v} has label {c} outside [0, {num_classes})"
                    )));
                }
            }
        }
        let mut seen = BTreeSet::new();
        let mut norm_edges = Vec::with_capacity(edges.len());
        for &(a, b) in &edges {
            if a >= n || b >= n {
                return Err(GraphError::Invalid(format!("edge ({a}, {b}) outside [0, {n})")));
            }
            if a == b {
                return Err(GraphError::Invalid(format!("self-loop on node {a}")));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(GraphError::Invalid(format!("duplicate edge ({}, {})", e.0, e.1)));
            }
            norm_edges.push(e);
        }
        norm_edges.sort_unstable();
        validate_split(&split, &labels)?;
        Ok(Self {
            num_classes,
            edges: norm_edges,
            features,
            labels,
            split,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn split(&self) -> &Split {
        &self.split
    }

    /// `V_L`: the training nodes.
    pub fn labeled(&self) -> &[usize] {
        &self.split.train
    }

    /// `V_U = V \ V_L`, ascending.
    pub fn unlabeled(&self) -> Vec<usize> {
        let train: BTreeSet<_> = self.split.train.iter().copied().collect();
        (0..self.num_nodes()).filter(|v| !train.contains(v)).collect()
    }

    /// Nodes in no split list, ascending.
    pub fn extra(&self) -> Vec<usize> {
        let listed: BTreeSet<_> = self
            .split
            .train
            .iter()
            .chain(&self.split.val)
            .chain(&self.split.test)
            .copied()
            .collect();
        (0..self.num_nodes()).filter(|v| !listed.contains(v)).collect()
    }

    /// Known labels of `nodes`; every node must be labeled.
    pub fn labels_of(&self, nodes: &[usize]) -> Result<Vec<usize>, GraphError> {
        nodes
            .iter()
            .map(|&v| {
                self.labels[v]
                    .ok_or_else(|| GraphError::Invalid(format!("node {v} has no label")))
            })
            .collect()
    }

    /// Sorted neighbor lists.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn with_split(&self, split: Split) -> Result<Self, GraphError> {
        validate_split(&split, &self.labels)?;
        Ok(Self {
            split,
            ..self.clone()
        })
    }

    /// Renames node `v` to `perm[v]` everywhere.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, GraphError> {
        let n = self.num_nodes();
        let mut check = perm.to_vec();
        check.sort_unstable();
        if check != (0..n).collect::<Vec<_>>() {
            return Err(GraphError::Invalid("not a permutation".into()));
        }
        let mut features = DenseMatrix::zeros(n, self.num_features());
        let mut labels = vec![None; n];
        for v in 0..n {
            features.row_mut(perm[v]).copy_from_slice(self.features.row(v));
            labels[perm[v]] = self.labels[v];
        }
        let edges = self.edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        let map = |xs: &[usize]| {
            let mut out: Vec<usize> = xs.iter().map(|&v| perm[v]).collect();
            out.sort_unstable();
            out
        };
        let split = Split {
            train: map(&self.split.train),
            val: map(&self.split.val),
            test: map(&self.split.test),
        };
        Self::new(self.num_classes, edges, features, labels, split)
    }
}

fn validate_split(split: &Split, labels: &[Option<usize>]) -> Result<(), GraphError> {
    let n = labels.len();
    let mut owner: Vec<Option<&str>> = vec![None; n];
    for (name, ids) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        for &v in ids.iter() {
            if v >= n {
                return Err(GraphError::Invalid(format!("{name} node {v} outside [0, {n})")));
            }
            if let Some(prev) = owner[v] {
                return Err(GraphError::Invalid(format!(
                    "node {v} appears in both {prev} and {name}"
                )));
            }
            owner[v] = Some(name);
            if labels[v].is_none() {
                return Err(GraphError::Invalid(format!("{name} node {v} has no label")));
            }
        }
    }
    Ok(())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GraphError + '_ {
    move |source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(file: &str, line: usize, message: impl Into<String>) -> GraphError {
    GraphError::Parse {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

fn read(dir: &Path, name: &str) -> Result<String, GraphError> {
    let path = dir.join(name);
    fs::read_to_string(&path).map_err(io_err(&path))
}

/// Loads and validates a bundle directory.
pub fn load_bundle(dir: impl AsRef<Path>) -> Result<GraphBundle, GraphError> {
    let dir = dir.as_ref();
    let meta: Meta = serde_json::from_str(&read(dir, "meta.json")?)
        .map_err(|e| parse_err("meta.json", e.line(), e.to_string()))?;

    let mut edges = Vec::new();
    let mut seen = BTreeSet::new();
    let text = read(dir, "edges.csv")?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "src,dst" => {}
        _ => return Err(parse_err("edges.csv", 1, "expected header `src,dst`")),
    }
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| parse_err("edges.csv", lineno, "expected `src,dst`"))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| parse_err("edges.csv", lineno, format!("{s:?}: {e}")))
        };
        let (a, b) = (parse(a)?, parse(b)?);
        if a >= b {
            return Err(parse_err("edges.csv", lineno, format!("src {a} must be < dst {b}")));
        }
        if b >= meta.num_nodes {
            return Err(parse_err("edges.csv", lineno, format!("node {b} >= num_nodes")));
        }
        if !seen.insert((a, b)) {
            return Err(parse_err("edges.csv", lineno, format!("duplicate edge ({a}, {b})")));
        }
        edges.push((a, b));
    }

    let text = read(dir, "features.csv")?;
    let mut data = Vec::with_capacity(meta.num_nodes * meta.num_features);
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for tok in line.split(',') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|e| parse_err("features.csv", i + 1, format!("{tok:?}: {e}")))?;
            data.push(v);
        }
        if data.len() - before != meta.num_features {
            return Err(parse_err(
                "features.csv",
                i + 1,
                format!("{} values, expected {}", data.len() - before, meta.num_features),
            ));
        }
        rows += 1;
    }
    if rows != meta.num_nodes {
        return Err(parse_err(
            "features.csv",
            rows,
            format!("{rows} rows, expected {}", meta.num_nodes),
        ));
    }
    let features = DenseMatrix::from_vec(rows, meta.num_features, data)?;

    let text = read(dir, "labels.csv")?;
    let mut labels = Vec::with_capacity(meta.num_nodes);
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: i64 = t
            .parse()
            .map_err(|e| parse_err("labels.csv", i + 1, format!("{t:?}: {e}")))?;
        let label = match v {
            -1 => None,
            c if c >= 0 && (c as usize) < meta.num_classes => Some(c as usize),
            c => {
                return Err(parse_err(
                    "labels.csv",
                    i + 1,
                    format!("label {c} outside [0, {}) and not -1", meta.num_classes),
                ))
            }
        };
        labels.push(label);
    }
    if labels.len() != meta.num_nodes {
        return Err(parse_err(
            "labels.csv",
            labels.len(),
            format!("{} labels, expected {}", labels.len(), meta.num_nodes),
        ));
    }

    let split: Split = serde_json::from_str(&read(dir, "splits.json")?)
        .map_err(|e| parse_err("splits.json", e.line(), e.to_string()))?;
    for (name, ids) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        if ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(parse_err(
                "splits.json",
                1,
                format!("{name} ids must be strictly ascending"),
            ));
        }
    }

    GraphBundle::new(meta.num_classes, edges, features, labels, split)
}

/// Writes `contents` to `path` via a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let mut tmp = PathBuf::from(path);
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    tmp.set_file_name(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Writes a bundle directory in the canonical format.
pub fn save_bundle(bundle: &GraphBundle, dir: impl AsRef<Path>) -> Result<(), GraphError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let put = |name: &str, body: String| -> Result<(), GraphError> {
        let path = dir.join(name);
        write_atomic(&path, body.as_bytes()).map_err(io_err(&path))
    };

    let meta = Meta {
        num_nodes: bundle.num_nodes(),
        num_features: bundle.num_features(),
        num_classes: bundle.num_classes,
    };
    put("meta.json", serde_json::to_string(&meta).expect("meta") + "\n")?;

    let mut edges = String::from("src,dst\n");
    for &(a, b) in &bundle.edges {
        edges.push_str(&format!("{a},{b}\n"));
    }
    put("edges.csv", edges)?;

    let mut feats = String::new();
    for r in 0..bundle.num_nodes() {
        let row: Vec<String> = bundle.features.row(r).iter().map(|&v| sig17(v)).collect();
        feats.push_str(&row.join(","));
        feats.push('\n');
    }
    put("features.csv", feats)?;

    let mut labels = String::new();
    for l in &bundle.labels {
        match l {
            Some(c) => labels.push_str(&format!("{c}\n")),
            None => labels.push_str("-1\n"),
        }
    }
    put("labels.csv", labels)?;

    let mut split = bundle.split.clone();
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    put("splits.json", serde_json::to_string(&split).expect("split") + "\n")
}

/// Symmetric GCN normalization `D̃^{-1/2} (A + I) D̃^{-1/2}`.
pub fn gcn_normalize(bundle: &GraphBundle) -> SparseCSR {
    let adj = bundle.neighbors();
    let deg: Vec<f64> = adj.iter().map(|l| l.len() as f64 + 1.0).collect();
    let mut triplets = Vec::with_capacity(bundle.num_nodes() + 2 * bundle.edges.len());
    for (u, list) in adj.iter().enumerate() {
        triplets.push((u, u, 1.0 / (deg[u] * deg[u]).sqrt()));
        for &v in list {
            triplets.push((u, v, 1.0 / (deg[u] * deg[v]).sqrt()));
        }
    }
    let n = bundle.num_nodes();
    SparseCSR::from_triplets(n, n, &triplets).expect("validated bundle yields valid CSR")
}

/// Row-stochastic neighbor-averaging operator; degree-0 rows are empty.
pub fn mean_operator(bundle: &GraphBundle) -> SparseCSR {
    let adj = bundle.neighbors();
    let mut triplets = Vec::with_capacity(2 * bundle.edges.len());
    for (u, list) in adj.iter().enumerate() {
        let w = 1.0 / list.len() as f64;
        for &v in list {
            triplets.push((u, v, w));
        }
    }
    let n = bundle.num_nodes();
    SparseCSR::from_triplets(n, n, &triplets).expect("validated bundle yields valid CSR")
}

/// Mean of `h` over each node's neighbors (the node itself excluded).
pub fn neighbor_mean(bundle: &GraphBundle, h: &DenseMatrix) -> Result<DenseMatrix, GraphError> {
    Ok(spmm(&mean_operator(bundle), h)?)
}

/// Sparse operators the backbones share, built once per bundle.
#[derive(Debug, Clone)]
pub struct GraphOperators {
    pub gcn: Arc<SparseOperator>,
    pub mean: Arc<SparseOperator>,
}

impl GraphOperators {
    pub fn new(bundle: &GraphBundle) -> Self {
        Self {
            gcn: SparseOperator::new(gcn_normalize(bundle)),
            mean: SparseOperator::new(mean_operator(bundle)),
        }
    }
}

/// Class-balanced random split: `per_class` training nodes from each class,
/// then `val` and `test` nodes drawn uniformly from the remaining labeled
/// nodes. Lists are returned ascending.
pub fn make_planetoid_split(
    labels: &[Option<usize>],
    num_classes: usize,
    per_class: usize,
    val: usize,
    test: usize,
    seed: u64,
) -> Result<Split, GraphError> {
    let mut by_class = vec![Vec::new(); num_classes];
    for (v, l) in labels.iter().enumerate() {
        if let Some(c) = l {
            by_class
                .get_mut(*c)
                .ok_or_else(|| GraphError::Invalid(format!("label {c} >= {num_classes}")))?
                .push(v);
        }
    }
    let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let labeled: usize = counts.iter().sum();
    if counts.iter().any(|&c| c < per_class) || labeled < per_class * num_classes + val + test {
        return Err(GraphError::SplitInfeasible(format!(
            "need {per_class} train per class plus {val} val and {test} test; labeled nodes per class: {counts:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(per_class * num_classes);
    let mut rest = Vec::with_capacity(labeled);
    for mut nodes in by_class {
        nodes.shuffle(&mut rng);
        let tail = nodes.split_off(per_class);
        train.extend(nodes);
        rest.extend(tail);
    }
    rest.sort_unstable();
    rest.shuffle(&mut rng);
    let mut val_ids = rest[..val].to_vec();
    let mut test_ids = rest[val..val + test].to_vec();
    train.sort_unstable();
    val_ids.sort_unstable();
    test_ids.sort_unstable();
    Ok(Split {
        train,
        val: val_ids,
        test: test_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> GraphBundle {
        let x = DenseMatrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        GraphBundle::new(
            2,
            vec![(0, 1), (1, 2)],
            x,
            vec![Some(0), Some(1), Some(0)],
            Split {
                train: vec![0],
                val: vec![1],
                test: vec![],
            },
        )
        .unwrap()
    }

    #[test]
    fn gcn_two_nodes() {
        let x = DenseMatrix::zeros(2, 1);
        let b = GraphBundle::new(
            1,
            vec![(0, 1)],
            x,
            vec![Some(0), Some(0)],
            Split {
                train: vec![0],
                val: vec![],
                test: vec![],
            },
        )
        .unwrap();
        let a = gcn_normalize(&b).to_dense();
        assert_eq!(a.data(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn gcn_isolated_and_symmetric() {
        let x = DenseMatrix::zeros(4, 1);
        let b = GraphBundle::new(
            1,
            vec![(0, 1), (1, 2)],
            x,
            vec![Some(0); 4],
            Split {
                train: vec![0],
                val: vec![],
                test: vec![],
            },
        )
        .unwrap();
        let a = gcn_normalize(&b);
        assert_eq!(a.get(3, 3), 1.0);
        let d = a.to_dense();
        assert_eq!(d, d.transpose());
    }

    #[test]
    fn neighbor_mean_examples() {
        let b = path3();
        let out = neighbor_mean(&b, b.features()).unwrap();
        assert_eq!(out.data(), &[2.0, 2.0, 2.0]);

        let x = DenseMatrix::from_rows(&[vec![1.0], vec![3.0], vec![9.0], vec![5.0]]).unwrap();
        let star = GraphBundle::new(
            1,
            vec![(0, 2), (1, 2)],
            x.clone(),
            vec![Some(0); 4],
            Split {
                train: vec![0],
                val: vec![],
                test: vec![],
            },
        )
        .unwrap();
        let out = neighbor_mean(&star, &x).unwrap();
        assert_eq!(out.get(2, 0), 2.0);
        assert_eq!(out.get(3, 0), 0.0);
    }

    #[test]
    fn neighbor_mean_shape_mismatch() {
        let b = path3();
        assert!(neighbor_mean(&b, &DenseMatrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn split_overlap_names_node() {
        let x = DenseMatrix::zeros(3, 1);
        let err = GraphBundle::new(
            2,
            vec![],
            x,
            vec![Some(0), Some(1), Some(0)],
            Split {
                train: vec![0, 2],
                val: vec![2],
                test: vec![],
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("node 2"), "{err}");
    }

    #[test]
    fn unlabeled_is_complement_of_train() {
        let b = path3();
        assert_eq!(b.unlabeled(), vec![1, 2]);
        assert_eq!(b.extra(), vec![2]);
    }

    #[test]
    fn rejects_bad_edges() {
        let x = DenseMatrix::zeros(2, 1);
        let labels = vec![Some(0), Some(0)];
        let split = Split {
            train: vec![0],
            val: vec![],
            test: vec![],
        };
        assert!(GraphBundle::new(1, vec![(0, 0)], x.clone(), labels.clone(), split.clone()).is_err());
        assert!(GraphBundle::new(1, vec![(0, 1), (1, 0)], x.clone(), labels.clone(), split.clone()).is_err());
        assert!(GraphBundle::new(1, vec![(0, 2)], x, labels, split).is_err());
    }

    #[test]
    fn planetoid_split_sizes() {
        let labels: Vec<Option<usize>> = (0..600).map(|v| Some(v % 2)).collect();
        let s = make_planetoid_split(&labels, 2, 20, 100, 200, 1).unwrap();
        assert_eq!(s.train.len(), 40);
        assert_eq!(s.val.len(), 100);
        assert_eq!(s.test.len(), 200);
        for c in 0..2 {
            assert_eq!(s.train.iter().filter(|&&v| labels[v] == Some(c)).count(), 20);
        }
        assert_eq!(s, make_planetoid_split(&labels, 2, 20, 100, 200, 1).unwrap());
        assert_ne!(s, make_planetoid_split(&labels, 2, 20, 100, 200, 2).unwrap());
    }

    #[test]
    fn planetoid_split_infeasible() {
        // 440 labeled nodes: 40 train leaves 400, so val=500 cannot fit.
        let labels: Vec<Option<usize>> = (0..440).map(|v| Some(v % 2)).collect();
        let err = make_planetoid_split(&labels, 2, 20, 500, 0, 0).unwrap_err();
        assert!(matches!(err, GraphError::SplitInfeasible(_)));
        assert!(err.to_string().contains("[220, 220]"));
    }
}
