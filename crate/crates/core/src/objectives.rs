//! Supervised cross-entropy and the transductive sharpening objective.
//!
//! The sharpening objective adds an uncertainty penalty over unlabeled nodes
//! and a matching reward over labeled ones:
//!
//! ```text
//! L = mean_{v ∈ V_L} CE(p_v, y_v)
//!   + λ_U · mean_{v ∈ U}   R_q(p_v)
//!   + λ_L · mean_{v ∈ V_L} R_q(p_v)
//! ```
//!
//! with `R_2(p) = 1 - ‖p‖²` (Tsallis, the default), `R_1 = H` (Shannon) and
//! `λ_L = -λ_U` in the symmetric form. The supervised term is a mean over
//! `V_L`, not the literal sum, so λ keeps the same scale across graphs of
//! different sizes.

use serde::{Deserialize, Serialize};

use crate::autodiff::{self, EntropyKind, NodeId, ValueGraph, LOG_CLAMP};
use crate::error::ObjectiveError;
use crate::graph::GraphBundle;
use crate::tensor::DenseMatrix;

/// Tolerance for simplex membership checks.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Which nodes the unlabeled-side penalty averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnlabeledSet {
    /// `V \ V_L`: validation, test and unsplit nodes.
    AllNonTrain,
    /// Test and unsplit nodes only; validation nodes are left alone.
    TestAndExtra,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsConfig {
    pub lambda_unlabeled: f64,
    pub lambda_labeled: f64,
    /// Entropy order: 1 (Shannon) or 2 (Tsallis).
    pub q: u8,
    pub unlabeled_set: UnlabeledSet,
}

impl TsConfig {
    /// `λ_L = -λ_U`, Tsallis order 2, all non-training nodes.
    pub fn symmetric(lambda: f64) -> Self {
        Self {
            lambda_unlabeled: lambda,
            // Unsigned zero at λ = 0.
            lambda_labeled: 0.0 - lambda,
            q: 2,
            unlabeled_set: UnlabeledSet::AllNonTrain,
        }
    }

    /// Both coefficients zero: plain supervised training.
    pub fn supervised() -> Self {
        Self::symmetric(0.0)
    }

    pub fn with_q(self, q: u8) -> Self {
        Self { q, ..self }
    }

    pub fn with_labeled(self, lambda_labeled: f64) -> Self {
        Self {
            lambda_labeled,
            ..self
        }
    }

    pub fn with_unlabeled_set(self, unlabeled_set: UnlabeledSet) -> Self {
        Self {
            unlabeled_set,
            ..self
        }
    }

    /// Offset of `λ_L` from the symmetric value `-λ_U`.
    pub fn labeled_offset(&self) -> f64 {
        self.lambda_labeled + self.lambda_unlabeled
    }

    pub fn entropy_kind(&self) -> Result<EntropyKind, ObjectiveError> {
        match self.q {
            1 => Ok(EntropyKind::Shannon),
            2 => Ok(EntropyKind::Tsallis2),
            q => Err(ObjectiveError::UnsupportedOrder(q)),
        }
    }

    pub fn is_supervised_only(&self) -> bool {
        self.lambda_unlabeled == 0.0 && self.lambda_labeled == 0.0
    }

    /// Short name of the ablation axis this configuration sits on.
    pub fn variant(&self) -> &'static str {
        if self.is_supervised_only() {
            "supervised"
        } else if self.unlabeled_set == UnlabeledSet::TestAndExtra {
            "test-only"
        } else if self.q == 1 {
            "shannon"
        } else if self.lambda_labeled == 0.0 {
            "no-labeled-term"
        } else if self.labeled_offset() != 0.0 {
            "offset"
        } else {
            "symmetric"
        }
    }
}

/// Per-step decomposition of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub supervised: f64,
    /// Mean `R_q` over the unlabeled set (0 when that branch is skipped).
    pub unlabeled_entropy: f64,
    /// Mean `R_q` over `V_L` (0 when that branch is skipped).
    pub labeled_entropy: f64,
    pub lambda_unlabeled: f64,
    pub lambda_labeled: f64,
    pub q: u8,
}

impl LossReport {
    /// `supervised + λ_U·unlabeled + λ_L·labeled`, recomputed.
    pub fn recombined(&self) -> f64 {
        self.supervised
            + self.lambda_unlabeled * self.unlabeled_entropy
            + self.lambda_labeled * self.labeled_entropy
    }
}

/// Cross-entropy over the labeled mask, as both sum and mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossEntropy {
    pub sum: f64,
    pub mean: f64,
}

/// `-Σ_{v ∈ mask} log max(p[v, y_v], 1e-12)`.
pub fn supervised_ce(
    probs: &DenseMatrix,
    labels: &[Option<usize>],
    mask: &[usize],
) -> Result<CrossEntropy, ObjectiveError> {
    if mask.is_empty() {
        return Err(ObjectiveError::EmptyLabeled);
    }
    let mut sum = 0.0;
    for &v in mask {
        let y = labels
            .get(v)
            .copied()
            .flatten()
            .ok_or(ObjectiveError::UnknownLabel { node: v })?;
        sum -= probs.get(v, y).max(LOG_CLAMP).ln();
    }
    Ok(CrossEntropy {
        sum,
        mean: sum / mask.len() as f64,
    })
}

fn check_simplex(row: usize, p: &[f64]) -> Result<(), ObjectiveError> {
    if let Some(&bad) = p.iter().find(|&&v| !(v >= -SIMPLEX_TOL)) {
        return Err(ObjectiveError::OutsideSimplex {
            row,
            detail: format!("entry {bad}"),
        });
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(ObjectiveError::OutsideSimplex {
            row,
            detail: format!("sums to {s}"),
        });
    }
    Ok(())
}

/// Uncertainty of one distribution: `1 - ‖p‖²` for `q = 2`, Shannon
/// entropy (with `0 log 0 = 0`) for `q = 1`.
pub fn entropy_r(p: &[f64], q: u8) -> Result<f64, ObjectiveError> {
    check_simplex(0, p)?;
    match q {
        1 => Ok(autodiff::shannon(p)),
        2 => Ok(autodiff::tsallis2(p)),
        q => Err(ObjectiveError::UnsupportedOrder(q)),
    }
}

/// Splits cross-entropy into `(H(p), Σ (p_i - y_i) log p_i)`.
pub fn ce_decomposition(p: &[f64], y: &[f64]) -> Result<(f64, f64), ObjectiveError> {
    if p.len() != y.len() {
        return Err(ObjectiveError::OutsideSimplex {
            row: 0,
            detail: format!("{} probabilities vs {} targets", p.len(), y.len()),
        });
    }
    check_simplex(0, p)?;
    check_simplex(0, y)?;
    if let Some((index, &value)) = p.iter().enumerate().find(|(_, &v)| v < LOG_CLAMP) {
        return Err(ObjectiveError::Boundary { index, value });
    }
    let entropy = -p.iter().map(|&pi| pi * pi.ln()).sum::<f64>();
    let residual = p.iter().zip(y).map(|(&pi, &yi)| (pi - yi) * pi.ln()).sum::<f64>();
    Ok((entropy, residual))
}

/// Nodes averaged by the unlabeled-side term, ascending.
pub fn unlabeled_nodes(bundle: &GraphBundle, set: UnlabeledSet) -> Vec<usize> {
    match set {
        UnlabeledSet::AllNonTrain => bundle.unlabeled(),
        UnlabeledSet::TestAndExtra => {
            let mut nodes = bundle.split().test.clone();
            nodes.extend(bundle.extra());
            nodes.sort_unstable();
            nodes
        }
    }
}

/// Evaluates the objective on fixed probabilities.
pub fn ts_objective(
    probs: &DenseMatrix,
    bundle: &GraphBundle,
    cfg: &TsConfig,
) -> Result<LossReport, ObjectiveError> {
    for r in 0..probs.rows() {
        check_simplex(r, probs.row(r))?;
    }
    let kind = cfg.entropy_kind()?;
    let labeled = bundle.labeled();
    let ce = supervised_ce(probs, bundle.labels(), labeled)?;
    let r = |v: usize| match kind {
        EntropyKind::Shannon => autodiff::shannon(probs.row(v)),
        EntropyKind::Tsallis2 => autodiff::tsallis2(probs.row(v)),
    };
    let mean_r = |nodes: &[usize]| nodes.iter().map(|&v| r(v)).sum::<f64>() / nodes.len() as f64;

    let mut report = LossReport {
        total: ce.mean,
        supervised: ce.mean,
        unlabeled_entropy: 0.0,
        labeled_entropy: 0.0,
        lambda_unlabeled: cfg.lambda_unlabeled,
        lambda_labeled: cfg.lambda_labeled,
        q: cfg.q,
    };
    if cfg.lambda_unlabeled != 0.0 {
        let u = unlabeled_nodes(bundle, cfg.unlabeled_set);
        if u.is_empty() {
            return Err(ObjectiveError::EmptyUnlabeled);
        }
        report.unlabeled_entropy = mean_r(&u);
    }
    if cfg.lambda_labeled != 0.0 {
        report.labeled_entropy = mean_r(labeled);
    }
    report.total = report.recombined();
    Ok(report)
}

/// Graph nodes of each objective term.
#[derive(Debug, Clone, Copy)]
pub struct TsNodes {
    pub total: NodeId,
    pub supervised: NodeId,
    pub unlabeled: Option<NodeId>,
    pub labeled: Option<NodeId>,
}

/// Precomputed index sets for repeated objective evaluation on one bundle.
#[derive(Debug, Clone)]
pub struct ObjectiveMasks {
    pub labeled: Vec<usize>,
    pub labels: Vec<usize>,
    pub unlabeled: Vec<usize>,
}

impl ObjectiveMasks {
    pub fn new(bundle: &GraphBundle, set: UnlabeledSet) -> Result<Self, ObjectiveError> {
        let labeled = bundle.labeled().to_vec();
        if labeled.is_empty() {
            return Err(ObjectiveError::EmptyLabeled);
        }
        let labels = labeled
            .iter()
            .map(|&v| bundle.labels()[v].ok_or(ObjectiveError::UnknownLabel { node: v }))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            labeled,
            labels,
            unlabeled: unlabeled_nodes(bundle, set),
        })
    }
}

/// Records the supervised term alone.
pub fn supervised_loss(
    g: &mut ValueGraph,
    probs: NodeId,
    masks: &ObjectiveMasks,
) -> Result<NodeId, ObjectiveError> {
    Ok(g.cross_entropy(probs, &masks.labeled, &masks.labels)?)
}

/// Records the full objective. With both coefficients zero the entropy
/// branches are not recorded and `total` is the supervised node itself.
pub fn ts_loss(
    g: &mut ValueGraph,
    probs: NodeId,
    masks: &ObjectiveMasks,
    cfg: &TsConfig,
) -> Result<TsNodes, ObjectiveError> {
    let kind = cfg.entropy_kind()?;
    let supervised = supervised_loss(g, probs, masks)?;
    let mut terms = vec![(supervised, 1.0)];
    let mut unlabeled = None;
    let mut labeled = None;
    if cfg.lambda_unlabeled != 0.0 {
        if masks.unlabeled.is_empty() {
            return Err(ObjectiveError::EmptyUnlabeled);
        }
        let node = g.mean_entropy(probs, &masks.unlabeled, kind)?;
        terms.push((node, cfg.lambda_unlabeled));
        unlabeled = Some(node);
    }
    if cfg.lambda_labeled != 0.0 {
        let node = g.mean_entropy(probs, &masks.labeled, kind)?;
        terms.push((node, cfg.lambda_labeled));
        labeled = Some(node);
    }
    let total = if terms.len() == 1 {
        supervised
    } else {
        g.combine(&terms)?
    };
    Ok(TsNodes {
        total,
        supervised,
        unlabeled,
        labeled,
    })
}

/// Reads a [`LossReport`] back from recorded nodes.
pub fn report_from_graph(g: &ValueGraph, nodes: &TsNodes, cfg: &TsConfig) -> LossReport {
    let scalar = |id: NodeId| g.value(id).item().expect("scalar node");
    LossReport {
        total: scalar(nodes.total),
        supervised: scalar(nodes.supervised),
        unlabeled_entropy: nodes.unlabeled.map_or(0.0, scalar),
        labeled_entropy: nodes.labeled.map_or(0.0, scalar),
        lambda_unlabeled: cfg.lambda_unlabeled,
        lambda_labeled: cfg.lambda_labeled,
        q: cfg.q,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Split;

    fn two_node_bundle() -> GraphBundle {
        GraphBundle::new(
            2,
            vec![(0, 1)],
            DenseMatrix::zeros(2, 1),
            vec![Some(0), Some(1)],
            Split {
                train: vec![0],
                val: vec![],
                test: vec![1],
            },
        )
        .unwrap()
    }

    #[test]
    fn ce_examples() {
        let labels = vec![Some(0), Some(1)];
        let onehot = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(supervised_ce(&onehot, &labels, &[0, 1]).unwrap().sum, 0.0);

        let uniform = DenseMatrix::filled(2, 4, 0.25);
        let ce = supervised_ce(&uniform, &labels, &[0, 1]).unwrap();
        assert!((ce.mean - 4f64.ln()).abs() < 1e-15);
        assert!((ce.sum - 2.0 * 4f64.ln()).abs() < 1e-15);

        let p = DenseMatrix::from_rows(&[vec![0.8, 0.2]]).unwrap();
        let ce = supervised_ce(&p, &[Some(0)], &[0]).unwrap();
        assert!((ce.sum - 0.223_143_551_314_209_7).abs() < 1e-15);
    }

    #[test]
    fn ce_unknown_label() {
        let p = DenseMatrix::filled(2, 2, 0.5);
        assert!(matches!(
            supervised_ce(&p, &[Some(0), None], &[0, 1]),
            Err(ObjectiveError::UnknownLabel { node: 1 })
        ));
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy_r(&[0.0, 1.0, 0.0], 2).unwrap(), 0.0);
        assert!((entropy_r(&[0.25; 4], 2).unwrap() - 0.75).abs() < 1e-15);
        assert!((entropy_r(&[0.6, 0.4], 2).unwrap() - 0.48).abs() < 1e-15);
        assert!((entropy_r(&[0.5, 0.5], 1).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(entropy_r(&[1.0, 0.0], 1).unwrap(), 0.0);
        assert!(entropy_r(&[0.7, 0.4], 2).is_err());
        assert!(entropy_r(&[1.1, -0.1], 2).is_err());
        assert!(matches!(
            entropy_r(&[0.5, 0.5], 3),
            Err(ObjectiveError::UnsupportedOrder(3))
        ));
    }

    #[test]
    fn decomposition_examples() {
        let (h, r) = ce_decomposition(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert!((h - 2f64.ln()).abs() < 1e-15);
        assert!(r.abs() < 1e-15);

        let eps = 0.05;
        let (h, r) = ce_decomposition(&[1.0 - eps, eps], &[1.0, 0.0]).unwrap();
        assert!((h + r + (1.0 - eps).ln()).abs() < 1e-12);

        assert!(matches!(
            ce_decomposition(&[1.0, 0.0], &[1.0, 0.0]),
            Err(ObjectiveError::Boundary { index: 1, .. })
        ));
    }

    #[test]
    fn two_node_worked_example() {
        let b = two_node_bundle();
        let p = DenseMatrix::from_rows(&[vec![0.8, 0.2], vec![0.6, 0.4]]).unwrap();
        let r = ts_objective(&p, &b, &TsConfig::symmetric(0.25)).unwrap();
        // -ln 0.8 + 0.25·0.48 - 0.25·0.32
        let expected = -(0.8f64.ln()) + 0.25 * 0.48 - 0.25 * 0.32;
        assert!((r.total - expected).abs() < 1e-12);
        assert!((r.total - 0.263144).abs() < 1e-6);
        assert_eq!(r.lambda_unlabeled, 0.25);
        assert_eq!(r.lambda_labeled, -0.25);
    }

    #[test]
    fn zero_lambda_collapses() {
        let b = two_node_bundle();
        let p = DenseMatrix::from_rows(&[vec![0.8, 0.2], vec![0.6, 0.4]]).unwrap();
        let r = ts_objective(&p, &b, &TsConfig::supervised()).unwrap();
        assert_eq!(r.total, r.supervised);
        assert_eq!(r.unlabeled_entropy, 0.0);
        assert_eq!(r.labeled_entropy, 0.0);

        let mut g = ValueGraph::new();
        let pn = g.param(p);
        let masks = ObjectiveMasks::new(&b, UnlabeledSet::AllNonTrain).unwrap();
        let nodes = ts_loss(&mut g, pn, &masks, &TsConfig::supervised()).unwrap();
        assert_eq!(nodes.total, nodes.supervised);
        assert!(nodes.unlabeled.is_none() && nodes.labeled.is_none());
    }

    #[test]
    fn empty_unlabeled_rejected_only_when_used() {
        let b = GraphBundle::new(
            2,
            vec![],
            DenseMatrix::zeros(1, 1),
            vec![Some(0)],
            Split {
                train: vec![0],
                val: vec![],
                test: vec![],
            },
        )
        .unwrap();
        let p = DenseMatrix::from_rows(&[vec![0.6, 0.4]]).unwrap();
        assert!(matches!(
            ts_objective(&p, &b, &TsConfig::symmetric(0.25)),
            Err(ObjectiveError::EmptyUnlabeled)
        ));
        assert!(ts_objective(&p, &b, &TsConfig::symmetric(0.25).with_labeled(-0.25).with_q(2)).is_err());
        let only_labeled = TsConfig {
            lambda_unlabeled: 0.0,
            ..TsConfig::symmetric(0.25)
        };
        assert!(ts_objective(&p, &b, &only_labeled).is_ok());
    }

    #[test]
    fn empty_labeled_rejected() {
        let b = GraphBundle::new(
            2,
            vec![],
            DenseMatrix::zeros(1, 1),
            vec![Some(0)],
            Split {
                train: vec![],
                val: vec![],
                test: vec![0],
            },
        )
        .unwrap();
        let p = DenseMatrix::from_rows(&[vec![0.6, 0.4]]).unwrap();
        assert!(matches!(
            ts_objective(&p, &b, &TsConfig::symmetric(0.25)),
            Err(ObjectiveError::EmptyLabeled)
        ));
        assert!(ObjectiveMasks::new(&b, UnlabeledSet::AllNonTrain).is_err());
    }

    #[test]
    fn test_only_set_excludes_validation() {
        let b = GraphBundle::new(
            2,
            vec![],
            DenseMatrix::zeros(5, 1),
            vec![Some(0), Some(1), Some(0), Some(1), None],
            Split {
                train: vec![0],
                val: vec![1, 2],
                test: vec![3],
            },
        )
        .unwrap();
        assert_eq!(unlabeled_nodes(&b, UnlabeledSet::AllNonTrain), vec![1, 2, 3, 4]);
        assert_eq!(unlabeled_nodes(&b, UnlabeledSet::TestAndExtra), vec![3, 4]);
    }

    #[test]
    fn variant_names() {
        let s = TsConfig::symmetric(0.25);
        assert_eq!(s.variant(), "symmetric");
        assert_eq!(s.with_labeled(0.0).variant(), "no-labeled-term");
        assert_eq!(s.with_labeled(-0.2).variant(), "offset");
        assert_eq!(s.with_q(1).variant(), "shannon");
        assert_eq!(s.with_unlabeled_set(UnlabeledSet::TestAndExtra).variant(), "test-only");
        assert_eq!(TsConfig::supervised().variant(), "supervised");
    }
}
