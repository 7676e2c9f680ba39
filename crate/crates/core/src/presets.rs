//! Published per-dataset backbone configurations and the selected sharpening
//! coefficient for each cell. These only matter when a user supplies a
//! converted benchmark bundle; nothing in the library defaults to them.

use crate::models::{ArchConfig, Backbone, NormKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub dataset: &'static str,
    pub backbone: Backbone,
    pub residual: bool,
    pub norm: NormKind,
    pub dropout: f64,
    pub layers: usize,
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    /// Validation-selected sharpening coefficient.
    pub lambda: f64,
}

impl Preset {
    pub fn arch(&self, num_classes: usize) -> ArchConfig {
        ArchConfig {
            backbone: self.backbone,
            layers: self.layers,
            hidden: self.hidden,
            dropout: self.dropout,
            norm: self.norm,
            residual: self.residual,
            num_classes,
        }
    }
}

/// Fixed MLP configuration shared by every dataset.
pub const MLP_HIDDEN: usize = 512;
pub const MLP_EPOCHS: usize = 1000;
pub const MLP_LR: f64 = 0.001;
pub const MLP_LAYERS: usize = 3;
pub const MLP_WEIGHT_DECAY: f64 = 0.0005;
pub const MLP_DROPOUT: f64 = 0.5;
pub const SEEDS_PER_CELL: usize = 5;

/// Universal coefficient that works across datasets and backbones.
pub const UNIVERSAL_LAMBDA: f64 = 0.25;

/// Offsets applied to the labeled coefficient in the asymmetry battery.
pub const OFFSET_GRID: [f64; 5] = [-0.10, -0.05, 0.0, 0.05, 0.10];

pub fn mlp_arch(num_classes: usize) -> ArchConfig {
    ArchConfig {
        backbone: Backbone::Mlp,
        layers: MLP_LAYERS,
        hidden: MLP_HIDDEN,
        dropout: MLP_DROPOUT,
        norm: NormKind::None,
        residual: false,
        num_classes,
    }
}

macro_rules! p {
    ($ds:expr, $bb:ident, $res:expr, $norm:ident, $drop:expr, $l:expr, $h:expr, $lr:expr, $ep:expr, $lam:expr) => {
        Preset {
            dataset: $ds,
            backbone: Backbone::$bb,
            residual: $res,
            norm: NormKind::$norm,
            dropout: $drop,
            layers: $l,
            hidden: $h,
            lr: $lr,
            epochs: $ep,
            lambda: $lam,
        }
    };
}

pub const GCN_PRESETS: &[Preset] = &[
    p!("cora", Gcn, false, None, 0.7, 3, 512, 0.001, 500, 1.35),
    p!("citeseer", Gcn, false, None, 0.5, 2, 512, 0.001, 500, 0.15),
    p!("pubmed", Gcn, false, None, 0.7, 2, 256, 0.005, 500, 0.3),
    p!("computer", Gcn, false, Layer, 0.5, 3, 512, 0.001, 1000, 0.65),
    p!("photo", Gcn, true, Layer, 0.5, 6, 256, 0.001, 1000, 0.35),
    p!("cs", Gcn, true, Layer, 0.3, 2, 512, 0.001, 1500, 0.6),
    p!("physics", Gcn, true, Layer, 0.3, 2, 64, 0.001, 1500, 0.25),
    p!("wikics", Gcn, false, Layer, 0.5, 3, 256, 0.001, 1000, 0.8),
    p!("squirrel", Gcn, true, Batch, 0.7, 4, 256, 0.01, 500, 0.45),
    p!("chameleon", Gcn, false, None, 0.2, 5, 512, 0.005, 200, 0.25),
    p!("amazon-ratings", Gcn, true, Batch, 0.5, 4, 512, 0.001, 2500, 0.5),
    p!("roman-empire", Gcn, true, Batch, 0.5, 9, 512, 0.001, 2500, 0.3),
    p!("minesweeper", Gcn, true, Batch, 0.2, 12, 64, 0.01, 2000, 0.1),
];

pub const SAGE_PRESETS: &[Preset] = &[
    p!("cora", Sage, false, None, 0.7, 3, 256, 0.001, 500, 0.65),
    p!("citeseer", Sage, false, None, 0.2, 3, 512, 0.001, 500, 0.05),
    p!("pubmed", Sage, false, None, 0.7, 4, 512, 0.005, 500, 1.65),
    p!("computer", Sage, false, Layer, 0.3, 4, 64, 0.001, 1000, 0.4),
    p!("photo", Sage, true, Layer, 0.2, 6, 64, 0.001, 1000, 0.45),
    p!("cs", Sage, true, Layer, 0.5, 2, 512, 0.001, 1500, 0.05),
    p!("physics", Sage, true, Batch, 0.7, 2, 64, 0.001, 1500, 0.25),
    p!("wikics", Sage, false, Layer, 0.7, 2, 256, 0.001, 1000, 1.55),
    p!("squirrel", Sage, true, Batch, 0.7, 3, 256, 0.01, 500, 0.75),
    p!("chameleon", Sage, true, Batch, 0.7, 4, 256, 0.01, 200, 0.15),
    p!("amazon-ratings", Sage, true, Batch, 0.5, 9, 512, 0.001, 2500, 0.9),
    p!("roman-empire", Sage, false, Batch, 0.3, 9, 256, 0.001, 2500, 0.35),
    p!("minesweeper", Sage, true, Batch, 0.2, 15, 64, 0.01, 2000, 0.4),
];

/// Looks up a preset by backbone and (case-insensitive) dataset name.
pub fn find(backbone: Backbone, dataset: &str) -> Option<&'static Preset> {
    let table = match backbone {
        Backbone::Gcn => GCN_PRESETS,
        Backbone::Sage => SAGE_PRESETS,
        Backbone::Mlp => return None,
    };
    let key = dataset.to_ascii_lowercase();
    table.iter().find(|p| p.dataset == key)
}
