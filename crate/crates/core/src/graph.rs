//! Structural model of a block-partitioned DNN: typed layers grouped into
//! placement blocks, plus the exit heads and skip connections that the
//! recovery techniques rely on.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::GraphError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LayerType {
    BatchNorm,
    Convolution,
    ReLU,
    Dense,
    Add,
    Dropout,
    DepthwiseConvolution,
    GlobalAveragePool,
    MaxPool,
    GlobalMaxPool,
}

impl LayerType {
    pub const ALL: [LayerType; 10] = [
        LayerType::BatchNorm,
        LayerType::Convolution,
        LayerType::ReLU,
        LayerType::Dense,
        LayerType::Add,
        LayerType::Dropout,
        LayerType::DepthwiseConvolution,
        LayerType::GlobalAveragePool,
        LayerType::MaxPool,
        LayerType::GlobalMaxPool,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerType::BatchNorm => "BatchNorm",
            LayerType::Convolution => "Convolution",
            LayerType::ReLU => "ReLU",
            LayerType::Dense => "Dense",
            LayerType::Add => "Add",
            LayerType::Dropout => "Dropout",
            LayerType::DepthwiseConvolution => "DepthwiseConvolution",
            LayerType::GlobalAveragePool => "GlobalAveragePool",
            LayerType::MaxPool => "MaxPool",
            LayerType::GlobalMaxPool => "GlobalMaxPool",
        }
    }

    pub fn has_window(self) -> bool {
        matches!(
            self,
            LayerType::Convolution | LayerType::DepthwiseConvolution | LayerType::MaxPool
        )
    }

    pub fn has_filters(self) -> bool {
        self == LayerType::Convolution
    }

    pub fn has_units(self) -> bool {
        self == LayerType::Dense
    }

    /// Cost family used when no latency profile exists for this type.
    ///
    /// Only the pooling layers that appear in exit heads declare one; every
    /// other type must be profiled directly.
    pub fn fallback_family(self) -> Option<LayerType> {
        match self {
            LayerType::MaxPool | LayerType::GlobalMaxPool => Some(LayerType::GlobalAveragePool),
            LayerType::GlobalAveragePool => Some(LayerType::BatchNorm),
            _ => None,
        }
    }
}

impl fmt::Display for LayerType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LayerType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LayerType::ALL
            .iter()
            .copied()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown layer type `{s}`"))
    }
}

/// One layer with the hyperparameters its latency depends on.
///
/// Optional fields are only meaningful for the layer types that carry them;
/// [`LayerSpec::check`] enforces the presence rules.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(rename = "type")]
    pub layer_type: LayerType,
    pub input_shape: (u32, u32),
    pub input_channels: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_size: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filters: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<u32>,
}

impl LayerSpec {
    fn plain(layer_type: LayerType, h: u32, w: u32, c: u32) -> Self {
        LayerSpec {
            layer_type,
            input_shape: (h, w),
            input_channels: c,
            kernel_size: None,
            stride: None,
            filters: None,
            units: None,
        }
    }

    pub fn batch_norm(h: u32, w: u32, c: u32) -> Self {
        Self::plain(LayerType::BatchNorm, h, w, c)
    }

    pub fn relu(h: u32, w: u32, c: u32) -> Self {
        Self::plain(LayerType::ReLU, h, w, c)
    }

    pub fn add(h: u32, w: u32, c: u32) -> Self {
        Self::plain(LayerType::Add, h, w, c)
    }

    pub fn dropout(h: u32, w: u32, c: u32) -> Self {
        Self::plain(LayerType::Dropout, h, w, c)
    }

    pub fn global_average_pool(h: u32, w: u32, c: u32) -> Self {
        Self::plain(LayerType::GlobalAveragePool, h, w, c)
    }

    pub fn global_max_pool(h: u32, w: u32, c: u32) -> Self {
        Self::plain(LayerType::GlobalMaxPool, h, w, c)
    }

    pub fn conv(h: u32, w: u32, c: u32, kernel: u32, stride: u32, filters: u32) -> Self {
        LayerSpec {
            kernel_size: Some(kernel),
            stride: Some(stride),
            filters: Some(filters),
            ..Self::plain(LayerType::Convolution, h, w, c)
        }
    }

    pub fn depthwise(h: u32, w: u32, c: u32, kernel: u32, stride: u32) -> Self {
        LayerSpec {
            kernel_size: Some(kernel),
            stride: Some(stride),
            ..Self::plain(LayerType::DepthwiseConvolution, h, w, c)
        }
    }

    pub fn max_pool(h: u32, w: u32, c: u32, kernel: u32, stride: u32) -> Self {
        LayerSpec {
            kernel_size: Some(kernel),
            stride: Some(stride),
            ..Self::plain(LayerType::MaxPool, h, w, c)
        }
    }

    /// Dense layer over a flattened input of `features` values.
    pub fn dense(features: u32, units: u32) -> Self {
        LayerSpec {
            units: Some(units),
            ..Self::plain(LayerType::Dense, 1, 1, features)
        }
    }

    /// Output (height, width, channels) with "same" padding.
    pub fn output_dims(&self) -> (u32, u32, u32) {
        let (h, w) = self.input_shape;
        let c = self.input_channels;
        let down = |x: u32| x.div_ceil(self.stride.unwrap_or(1).max(1));
        match self.layer_type {
            LayerType::Convolution => (down(h), down(w), self.filters.unwrap_or(c)),
            LayerType::DepthwiseConvolution | LayerType::MaxPool => (down(h), down(w), c),
            LayerType::GlobalAveragePool | LayerType::GlobalMaxPool => (1, 1, c),
            LayerType::Dense => (1, 1, self.units.unwrap_or(c)),
            _ => (h, w, c),
        }
    }

    /// Returns a description of the first broken hyperparameter rule.
    pub fn check(&self) -> Option<String> {
        let t = self.layer_type;
        let (h, w) = self.input_shape;
        if h == 0 || w == 0 || self.input_channels == 0 {
            return Some("non-positive input dimension".into());
        }
        let rules = [
            ("kernel_size", self.kernel_size, t.has_window()),
            ("stride", self.stride, t.has_window()),
            ("filters", self.filters, t.has_filters()),
            ("units", self.units, t.has_units()),
        ];
        for (field, value, required) in rules {
            match (value, required) {
                (Some(0), true) => return Some(format!("non-positive {field}")),
                (None, true) => return Some(format!("missing {field} for {t}")),
                (Some(_), false) => return Some(format!("unexpected {field} for {t}")),
                _ => {}
            }
        }
        None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub block_id: usize,
    pub is_residual: bool,
    pub layers: Vec<LayerSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitPoint {
    /// 1-based label (E1, E2, ...).
    pub exit_id: u32,
    pub after_block: usize,
    pub head_layers: Vec<LayerSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkipConnection {
    pub skip_id: u32,
    pub from_block: usize,
    pub to_block: usize,
    pub bypassed_blocks: BTreeSet<usize>,
}

impl SkipConnection {
    pub fn between(skip_id: u32, from_block: usize, to_block: usize) -> Self {
        SkipConnection {
            skip_id,
            from_block,
            to_block,
            bypassed_blocks: (from_block + 1..to_block).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DnnGraph {
    pub name: String,
    pub head_layers: Vec<LayerSpec>,
    pub blocks: Vec<Block>,
    pub tail_layers: Vec<LayerSpec>,
    pub exits: Vec<ExitPoint>,
    pub skips: Vec<SkipConnection>,
    pub baseline_accuracy: f64,
}

/// A broken graph invariant. The `Display` form is what `validate` prints.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    NoBlocks,
    EmptyBlock(usize),
    BlockOrder { position: usize, block_id: usize },
    BadLayer { location: String, reason: String },
    DanglingExit(usize),
    DuplicateExit(usize),
    ExitOrder(u32),
    DanglingSkip(u32),
    SkipOrder(u32),
    SkipBypassMismatch(u32),
    OverlappingSkips { block: usize, first: u32, second: u32 },
    DuplicateSkipId(u32),
    BaselineOutOfRange,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoBlocks => write!(f, "graph has no blocks"),
            Violation::EmptyBlock(b) => write!(f, "block {b} has no layers"),
            Violation::BlockOrder { position, block_id } => {
                write!(f, "block at position {position} has id {block_id}")
            }
            Violation::BadLayer { location, reason } => write!(f, "{location}: {reason}"),
            Violation::DanglingExit(b) => write!(f, "dangling exit reference: {b}"),
            Violation::DuplicateExit(b) => write!(f, "more than one exit after block {b}"),
            Violation::ExitOrder(e) => write!(f, "exit E{e} out of order"),
            Violation::DanglingSkip(s) => write!(f, "dangling skip reference: {s}"),
            Violation::SkipOrder(_) => write!(f, "skip endpoints not ordered"),
            Violation::SkipBypassMismatch(s) => {
                write!(f, "skip {s} bypass set does not match its endpoints")
            }
            Violation::OverlappingSkips { block, first, second } => {
                write!(f, "block {block} is bypassed by skips {first} and {second}")
            }
            Violation::DuplicateSkipId(s) => write!(f, "duplicate skip id {s}"),
            Violation::BaselineOutOfRange => write!(f, "baseline accuracy outside [0, 1]"),
        }
    }
}

impl DnnGraph {
    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn exit(&self, exit_id: u32) -> Option<&ExitPoint> {
        self.exits.iter().find(|e| e.exit_id == exit_id)
    }

    pub fn skip(&self, skip_id: u32) -> Option<&SkipConnection> {
        self.skips.iter().find(|s| s.skip_id == skip_id)
    }

    /// Every layer on the full inference path, in execution order.
    pub fn all_layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.head_layers
            .iter()
            .chain(self.blocks.iter().flat_map(|b| b.layers.iter()))
            .chain(self.tail_layers.iter())
    }

    /// Layer types needed to cost any candidate, exit heads included.
    pub fn layer_types(&self) -> BTreeSet<LayerType> {
        self.all_layers()
            .chain(self.exits.iter().flat_map(|e| e.head_layers.iter()))
            .map(|l| l.layer_type)
            .collect()
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.blocks.len();
        if n == 0 {
            out.push(Violation::NoBlocks);
        }

        let check_layers = |location: String, layers: &[LayerSpec], out: &mut Vec<Violation>| {
            for (i, layer) in layers.iter().enumerate() {
                if let Some(reason) = layer.check() {
                    out.push(Violation::BadLayer {
                        location: format!("{location} layer {i}"),
                        reason,
                    });
                }
            }
        };
        check_layers("stem".into(), &self.head_layers, &mut out);
        check_layers("tail".into(), &self.tail_layers, &mut out);
        for (position, block) in self.blocks.iter().enumerate() {
            if block.block_id != position {
                out.push(Violation::BlockOrder {
                    position,
                    block_id: block.block_id,
                });
            }
            if block.layers.is_empty() {
                out.push(Violation::EmptyBlock(block.block_id));
            }
            check_layers(format!("block {}", block.block_id), &block.layers, &mut out);
        }

        let mut seen_exit_blocks = BTreeSet::new();
        let mut prev: Option<&ExitPoint> = None;
        for exit in &self.exits {
            if exit.after_block >= n {
                out.push(Violation::DanglingExit(exit.after_block));
            } else if !seen_exit_blocks.insert(exit.after_block) {
                out.push(Violation::DuplicateExit(exit.after_block));
            }
            if let Some(p) = prev {
                if exit.exit_id <= p.exit_id || exit.after_block <= p.after_block {
                    out.push(Violation::ExitOrder(exit.exit_id));
                }
            }
            check_layers(format!("exit E{}", exit.exit_id), &exit.head_layers, &mut out);
            prev = Some(exit);
        }

        let mut skip_ids = BTreeSet::new();
        let mut bypassed_by: Vec<Option<u32>> = vec![None; n];
        for skip in &self.skips {
            if !skip_ids.insert(skip.skip_id) {
                out.push(Violation::DuplicateSkipId(skip.skip_id));
            }
            if skip.from_block >= n || skip.to_block >= n {
                out.push(Violation::DanglingSkip(skip.skip_id));
                continue;
            }
            if skip.from_block >= skip.to_block {
                out.push(Violation::SkipOrder(skip.skip_id));
                continue;
            }
            let expected: BTreeSet<usize> = (skip.from_block + 1..skip.to_block).collect();
            if expected != skip.bypassed_blocks || expected.is_empty() {
                out.push(Violation::SkipBypassMismatch(skip.skip_id));
                continue;
            }
            for &b in &skip.bypassed_blocks {
                match bypassed_by[b] {
                    Some(first) => out.push(Violation::OverlappingSkips {
                        block: b,
                        first,
                        second: skip.skip_id,
                    }),
                    None => bypassed_by[b] = Some(skip.skip_id),
                }
            }
        }

        if !(0.0..=1.0).contains(&self.baseline_accuracy) {
            out.push(Violation::BaselineOutOfRange);
        }
        out
    }

    pub fn to_manifest_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    pub fn from_manifest_json(text: &str) -> Result<Self, GraphError> {
        serde_json::from_str(text).map_err(|e| GraphError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn load_manifest(path: &Path) -> Result<Self, GraphError> {
        let text = std::fs::read_to_string(path).map_err(|e| GraphError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_manifest_json(&text)
    }
}
