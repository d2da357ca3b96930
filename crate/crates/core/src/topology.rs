//! Built-in ResNet-32 and MobileNetV2 topologies for 32x32x3 inputs.
//!
//! Layer shapes are propagated at build time. Hyperparameters that are not
//! dictated by the exit-head and skip layout (stem kernels, strides, block
//! widths) use the standard published CIFAR-style architectures. The shipped
//! manifests under `data/` are generated from these builders and pinned by a
//! golden test.

use crate::graph::{Block, DnnGraph, ExitPoint, LayerSpec, SkipConnection};

pub const RESNET32: &str = "resnet32";
pub const MOBILENETV2: &str = "mobilenetv2";

const INPUT: (u32, u32, u32) = (32, 32, 3);
const CLASSES: u32 = 10;

/// Running (h, w, c) cursor used while laying out a chain of layers.
#[derive(Clone, Copy)]
struct Cursor(u32, u32, u32);

impl Cursor {
    fn push(&mut self, layers: &mut Vec<LayerSpec>, layer: LayerSpec) {
        let (h, w, c) = layer.output_dims();
        *self = Cursor(h, w, c);
        layers.push(layer);
    }

    fn flat(&self) -> u32 {
        self.0 * self.1 * self.2
    }
}

/// Skip positions for ResNet-32. A skip with id `k` bypasses block `k`;
/// positions 5 and 10 are excluded because their shortcut carries a
/// projection convolution, and blocks 0, 13, 14 have no skip.
pub const RESNET32_SKIPPED_BLOCKS: [usize; 10] = [1, 2, 3, 4, 6, 7, 8, 9, 11, 12];

/// Blocks bypassed by MobileNetV2 skips 0..=8 (block 15 has no skip).
pub const MOBILENETV2_SKIPPED_BLOCKS: [usize; 9] = [2, 4, 5, 7, 8, 9, 11, 12, 14];

/// Blocks that carry an early exit in MobileNetV2.
pub const MOBILENETV2_EXIT_BLOCKS: [usize; 10] = [2, 4, 5, 7, 8, 9, 11, 12, 14, 15];

fn resnet_exit_head(at: Cursor) -> Vec<LayerSpec> {
    let mut cur = at;
    let mut head = Vec::new();
    cur.push(&mut head, LayerSpec::conv(cur.0, cur.1, cur.2, 3, 2, 32));
    cur.push(&mut head, LayerSpec::max_pool(cur.0, cur.1, cur.2, 2, 2));
    cur.push(&mut head, LayerSpec::batch_norm(cur.0, cur.1, cur.2));
    let flat = cur.flat();
    cur.push(&mut head, LayerSpec::dense(flat, 64));
    cur.push(&mut head, LayerSpec::dense(64, CLASSES));
    head
}

pub fn build_resnet32() -> DnnGraph {
    let (h, w, c) = INPUT;
    let mut cur = Cursor(h, w, c);
    let mut stem = Vec::new();
    cur.push(&mut stem, LayerSpec::conv(cur.0, cur.1, cur.2, 3, 1, 16));
    cur.push(&mut stem, LayerSpec::batch_norm(cur.0, cur.1, cur.2));
    cur.push(&mut stem, LayerSpec::relu(cur.0, cur.1, cur.2));

    let mut blocks = Vec::with_capacity(15);
    let mut exits = Vec::with_capacity(13);
    for stage in 0..3u32 {
        let filters = 16 << stage;
        for unit in 0..5 {
            let block_id = blocks.len();
            let stride = if stage > 0 && unit == 0 { 2 } else { 1 };
            let input = cur;
            let mut layers = Vec::new();
            cur.push(&mut layers, LayerSpec::conv(cur.0, cur.1, cur.2, 3, stride, filters));
            cur.push(&mut layers, LayerSpec::batch_norm(cur.0, cur.1, cur.2));
            cur.push(&mut layers, LayerSpec::relu(cur.0, cur.1, cur.2));
            cur.push(&mut layers, LayerSpec::conv(cur.0, cur.1, cur.2, 3, 1, filters));
            cur.push(&mut layers, LayerSpec::batch_norm(cur.0, cur.1, cur.2));
            if stride != 1 || input.2 != filters {
                layers.push(LayerSpec::conv(input.0, input.1, input.2, 1, stride, filters));
            }
            cur.push(&mut layers, LayerSpec::add(cur.0, cur.1, cur.2));
            cur.push(&mut layers, LayerSpec::relu(cur.0, cur.1, cur.2));
            blocks.push(Block {
                block_id,
                is_residual: true,
                layers,
            });
            if block_id < 13 {
                exits.push(ExitPoint {
                    exit_id: block_id as u32 + 1,
                    after_block: block_id,
                    head_layers: resnet_exit_head(cur),
                });
            }
        }
    }

    let mut tail = Vec::new();
    cur.push(&mut tail, LayerSpec::global_average_pool(cur.0, cur.1, cur.2));
    cur.push(&mut tail, LayerSpec::dense(cur.2, CLASSES));

    let skips = RESNET32_SKIPPED_BLOCKS
        .iter()
        .map(|&b| SkipConnection::between(b as u32, b - 1, b + 1))
        .collect();

    DnnGraph {
        name: RESNET32.into(),
        head_layers: stem,
        blocks,
        tail_layers: tail,
        exits,
        skips,
        baseline_accuracy: 0.8252,
    }
}

/// Convolution widths of the MobileNetV2 exit head attached after `block`.
fn mobilenet_head_filters(block: usize) -> &'static [u32] {
    match block {
        2 => &[96],
        4 | 5 => &[160, 80],
        7 | 8 | 9 | 11 | 12 => &[320],
        14 | 15 => &[160],
        _ => unreachable!("no exit after block {block}"),
    }
}

fn mobilenet_exit_head(block: usize, at: Cursor) -> Vec<LayerSpec> {
    let mut cur = at;
    let mut head = Vec::new();
    cur.push(&mut head, LayerSpec::batch_norm(cur.0, cur.1, cur.2));
    for &f in mobilenet_head_filters(block) {
        cur.push(&mut head, LayerSpec::conv(cur.0, cur.1, cur.2, 3, 1, f));
    }
    cur.push(&mut head, LayerSpec::global_max_pool(cur.0, cur.1, cur.2));
    cur.push(&mut head, LayerSpec::dense(cur.2, 64));
    cur.push(&mut head, LayerSpec::dense(64, CLASSES));
    head
}

pub fn build_mobilenetv2() -> DnnGraph {
    let (h, w, c) = INPUT;
    let mut cur = Cursor(h, w, c);
    let mut stem = Vec::new();
    cur.push(&mut stem, LayerSpec::conv(cur.0, cur.1, cur.2, 3, 2, 32));
    cur.push(&mut stem, LayerSpec::batch_norm(cur.0, cur.1, cur.2));
    cur.push(&mut stem, LayerSpec::relu(cur.0, cur.1, cur.2));

    // (expansion, output channels, repeats, first stride)
    const SETTINGS: [(u32, u32, usize, u32); 7] = [
        (1, 16, 1, 1),
        (6, 24, 2, 2),
        (6, 32, 3, 2),
        (6, 64, 4, 2),
        (6, 96, 3, 1),
        (6, 160, 3, 2),
        (6, 320, 1, 1),
    ];

    let mut blocks = Vec::with_capacity(17);
    let mut exits = Vec::with_capacity(10);
    for (expansion, out_c, repeats, first_stride) in SETTINGS {
        for r in 0..repeats {
            let block_id = blocks.len();
            let stride = if r == 0 { first_stride } else { 1 };
            let in_c = cur.2;
            let mut layers = Vec::new();
            if expansion != 1 {
                cur.push(
                    &mut layers,
                    LayerSpec::conv(cur.0, cur.1, cur.2, 1, 1, in_c * expansion),
                );
                cur.push(&mut layers, LayerSpec::batch_norm(cur.0, cur.1, cur.2));
                cur.push(&mut layers, LayerSpec::relu(cur.0, cur.1, cur.2));
            }
            cur.push(&mut layers, LayerSpec::depthwise(cur.0, cur.1, cur.2, 3, stride));
            cur.push(&mut layers, LayerSpec::batch_norm(cur.0, cur.1, cur.2));
            cur.push(&mut layers, LayerSpec::relu(cur.0, cur.1, cur.2));
            cur.push(&mut layers, LayerSpec::conv(cur.0, cur.1, cur.2, 1, 1, out_c));
            cur.push(&mut layers, LayerSpec::batch_norm(cur.0, cur.1, cur.2));
            let is_residual = stride == 1 && in_c == out_c;
            if is_residual {
                cur.push(&mut layers, LayerSpec::add(cur.0, cur.1, cur.2));
            }
            blocks.push(Block {
                block_id,
                is_residual,
                layers,
            });
            if MOBILENETV2_EXIT_BLOCKS.contains(&block_id) {
                exits.push(ExitPoint {
                    exit_id: exits.len() as u32 + 1,
                    after_block: block_id,
                    head_layers: mobilenet_exit_head(block_id, cur),
                });
            }
        }
    }

    let mut tail = Vec::new();
    cur.push(&mut tail, LayerSpec::conv(cur.0, cur.1, cur.2, 1, 1, 1280));
    cur.push(&mut tail, LayerSpec::global_average_pool(cur.0, cur.1, cur.2));
    cur.push(&mut tail, LayerSpec::dense(cur.2, CLASSES));

    let skips = MOBILENETV2_SKIPPED_BLOCKS
        .iter()
        .enumerate()
        .map(|(id, &b)| SkipConnection::between(id as u32, b - 1, b + 1))
        .collect();

    DnnGraph {
        name: MOBILENETV2.into(),
        head_layers: stem,
        blocks,
        tail_layers: tail,
        exits,
        skips,
        baseline_accuracy: 0.8554,
    }
}

/// Looks up a built-in topology by name.
pub fn builtin(name: &str) -> Option<DnnGraph> {
    match name.to_ascii_lowercase().as_str() {
        RESNET32 | "resnet-32" => Some(build_resnet32()),
        MOBILENETV2 | "mobilenet-v2" | "mobilenet_v2" => Some(build_mobilenetv2()),
        _ => None,
    }
}
