//! The reference stand-in topology and its seeded weights.
//!
//! 54 layers (24 convolutions, heads included). Residual blocks at strides 2, 4, 8, 16 and
//! 32 play the part of routes; the stride-16 and stride-8 branches
//! upsample and concatenate the outputs of the stride-16 and stride-8
//! blocks (layers 29 and 22), which play the part of shortcuts.
//!
//! | stride | last trunk layer | channels | head input |
//! |--------|------------------|----------|------------|
//! | 8      | 22               | 32       | 52         |
//! | 16     | 29               | 32       | 45         |
//! | 32     | 36               | 32       | 38         |

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ConvWeights, LayerId, LayerKind, LayerSpec, MicroFcn, NetworkDef, Scale};

/// Four vehicle classes: car, truck, bus, motorcycle.
pub const CLASSES: usize = 4;
pub const SEED: u64 = 0x5EED_D1F5;
/// Input side of the committed fixture file.
pub const FIXTURE_SIDE: usize = 256;

/// Residual outputs right before the upsample/concat branches, one per scale.
pub const MIDDLE_LAYERS: [(Scale, LayerId); 3] = [(Scale::Coarse, 36), (Scale::Medium, 29), (Scale::Fine, 22)];
/// Last activations before each head.
pub const LATE_LAYERS: [(Scale, LayerId); 3] = [(Scale::Coarse, 38), (Scale::Medium, 45), (Scale::Fine, 52)];

/// Stride-8 trunk output used as the single signature layer for all boxes.
pub const MIDDLE_LAYER: LayerId = 22;
/// Last retained stride-8 layer, fed straight into the fine head.
pub const LATE_LAYER: LayerId = 52;

/// The usual COCO anchors, given for a 416 input and scaled to `side`.
pub fn anchors(scale: Scale, side: usize) -> Vec<(f32, f32)> {
    let base: [(f32, f32); 3] = match scale {
        Scale::Coarse => [(116.0, 90.0), (156.0, 198.0), (373.0, 326.0)],
        Scale::Medium => [(30.0, 61.0), (62.0, 45.0), (59.0, 119.0)],
        Scale::Fine => [(10.0, 13.0), (16.0, 30.0), (33.0, 23.0)],
    };
    let k = side as f32 / 416.0;
    base.iter().map(|&(w, h)| (w * k, h * k)).collect()
}

pub fn reference_definition(side: usize) -> NetworkDef {
    use LayerKind::*;
    let conv = |kernel, in_channels, out_channels| Conv {
        kernel,
        in_channels,
        out_channels,
    };
    let down = |in_channels, out_channels| Downsample {
        in_channels,
        out_channels,
    };
    let head = |scale| DetectionHead {
        scale,
        in_channels: 32,
        anchors: anchors(scale, side),
    };

    let mut kinds = vec![conv(3, 3, 8), Leaky, down(8, 16), Leaky];
    // route block on a `c`-channel tensor whose block input is layer `src`
    let block = |kinds: &mut Vec<LayerKind>, c: usize| {
        let src = kinds.len() - 1;
        kinds.extend([conv(1, c, c / 2), Leaky, conv(3, c / 2, c), Leaky, ResidualAdd { source: src }]);
    };
    block(&mut kinds, 16); // -> 8
    kinds.extend([down(16, 32), Leaky]);
    block(&mut kinds, 32); // -> 15
    kinds.extend([down(32, 32), Leaky]);
    block(&mut kinds, 32); // -> 22, stride 8
    kinds.extend([down(32, 32), Leaky]);
    block(&mut kinds, 32); // -> 29, stride 16
    kinds.extend([down(32, 32), Leaky]);
    block(&mut kinds, 32); // -> 36, stride 32
    kinds.extend([conv(3, 32, 32), Leaky, head(Scale::Coarse)]);
    kinds.extend([conv(1, 32, 16), Leaky, Upsample, Concat { source: 29 }, conv(3, 48, 32), Leaky]);
    kinds.push(head(Scale::Medium));
    kinds.extend([conv(1, 32, 16), Leaky, Upsample, Concat { source: 22 }, conv(3, 48, 32), Leaky]);
    kinds.push(head(Scale::Fine));

    let layers = kinds
        .into_iter()
        .enumerate()
        .map(|(id, kind)| LayerSpec { id, kind })
        .collect();
    NetworkDef::new(layers, side, CLASSES).expect("reference topology is valid")
}

/// He-uniform weights and small uniform biases from a ChaCha8 stream.
pub fn seeded_weights(def: &NetworkDef, seed: u64) -> Vec<Option<ConvWeights>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    def.layers()
        .iter()
        .map(|spec| {
            let (fan_in, n_weights, out) = match &spec.kind {
                LayerKind::Conv {
                    kernel,
                    in_channels,
                    out_channels,
                } => (in_channels * kernel * kernel, out_channels * in_channels * kernel * kernel, *out_channels),
                LayerKind::Downsample {
                    in_channels,
                    out_channels,
                } => (in_channels * 9, out_channels * in_channels * 9, *out_channels),
                LayerKind::DetectionHead { in_channels, .. } => {
                    let out = def.layer_shape(spec.id).expect("layer exists").channels;
                    (*in_channels, out * in_channels, out)
                }
                _ => return None,
            };
            let bound = (6.0 / fan_in as f32).sqrt();
            let weights = (0..n_weights).map(|_| rng.gen_range(-bound..bound)).collect();
            let bias = (0..out).map(|_| rng.gen_range(-0.1f32..0.1)).collect();
            Some(ConvWeights { weights, bias })
        })
        .collect()
}

pub fn reference_network(side: usize, seed: u64) -> MicroFcn {
    let def = reference_definition(side);
    let weights = seeded_weights(&def, seed);
    MicroFcn::new(def, weights).expect("generated weights match the definition")
}

/// Same network with every bias set to zero. Zero input then maps to zero
/// output everywhere, so zero padding is indistinguishable from more input.
pub fn without_biases(net: &MicroFcn) -> MicroFcn {
    let def = net.def().clone();
    let weights = (0..def.layer_count())
        .map(|id| {
            net.weights(id).map(|w| ConvWeights {
                weights: w.weights.clone(),
                bias: vec![0.0; w.bias.len()],
            })
        })
        .collect();
    MicroFcn::new(def, weights).expect("same shapes")
}
