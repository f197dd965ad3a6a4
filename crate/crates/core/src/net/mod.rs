//! A small fully-convolutional detector with the same topology classes as
//! YOLO v3: a stride-2 downsampling trunk, residual "route" blocks,
//! upsample-and-concatenate "shortcut" branches and three detection heads at
//! strides 32, 16 and 8.
//!
//! The network exists so the signature pipeline can run end to end on real
//! feature maps. It keeps every intermediate output addressable by layer id
//! through [`FeatureCache`].

mod decode;
mod forward;
mod io;
mod letterbox;
pub mod reference;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::tensor::Tensor3;

pub use decode::{decode_head, non_max_suppression, Detection};
pub use forward::ForwardOutput;
pub use io::{load_network, parse_network, save_network, serialize_network, MAGIC as WEIGHTS_MAGIC};
pub use letterbox::{letterbox, LetterboxTransform};

pub type LayerId = usize;

/// Negative-side slope of every leaky activation.
pub const LEAKY_SLOPE: f32 = 0.1;

/// Which detection head fired. Coarse heads see large objects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scale {
    /// Stride 32.
    Coarse = 0,
    /// Stride 16.
    Medium = 1,
    /// Stride 8.
    Fine = 2,
}

impl Scale {
    pub const ALL: [Scale; 3] = [Scale::Coarse, Scale::Medium, Scale::Fine];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u32) -> Option<Scale> {
        match id {
            0 => Some(Scale::Coarse),
            1 => Some(Scale::Medium),
            2 => Some(Scale::Fine),
            _ => None,
        }
    }

    /// Input pixels per head cell.
    pub fn stride(self) -> usize {
        32 >> (self as usize)
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    /// Stride-1 convolution with zero "same" padding and a bias.
    Conv {
        kernel: usize,
        in_channels: usize,
        out_channels: usize,
    },
    Leaky,
    /// 3x3 stride-2 convolution halving the spatial size.
    Downsample { in_channels: usize, out_channels: usize },
    /// Element-wise add of an earlier layer's output.
    ResidualAdd { source: LayerId },
    /// Nearest-neighbour 2x upsampling.
    Upsample,
    /// Appends an earlier layer's channels after the current ones.
    Concat { source: LayerId },
    /// 1x1 convolution producing `anchors * (5 + classes)` channels. The head
    /// is a side branch: the next layer still consumes the head's input.
    DetectionHead {
        scale: Scale,
        in_channels: usize,
        anchors: Vec<(f32, f32)>,
    },
}

impl LayerKind {
    pub fn tag(&self) -> u8 {
        match self {
            LayerKind::Conv { .. } => 0,
            LayerKind::Leaky => 1,
            LayerKind::Downsample { .. } => 2,
            LayerKind::ResidualAdd { .. } => 3,
            LayerKind::Upsample => 4,
            LayerKind::Concat { .. } => 5,
            LayerKind::DetectionHead { .. } => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub id: LayerId,
    pub kind: LayerKind,
}

/// Output geometry of one layer, relative to the input side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub channels: usize,
    /// Input pixels per output cell.
    pub stride: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("not a micro-fcn weight file (bad magic)")]
    BadMagic,
    #[error("unsupported weight file version {0}")]
    UnsupportedVersion(u32),
    #[error("weight file truncated{}", layer_suffix(*.layer))]
    Truncated { layer: Option<LayerId> },
    #[error("unknown layer kind tag {tag} at layer {layer}")]
    UnknownKind { layer: LayerId, tag: u8 },
    #[error("layer id {found} out of order, expected {expected}")]
    LayerOrder { expected: LayerId, found: LayerId },
    #[error("shape mismatch at layer {layer}: {detail}")]
    ShapeMismatch { layer: LayerId, detail: String },
    #[error("invalid network: {0}")]
    Topology(String),
    #[error("{0} trailing bytes after last layer")]
    TrailingBytes(usize),
    #[error("input tensor {got:?} does not match expected 3x{side}x{side}")]
    InputShape { got: (usize, usize, usize), side: usize },
    #[error("layer {0} does not exist")]
    NoSuchLayer(LayerId),
    #[error("i/o error: {0}")]
    Io(String),
}

fn layer_suffix(layer: Option<LayerId>) -> String {
    match layer {
        Some(id) => format!(" in layer {id}"),
        None => " in header".to_string(),
    }
}

fn mismatch(layer: LayerId, detail: impl Into<String>) -> NetworkError {
    NetworkError::ShapeMismatch {
        layer,
        detail: detail.into(),
    }
}

/// Layer list plus the global facts needed to run and decode it.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkDef {
    layers: Vec<LayerSpec>,
    input_side: usize,
    class_count: usize,
    shapes: Vec<LayerShape>,
    heads: [LayerId; 3],
}

impl NetworkDef {
    /// Validates the topology and infers every layer's output shape.
    pub fn new(layers: Vec<LayerSpec>, input_side: usize, class_count: usize) -> Result<Self, NetworkError> {
        if input_side == 0 || !input_side.is_multiple_of(32) {
            return Err(NetworkError::Topology(format!(
                "input side {input_side} must be a positive multiple of 32"
            )));
        }
        if class_count == 0 {
            return Err(NetworkError::Topology("class count must be positive".into()));
        }
        let mut shapes: Vec<LayerShape> = Vec::with_capacity(layers.len());
        let mut heads: [Option<LayerId>; 3] = [None; 3];
        // the tensor flowing into the next layer
        let mut current = LayerShape {
            channels: 3,
            stride: 1,
        };
        let source_shape = |shapes: &[LayerShape], id: LayerId, source: LayerId| {
            if source >= id {
                return Err(mismatch(id, format!("source {source} is not an earlier layer")));
            }
            match &layers[source].kind {
                LayerKind::DetectionHead { .. } => Err(mismatch(id, format!("source {source} is a detection head"))),
                _ => Ok(shapes[source]),
            }
        };
        for (idx, spec) in layers.iter().enumerate() {
            let id = spec.id;
            if id != idx {
                return Err(NetworkError::LayerOrder {
                    expected: idx,
                    found: id,
                });
            }
            let out = match &spec.kind {
                LayerKind::Conv {
                    kernel,
                    in_channels,
                    out_channels,
                } => {
                    if *kernel != 1 && *kernel != 3 {
                        return Err(mismatch(id, format!("kernel size {kernel} not in {{1, 3}}")));
                    }
                    check_in(id, *in_channels, current.channels)?;
                    check_out(id, *out_channels)?;
                    LayerShape {
                        channels: *out_channels,
                        stride: current.stride,
                    }
                }
                LayerKind::Leaky => current,
                LayerKind::Downsample {
                    in_channels,
                    out_channels,
                } => {
                    check_in(id, *in_channels, current.channels)?;
                    check_out(id, *out_channels)?;
                    if current.stride * 2 > input_side {
                        return Err(mismatch(id, "downsampling below one cell"));
                    }
                    LayerShape {
                        channels: *out_channels,
                        stride: current.stride * 2,
                    }
                }
                LayerKind::ResidualAdd { source } => {
                    let src = source_shape(&shapes, id, *source)?;
                    if src != current {
                        return Err(mismatch(
                            id,
                            format!("residual source {source} has shape {src:?}, current is {current:?}"),
                        ));
                    }
                    current
                }
                LayerKind::Upsample => {
                    if current.stride < 2 {
                        return Err(mismatch(id, "upsampling above input resolution"));
                    }
                    LayerShape {
                        channels: current.channels,
                        stride: current.stride / 2,
                    }
                }
                LayerKind::Concat { source } => {
                    let src = source_shape(&shapes, id, *source)?;
                    if src.stride != current.stride {
                        return Err(mismatch(
                            id,
                            format!("concat source {source} has stride {}, current is {}", src.stride, current.stride),
                        ));
                    }
                    LayerShape {
                        channels: current.channels + src.channels,
                        stride: current.stride,
                    }
                }
                LayerKind::DetectionHead {
                    scale,
                    in_channels,
                    anchors,
                } => {
                    check_in(id, *in_channels, current.channels)?;
                    if anchors.is_empty() {
                        return Err(mismatch(id, "detection head without anchors"));
                    }
                    if anchors.iter().any(|&(w, h)| !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite())) {
                        return Err(mismatch(id, "anchor sizes must be positive and finite"));
                    }
                    if current.stride != scale.stride() {
                        return Err(mismatch(
                            id,
                            format!("scale {scale} head needs stride {}, input has {}", scale.stride(), current.stride),
                        ));
                    }
                    let slot = &mut heads[*scale as usize];
                    if slot.is_some() {
                        return Err(mismatch(id, format!("duplicate head for scale {scale}")));
                    }
                    *slot = Some(id);
                    let head = LayerShape {
                        channels: anchors.len() * (5 + class_count),
                        stride: current.stride,
                    };
                    shapes.push(head);
                    continue;
                }
            };
            shapes.push(out);
            current = out;
        }
        let heads = match heads {
            [Some(a), Some(b), Some(c)] => [a, b, c],
            _ => return Err(NetworkError::Topology("need exactly three detection heads, scales 0, 1, 2".into())),
        };
        Ok(Self {
            layers,
            input_side,
            class_count,
            shapes,
            heads,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_side(&self) -> usize {
        self.input_side
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layer_shape(&self, id: LayerId) -> Option<LayerShape> {
        self.shapes.get(id).copied()
    }

    /// `(channels, height, width)` of a layer's output at this input side.
    pub fn layer_dims(&self, id: LayerId) -> Option<(usize, usize, usize)> {
        self.layer_shape(id).map(|s| {
            let side = self.input_side / s.stride;
            (s.channels, side, side)
        })
    }

    pub fn head_layer(&self, scale: Scale) -> LayerId {
        self.heads[scale as usize]
    }

    pub fn anchors(&self, scale: Scale) -> &[(f32, f32)] {
        match &self.layers[self.head_layer(scale)].kind {
            LayerKind::DetectionHead { anchors, .. } => anchors,
            _ => unreachable!("head index points at a non-head layer"),
        }
    }

    /// Number of `f32` values the layer stores (weights plus biases).
    pub fn parameter_count(&self, id: LayerId) -> usize {
        match &self.layers[id].kind {
            LayerKind::Conv {
                kernel,
                in_channels,
                out_channels,
            } => out_channels * in_channels * kernel * kernel + out_channels,
            LayerKind::Downsample {
                in_channels,
                out_channels,
            } => out_channels * in_channels * 9 + out_channels,
            LayerKind::DetectionHead { in_channels, .. } => {
                let out = self.shapes[id].channels;
                out * in_channels + out
            }
            _ => 0,
        }
    }
}

fn check_in(layer: LayerId, declared: usize, actual: usize) -> Result<(), NetworkError> {
    if declared != actual {
        return Err(mismatch(
            layer,
            format!("declares {declared} input channels, receives {actual}"),
        ));
    }
    Ok(())
}

fn check_out(layer: LayerId, out: usize) -> Result<(), NetworkError> {
    if out == 0 {
        return Err(mismatch(layer, "zero output channels"));
    }
    Ok(())
}

/// Kernel weights laid out `[out][in][ky][kx]`, followed by per-output biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

/// A validated definition with one weight blob per parameterised layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroFcn {
    def: NetworkDef,
    weights: Vec<Option<ConvWeights>>,
}

impl MicroFcn {
    /// `weights` is indexed by layer id; parameter-free layers take `None`.
    pub fn new(def: NetworkDef, weights: Vec<Option<ConvWeights>>) -> Result<Self, NetworkError> {
        if weights.len() != def.layer_count() {
            return Err(NetworkError::Topology(format!(
                "{} weight slots for {} layers",
                weights.len(),
                def.layer_count()
            )));
        }
        for (id, w) in weights.iter().enumerate() {
            let expected = def.parameter_count(id);
            let got = w.as_ref().map(|w| w.weights.len() + w.bias.len());
            let ok = match (&def.layers[id].kind, w) {
                (LayerKind::Conv { out_channels, .. } | LayerKind::Downsample { out_channels, .. }, Some(w)) => {
                    w.bias.len() == *out_channels && got == Some(expected)
                }
                (LayerKind::DetectionHead { .. }, Some(w)) => {
                    w.bias.len() == def.shapes[id].channels && got == Some(expected)
                }
                (LayerKind::Conv { .. } | LayerKind::Downsample { .. } | LayerKind::DetectionHead { .. }, None) => false,
                (_, w) => w.is_none(),
            };
            if !ok {
                return Err(mismatch(id, format!("expected {expected} parameters, got {got:?}")));
            }
        }
        Ok(Self { def, weights })
    }

    pub fn def(&self) -> &NetworkDef {
        &self.def
    }

    pub fn weights(&self, id: LayerId) -> Option<&ConvWeights> {
        self.weights.get(id).and_then(|w| w.as_ref())
    }

    pub fn input_side(&self) -> usize {
        self.def.input_side
    }
}

/// Retained intermediate outputs keyed by layer id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureCache {
    maps: BTreeMap<LayerId, Tensor3>,
}

impl FeatureCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, layer: LayerId, t: Tensor3) {
        self.maps.insert(layer, t);
    }

    pub fn get(&self, layer: LayerId) -> Option<&Tensor3> {
        self.maps.get(&layer)
    }

    pub fn contains(&self, layer: LayerId) -> bool {
        self.maps.contains_key(&layer)
    }

    pub fn layer_ids(&self) -> impl Iterator<Item = LayerId> + '_ {
        self.maps.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (LayerId, &Tensor3)> {
        self.maps.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }
}

impl FromIterator<(LayerId, Tensor3)> for FeatureCache {
    fn from_iter<I: IntoIterator<Item = (LayerId, Tensor3)>>(iter: I) -> Self {
        Self {
            maps: iter.into_iter().collect(),
        }
    }
}
