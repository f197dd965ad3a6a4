//! Deep integrated feature signatures.
//!
//! A detection box is carried from image pixels into network-input pixels
//! through the letterbox, divided by the signature layer's stride, and
//! rounded outward to whole cells. The signature is the per-channel sum of
//! the layer's activations over that region, so its length is the layer's
//! channel count whatever the box size.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::geometry::BBox;
use crate::net::{Detection, FeatureCache, LayerId, LetterboxTransform, Scale};
use crate::tensor::{region_sum_naive, IntegralTensor, RegionI, Tensor3, TensorError};

/// Slack, in cells, before a corner is rounded to the next cell. Keeps
/// `64 * (416 / 416) / 8` from landing on `8.000000001`.
const ROUNDING_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignatureError {
    #[error("box {0} has no positive area")]
    InvalidBox(BBox),
    #[error("feature map {height}x{width} does not evenly divide input side {side}")]
    StrideMismatch { side: usize, height: usize, width: usize },
    #[error("signature layer {0} is not in the feature cache")]
    MissingLayer(LayerId),
    #[error("no signature layer configured for scale {0}")]
    UnconfiguredScale(Scale),
    #[error("signature layers disagree on channel count: layer {a} has {pa}, layer {b} has {pb}")]
    ChannelMismatch { a: LayerId, pa: usize, b: LayerId, pb: usize },
    #[error("signature from layer {0} contains non-finite values")]
    NonFinite(LayerId),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// One region-integrated vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Signature {
    pub values: Vec<f32>,
    pub layer: LayerId,
    pub scale: Scale,
    pub frame: u32,
    /// Index of the detection within its frame.
    pub detection: u32,
    pub label: Option<String>,
}

impl Signature {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Which layer integrates detections from each head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureLayerConfig {
    layers: BTreeMap<Scale, LayerId>,
    pub area_normalize: bool,
}

impl SignatureLayerConfig {
    pub fn new(layers: impl IntoIterator<Item = (Scale, LayerId)>) -> Self {
        Self {
            layers: layers.into_iter().collect(),
            area_normalize: false,
        }
    }

    /// The same layer for every scale.
    pub fn uniform(layer: LayerId) -> Self {
        Self::new(Scale::ALL.map(|s| (s, layer)))
    }

    pub fn with_area_normalize(mut self, on: bool) -> Self {
        self.area_normalize = on;
        self
    }

    pub fn layer_for(&self, scale: Scale) -> Result<LayerId, SignatureError> {
        self.layers.get(&scale).copied().ok_or(SignatureError::UnconfiguredScale(scale))
    }

    /// Distinct configured layer ids, ascending.
    pub fn layer_ids(&self) -> Vec<LayerId> {
        let mut ids: Vec<LayerId> = self.layers.values().copied().collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn entries(&self) -> impl Iterator<Item = (Scale, LayerId)> + '_ {
        self.layers.iter().map(|(s, l)| (*s, *l))
    }

    /// Checks every layer is cached with one shared channel count and
    /// returns that count.
    pub fn validate(&self, cache: &FeatureCache) -> Result<usize, SignatureError> {
        let mut first: Option<(LayerId, usize)> = None;
        for id in self.layer_ids() {
            let p = cache.get(id).ok_or(SignatureError::MissingLayer(id))?.channels();
            match first {
                None => first = Some((id, p)),
                Some((a, pa)) if pa != p => {
                    return Err(SignatureError::ChannelMismatch { a, pa, b: id, pb: p });
                }
                Some(_) => {}
            }
        }
        first.map(|(_, p)| p).ok_or(SignatureError::UnconfiguredScale(Scale::Coarse))
    }
}

pub fn signature_layer_for(scale: Scale, cfg: &SignatureLayerConfig) -> Result<LayerId, SignatureError> {
    cfg.layer_for(scale)
}

/// Maps an image-space box onto a `fm_height x fm_width` map of a network
/// with input side `side`.
///
/// Corners are floored/ceiled outward, clamped to the map, and a region
/// squeezed to nothing by the clamp is widened by one cell toward the
/// interior.
pub fn map_bbox_to_fm(
    bbox: &BBox,
    transform: &LetterboxTransform,
    side: usize,
    fm_height: usize,
    fm_width: usize,
) -> Result<RegionI, SignatureError> {
    if !bbox.is_valid() {
        return Err(SignatureError::InvalidBox(*bbox));
    }
    if fm_height == 0 || fm_width == 0 || !side.is_multiple_of(fm_width) || !side.is_multiple_of(fm_height) {
        return Err(SignatureError::StrideMismatch {
            side,
            height: fm_height,
            width: fm_width,
        });
    }
    let net = transform.to_network(bbox);
    let stride_x = (side / fm_width) as f64;
    let stride_y = (side / fm_height) as f64;
    let (x1, x2) = outward(net.x1 / stride_x, net.x2 / stride_x, fm_width);
    let (y1, y2) = outward(net.y1 / stride_y, net.y2 / stride_y, fm_height);
    Ok(RegionI::new(x1, y1, x2, y2)?)
}

fn outward(lo: f64, hi: f64, limit: usize) -> (usize, usize) {
    let clamp = |v: f64| v.clamp(0.0, limit as f64) as usize;
    let a = clamp((lo + ROUNDING_SLACK).floor());
    let b = clamp((hi - ROUNDING_SLACK).ceil()).max(a);
    if a < b {
        (a, b)
    } else if b < limit {
        (a, b + 1)
    } else {
        (a - 1, b)
    }
}

fn finish(values: &mut [f32], region: &RegionI, area_normalize: bool, layer: LayerId) -> Result<(), SignatureError> {
    if area_normalize {
        let area = region.area() as f32;
        values.iter_mut().for_each(|v| *v /= area);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(SignatureError::NonFinite(layer));
    }
    Ok(())
}

/// Integrates `det` over the layer configured for its head, visiting every
/// cell of the region. [`SignatureExtractor`] gives the same values in
/// constant time per channel.
pub fn extract_difs(
    cache: &FeatureCache,
    cfg: &SignatureLayerConfig,
    det: &Detection,
    detection_index: u32,
    transform: &LetterboxTransform,
    side: usize,
) -> Result<Signature, SignatureError> {
    let layer = cfg.layer_for(det.scale)?;
    let fm: &Tensor3 = cache.get(layer).ok_or(SignatureError::MissingLayer(layer))?;
    let region = map_bbox_to_fm(&det.bbox, transform, side, fm.height(), fm.width())?;
    let mut values = region_sum_naive(fm, &region)?;
    finish(&mut values, &region, cfg.area_normalize, layer)?;
    Ok(Signature {
        values,
        layer,
        scale: det.scale,
        frame: det.frame,
        detection: detection_index,
        label: None,
    })
}

/// Integral volumes for the configured layers of one frame, shared by all of
/// that frame's detections.
#[derive(Debug, Clone)]
pub struct SignatureExtractor {
    cfg: SignatureLayerConfig,
    integrals: BTreeMap<LayerId, IntegralTensor>,
    transform: LetterboxTransform,
    side: usize,
    channels: usize,
}

impl SignatureExtractor {
    pub fn new(
        cache: &FeatureCache,
        cfg: &SignatureLayerConfig,
        transform: LetterboxTransform,
        side: usize,
    ) -> Result<Self, SignatureError> {
        let channels = cfg.validate(cache)?;
        let integrals = cfg
            .layer_ids()
            .into_iter()
            .map(|id| (id, IntegralTensor::build(cache.get(id).expect("validated"))))
            .collect();
        Ok(Self {
            cfg: cfg.clone(),
            integrals,
            transform,
            side,
            channels,
        })
    }

    /// Signature length `p`.
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Writes the signature of `bbox` seen by head `scale` into `out` and
    /// returns the layer used.
    pub fn extract_into(&self, bbox: &BBox, scale: Scale, out: &mut [f32]) -> Result<LayerId, SignatureError> {
        let layer = self.cfg.layer_for(scale)?;
        let it = &self.integrals[&layer];
        let region = map_bbox_to_fm(bbox, &self.transform, self.side, it.source_height(), it.source_width())?;
        it.region_sum_into(&region, out)?;
        finish(out, &region, self.cfg.area_normalize, layer)?;
        Ok(layer)
    }

    pub fn extract(&self, det: &Detection, detection_index: u32) -> Result<Signature, SignatureError> {
        let mut values = vec![0.0f32; self.channels];
        let layer = self.extract_into(&det.bbox, det.scale, &mut values)?;
        Ok(Signature {
            values,
            layer,
            scale: det.scale,
            frame: det.frame,
            detection: detection_index,
            label: None,
        })
    }
}

/// Head that would own a box under a size rule: longest side of at least a
/// quarter of the input goes to the coarse head, at least an eighth to the
/// medium head, the rest to the fine head.
pub fn scale_for_box(bbox: &BBox, transform: &LetterboxTransform, side: usize) -> Scale {
    let net = transform.to_network(bbox);
    let longest = net.width().max(net.height());
    let side = side as f64;
    if longest >= side / 4.0 {
        Scale::Coarse
    } else if longest >= side / 8.0 {
        Scale::Medium
    } else {
        Scale::Fine
    }
}
