use super::{LetterboxTransform, NetworkError, Scale};
use crate::geometry::BBox;
use crate::tensor::Tensor3;

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub class_id: u32,
    /// Objectness times best class score.
    pub confidence: f32,
    /// Source-image pixels, clamped to the image.
    pub bbox: BBox,
    pub scale: Scale,
    pub frame: u32,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Decodes one head tensor of `anchors * (5 + classes)` channels.
///
/// Per anchor the channels are `tx, ty, tw, th, objectness, class...`. The
/// box centre is `(cell + sigmoid(t)) * stride` and its size is
/// `anchor * exp(t)`, both in network-input pixels; the box is then mapped
/// back through the letterbox and clamped to `image_dims = (width, height)`.
#[allow(clippy::too_many_arguments)]
pub fn decode_head(
    head: &Tensor3,
    anchors: &[(f32, f32)],
    class_count: usize,
    threshold: f32,
    transform: &LetterboxTransform,
    image_dims: (usize, usize),
    input_side: usize,
    scale: Scale,
    frame: u32,
) -> Result<Vec<Detection>, NetworkError> {
    let (channels, gh, gw) = head.shape();
    let per_anchor = 5 + class_count;
    if class_count == 0 || channels != anchors.len() * per_anchor {
        return Err(NetworkError::Topology(format!(
            "head has {channels} channels, expected {} anchors x (5 + {class_count} classes)",
            anchors.len()
        )));
    }
    let stride_x = input_side as f64 / gw as f64;
    let stride_y = input_side as f64 / gh as f64;
    let (img_w, img_h) = (image_dims.0 as f64, image_dims.1 as f64);

    let mut out = Vec::new();
    for (a, &(aw, ah)) in anchors.iter().enumerate() {
        let base = a * per_anchor;
        for gy in 0..gh {
            for gx in 0..gw {
                let at = |k: usize| f64::from(head.get(base + k, gy, gx));
                let objectness = sigmoid(at(4));
                let (class_id, class_score) = (0..class_count)
                    .map(|c| (c, sigmoid(at(5 + c))))
                    .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
                let confidence = objectness * class_score;
                if confidence.is_nan() || confidence < f64::from(threshold) {
                    continue;
                }
                let cx = (gx as f64 + sigmoid(at(0))) * stride_x;
                let cy = (gy as f64 + sigmoid(at(1))) * stride_y;
                let bw = f64::from(aw) * at(2).exp();
                let bh = f64::from(ah) * at(3).exp();
                let net_box = BBox {
                    x1: cx - bw / 2.0,
                    y1: cy - bh / 2.0,
                    x2: cx + bw / 2.0,
                    y2: cy + bh / 2.0,
                };
                let Some(bbox) = transform.to_image(&net_box).clamp_to(img_w, img_h) else {
                    continue;
                };
                out.push(Detection {
                    class_id: class_id as u32,
                    confidence: confidence as f32,
                    bbox,
                    scale,
                    frame,
                });
            }
        }
    }
    Ok(out)
}

/// Greedy per-class suppression, highest confidence first.
pub fn non_max_suppression(mut dets: Vec<Detection>, iou_threshold: f64) -> Vec<Detection> {
    // stable sort keeps decode order among equal confidences
    dets.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    let mut kept: Vec<Detection> = Vec::new();
    for d in dets {
        if kept
            .iter()
            .all(|k| k.class_id != d.class_id || k.bbox.iou(&d.bbox) <= iou_threshold)
        {
            kept.push(d);
        }
    }
    kept
}
