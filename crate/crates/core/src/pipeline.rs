//! Glue from frames and annotations to labeled signatures.

use crate::eval::LabeledSample;
use crate::formats::AnnotationRecord;
use crate::net::{
    decode_head, letterbox, non_max_suppression, Detection, ForwardOutput, LayerId, LetterboxTransform, MicroFcn,
    NetworkError, Scale,
};
use crate::signature::{scale_for_box, SignatureError, SignatureExtractor};
use crate::tensor::Tensor3;

/// Network outputs for one letterboxed frame.
#[derive(Debug, Clone)]
pub struct FrameFeatures {
    pub frame: u32,
    pub image_width: usize,
    pub image_height: usize,
    pub transform: LetterboxTransform,
    pub output: ForwardOutput,
}

/// Letterboxes a `3 x H x W` image and runs the network on it.
pub fn run_frame(net: &MicroFcn, image: &Tensor3, frame: u32, retain: &[LayerId]) -> Result<FrameFeatures, NetworkError> {
    let (_, h, w) = image.shape();
    let (input, transform) = letterbox(image, net.input_side());
    let output = net.forward(&input, retain)?;
    Ok(FrameFeatures {
        frame,
        image_width: w,
        image_height: h,
        transform,
        output,
    })
}

/// Decodes all three heads and applies per-class NMS.
pub fn detect(net: &MicroFcn, f: &FrameFeatures, threshold: f32, nms_iou: f64) -> Result<Vec<Detection>, NetworkError> {
    let def = net.def();
    let mut dets = Vec::new();
    for scale in Scale::ALL {
        dets.extend(decode_head(
            f.output.head(scale),
            def.anchors(scale),
            def.class_count(),
            threshold,
            &f.transform,
            (f.image_width, f.image_height),
            def.input_side(),
            scale,
            f.frame,
        )?);
    }
    Ok(non_max_suppression(dets, nms_iou))
}

/// One signature per annotation, integrated over the annotated box. The head
/// is chosen by box size.
pub fn annotation_signatures<'a>(
    extractor: &SignatureExtractor,
    transform: &LetterboxTransform,
    side: usize,
    image_dims: (usize, usize),
    records: impl IntoIterator<Item = &'a AnnotationRecord>,
) -> Result<Vec<LabeledSample>, SignatureError> {
    records
        .into_iter()
        .map(|r| {
            let bbox = r
                .bbox
                .clamp_to(image_dims.0 as f64, image_dims.1 as f64)
                .ok_or(SignatureError::InvalidBox(r.bbox))?;
            let scale = scale_for_box(&bbox, transform, side);
            let mut values = vec![0.0; extractor.channels()];
            let layer = extractor.extract_into(&bbox, scale, &mut values)?;
            Ok(LabeledSample {
                label: r.track.clone(),
                frame: r.frame,
                scale,
                layer,
                values,
            })
        })
        .collect()
}

/// Pairs each annotation, in order, with the unused detection of highest IoU
/// at or above `min_iou`. Returns `(annotation index, detection index)`.
pub fn match_detections(records: &[&AnnotationRecord], dets: &[Detection], min_iou: f64) -> Vec<(usize, usize)> {
    let mut used = vec![false; dets.len()];
    let mut out = Vec::new();
    for (ri, r) in records.iter().enumerate() {
        let best = dets
            .iter()
            .enumerate()
            .filter(|(di, _)| !used[*di])
            .map(|(di, d)| (di, r.bbox.iou(&d.bbox)))
            .filter(|&(_, iou)| iou >= min_iou)
            .fold(None, |acc: Option<(usize, f64)>, cur| match acc {
                Some(a) if a.1 >= cur.1 => Some(a),
                _ => Some(cur),
            });
        if let Some((di, _)) = best {
            used[di] = true;
            out.push((ri, di));
        }
    }
    out
}

/// Signatures of detections matched to annotations, labeled by track.
pub fn detection_signatures(
    extractor: &SignatureExtractor,
    records: &[&AnnotationRecord],
    dets: &[Detection],
    min_iou: f64,
) -> Result<Vec<LabeledSample>, SignatureError> {
    match_detections(records, dets, min_iou)
        .into_iter()
        .map(|(ri, di)| {
            let sig = extractor.extract(&dets[di], di as u32)?;
            Ok(LabeledSample {
                label: records[ri].track.clone(),
                frame: records[ri].frame,
                scale: sig.scale,
                layer: sig.layer,
                values: sig.values,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use crate::net::FeatureCache;
    use crate::signature::SignatureLayerConfig;

    fn record(frame: u32, track: &str, b: (f64, f64, f64, f64)) -> AnnotationRecord {
        AnnotationRecord {
            frame,
            track: track.into(),
            object_type: "Car".into(),
            bbox: BBox::new(b.0, b.1, b.2, b.3).unwrap(),
        }
    }

    fn det(b: (f64, f64, f64, f64)) -> Detection {
        Detection {
            class_id: 0,
            confidence: 0.9,
            bbox: BBox::new(b.0, b.1, b.2, b.3).unwrap(),
            scale: Scale::Medium,
            frame: 0,
        }
    }

    #[test]
    fn matching_is_greedy_in_annotation_order() {
        let a = record(0, "a", (0.0, 0.0, 10.0, 10.0));
        let b = record(0, "b", (20.0, 0.0, 30.0, 10.0));
        let dets = [det((21.0, 0.0, 31.0, 10.0)), det((1.0, 0.0, 11.0, 10.0)), det((0.0, 0.0, 10.0, 10.0))];
        assert_eq!(match_detections(&[&a, &b], &dets, 0.5), vec![(0, 2), (1, 0)]);
        assert!(match_detections(&[&a], &dets[..1], 0.5).is_empty());
    }

    #[test]
    fn annotation_signatures_use_the_track_label() {
        let cache: FeatureCache = [(3, Tensor3::filled(2, 4, 4, 1.0).unwrap())].into_iter().collect();
        let t = LetterboxTransform::identity();
        let ex = SignatureExtractor::new(&cache, &SignatureLayerConfig::uniform(3), t, 32).unwrap();
        let recs = [record(4, "car_9", (0.0, 0.0, 16.0, 8.0)), record(4, "x", (-5.0, -5.0, 8.0, 8.0))];
        let sigs = annotation_signatures(&ex, &t, 32, (32, 32), &recs).unwrap();
        assert_eq!(sigs.len(), 2);
        assert_eq!(sigs[0].label, "car_9");
        assert_eq!(sigs[0].frame, 4);
        assert_eq!(sigs[0].values, vec![2.0, 2.0]);
        assert_eq!(sigs[1].values, vec![1.0, 1.0]);
        let outside = [record(0, "y", (40.0, 40.0, 50.0, 50.0))];
        assert!(matches!(
            annotation_signatures(&ex, &t, 32, (32, 32), &outside),
            Err(SignatureError::InvalidBox(_))
        ));
    }
}
