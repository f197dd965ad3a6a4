//! Vehicle re-identification from region-integrated convolutional features.
//!
//! A detection box is projected onto a chosen feature-map layer and the
//! activations inside it are summed per channel. The resulting fixed-length
//! vector is matched against a labeled gallery with k-nearest neighbours.
//!
//! * [`tensor`]: dense `c x h x w` maps and summed-area tables.
//! * [`net`]: a small YOLO-shaped detector that produces feature maps.
//! * [`signature`]: box-to-region mapping and signature extraction.
//! * [`gallery`]: exhaustive KNN matching.
//! * [`eval`]: balanced sampling, stratified folds and accuracy reports.
//! * [`formats`]: annotation, activation-dump and signature files.

mod binio;
pub mod eval;
pub mod formats;
pub mod gallery;
pub mod geometry;
pub mod net;
pub mod pipeline;
pub mod signature;
pub mod synth;
pub mod tensor;

pub use eval::{balance_dataset, evaluate, kfold, stratified_kfold, EvalError, EvalReport, FoldStrategy, LabeledSample};
pub use gallery::{knn_classify, Gallery, GalleryEntry, KnnError, Metric, NeighborCount};
pub use geometry::BBox;
pub use net::{FeatureCache, LayerId, MicroFcn, Scale};
pub use signature::{extract_difs, map_bbox_to_fm, Signature, SignatureError, SignatureExtractor, SignatureLayerConfig};
pub use tensor::{region_sum_fast, region_sum_naive, IntegralTensor, RegionI, Tensor3, TensorError};
