//! Convolutional keypoint regressor with self-calibrated blocks.

mod model;
pub mod ops;
mod scconv;
mod train;

pub use model::{
    backbone_forward, extract_features, forward_batch, predict_keypoints, Architecture, BackboneModel, Variant,
    MODEL_KIND,
};
pub use ops::Conv2d;
pub use scconv::{scconv_backward, scconv_forward, FeatureMap, ScConvParams};
pub use train::{
    train_backbone, train_pose, FoldOutcome, PoseCvResult, PoseDataset, PoseHyper, SummaryRow,
    TrainedBackbone,
};
