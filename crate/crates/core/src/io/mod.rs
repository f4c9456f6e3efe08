//! On-disk formats: NPY feature tensors, 8-bit masks, the `ACCD` model
//! container, and the dataset directory layout.

pub mod dataset;
pub mod features;
pub mod mask;
pub mod model_file;
pub mod npy;

pub use features::{load_feature_sequence, FeatureSequence};
pub use mask::{
    load_ground_truth, load_mask, load_prediction_mask, save_mask, BinaryMask, GroundTruthMask,
    GtClass, LabelSource, LoadedMask,
};
pub use model_file::{load_model, read_model, save_model, write_model};
