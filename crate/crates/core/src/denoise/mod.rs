//! Denoisers: preprocessing, training losses, the CNN3 network and its
//! trainer, classical baselines, and the common application path.

pub mod apply;
pub mod classical;
pub mod cnn3;
pub mod loss;
pub mod preprocess;
pub mod train;

pub use apply::{apply_denoiser, read_weights, write_weights, Denoiser, TrainedModel};
pub use classical::{gaussian_denoise, tv_denoise};
pub use cnn3::{cnn3_forward, Cnn3Weights};
pub use loss::{loss_and_grad, LossConfig, LossKind};
pub use preprocess::{
    denormalize, dose_blend, make_patch_set, normalize, Augment, NormMode, Normalization, PatchPair, PatchSet,
    PreprocessConfig,
};
pub use train::{cnn3_train, Optimizer, TrainConfig, TrainResult};
