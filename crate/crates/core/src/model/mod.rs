//! Siamese feature network, its losses, training loop and checkpoints.

mod checkpoint;
mod config;
mod loss;
mod net;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_for, save_checkpoint,
    Checkpoint, TensorEntry, TrainingMeta, CHECKPOINT_VERSION,
};
pub use config::{ExtractorConfig, HeadConfig, NetConfig, TrainConfig, FEATURE_SIZES};
pub use loss::{
    contrastive_from_distance, contrastive_loss, euclidean_distance, identity_loss, joint_loss,
    pair_batch_loss, BatchLoss, LossParts, DEFAULT_MARGIN,
};
pub use net::{ConvBlock, Extractor, IdentityHead, RfbpNet};
pub use train::{
    extract_all, forward_backward, mean_pair_distances, pair_inputs, train, train_with, EpochLoss,
    History,
};
