pub mod adam;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod gradcheck;
pub mod infer;
pub mod layers;
pub mod network;
pub mod train;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, TrainMeta, CHECKPOINT_VERSION};
pub use data::{Corpus, Example, FeaturePipeline};
pub use error::{ModelError, Result};
pub use evaluate::evaluate;
pub use infer::{enhance, export_latents, LatentCondition, LatentExport};
pub use network::{l1_grad, l1_loss, Masks, NetConfig, Network, Variant};
pub use train::{train, train_network, EarlyStopping, TrainConfig};
