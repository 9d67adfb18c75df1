//! Encoder-classifier: batch-norm (optional) → single-layer GRU → linear
//! head, with hand-written reverse-mode gradients.

pub mod batchnorm;
pub mod checkpoint;
pub mod gru;
pub mod head;
pub mod linalg;
pub mod network;
pub mod params;

pub use batchnorm::{batchnorm_backward, batchnorm_forward, BnCache, Mode};
pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use gru::{gru_backward, gru_forward, GruCache};
pub use head::{argmax, cross_entropy, head_forward, softmax};
pub use linalg::Mat;
pub use network::{apply_running_stats, backward, embed, forward_batch, predict, predict_logits, BatchCache, BatchOutput};
pub use params::{BatchNormParams, Dims, Gradients, GruParams, HeadParams, ModelParams};
