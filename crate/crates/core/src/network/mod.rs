//! The hourglass denoiser and the reverse-mode tape it runs on.

mod arch;
mod checkpoint;
mod graph;
mod hourglass;
mod tensor;

pub use arch::{Activation, ArchSpec, Norm, Padding, Upsample};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION,
};
pub use graph::{Grads, Graph, Var};
pub use hourglass::{DenoiserNetwork, Dual};
pub use tensor::Tensor;

/// `init_network`: a randomly initialized hourglass for `channels`-channel images.
pub fn init_network(arch: ArchSpec, channels: usize, seed: u64) -> crate::Result<DenoiserNetwork> {
    DenoiserNetwork::new(arch, channels, seed)
}
