//! Differentiable operations. Each submodule holds the forward kernel, the
//! backward rule, and the `Tape` method that records it.

pub mod conv;
pub mod elementwise;
pub mod pool;
pub mod resize;
pub mod softmax;

pub use conv::out_dim;
pub use elementwise::{concat_channels, sigmoid};
pub use pool::{avg_pool2x2, global_avg_pool};
pub use resize::bilinear_resize;
pub use softmax::softmax_spatial;
