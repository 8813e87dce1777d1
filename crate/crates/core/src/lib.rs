//! ODC-SA polyp segmentation: a small reverse-mode tensor engine, the
//! network blocks built on it, the boundary-weighted loss, the evaluation
//! metrics and Netpbm data handling.

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod gradsuite;
pub mod loss;
pub mod metrics;
pub mod nn;
pub mod ops;
pub mod optim;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use tape::{ConvGeom, Gradients, Tape, Var};
pub use tensor::{Shape, Tensor4};
