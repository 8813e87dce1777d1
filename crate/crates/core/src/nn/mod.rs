//! Network layers and blocks on top of the tape.

pub mod blocks;
pub mod checkpoint;
pub mod layers;
pub mod model;
pub mod params;

pub use blocks::{Cbam, Csa, Encoder, EncoderOutputs, Era, Msfa, Odc, OdcComparison, OdcTrace, Rfa, Rfb, S2e, Sra};
pub use layers::{Accounting, Conv2d, ConvStack, CostRow};
pub use model::{Ablation, NetConfig, NetTrace, OdcSaNet};
pub use params::{check_param_grads, Builder, Ctx, ParamId, ParamStore};
