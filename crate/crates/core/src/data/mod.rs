//! Netpbm I/O, resizing, the multi-scale transform and synthetic data.

pub mod dataset;
pub mod netpbm;
pub mod sample;
pub mod synth;

pub use dataset::{image_path, list_stems, load_dataset, mask_path, save_dataset};
pub use netpbm::{
    decode, encode_pgm, encode_ppm, quantize, read_gray, read_image, read_mask, read_raster, write_pgm, write_ppm,
    Raster,
};
pub use sample::{
    multiscale_pick, multiscale_pick_from, nearest_resize, resize_sample, scaled_size, snap_to_32, Sample,
    DEFAULT_SCALES,
};
pub use synth::{synth_generate, SynthConfig, SynthDataset};
