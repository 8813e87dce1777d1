use crate::error::{Error, Result};
use crate::ops::bilinear_resize;
use crate::rng::Prng;
use crate::tensor::{Shape, Tensor4};

pub const DEFAULT_SCALES: [f64; 3] = [0.75, 1.0, 1.25];

/// Image (1,3,H,W) in [0,1] with its binary mask (1,1,H,W).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Tensor4,
    pub mask: Tensor4,
    pub id: String,
}

impl Sample {
    pub fn new(image: Tensor4, mask: Tensor4, id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        let (si, sm) = (image.shape(), mask.shape());
        if si.n != 1 || si.c != 3 || sm.n != 1 || sm.c != 1 || (si.h, si.w) != (sm.h, sm.w) {
            return Err(Error::InvalidArgument(format!(
                "sample {id}: image {si} and mask {sm} do not form (1,3,H,W)/(1,1,H,W)"
            )));
        }
        if let Some(v) = image.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "sample {id}: image value {v} outside [0, 1]"
            )));
        }
        if let Some(v) = mask.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidArgument(format!(
                "sample {id}: mask value {v} is not binary"
            )));
        }
        Ok(Self { image, mask, id })
    }

    pub fn height(&self) -> usize {
        self.image.shape().h
    }

    pub fn width(&self) -> usize {
        self.image.shape().w
    }

    /// Clockwise quarter turn of image and mask together.
    pub fn rot90(&self, id: impl Into<String>) -> Sample {
        Sample {
            image: self.image.rot90(),
            mask: self.mask.rot90(),
            id: id.into(),
        }
    }
}

fn nearest_index(i: usize, input: usize, output: usize) -> usize {
    // same half-pixel centres as the bilinear resampler
    let src = ((i as f64 + 0.5) * input as f64 / output as f64).floor() as usize;
    src.min(input - 1)
}

/// Nearest-neighbour resampling; keeps binary maps binary.
pub fn nearest_resize(x: &Tensor4, out_h: usize, out_w: usize) -> Result<Tensor4> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument(format!(
            "nearest_resize: target size {out_h}x{out_w} must be at least 1x1"
        )));
    }
    let s = x.shape();
    let ys: Vec<usize> = (0..out_h).map(|y| nearest_index(y, s.h, out_h)).collect();
    let xs: Vec<usize> = (0..out_w).map(|v| nearest_index(v, s.w, out_w)).collect();
    Ok(Tensor4::from_fn(Shape::new(s.n, s.c, out_h, out_w), |n, c, y, v| {
        x.at(n, c, ys[y], xs[v])
    }))
}

/// Square resize: bilinear for the image, nearest for the mask.
pub fn resize_sample(sample: &Sample, size: usize) -> Result<Sample> {
    if (sample.height(), sample.width()) == (size, size) {
        return Ok(sample.clone());
    }
    // clamping absorbs last-ulp overshoot of the interpolation
    let image = bilinear_resize(&sample.image, size, size)?.map(|v| v.clamp(0.0, 1.0));
    let mask = nearest_resize(&sample.mask, size, size)?;
    Ok(Sample {
        image,
        mask,
        id: sample.id.clone(),
    })
}

/// Nearest multiple of 32 (at least 32). An exact tie goes away from `base`
/// so that shrinking scales shrink and growing scales grow.
pub fn snap_to_32(value: usize, base: usize) -> usize {
    let lower = value / 32 * 32;
    let upper = lower + 32;
    let snapped = match (value - lower).cmp(&(upper - value)) {
        std::cmp::Ordering::Less => lower,
        std::cmp::Ordering::Greater => upper,
        std::cmp::Ordering::Equal if value < base => lower,
        std::cmp::Ordering::Equal => upper,
    };
    snapped.max(32)
}

/// Target size for one scale factor.
pub fn scaled_size(base: usize, scale: f64) -> usize {
    snap_to_32((base as f64 * scale).round() as usize, base)
}

/// Uniform choice over `scales`, snapped to the 32-pixel grid.
pub fn multiscale_pick_from(prng: &mut Prng, base: usize, scales: &[f64]) -> usize {
    assert!(!scales.is_empty(), "multiscale_pick_from: no scales");
    let s = scales[prng.below(scales.len() as u64) as usize];
    scaled_size(base, s)
}

/// Uniform choice over {0.75, 1, 1.25}.
pub fn multiscale_pick(prng: &mut Prng, base: usize) -> usize {
    multiscale_pick_from(prng, base, &DEFAULT_SCALES)
}
