use std::path::Path;

use anyhow::{ensure, Context, Result};
use odcsa::data::{read_gray, Sample};
use odcsa::metrics::{evaluate_dataset, MetricReport, PredPair};
use odcsa::nn::OdcSaNet;
use odcsa::ops::bilinear_resize;
use odcsa::Tensor4;

/// Nearest multiple of 32, at least 32.
pub fn network_side(n: usize) -> usize {
    ((n + 16) / 32).max(1) * 32
}

/// Probability map (1,1,H,W) for a (1,3,H,W) image of any size. Sides that
/// are not multiples of 32 are resampled in and out of the network.
pub fn predict_map(model: &OdcSaNet, image: &Tensor4) -> Result<Tensor4> {
    let s = image.shape();
    ensure!(s.n == 1 && s.c == 3, "expected one RGB image, got {s}");
    let (nh, nw) = (network_side(s.h), network_side(s.w));
    if (nh, nw) == (s.h, s.w) {
        return Ok(model.predict(image)?);
    }
    let p = model.predict(&bilinear_resize(image, nh, nw)?)?;
    Ok(bilinear_resize(&p, s.h, s.w)?.map(|v| v.clamp(0.0, 1.0)))
}

pub fn model_pairs(model: &OdcSaNet, samples: &[Sample]) -> Result<Vec<PredPair>> {
    samples
        .iter()
        .map(|s| {
            let p = predict_map(model, &s.image).with_context(|| format!("predicting {}", s.id))?;
            Ok(PredPair::from_tensors(&p, &s.mask)?)
        })
        .collect()
}

/// Pairs saved probability maps `<dir>/<id>.pgm` with the dataset masks.
pub fn map_pairs(dir: &Path, samples: &[Sample]) -> Result<Vec<PredPair>> {
    samples
        .iter()
        .map(|s| {
            let path = dir.join(format!("{}.pgm", s.id));
            let p = read_gray(&path)?;
            PredPair::from_tensors(&p, &s.mask).with_context(|| path.display().to_string())
        })
        .collect()
}

pub fn evaluate_model(model: &OdcSaNet, samples: &[Sample]) -> Result<MetricReport> {
    Ok(evaluate_dataset(&model_pairs(model, samples)?)?)
}
