//! Segmentation quality measures on single-channel prediction maps.

pub mod edt;
mod emeasure;
mod fbeta;
mod overlap;
mod report;
mod smeasure;

pub use edt::{distance_transform, DistanceField};
pub use emeasure::e_measure_max;
pub use fbeta::{weighted_fbeta, FbetaConfig, FbetaScore};
pub use overlap::{dice_at, dice_iou, mae, threshold_levels};
pub use report::{evaluate_dataset, MetricReport, PairMetrics, CSV_HEADER};
pub use smeasure::s_measure;

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// A prediction map in [0,1] and its binary ground truth, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PredPair {
    h: usize,
    w: usize,
    pred: Vec<f64>,
    gt: Vec<bool>,
}

impl PredPair {
    pub fn new(h: usize, w: usize, pred: Vec<f64>, gt: Vec<bool>) -> Result<Self> {
        if pred.len() != h * w || gt.len() != h * w {
            return Err(Error::Shape {
                op: "pred_pair",
                detail: format!(
                    "{h}x{w} map needs {} values, got pred {} and gt {}",
                    h * w,
                    pred.len(),
                    gt.len()
                ),
            });
        }
        if h == 0 || w == 0 {
            return Err(Error::InvalidArgument("pred_pair: empty map".into()));
        }
        if let Some(v) = pred.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "pred_pair: prediction {v} outside [0,1]"
            )));
        }
        Ok(Self { h, w, pred, gt })
    }

    /// From single-plane tensors; the mask must be exactly 0 or 1.
    pub fn from_tensors(pred: &Tensor4, gt: &Tensor4) -> Result<Self> {
        let (ps, gs) = (pred.shape(), gt.shape());
        if ps != gs || ps.n != 1 || ps.c != 1 {
            return Err(Error::Shape {
                op: "pred_pair",
                detail: format!("prediction {ps} and mask {gs} must be equal single planes"),
            });
        }
        let mut mask = Vec::with_capacity(gt.len());
        for &v in gt.data() {
            match v {
                0.0 => mask.push(false),
                1.0 => mask.push(true),
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "pred_pair: mask value {v} is not binary"
                    )))
                }
            }
        }
        Self::new(ps.h, ps.w, pred.data().to_vec(), mask)
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn pred(&self) -> &[f64] {
        &self.pred
    }

    pub fn gt(&self) -> &[bool] {
        &self.gt
    }

    pub fn len(&self) -> usize {
        self.pred.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pred.is_empty()
    }

    pub fn gt_count(&self) -> usize {
        self.gt.iter().filter(|&&g| g).count()
    }
}
