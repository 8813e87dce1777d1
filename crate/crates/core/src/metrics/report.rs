use crate::error::{Error, Result};

use super::{dice_iou, e_measure_max, mae, s_measure, weighted_fbeta, FbetaConfig, PredPair};

pub const CSV_HEADER: &str = "dataset,mdice,miou,fbw,salpha,ephimax,mae,n";

/// All six measures of one prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMetrics {
    pub dice: f64,
    pub iou: f64,
    pub fbw: f64,
    pub s_alpha: f64,
    pub e_phi_max: f64,
    pub mae: f64,
}

impl PairMetrics {
    pub fn compute(pair: &PredPair, cfg: &FbetaConfig) -> Self {
        let (dice, iou) = dice_iou(pair);
        Self {
            dice,
            iou,
            fbw: weighted_fbeta(pair, cfg).value,
            s_alpha: s_measure(pair),
            e_phi_max: e_measure_max(pair),
            mae: mae(pair),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub mdice: f64,
    pub miou: f64,
    pub fbw: f64,
    pub s_alpha: f64,
    pub e_phi_max: f64,
    pub mae: f64,
    pub n_images: usize,
}

impl MetricReport {
    pub fn from_pairs(per_image: &[PairMetrics]) -> Result<Self> {
        if per_image.is_empty() {
            return Err(Error::InvalidArgument("evaluate: no prediction pairs".into()));
        }
        let n = per_image.len() as f64;
        let avg = |f: fn(&PairMetrics) -> f64| per_image.iter().map(f).sum::<f64>() / n;
        Ok(Self {
            mdice: avg(|m| m.dice),
            miou: avg(|m| m.iou),
            fbw: avg(|m| m.fbw),
            s_alpha: avg(|m| m.s_alpha),
            e_phi_max: avg(|m| m.e_phi_max),
            mae: avg(|m| m.mae),
            n_images: per_image.len(),
        })
    }

    pub fn csv_row(&self, dataset: &str) -> String {
        format!(
            "{dataset},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            self.mdice, self.miou, self.fbw, self.s_alpha, self.e_phi_max, self.mae, self.n_images
        )
    }
}

/// Per-image metrics averaged arithmetically, in input order.
pub fn evaluate_dataset(pairs: &[PredPair]) -> Result<MetricReport> {
    let cfg = FbetaConfig::default();
    let per: Vec<PairMetrics> = pairs.iter().map(|p| PairMetrics::compute(p, &cfg)).collect();
    MetricReport::from_pairs(&per)
}
