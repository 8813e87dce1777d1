//! Deterministic training loop: seeded shuffling, one multi-scale size per
//! batch, step-decayed Adam, a CSV row per step and a checkpoint at the end.

use std::fs::File;
use std::io::{BufWriter, Write};

use anyhow::{ensure, Context, Result};
use odcsa::data::{load_dataset, multiscale_pick_from, resize_sample, Sample};
use odcsa::loss::LossReport;
use odcsa::nn::{NetConfig, OdcSaNet};
use odcsa::optim::{Adam, AdamConfig};
use odcsa::rng::Prng;
use odcsa::Tensor4;

use crate::config::Config;

pub const RUNLOG_HEADER: &str = "epoch,step,lr,bce_w,iou_w,total";

/// Keeps the batch order stream apart from weight initialisation.
const ORDER_STREAM: u64 = 0xD1B5_4A32_D192_ED03;

pub fn runlog_row(epoch: usize, step: usize, lr: f64, r: &LossReport) -> String {
    format!("{epoch},{step},{lr:e},{:.9},{:.9},{:.9}", r.bce_w, r.iou_w, r.total)
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub steps: usize,
    pub last: LossReport,
    pub num_params: usize,
}

/// Images and masks of `samples`, all resized to `size`, stacked.
pub fn make_batch(samples: &[&Sample], size: usize) -> Result<(Tensor4, Tensor4)> {
    let mut images = Vec::with_capacity(samples.len());
    let mut masks = Vec::with_capacity(samples.len());
    for s in samples {
        let r = resize_sample(s, size)?;
        images.push(r.image);
        masks.push(r.mask);
    }
    Ok((Tensor4::stack(&images)?, Tensor4::stack(&masks)?))
}

/// Trains from `cfg.data_dir` and writes the checkpoint and the run log.
pub fn train(cfg: &Config) -> Result<TrainSummary> {
    let data = load_dataset(&cfg.data_dir)?;
    train_on(cfg, &data, None).map(|(_, s)| s)
}

/// Training on in-memory samples; `max_steps` stops early after that many
/// optimiser steps. Checkpoint and log go to the paths in `cfg`.
pub fn train_on(cfg: &Config, data: &[Sample], max_steps: Option<usize>) -> Result<(OdcSaNet, TrainSummary)> {
    cfg.validate()?;
    ensure!(!data.is_empty(), "no training samples");
    let net_cfg = NetConfig {
        ablation: cfg.ablation,
        ..NetConfig::default()
    };
    let mut model = OdcSaNet::new(net_cfg, cfg.seed)?;
    let mut opt = Adam::new(AdamConfig::default());
    let schedule = cfg.schedule();
    let mut prng = Prng::new(cfg.seed ^ ORDER_STREAM);
    let file = File::create(&cfg.log_path).with_context(|| format!("creating {}", cfg.log_path.display()))?;
    let mut log = BufWriter::new(file);
    writeln!(log, "{RUNLOG_HEADER}")?;
    let limit = max_steps.unwrap_or(usize::MAX);
    let mut step = 0;
    let mut last = LossReport::default();
    'epochs: for epoch in 0..cfg.epochs {
        let lr = schedule.lr_at(epoch);
        let mut order: Vec<usize> = (0..data.len()).collect();
        prng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch) {
            if step >= limit {
                break 'epochs;
            }
            let size = multiscale_pick_from(&mut prng, cfg.size, &cfg.scales);
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &data[i]).collect();
            let (images, masks) = make_batch(&batch, size)?;
            last = model.train_step(&mut opt, &images, &masks, lr, &cfg.loss)?;
            ensure!(last.total.is_finite(), "loss diverged at step {step}");
            writeln!(log, "{}", runlog_row(epoch, step, lr, &last))?;
            step += 1;
        }
        log.flush()?;
    }
    log.flush()?;
    model
        .save(&cfg.ckpt_path)
        .with_context(|| format!("writing {}", cfg.ckpt_path.display()))?;
    let summary = TrainSummary {
        steps: step,
        last,
        num_params: model.num_params(),
    };
    Ok((model, summary))
}
