use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use odcsa::data::{load_dataset, read_image, save_dataset, synth_generate, write_pgm, SynthConfig};
use odcsa::gradsuite::{self, CHECKS, PASS_THRESHOLD};
use odcsa::metrics::{evaluate_dataset, MetricReport, CSV_HEADER};
use odcsa::nn::{Ablation, NetConfig, OdcComparison, OdcSaNet};

use crate::config::Config;
use crate::eval::{map_pairs, model_pairs, predict_map};
use crate::train::{train, TrainSummary};

/// `3.2e-06` style: one decimal, signed two-digit exponent.
pub fn fmt_sci(x: f64) -> String {
    let s = format!("{x:.1e}");
    let Some((mant, exp)) = s.split_once('e') else {
        return s;
    };
    let exp: i32 = exp.parse().unwrap_or(0);
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mant}e{sign}{:02}", exp.abs())
}

pub fn synth(out_dir: &Path, n: usize, size: usize, seed: u64, out: &mut impl Write) -> Result<()> {
    let cfg = SynthConfig {
        count: n,
        size,
        seed,
        ..SynthConfig::default()
    };
    let d = synth_generate(&cfg)?;
    save_dataset(out_dir, &d.samples)?;
    save_dataset(&out_dir.join("rotated"), &d.rotated)?;
    writeln!(
        out,
        "wrote {n} samples of {size}x{size} to {} (rotated copies in {})",
        out_dir.display(),
        out_dir.join("rotated").display()
    )?;
    Ok(())
}

pub fn train_cmd(config: &Path, out: &mut impl Write) -> Result<TrainSummary> {
    let cfg = Config::from_file(config)?;
    let s = train(&cfg)?;
    writeln!(
        out,
        "trained {} steps, {} parameters, final loss {:.6}; checkpoint {}, log {}",
        s.steps,
        s.num_params,
        s.last.total,
        cfg.ckpt_path.display(),
        cfg.log_path.display()
    )?;
    Ok(s)
}

/// Where eval reads its predictions from.
pub enum PredSource<'a> {
    Checkpoint(&'a Path),
    Maps(&'a Path),
}

pub fn eval(source: PredSource, data: &Path, report: &Path, out: &mut impl Write) -> Result<MetricReport> {
    let samples = load_dataset(data)?;
    let pairs = match source {
        PredSource::Checkpoint(ckpt) => {
            let model = OdcSaNet::load(ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
            model_pairs(&model, &samples)?
        }
        PredSource::Maps(dir) => map_pairs(dir, &samples)?,
    };
    let r = evaluate_dataset(&pairs)?;
    let name = data
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into());
    let text = format!("{CSV_HEADER}\n{}\n", r.csv_row(&name));
    fs::write(report, &text).with_context(|| format!("writing {}", report.display()))?;
    write!(out, "{text}")?;
    Ok(r)
}

pub fn predict(ckpt: &Path, image: &Path, dest: &Path, out: &mut impl Write) -> Result<()> {
    let model = OdcSaNet::load(ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
    let img = read_image(image)?;
    let map = predict_map(&model, &img)?;
    write_pgm(&map, dest)?;
    writeln!(out, "wrote {}", dest.display())?;
    Ok(())
}

/// Runs one named check or all of them; returns whether every check passed.
pub fn gradcheck(block: &str, seed: u64, out: &mut impl Write) -> Result<bool> {
    let names: Vec<&str> = if block == "all" {
        CHECKS.to_vec()
    } else if CHECKS.contains(&block) {
        vec![block]
    } else {
        bail!("unknown block {block:?}; choose one of {} or all", CHECKS.join(", "));
    };
    let mut failed = 0;
    for name in &names {
        let r = gradsuite::run(name, seed)?;
        let ok = r.max_rel_err < PASS_THRESHOLD && r.checked > 0;
        failed += usize::from(!ok);
        let verdict = if ok { "PASS" } else { "FAIL" };
        writeln!(out, "{name}: max_rel_err {} {verdict}", fmt_sci(r.max_rel_err))?;
    }
    if names.len() > 1 {
        writeln!(out, "{} of {} checks passed", names.len() - failed, names.len())?;
    }
    Ok(failed == 0)
}

pub fn flops(size: usize, row: char, out: &mut impl Write) -> Result<()> {
    let Some(ablation) = Ablation::row(row) else {
        bail!("unknown ablation row {row:?}; choose a, b, c, d or e");
    };
    let cfg = NetConfig {
        ablation,
        ..NetConfig::default()
    };
    let model = OdcSaNet::new(cfg, 0)?;
    let acc = model.accounting(size, size)?;
    writeln!(out, "input {size}x{size}, ablation row {row}")?;
    writeln!(out, "{:<16} {:>12} {:>16}", "block", "params", "macs")?;
    for r in &acc.rows {
        writeln!(out, "{:<16} {:>12} {:>16}", r.label, r.params, r.macs)?;
    }
    writeln!(
        out,
        "{:<16} {:>12} {:>16}",
        "total",
        acc.total_params(),
        acc.total_macs()
    )?;
    let cmp = OdcComparison::for_channels(cfg.channels);
    writeln!(
        out,
        "odc branches C={}: rect 18C^2 = {} weights, dense 3x3 27C^2 = {} weights, ratio {:.4}",
        cmp.channels,
        cmp.rect_weights,
        cmp.dense_weights,
        cmp.ratio()
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scientific_format() {
        assert_eq!(fmt_sci(3.2e-6), "3.2e-06");
        assert_eq!(fmt_sci(0.0), "0.0e+00");
        assert_eq!(fmt_sci(1.25e-12), "1.2e-12");
        assert_eq!(fmt_sci(4.0), "4.0e+00");
    }

    #[test]
    fn unknown_block_lists_choices() {
        let e = gradcheck("odd", 0, &mut Vec::new()).unwrap_err().to_string();
        assert!(e.contains("odc") && e.contains("or all"), "{e}");
    }

    #[test]
    fn flops_ratio_line() {
        let mut buf = Vec::new();
        flops(64, 'a', &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(
            text.contains("18432") && text.contains("27648") && text.contains("ratio 0.6667"),
            "{text}"
        );
    }
}
