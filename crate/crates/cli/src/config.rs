//! Plain `key = value` run configuration. Blank lines and `#` comments are
//! ignored; unknown or repeated keys are errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use odcsa::loss::LossConfig;
use odcsa::nn::Ablation;
use odcsa::optim::LrSchedule;

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub size: usize,
    pub seed: u64,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub lr_decay_every: usize,
    pub lr_decay: f64,
    pub scales: Vec<f64>,
    pub data_dir: PathBuf,
    pub ckpt_path: PathBuf,
    pub log_path: PathBuf,
    pub ablation: Ablation,
    pub loss: LossConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            size: 64,
            seed: 0,
            epochs: 100,
            batch: 16,
            lr: 1e-4,
            lr_decay_every: 30,
            lr_decay: 0.1,
            scales: vec![0.75, 1.0, 1.25],
            data_dir: PathBuf::from("data"),
            ckpt_path: PathBuf::from("model.ckpt"),
            log_path: PathBuf::from("train_log.csv"),
            ablation: Ablation::ALL,
            loss: LossConfig::default(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "size",
    "seed",
    "epochs",
    "batch",
    "lr",
    "lr_decay_every",
    "lr_decay",
    "scales",
    "data_dir",
    "ckpt_path",
    "log_path",
    "ablation.use_odc",
    "ablation.use_msfa",
    "ablation.use_era",
    "ablation.use_sra",
    "loss.weight_amp",
    "loss.weight_window",
];

fn parse<T: FromStr>(value: &str) -> Result<T>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    Ok(value.parse::<T>()?)
}

fn parse_scales(value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|s| parse::<f64>(s.trim())).collect()
}

fn join_scales(scales: &[f64]) -> String {
    scales.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
}

impl Config {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse_str(&text).with_context(|| format!("config {}", path.display()))
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("line {}: expected key = value, got {line:?}", i + 1);
            };
            let (key, value) = (key.trim(), value.trim());
            ensure!(!seen.contains(&key), "line {}: key {key} given twice", i + 1);
            cfg.set(key, value).with_context(|| format!("line {}: {key}", i + 1))?;
            seen.push(key);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "size" => self.size = parse(value)?,
            "seed" => self.seed = parse(value)?,
            "epochs" => self.epochs = parse(value)?,
            "batch" => self.batch = parse(value)?,
            "lr" => self.lr = parse(value)?,
            "lr_decay_every" => self.lr_decay_every = parse(value)?,
            "lr_decay" => self.lr_decay = parse(value)?,
            "scales" => self.scales = parse_scales(value)?,
            "data_dir" => self.data_dir = PathBuf::from(value),
            "ckpt_path" => self.ckpt_path = PathBuf::from(value),
            "log_path" => self.log_path = PathBuf::from(value),
            "ablation.use_odc" => self.ablation.use_odc = parse(value)?,
            "ablation.use_msfa" => self.ablation.use_msfa = parse(value)?,
            "ablation.use_era" => self.ablation.use_era = parse(value)?,
            "ablation.use_sra" => self.ablation.use_sra = parse(value)?,
            "loss.weight_amp" => self.loss.weight_amp = parse(value)?,
            "loss.weight_window" => self.loss.weight_window = parse(value)?,
            _ => bail!("unknown key (known keys: {})", KEYS.join(", ")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.size >= 32 && self.size.is_multiple_of(32),
            "size {} is not a positive multiple of 32",
            self.size
        );
        ensure!(self.epochs >= 1, "epochs must be at least 1");
        ensure!(self.batch >= 1, "batch must be at least 1");
        ensure!(self.lr > 0.0 && self.lr.is_finite(), "lr {} must be positive", self.lr);
        ensure!(
            self.lr_decay > 0.0 && self.lr_decay.is_finite(),
            "lr_decay {} must be positive",
            self.lr_decay
        );
        ensure!(
            !self.scales.is_empty() && self.scales.iter().all(|s| *s > 0.0 && s.is_finite()),
            "scales must be positive numbers"
        );
        ensure!(self.loss.weight_amp >= 0.0, "loss.weight_amp must be >= 0");
        ensure!(self.loss.weight_window % 2 == 1, "loss.weight_window must be odd");
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            base: self.lr,
            decay: self.lr_decay,
            every: self.lr_decay_every,
        }
    }

    /// Every key with its value; parses back to the same config.
    pub fn dump(&self) -> String {
        let a = &self.ablation;
        let mut out = String::new();
        let mut put = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("string write");
        put("size", self.size.to_string());
        put("seed", self.seed.to_string());
        put("epochs", self.epochs.to_string());
        put("batch", self.batch.to_string());
        put("lr", self.lr.to_string());
        put("lr_decay_every", self.lr_decay_every.to_string());
        put("lr_decay", self.lr_decay.to_string());
        put("scales", join_scales(&self.scales));
        put("data_dir", self.data_dir.display().to_string());
        put("ckpt_path", self.ckpt_path.display().to_string());
        put("log_path", self.log_path.display().to_string());
        put("ablation.use_odc", a.use_odc.to_string());
        put("ablation.use_msfa", a.use_msfa.to_string());
        put("ablation.use_era", a.use_era.to_string());
        put("ablation.use_sra", a.use_sra.to_string());
        put("loss.weight_amp", self.loss.weight_amp.to_string());
        put("loss.weight_window", self.loss.weight_window.to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_dump() {
        let d = Config::default();
        let text = d.dump();
        assert_eq!(text.lines().count(), KEYS.len());
        for (line, key) in text.lines().zip(KEYS) {
            assert!(line.starts_with(&format!("{key} = ")), "{line}");
        }
        assert_eq!(Config::parse_str(&text).unwrap(), d);
        assert!(text.contains("lr = 0.0001\n"));
        assert!(text.contains("scales = 0.75,1,1.25\n"));
    }

    #[test]
    fn parses_overrides_and_comments() {
        let c = Config::parse_str("# run\nsize = 96\n\nablation.use_odc=false  # row b\nscales = 1\n").unwrap();
        assert_eq!(c.size, 96);
        assert!(!c.ablation.use_odc);
        assert_eq!(c.scales, vec![1.0]);
        assert_eq!(Config::parse_str(&c.dump()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_input() {
        for (text, needle) in [
            ("colour = red", "unknown key"),
            ("size = 50", "multiple of 32"),
            ("size", "expected key = value"),
            ("seed = 1\nseed = 2", "twice"),
            ("lr = fast", "lr"),
            ("ablation.use_era = maybe", "ablation.use_era"),
            ("loss.weight_window = 30", "odd"),
        ] {
            let e = format!("{:#}", Config::parse_str(text).unwrap_err());
            assert!(e.contains(needle), "{text:?} -> {e}");
        }
    }
}
