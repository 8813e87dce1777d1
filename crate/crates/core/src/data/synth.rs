//! Polyp-like synthetic data: a shaded, noisy background carrying one to
//! three brighter rotated ellipses with soft borders.
//!
//! Each image draws a target foreground fraction from its own stratum of a
//! log-uniform range, so any set of `count` images spans the whole range.
//! The largest ellipse carries most of that area; satellites only appear when
//! they can be placed disjointly and are no smaller than the 2-pixel axis
//! floor, which keeps tiny targets tiny.

use std::f64::consts::PI;

use crate::data::sample::Sample;
use crate::error::{Error, Result};
use crate::rng::Prng;
use crate::tensor::{Shape, Tensor4};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub count: usize,
    pub size: usize,
    pub seed: u64,
    /// Inclusive range of ellipses per image.
    pub ellipses: (usize, usize),
    /// Log-uniform range of the target foreground fraction.
    pub area_range: (f64, f64),
    /// Minor over major axis.
    pub aspect_range: (f64, f64),
    /// Floor on every semi-axis, in pixels.
    pub min_axis_px: f64,
    /// Half-width of the linear border ramp, in pixels.
    pub blur_radius: f64,
    /// Amplitude of the uniform per-pixel noise.
    pub noise_amp: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count: 16,
            size: 64,
            seed: 0,
            ellipses: (1, 3),
            area_range: (0.002, 0.55),
            aspect_range: (0.4, 1.0),
            min_axis_px: 2.0,
            blur_radius: 1.5,
            noise_amp: 0.04,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("synth config: {m}")));
        if self.count == 0 {
            return bad("count must be at least 1".into());
        }
        if self.size < 32 || !self.size.is_multiple_of(32) {
            return bad(format!("size {} is not a positive multiple of 32", self.size));
        }
        let (lo, hi) = self.ellipses;
        if lo == 0 || lo > hi {
            return bad(format!("ellipse range {lo}..={hi} is empty or starts at 0"));
        }
        let (alo, ahi) = self.area_range;
        if !(alo > 0.0 && alo < ahi && ahi <= 1.0) {
            return bad(format!("area range ({alo}, {ahi}) must satisfy 0 < lo < hi <= 1"));
        }
        let (rlo, rhi) = self.aspect_range;
        if !(rlo > 0.0 && rlo <= rhi && rhi <= 1.0) {
            return bad(format!("aspect range ({rlo}, {rhi}) must satisfy 0 < lo <= hi <= 1"));
        }
        if self.min_axis_px.is_nan() || self.min_axis_px < 2.0 {
            return bad(format!("min_axis_px {} is below 2", self.min_axis_px));
        }
        if !(self.blur_radius >= 0.0 && (0.0..=0.5).contains(&self.noise_amp)) {
            return bad("blur must be >= 0 and noise in [0, 0.5]".into());
        }
        Ok(())
    }
}

/// Generated set plus the quarter-turned copy of every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub samples: Vec<Sample>,
    /// `rotated[i]` is `samples[i]` turned clockwise, id suffixed `_rot`.
    pub rotated: Vec<Sample>,
}

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
}

impl Ellipse {
    fn half_extents(&self) -> (f64, f64) {
        let (a2, b2) = (self.a * self.a, self.b * self.b);
        let (c2, s2) = (self.cos * self.cos, self.sin * self.sin);
        ((a2 * c2 + b2 * s2).sqrt(), (a2 * s2 + b2 * c2).sqrt())
    }

    /// Normalised radius: 1 on the boundary.
    fn radius(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = dx * self.cos + dy * self.sin;
        let v = -dx * self.sin + dy * self.cos;
        ((u / self.a).powi(2) + (v / self.b).powi(2)).sqrt()
    }
}

struct Painter<'a> {
    cfg: &'a SynthConfig,
    prng: Prng,
    size: f64,
}

impl Painter<'_> {
    /// Axes for an ellipse of `area` square pixels whose major axis fits in
    /// `max_major`.
    fn axes(&mut self, area: f64, max_major: f64) -> (f64, f64) {
        let (rlo, rhi) = self.cfg.aspect_range;
        let fit = area / (PI * max_major * max_major);
        let r = self.prng.uniform(rlo.max(fit).min(rhi), rhi);
        let a = (area / (PI * r)).sqrt().max(self.cfg.min_axis_px);
        let b = (r * a).max(self.cfg.min_axis_px);
        (a.max(b), b)
    }

    fn place(&mut self, a: f64, b: f64) -> Ellipse {
        let theta = self.prng.uniform(0.0, PI);
        let mut e = Ellipse {
            cx: 0.0,
            cy: 0.0,
            a,
            b,
            cos: theta.cos(),
            sin: theta.sin(),
        };
        let (ex, ey) = e.half_extents();
        let mut centre = |ext: f64| {
            if 2.0 * ext >= self.size {
                self.size / 2.0
            } else {
                self.prng.uniform(ext, self.size - ext)
            }
        };
        e.cx = centre(ex);
        e.cy = centre(ey);
        e
    }

    fn ellipses(&mut self, fraction: f64) -> Vec<Ellipse> {
        let (klo, khi) = self.cfg.ellipses;
        let k = klo + self.prng.below((khi - klo + 1) as u64) as usize;
        let total = fraction * self.size * self.size;
        let floor_area = PI * self.cfg.min_axis_px * self.cfg.min_axis_px;
        let share = self.prng.uniform(0.1, 0.25);
        let mut satellites = Vec::new();
        if k > 1 {
            let each = total * share / (k - 1) as f64;
            if each >= floor_area {
                satellites = vec![each; k - 1];
            }
        }
        let primary_area = total - satellites.iter().sum::<f64>();
        let (a, b) = self.axes(primary_area, 0.48 * self.size);
        let mut placed = vec![self.place(a, b)];
        for area in satellites {
            let (a, b) = self.axes(area, 0.48 * self.size);
            for _ in 0..30 {
                let e = self.place(a, b);
                let clear = placed.iter().all(|p| {
                    let d = ((p.cx - e.cx).powi(2) + (p.cy - e.cy).powi(2)).sqrt();
                    d > p.a + e.a + 1.0
                });
                if clear {
                    placed.push(e);
                    break;
                }
            }
        }
        placed
    }

    fn render(&mut self, fraction: f64, id: String) -> Sample {
        let n = self.cfg.size;
        let ellipses = self.ellipses(fraction);
        let base = [
            self.prng.uniform(0.45, 0.65),
            self.prng.uniform(0.2, 0.35),
            self.prng.uniform(0.15, 0.3),
        ];
        let tilt = self.prng.uniform(0.0, 2.0 * PI);
        let (gx, gy) = (tilt.cos(), tilt.sin());
        let shade = self.prng.uniform(0.0, 0.2);
        let lift = self.prng.uniform(0.15, 0.3);
        let ramp = self.cfg.blur_radius;
        let mut image = Tensor4::zeros(Shape::new(1, 3, n, n));
        let mut mask = Tensor4::zeros(Shape::new(1, 1, n, n));
        for y in 0..n {
            for x in 0..n {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let mut cover: f64 = 0.0;
                for e in &ellipses {
                    let q = e.radius(px, py);
                    if q <= 1.0 {
                        mask.set(0, 0, y, x, 1.0);
                    }
                    let dist = (q - 1.0) * e.b;
                    let c = if ramp > 0.0 {
                        (0.5 - dist / (2.0 * ramp)).clamp(0.0, 1.0)
                    } else if q <= 1.0 {
                        1.0
                    } else {
                        0.0
                    };
                    cover = cover.max(c);
                }
                let g = shade * ((px / self.size - 0.5) * gx + (py / self.size - 0.5) * gy);
                for (c, &b0) in base.iter().enumerate() {
                    let noise = self.prng.uniform(-self.cfg.noise_amp, self.cfg.noise_amp);
                    let v = (b0 + g + cover * lift + noise).clamp(0.0, 1.0);
                    // stored on the 8-bit grid so files round-trip exactly
                    image.set(0, c, y, x, (v * 255.0).round() / 255.0);
                }
            }
        }
        if mask.sum() == 0.0 {
            let e = ellipses[0];
            let (cx, cy) = (e.cx as usize, e.cy as usize);
            mask.set(0, 0, cy.min(n - 1), cx.min(n - 1), 1.0);
        }
        Sample { image, mask, id }
    }
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut master = Prng::new(cfg.seed);
    let mut strata: Vec<usize> = (0..cfg.count).collect();
    master.shuffle(&mut strata);
    let (lo, hi) = (cfg.area_range.0.ln(), cfg.area_range.1.ln());
    let mut samples = Vec::with_capacity(cfg.count);
    for (i, &stratum) in strata.iter().enumerate() {
        let mut painter = Painter {
            cfg,
            prng: Prng::new(master.next_u64()),
            size: cfg.size as f64,
        };
        let u = painter.prng.next_f64();
        let fraction = (lo + (stratum as f64 + u) / cfg.count as f64 * (hi - lo)).exp();
        samples.push(painter.render(fraction, format!("synth_{i:04}")));
    }
    let rotated = samples.iter().map(|s| s.rot90(format!("{}_rot", s.id))).collect();
    Ok(SynthDataset { samples, rotated })
}
