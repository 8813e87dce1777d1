use super::edt::distance_transform;
use super::PredPair;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FbetaConfig {
    pub kernel: usize,
    pub sigma: f64,
    /// Distance at which the outside-mask error weight reaches 1.5.
    pub decay: f64,
    pub beta: f64,
}

impl Default for FbetaConfig {
    fn default() -> Self {
        Self {
            kernel: 7,
            sigma: 5.0,
            decay: 5.0,
            beta: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FbetaScore {
    pub value: f64,
    /// Set when the mask has no foreground; `value` is then 0.
    pub empty_gt: bool,
}

const EPS: f64 = f64::EPSILON;

/// Normalised `k x k` Gaussian.
fn gaussian(k: usize, sigma: f64) -> Vec<f64> {
    let r = (k as f64 - 1.0) / 2.0;
    let mut g: Vec<f64> = (0..k * k)
        .map(|i| {
            let (y, x) = ((i / k) as f64 - r, (i % k) as f64 - r);
            (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let max = g.iter().copied().fold(0.0, f64::max);
    for v in g.iter_mut() {
        if *v < EPS * max {
            *v = 0.0;
        }
    }
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Same-size correlation with zero padding.
fn filter_same(src: &[f64], h: usize, w: usize, kernel: &[f64], k: usize) -> Vec<f64> {
    let r = (k / 2) as isize;
    let mut out = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for dy in -r..=r {
                let yy = y + dy;
                if yy < 0 || yy >= h as isize {
                    continue;
                }
                for dx in -r..=r {
                    let xx = x + dx;
                    if xx < 0 || xx >= w as isize {
                        continue;
                    }
                    acc += kernel[((dy + r) * k as isize + dx + r) as usize] * src[(yy * w as isize + xx) as usize];
                }
            }
            out[(y * w as isize + x) as usize] = acc;
        }
    }
    out
}

/// Weighted F-measure: errors outside the mask are attributed to the nearest
/// mask pixel, smoothed, and weighted up with distance from the mask.
pub fn weighted_fbeta(pair: &PredPair, cfg: &FbetaConfig) -> FbetaScore {
    let (h, w) = (pair.height(), pair.width());
    let gt = pair.gt();
    let Some(field) = distance_transform(gt, h, w) else {
        return FbetaScore {
            value: 0.0,
            empty_gt: true,
        };
    };
    let e: Vec<f64> = pair
        .pred()
        .iter()
        .zip(gt)
        .map(|(&p, &g)| (g as u8 as f64 - p).abs())
        .collect();
    let et: Vec<f64> = (0..h * w)
        .map(|i| if gt[i] { e[i] } else { e[field.nearest[i]] })
        .collect();
    let ea = filter_same(&et, h, w, &gaussian(cfg.kernel, cfg.sigma), cfg.kernel);
    let rate = 0.5f64.ln() / cfg.decay;

    let (mut sum_gt_err, mut fp, mut n_gt) = (0.0, 0.0, 0usize);
    for i in 0..h * w {
        if gt[i] {
            let m = if ea[i] < e[i] { ea[i] } else { e[i] };
            sum_gt_err += m;
            n_gt += 1;
        } else {
            let b = 2.0 - (rate * field.dist(i)).exp();
            fp += e[i] * b;
        }
    }
    let tp = n_gt as f64 - sum_gt_err;
    let recall = 1.0 - sum_gt_err / n_gt as f64;
    let precision = tp / (EPS + tp + fp);
    let b2 = cfg.beta * cfg.beta;
    let value = (1.0 + b2) * recall * precision / (EPS + recall + b2 * precision);
    FbetaScore {
        value: value.clamp(0.0, 1.0),
        empty_gt: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_normalised_and_symmetric() {
        let g = gaussian(7, 5.0);
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(g[0], g[48]);
        assert!(g[24] > g[0]);
    }
}
