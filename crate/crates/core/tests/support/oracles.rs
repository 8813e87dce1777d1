//! Brute-force and transcription oracles for the evaluation measures,
//! shared by the metric tests and the acceptance run.

use odcsa::rng::Prng;

pub fn random_mask(p: &mut Prng, h: usize, w: usize, density: f64) -> Vec<bool> {
    loop {
        let m: Vec<bool> = (0..h * w).map(|_| p.next_f64() < density).collect();
        if m.iter().any(|&v| v) && m.iter().any(|&v| !v) {
            return m;
        }
    }
}

/// Blob-shaped mask so the structural measures see realistic regions.
pub fn blob_mask(p: &mut Prng, h: usize, w: usize) -> Vec<bool> {
    loop {
        let (cy, cx) = (p.uniform(0.0, h as f64), p.uniform(0.0, w as f64));
        let (ry, rx) = (p.uniform(1.0, h as f64 / 2.0), p.uniform(1.0, w as f64 / 2.0));
        let m: Vec<bool> = (0..h * w)
            .map(|i| {
                let (y, x) = ((i / w) as f64, (i % w) as f64);
                ((y - cy) / ry).powi(2) + ((x - cx) / rx).powi(2) <= 1.0
            })
            .collect();
        if m.iter().any(|&v| v) && m.iter().any(|&v| !v) {
            return m;
        }
    }
}

pub fn noisy_pred(p: &mut Prng, gt: &[bool]) -> Vec<f64> {
    gt.iter()
        .map(|&g| {
            let v = if g { p.uniform(0.3, 1.0) } else { p.uniform(0.0, 0.7) };
            // a share of values sit exactly on the threshold grid
            if p.next_f64() < 0.2 {
                (v * 255.0).round() / 255.0
            } else {
                v
            }
        })
        .collect()
}

pub fn binary(m: &[bool]) -> Vec<f64> {
    m.iter().map(|&b| b as u8 as f64).collect()
}

// ---------- independent oracles ----------

pub fn oracle_dice_iou(pred: &[f64], gt: &[bool]) -> (f64, f64) {
    let (mut ds, mut is) = (0.0, 0.0);
    for t in 1..=255 {
        let th = t as f64 / 255.0;
        let pset: Vec<bool> = pred.iter().map(|&v| v >= th).collect();
        let inter = pset.iter().zip(gt).filter(|(a, b)| **a && **b).count();
        let np = pset.iter().filter(|&&a| a).count();
        let ng = gt.iter().filter(|&&a| a).count();
        let union = pset.iter().zip(gt).filter(|(a, b)| **a || **b).count();
        ds += if np + ng == 0 {
            1.0
        } else {
            2.0 * inter as f64 / (np + ng) as f64
        };
        is += if union == 0 { 1.0 } else { inter as f64 / union as f64 };
    }
    (ds / 255.0, is / 255.0)
}

/// Nearest site by exhaustive search; ties to the smallest column, then row.
pub fn oracle_nearest(gt: &[bool], h: usize, w: usize, i: usize) -> (f64, usize) {
    let (y, x) = ((i / w) as i64, (i % w) as i64);
    let mut best = (i64::MAX, usize::MAX);
    for sx in 0..w {
        for sy in 0..h {
            let j = sy * w + sx;
            if gt[j] {
                let d = (sy as i64 - y).pow(2) + (sx as i64 - x).pow(2);
                if d < best.0 {
                    best = (d, j);
                }
            }
        }
    }
    ((best.0 as f64).sqrt(), best.1)
}

pub fn oracle_fbw(pred: &[f64], gt: &[bool], h: usize, w: usize) -> f64 {
    let e: Vec<f64> = (0..h * w).map(|i| (pred[i] - gt[i] as u8 as f64).abs()).collect();
    let mut et = e.clone();
    let mut dist = vec![0.0; h * w];
    for i in 0..h * w {
        if !gt[i] {
            let (d, j) = oracle_nearest(gt, h, w, i);
            et[i] = e[j];
            dist[i] = d;
        }
    }
    let mut k = [[0.0f64; 7]; 7];
    let mut ks = 0.0;
    for (a, row) in k.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            let (dy, dx) = (a as f64 - 3.0, b as f64 - 3.0);
            *v = (-(dy * dy + dx * dx) / 50.0).exp();
            ks += *v;
        }
    }
    let mut ea = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (a, row) in k.iter().enumerate() {
                for (b, kv) in row.iter().enumerate() {
                    let (yy, xx) = (y as i64 + a as i64 - 3, x as i64 + b as i64 - 3);
                    if yy >= 0 && yy < h as i64 && xx >= 0 && xx < w as i64 {
                        acc += kv / ks * et[yy as usize * w + xx as usize];
                    }
                }
            }
            ea[y * w + x] = acc;
        }
    }
    let mut ew = vec![0.0; h * w];
    for i in 0..h * w {
        ew[i] = if gt[i] {
            e[i].min(ea[i])
        } else {
            e[i] * (2.0 - (0.5f64.ln() / 5.0 * dist[i]).exp())
        };
    }
    let ng = gt.iter().filter(|&&g| g).count() as f64;
    let ew_in: f64 = (0..h * w).filter(|&i| gt[i]).map(|i| ew[i]).sum();
    let ew_out: f64 = (0..h * w).filter(|&i| !gt[i]).map(|i| ew[i]).sum();
    let tpw = ng - ew_in;
    let r = 1.0 - ew_in / ng;
    let p = tpw / (f64::EPSILON + tpw + ew_out);
    2.0 * r * p / (f64::EPSILON + r + p)
}

pub fn oracle_s(pred: &[f64], gt: &[bool], h: usize, w: usize) -> f64 {
    let eps = f64::EPSILON;
    let g: Vec<f64> = binary(gt);
    let y = g.iter().sum::<f64>() / g.len() as f64;
    if y == 0.0 {
        return 1.0 - pred.iter().sum::<f64>() / pred.len() as f64;
    }
    if y == 1.0 {
        return pred.iter().sum::<f64>() / pred.len() as f64;
    }
    let object = |vals: Vec<f64>| {
        let n = vals.len() as f64;
        let m = vals.iter().sum::<f64>() / n;
        let sd = if vals.len() > 1 {
            (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        2.0 * m / (m * m + 1.0 + sd + eps)
    };
    let fg: Vec<f64> = (0..h * w).filter(|&i| gt[i]).map(|i| pred[i]).collect();
    let bg: Vec<f64> = (0..h * w).filter(|&i| !gt[i]).map(|i| 1.0 - pred[i]).collect();
    let so = y * object(fg) + (1.0 - y) * object(bg);

    let total: f64 = g.iter().sum();
    let mut xs = 0.0;
    let mut ys = 0.0;
    for (i, gv) in g.iter().enumerate() {
        xs += gv * ((i % w) + 1) as f64;
        ys += gv * ((i / w) + 1) as f64;
    }
    let cx = (xs / total).round() as usize;
    let cy = (ys / total).round() as usize;
    let sub = |m: &[f64], r0: usize, r1: usize, c0: usize, c1: usize| -> Vec<f64> {
        let mut out = vec![];
        for r in r0..r1 {
            for c in c0..c1 {
                out.push(m[r * w + c]);
            }
        }
        out
    };
    let ssim = |a: Vec<f64>, b: Vec<f64>| -> f64 {
        if a.is_empty() {
            return 0.0;
        }
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let va = a.iter().map(|v| (v - ma).powi(2)).sum::<f64>() / (n - 1.0 + eps);
        let vb = b.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / (n - 1.0 + eps);
        let cov = a.iter().zip(&b).map(|(u, v)| (u - ma) * (v - mb)).sum::<f64>() / (n - 1.0 + eps);
        let al = 4.0 * ma * mb * cov;
        let be = (ma * ma + mb * mb) * (va + vb);
        if al != 0.0 {
            al / (be + eps)
        } else if be == 0.0 {
            1.0
        } else {
            0.0
        }
    };
    let area = (h * w) as f64;
    let w1 = (cx * cy) as f64 / area;
    let w2 = ((w - cx) * cy) as f64 / area;
    let w3 = (cx * (h - cy)) as f64 / area;
    let w4 = 1.0 - w1 - w2 - w3;
    let sr = w1 * ssim(sub(pred, 0, cy, 0, cx), sub(&g, 0, cy, 0, cx))
        + w2 * ssim(sub(pred, 0, cy, cx, w), sub(&g, 0, cy, cx, w))
        + w3 * ssim(sub(pred, cy, h, 0, cx), sub(&g, cy, h, 0, cx))
        + w4 * ssim(sub(pred, cy, h, cx, w), sub(&g, cy, h, cx, w));
    (0.5 * so + 0.5 * sr).max(0.0)
}

pub fn oracle_e(pred: &[f64], gt: &[bool]) -> f64 {
    let n = pred.len() as f64;
    let g = binary(gt);
    let mut best: f64 = 0.0;
    for t in 0..=255 {
        let fm: Vec<f64> = pred.iter().map(|&v| (v >= t as f64 / 255.0) as u8 as f64).collect();
        let score = if g.iter().all(|&v| v == 0.0) {
            fm.iter().map(|v| 1.0 - v).sum::<f64>() / n
        } else if g.iter().all(|&v| v == 1.0) {
            fm.iter().sum::<f64>() / n
        } else {
            let mf = fm.iter().sum::<f64>() / n;
            let mg = g.iter().sum::<f64>() / n;
            fm.iter()
                .zip(&g)
                .map(|(a, b)| {
                    let (a, b) = (a - mf, b - mg);
                    let phi = 2.0 * a * b / (a * a + b * b + f64::EPSILON);
                    (phi + 1.0).powi(2) / 4.0
                })
                .sum::<f64>()
                / n
        };
        best = best.max(score);
    }
    best
}
