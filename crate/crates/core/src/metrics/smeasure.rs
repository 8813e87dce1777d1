use super::PredPair;

const EPS: f64 = f64::EPSILON;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation; 0 for fewer than two values.
fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn object_score(values: &[f64]) -> f64 {
    let x = mean(values);
    2.0 * x / (x * x + 1.0 + std_dev(values) + EPS)
}

fn s_object(pair: &PredPair) -> f64 {
    let (mut fg, mut bg) = (Vec::new(), Vec::new());
    for (&p, &g) in pair.pred().iter().zip(pair.gt()) {
        if g {
            fg.push(p);
        } else {
            bg.push(1.0 - p);
        }
    }
    let u = fg.len() as f64 / pair.len() as f64;
    u * object_score(&fg) + (1.0 - u) * object_score(&bg)
}

/// Structural similarity of one quadrant. An empty quadrant scores 0; its
/// weight is 0 as well.
fn ssim(pred: &[f64], gt: &[f64]) -> f64 {
    let n = pred.len();
    if n == 0 {
        return 0.0;
    }
    let (x, y) = (mean(pred), mean(gt));
    let denom = n as f64 - 1.0 + EPS;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxy = 0.0;
    for (&p, &g) in pred.iter().zip(gt) {
        sx += (p - x) * (p - x);
        sy += (g - y) * (g - y);
        sxy += (p - x) * (g - y);
    }
    let (sx, sy, sxy) = (sx / denom, sy / denom, sxy / denom);
    let alpha = 4.0 * x * y * sxy;
    let beta = (x * x + y * y) * (sx + sy);
    if alpha != 0.0 {
        alpha / (beta + EPS)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

fn s_region(pair: &PredPair) -> f64 {
    let (h, w) = (pair.height(), pair.width());
    let gt = pair.gt();
    let total = pair.gt_count() as f64;
    // 1-based centroid, rounded half away from zero
    let (mut sx, mut sy) = (0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            if gt[y * w + x] {
                sx += (x + 1) as f64;
                sy += (y + 1) as f64;
            }
        }
    }
    let cx = (sx / total).round() as usize;
    let cy = (sy / total).round() as usize;
    let area = (h * w) as f64;
    let quads = [(0..cy, 0..cx), (0..cy, cx..w), (cy..h, 0..cx), (cy..h, cx..w)];
    let weights = [
        (cx * cy) as f64 / area,
        ((w - cx) * cy) as f64 / area,
        (cx * (h - cy)) as f64 / area,
    ];
    let w4 = 1.0 - weights[0] - weights[1] - weights[2];
    let mut score = 0.0;
    for (q, (rows, cols)) in quads.into_iter().enumerate() {
        let mut p = Vec::new();
        let mut g = Vec::new();
        for y in rows {
            for x in cols.clone() {
                p.push(pair.pred()[y * w + x]);
                g.push(gt[y * w + x] as u8 as f64);
            }
        }
        let wq = if q < 3 { weights[q] } else { w4 };
        score += wq * ssim(&p, &g);
    }
    score
}

/// Structure measure with equal object and region weighting.
pub fn s_measure(pair: &PredPair) -> f64 {
    let y = pair.gt_count() as f64 / pair.len() as f64;
    let m = pair.pred().iter().sum::<f64>() / pair.len() as f64;
    let q = if y == 0.0 {
        1.0 - m
    } else if y == 1.0 {
        m
    } else {
        0.5 * s_object(pair) + 0.5 * s_region(pair)
    };
    q.clamp(0.0, 1.0)
}
