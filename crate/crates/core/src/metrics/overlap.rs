use super::PredPair;

/// For each pixel, the largest `t` in 0..=255 with `pred >= t / 255`.
pub fn threshold_levels(pred: &[f64]) -> Vec<u8> {
    pred.iter()
        .map(|&p| {
            let mut k = (p * 255.0).floor().clamp(0.0, 255.0) as usize;
            while k < 255 && p >= (k + 1) as f64 / 255.0 {
                k += 1;
            }
            while k > 0 && p < k as f64 / 255.0 {
                k -= 1;
            }
            k as u8
        })
        .collect()
}

/// `(|P|, |P ∩ G|)` for every threshold index 0..=255.
pub(crate) fn sweep_counts(pair: &PredPair) -> [(usize, usize); 256] {
    let mut hist_all = [0usize; 256];
    let mut hist_fg = [0usize; 256];
    for (k, &g) in threshold_levels(pair.pred()).into_iter().zip(pair.gt()) {
        hist_all[k as usize] += 1;
        hist_fg[k as usize] += g as usize;
    }
    let mut out = [(0, 0); 256];
    let (mut p, mut i) = (0, 0);
    for t in (0..256).rev() {
        p += hist_all[t];
        i += hist_fg[t];
        out[t] = (p, i);
    }
    out
}

pub(crate) fn dice_from(p: usize, g: usize, inter: usize) -> f64 {
    if p + g == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (p + g) as f64
    }
}

pub(crate) fn iou_from(p: usize, g: usize, inter: usize) -> f64 {
    let union = p + g - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Mean of a sweep, anchored at the first value so a constant sweep returns
/// that value exactly.
fn sweep_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut first = None;
    let mut acc = 0.0;
    let mut n = 0usize;
    for v in values {
        let f = *first.get_or_insert(v);
        acc += v - f;
        n += 1;
    }
    first.map_or(0.0, |f| f + acc / n as f64)
}

/// Mean Dice and IoU over the thresholds `t / 255`, `t = 1..=255`.
pub fn dice_iou(pair: &PredPair) -> (f64, f64) {
    let counts = sweep_counts(pair);
    let g = pair.gt_count();
    let dice = sweep_mean(counts[1..].iter().map(|&(p, i)| dice_from(p, g, i)));
    let iou = sweep_mean(counts[1..].iter().map(|&(p, i)| iou_from(p, g, i)));
    (dice, iou)
}

/// Dice and IoU of the single binarisation `pred >= threshold`.
pub fn dice_at(pair: &PredPair, threshold: f64) -> (f64, f64) {
    let (mut p, mut inter) = (0, 0);
    for (&v, &g) in pair.pred().iter().zip(pair.gt()) {
        if v >= threshold {
            p += 1;
            inter += g as usize;
        }
    }
    let g = pair.gt_count();
    (dice_from(p, g, inter), iou_from(p, g, inter))
}

pub fn mae(pair: &PredPair) -> f64 {
    let s: f64 = pair
        .pred()
        .iter()
        .zip(pair.gt())
        .map(|(&p, &g)| (p - g as u8 as f64).abs())
        .sum();
    s / pair.len() as f64
}
