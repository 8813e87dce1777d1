use super::overlap::sweep_counts;
use super::PredPair;

const EPS: f64 = f64::EPSILON;

fn enhanced(fm: f64, gt: f64, mu_fm: f64, mu_gt: f64) -> f64 {
    let (a, b) = (fm - mu_fm, gt - mu_gt);
    let phi = 2.0 * a * b / (a * a + b * b + EPS);
    (phi + 1.0) * (phi + 1.0) / 4.0
}

/// Score of one binarisation given `|P|`, `|G|` and `|P ∩ G|`. The aligned
/// map takes one of four values, so the mean is a weighted sum of four terms.
pub(crate) fn e_score(n: usize, p: usize, g: usize, inter: usize) -> f64 {
    let nf = n as f64;
    if g == 0 {
        return (n - p) as f64 / nf;
    }
    if g == n {
        return p as f64 / nf;
    }
    let (mu_p, mu_g) = (p as f64 / nf, g as f64 / nf);
    let tp = inter;
    let fp = p - inter;
    let fn_ = g - inter;
    let tn = n - p - fn_;
    let sum = tp as f64 * enhanced(1.0, 1.0, mu_p, mu_g)
        + fp as f64 * enhanced(1.0, 0.0, mu_p, mu_g)
        + fn_ as f64 * enhanced(0.0, 1.0, mu_p, mu_g)
        + tn as f64 * enhanced(0.0, 0.0, mu_p, mu_g);
    sum / nf
}

/// Enhanced-alignment measure maximised over the 256 thresholds `t / 255`.
pub fn e_measure_max(pair: &PredPair) -> f64 {
    let g = pair.gt_count();
    sweep_counts(pair)
        .iter()
        .map(|&(p, i)| e_score(pair.len(), p, g, i))
        .fold(0.0, f64::max)
        .clamp(0.0, 1.0)
}
