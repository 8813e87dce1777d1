use odcsa::metrics::{
    dice_iou, distance_transform, e_measure_max, evaluate_dataset, mae, s_measure, weighted_fbeta, FbetaConfig,
    PairMetrics, PredPair,
};
use odcsa::rng::Prng;

#[path = "support/oracles.rs"]
mod oracles;
use oracles::*;

#[test]
fn dice_iou_equal_set_arithmetic_on_binary_pairs() {
    let mut p = Prng::new(11);
    for _ in 0..50 {
        let gt = random_mask(&mut p, 16, 16, 0.4);
        let pm = random_mask(&mut p, 16, 16, 0.4);
        let pair = PredPair::new(16, 16, binary(&pm), gt.clone()).unwrap();
        let inter = pm.iter().zip(&gt).filter(|(a, b)| **a && **b).count() as f64;
        let np = pm.iter().filter(|&&a| a).count() as f64;
        let ng = gt.iter().filter(|&&a| a).count() as f64;
        let dice = 2.0 * inter / (np + ng);
        let iou = inter / (np + ng - inter);
        assert_eq!(dice_iou(&pair), (dice, iou));
    }
}

#[test]
fn dice_iou_sweep_matches_threshold_loop() {
    let mut p = Prng::new(12);
    for _ in 0..20 {
        let gt = blob_mask(&mut p, 16, 16);
        let pred = noisy_pred(&mut p, &gt);
        let (d, i) = dice_iou(&PredPair::new(16, 16, pred.clone(), gt.clone()).unwrap());
        let (od, oi) = oracle_dice_iou(&pred, &gt);
        assert!((d - od).abs() < 1e-12 && (i - oi).abs() < 1e-12);
    }
}

#[test]
fn distance_transform_matches_pairwise_search() {
    let mut p = Prng::new(13);
    for trial in 0..50 {
        let density = [0.02, 0.1, 0.3, 0.7][trial % 4];
        let gt = random_mask(&mut p, 16, 16, density);
        let f = distance_transform(&gt, 16, 16).unwrap();
        for i in 0..256 {
            let (d, j) = oracle_nearest(&gt, 16, 16, i);
            assert!((f.dist(i) - d).abs() < 1e-9, "trial {trial} pixel {i}");
            assert_eq!(f.nearest[i], j, "trial {trial} pixel {i}");
        }
    }
    // non-square as well
    let gt = random_mask(&mut p, 9, 23, 0.05);
    let f = distance_transform(&gt, 9, 23).unwrap();
    for i in 0..9 * 23 {
        let (d, j) = oracle_nearest(&gt, 9, 23, i);
        assert_eq!((f.dist(i), f.nearest[i]), (d, j));
    }
}

#[test]
fn structural_measures_match_transcriptions() {
    let mut p = Prng::new(14);
    for (trial, size) in [8usize, 16].into_iter().cycle().take(30).enumerate() {
        let gt = if trial % 3 == 0 {
            random_mask(&mut p, size, size, 0.3)
        } else {
            blob_mask(&mut p, size, size)
        };
        let pred = noisy_pred(&mut p, &gt);
        let pair = PredPair::new(size, size, pred.clone(), gt.clone()).unwrap();
        let fb = weighted_fbeta(&pair, &FbetaConfig::default());
        assert!(!fb.empty_gt);
        assert!(
            (fb.value - oracle_fbw(&pred, &gt, size, size)).abs() < 1e-9,
            "fbw trial {trial}"
        );
        assert!(
            (s_measure(&pair) - oracle_s(&pred, &gt, size, size)).abs() < 1e-9,
            "s trial {trial}"
        );
        assert!(
            (e_measure_max(&pair) - oracle_e(&pred, &gt)).abs() < 1e-9,
            "e trial {trial}"
        );
    }
}

#[test]
fn perfect_predictions_score_one() {
    let mut p = Prng::new(15);
    for size in [8, 16, 64] {
        for _ in 0..5 {
            let gt = if size == 64 {
                blob_mask(&mut p, size, size)
            } else {
                random_mask(&mut p, size, size, 0.2)
            };
            let pair = PredPair::new(size, size, binary(&gt), gt).unwrap();
            let m = PairMetrics::compute(&pair, &FbetaConfig::default());
            assert_eq!((m.dice, m.iou), (1.0, 1.0));
            assert!((m.fbw - 1.0).abs() < 1e-6, "{m:?}");
            assert!((m.s_alpha - 1.0).abs() < 1e-6, "{m:?}");
            assert!((m.e_phi_max - 1.0).abs() < 1e-6, "{m:?}");
            assert_eq!(m.mae, 0.0);
        }
    }
    // a single foreground pixel is the hardest imbalance
    let mut gt = vec![false; 256];
    gt[37] = true;
    let m = PairMetrics::compute(
        &PredPair::new(16, 16, binary(&gt), gt).unwrap(),
        &FbetaConfig::default(),
    );
    assert!((m.e_phi_max - 1.0).abs() < 1e-6 && (m.s_alpha - 1.0).abs() < 1e-6 && (m.fbw - 1.0).abs() < 1e-6);
}

#[test]
fn degenerate_and_adversarial_cases() {
    let empty = PredPair::new(4, 4, vec![0.0; 16], vec![false; 16]).unwrap();
    assert_eq!(s_measure(&empty), 1.0);
    assert_eq!(e_measure_max(&empty), 1.0);
    assert!(weighted_fbeta(&empty, &FbetaConfig::default()).empty_gt);

    // interior foreground, all-zero prediction
    let gt: Vec<bool> = (0..256)
        .map(|i| (4..12).contains(&(i / 16)) && (4..12).contains(&(i % 16)))
        .collect();
    let zero = PredPair::new(16, 16, vec![0.0; 256], gt.clone()).unwrap();
    assert!(weighted_fbeta(&zero, &FbetaConfig::default()).value < 1e-6);
    assert_eq!(dice_iou(&zero), (0.0, 0.0));

    let inverse = PredPair::new(16, 16, gt.iter().map(|&g| (!g) as u8 as f64).collect(), gt).unwrap();
    assert!(e_measure_max(&inverse) <= 0.25 + 1e-12);
}

#[test]
fn all_measures_in_unit_range_and_mae_is_symmetric() {
    let mut p = Prng::new(16);
    for _ in 0..30 {
        let density = p.uniform(0.05, 0.9);
        let gt = random_mask(&mut p, 12, 12, density);
        let pred: Vec<f64> = (0..144).map(|_| p.next_f64()).collect();
        let pair = PredPair::new(12, 12, pred.clone(), gt.clone()).unwrap();
        let m = PairMetrics::compute(&pair, &FbetaConfig::default());
        for v in [m.dice, m.iou, m.fbw, m.s_alpha, m.e_phi_max, m.mae] {
            assert!((0.0..=1.0).contains(&v), "{m:?}");
        }
        let direct: f64 = pred
            .iter()
            .zip(&gt)
            .map(|(a, &b)| (a - b as u8 as f64).abs())
            .sum::<f64>()
            / 144.0;
        assert!((m.mae - direct).abs() < 1e-12);
        let flipped = PredPair::new(
            12,
            12,
            pred.iter().map(|v| 1.0 - v).collect(),
            gt.iter().map(|g| !g).collect(),
        )
        .unwrap();
        assert!((mae(&flipped) - m.mae).abs() < 1e-12);
    }
}

#[test]
fn flipping_pixels_never_raises_dice() {
    let mut p = Prng::new(17);
    for _ in 0..100 {
        let gt = blob_mask(&mut p, 16, 16);
        let mut pred = binary(&gt);
        let mut prev = 1.0;
        for _ in 0..5 {
            // corrupt only pixels that are still correct, so errors accumulate
            let k = 1 + p.below(10) as usize;
            for _ in 0..k {
                let correct: Vec<usize> = (0..256).filter(|&i| (pred[i] == 1.0) == gt[i]).collect();
                let i = correct[p.below(correct.len() as u64) as usize];
                pred[i] = 1.0 - pred[i];
            }
            let (d, _) = dice_iou(&PredPair::new(16, 16, pred.clone(), gt.clone()).unwrap());
            assert!(d < 1.0 && d <= prev, "{d} after {prev}");
            prev = d;
        }
    }
}

#[test]
fn dataset_report_is_an_arithmetic_mean() {
    let mut p = Prng::new(18);
    let gt = blob_mask(&mut p, 16, 16);
    let perfect = PredPair::new(16, 16, binary(&gt), gt.clone()).unwrap();
    let r = evaluate_dataset(&[perfect.clone(), perfect.clone()]).unwrap();
    assert_eq!((r.mdice, r.miou, r.mae, r.n_images), (1.0, 1.0, 0.0, 2));
    assert!(r.csv_row("x").starts_with("x,1.000000,1.000000,"));

    let noisy = PredPair::new(16, 16, noisy_pred(&mut p, &gt), gt.clone()).unwrap();
    let single = evaluate_dataset(std::slice::from_ref(&noisy)).unwrap();
    let m = PairMetrics::compute(&noisy, &FbetaConfig::default());
    assert_eq!(
        (
            single.mdice,
            single.miou,
            single.fbw,
            single.s_alpha,
            single.e_phi_max,
            single.mae
        ),
        (m.dice, m.iou, m.fbw, m.s_alpha, m.e_phi_max, m.mae)
    );

    let wrong = PredPair::new(16, 16, vec![0.0; 256], gt).unwrap();
    assert_eq!(evaluate_dataset(&[perfect, wrong]).unwrap().mdice, 0.5);
}
