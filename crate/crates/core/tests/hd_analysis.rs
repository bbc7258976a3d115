use sca_core::aes::sr_forward;
use sca_core::hd::HD_CLASSES;
use sca_core::{
    encrypt_block, expand_key, fit_hd_line, group_by_hd, simulate_campaign, wrong_horse_scan,
    Augmentation, Block, Error, LeakageConfig, TraceSet, Trigger,
};

fn key() -> Block {
    Block::from_hex("2b7e151628aed2a6abf7158809cf4f3c").unwrap()
}

fn correct_guess(byte: usize) -> u8 {
    expand_key(&key()).last_round_key()[sr_forward(byte)]
}

#[test]
fn identical_ciphertexts_fill_one_class() {
    let pt = Block([9; 16]);
    let ct = encrypt_block(&key(), &pt);
    let ts = TraceSet::new(vec![1.0, 2.0, 3.0], 1, vec![pt; 3], vec![ct; 3]).unwrap();
    let s = group_by_hd(&ts, 0x42, 0, 0).unwrap();
    assert_eq!(s.present().count(), 1);
    assert_eq!(s.total(), 3);
    let (_, class) = s.present().next().unwrap();
    assert_eq!(class.mean, 2.0);
    assert!(matches!(fit_hd_line(&s), Err(Error::InsufficientData(_))));
}

#[test]
fn class_counts_follow_binomial_shape() {
    let cfg = LeakageConfig::equal_weights(1.0).with_noise(1.0);
    let ts = simulate_campaign(&key(), 20_000, &cfg, 1).unwrap();
    for guess in [0u8, correct_guess(0), 0xee] {
        let s = group_by_hd(&ts, guess, 0, 0).unwrap();
        assert_eq!(s.total(), ts.n_traces());
        let counts: Vec<usize> = s.classes.iter().map(|c| c.count).collect();
        let top = (0..HD_CLASSES).max_by_key(|&h| counts[h]).unwrap();
        assert_eq!(top, 4, "{counts:?}");
    }
}

#[test]
fn group_by_hd_rejects_bad_indices() {
    let ts = simulate_campaign(&key(), 10, &LeakageConfig::equal_weights(1.0), 1).unwrap();
    assert!(group_by_hd(&ts, 0, 16, 0).is_err());
    assert!(group_by_hd(&ts, 0, 0, 1).is_err());
}

#[test]
fn noiseless_equal_weights_class_means_decrease() {
    let ts = simulate_campaign(&key(), 50_000, &LeakageConfig::equal_weights(1.0), 3).unwrap();
    let s = group_by_hd(&ts, correct_guess(0), 0, 0).unwrap();
    let means: Vec<f64> = s.present().map(|(_, c)| c.mean).collect();
    // byte 0 reads one ciphertext byte, so not every class is reachable
    assert!(means.len() >= 6, "{means:?}");
    assert!(means.windows(2).all(|w| w[1] < w[0]), "{means:?}");
    assert!(fit_hd_line(&s).unwrap().slope < 0.0);
}

#[test]
fn noiseless_single_byte_fit_is_exact() {
    let w = 0.75;
    let ts = simulate_campaign(&key(), 5000, &LeakageConfig::single_byte(0, w), 4).unwrap();
    let fit = fit_hd_line(&group_by_hd(&ts, correct_guess(0), 0, 0).unwrap()).unwrap();
    assert!((fit.slope + w).abs() < 1e-9, "{fit:?}");
    assert!((fit.r + 1.0).abs() < 1e-12);
    assert!(fit.intercept.abs() < 1e-9);
}

#[test]
fn unaugmented_noiseless_scan_finds_no_wrong_horse() {
    let ts = simulate_campaign(&key(), 5000, &LeakageConfig::single_byte(0, 1.0), 5).unwrap();
    assert!(wrong_horse_scan(&ts, 0, correct_guess(0), 0)
        .unwrap()
        .is_empty());
}

#[test]
fn offset_cancelling_the_byte_trend_creates_wrong_horses() {
    // with the bit-2 offset at 8 bit-weights the correct-key class means are
    // flat in expectation, so structured wrong guesses win the line fit
    let aug = Augmentation::new(0, 2, 8.0, Trigger::OnStatic).unwrap();
    let cfg = LeakageConfig::single_byte(0, 1.0).with_augmentation(Some(aug));
    let ts = simulate_campaign(&key(), 20_000, &cfg, 6).unwrap();
    let horses = wrong_horse_scan(&ts, 0, correct_guess(0), 0).unwrap();
    assert!(!horses.is_empty());
    assert!(horses.iter().all(|h| h.guess != correct_guess(0)));
    assert!(horses.windows(2).all(|w| w[0].r.abs() >= w[1].r.abs()));
}

#[test]
fn augmented_class_means_follow_the_static_bit_share() {
    // E[mean | hd = h] = -w*h - o*(1 - h/8): slope (o - 8w)/8
    let (w, o) = (1.0, 16.0);
    let aug = Augmentation::new(0, 2, o, Trigger::OnStatic).unwrap();
    let cfg = LeakageConfig::single_byte(0, w).with_augmentation(Some(aug));
    let ts = simulate_campaign(&key(), 200_000, &cfg, 7).unwrap();
    let fit = fit_hd_line(&group_by_hd(&ts, correct_guess(0), 0, 0).unwrap()).unwrap();
    assert!((fit.slope - (o - 8.0 * w) / 8.0).abs() < 0.1, "{fit:?}");
    assert!((fit.intercept + o).abs() < 0.5, "{fit:?}");
}
