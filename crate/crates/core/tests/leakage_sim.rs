use sca_core::aes::{last_round_states, sbox};
use sca_core::{
    encrypt_block, expand_key, pearson, simulate_campaign, Augmentation, Block, LeakageConfig,
    Trigger,
};

fn key() -> Block {
    Block::from_hex("000102030405060708090a0b0c0d0e0f").unwrap()
}

fn total_hd(key: &Block, pt: &Block) -> f64 {
    let st = last_round_states(key, pt);
    st.toggles().0.iter().map(|b| b.count_ones()).sum::<u32>() as f64
}

/// Expected register HD for uniform plaintexts, by enumeration. Bytes in
/// rows 1..3 move under ShiftRows, so their toggle is uniform (4 bits on
/// average). Row-0 bytes stay put and toggle by s ^ S(s) ^ k10[j].
fn expected_total_hd(key: &Block) -> f64 {
    let k10 = expand_key(key).last_round_key();
    let row0: f64 = [0, 4, 8, 12]
        .iter()
        .map(|&j| {
            (0..=255u8)
                .map(|s| (s ^ sbox(s) ^ k10[j]).count_ones() as f64)
                .sum::<f64>()
                / 256.0
        })
        .sum();
    12.0 * 4.0 + row0
}

#[test]
fn mean_leakage_matches_expected_total_hd() {
    let (w, baseline, n) = (0.25, 3.0, 100_000);
    let cfg = LeakageConfig::equal_weights(w)
        .with_baseline(baseline)
        .with_noise(1.0);
    let ts = simulate_campaign(&key(), n, &cfg, 2024).unwrap();
    let ys: Vec<f64> = ts.samples().iter().map(|&v| f64::from(v)).collect();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let hd = expected_total_hd(&key());
    assert!((hd - 64.109375).abs() < 1e-12);
    let expected = baseline - hd * w;
    assert!(
        (mean - expected).abs() < 3.0 * se,
        "{mean} vs {expected} (se {se})"
    );
}

#[test]
fn noiseless_leakage_is_exactly_affine_in_total_hd() {
    let cfg = LeakageConfig::equal_weights(0.5).with_baseline(1.0);
    let ts = simulate_campaign(&key(), 2000, &cfg, 5).unwrap();
    let hds: Vec<f64> = ts
        .plaintexts()
        .iter()
        .map(|p| total_hd(&key(), p))
        .collect();
    let ys: Vec<f64> = ts.samples().iter().map(|&v| f64::from(v)).collect();
    for (h, y) in hds.iter().zip(&ys) {
        assert_eq!(*y, 1.0 - 0.5 * h);
    }
    assert!((pearson(&hds, &ys).unwrap() + 1.0).abs() < 1e-12);
}

#[test]
fn static_bit_offset_lowers_trace_by_exactly_offset() {
    let offset = 3.5;
    let aug = Augmentation::new(0, 2, offset, Trigger::OnStatic).unwrap();
    let plain = LeakageConfig::equal_weights(1.0);
    let augmented = plain.clone().with_augmentation(Some(aug));
    let a = simulate_campaign(&key(), 4000, &plain, 9).unwrap();
    let b = simulate_campaign(&key(), 4000, &augmented, 9).unwrap();
    assert_eq!(a.plaintexts(), b.plaintexts());
    let mut seen = [0usize; 2];
    for i in 0..a.n_traces() {
        let toggled = (last_round_states(&key(), &a.plaintexts()[i]).toggles()[0] >> 2) & 1;
        seen[toggled as usize] += 1;
        let diff = f64::from(a.trace(i)[0]) - f64::from(b.trace(i)[0]);
        assert_eq!(diff, if toggled == 1 { 0.0 } else { offset });
    }
    assert!(seen[0] > 0 && seen[1] > 0);
}

#[test]
fn simulated_ciphertexts_verify() {
    let cfg = LeakageConfig::equal_weights(1.0).with_noise(0.3);
    let ts = simulate_campaign(&key(), 3000, &cfg, 17).unwrap();
    assert_eq!(ts.true_key(), Some(&key()));
    assert_eq!(ts.seed(), Some(17));
    for (pt, ct) in ts.plaintexts().iter().zip(ts.ciphertexts()) {
        assert_eq!(encrypt_block(&key(), pt), *ct);
    }
}

#[test]
fn campaign_is_independent_of_worker_count() {
    let cfg = LeakageConfig::equal_weights(1.0)
        .with_noise(2.0)
        .with_samples(3, 1);
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let four = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap();
    let a = one.install(|| simulate_campaign(&key(), 5000, &cfg, 3).unwrap());
    let b = four.install(|| simulate_campaign(&key(), 5000, &cfg, 3).unwrap());
    let bits =
        |ts: &sca_core::TraceSet| ts.samples().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a.plaintexts(), b.plaintexts());
}
