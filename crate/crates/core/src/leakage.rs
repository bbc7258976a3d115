//! Synthetic power traces for the last-round state-register overwrite.
//!
//! The point of interest carries a voltage-drop signal: every toggling
//! register bit pulls the sample down by its weight, so more switching gives
//! a more negative value. An optional [`Augmentation`] adds a constant extra
//! drop on one register bit, either when that bit stays static or when it
//! toggles. All other samples are baseline plus noise.
//!
//! Register bit `8 * byte + bit` indexes `bit_weights`, with bit 0 the least
//! significant bit of the state byte.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aes::{Aes128, Block, LastRoundStates, BLOCK_LEN};
use crate::error::{Error, Result};
use crate::traces::TraceSet;

pub const REGISTER_BITS: usize = 8 * BLOCK_LEN;

/// Traces per independently seeded substream in a campaign. Fixed so that
/// campaign output never depends on the worker count.
pub const CAMPAIGN_CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trigger {
    /// Offset applied while the augmented bit keeps its value.
    #[default]
    OnStatic,
    /// Offset applied while the augmented bit flips.
    OnToggle,
}

impl std::str::FromStr for Trigger {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "on-static" | "static" => Ok(Trigger::OnStatic),
            "on-toggle" | "toggle" => Ok(Trigger::OnToggle),
            other => Err(Error::invalid(format!(
                "unknown trigger {other:?} (expected on-static or on-toggle)"
            ))),
        }
    }
}

/// A fixed, deterministic extra drop on one state-register bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Augmentation {
    pub byte_index: usize,
    pub bit_index: usize,
    pub offset: f64,
    #[serde(default)]
    pub trigger: Trigger,
}

impl Augmentation {
    pub fn new(byte_index: usize, bit_index: usize, offset: f64, trigger: Trigger) -> Result<Self> {
        let aug = Augmentation {
            byte_index,
            bit_index,
            offset,
            trigger,
        };
        aug.validate()?;
        Ok(aug)
    }

    pub fn validate(&self) -> Result<()> {
        if self.byte_index >= BLOCK_LEN {
            return Err(Error::invalid(format!(
                "augmented byte {} out of range 0..16",
                self.byte_index
            )));
        }
        if self.bit_index >= 8 {
            return Err(Error::invalid(format!(
                "augmented bit {} out of range 0..8",
                self.bit_index
            )));
        }
        if !(self.offset.is_finite() && self.offset >= 0.0) {
            return Err(Error::invalid(format!(
                "offset must be finite and non-negative, got {}",
                self.offset
            )));
        }
        Ok(())
    }

    /// Whether the offset fires for this overwrite.
    pub fn fires(&self, toggles: &Block) -> bool {
        let toggled = (toggles.0[self.byte_index] >> self.bit_index) & 1 == 1;
        match self.trigger {
            Trigger::OnStatic => !toggled,
            Trigger::OnToggle => toggled,
        }
    }
}

/// Offset produced by a bank of `n_ro` ring oscillators enabled for
/// `pulse_fraction` of the overwrite window, each contributing `alpha`.
pub fn ro_offset_model(n_ro: u32, pulse_fraction: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&pulse_fraction) {
        return Err(Error::invalid(format!(
            "pulse fraction must lie in [0, 1], got {pulse_fraction}"
        )));
    }
    if !alpha.is_finite() {
        return Err(Error::invalid("alpha must be finite"));
    }
    Ok(alpha * f64::from(n_ro) * pulse_fraction)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeakageConfig {
    pub bit_weights: Vec<f64>,
    pub baseline: f64,
    pub noise_sigma: f64,
    pub augmentation: Option<Augmentation>,
    pub samples_per_trace: usize,
    pub poi_index: usize,
}

impl LeakageConfig {
    /// Every register bit weighs `weight`; single-sample noiseless traces.
    pub fn equal_weights(weight: f64) -> Self {
        LeakageConfig {
            bit_weights: vec![weight; REGISTER_BITS],
            baseline: 0.0,
            noise_sigma: 0.0,
            augmentation: None,
            samples_per_trace: 1,
            poi_index: 0,
        }
    }

    /// Only the eight bits of `byte_index` leak, each with `weight`.
    pub fn single_byte(byte_index: usize, weight: f64) -> Self {
        let mut cfg = Self::equal_weights(0.0);
        cfg.bit_weights[8 * byte_index..8 * byte_index + 8].fill(weight);
        cfg
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn with_baseline(mut self, baseline: f64) -> Self {
        self.baseline = baseline;
        self
    }

    pub fn with_augmentation(mut self, aug: Option<Augmentation>) -> Self {
        self.augmentation = aug;
        self
    }

    pub fn with_samples(mut self, samples_per_trace: usize, poi_index: usize) -> Self {
        self.samples_per_trace = samples_per_trace;
        self.poi_index = poi_index;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.bit_weights.len() != REGISTER_BITS {
            return Err(Error::invalid(format!(
                "need {REGISTER_BITS} bit weights, got {}",
                self.bit_weights.len()
            )));
        }
        if let Some(b) = self
            .bit_weights
            .iter()
            .position(|w| !(w.is_finite() && *w >= 0.0))
        {
            return Err(Error::invalid(format!(
                "bit weight {b} must be finite and non-negative, got {}",
                self.bit_weights[b]
            )));
        }
        if !self.baseline.is_finite() {
            return Err(Error::invalid("baseline must be finite"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::invalid(format!(
                "noise sigma must be finite and non-negative, got {}",
                self.noise_sigma
            )));
        }
        if self.samples_per_trace == 0 {
            return Err(Error::invalid("samples_per_trace must be at least 1"));
        }
        if self.poi_index >= self.samples_per_trace {
            return Err(Error::invalid(format!(
                "poi index {} outside trace of {} samples",
                self.poi_index, self.samples_per_trace
            )));
        }
        if let Some(aug) = &self.augmentation {
            aug.validate()?;
        }
        Ok(())
    }

    /// Noise-free value of the point of interest for one overwrite.
    pub fn poi_level(&self, states: &LastRoundStates) -> f64 {
        let toggles = states.toggles();
        let mut drop = 0.0;
        for (byte, &t) in toggles.0.iter().enumerate() {
            let mut bits = t;
            while bits != 0 {
                let bit = bits.trailing_zeros() as usize;
                drop += self.bit_weights[8 * byte + bit];
                bits &= bits - 1;
            }
        }
        if let Some(aug) = &self.augmentation {
            if aug.fires(&toggles) {
                drop += aug.offset;
            }
        }
        self.baseline - drop
    }
}

fn fill_trace<R: Rng + ?Sized>(
    config: &LeakageConfig,
    states: &LastRoundStates,
    rng: &mut R,
    out: &mut [f32],
) {
    // noise is always drawn so that the random stream (and hence the
    // plaintexts) is the same for every config sharing a seed and trace shape
    let level = config.poi_level(states);
    for (s, slot) in out.iter_mut().enumerate() {
        let z: f64 = rng.sample(StandardNormal);
        let clean = if s == config.poi_index {
            level
        } else {
            config.baseline
        };
        *slot = (clean + config.noise_sigma * z) as f32;
    }
}

/// Encrypts `plaintext` under `key` and returns the simulated trace of the
/// last-round overwrite together with the ciphertext.
pub fn simulate_trace<R: Rng + ?Sized>(
    key: &Block,
    plaintext: &Block,
    config: &LeakageConfig,
    rng: &mut R,
) -> Result<(Vec<f32>, Block)> {
    config.validate()?;
    let states = Aes128::new(key).last_round_states(plaintext);
    let mut trace = vec![0.0f32; config.samples_per_trace];
    fill_trace(config, &states, rng, &mut trace);
    Ok((trace, states.ciphertext))
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

/// `n` traces over uniformly random plaintexts. Output is a pure function of
/// the arguments; chunks of [`CAMPAIGN_CHUNK`] traces run on separate
/// substreams and may be generated in parallel.
pub fn simulate_campaign(
    key: &Block,
    n: usize,
    config: &LeakageConfig,
    seed: u64,
) -> Result<TraceSet> {
    if n == 0 {
        return Err(Error::invalid("campaign needs at least one trace"));
    }
    config.validate()?;
    let cipher = Aes128::new(key);
    let spt = config.samples_per_trace;
    let mut samples = vec![0.0f32; n * spt];
    let mut plaintexts = vec![Block::default(); n];
    let mut ciphertexts = vec![Block::default(); n];

    samples
        .par_chunks_mut(CAMPAIGN_CHUNK * spt)
        .zip(plaintexts.par_chunks_mut(CAMPAIGN_CHUNK))
        .zip(ciphertexts.par_chunks_mut(CAMPAIGN_CHUNK))
        .enumerate()
        .for_each(|(chunk, ((rows, pts), cts))| {
            let mut rng = chunk_rng(seed, chunk);
            for ((row, pt), ct) in rows.chunks_exact_mut(spt).zip(pts).zip(cts) {
                *pt = Block(rng.random());
                let states = cipher.last_round_states(pt);
                *ct = states.ciphertext;
                fill_trace(config, &states, &mut rng, row);
            }
        });

    Ok(TraceSet::from_parts_unchecked(
        samples,
        spt,
        plaintexts,
        ciphertexts,
        Some(*key),
        Some(seed),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aes::last_round_states;

    fn key() -> Block {
        Block::from_hex("000102030405060708090a0b0c0d0e0f").unwrap()
    }

    fn total_hd(states: &LastRoundStates) -> u32 {
        states.toggles().0.iter().map(|b| b.count_ones()).sum()
    }

    #[test]
    fn noiseless_trace_is_baseline_minus_weighted_hd() {
        let cfg = LeakageConfig::equal_weights(0.5).with_baseline(10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..50u8 {
            let pt = Block([i; 16]);
            let (trace, ct) = simulate_trace(&key(), &pt, &cfg, &mut rng).unwrap();
            let st = last_round_states(&key(), &pt);
            assert_eq!(ct, st.ciphertext);
            assert_eq!(trace[0] as f64, 10.0 - 0.5 * total_hd(&st) as f64);
        }
    }

    #[test]
    fn zero_hd_trace_equals_baseline() {
        // poi_level only looks at the toggles, so a hand-built state with no
        // toggles must sit exactly at baseline
        let cfg = LeakageConfig::equal_weights(1.0).with_baseline(2.5);
        let b = Block([0x3c; 16]);
        let st = LastRoundStates {
            round9_state: b,
            ciphertext: b,
        };
        assert_eq!(cfg.poi_level(&st), 2.5);
    }

    #[test]
    fn augmentation_applies_only_on_trigger() {
        // enumerate plaintexts until both cases of byte-0 bit 2 show up
        let w = 1.0;
        let o = 4.0;
        for trigger in [Trigger::OnStatic, Trigger::OnToggle] {
            let aug = Augmentation::new(0, 2, o, trigger).unwrap();
            let cfg = LeakageConfig::equal_weights(w).with_augmentation(Some(aug));
            let mut seen = [false; 2];
            for i in 0..=255u8 {
                let pt = Block([i, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, i]);
                let st = last_round_states(&key(), &pt);
                let toggled = (st.toggles().0[0] >> 2) & 1 == 1;
                seen[toggled as usize] = true;
                let fires = match trigger {
                    Trigger::OnStatic => !toggled,
                    Trigger::OnToggle => toggled,
                };
                let want = -w * total_hd(&st) as f64 - if fires { o } else { 0.0 };
                assert_eq!(cfg.poi_level(&st), want);
            }
            assert_eq!(seen, [true, true]);
        }
    }

    #[test]
    fn non_poi_samples_are_baseline_without_noise() {
        let cfg = LeakageConfig::equal_weights(1.0)
            .with_baseline(-1.0)
            .with_samples(5, 3);
        let ts = simulate_campaign(&key(), 20, &cfg, 9).unwrap();
        for tr in ts.traces() {
            for (s, v) in tr.iter().enumerate() {
                if s != 3 {
                    assert_eq!(*v, -1.0);
                }
            }
        }
    }

    #[test]
    fn ro_offset_examples() {
        assert_eq!(ro_offset_model(0, 0.7, 3.0).unwrap(), 0.0);
        let w = 2.0;
        assert!((ro_offset_model(70, 1.0, w / 17.5).unwrap() - 4.0 * w).abs() < 1e-12);
        let a = ro_offset_model(35, 0.4, 0.1).unwrap();
        let b = ro_offset_model(70, 0.4, 0.1).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-15);
        assert!(ro_offset_model(1, 1.5, 1.0).is_err());
        assert!(ro_offset_model(1, -0.1, 1.0).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = LeakageConfig::equal_weights(1.0);
        assert!(cfg.validate().is_ok());
        cfg.poi_index = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = LeakageConfig::equal_weights(1.0);
        cfg.bit_weights[5] = -1.0;
        assert!(cfg.validate().is_err());
        assert!(Augmentation::new(16, 0, 1.0, Trigger::OnStatic).is_err());
        assert!(Augmentation::new(0, 8, 1.0, Trigger::OnStatic).is_err());
        assert!(Augmentation::new(0, 2, -1.0, Trigger::OnStatic).is_err());
        assert!(LeakageConfig::equal_weights(1.0)
            .with_noise(-0.1)
            .validate()
            .is_err());
    }

    #[test]
    fn trigger_parsing() {
        assert_eq!("on-static".parse::<Trigger>().unwrap(), Trigger::OnStatic);
        assert_eq!("On_Toggle".parse::<Trigger>().unwrap(), Trigger::OnToggle);
        assert!("sometimes".parse::<Trigger>().is_err());
    }

    #[test]
    fn campaign_basics() {
        let cfg = LeakageConfig::equal_weights(1.0).with_noise(0.5);
        assert!(simulate_campaign(&key(), 0, &cfg, 1).is_err());
        let one = simulate_campaign(&key(), 1, &cfg, 1).unwrap();
        assert_eq!(one.n_traces(), 1);
        let a = simulate_campaign(&key(), 3000, &cfg, 42).unwrap();
        let b = simulate_campaign(&key(), 3000, &cfg, 42).unwrap();
        let c = simulate_campaign(&key(), 3000, &cfg, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.samples(), c.samples());
        assert_ne!(a.plaintexts(), c.plaintexts());
        // a shorter campaign is a prefix of a longer one with the same seed
        let short = simulate_campaign(&key(), 1500, &cfg, 42).unwrap();
        assert_eq!(short, a.head(1500));
    }
}
