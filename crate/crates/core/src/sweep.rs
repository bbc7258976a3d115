//! Countermeasure sweeps: one simulated campaign per (bit, offset) pair,
//! each attacked and scanned for wrong horses.

use serde::{Deserialize, Serialize};

use crate::aes::Block;
use crate::cpa::cpa_attack;
use crate::error::{Error, Result};
use crate::hd::wrong_horse_scan;
use crate::leakage::{simulate_campaign, Augmentation, LeakageConfig, Trigger};

/// Everything shared by the points of a sweep. The augmentation of
/// `leakage` is ignored; each point installs its own.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub key: Block,
    pub n_traces: usize,
    pub seed: u64,
    pub leakage: LeakageConfig,
    pub attack_byte: usize,
    pub checkpoint_stride: usize,
    pub augment_byte: usize,
    pub trigger: Trigger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub bit: usize,
    pub offset: f64,
    pub disclosure: Option<usize>,
    pub wrong_horse_count: usize,
}

/// Bit-major grid of sweep points. Every point reuses the plan's seed, so
/// points differ only in the augmentation.
pub fn offset_sweep(plan: &SweepPlan, offsets: &[f64], bits: &[usize]) -> Result<Vec<SweepPoint>> {
    if offsets.is_empty() || bits.is_empty() {
        return Err(Error::invalid(
            "sweep needs at least one offset and one bit",
        ));
    }
    let mut points = Vec::with_capacity(offsets.len() * bits.len());
    for &bit in bits {
        for &offset in offsets {
            let aug = Augmentation::new(plan.augment_byte, bit, offset, plan.trigger)?;
            let leakage = plan.leakage.clone().with_augmentation(Some(aug));
            let traces = simulate_campaign(&plan.key, plan.n_traces, &leakage, plan.seed)?;
            let (result, _) = cpa_attack(&traces, plan.attack_byte, plan.checkpoint_stride)?;
            let correct = result
                .correct_guess
                .expect("simulated campaigns carry their key");
            let horses = wrong_horse_scan(&traces, plan.attack_byte, correct, leakage.poi_index)?;
            points.push(SweepPoint {
                bit,
                offset,
                disclosure: result.disclosure,
                wrong_horse_count: horses.len(),
            });
        }
    }
    Ok(points)
}
