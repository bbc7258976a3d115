//! Command bodies, kept free of argument parsing so tests can drive them.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use sca_core::hd::fit_all_guesses;
use sca_core::io::{write_evolution_csv, write_hd_classes_csv, write_hd_fits_csv};
use sca_core::{
    cpa_attack, offset_sweep, simulate_campaign, wrong_horse_scan, AttackResult,
    CorrelationEvolution, SweepPlan, SweepPoint, TraceSet,
};
use serde::{Deserialize, Serialize};

use crate::config::{AugmentationSpec, ExperimentConfig};
use crate::report::{AttackReport, RecoveryReport};

pub fn simulate(cfg: &ExperimentConfig) -> Result<TraceSet> {
    cfg.validate()?;
    Ok(simulate_campaign(
        &cfg.key,
        cfg.n_traces,
        &cfg.leakage()?,
        cfg.seed,
    )?)
}

pub fn attack(
    traces: &TraceSet,
    input: &Path,
    byte_index: usize,
    stride: usize,
) -> Result<(AttackReport, CorrelationEvolution)> {
    let (result, evolution) = cpa_attack(traces, byte_index, stride)?;
    let report = AttackReport::new(
        input,
        traces.samples_per_trace(),
        stride,
        &result,
        &evolution,
    );
    Ok((report, evolution))
}

/// Attacks all sixteen state bytes; the attacks themselves are parallel, so
/// the bytes run one after another.
pub fn recover(traces: &TraceSet, input: &Path, stride: usize) -> Result<RecoveryReport> {
    let results = (0..16)
        .map(|b| cpa_attack(traces, b, stride).map(|(r, _)| r))
        .collect::<sca_core::Result<Vec<AttackResult>>>()?;
    Ok(RecoveryReport::new(
        input,
        traces.true_key().copied(),
        &results,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub byte_index: usize,
    pub sample_index: usize,
    pub guesses_fitted: usize,
    pub correct_guess: Option<u8>,
    pub correct_slope: Option<f64>,
    pub correct_intercept: Option<f64>,
    pub correct_r: Option<f64>,
    pub wrong_horse_count: Option<usize>,
}

/// Class means and line fits for every guess, written as two CSVs.
pub fn fit_hd(
    traces: &TraceSet,
    byte_index: usize,
    sample_index: usize,
    classes_out: Option<&Path>,
    fits_out: Option<&Path>,
) -> Result<FitSummary> {
    let fits = fit_all_guesses(traces, byte_index, sample_index)?;
    if let Some(path) = classes_out {
        write_hd_classes_csv(fits.iter().flatten().map(|(s, _)| s), create(path)?)?;
    }
    if let Some(path) = fits_out {
        write_hd_fits_csv(
            fits.iter().flatten().map(|(s, f)| (s.guess, f)),
            create(path)?,
        )?;
    }
    let correct_guess = traces
        .true_key()
        .map(|k| sca_core::expand_key(k).last_round_key()[sca_core::aes::sr_forward(byte_index)]);
    let correct_fit = correct_guess.and_then(|g| fits[g as usize].as_ref().map(|(_, f)| *f));
    let wrong_horse_count = match correct_guess {
        Some(g) => Some(wrong_horse_scan(traces, byte_index, g, sample_index)?.len()),
        None => None,
    };
    Ok(FitSummary {
        byte_index,
        sample_index,
        guesses_fitted: fits.iter().flatten().count(),
        correct_guess,
        correct_slope: correct_fit.map(|f| f.slope),
        correct_intercept: correct_fit.map(|f| f.intercept),
        correct_r: correct_fit.map(|f| f.r),
        wrong_horse_count,
    })
}

/// Runs the sweep grid around a base config. The augmented byte and trigger
/// come from the base augmentation when present; otherwise the attacked
/// byte is augmented on static bits.
pub fn sweep(base: &ExperimentConfig, offsets: &[f64], bits: &[usize]) -> Result<Vec<SweepPoint>> {
    base.validate()?;
    let template = base.augmentation.clone().unwrap_or(AugmentationSpec {
        byte: base.byte_index,
        ..Default::default()
    });
    let plan = SweepPlan {
        key: base.key,
        n_traces: base.n_traces,
        seed: base.seed,
        leakage: base.leakage()?.with_augmentation(None),
        attack_byte: base.byte_index,
        checkpoint_stride: base.checkpoint_stride,
        augment_byte: template.byte,
        trigger: template.trigger,
    };
    Ok(offset_sweep(&plan, offsets, bits)?)
}

pub fn write_sweep_csv(rows: &[SweepPoint], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bit", "offset", "disclosure", "wrong_horse_count"])?;
    for row in rows {
        w.write_record([
            row.bit.to_string(),
            row.offset.to_string(),
            row.disclosure.map(|d| d.to_string()).unwrap_or_default(),
            row.wrong_horse_count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_evolution(evolution: &CorrelationEvolution, path: &Path) -> Result<()> {
    write_evolution_csv(evolution, create(path)?)?;
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    serde_json::to_writer_pretty(create(path)?, value)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}
