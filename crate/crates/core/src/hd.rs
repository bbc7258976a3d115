//! Mean leakage per Hamming-distance class and straight-line fits over the
//! class means.

use rayon::prelude::*;

use crate::aes::{self, BLOCK_LEN};
use crate::cpa::{pearson, N_GUESSES};
use crate::error::{Error, Result};
use crate::traces::TraceSet;

pub const HD_CLASSES: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HdClass {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation of the class.
    pub std_dev: f64,
}

impl HdClass {
    pub fn is_present(&self) -> bool {
        self.count > 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HdClassSummary {
    pub guess: u8,
    pub byte_index: usize,
    pub sample_index: usize,
    pub classes: [HdClass; HD_CLASSES],
}

impl HdClassSummary {
    pub fn total(&self) -> usize {
        self.classes.iter().map(|c| c.count).sum()
    }

    /// `(hd, class)` for the classes that received traces.
    pub fn present(&self) -> impl Iterator<Item = (usize, &HdClass)> {
        self.classes
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_present())
    }
}

/// Buckets the leakage at `sample_index` by the model value of `key_guess`.
pub fn group_by_hd(
    traces: &TraceSet,
    key_guess: u8,
    byte_index: usize,
    sample_index: usize,
) -> Result<HdClassSummary> {
    if byte_index >= BLOCK_LEN {
        return Err(Error::invalid(format!(
            "byte index {byte_index} out of range 0..{BLOCK_LEN}"
        )));
    }
    if sample_index >= traces.samples_per_trace() {
        return Err(Error::invalid(format!(
            "sample index {sample_index} outside trace of {} samples",
            traces.samples_per_trace()
        )));
    }
    // Welford per class
    let mut count = [0usize; HD_CLASSES];
    let mut mean = [0.0f64; HD_CLASSES];
    let mut m2 = [0.0f64; HD_CLASSES];
    for (row, ct) in traces.traces().zip(traces.ciphertexts()) {
        let hd = aes::hd_model(ct, key_guess, byte_index) as usize;
        let y = f64::from(row[sample_index]);
        count[hd] += 1;
        let d = y - mean[hd];
        mean[hd] += d / count[hd] as f64;
        m2[hd] += d * (y - mean[hd]);
    }
    let mut classes = [HdClass::default(); HD_CLASSES];
    for hd in 0..HD_CLASSES {
        if count[hd] > 0 {
            classes[hd] = HdClass {
                count: count[hd],
                mean: mean[hd],
                std_dev: (m2[hd] / count[hd] as f64).sqrt(),
            };
        }
    }
    Ok(HdClassSummary {
        guess: key_guess,
        byte_index,
        sample_index,
        classes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HdFit {
    pub slope: f64,
    pub intercept: f64,
    pub r: f64,
    pub n_classes_used: usize,
}

/// Ordinary least squares of class mean on HD, one point per present class.
pub fn fit_hd_line(summary: &HdClassSummary) -> Result<HdFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        summary.present().map(|(hd, c)| (hd as f64, c.mean)).unzip();
    if xs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "line fit needs two non-empty HD classes, got {}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok(HdFit {
        slope,
        intercept: my - slope * mx,
        r: pearson(&xs, &ys)?,
        n_classes_used: xs.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignFlipReport {
    pub baseline_slope: f64,
    pub augmented_slope: f64,
    /// The slopes have strictly opposite signs.
    pub flipped: bool,
    pub slope_change: f64,
}

pub fn sign_flip_report(baseline: &HdFit, augmented: &HdFit) -> SignFlipReport {
    SignFlipReport {
        baseline_slope: baseline.slope,
        augmented_slope: augmented.slope,
        flipped: baseline.slope * augmented.slope < 0.0,
        slope_change: augmented.slope - baseline.slope,
    }
}

/// Fit for every guess; `None` where fewer than two classes were populated.
pub fn fit_all_guesses(
    traces: &TraceSet,
    byte_index: usize,
    sample_index: usize,
) -> Result<Vec<Option<(HdClassSummary, HdFit)>>> {
    (0..N_GUESSES)
        .into_par_iter()
        .map(|g| {
            let summary = group_by_hd(traces, g as u8, byte_index, sample_index)?;
            Ok(fit_hd_line(&summary).ok().map(|fit| (summary, fit)))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrongHorse {
    pub guess: u8,
    pub r: f64,
}

/// Incorrect guesses whose class-mean fit has a larger |r| than the correct
/// guess, strongest first.
pub fn wrong_horse_scan(
    traces: &TraceSet,
    byte_index: usize,
    correct_guess: u8,
    sample_index: usize,
) -> Result<Vec<WrongHorse>> {
    let fits = fit_all_guesses(traces, byte_index, sample_index)?;
    let reference = fits[correct_guess as usize]
        .as_ref()
        .map(|(_, f)| f.r.abs())
        .unwrap_or(0.0);
    let mut horses: Vec<WrongHorse> = fits
        .iter()
        .enumerate()
        .filter(|&(g, _)| g != correct_guess as usize)
        .filter_map(|(g, f)| f.as_ref().map(|(_, fit)| (g, fit.r)))
        .filter(|&(_, r)| r.abs() > reference)
        .map(|(g, r)| WrongHorse { guess: g as u8, r })
        .collect();
    horses.sort_by(|a, b| b.r.abs().total_cmp(&a.r.abs()).then(a.guess.cmp(&b.guess)));
    Ok(horses)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary_from_means(means: &[(usize, f64)]) -> HdClassSummary {
        let mut classes = [HdClass::default(); HD_CLASSES];
        for &(hd, m) in means {
            classes[hd] = HdClass {
                count: 1,
                mean: m,
                std_dev: 0.0,
            };
        }
        HdClassSummary {
            guess: 0,
            byte_index: 0,
            sample_index: 0,
            classes,
        }
    }

    #[test]
    fn exact_line_is_recovered() {
        let pts: Vec<_> = (0..9).map(|h| (h, -0.75 * h as f64 + 2.5)).collect();
        let fit = fit_hd_line(&summary_from_means(&pts)).unwrap();
        assert!((fit.slope + 0.75).abs() < 1e-12);
        assert!((fit.intercept - 2.5).abs() < 1e-12);
        assert!((fit.r + 1.0).abs() < 1e-12);
        assert_eq!(fit.n_classes_used, 9);
    }

    #[test]
    fn absent_classes_are_skipped() {
        let fit = fit_hd_line(&summary_from_means(&[(2, 1.0), (6, 3.0)])).unwrap();
        assert_eq!(fit.n_classes_used, 2);
        assert!((fit.slope - 0.5).abs() < 1e-15);
        assert!(matches!(
            fit_hd_line(&summary_from_means(&[(4, 1.0)])),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn sign_flip_examples() {
        let fit = |slope| HdFit {
            slope,
            intercept: 0.0,
            r: 0.0,
            n_classes_used: 9,
        };
        assert!(sign_flip_report(&fit(-1.0), &fit(1.0)).flipped);
        assert!(!sign_flip_report(&fit(-1.0), &fit(-0.5)).flipped);
        let small = sign_flip_report(&fit(-4.049e-4), &fit(7.629e-4));
        assert!(small.flipped);
        assert!((small.slope_change - 1.1678e-3).abs() < 1e-12);
    }
}
