//! Correlation power analysis against the last-round register overwrite.
//!
//! Traces are streamed once. For each key-byte guess the engine keeps the raw
//! moment sums of (hypothesis, sample) and turns them into Pearson
//! coefficients at every checkpoint. Guesses are ranked by the largest |r|
//! over the samples of a trace.

use rayon::prelude::*;

use crate::aes::{self, sr_forward, Block, BLOCK_LEN};
use crate::error::{Error, Result};
use crate::traces::TraceSet;

pub const N_GUESSES: usize = 256;
pub const DEFAULT_CHECKPOINT_STRIDE: usize = 100;

/// Guesses handled by one worker in [`cpa_attack`].
const GUESS_BLOCK: usize = 16;

/// Two-pass Pearson correlation. Returns 0 when either input is constant.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::invalid("pearson needs at least two points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.comp += other.comp;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `a * b - c * d` with the rounding error of `c * d` folded back in.
#[inline]
fn diff_of_products(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let cd = c * d;
    let err = c.mul_add(d, -cd);
    a.mul_add(b, -cd) - err
}

/// Correlation from raw moment sums; zero if either side has no variance.
#[inline]
fn correlation_from_sums(n: f64, sx: f64, sxx: f64, sy: f64, syy: f64, sxy: f64) -> f64 {
    let var_x = diff_of_products(n, sxx, sx, sx);
    let var_y = diff_of_products(n, syy, sy, sy);
    // relative floor: a constant column leaves only rounding residue
    if var_x <= 16.0 * f64::EPSILON * n * sxx || var_y <= 16.0 * f64::EPSILON * n * syy {
        return 0.0;
    }
    let cov = diff_of_products(n, sxy, sx, sy);
    (cov / (var_x * var_y).sqrt()).clamp(-1.0, 1.0)
}

/// Single-pass Pearson state for `n_guesses` hypotheses against every sample
/// of a trace.
///
/// Hypotheses are small integers, so their sums are exact in `f64`. Sample
/// sums are compensated. Merging adds the sums field by field, which makes it
/// associative and commutative up to compensated rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationAccumulator {
    n_guesses: usize,
    n_samples: usize,
    count: u64,
    sum_x: Vec<f64>,
    sum_xx: Vec<f64>,
    sum_y: Vec<CompensatedSum>,
    sum_yy: Vec<CompensatedSum>,
    // guess-major: [guess * n_samples + sample]
    sum_xy: Vec<CompensatedSum>,
}

impl CorrelationAccumulator {
    pub fn new(n_guesses: usize, n_samples: usize) -> Self {
        CorrelationAccumulator {
            n_guesses,
            n_samples,
            count: 0,
            sum_x: vec![0.0; n_guesses],
            sum_xx: vec![0.0; n_guesses],
            sum_y: vec![CompensatedSum::default(); n_samples],
            sum_yy: vec![CompensatedSum::default(); n_samples],
            sum_xy: vec![CompensatedSum::default(); n_guesses * n_samples],
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn n_guesses(&self) -> usize {
        self.n_guesses
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Adds one trace. `hypotheses[g]` is the model value of guess `g`.
    pub fn update(&mut self, hypotheses: &[u8], trace: &[f32]) {
        assert_eq!(hypotheses.len(), self.n_guesses, "hypothesis count");
        assert_eq!(trace.len(), self.n_samples, "trace length");
        self.count += 1;
        for (s, &y) in trace.iter().enumerate() {
            let y = f64::from(y);
            self.sum_y[s].add(y);
            self.sum_yy[s].add(y * y);
        }
        for (g, &h) in hypotheses.iter().enumerate() {
            let x = f64::from(h);
            self.sum_x[g] += x;
            self.sum_xx[g] += x * x;
            let row = &mut self.sum_xy[g * self.n_samples..(g + 1) * self.n_samples];
            for (acc, &y) in row.iter_mut().zip(trace) {
                acc.add(x * f64::from(y));
            }
        }
    }

    pub fn merge(&mut self, other: &CorrelationAccumulator) -> Result<()> {
        if (self.n_guesses, self.n_samples) != (other.n_guesses, other.n_samples) {
            return Err(Error::invalid(format!(
                "cannot merge {}x{} accumulator into {}x{}",
                other.n_guesses, other.n_samples, self.n_guesses, self.n_samples
            )));
        }
        self.count += other.count;
        for (a, b) in self.sum_x.iter_mut().zip(&other.sum_x) {
            *a += b;
        }
        for (a, b) in self.sum_xx.iter_mut().zip(&other.sum_xx) {
            *a += b;
        }
        for (a, b) in self.sum_y.iter_mut().zip(&other.sum_y) {
            a.merge(b);
        }
        for (a, b) in self.sum_yy.iter_mut().zip(&other.sum_yy) {
            a.merge(b);
        }
        for (a, b) in self.sum_xy.iter_mut().zip(&other.sum_xy) {
            a.merge(b);
        }
        Ok(())
    }

    pub fn correlation(&self, guess: usize, sample: usize) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        correlation_from_sums(
            self.count as f64,
            self.sum_x[guess],
            self.sum_xx[guess],
            self.sum_y[sample].value(),
            self.sum_yy[sample].value(),
            self.sum_xy[guess * self.n_samples + sample].value(),
        )
    }

    /// All coefficients, guess-major.
    pub fn correlations(&self) -> Vec<f64> {
        (0..self.n_guesses)
            .flat_map(|g| (0..self.n_samples).map(move |s| (g, s)))
            .map(|(g, s)| self.correlation(g, s))
            .collect()
    }

    /// Signed r at the sample with the largest |r| for `guess` (first such
    /// sample on ties).
    pub fn peak(&self, guess: usize) -> f64 {
        let mut best = 0.0f64;
        for s in 0..self.n_samples {
            let r = self.correlation(guess, s);
            if r.abs() > best.abs() {
                best = r;
            }
        }
        best
    }
}

/// Model values of all 256 guesses for one ciphertext.
#[inline]
pub fn hypotheses(ct: &Block, byte_index: usize, out: &mut [u8]) {
    for (g, slot) in out.iter_mut().enumerate() {
        *slot = aes::hd_model(ct, g as u8, byte_index);
    }
}

fn check_byte_index(byte_index: usize) -> Result<()> {
    if byte_index >= BLOCK_LEN {
        return Err(Error::invalid(format!(
            "byte index {byte_index} out of range 0..{BLOCK_LEN}"
        )));
    }
    Ok(())
}

/// Accumulates every trace for all 256 guesses, splitting the traces into
/// chunks of `chunk_len` that are processed in parallel and merged in order.
pub fn accumulate_chunked(
    traces: &TraceSet,
    byte_index: usize,
    chunk_len: usize,
) -> Result<CorrelationAccumulator> {
    check_byte_index(byte_index)?;
    if chunk_len == 0 {
        return Err(Error::invalid("chunk length must be at least 1"));
    }
    let spt = traces.samples_per_trace();
    let partials: Vec<CorrelationAccumulator> = traces
        .samples()
        .par_chunks(chunk_len * spt)
        .zip(traces.ciphertexts().par_chunks(chunk_len))
        .map(|(rows, cts)| {
            let mut acc = CorrelationAccumulator::new(N_GUESSES, spt);
            let mut hyp = [0u8; N_GUESSES];
            for (row, ct) in rows.chunks_exact(spt).zip(cts) {
                hypotheses(ct, byte_index, &mut hyp);
                acc.update(&hyp, row);
            }
            acc
        })
        .collect();
    let mut total = CorrelationAccumulator::new(N_GUESSES, spt);
    for p in &partials {
        total.merge(p)?;
    }
    Ok(total)
}

/// Correlation of every guess at a sequence of trace counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationEvolution {
    checkpoints: Vec<usize>,
    // guess-major: [guess * checkpoints.len() + k]
    values: Vec<f64>,
}

impl CorrelationEvolution {
    pub fn new(checkpoints: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if checkpoints.is_empty() {
            return Err(Error::invalid("evolution needs at least one checkpoint"));
        }
        if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("checkpoints must be strictly increasing"));
        }
        if values.len() != checkpoints.len() * N_GUESSES {
            return Err(Error::invalid(format!(
                "expected {} values, got {}",
                checkpoints.len() * N_GUESSES,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| v.is_nan() || v.abs() > 1.0 + 1e-9) {
            return Err(Error::invalid(format!("correlation {v} outside [-1, 1]")));
        }
        Ok(CorrelationEvolution {
            checkpoints,
            values,
        })
    }

    pub fn checkpoints(&self) -> &[usize] {
        &self.checkpoints
    }

    pub fn value(&self, guess: u8, checkpoint: usize) -> f64 {
        self.values[guess as usize * self.checkpoints.len() + checkpoint]
    }

    pub fn curve(&self, guess: u8) -> &[f64] {
        let k = self.checkpoints.len();
        &self.values[guess as usize * k..(guess as usize + 1) * k]
    }

    /// Guesses sorted by |r| at checkpoint `k`, ties to the smaller guess.
    pub fn ranking_at(&self, k: usize) -> Vec<u8> {
        rank_scores(
            &(0..N_GUESSES)
                .map(|g| self.value(g as u8, k).abs())
                .collect::<Vec<_>>(),
        )
    }
}

/// Final ranking of one attacked byte.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub byte_index: usize,
    /// Last-round key position the guesses refer to.
    pub key_position: usize,
    pub n_traces: usize,
    pub best_guess: u8,
    /// Guesses by descending score.
    pub ranking: Vec<u8>,
    /// Max over samples of |r|, indexed by guess.
    pub scores: Vec<f64>,
    /// Known last-round key byte, when the trace set carries the key.
    pub correct_guess: Option<u8>,
    pub disclosure: Option<usize>,
}

impl AttackResult {
    pub fn score(&self, guess: u8) -> f64 {
        self.scores[guess as usize]
    }
}

fn rank_scores(scores: &[f64]) -> Vec<u8> {
    let mut order: Vec<u8> = (0..scores.len()).map(|g| g as u8).collect();
    order.sort_by(|&a, &b| {
        scores[b as usize]
            .total_cmp(&scores[a as usize])
            .then(a.cmp(&b))
    });
    order
}

/// 1-based position of `guess` in the ranking.
pub fn rank_of_guess(result: &AttackResult, guess: u8) -> usize {
    result
        .ranking
        .iter()
        .position(|&g| g == guess)
        .map(|p| p + 1)
        .expect("ranking is a permutation of all guesses")
}

/// Smallest checkpoint from which `correct_guess` has the strictly largest
/// |r| at that checkpoint and every later one.
pub fn traces_to_disclosure(evolution: &CorrelationEvolution, correct_guess: u8) -> Option<usize> {
    let mut disclosed = None;
    for k in (0..evolution.checkpoints.len()).rev() {
        let own = evolution.value(correct_guess, k).abs();
        let leads = (0..N_GUESSES)
            .filter(|&g| g != correct_guess as usize)
            .all(|g| evolution.value(g as u8, k).abs() < own);
        if !leads {
            break;
        }
        disclosed = Some(evolution.checkpoints[k]);
    }
    disclosed
}

/// Trace counts at which the evolution is sampled: every multiple of
/// `stride`, plus the total when it is not a multiple.
pub fn checkpoints(n_traces: usize, stride: usize) -> Vec<usize> {
    let mut cps: Vec<usize> = (1..=n_traces / stride).map(|k| k * stride).collect();
    if cps.last() != Some(&n_traces) {
        cps.push(n_traces);
    }
    cps
}

/// Runs the HD-model CPA on one state byte.
///
/// Each block of guesses is accumulated by its own worker over the traces in
/// file order, so the result is identical for any thread count.
pub fn cpa_attack(
    traces: &TraceSet,
    byte_index: usize,
    checkpoint_stride: usize,
) -> Result<(AttackResult, CorrelationEvolution)> {
    check_byte_index(byte_index)?;
    if traces.is_empty() {
        return Err(Error::invalid("cannot attack an empty trace set"));
    }
    if checkpoint_stride == 0 {
        return Err(Error::invalid("checkpoint stride must be at least 1"));
    }
    let n = traces.n_traces();
    let spt = traces.samples_per_trace();
    let cps = checkpoints(n, checkpoint_stride);
    let key_position = sr_forward(byte_index);

    let blocks: Vec<Vec<f64>> = (0..N_GUESSES / GUESS_BLOCK)
        .into_par_iter()
        .map(|block| {
            let first = block * GUESS_BLOCK;
            let mut acc = CorrelationAccumulator::new(GUESS_BLOCK, spt);
            let mut hyp = [0u8; GUESS_BLOCK];
            // [local guess * cps.len() + k]
            let mut curves = vec![0.0; GUESS_BLOCK * cps.len()];
            let mut next_cp = 0;
            for (i, (row, ct)) in traces.traces().zip(traces.ciphertexts()).enumerate() {
                for (j, h) in hyp.iter_mut().enumerate() {
                    *h = aes::hd_model(ct, (first + j) as u8, byte_index);
                }
                acc.update(&hyp, row);
                if i + 1 == cps[next_cp] {
                    for j in 0..GUESS_BLOCK {
                        curves[j * cps.len() + next_cp] = acc.peak(j);
                    }
                    next_cp += 1;
                }
            }
            curves
        })
        .collect();

    let values: Vec<f64> = blocks.into_iter().flatten().collect();
    let evolution = CorrelationEvolution::new(cps, values)?;
    let last = evolution.checkpoints.len() - 1;
    let scores: Vec<f64> = (0..N_GUESSES)
        .map(|g| evolution.value(g as u8, last).abs())
        .collect();
    let ranking = rank_scores(&scores);
    let correct_guess = traces
        .true_key()
        .map(|k| aes::expand_key(k).last_round_key()[key_position]);
    let disclosure = correct_guess.and_then(|g| traces_to_disclosure(&evolution, g));

    let result = AttackResult {
        byte_index,
        key_position,
        n_traces: n,
        best_guess: ranking[0],
        ranking,
        scores,
        correct_guess,
        disclosure,
    };
    Ok((result, evolution))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_examples() {
        assert_eq!(pearson(&[0., 1., 2., 3.], &[0., 2., 4., 6.]).unwrap(), 1.0);
        assert_eq!(pearson(&[0., 1., 2., 3.], &[6., 4., 2., 0.]).unwrap(), -1.0);
        assert_eq!(pearson(&[1., 2., 3.], &[5., 5., 5.]).unwrap(), 0.0);
        assert!(pearson(&[1., 2.], &[1.]).is_err());
        assert!(pearson(&[1.], &[1.]).is_err());
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    #[test]
    fn accumulator_constant_hypothesis_is_zero() {
        let mut acc = CorrelationAccumulator::new(2, 1);
        for (i, y) in [1.0f32, 3.0, 2.0, 7.0].iter().enumerate() {
            acc.update(&[4, i as u8], &[*y]);
        }
        assert_eq!(acc.correlation(0, 0), 0.0);
        assert!(acc.correlation(1, 0) > 0.0);
    }

    #[test]
    fn merge_rejects_shape_mismatch() {
        let mut a = CorrelationAccumulator::new(2, 3);
        assert!(a.merge(&CorrelationAccumulator::new(2, 4)).is_err());
    }

    #[test]
    fn checkpoint_rule() {
        assert_eq!(checkpoints(250, 100), vec![100, 200, 250]);
        assert_eq!(checkpoints(300, 100), vec![100, 200, 300]);
        assert_eq!(checkpoints(50, 100), vec![50]);
        assert_eq!(checkpoints(3, 1), vec![1, 2, 3]);
    }

    fn evolution_with(correct: u8, leads_from: usize, cps: &[usize]) -> CorrelationEvolution {
        let mut values = vec![0.1; N_GUESSES * cps.len()];
        for (k, &cp) in cps.iter().enumerate() {
            // guess 0 leads before `leads_from`, the correct guess after
            let leader = if cp >= leads_from { correct } else { 0 };
            values[leader as usize * cps.len() + k] = -0.5;
        }
        CorrelationEvolution::new(cps.to_vec(), values).unwrap()
    }

    #[test]
    fn disclosure_definition() {
        let cps = [1000, 2000, 3000, 4000, 5000];
        assert_eq!(
            traces_to_disclosure(&evolution_with(7, 0, &cps), 7),
            Some(1000)
        );
        assert_eq!(
            traces_to_disclosure(&evolution_with(7, 3000, &cps), 7),
            Some(3000)
        );
        assert_eq!(
            traces_to_disclosure(&evolution_with(7, 9000, &cps), 7),
            None
        );
    }

    #[test]
    fn disclosure_requires_staying_first() {
        let cps = vec![10, 20, 30];
        let mut values = vec![0.0; N_GUESSES * 3];
        values[5 * 3] = 0.9; // first at 10
        values[9 * 3 + 1] = 0.9; // someone else at 20
        values[5 * 3 + 2] = 0.9; // first again at 30
        let ev = CorrelationEvolution::new(cps, values).unwrap();
        assert_eq!(traces_to_disclosure(&ev, 5), Some(30));
    }

    #[test]
    fn disclosure_needs_strict_lead() {
        let cps = vec![10];
        let mut values = vec![0.0; N_GUESSES];
        values[3] = 0.4;
        values[4] = -0.4;
        let ev = CorrelationEvolution::new(cps, values).unwrap();
        assert_eq!(traces_to_disclosure(&ev, 3), None);
        assert_eq!(ev.ranking_at(0)[..2], [3, 4]);
    }

    #[test]
    fn evolution_validation() {
        assert!(CorrelationEvolution::new(vec![], vec![]).is_err());
        assert!(CorrelationEvolution::new(vec![2, 1], vec![0.0; 512]).is_err());
        assert!(CorrelationEvolution::new(vec![1], vec![0.0; 10]).is_err());
        let mut v = vec![0.0; 256];
        v[0] = 1.5;
        assert!(CorrelationEvolution::new(vec![1], v).is_err());
    }

    #[test]
    fn ranking_ties_break_to_smaller_guess() {
        let scores = vec![0.5; N_GUESSES];
        let r = rank_scores(&scores);
        assert_eq!(r, (0..=255u8).collect::<Vec<_>>());
    }
}
