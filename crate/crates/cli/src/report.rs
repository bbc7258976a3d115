//! JSON documents written by the CLI.

use std::path::Path;

use sca_core::aes::{invert_key_schedule, RoundKey};
use sca_core::{AttackResult, Block, CorrelationEvolution};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedGuess {
    pub guess: u8,
    pub score: f64,
}

/// Everything one single-byte attack produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub schema_version: u32,
    pub input: String,
    pub n_traces: usize,
    pub samples_per_trace: usize,
    pub byte_index: usize,
    pub key_position: usize,
    pub checkpoint_stride: usize,
    pub best_guess: u8,
    pub correct_guess: Option<u8>,
    pub correct_rank: Option<usize>,
    pub disclosure: Option<usize>,
    pub ranking: Vec<RankedGuess>,
    pub checkpoints: Vec<usize>,
    /// `curves[g][k]`: signed peak correlation of guess `g` at checkpoint `k`.
    pub curves: Vec<Vec<f64>>,
}

impl AttackReport {
    pub fn new(
        input: &Path,
        samples_per_trace: usize,
        checkpoint_stride: usize,
        result: &AttackResult,
        evolution: &CorrelationEvolution,
    ) -> Self {
        AttackReport {
            schema_version: SCHEMA_VERSION,
            input: input.display().to_string(),
            n_traces: result.n_traces,
            samples_per_trace,
            byte_index: result.byte_index,
            key_position: result.key_position,
            checkpoint_stride,
            best_guess: result.best_guess,
            correct_guess: result.correct_guess,
            correct_rank: result
                .correct_guess
                .map(|g| sca_core::rank_of_guess(result, g)),
            disclosure: result.disclosure,
            ranking: result
                .ranking
                .iter()
                .map(|&g| RankedGuess {
                    guess: g,
                    score: result.score(g),
                })
                .collect(),
            checkpoints: evolution.checkpoints().to_vec(),
            curves: (0..=255u8).map(|g| evolution.curve(g).to_vec()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveredByte {
    pub byte_index: usize,
    pub key_position: usize,
    pub best_guess: u8,
    pub score: f64,
    pub correct_guess: Option<u8>,
    pub correct_rank: Option<usize>,
    pub disclosure: Option<usize>,
}

/// Full-key recovery: one attack per state byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub schema_version: u32,
    pub input: String,
    pub n_traces: usize,
    /// Best guesses in last-round key order.
    pub last_round_key: RoundKey,
    pub cipher_key: Block,
    pub true_key: Option<Block>,
    pub recovered: Option<bool>,
    pub bytes: Vec<RecoveredByte>,
}

impl RecoveryReport {
    pub fn new(input: &Path, true_key: Option<Block>, results: &[AttackResult]) -> Self {
        let mut k10 = [0u8; 16];
        let mut bytes: Vec<RecoveredByte> = results
            .iter()
            .map(|r| {
                k10[r.key_position] = r.best_guess;
                RecoveredByte {
                    byte_index: r.byte_index,
                    key_position: r.key_position,
                    best_guess: r.best_guess,
                    score: r.score(r.best_guess),
                    correct_guess: r.correct_guess,
                    correct_rank: r.correct_guess.map(|g| sca_core::rank_of_guess(r, g)),
                    disclosure: r.disclosure,
                }
            })
            .collect();
        bytes.sort_by_key(|b| b.byte_index);
        let last_round_key = RoundKey(k10);
        let cipher_key = invert_key_schedule(&last_round_key);
        RecoveryReport {
            schema_version: SCHEMA_VERSION,
            input: input.display().to_string(),
            n_traces: results.first().map_or(0, |r| r.n_traces),
            last_round_key,
            cipher_key,
            recovered: true_key.map(|k| k == cipher_key),
            true_key,
            bytes,
        }
    }
}
