//! Simulation and correlation power analysis of the AES-128 last-round state
//! register overwrite, including a single-bit offset countermeasure.
//!
//! * [`aes`]: reference cipher and the Hamming-distance leakage model
//! * [`leakage`]: synthetic trace campaigns
//! * [`cpa`]: streaming CPA, correlation evolution, traces-to-disclosure
//! * [`hd`]: leakage per HD class, line fits, wrong-horse scan
//! * [`io`]: SCTR files, raw+CSV import, CSV emitters
//! * [`sweep`]: disclosure and wrong horses over augmentation offsets

pub mod aes;
pub mod cpa;
pub mod error;
pub mod hd;
pub mod io;
pub mod leakage;
pub mod sweep;
pub mod traces;

pub use aes::{
    encrypt_block, expand_key, guess_transitions, hamming_weight, hypothetical_power,
    invert_key_schedule, last_round_states, Aes128, Block, KeySchedule, LastRoundStates, RoundKey,
    ShiftRowsPerm,
};
pub use cpa::{
    cpa_attack, pearson, rank_of_guess, traces_to_disclosure, AttackResult, CorrelationAccumulator,
    CorrelationEvolution,
};
pub use error::{Error, FormatError, Result};
pub use hd::{
    fit_hd_line, group_by_hd, sign_flip_report, wrong_horse_scan, HdClassSummary, HdFit,
    SignFlipReport, WrongHorse,
};
pub use leakage::{
    ro_offset_model, simulate_campaign, simulate_trace, Augmentation, LeakageConfig, Trigger,
};
pub use sweep::{offset_sweep, SweepPlan, SweepPoint};
pub use traces::TraceSet;
