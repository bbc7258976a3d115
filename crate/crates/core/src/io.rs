//! Trace storage and interchange.
//!
//! SCTR layout (all integers little-endian, no padding):
//!
//! ```text
//! offset  size  field
//!      0     4  magic "SCTR"
//!      4     2  version (1)
//!      6     2  flags: bit 0 true key present, bit 1 seed present
//!      8     4  n_traces
//!     12     4  samples_per_trace
//!     16     8  seed (0 when absent)
//!     24    16  true key (only when flag bit 0 is set)
//!      .     .  per trace: plaintext[16], ciphertext[16], samples_per_trace x f32
//! ```
//!
//! The raw import path takes a header-less matrix of little-endian f32
//! (one row per trace) plus a CSV with `plaintext_hex,ciphertext_hex` columns.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::aes::{Aes128, Block, BLOCK_LEN};
use crate::cpa::{CorrelationEvolution, N_GUESSES};
use crate::error::{Error, FormatError, Result};
use crate::hd::{HdClassSummary, HdFit};
use crate::traces::TraceSet;

pub const MAGIC: [u8; 4] = *b"SCTR";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 24;
pub const FLAG_TRUE_KEY: u16 = 1 << 0;
pub const FLAG_SEED: u16 = 1 << 1;
const KNOWN_FLAGS: u16 = FLAG_TRUE_KEY | FLAG_SEED;

/// Exact encoded size of a trace set with the given shape.
pub fn sctr_len(n_traces: usize, samples_per_trace: usize, has_key: bool) -> u64 {
    HEADER_LEN as u64
        + if has_key { BLOCK_LEN as u64 } else { 0 }
        + n_traces as u64 * (2 * BLOCK_LEN as u64 + 4 * samples_per_trace as u64)
}

pub fn write_sctr<W: Write>(traces: &TraceSet, mut out: W) -> Result<()> {
    let n = u32::try_from(traces.n_traces())
        .map_err(|_| Error::invalid("too many traces for SCTR (max 2^32 - 1)"))?;
    let spt = u32::try_from(traces.samples_per_trace())
        .map_err(|_| Error::invalid("trace too long for SCTR (max 2^32 - 1 samples)"))?;
    let mut flags = 0u16;
    if traces.true_key().is_some() {
        flags |= FLAG_TRUE_KEY;
    }
    if traces.seed().is_some() {
        flags |= FLAG_SEED;
    }
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(&MAGIC);
    header[4..6].copy_from_slice(&VERSION.to_le_bytes());
    header[6..8].copy_from_slice(&flags.to_le_bytes());
    header[8..12].copy_from_slice(&n.to_le_bytes());
    header[12..16].copy_from_slice(&spt.to_le_bytes());
    header[16..24].copy_from_slice(&traces.seed().unwrap_or(0).to_le_bytes());
    out.write_all(&header)?;
    if let Some(key) = traces.true_key() {
        out.write_all(key.as_bytes())?;
    }
    let mut row = Vec::with_capacity(4 * traces.samples_per_trace());
    for ((pt, ct), samples) in traces
        .plaintexts()
        .iter()
        .zip(traces.ciphertexts())
        .zip(traces.traces())
    {
        out.write_all(pt.as_bytes())?;
        out.write_all(ct.as_bytes())?;
        row.clear();
        samples
            .iter()
            .for_each(|v| row.extend_from_slice(&v.to_le_bytes()));
        out.write_all(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_sctr_file(traces: &TraceSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_sctr(traces, BufWriter::new(file)).map_err(|e| with_path(e, path))
}

fn with_path(err: Error, path: &Path) -> Error {
    match err {
        Error::Stream(source) => Error::io(path, source),
        other => other,
    }
}

fn block_at(bytes: &[u8], at: usize) -> Block {
    let mut b = [0u8; BLOCK_LEN];
    b.copy_from_slice(&bytes[at..at + BLOCK_LEN]);
    Block(b)
}

/// Decodes a complete SCTR image.
pub fn decode_sctr(bytes: &[u8]) -> Result<TraceSet> {
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::ShortHeader {
            expected: HEADER_LEN,
            actual: bytes.len(),
        }
        .into());
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(FormatError::BadMagic { found: magic }.into());
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion { found: version }.into());
    }
    let flags = u16::from_le_bytes(bytes[6..8].try_into().unwrap());
    if flags & !KNOWN_FLAGS != 0 {
        return Err(FormatError::UnknownFlags { flags }.into());
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let spt = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let seed = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    if spt == 0 {
        return Err(FormatError::ZeroSamples.into());
    }
    let has_key = flags & FLAG_TRUE_KEY != 0;
    let expected = sctr_len(n, spt, has_key);
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(FormatError::Truncated { expected, actual }.into());
    }
    if actual > expected {
        return Err(FormatError::TrailingBytes { expected, actual }.into());
    }

    let mut at = HEADER_LEN;
    let true_key = has_key.then(|| {
        let k = block_at(bytes, at);
        at += BLOCK_LEN;
        k
    });
    let mut samples = Vec::with_capacity(n * spt);
    let mut plaintexts = Vec::with_capacity(n);
    let mut ciphertexts = Vec::with_capacity(n);
    for _ in 0..n {
        plaintexts.push(block_at(bytes, at));
        ciphertexts.push(block_at(bytes, at + BLOCK_LEN));
        at += 2 * BLOCK_LEN;
        samples.extend(
            bytes[at..at + 4 * spt]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap())),
        );
        at += 4 * spt;
    }
    if let Some(key) = &true_key {
        let cipher = Aes128::new(key);
        if let Some(trace) = (0..n).find(|&i| cipher.encrypt(&plaintexts[i]) != ciphertexts[i]) {
            return Err(FormatError::KeyMismatch { trace }.into());
        }
    }
    let seed = (flags & FLAG_SEED != 0).then_some(seed);
    Ok(TraceSet::from_parts_unchecked(
        samples,
        spt,
        plaintexts,
        ciphertexts,
        true_key,
        seed,
    ))
}

pub fn read_sctr<R: Read>(mut input: R) -> Result<TraceSet> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    decode_sctr(&bytes)
}

pub fn read_sctr_file(path: impl AsRef<Path>) -> Result<TraceSet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_sctr(&bytes)
}

/// Writes samples as a header-less little-endian f32 matrix and the cipher
/// blocks as `plaintext_hex,ciphertext_hex` CSV. The true key and seed are
/// not representable and are dropped.
pub fn export_raw(
    traces: &TraceSet,
    samples_path: impl AsRef<Path>,
    meta_path: impl AsRef<Path>,
) -> Result<()> {
    let samples_path = samples_path.as_ref();
    let meta_path = meta_path.as_ref();
    let file = File::create(samples_path).map_err(|e| Error::io(samples_path, e))?;
    let mut out = BufWriter::new(file);
    for v in traces.samples() {
        out.write_all(&v.to_le_bytes())
            .map_err(|e| Error::io(samples_path, e))?;
    }
    out.flush().map_err(|e| Error::io(samples_path, e))?;

    let mut meta = csv::Writer::from_path(meta_path)?;
    meta.write_record(["plaintext_hex", "ciphertext_hex"])?;
    for (pt, ct) in traces.plaintexts().iter().zip(traces.ciphertexts()) {
        meta.write_record([pt.to_hex(), ct.to_hex()])?;
    }
    meta.flush().map_err(|e| Error::io(meta_path, e))?;
    Ok(())
}

/// Builds a trace set from a raw f32 dump and its metadata CSV.
pub fn import_raw(
    samples_path: impl AsRef<Path>,
    meta_path: impl AsRef<Path>,
    samples_per_trace: usize,
) -> Result<TraceSet> {
    let samples_path = samples_path.as_ref();
    let meta_path = meta_path.as_ref();
    if samples_per_trace == 0 {
        return Err(Error::invalid("samples_per_trace must be at least 1"));
    }
    let raw = std::fs::read(samples_path).map_err(|e| Error::io(samples_path, e))?;
    let row_bytes = 4 * samples_per_trace;
    if raw.len() % row_bytes != 0 {
        return Err(Error::import(
            samples_path.display().to_string(),
            format!(
                "{} bytes is not a whole number of {}-sample rows ({} bytes each)",
                raw.len(),
                samples_per_trace,
                row_bytes
            ),
        ));
    }
    let trace_rows = raw.len() / row_bytes;

    let file = File::open(meta_path).map_err(|e| Error::io(meta_path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let header = reader.headers()?.clone();
    let column = |name: &str| {
        header.iter().position(|h| h.trim() == name).ok_or_else(|| {
            Error::import(
                format!("{} line 1", meta_path.display()),
                format!("missing column {name:?}"),
            )
        })
    };
    let pt_col = column("plaintext_hex")?;
    let ct_col = column("ciphertext_hex")?;

    let mut plaintexts = Vec::with_capacity(trace_rows);
    let mut ciphertexts = Vec::with_capacity(trace_rows);
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(row as u64 + 2, |p| p.line());
        let loc = || format!("{} line {line}", meta_path.display());
        if row >= trace_rows {
            return Err(Error::import(
                loc(),
                format!(
                    "metadata row {} has no trace; samples file holds {trace_rows} rows",
                    row + 1
                ),
            ));
        }
        let field = |col: usize, name: &str| -> Result<Block> {
            let text = record
                .get(col)
                .ok_or_else(|| Error::import(loc(), format!("missing {name}")))?;
            Block::from_hex(text).map_err(|e| Error::import(loc(), format!("{name}: {e}")))
        };
        plaintexts.push(field(pt_col, "plaintext_hex")?);
        ciphertexts.push(field(ct_col, "ciphertext_hex")?);
    }
    if plaintexts.len() != trace_rows {
        return Err(Error::import(
            samples_path.display().to_string(),
            format!(
                "trace row {} has no metadata; {} holds {} rows",
                plaintexts.len() + 1,
                meta_path.display(),
                plaintexts.len()
            ),
        ));
    }
    let samples = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    TraceSet::new(samples, samples_per_trace, plaintexts, ciphertexts)
}

/// `checkpoint,guess,r` rows for every guess at every checkpoint.
pub fn write_evolution_csv<W: Write>(evolution: &CorrelationEvolution, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["checkpoint", "guess", "r"])?;
    for (k, cp) in evolution.checkpoints().iter().enumerate() {
        for g in 0..N_GUESSES {
            let r = evolution.value(g as u8, k);
            w.write_record([cp.to_string(), g.to_string(), format!("{r:e}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_evolution_csv<R: Read>(input: R) -> Result<CorrelationEvolution> {
    let mut reader = csv::Reader::from_reader(input);
    let mut checkpoints: Vec<usize> = Vec::new();
    let mut by_checkpoint: Vec<[f64; N_GUESSES]> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let loc = format!("evolution row {}", row + 1);
        let parse_err = |what: &str| Error::import(loc.clone(), format!("bad {what}"));
        let cp: usize = record
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err("checkpoint"))?;
        let guess: usize = record
            .get(1)
            .and_then(|s| s.parse().ok())
            .filter(|&g| g < N_GUESSES)
            .ok_or_else(|| parse_err("guess"))?;
        let r: f64 = record
            .get(2)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err("r"))?;
        if checkpoints.last() != Some(&cp) {
            checkpoints.push(cp);
            by_checkpoint.push([f64::NAN; N_GUESSES]);
        }
        by_checkpoint.last_mut().unwrap()[guess] = r;
    }
    if by_checkpoint.iter().flatten().any(|v| v.is_nan()) {
        return Err(Error::import(
            "evolution csv",
            "missing guesses at some checkpoint",
        ));
    }
    let k = checkpoints.len();
    let mut values = vec![0.0; k * N_GUESSES];
    for (ci, row) in by_checkpoint.iter().enumerate() {
        for g in 0..N_GUESSES {
            values[g * k + ci] = row[g];
        }
    }
    CorrelationEvolution::new(checkpoints, values)
}

/// Class means for plotting: `guess,hd,mean,count` (absent classes omitted).
pub fn write_hd_classes_csv<'a, W: Write>(
    summaries: impl IntoIterator<Item = &'a HdClassSummary>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["guess", "hd", "mean", "count"])?;
    for s in summaries {
        for (hd, class) in s.present() {
            w.write_record([
                s.guess.to_string(),
                hd.to_string(),
                format!("{:e}", class.mean),
                class.count.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `guess,slope,intercept,r` per fitted guess.
pub fn write_hd_fits_csv<'a, W: Write>(
    fits: impl IntoIterator<Item = (u8, &'a HdFit)>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["guess", "slope", "intercept", "r"])?;
    for (guess, fit) in fits {
        w.write_record([
            guess.to_string(),
            format!("{:e}", fit.slope),
            format!("{:e}", fit.intercept),
            format!("{:e}", fit.r),
        ])?;
    }
    w.flush()?;
    Ok(())
}
