use crate::aes::{Aes128, Block};
use crate::error::{Error, Result};

/// A set of power traces with the per-trace cipher inputs and outputs.
///
/// Samples are stored row-major, one row of `samples_per_trace` values per
/// trace. Once built a `TraceSet` is never mutated by the analysis code.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    samples: Vec<f32>,
    samples_per_trace: usize,
    plaintexts: Vec<Block>,
    ciphertexts: Vec<Block>,
    true_key: Option<Block>,
    seed: Option<u64>,
}

impl TraceSet {
    pub fn new(
        samples: Vec<f32>,
        samples_per_trace: usize,
        plaintexts: Vec<Block>,
        ciphertexts: Vec<Block>,
    ) -> Result<Self> {
        if samples_per_trace == 0 {
            return Err(Error::invalid("samples_per_trace must be at least 1"));
        }
        if plaintexts.len() != ciphertexts.len() {
            return Err(Error::invalid(format!(
                "{} plaintexts but {} ciphertexts",
                plaintexts.len(),
                ciphertexts.len()
            )));
        }
        if samples.len() != plaintexts.len() * samples_per_trace {
            return Err(Error::invalid(format!(
                "sample matrix has {} values, expected {} traces x {} samples",
                samples.len(),
                plaintexts.len(),
                samples_per_trace
            )));
        }
        Ok(TraceSet {
            samples,
            samples_per_trace,
            plaintexts,
            ciphertexts,
            true_key: None,
            seed: None,
        })
    }

    /// Attaches the cipher key, rejecting it if any ciphertext disagrees.
    pub fn with_true_key(mut self, key: Block) -> Result<Self> {
        let cipher = Aes128::new(&key);
        if let Some(i) = (0..self.n_traces())
            .find(|&i| cipher.encrypt(&self.plaintexts[i]) != self.ciphertexts[i])
        {
            return Err(Error::invalid(format!(
                "ciphertext of trace {i} does not match the supplied key"
            )));
        }
        self.true_key = Some(key);
        Ok(self)
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    /// Drops the key without touching anything else.
    pub fn without_true_key(mut self) -> Self {
        self.true_key = None;
        self
    }

    pub(crate) fn from_parts_unchecked(
        samples: Vec<f32>,
        samples_per_trace: usize,
        plaintexts: Vec<Block>,
        ciphertexts: Vec<Block>,
        true_key: Option<Block>,
        seed: Option<u64>,
    ) -> Self {
        debug_assert_eq!(samples.len(), plaintexts.len() * samples_per_trace);
        TraceSet {
            samples,
            samples_per_trace,
            plaintexts,
            ciphertexts,
            true_key,
            seed,
        }
    }

    pub fn n_traces(&self) -> usize {
        self.plaintexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plaintexts.is_empty()
    }

    pub fn samples_per_trace(&self) -> usize {
        self.samples_per_trace
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn trace(&self, i: usize) -> &[f32] {
        let s = self.samples_per_trace;
        &self.samples[i * s..(i + 1) * s]
    }

    pub fn traces(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.samples.chunks_exact(self.samples_per_trace)
    }

    pub fn plaintexts(&self) -> &[Block] {
        &self.plaintexts
    }

    pub fn ciphertexts(&self) -> &[Block] {
        &self.ciphertexts
    }

    pub fn true_key(&self) -> Option<&Block> {
        self.true_key.as_ref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Reorders traces; `order[k]` is the source index of output trace `k`.
    pub fn permuted(&self, order: &[usize]) -> Result<TraceSet> {
        let n = self.n_traces();
        let mut seen = vec![false; n];
        if order.len() != n
            || order
                .iter()
                .any(|&i| i >= n || std::mem::replace(&mut seen[i], true))
        {
            return Err(Error::invalid(
                "order is not a permutation of the trace indices",
            ));
        }
        let mut samples = Vec::with_capacity(self.samples.len());
        for &i in order {
            samples.extend_from_slice(self.trace(i));
        }
        Ok(TraceSet {
            samples,
            samples_per_trace: self.samples_per_trace,
            plaintexts: order.iter().map(|&i| self.plaintexts[i]).collect(),
            ciphertexts: order.iter().map(|&i| self.ciphertexts[i]).collect(),
            true_key: self.true_key,
            seed: self.seed,
        })
    }

    /// The first `n` traces.
    pub fn head(&self, n: usize) -> TraceSet {
        let n = n.min(self.n_traces());
        TraceSet {
            samples: self.samples[..n * self.samples_per_trace].to_vec(),
            samples_per_trace: self.samples_per_trace,
            plaintexts: self.plaintexts[..n].to_vec(),
            ciphertexts: self.ciphertexts[..n].to_vec(),
            true_key: self.true_key,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aes::encrypt_block;

    #[test]
    fn rejects_inconsistent_dimensions() {
        let b = Block::default();
        assert!(TraceSet::new(vec![0.0; 3], 2, vec![b, b], vec![b, b]).is_err());
        assert!(TraceSet::new(vec![0.0; 4], 2, vec![b, b], vec![b]).is_err());
        assert!(TraceSet::new(vec![], 0, vec![], vec![]).is_err());
        let ts = TraceSet::new(vec![1.0, 2.0, 3.0, 4.0], 2, vec![b, b], vec![b, b]).unwrap();
        assert_eq!(ts.n_traces(), 2);
        assert_eq!(ts.trace(1), &[3.0, 4.0]);
    }

    #[test]
    fn true_key_must_match_ciphertexts() {
        let key = Block([7; 16]);
        let pt = Block([1; 16]);
        let ct = encrypt_block(&key, &pt);
        let ts = TraceSet::new(vec![0.0], 1, vec![pt], vec![ct]).unwrap();
        assert!(ts.clone().with_true_key(key).is_ok());
        assert!(ts.with_true_key(Block([8; 16])).is_err());
    }

    #[test]
    fn permuted_rejects_non_permutations() {
        let b = Block::default();
        let ts = TraceSet::new(vec![1.0, 2.0], 1, vec![b, b], vec![b, b]).unwrap();
        assert!(ts.permuted(&[0, 0]).is_err());
        assert_eq!(ts.permuted(&[1, 0]).unwrap().samples(), &[2.0, 1.0]);
    }
}
