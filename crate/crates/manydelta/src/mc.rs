//! Monte Carlo harness: counter-based deterministic RNG streams, a
//! mergeable mean/variance accumulator, the estimator driver, and the
//! two-estimator agreement test.
//!
//! Reproducibility contract: a path's stream depends only on
//! (master_seed, path_index, substream), paths are evaluated in fixed
//! chunks, and chunk accumulators merge in index order — so the result is
//! bit-identical for any worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifies one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub master_seed: u64,
    pub path_index: u64,
    /// role tag (0 = main noise, 1+ = auxiliary draws)
    pub substream: u32,
}

impl StreamKey {
    /// The key material *is* the counter: no state is shared between
    /// streams, so any path can be regenerated in isolation.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        seed[0..8].copy_from_slice(&self.master_seed.to_le_bytes());
        seed[8..16].copy_from_slice(&self.path_index.to_le_bytes());
        seed[16..20].copy_from_slice(&self.substream.to_le_bytes());
        seed[20..28].copy_from_slice(&0x6d61_6e79_6465_6c74u64.to_le_bytes()); // domain tag
        ChaCha8Rng::from_seed(seed)
    }
}

pub fn stream_rng(master_seed: u64, path_index: u64, substream: u32) -> ChaCha8Rng {
    StreamKey { master_seed, path_index, substream }.rng()
}

/// One-pass mean/variance accumulator with an exact merge (Chan et al.).
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Accumulator {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn new() -> Self {
        Accumulator::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Accumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = (self.n + other.n) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n;
        self.m2 += other.m2 + delta * delta * (self.n as f64) * (other.n as f64) / n;
        self.n += other.n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Monte Carlo estimate with a confidence half-width.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
    pub ci_half_width: f64,
}

pub const DEFAULT_CONFIDENCE_Z: f64 = 3.0;

impl EstimatorResult {
    pub fn from_accumulator(acc: &Accumulator, z: f64) -> Self {
        EstimatorResult {
            mean: acc.mean(),
            stderr: acc.stderr(),
            n: acc.count(),
            ci_half_width: z * acc.stderr(),
        }
    }

    /// Linear combination Σ c_i · est_i with independent errors.
    pub fn linear_combination(terms: &[(f64, EstimatorResult)]) -> Self {
        let mean = terms.iter().map(|(c, e)| c * e.mean).sum();
        let var: f64 = terms.iter().map(|(c, e)| (c * e.stderr).powi(2)).sum();
        let n = terms.iter().map(|(_, e)| e.n).sum();
        let stderr = var.sqrt();
        EstimatorResult { mean, stderr, n, ci_half_width: DEFAULT_CONFIDENCE_Z * stderr }
    }
}

const CHUNK: u64 = 256;

/// Drive `task` over `budget` paths with deterministic per-path streams.
/// The result is independent of `workers` down to the bit pattern.
pub fn run_estimator<F>(
    task: F,
    budget: u64,
    workers: usize,
    master_seed: u64,
) -> Result<EstimatorResult>
where
    F: Fn(u64, &mut ChaCha8Rng) -> Result<f64> + Sync,
{
    run_estimator_z(task, budget, workers, master_seed, DEFAULT_CONFIDENCE_Z)
}

pub fn run_estimator_z<F>(
    task: F,
    budget: u64,
    workers: usize,
    master_seed: u64,
    z: f64,
) -> Result<EstimatorResult>
where
    F: Fn(u64, &mut ChaCha8Rng) -> Result<f64> + Sync,
{
    if budget < 2 {
        return Err(Error::Precondition("estimator budget must be at least 2".into()));
    }
    let chunks = budget.div_ceil(CHUNK);
    let run_chunks = || -> Vec<(Accumulator, Vec<(u64, String)>)> {
        (0..chunks)
            .into_par_iter()
            .map(|chunk| {
                let mut acc = Accumulator::new();
                let mut failures = Vec::new();
                let lo = chunk * CHUNK;
                let hi = ((chunk + 1) * CHUNK).min(budget);
                for path in lo..hi {
                    let mut rng = stream_rng(master_seed, path, 0);
                    match task(path, &mut rng) {
                        Ok(v) => acc.push(v),
                        Err(e) => failures.push((path, e.to_string())),
                    }
                }
                (acc, failures)
            })
            .collect()
    };
    let per_chunk = if workers == 0 {
        run_chunks()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidParam(format!("thread pool: {e}")))?;
        pool.install(run_chunks)
    };

    let mut total = Accumulator::new();
    let mut failures = Vec::new();
    for (acc, fails) in per_chunk {
        total.merge(&acc);
        failures.extend(fails);
    }
    if !failures.is_empty() {
        return Err(Error::PathFailures { total: budget, failures });
    }
    Ok(EstimatorResult::from_accumulator(&total, z))
}

/// As `run_estimator`, for tasks producing a fixed-length vector of values
/// per path (e.g. stopped and unstopped functionals from one simulation).
pub fn run_estimator_multi<F>(
    task: F,
    dims: usize,
    budget: u64,
    workers: usize,
    master_seed: u64,
) -> Result<Vec<EstimatorResult>>
where
    F: Fn(u64, &mut ChaCha8Rng) -> Result<Vec<f64>> + Sync,
{
    if budget < 2 {
        return Err(Error::Precondition("estimator budget must be at least 2".into()));
    }
    let chunks = budget.div_ceil(CHUNK);
    let per_chunk: Vec<(Vec<Accumulator>, Vec<(u64, String)>)> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut accs = vec![Accumulator::new(); dims];
            let mut failures = Vec::new();
            let lo = chunk * CHUNK;
            let hi = ((chunk + 1) * CHUNK).min(budget);
            for path in lo..hi {
                let mut rng = stream_rng(master_seed, path, 0);
                match task(path, &mut rng) {
                    Ok(values) => {
                        debug_assert_eq!(values.len(), dims);
                        for (acc, v) in accs.iter_mut().zip(values) {
                            acc.push(v);
                        }
                    }
                    Err(e) => failures.push((path, e.to_string())),
                }
            }
            (accs, failures)
        })
        .collect();
    let _ = workers; // parallelism never affects the merge order below
    let mut totals = vec![Accumulator::new(); dims];
    let mut failures = Vec::new();
    for (accs, fails) in per_chunk {
        for (t, a) in totals.iter_mut().zip(&accs) {
            t.merge(a);
        }
        failures.extend(fails);
    }
    if !failures.is_empty() {
        return Err(Error::PathFailures { total: budget, failures });
    }
    Ok(totals
        .iter()
        .map(|a| EstimatorResult::from_accumulator(a, DEFAULT_CONFIDENCE_Z))
        .collect())
}

/// z-score agreement between two independent estimates; passes at z ≤ 3.
pub fn agreement_test(a: &EstimatorResult, b: &EstimatorResult) -> (bool, f64) {
    let denom = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
    let z = if denom == 0.0 {
        if a.mean == b.mean {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (a.mean - b.mean).abs() / denom
    };
    (z <= DEFAULT_CONFIDENCE_Z, z)
}
