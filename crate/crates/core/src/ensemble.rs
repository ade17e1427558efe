//! Seeded trajectory ensembles.
//!
//! Every trajectory `i` of a run with master seed `s` draws from its own
//! stream seeded by [`sub_seed`]`(s, i)`. Results are gathered by index, so
//! output is bit-identical for any worker count or scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Random stream used for every simulation in the crate.
pub type StreamRng = ChaCha8Rng;

/// Default master seed for runs that do not specify one.
pub const DEFAULT_SEED: u64 = 20_180_517;

/// Weyl increment of the splitmix64 generator (2^64 / golden ratio).
pub const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const SPLITMIX_MUL1: u64 = 0xBF58_476D_1CE4_E5B9;
const SPLITMIX_MUL2: u64 = 0x94D0_49BB_1331_11EB;

/// splitmix64 output finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(SPLITMIX_MUL1);
    z = (z ^ (z >> 27)).wrapping_mul(SPLITMIX_MUL2);
    z ^ (z >> 31)
}

/// Sub-seed of trajectory `index` under `master`: the `index + 1`-th output of
/// a splitmix64 sequence whose state starts at `splitmix64(master)`.
pub fn sub_seed(master: u64, index: u64) -> u64 {
    let state = splitmix64(master).wrapping_add(index.wrapping_add(1).wrapping_mul(SPLITMIX_GAMMA));
    splitmix64(state)
}

/// Run parameters shared by the ensemble diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_traj: usize,
    pub seed: u64,
    /// Worker threads; `0` uses the rayon default.
    pub workers: usize,
}

pub fn stream(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}

/// Runs `job(index, sub_seed)` for every index in `0..count` on `workers`
/// threads (`0` means the rayon default) and returns results in index order.
///
/// If several jobs fail, the error of the lowest index is returned. A
/// diverging walk is reported as [`Error::TrajectoryAbort`] so it can be
/// replayed from its index and sub-seed.
pub fn run_indexed<T, F>(count: usize, master: u64, workers: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, u64) -> Result<T> + Sync,
{
    let work = || -> Vec<Result<T>> {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let seed = sub_seed(master, i as u64);
                job(i, seed).map_err(|e| match e {
                    Error::NonFinitePosition { step, norm } => Error::TrajectoryAbort {
                        index: i,
                        seed,
                        step,
                        norm,
                    },
                    other => other,
                })
            })
            .collect()
    };
    let results = if workers == 0 {
        work()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool construction")
            .install(work)
    };
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn splitmix_reference_values() {
        // Reference outputs of splitmix64 seeded with 0 (first three draws).
        let mut state = 0u64;
        let mut next = || {
            state = state.wrapping_add(SPLITMIX_GAMMA);
            splitmix64(state)
        };
        assert_eq!(next(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(next(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(next(), 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn sub_seeds_distinct() {
        let mut seeds: Vec<u64> = (0..10_000).map(|i| sub_seed(7, i)).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 10_000);
        assert_ne!(sub_seed(1, 0), sub_seed(2, 0));
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let job = |i: usize, seed: u64| -> Result<(usize, f64)> {
            let mut rng = stream(seed);
            Ok((i, (0..100).map(|_| rng.random::<f64>()).sum()))
        };
        let one = run_indexed(64, 99, 1, job).unwrap();
        let four = run_indexed(64, 99, 4, job).unwrap();
        assert_eq!(one, four);
        assert!(one.iter().enumerate().all(|(i, r)| r.0 == i));
    }

    #[test]
    fn lowest_index_error_wins() {
        let res = run_indexed(50, 1, 3, |i, _| {
            if i % 7 == 3 {
                Err(crate::Error::NonFinitePosition { step: i, norm: 0.0 })
            } else {
                Ok(i)
            }
        });
        assert_eq!(
            res,
            Err(Error::TrajectoryAbort {
                index: 3,
                seed: sub_seed(1, 3),
                step: 3,
                norm: 0.0
            })
        );
    }
}
