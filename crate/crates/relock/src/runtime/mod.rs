//! Deterministic execution substrate for the parallel stages.
//!
//! Two contracts, mirroring how the pipeline consumes parallelism:
//!
//! * [`Runtime::run_pair`] — two independent closures over shared
//!   immutable input, outputs in disjoint slots.
//! * [`Runtime::run_batch`] — one pure function applied to every index of
//!   a batch, statically chunked across workers.
//!
//! Both produce values that are bit-identical to a sequential schedule
//! regardless of worker count. Callers never share mutable state with
//! running jobs; this module is the only place threads are spawned.

mod batch;
mod pair;
pub mod staging;

pub use batch::BatchError;
pub use pair::{PairError, PairSide};
pub use staging::{BufferPool, StagingBuffer, StagingCounters};

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// Environment variable overriding the default worker count.
pub const WORKERS_ENV: &str = "RELOCK_WORKERS";

/// Aggregate counters exported into run reports.
#[derive(Debug, Default)]
pub struct RuntimeCounters {
    pub batch_jobs: AtomicU64,
    pub pair_jobs: AtomicU64,
    pub batch_elements: AtomicU64,
    pub batch_nanos: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RuntimeCounterSnapshot {
    pub batch_jobs: u64,
    pub pair_jobs: u64,
    pub batch_elements: u64,
    pub batch_wall_nanos: u64,
}

/// Worker-pool handle. Cheap to clone; clones share counters.
#[derive(Debug, Clone)]
pub struct Runtime {
    workers: usize,
    counters: Arc<RuntimeCounters>,
}

impl Runtime {
    /// Pool sized from `RELOCK_WORKERS` if set, else the host core count.
    pub fn from_env() -> Self {
        let workers = std::env::var(WORKERS_ENV)
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&w| w >= 1)
            .unwrap_or_else(|| {
                std::thread::available_parallelism()
                    .map(|n| n.get())
                    .unwrap_or(1)
            });
        Self::new(workers)
    }

    pub fn new(workers: usize) -> Self {
        Self {
            workers: workers.max(1),
            counters: Arc::new(RuntimeCounters::default()),
        }
    }

    /// Same pool contract with a different worker count; counters are
    /// shared with the original.
    pub fn with_workers(&self, workers: usize) -> Self {
        Self {
            workers: workers.max(1),
            counters: Arc::clone(&self.counters),
        }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn counters(&self) -> RuntimeCounterSnapshot {
        RuntimeCounterSnapshot {
            batch_jobs: self.counters.batch_jobs.load(Ordering::Relaxed),
            pair_jobs: self.counters.pair_jobs.load(Ordering::Relaxed),
            batch_elements: self.counters.batch_elements.load(Ordering::Relaxed),
            batch_wall_nanos: self.counters.batch_nanos.load(Ordering::Relaxed),
        }
    }

    pub(crate) fn note_batch(&self, elements: usize, nanos: u64) {
        self.counters.batch_jobs.fetch_add(1, Ordering::Relaxed);
        self.counters
            .batch_elements
            .fetch_add(elements as u64, Ordering::Relaxed);
        self.counters.batch_nanos.fetch_add(nanos, Ordering::Relaxed);
    }

    pub(crate) fn note_pair(&self) {
        self.counters.pair_jobs.fetch_add(1, Ordering::Relaxed);
    }
}

impl Default for Runtime {
    fn default() -> Self {
        Self::from_env()
    }
}
