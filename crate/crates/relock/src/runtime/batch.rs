//! Data-parallel batches with static chunking.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use super::Runtime;

/// A batch element panicked; the job is reported as a value, not a crash.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("batch element {index} failed: {message}")]
pub struct BatchError {
    pub index: usize,
    pub message: String,
}

pub(crate) fn panic_text(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".to_string()
    }
}

impl Runtime {
    /// Apply `f` to every index in `0..n`, returning `vec![f(0), ..]`.
    ///
    /// Chunks are `ceil(n / workers)` contiguous ranges assembled in index
    /// order, so the output is bit-identical for any worker count or chunk
    /// size. A panic in one element fails the whole job with the lowest
    /// offending index.
    pub fn run_batch<T, F>(&self, n: usize, f: F) -> Result<Vec<T>, BatchError>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        let start = Instant::now();
        let result = self.run_batch_inner(n, &f);
        self.note_batch(n, start.elapsed().as_nanos() as u64);
        result
    }

    fn run_batch_inner<T, F>(&self, n: usize, f: &F) -> Result<Vec<T>, BatchError>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        if n == 0 {
            return Ok(Vec::new());
        }
        let workers = self.workers().min(n);
        if workers == 1 {
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                out.push(run_element(f, i)?);
            }
            return Ok(out);
        }

        let chunk = n.div_ceil(workers);
        let mut chunks: Vec<Result<Vec<T>, BatchError>> = Vec::new();
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let lo = w * chunk;
                    let hi = ((w + 1) * chunk).min(n);
                    scope.spawn(move || {
                        let mut part = Vec::with_capacity(hi - lo);
                        for i in lo..hi {
                            match run_element(f, i) {
                                Ok(v) => part.push(v),
                                Err(e) => return Err(e),
                            }
                        }
                        Ok(part)
                    })
                })
                .collect();
            for handle in handles {
                chunks.push(handle.join().expect("batch worker thread panicked"));
            }
        });

        let mut out = Vec::with_capacity(n);
        let mut first_err: Option<BatchError> = None;
        for part in chunks {
            match part {
                Ok(mut v) => out.append(&mut v),
                Err(e) => {
                    // lowest failing index wins, matching sequential order
                    if first_err.as_ref().map_or(true, |f| e.index < f.index) {
                        first_err = Some(e);
                    }
                }
            }
        }
        match first_err {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }
}

fn run_element<T, F>(f: &F, index: usize) -> Result<T, BatchError>
where
    F: Fn(usize) -> T,
{
    catch_unwind(AssertUnwindSafe(|| f(index))).map_err(|payload| BatchError {
        index,
        message: panic_text(payload),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_batch_is_empty() {
        let rt = Runtime::new(4);
        let out: Vec<u32> = rt.run_batch(0, |_| unreachable!("not called")).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn output_independent_of_worker_count() {
        let expected: Vec<u64> = (0..1000).map(|i| (i * i) as u64).collect();
        for workers in [1, 2, 4, 8] {
            let rt = Runtime::new(workers);
            let out = rt.run_batch(1000, |i| (i * i) as u64).unwrap();
            assert_eq!(out, expected, "workers={workers}");
        }
    }

    #[test]
    fn panic_becomes_error_with_lowest_index() {
        let rt = Runtime::new(4);
        let err = rt
            .run_batch(100, |i| {
                if i == 17 || i == 63 {
                    panic!("boom {i}");
                }
                i
            })
            .unwrap_err();
        assert_eq!(err.index, 17);
        assert!(err.message.contains("boom"));
    }

    #[test]
    fn counters_accumulate() {
        let rt = Runtime::new(2);
        rt.run_batch(10, |i| i).unwrap();
        rt.run_batch(5, |i| i).unwrap();
        let c = rt.counters();
        assert_eq!(c.batch_jobs, 2);
        assert_eq!(c.batch_elements, 15);
    }
}
