//! Concurrent task pairs over shared immutable input.

use std::panic::{catch_unwind, AssertUnwindSafe};

use super::Runtime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairSide {
    A,
    B,
}

impl std::fmt::Display for PairSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PairSide::A => write!(f, "a"),
            PairSide::B => write!(f, "b"),
        }
    }
}

/// One side of a task pair panicked. The other side's output slot is
/// discarded but was written independently.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("task {side} of pair failed: {message}")]
pub struct PairError {
    pub side: PairSide,
    pub message: String,
}

impl Runtime {
    /// Run two independent closures and return both outputs.
    ///
    /// With more than one worker the tasks run concurrently; with one
    /// worker they run back to back. Either way the outputs are the pure
    /// values of `a` and `b`, so the schedules are indistinguishable. If a
    /// task panics the error names the failing side; when both fail, side
    /// `a` is reported (matching the sequential order).
    pub fn run_pair<A, B, FA, FB>(&self, a: FA, b: FB) -> Result<(A, B), PairError>
    where
        A: Send,
        B: Send,
        FA: FnOnce() -> A + Send,
        FB: FnOnce() -> B + Send,
    {
        self.note_pair();
        let (ra, rb) = if self.workers() == 1 {
            (
                catch_unwind(AssertUnwindSafe(a)),
                catch_unwind(AssertUnwindSafe(b)),
            )
        } else {
            std::thread::scope(|scope| {
                let hb = scope.spawn(|| catch_unwind(AssertUnwindSafe(b)));
                let ra = catch_unwind(AssertUnwindSafe(a));
                let rb = hb.join().expect("pair worker thread panicked");
                (ra, rb)
            })
        };
        match (ra, rb) {
            (Ok(a), Ok(b)) => Ok((a, b)),
            (Err(p), _) => Err(PairError {
                side: PairSide::A,
                message: super::batch::panic_text(p),
            }),
            (_, Err(p)) => Err(PairError {
                side: PairSide::B,
                message: super::batch::panic_text(p),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_come_back_in_their_slots() {
        let rt = Runtime::new(4);
        let (a, b) = rt.run_pair(|| 41, || "forty-two").unwrap();
        assert_eq!(a, 41);
        assert_eq!(b, "forty-two");
    }

    #[test]
    fn failure_names_the_side() {
        let rt = Runtime::new(4);
        let err = rt
            .run_pair(|| panic!("a side died"), || 7)
            .unwrap_err();
        assert_eq!(err.side, PairSide::A);
        assert!(err.message.contains("a side died"));

        let err = rt
            .run_pair(|| 7, || -> u32 { panic!("b side died") })
            .unwrap_err();
        assert_eq!(err.side, PairSide::B);
    }

    #[test]
    fn sequential_and_concurrent_agree() {
        let work = |x: u64| (0..x).map(|i| i.wrapping_mul(2654435761)).sum::<u64>();
        let seq = Runtime::new(1).run_pair(|| work(10_000), || work(20_000)).unwrap();
        let con = Runtime::new(4).run_pair(|| work(10_000), || work(20_000)).unwrap();
        assert_eq!(seq, con);
    }
}
