//! Reusable staging buffers.
//!
//! Parallel stages repack keyframe content into flat buffers before each
//! job. A [`StagingBuffer`] is allocated once per shape and reused for
//! every subsequent staging of that shape; the counters make the
//! steady-state zero-allocation property observable in run reports.

use std::collections::BTreeMap;

#[derive(Debug, Default)]
pub struct StagingBuffer {
    buf: Vec<u8>,
    allocations: u64,
    reuses: u64,
    high_water: usize,
}

impl StagingBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Pack `payload` contiguously, growing at most once per capacity
    /// increase, and return the staged view.
    pub fn stage(&mut self, payload: &[u8]) -> &[u8] {
        if payload.len() > self.buf.capacity() {
            self.buf.reserve(payload.len() - self.buf.len());
            self.allocations += 1;
        } else {
            self.reuses += 1;
        }
        self.buf.clear();
        self.buf.extend_from_slice(payload);
        self.high_water = self.high_water.max(payload.len());
        &self.buf
    }

    /// Stage via a writer callback instead of a pre-built slice; the
    /// buffer contents are fully overwritten before being read.
    pub fn stage_with(&mut self, expected_len: usize, write: impl FnOnce(&mut Vec<u8>)) -> &[u8] {
        if expected_len > self.buf.capacity() {
            self.buf.reserve(expected_len - self.buf.len());
            self.allocations += 1;
        } else {
            self.reuses += 1;
        }
        self.buf.clear();
        write(&mut self.buf);
        self.high_water = self.high_water.max(self.buf.len());
        &self.buf
    }

    pub fn capacity(&self) -> usize {
        self.buf.capacity()
    }

    pub fn allocations(&self) -> u64 {
        self.allocations
    }

    pub fn reuses(&self) -> u64 {
        self.reuses
    }

    pub fn high_water(&self) -> usize {
        self.high_water
    }
}

/// Buffers keyed by stage shape. Each distinct shape allocates once; later
/// stagings of the same shape reuse the buffer.
#[derive(Debug, Default)]
pub struct BufferPool {
    buffers: BTreeMap<String, StagingBuffer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StagingCounters {
    pub allocations: u64,
    pub reuses: u64,
    pub distinct_shapes: u64,
}

impl BufferPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn buffer(&mut self, shape: &str) -> &mut StagingBuffer {
        self.buffers.entry(shape.to_string()).or_default()
    }

    pub fn counters(&self) -> StagingCounters {
        let mut c = StagingCounters {
            allocations: 0,
            reuses: 0,
            distinct_shapes: self.buffers.len() as u64,
        };
        for b in self.buffers.values() {
            c.allocations += b.allocations();
            c.reuses += b.reuses();
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_shape_allocates_once() {
        let mut buf = StagingBuffer::new();
        buf.stage(&[1, 2, 3, 4]);
        buf.stage(&[5, 6, 7, 8]);
        buf.stage(&[9, 9, 9, 9]);
        assert_eq!(buf.allocations(), 1);
        assert_eq!(buf.reuses(), 2);
    }

    #[test]
    fn staged_view_equals_source() {
        let mut buf = StagingBuffer::new();
        let payload: Vec<u8> = (0..=255).collect();
        assert_eq!(buf.stage(&payload), payload.as_slice());
        let smaller = [7u8; 16];
        assert_eq!(buf.stage(&smaller), smaller.as_slice());
    }

    #[test]
    fn pool_counts_distinct_shapes() {
        let mut pool = BufferPool::new();
        pool.buffer("projection").stage(&[0; 64]);
        pool.buffer("projection").stage(&[1; 64]);
        pool.buffer("fusion").stage(&[2; 128]);
        let c = pool.counters();
        assert_eq!(c.distinct_shapes, 2);
        assert_eq!(c.allocations, 2);
        assert_eq!(c.reuses, 1);
    }
}
