//! Scratch-space accounting for the sweep kernels.
//!
//! The matrix-vector and gradient sweeps promise to run in memory
//! proportional to `rank * max(rows, cols) * batch` rather than the dense
//! operator size. That promise is kept testable by counting every scratch
//! buffer the kernels allocate, in f64 elements. A deterministic counter
//! beats sampling the process RSS: it cannot flake and it ignores the
//! allocator's own behavior.

/// Running and peak count of live scratch f64 elements.
#[derive(Debug, Default, Clone, Copy)]
pub struct AllocMeter {
    current: usize,
    peak: usize,
}

impl AllocMeter {
    pub fn new() -> Self {
        AllocMeter::default()
    }

    pub fn alloc(&mut self, elems: usize) {
        self.current += elems;
        self.peak = self.peak.max(self.current);
    }

    pub fn free(&mut self, elems: usize) {
        debug_assert!(elems <= self.current, "freeing more than allocated");
        self.current = self.current.saturating_sub(elems);
    }

    /// High-water mark in f64 elements.
    pub fn peak(&self) -> usize {
        self.peak
    }

    pub fn current(&self) -> usize {
        self.current
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_tracks_high_water_mark() {
        let mut m = AllocMeter::new();
        m.alloc(100);
        m.alloc(50);
        m.free(120);
        m.alloc(10);
        assert_eq!(m.current(), 40);
        assert_eq!(m.peak(), 150);
    }
}
