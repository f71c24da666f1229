//! Explicit accounting of solver-side buffers.
//!
//! Every buffer the optimizer allocates on top of the input tensor and the
//! bases is charged here: batch and augmented copies, coefficient matrices,
//! MTTKRP scratch and outputs, Gram matrices. This replaces allocator hooks so
//! the numbers are deterministic and independent of the thread count.

#[derive(Debug, Clone, Default)]
pub struct AuxMeter {
    current: usize,
    peak: usize,
}

pub(crate) const F64: usize = std::mem::size_of::<f64>();

impl AuxMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn hold(&mut self, bytes: usize) {
        self.current += bytes;
        self.peak = self.peak.max(self.current);
    }

    pub fn release(&mut self, bytes: usize) {
        debug_assert!(bytes <= self.current, "releasing more than held");
        self.current = self.current.saturating_sub(bytes);
    }

    /// A buffer that lives only inside one call.
    pub fn touch(&mut self, bytes: usize) {
        self.peak = self.peak.max(self.current + bytes);
    }

    pub fn current(&self) -> usize {
        self.current
    }

    pub fn peak(&self) -> usize {
        self.peak
    }

    pub fn reset_peak(&mut self) {
        self.peak = self.current;
    }
}

pub(crate) fn matrix_bytes(rows: usize, cols: usize) -> usize {
    rows * cols * F64
}
