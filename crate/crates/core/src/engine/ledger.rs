/// Feature-extraction FLOPs of one episode, step by step.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlopsLedger {
    per_step: Vec<(usize, u64)>,
    frame_count: usize,
}

impl FlopsLedger {
    pub fn new(frame_count: usize) -> Self {
        FlopsLedger {
            per_step: Vec::new(),
            frame_count,
        }
    }

    pub fn record(&mut self, step: usize, flops: u64) {
        self.per_step.push((step, flops));
    }

    pub fn per_step(&self) -> &[(usize, u64)] {
        &self.per_step
    }

    pub fn steps(&self) -> usize {
        self.per_step.len()
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn total(&self) -> u64 {
        self.per_step.iter().map(|(_, f)| f).sum()
    }

    /// Exact `(numerator, denominator)` of FLOPs per frame.
    pub fn per_frame_ratio(&self) -> (u64, u64) {
        (self.total(), self.frame_count as u64)
    }

    pub fn per_frame(&self) -> f64 {
        if self.frame_count == 0 {
            return 0.0;
        }
        self.total() as f64 / self.frame_count as f64
    }

    pub fn mean_per_step(&self) -> f64 {
        if self.per_step.is_empty() {
            return 0.0;
        }
        self.total() as f64 / self.per_step.len() as f64
    }
}
