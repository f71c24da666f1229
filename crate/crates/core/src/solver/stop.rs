/// Fires once the relative change of the sweep loss has stayed below `tol`
/// for `window` consecutive sweeps. `tol = 0` never fires.
#[derive(Debug, Clone)]
pub struct StopRule {
    tol: f64,
    window: usize,
    last: Option<f64>,
    flat: usize,
}

impl StopRule {
    pub fn new(tol: f64, window: usize) -> Self {
        Self {
            tol,
            window: window.max(1),
            last: None,
            flat: 0,
        }
    }

    /// Relative change between consecutive losses.
    pub fn relative_change(prev: f64, cur: f64) -> f64 {
        let scale = prev.abs().max(f64::MIN_POSITIVE);
        (cur - prev).abs() / scale
    }

    /// Records one sweep loss and reports whether the rule fires now.
    pub fn observe(&mut self, loss: f64) -> bool {
        if let Some(prev) = self.last {
            if Self::relative_change(prev, loss) < self.tol {
                self.flat += 1;
            } else {
                self.flat = 0;
            }
        }
        self.last = Some(loss);
        self.flat >= self.window
    }

    pub fn flat_streak(&self) -> usize {
        self.flat
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn first_fire(trace: &[f64]) -> Option<usize> {
        let mut rule = StopRule::new(1e-3, 3);
        trace.iter().position(|&l| rule.observe(l))
    }

    #[test]
    fn fires_after_three_flat_sweeps() {
        // changes: 50%, 0.05%, 0.05%, 0.05%
        let trace = [2.0, 1.0, 0.9995, 0.999, 0.9985];
        assert_eq!(first_fire(&trace), Some(4));
    }

    #[test]
    fn a_single_jump_resets_the_streak() {
        let trace = [1.0, 0.9999, 0.9998, 0.9, 0.8999, 0.8998, 0.8997];
        assert_eq!(first_fire(&trace), Some(6));
    }

    #[test]
    fn change_at_threshold_is_not_flat() {
        let trace = [1.0, 0.999, 0.998001, 0.997003];
        assert_eq!(first_fire(&trace), None);
    }

    #[test]
    fn zero_tolerance_never_fires() {
        let mut rule = StopRule::new(0.0, 3);
        assert!((0..20).all(|_| !rule.observe(1.0)));
    }
}
