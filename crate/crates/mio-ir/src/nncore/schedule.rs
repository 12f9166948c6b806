use serde::{Deserialize, Serialize};

/// Cosine annealing from `eta_max` at the start of a period down to
/// `eta_min` at its end. With `restart` set the schedule begins a new
/// period right after each boundary; the boundary iteration itself reports
/// `eta_min` so the decay endpoints are exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineSchedule {
    pub eta_max: f64,
    pub eta_min: f64,
    pub period: u64,
    pub restart: bool,
}

impl CosineSchedule {
    pub fn new(eta_max: f64, eta_min: f64, period: u64, restart: bool) -> Self {
        assert!(period >= 1, "period must be >= 1");
        CosineSchedule { eta_max, eta_min, period, restart }
    }

    pub fn lr_at(&self, iter: u64) -> f64 {
        let phase = if self.restart {
            if iter == 0 {
                0
            } else {
                (iter - 1) % self.period + 1
            }
        } else {
            iter.min(self.period)
        };
        let cos = (std::f64::consts::PI * phase as f64 / self.period as f64).cos();
        self.eta_min + 0.5 * (self.eta_max - self.eta_min) * (1.0 + cos)
    }
}
