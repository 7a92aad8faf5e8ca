use serde::{Deserialize, Serialize};

/// Log-linear decay from `init` to `final_` over `max_steps`, constant after.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpSchedule {
    pub init: f64,
    pub final_: f64,
    pub max_steps: usize,
}

impl ExpSchedule {
    pub fn new(init: f64, final_: f64, max_steps: usize) -> Self {
        Self {
            init,
            final_,
            max_steps,
        }
    }

    pub fn at(&self, step: usize) -> f64 {
        if self.max_steps == 0 {
            return self.final_;
        }
        let t = (step as f64 / self.max_steps as f64).clamp(0.0, 1.0);
        (self.init.ln() * (1.0 - t) + self.final_.ln() * t).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn endpoints_and_midpoint() {
        let s = ExpSchedule::new(1.6e-4, 1.6e-6, 30_000);
        assert!((s.at(0) - 1.6e-4).abs() < 1e-18);
        assert!((s.at(30_000) - 1.6e-6).abs() < 1e-18);
        assert!((s.at(90_000) - 1.6e-6).abs() < 1e-18);
        // Geometric mean halfway.
        assert!((s.at(15_000) - 1.6e-5).abs() < 1e-17);
    }

    proptest! {
        #[test]
        fn monotone_between_endpoints(a in 0usize..1000, b in 0usize..1000) {
            let s = ExpSchedule::new(1e-2, 1e-5, 700);
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(s.at(lo) >= s.at(hi));
            prop_assert!(s.at(hi) >= 1e-5 * (1.0 - 1e-12));
        }
    }
}
