//! Discrete time grid `0 = t_0 < t_1 < ... < t_N = T`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    t: Vec<f64>,
    dt: Vec<f64>,
}

impl TimeGrid {
    /// Uniform partition of `[0, final_time]` into `steps` intervals.
    pub fn uniform(final_time: f64, steps: usize) -> Result<Self> {
        if !(final_time.is_finite() && final_time > 0.0) {
            return Err(Error::InvalidArgument(format!("final time must be positive, got {final_time}")));
        }
        if steps == 0 {
            return Err(Error::InvalidArgument("number of steps must be at least 1".into()));
        }
        let h = final_time / steps as f64;
        let mut t: Vec<f64> = (0..=steps).map(|i| i as f64 * h).collect();
        t[steps] = final_time;
        let dt = t.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self { t, dt })
    }

    /// Grid from explicit times; they must start at zero and increase strictly.
    pub fn from_times(t: Vec<f64>) -> Result<Self> {
        if t.len() < 2 || t[0] != 0.0 {
            return Err(Error::InvalidArgument("time grid needs t_0 = 0 and at least one step".into()));
        }
        if t.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::InvalidArgument("times must increase strictly".into()));
        }
        let dt = t.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self { t, dt })
    }

    pub fn steps(&self) -> usize {
        self.dt.len()
    }

    pub fn final_time(&self) -> f64 {
        self.t[self.t.len() - 1]
    }

    /// All `N + 1` times, starting with `t_0 = 0`.
    pub fn times(&self) -> &[f64] {
        &self.t
    }

    /// Step sizes `dt_i = t_i - t_{i-1}` for `i = 1..N` (stored zero-based).
    pub fn step_sizes(&self) -> &[f64] {
        &self.dt
    }

    /// Step size of the 1-based step `i`.
    pub fn dt(&self, i: usize) -> f64 {
        self.dt[i - 1]
    }

    /// Time `t_i`, `i = 0..=N`.
    pub fn time(&self, i: usize) -> f64 {
        self.t[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hundred_steps_of_one_hundredth() {
        let g = TimeGrid::uniform(1.0, 100).unwrap();
        assert_eq!(g.steps(), 100);
        for &h in g.step_sizes() {
            assert!((h - 0.01).abs() < 1e-15);
        }
        assert_eq!(g.final_time(), 1.0);
    }

    #[test]
    fn single_step() {
        let g = TimeGrid::uniform(1.0, 1).unwrap();
        assert_eq!(g.times(), &[0.0, 1.0]);
        assert_eq!(g.step_sizes(), &[1.0]);
    }

    #[test]
    fn uniform_partition() {
        let g = TimeGrid::uniform(2.5, 5).unwrap();
        let expected = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5];
        for (a, b) in g.times().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(TimeGrid::uniform(0.0, 10).is_err());
        assert!(TimeGrid::uniform(-1.0, 10).is_err());
        assert!(TimeGrid::uniform(1.0, 0).is_err());
        assert!(TimeGrid::uniform(f64::NAN, 3).is_err());
        assert!(TimeGrid::from_times(vec![0.0, 0.5, 0.5]).is_err());
    }

    #[test]
    fn steps_sum_to_final_time() {
        for n in [1, 3, 7, 100, 1023] {
            let g = TimeGrid::uniform(20.0, n).unwrap();
            let sum: f64 = g.step_sizes().iter().sum();
            assert!((sum - 20.0).abs() <= 1e-12 * 20.0);
            assert_eq!(g.time(n), 20.0);
            assert!(g.times().windows(2).all(|w| w[0] < w[1]));
        }
    }
}
