use crate::error::{Error, Result};

/// Uniform grid on `[0, T]` whose step divides the delay exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    delay: f64,
    steps: usize,
    dt: f64,
    delay_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, delay: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Grid(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::Grid("number of steps must be at least 1".into()));
        }
        if !(delay.is_finite() && delay > 0.0 && delay < horizon) {
            return Err(Error::Grid(format!(
                "delay must satisfy 0 < h < T, got h = {delay}, T = {horizon}"
            )));
        }
        let dt = horizon / steps as f64;
        let ratio = delay / dt;
        let m = ratio.round();
        if m < 1.0 || (ratio - m).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::DelayNotAligned { h: delay, dt });
        }
        Ok(Self {
            horizon,
            delay,
            steps,
            dt,
            delay_steps: m as usize,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    /// Number of cells `N`; nodes are `0..=N`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `m` with `h = m * dt`.
    pub fn delay_steps(&self) -> usize {
        self.delay_steps
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            i as f64 * self.dt
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |i| self.node(i))
    }

    /// Index of the node at time `t`, if `t` lies on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t / self.dt;
        let i = x.round();
        if i < 0.0 || i > self.steps as f64 || (x - i).abs() > 1e-9 * x.abs().max(1.0) {
            None
        } else {
            Some(i as usize)
        }
    }

    pub fn with_steps(&self, steps: usize) -> Result<Self> {
        Self::new(self.horizon, self.delay, steps)
    }
}
