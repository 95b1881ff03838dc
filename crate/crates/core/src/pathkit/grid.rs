use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

/// Below this many steps per regularization window the ε-integrals are
/// dominated by quadrature error.
pub const MIN_STEPS_PER_EPSILON: usize = 8;

const ALIGN_TOL: f64 = 1e-9;

/// Uniform grid on `[0, T]` plus a continuation margin `(T, T + margin]`.
///
/// Node `k` sits at `k * T / n_steps`, so the last node of `[0, T]` is `T`
/// up to one rounding. Continuation nodes `n_steps + 1 ..= n_steps +
/// margin_steps` carry no data of their own: paths are constant there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
    dt: f64,
    margin_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize, margin: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(config(format!("horizon must be finite and > 0, got {horizon}")));
        }
        if n_steps == 0 {
            return Err(config("n_steps must be positive"));
        }
        let dt = horizon / n_steps as f64;
        if !(dt > 0.0) {
            return Err(config("time step underflows to zero"));
        }
        let mut grid = TimeGrid {
            horizon,
            n_steps,
            dt,
            margin_steps: 0,
        };
        if !(margin.is_finite() && margin >= 0.0) {
            return Err(config(format!("continuation margin must be >= 0, got {margin}")));
        }
        grid.margin_steps = grid.steps_of(margin, "continuation margin")?;
        Ok(grid)
    }

    /// Same grid with a different continuation margin.
    pub fn with_margin(&self, margin: f64) -> Result<Self> {
        TimeGrid::new(self.horizon, self.n_steps, margin)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of data-carrying nodes, `n_steps + 1`.
    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn margin_steps(&self) -> usize {
        self.margin_steps
    }

    pub fn margin(&self) -> f64 {
        self.time(self.n_steps + self.margin_steps) - self.horizon
    }

    /// Time of node `k`; valid for continuation nodes as well.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            return self.horizon;
        }
        k as f64 * self.horizon / self.n_steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|k| self.time(k)).collect()
    }

    /// Converts a non-negative duration into a whole number of steps.
    pub fn steps_of(&self, duration: f64, what: &str) -> Result<usize> {
        if !(duration.is_finite() && duration >= 0.0) {
            return Err(config(format!("{what} must be finite and >= 0, got {duration}")));
        }
        let ratio = duration / self.dt;
        let k = ratio.round();
        if (ratio - k).abs() > ALIGN_TOL * ratio.max(1.0) {
            return Err(config(format!(
                "{what} = {duration} is not an integer multiple of dt = {}",
                self.dt
            )));
        }
        Ok(k as usize)
    }

    /// Validates a regularization width and returns it in steps.
    ///
    /// ε must be positive, a multiple of dt and no larger than the
    /// continuation margin. Widths under eight steps are accepted with a
    /// warning.
    pub fn epsilon_steps(&self, eps: f64) -> Result<usize> {
        if !(eps > 0.0) {
            return Err(config(format!("epsilon must be > 0, got {eps}")));
        }
        let steps = self.steps_of(eps, "epsilon")?;
        if steps > self.margin_steps {
            return Err(config(format!(
                "epsilon = {eps} exceeds the continuation margin {}",
                self.margin()
            )));
        }
        if steps < MIN_STEPS_PER_EPSILON {
            log::warn!(
                "epsilon = {eps} spans only {steps} steps; the regularization limit is not resolved"
            );
        }
        Ok(steps)
    }

    /// Index of a node-aligned time in `[0, T]`.
    pub fn node_index(&self, t: f64) -> Result<usize> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(config(format!("time must be finite and >= 0, got {t}")));
        }
        let k = self.steps_of(t, "time")?;
        if k > self.n_steps {
            return Err(config(format!("time {t} lies beyond the horizon {}", self.horizon)));
        }
        Ok(k)
    }

    /// Last node at or before `t` (left-constant rule); `t` may lie in the
    /// continuation margin, in which case the index is clamped to `n_steps`.
    pub fn floor_index(&self, t: f64) -> Result<usize> {
        let limit = self.horizon + self.margin() * (1.0 + ALIGN_TOL);
        if !(t.is_finite() && t >= 0.0 && t <= limit) {
            return Err(config(format!(
                "time {t} is outside [0, {}]",
                self.horizon + self.margin()
            )));
        }
        let ratio = t / self.dt;
        let nearest = ratio.round();
        let k = if (ratio - nearest).abs() <= ALIGN_TOL * ratio.max(1.0) {
            nearest
        } else {
            ratio.floor()
        };
        Ok((k as usize).min(self.n_steps))
    }
}
