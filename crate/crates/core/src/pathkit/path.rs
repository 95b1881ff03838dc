use std::fmt;

use serde::{Deserialize, Serialize};

use super::grid::TimeGrid;
use crate::error::{config, contract, Result};

/// Role a path plays in an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProcessRole {
    Martingale,
    ZeroEnergy,
    Composite,
    Deterministic,
    Driver,
}

impl fmt::Display for ProcessRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ProcessRole::Martingale => "martingale",
            ProcessRole::ZeroEnergy => "zero-energy",
            ProcessRole::Composite => "composite",
            ProcessRole::Deterministic => "deterministic",
            ProcessRole::Driver => "driver",
        };
        f.write_str(s)
    }
}

/// One realization of a `dim`-dimensional process on the nodes of `[0, T]`.
///
/// Values are stored row-major, one row per node. Reads past `T` return
/// the terminal row; reads between nodes return the left node.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
    role: ProcessRole,
}

impl SamplePath {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>, role: ProcessRole) -> Result<Self> {
        if dim == 0 {
            return Err(config("path dimension must be >= 1"));
        }
        if values.len() != grid.n_nodes() * dim {
            return Err(contract(format!(
                "path has {} values, expected {} nodes x {dim}",
                values.len(),
                grid.n_nodes()
            )));
        }
        Ok(SamplePath {
            grid,
            dim,
            values,
            role,
        })
    }

    pub fn scalar(grid: TimeGrid, values: Vec<f64>, role: ProcessRole) -> Result<Self> {
        SamplePath::new(grid, 1, values, role)
    }

    /// Deterministic scalar path `t_k -> f(t_k)`.
    pub fn from_fn(grid: TimeGrid, role: ProcessRole, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.n_nodes()).map(|k| f(grid.time(k))).collect();
        SamplePath {
            grid,
            dim: 1,
            values,
            role,
        }
    }

    pub fn constant(grid: TimeGrid, value: f64, role: ProcessRole) -> Self {
        SamplePath::from_fn(grid, role, |_| value)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn role(&self) -> ProcessRole {
        self.role
    }

    pub fn with_role(mut self, role: ProcessRole) -> Self {
        self.role = role;
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn n_nodes(&self) -> usize {
        self.grid.n_nodes()
    }

    /// Scalar value at node `k`, constantly continued past `T`.
    #[inline]
    pub fn at(&self, k: usize) -> f64 {
        debug_assert_eq!(self.dim, 1, "scalar access on a vector path");
        self.values[k.min(self.grid.n_steps())]
    }

    /// Row of node `k`, constantly continued past `T`.
    #[inline]
    pub fn row(&self, k: usize) -> &[f64] {
        let k = k.min(self.grid.n_steps());
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// Terminal value (scalar paths).
    pub fn terminal(&self) -> f64 {
        self.at(self.grid.n_steps())
    }

    /// Value at an arbitrary time in `[0, T + margin]` under the
    /// left-constant rule.
    pub fn eval(&self, t: f64) -> Result<&[f64]> {
        let k = self.grid.floor_index(t)?;
        Ok(self.row(k))
    }

    /// Scalar component `j`.
    pub fn component(&self, j: usize) -> Result<SamplePath> {
        if j >= self.dim {
            return Err(contract(format!("component {j} of a {}-dimensional path", self.dim)));
        }
        let values = self.values.iter().skip(j).step_by(self.dim).copied().collect();
        Ok(SamplePath {
            grid: self.grid,
            dim: 1,
            values,
            role: self.role,
        })
    }

    pub fn require_scalar(&self, what: &str) -> Result<()> {
        if self.dim != 1 {
            return Err(contract(format!("{what} must be one-dimensional, got d = {}", self.dim)));
        }
        Ok(())
    }

    /// Both paths must live on the same grid.
    pub fn require_same_grid(&self, other: &SamplePath, what: &str) -> Result<()> {
        if self.grid.horizon() != other.grid.horizon() || self.grid.n_steps() != other.grid.n_steps()
        {
            return Err(contract(format!("{what}: paths live on different grids")));
        }
        Ok(())
    }

    /// Nodewise sum.
    pub fn add(&self, other: &SamplePath, role: ProcessRole) -> Result<SamplePath> {
        self.require_same_grid(other, "path sum")?;
        if self.dim != other.dim {
            return Err(contract("path sum: dimensions differ"));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(SamplePath {
            grid: self.grid,
            dim: self.dim,
            values,
            role,
        })
    }

    /// Scalar path built by applying `f` to every node.
    pub fn map(&self, role: ProcessRole, f: impl Fn(usize, &[f64]) -> f64) -> SamplePath {
        let values = (0..self.n_nodes()).map(|k| f(k, self.row(k))).collect();
        SamplePath {
            grid: self.grid,
            dim: 1,
            values,
            role,
        }
    }

    /// Driver history up to and including node `k` (clamped to `T`).
    pub fn view(&self, k: usize) -> DriverView<'_> {
        let node = k.min(self.grid.n_steps());
        DriverView {
            grid: &self.grid,
            dim: self.dim,
            node,
            history: &self.values[..(node + 1) * self.dim],
        }
    }

    pub(crate) fn replace_grid(mut self, grid: TimeGrid) -> Self {
        self.grid = grid;
        self
    }
}

/// Read-only view of a driver path restricted to `[0, t_k]`.
///
/// Random fields receive this view instead of the whole path, so no field
/// can look into the future of the filtration it is adapted to.
#[derive(Debug, Clone, Copy)]
pub struct DriverView<'a> {
    grid: &'a TimeGrid,
    dim: usize,
    node: usize,
    history: &'a [f64],
}

impl<'a> DriverView<'a> {
    pub fn node(&self) -> usize {
        self.node
    }

    pub fn time(&self) -> f64 {
        self.grid.time(self.node)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Current value of component `j`.
    #[inline]
    pub fn current(&self, j: usize) -> f64 {
        self.history[self.node * self.dim + j]
    }

    /// Current row.
    pub fn current_row(&self) -> &'a [f64] {
        &self.history[self.node * self.dim..]
    }

    /// Value of component `j` at past node `i`; `None` when `i` lies after
    /// the current node.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        if i > self.node || j >= self.dim {
            return None;
        }
        Some(self.history[i * self.dim + j])
    }

    /// The whole visible history, row-major.
    pub fn history(&self) -> &'a [f64] {
        self.history
    }
}

/// Same path with a continuation margin of `eps_max`.
///
/// Values on `[0, T]` are untouched; evaluation on `(T, T + eps_max]`
/// returns the terminal value.
pub fn extend_constant(path: &SamplePath, eps_max: f64) -> Result<SamplePath> {
    let grid = path.grid().with_margin(eps_max)?;
    Ok(path.clone().replace_grid(grid))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TimeGrid {
        TimeGrid::new(1.0, 4, 0.0).unwrap()
    }

    #[test]
    fn value_count_is_checked() {
        assert!(SamplePath::scalar(grid(), vec![0.0; 4], ProcessRole::Driver).is_err());
        assert!(SamplePath::scalar(grid(), vec![0.0; 5], ProcessRole::Driver).is_ok());
        assert!(SamplePath::new(grid(), 2, vec![0.0; 10], ProcessRole::Driver).is_ok());
        assert!(SamplePath::new(grid(), 0, vec![], ProcessRole::Driver).is_err());
    }

    #[test]
    fn extension_is_constant() {
        let p = SamplePath::scalar(grid(), vec![0.0, 1.0, 2.0, 3.0, 3.5], ProcessRole::Composite)
            .unwrap();
        assert!(p.eval(1.25).is_err());
        let e = extend_constant(&p, 0.5).unwrap();
        assert_eq!(e.eval(1.25).unwrap(), &[3.5]);
        assert_eq!(e.eval(1.5).unwrap(), &[3.5]);
        assert_eq!(e.values(), p.values());
        assert_eq!(e.at(6), 3.5);
        let same = extend_constant(&p, 0.0).unwrap();
        assert_eq!(same, p);
        assert!(extend_constant(&p, 0.3).is_err());
    }

    #[test]
    fn left_constant_between_nodes() {
        let p = SamplePath::from_fn(grid(), ProcessRole::Deterministic, |t| t * t);
        assert_eq!(p.eval(0.3).unwrap()[0], 0.0625);
        assert_eq!(p.eval(0.49).unwrap()[0], 0.0625);
        assert_eq!(p.eval(0.5).unwrap()[0], 0.25);
    }

    #[test]
    fn view_hides_the_future() {
        let p = SamplePath::from_fn(grid(), ProcessRole::Driver, |t| t);
        let v = p.view(2);
        assert_eq!(v.current(0), 0.5);
        assert_eq!(v.get(1, 0), Some(0.25));
        assert_eq!(v.get(3, 0), None);
        assert_eq!(v.history().len(), 3);
        assert_eq!(p.view(99).node(), 4);
    }

    #[test]
    fn components_split_rows() {
        let g = grid();
        let vals: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let p = SamplePath::new(g, 2, vals, ProcessRole::Driver).unwrap();
        assert_eq!(p.component(1).unwrap().values(), &[1.0, 3.0, 5.0, 7.0, 9.0]);
        assert!(p.component(2).is_err());
        assert_eq!(p.row(9), &[8.0, 9.0]);
    }
}
