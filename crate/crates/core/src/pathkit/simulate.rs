use rand_distr::{Distribution, StandardNormal};

use super::grid::TimeGrid;
use super::path::{ProcessRole, SamplePath};
use crate::error::{config, contract, Error, Result};
use crate::rng::path_rng;

/// `d`-dimensional Brownian motion started at 0.
///
/// Increments are `sqrt(dt) * Z` with `Z` standard normal, drawn row by row
/// from the ChaCha stream of `seed` (see [`crate::rng`]).
pub fn simulate_brownian(grid: &TimeGrid, seed: u64, d: usize) -> Result<SamplePath> {
    if d == 0 {
        return Err(config("Brownian dimension must be >= 1"));
    }
    let mut rng = path_rng(seed);
    let sd = grid.dt().sqrt();
    let n = grid.n_nodes();
    let mut values = vec![0.0; n * d];
    for k in 1..n {
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            values[k * d + j] = values[(k - 1) * d + j] + sd * z;
        }
    }
    SamplePath::new(*grid, d, values, ProcessRole::Driver)
}

/// Euler-Maruyama realization of `dX = mu(t, X) dt + sigma(t, X) dW`.
///
/// `drift` fills a `d`-vector, `diffusion` a `d x m` matrix (row-major)
/// where `m` is the driver dimension. All noise comes from `driver`.
pub fn simulate_ito_process(
    grid: &TimeGrid,
    drift: &dyn Fn(f64, &[f64], &mut [f64]),
    diffusion: &dyn Fn(f64, &[f64], &mut [f64]),
    x0: &[f64],
    driver: &SamplePath,
) -> Result<SamplePath> {
    let d = x0.len();
    if d == 0 {
        return Err(config("initial value must have dimension >= 1"));
    }
    if driver.grid().n_steps() != grid.n_steps() || driver.grid().horizon() != grid.horizon() {
        return Err(contract("driver lives on a different grid"));
    }
    let m = driver.dim();
    let dt = grid.dt();
    let n = grid.n_nodes();
    let mut values = Vec::with_capacity(n * d);
    values.extend_from_slice(x0);
    let mut mu = vec![0.0; d];
    let mut sigma = vec![0.0; d * m];
    let mut dw = vec![0.0; m];
    for k in 0..n - 1 {
        let t = grid.time(k);
        let x = &values[k * d..(k + 1) * d];
        drift(t, x, &mut mu);
        diffusion(t, x, &mut sigma);
        if let Some(bad) = mu.iter().chain(&sigma).find(|v| !v.is_finite()) {
            return Err(Error::Simulation {
                node: k,
                time: t,
                message: format!("coefficient evaluated to {bad}"),
            });
        }
        let (w0, w1) = (driver.row(k), driver.row(k + 1));
        for j in 0..m {
            dw[j] = w1[j] - w0[j];
        }
        for i in 0..d {
            let noise: f64 = (0..m).map(|j| sigma[i * m + j] * dw[j]).sum();
            let next = values[k * d + i] + mu[i] * dt + noise;
            values.push(next);
        }
    }
    SamplePath::new(*grid, d, values, ProcessRole::Composite)
}

/// Scalar convenience wrapper around [`simulate_ito_process`].
pub fn simulate_scalar_ito(
    grid: &TimeGrid,
    drift: impl Fn(f64, f64) -> f64,
    diffusion: impl Fn(f64, f64) -> f64,
    x0: f64,
    driver: &SamplePath,
) -> Result<SamplePath> {
    driver.require_scalar("driver")?;
    simulate_ito_process(
        grid,
        &|t, x, out| out[0] = drift(t, x[0]),
        &|t, x, out| out[0] = diffusion(t, x[0]),
        &[x0],
        driver,
    )
}
