use std::fmt;
use std::sync::Arc;

use super::grid::TimeGrid;
use super::path::{DriverView, ProcessRole, SamplePath};
use super::simulate::{simulate_brownian, simulate_scalar_ito};
use crate::error::{config, contract, Error, Result};

pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// Coefficient `(t, x) -> value`.
pub type CoefficientFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// Adapted functional of the driver history.
pub type PathFunctional = Arc<dyn Fn(&DriverView<'_>) -> f64 + Send + Sync>;

/// Finite-variation process with `A(0) = 0`.
#[derive(Clone)]
pub enum FiniteVariation {
    /// Closed form `A(t)`; must vanish at 0.
    Deterministic(TimeFn),
    /// `A(t) = int_0^t f(W|[0,s]) ds`, left-point quadrature.
    PathIntegral(PathFunctional),
}

/// Recipe for a zero-energy process that is not of finite variation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZeroEnergyRecipe {
    /// `A(t) = int_0^t (t - s)^(H - 1/2) dW_s` with `H` in `(1/2, 1)`,
    /// a Riemann-Liouville type convolution of the driver. Its zero
    /// covariation with martingales is only checked empirically.
    ConvolvedBrownian { hurst: f64 },
}

impl ZeroEnergyRecipe {
    /// Every shipped recipe is heuristic: nothing is proven about it here.
    pub fn is_heuristic(&self) -> bool {
        true
    }
}

/// Recipe for one scalar test process driven by a 1-d Brownian motion.
#[derive(Clone)]
pub enum ProcessSpec {
    BrownianMotion,
    /// Euler-Maruyama process; `drift: None` declares a local martingale.
    ItoProcess {
        drift: Option<CoefficientFn>,
        diffusion: CoefficientFn,
        x0: f64,
    },
    FiniteVariation(FiniteVariation),
    ZeroEnergyCandidate(ZeroEnergyRecipe),
    /// `X = M + A`.
    Composite(Box<ProcessSpec>, Box<ProcessSpec>),
}

impl fmt::Debug for ProcessSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProcessSpec::BrownianMotion => f.write_str("BrownianMotion"),
            ProcessSpec::ItoProcess { drift, x0, .. } => f
                .debug_struct("ItoProcess")
                .field("martingale", &drift.is_none())
                .field("x0", x0)
                .finish(),
            ProcessSpec::FiniteVariation(FiniteVariation::Deterministic(_)) => {
                f.write_str("FiniteVariation(Deterministic)")
            }
            ProcessSpec::FiniteVariation(FiniteVariation::PathIntegral(_)) => {
                f.write_str("FiniteVariation(PathIntegral)")
            }
            ProcessSpec::ZeroEnergyCandidate(r) => write!(f, "ZeroEnergyCandidate({r:?})"),
            ProcessSpec::Composite(m, a) => write!(f, "Composite({m:?}, {a:?})"),
        }
    }
}

impl ProcessSpec {
    pub fn martingale(diffusion: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, x0: f64) -> Self {
        ProcessSpec::ItoProcess {
            drift: None,
            diffusion: Arc::new(diffusion),
            x0,
        }
    }

    pub fn deterministic(a: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ProcessSpec::FiniteVariation(FiniteVariation::Deterministic(Arc::new(a)))
    }

    pub fn path_integral(f: impl Fn(&DriverView<'_>) -> f64 + Send + Sync + 'static) -> Self {
        ProcessSpec::FiniteVariation(FiniteVariation::PathIntegral(Arc::new(f)))
    }

    pub fn composite(m: ProcessSpec, a: ProcessSpec) -> Self {
        ProcessSpec::Composite(Box::new(m), Box::new(a))
    }

    /// Identically zero finite-variation part.
    pub fn zero() -> Self {
        ProcessSpec::deterministic(|_| 0.0)
    }

    fn is_martingale(&self) -> bool {
        matches!(
            self,
            ProcessSpec::BrownianMotion | ProcessSpec::ItoProcess { drift: None, .. }
        )
    }

    fn is_zero_energy(&self) -> bool {
        matches!(
            self,
            ProcessSpec::FiniteVariation(_) | ProcessSpec::ZeroEnergyCandidate(_)
        )
    }

    /// Realizes the process on the grid of `driver`.
    pub fn realize(&self, driver: &SamplePath) -> Result<SamplePath> {
        driver.require_scalar("driver")?;
        let grid = *driver.grid();
        match self {
            ProcessSpec::BrownianMotion => Ok(driver.clone().with_role(ProcessRole::Martingale)),
            ProcessSpec::ItoProcess {
                drift,
                diffusion,
                x0,
            } => {
                let sigma = diffusion.clone();
                let path = match drift {
                    Some(mu) => {
                        let mu = mu.clone();
                        simulate_scalar_ito(&grid, move |t, x| mu(t, x), move |t, x| sigma(t, x), *x0, driver)?
                    }
                    None => simulate_scalar_ito(&grid, |_, _| 0.0, move |t, x| sigma(t, x), *x0, driver)?,
                };
                let role = if drift.is_none() {
                    ProcessRole::Martingale
                } else {
                    ProcessRole::Composite
                };
                Ok(path.with_role(role))
            }
            ProcessSpec::FiniteVariation(FiniteVariation::Deterministic(a)) => {
                Ok(SamplePath::from_fn(grid, ProcessRole::ZeroEnergy, |t| a(t)))
            }
            ProcessSpec::FiniteVariation(FiniteVariation::PathIntegral(f)) => {
                let dt = grid.dt();
                let mut values = Vec::with_capacity(grid.n_nodes());
                values.push(0.0);
                for k in 0..grid.n_steps() {
                    let v = f(&driver.view(k));
                    if !v.is_finite() {
                        return Err(Error::Simulation {
                            node: k,
                            time: grid.time(k),
                            message: format!("finite-variation integrand evaluated to {v}"),
                        });
                    }
                    values.push(values[k] + v * dt);
                }
                SamplePath::scalar(grid, values, ProcessRole::ZeroEnergy)
            }
            ProcessSpec::ZeroEnergyCandidate(ZeroEnergyRecipe::ConvolvedBrownian { hurst }) => {
                convolved_brownian(driver, *hurst)
            }
            ProcessSpec::Composite(m, a) => {
                let m = m.realize(driver)?;
                let a = a.realize(driver)?;
                m.add(&a, ProcessRole::Composite)
            }
        }
    }
}

fn convolved_brownian(driver: &SamplePath, hurst: f64) -> Result<SamplePath> {
    if !(hurst > 0.5 && hurst < 1.0) {
        return Err(config(format!("convolution exponent needs H in (1/2, 1), got {hurst}")));
    }
    let grid = *driver.grid();
    let n = grid.n_nodes();
    let p = hurst - 0.5;
    let kernel: Vec<f64> = (0..n).map(|m| (m as f64 * grid.dt()).powf(p)).collect();
    let dw: Vec<f64> = (0..n - 1).map(|j| driver.at(j + 1) - driver.at(j)).collect();
    let values = (0..n)
        .map(|k| (0..k).map(|j| kernel[k - j] * dw[j]).sum())
        .collect();
    SamplePath::scalar(grid, values, ProcessRole::ZeroEnergy)
}

/// Realization of a weak Dirichlet process `X = M + A` together with its
/// parts and the Brownian driver that generates the filtration.
#[derive(Debug, Clone)]
pub struct WeakDirichletPaths {
    pub x: SamplePath,
    pub m: SamplePath,
    pub a: SamplePath,
    pub driver: SamplePath,
}

/// Builds `X = M + A` on `grid` from a fresh driver drawn with `seed`.
pub fn build_weak_dirichlet(
    grid: &TimeGrid,
    m_spec: &ProcessSpec,
    a_spec: &ProcessSpec,
    seed: u64,
) -> Result<WeakDirichletPaths> {
    let driver = simulate_brownian(grid, seed, 1)?;
    build_on_driver(m_spec, a_spec, driver)
}

/// As [`build_weak_dirichlet`] with a given driver.
pub fn build_on_driver(
    m_spec: &ProcessSpec,
    a_spec: &ProcessSpec,
    driver: SamplePath,
) -> Result<WeakDirichletPaths> {
    if !m_spec.is_martingale() {
        return Err(contract(format!("{m_spec:?} is not a martingale recipe")));
    }
    if !a_spec.is_zero_energy() {
        return Err(contract(format!("{a_spec:?} is not a zero-energy recipe")));
    }
    let m = m_spec.realize(&driver)?;
    let a = a_spec.realize(&driver)?;
    if a.at(0) != 0.0 {
        return Err(contract(format!("A(0) must be 0, got {}", a.at(0))));
    }
    let x = m.add(&a, ProcessRole::Composite)?;
    Ok(WeakDirichletPaths { x, m, a, driver })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TimeGrid {
        TimeGrid::new(1.0, 64, 0.125).unwrap()
    }

    #[test]
    fn brownian_plus_zero_is_brownian() {
        let p = build_weak_dirichlet(&grid(), &ProcessSpec::BrownianMotion, &ProcessSpec::zero(), 3)
            .unwrap();
        assert_eq!(p.x.values(), p.driver.values());
        assert_eq!(p.x.role(), ProcessRole::Composite);
    }

    #[test]
    fn nodewise_sum_with_quadratic_drift() {
        let g = grid();
        let p = build_weak_dirichlet(&g, &ProcessSpec::BrownianMotion, &ProcessSpec::deterministic(|t| t * t), 3)
            .unwrap();
        for k in 0..g.n_nodes() {
            let t = g.time(k);
            assert_eq!(p.x.at(k), p.driver.at(k) + t * t);
            assert_eq!(p.x.at(k), p.m.at(k) + p.a.at(k));
        }
    }

    #[test]
    fn a_must_start_at_zero() {
        let err = build_weak_dirichlet(
            &grid(),
            &ProcessSpec::BrownianMotion,
            &ProcessSpec::deterministic(|t| 1.0 + t),
            3,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn roles_are_enforced() {
        let bad_m = ProcessSpec::deterministic(|t| t);
        assert!(build_weak_dirichlet(&grid(), &bad_m, &ProcessSpec::zero(), 1).is_err());
        assert!(build_weak_dirichlet(&grid(), &ProcessSpec::BrownianMotion, &ProcessSpec::BrownianMotion, 1).is_err());
    }

    #[test]
    fn path_integral_is_adapted_left_point_sum() {
        let g = grid();
        let spec = ProcessSpec::path_integral(|v| v.current(0).abs().min(1.0));
        let p = build_weak_dirichlet(&g, &ProcessSpec::BrownianMotion, &spec, 9).unwrap();
        let mut acc = 0.0;
        for k in 0..g.n_steps() {
            assert_eq!(p.a.at(k), acc);
            acc += p.driver.at(k).abs().min(1.0) * g.dt();
        }
    }

    #[test]
    fn convolved_candidate_starts_at_zero() {
        let g = grid();
        let spec = ProcessSpec::ZeroEnergyCandidate(ZeroEnergyRecipe::ConvolvedBrownian { hurst: 0.75 });
        let p = build_weak_dirichlet(&g, &ProcessSpec::BrownianMotion, &spec, 9).unwrap();
        assert_eq!(p.a.at(0), 0.0);
        let bad = ProcessSpec::ZeroEnergyCandidate(ZeroEnergyRecipe::ConvolvedBrownian { hurst: 0.5 });
        assert!(build_weak_dirichlet(&g, &ProcessSpec::BrownianMotion, &bad, 9).is_err());
    }

    #[test]
    fn martingale_ito_spec() {
        let g = grid();
        let spec = ProcessSpec::martingale(|_, _| 2.0, 1.0);
        let p = build_weak_dirichlet(&g, &spec, &ProcessSpec::zero(), 4).unwrap();
        for k in 0..g.n_nodes() {
            assert!((p.m.at(k) - (1.0 + 2.0 * p.driver.at(k))).abs() < 1e-12);
        }
    }
}
