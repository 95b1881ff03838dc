//! Both sides of the Itô-Ventzell decomposition along one realization.
//!
//! `B^X(F)` is the residual `F(t, X_t) - F(0, X_0) - ∫γ(r, X_r) dW_r -
//! ∫F_x(r, X_r) dM_r`, with both stochastic integrals as left-point Itô
//! sums. For `C^{0,2}` flows it is compared against
//! `∫β dr + ∫F_x d⁻A + ∫γ_x d[X, W] + ½∫F_xx d[X]` built from the
//! ε-regularized estimators.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::flowkit::{holder_check, integrability_check, FlowPath, HolderCheck, IntegrabilityCheck, StochasticFlow};
use crate::pathkit::{ProcessRole, SamplePath, TimeGrid, WeakDirichletPaths};
use crate::regint::{
    eps_covariation, eps_covariation_curve, eps_forward_integral_curve, ito_integral_curve,
    weighted_eps_covariation_curve,
};
use crate::sum;
use crate::ucpstats::{convergence_verdict, moment_estimate, ConvergenceVerdict, UcpEstimate};

/// Largest tolerated `|X - M - A|` per node.
pub const SPLIT_TOLERANCE: f64 = 1e-12;
/// Sup-norm tolerance on the residual of a declared martingale case.
pub const MARTINGALE_TOLERANCE: f64 = 1e-10;

/// The four pieces of the explicit formula, per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplicitTerms {
    pub eps: f64,
    pub beta_dr: Vec<f64>,
    pub fx_forward_da: Vec<f64>,
    pub gammax_dxw: Vec<f64>,
    pub half_fxx_dx: Vec<f64>,
    pub total: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub flow: String,
    pub grid: TimeGrid,
    pub seed: Option<u64>,
    pub lhs: Vec<f64>,
    pub term_gamma_dw: Vec<f64>,
    pub term_fx_dm: Vec<f64>,
    pub residual: Vec<f64>,
    pub explicit: Option<ExplicitTerms>,
    pub discrepancy: Option<Vec<f64>>,
}

impl DecompositionReport {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn residual_path(&self) -> SamplePath {
        SamplePath::scalar(self.grid, self.residual.clone(), ProcessRole::ZeroEnergy)
            .expect("one residual per node")
    }

    /// Attaches the explicit terms and the nodewise discrepancy.
    pub fn attach_explicit(&mut self, explicit: ExplicitTerms) -> Result<()> {
        if explicit.total.len() != self.residual.len() {
            return Err(contract("explicit terms live on a different grid"));
        }
        self.discrepancy = Some(self.residual.iter().zip(&explicit.total).map(|(r, e)| r - e).collect());
        self.explicit = Some(explicit);
        Ok(())
    }

    /// `sup_k |residual - explicit|`, when the explicit side is attached.
    pub fn sup_discrepancy(&self) -> Option<f64> {
        self.discrepancy.as_deref().map(sum::sup_abs)
    }

    /// Per-node CSV; explicit columns are left empty when absent.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(
            out,
            "t,lhs,gamma_dW,Fx_dM,residual,beta_dr,Fx_dA_forward,gammax_dXW,half_Fxx_dX,explicit,discrepancy"
        )?;
        for k in 0..self.residual.len() {
            write!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.grid.time(k),
                self.lhs[k],
                self.term_gamma_dw[k],
                self.term_fx_dm[k],
                self.residual[k]
            )?;
            match (&self.explicit, &self.discrepancy) {
                (Some(e), Some(d)) => writeln!(
                    out,
                    ",{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                    e.beta_dr[k], e.fx_forward_da[k], e.gammax_dxw[k], e.half_fxx_dx[k], e.total[k], d[k]
                )?,
                _ => writeln!(out, ",,,,,,")?,
            }
        }
        Ok(())
    }
}

pub(crate) fn check_inputs(flow: &StochasticFlow, paths: &WeakDirichletPaths) -> Result<()> {
    if flow.dim() != 1 {
        return Err(Error::Capability(format!(
            "decomposition checks are one-dimensional; flow '{}' has dimension {}",
            flow.name,
            flow.dim()
        )));
    }
    let WeakDirichletPaths { x, m, a, driver } = paths;
    for (p, what) in [(x, "X"), (m, "M"), (a, "A"), (driver, "W")] {
        p.require_scalar(what)?;
        p.require_same_grid(x, what)?;
    }
    for k in 0..x.n_nodes() {
        let gap = x.at(k) - m.at(k) - a.at(k);
        if !(gap.abs() <= SPLIT_TOLERANCE * (1.0 + x.at(k).abs())) {
            return Err(contract(format!(
                "X != M + A at node {k} (t = {}): gap {gap:e}",
                x.grid().time(k)
            )));
        }
    }
    Ok(())
}

/// Values of `g(k, X(t_k))` at every node of `[0, T]`, as a path.
fn along<'a>(x: &SamplePath, mut g: impl FnMut(usize, &[f64]) -> Result<f64> + 'a) -> Result<SamplePath> {
    let values = (0..x.n_nodes()).map(|k| g(k, x.row(k))).collect::<Result<Vec<_>>>()?;
    SamplePath::scalar(*x.grid(), values, ProcessRole::Composite)
}

/// Left-hand side, both Itô sums and the residual; no explicit terms.
pub fn assemble_rhs_terms(flow: &StochasticFlow, paths: &WeakDirichletPaths) -> Result<DecompositionReport> {
    check_inputs(flow, paths)?;
    let WeakDirichletPaths { x, m, driver, .. } = paths;
    let fp = FlowPath::new(flow, driver)?;
    let f0 = fp.value(0, x.row(0))?;
    let lhs: Vec<f64> = (0..x.n_nodes())
        .map(|k| Ok(fp.value(k, x.row(k))? - f0))
        .collect::<Result<_>>()?;
    let gamma = along(x, |k, v| fp.gamma(k, v, 0))?;
    let fx = along(x, |k, v| fp.fx(k, v))?;
    let term_gamma_dw = ito_integral_curve(&gamma, driver)?;
    let term_fx_dm = ito_integral_curve(&fx, m)?;
    let residual: Vec<f64> = (0..lhs.len())
        .map(|k| if k == 0 { 0.0 } else { lhs[k] - term_gamma_dw[k] - term_fx_dm[k] })
        .collect();
    Ok(DecompositionReport {
        flow: flow.name.clone(),
        grid: *x.grid(),
        seed: None,
        lhs,
        term_gamma_dw,
        term_fx_dm,
        residual,
        explicit: None,
        discrepancy: None,
    })
}

/// The explicit formula at regularization width `eps`; needs `F_xx` and
/// `γ_x`.
pub fn explicit_bx(flow: &StochasticFlow, paths: &WeakDirichletPaths, eps: f64) -> Result<ExplicitTerms> {
    check_inputs(flow, paths)?;
    if flow.smoothness < crate::flowkit::Smoothness::C02 {
        return Err(Error::Capability(format!(
            "flow '{}' is only C^{{0,1}}; the explicit formula needs F_xx",
            flow.name
        )));
    }
    let WeakDirichletPaths { x, a, driver, .. } = paths;
    let fp = FlowPath::new(flow, driver)?;
    let dt = x.grid().dt();
    let beta = along(x, |k, v| fp.beta(k, v))?;
    let fx = along(x, |k, v| fp.fx(k, v))?;
    let gx = along(x, |k, v| fp.gamma_x(k, v))?;
    let fxx = along(x, |k, v| fp.fxx(k, v))?;

    let mut beta_dr = Vec::with_capacity(x.n_nodes());
    let mut acc = 0.0;
    beta_dr.push(acc);
    for k in 0..x.n_nodes() - 1 {
        acc += beta.at(k) * dt;
        beta_dr.push(acc);
    }
    let fx_forward_da = eps_forward_integral_curve(&fx, a, eps)?;
    let gammax_dxw = weighted_eps_covariation_curve(&gx, x, driver, eps)?;
    let half_fxx_dx: Vec<f64> = weighted_eps_covariation_curve(&fxx, x, x, eps)?
        .into_iter()
        .map(|v| 0.5 * v)
        .collect();
    let total = (0..x.n_nodes())
        .map(|k| beta_dr[k] + fx_forward_da[k] + gammax_dxw[k] + half_fxx_dx[k])
        .collect();
    Ok(ExplicitTerms {
        eps,
        beta_dr,
        fx_forward_da,
        gammax_dxw,
        half_fxx_dx,
        total,
    })
}

/// Residual and explicit side in one report.
pub fn decompose(flow: &StochasticFlow, paths: &WeakDirichletPaths, eps: f64) -> Result<DecompositionReport> {
    let mut report = assemble_rhs_terms(flow, paths)?;
    report.attach_explicit(explicit_bx(flow, paths, eps)?)?;
    Ok(report)
}

/// `Σ F_x(t_k, X_k) (A_{k+1} - A_k)`, the Stieltjes counterpart of the
/// forward integral for finite-variation `A`.
pub fn stieltjes_fx_da(flow: &StochasticFlow, paths: &WeakDirichletPaths) -> Result<Vec<f64>> {
    check_inputs(flow, paths)?;
    let fp = FlowPath::new(flow, &paths.driver)?;
    let fx = along(&paths.x, |k, v| fp.fx(k, v))?;
    ito_integral_curve(&fx, &paths.a)
}

/// Classical one-step version of the explicit formula:
/// `Σ β dt + Σ F_x ΔA + Σ γ_x ΔX ΔW + ½ Σ F_xx (ΔX)²`.
pub fn classical_bx(flow: &StochasticFlow, paths: &WeakDirichletPaths) -> Result<Vec<f64>> {
    check_inputs(flow, paths)?;
    let WeakDirichletPaths { x, a, driver, .. } = paths;
    let fp = FlowPath::new(flow, driver)?;
    let dt = x.grid().dt();
    let mut out = Vec::with_capacity(x.n_nodes());
    let mut acc = 0.0;
    out.push(acc);
    for k in 0..x.n_nodes() - 1 {
        let v = x.row(k);
        let dx = x.at(k + 1) - x.at(k);
        let dw = driver.at(k + 1) - driver.at(k);
        let da = a.at(k + 1) - a.at(k);
        acc += fp.beta(k, v)? * dt
            + fp.fx(k, v)? * da
            + fp.gamma_x(k, v)? * dx * dw
            + 0.5 * fp.fxx(k, v)? * dx * dx;
        out.push(acc);
    }
    Ok(out)
}

/// Test martingales `N` for the zero-energy check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMartingale {
    /// `N = W`.
    Driver,
    /// `N = ∫W dW`.
    DriverIntegral,
    /// `N = ∫cos(W) dW`, a bounded integrand.
    BoundedIntegral,
}

impl TestMartingale {
    pub const ALL: [TestMartingale; 3] = [
        TestMartingale::Driver,
        TestMartingale::DriverIntegral,
        TestMartingale::BoundedIntegral,
    ];

    pub fn realize(&self, driver: &SamplePath) -> Result<SamplePath> {
        driver.require_scalar("driver")?;
        let integrand = match self {
            TestMartingale::Driver => return Ok(driver.clone().with_role(ProcessRole::Martingale)),
            TestMartingale::DriverIntegral => driver.clone(),
            TestMartingale::BoundedIntegral => driver.map(ProcessRole::Composite, |_, w| w[0].cos()),
        };
        SamplePath::scalar(
            *driver.grid(),
            ito_integral_curve(&integrand, driver)?,
            ProcessRole::Martingale,
        )
    }
}

/// `[B^X(F), N]^ε_T` for each ε of the schedule, along one realization.
pub fn zero_energy_samples(report: &DecompositionReport, n: &SamplePath, eps_schedule: &[f64]) -> Result<Vec<f64>> {
    let b = report.residual_path();
    eps_schedule
        .iter()
        .map(|&e| Ok(eps_covariation(&b, n, e, report.grid.horizon())?.value))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroEnergyReport {
    pub epsilons: Vec<f64>,
    pub series: Vec<UcpEstimate>,
    pub verdict: ConvergenceVerdict,
}

/// Reduces per-path samples (`samples[path][ε]`, as produced by
/// [`zero_energy_samples`]) to one ucp estimate per ε against target 0.
pub fn zero_energy_check(samples: &[Vec<f64>], eps_schedule: &[f64], delta: f64, eta: f64) -> Result<ZeroEnergyReport> {
    if samples.iter().any(|s| s.len() != eps_schedule.len()) {
        return Err(contract("every path needs one sample per epsilon"));
    }
    let series = (0..eps_schedule.len())
        .map(|i| UcpEstimate::from_sup_samples(samples.iter().map(|s| s[i].abs()).collect(), delta))
        .collect::<Result<Vec<_>>>()?;
    let verdict = convergence_verdict(&series, eta)?;
    Ok(ZeroEnergyReport {
        epsilons: eps_schedule.to_vec(),
        series,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorollaryVerdict {
    pub flow: String,
    pub sup_residual: f64,
    pub worst_node: usize,
    pub worst_time: f64,
    /// `[B^X(F), B^X(F)]^ε_T`.
    pub residual_covariation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// For a case declared to be a local martingale the residual has to vanish.
pub fn martingale_corollary_check(
    flow: &StochasticFlow,
    paths: &WeakDirichletPaths,
    eps: f64,
) -> Result<CorollaryVerdict> {
    let report = assemble_rhs_terms(flow, paths)?;
    let (worst_node, sup_residual) = report
        .residual
        .iter()
        .enumerate()
        .map(|(k, v)| (k, v.abs()))
        .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    let b = report.residual_path();
    let residual_covariation = eps_covariation(&b, &b, eps, report.grid.horizon())?.value;
    let tolerance = MARTINGALE_TOLERANCE;
    Ok(CorollaryVerdict {
        flow: flow.name.clone(),
        sup_residual,
        worst_node,
        worst_time: report.grid.time(worst_node),
        residual_covariation,
        tolerance,
        pass: sup_residual <= tolerance && residual_covariation.abs() <= tolerance,
    })
}

/// Empirical look at the hypotheses a test case declares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub holder: HolderCheck,
    pub integrability: IntegrabilityCheck,
    pub rho: f64,
    /// `E sup_t |γ(t, X_t)|^{2+ϱ}` with its 95% half-width.
    pub gamma_moment: (f64, f64),
    /// `E sup_t |β(t, X_t)|^{2+ϱ}` with its 95% half-width.
    pub beta_moment: (f64, f64),
    pub pass: bool,
}

/// `(sup_t |β(t, X_t)|, sup_t |γ(t, X_t)|)` along one realization.
pub fn characteristic_sups(flow: &StochasticFlow, paths: &WeakDirichletPaths) -> Result<(f64, f64)> {
    check_inputs(flow, paths)?;
    let fp = FlowPath::new(flow, &paths.driver)?;
    let mut sb = 0.0f64;
    let mut sg = 0.0f64;
    for k in 0..paths.x.n_nodes() {
        let v = paths.x.row(k);
        sb = sb.max(fp.beta(k, v)?.abs());
        sg = sg.max(fp.gamma(k, v, 0)?.abs());
    }
    Ok((sb, sg))
}

/// Sup-sampling on one path plus `(2+ϱ)`-moments of the characteristic sups
/// over an ensemble of `(β, γ)` sups from [`characteristic_sups`].
pub fn assumption_spot_check(
    flow: &StochasticFlow,
    reference: &WeakDirichletPaths,
    sups: &[(f64, f64)],
    rho: f64,
) -> Result<AssumptionReport> {
    if !(rho > 0.0) {
        return Err(Error::Config(format!("rho must be > 0, got {rho}")));
    }
    let holder = holder_check(flow, &reference.driver)?;
    let integrability = integrability_check(flow, &reference.driver)?;
    let p = 2.0 + rho;
    let b: Vec<f64> = sups.iter().map(|s| s.0).collect();
    let g: Vec<f64> = sups.iter().map(|s| s.1).collect();
    let beta_moment = moment_estimate(&b, p)?;
    let gamma_moment = moment_estimate(&g, p)?;
    let pass = holder.pass && integrability.finite && beta_moment.0.is_finite() && gamma_moment.0.is_finite();
    Ok(AssumptionReport {
        holder,
        integrability,
        rho,
        gamma_moment,
        beta_moment,
        pass,
    })
}

/// `[B^X(F), N]^ε` at every node, for callers that want the whole curve.
pub fn residual_covariation_curve(report: &DecompositionReport, n: &SamplePath, eps: f64) -> Result<Vec<f64>> {
    eps_covariation_curve(&report.residual_path(), n, eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowkit::{catalog_flow, catalog_names};
    use crate::pathkit::{build_weak_dirichlet, ProcessSpec};
    use proptest::prelude::*;

    fn grid() -> TimeGrid {
        TimeGrid::new(1.0, 512, 0.125).unwrap()
    }

    fn brownian(seed: u64) -> WeakDirichletPaths {
        build_weak_dirichlet(&grid(), &ProcessSpec::BrownianMotion, &ProcessSpec::zero(), seed).unwrap()
    }

    fn with_drift(seed: u64) -> WeakDirichletPaths {
        build_weak_dirichlet(&grid(), &ProcessSpec::BrownianMotion, &ProcessSpec::deterministic(|t| t * t), seed)
            .unwrap()
    }

    #[test]
    fn frozen_and_additive_noise_telescope() {
        let p = brownian(1);
        let r = assemble_rhs_terms(&catalog_flow("frozen").unwrap(), &p).unwrap();
        for k in 0..p.x.n_nodes() {
            assert_eq!(r.lhs[k], p.x.at(k) - p.x.at(0));
            assert_eq!(r.term_gamma_dw[k], 0.0);
            assert!((r.term_fx_dm[k] - p.x.at(k)).abs() < 1e-13);
            assert!(r.residual[k].abs() < 1e-13);
        }
        let r = assemble_rhs_terms(&catalog_flow("additive-noise").unwrap(), &p).unwrap();
        for k in 0..p.x.n_nodes() {
            assert!((r.lhs[k] - 2.0 * p.x.at(k)).abs() < 1e-13);
            assert!((r.term_gamma_dw[k] - p.x.at(k)).abs() < 1e-13);
            assert!(r.residual[k].abs() < 1e-13);
        }
        assert_eq!(r.residual[0], 0.0);
    }

    #[test]
    fn broken_split_is_a_contract_violation() {
        let mut p = brownian(2);
        p.a = SamplePath::constant(*p.x.grid(), 1e-9, ProcessRole::Deterministic);
        assert!(matches!(
            assemble_rhs_terms(&catalog_flow("frozen").unwrap(), &p),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn explicit_side_needs_second_derivatives() {
        let p = brownian(3);
        assert!(matches!(
            explicit_bx(&catalog_flow("c01-kink").unwrap(), &p, 0.0625),
            Err(Error::Capability(_))
        ));
        // the residual itself exists for C^{0,1} flows
        assert!(assemble_rhs_terms(&catalog_flow("c01-kink").unwrap(), &p).is_ok());
    }

    #[test]
    fn frozen_explicit_terms_vanish() {
        let p = brownian(4);
        let e = explicit_bx(&catalog_flow("frozen").unwrap(), &p, 0.0625).unwrap();
        for v in [&e.beta_dr, &e.fx_forward_da, &e.gammax_dxw, &e.half_fxx_dx, &e.total] {
            assert!(v.iter().all(|x| *x == 0.0));
        }
    }

    #[test]
    fn square_residual_is_the_realized_quadratic_variation() {
        // F = x², X = W: F(W_t) - 2∫W dW = Σ (ΔW)² exactly on the grid.
        let p = brownian(5);
        let r = assemble_rhs_terms(&catalog_flow("square").unwrap(), &p).unwrap();
        let mut qv = 0.0;
        for k in 0..p.x.n_nodes() - 1 {
            qv += (p.x.at(k + 1) - p.x.at(k)).powi(2);
            assert!((r.residual[k + 1] - qv).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_matches_the_classical_formula() {
        for name in ["square", "linear-noise", "additive-noise", "time-noise", "drift-only"] {
            for p in [brownian(6), with_drift(6)] {
                let f = catalog_flow(name).unwrap();
                let r = assemble_rhs_terms(&f, &p).unwrap();
                let c = classical_bx(&f, &p).unwrap();
                let gap = r.residual.iter().zip(&c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                // every case here is at most quadratic in x, so the one-step
                // expansion is exact
                assert!(gap < 1e-10, "{name}: {gap}");
            }
        }
    }

    #[test]
    fn stieltjes_and_forward_agree_for_smooth_drift() {
        let p = with_drift(7);
        let f = catalog_flow("square").unwrap();
        let s = stieltjes_fx_da(&f, &p).unwrap();
        let e = explicit_bx(&f, &p, 0.015625).unwrap();
        let n = p.x.n_nodes() - 1;
        assert!((s[n] - e.fx_forward_da[n]).abs() < 0.15, "{} {}", s[n], e.fx_forward_da[n]);
    }

    #[test]
    fn corollary_cases() {
        let p = brownian(8);
        for name in ["frozen", "additive-noise"] {
            let v = martingale_corollary_check(&catalog_flow(name).unwrap(), &p, 0.0625).unwrap();
            assert!(v.pass, "{v:?}");
        }
        let v = martingale_corollary_check(&catalog_flow("square").unwrap(), &p, 0.0625).unwrap();
        assert!(!v.pass);
        assert!(v.sup_residual > 0.1);
    }

    #[test]
    fn frozen_flow_has_zero_energy_exactly() {
        let p = brownian(9);
        let r = assemble_rhs_terms(&catalog_flow("frozen").unwrap(), &p).unwrap();
        let n = TestMartingale::DriverIntegral.realize(&p.driver).unwrap();
        let s = zero_energy_samples(&r, &n, &[0.125, 0.0625]).unwrap();
        assert!(s.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn test_martingales() {
        let p = brownian(10);
        let w = &p.driver;
        let n = TestMartingale::DriverIntegral.realize(w).unwrap();
        // ∫W dW = (W² - Σ(ΔW)²)/2 on the grid
        let mut qv = 0.0;
        for k in 0..w.n_nodes() - 1 {
            qv += (w.at(k + 1) - w.at(k)).powi(2);
            assert!((n.at(k + 1) - 0.5 * (w.at(k + 1).powi(2) - qv)).abs() < 1e-12);
        }
        assert_eq!(TestMartingale::Driver.realize(w).unwrap().values(), w.values());
    }

    #[test]
    fn zero_energy_reduction() {
        let samples = vec![vec![0.2, 0.01], vec![-0.3, 0.0], vec![0.01, -0.02]];
        let rep = zero_energy_check(&samples, &[0.5, 0.25], 0.05, 0.5).unwrap();
        assert!((rep.series[0].empirical_prob - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(rep.series[1].empirical_prob, 0.0);
        assert!(rep.verdict.pass);
        assert!(zero_energy_check(&[vec![1.0]], &[0.5, 0.25], 0.05, 0.5).is_err());
    }

    #[test]
    fn csv_has_one_row_per_node() {
        let p = brownian(11);
        let r = decompose(&catalog_flow("square").unwrap(), &p, 0.0625).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), p.x.n_nodes() + 1);
        assert_eq!(text.lines().nth(1).unwrap().split(',').count(), 11);
    }

    #[test]
    fn spot_checks_on_the_catalog() {
        let p = brownian(12);
        for name in catalog_names() {
            let f = catalog_flow(name).unwrap();
            let sups: Vec<_> = (0..20).map(|s| characteristic_sups(&f, &brownian(100 + s)).unwrap()).collect();
            let rep = assumption_spot_check(&f, &p, &sups, 1.0).unwrap();
            assert!(rep.pass, "{name}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn residual_is_linear_in_the_flow(seed in any::<u64>(), i in 0usize..8, j in 0usize..8, drift in any::<bool>()) {
            let names = catalog_names();
            let p = if drift { with_drift(seed) } else { brownian(seed) };
            let f = catalog_flow(names[i]).unwrap();
            let g = catalog_flow(names[j]).unwrap();
            let s = f.sum(&g).unwrap();
            let a = assemble_rhs_terms(&f, &p).unwrap();
            let b = assemble_rhs_terms(&g, &p).unwrap();
            let c = assemble_rhs_terms(&s, &p).unwrap();
            for k in 0..c.residual.len() {
                let scale = 1.0 + a.lhs[k].abs() + b.lhs[k].abs() + a.term_fx_dm[k].abs() + b.term_fx_dm[k].abs()
                    + a.term_gamma_dw[k].abs() + b.term_gamma_dw[k].abs();
                prop_assert!((c.residual[k] - a.residual[k] - b.residual[k]).abs() <= 1e-12 * scale);
            }
        }

        #[test]
        fn residual_starts_at_zero(seed in any::<u64>(), i in 0usize..8) {
            let f = catalog_flow(catalog_names()[i]).unwrap();
            let r = assemble_rhs_terms(&f, &with_drift(seed)).unwrap();
            prop_assert_eq!(r.residual[0], 0.0);
            prop_assert!(r.residual.iter().all(|v| v.is_finite()));
        }
    }
}
