use crate::error::{contract, Error, Result};
use crate::pathkit::SamplePath;

use super::{FieldFn, Smoothness, SpaceFn, StochasticFlow};

/// Finite differences use `h = FD_RELATIVE_STEP * max(1, |x|)`.
pub const FD_RELATIVE_STEP: f64 = 1e-4;

fn fd_step(x: f64) -> f64 {
    FD_RELATIVE_STEP * x.abs().max(1.0)
}

fn eval_err(time: f64, x: &[f64], message: String) -> Error {
    Error::Evaluation {
        time,
        x: x.to_vec(),
        message,
    }
}

/// Cumulative time integrals of the separable terms along one driver path.
#[derive(Debug, Clone)]
struct Cache {
    /// `Σ_{j<k} a_i(t_j) dt` per β term.
    beta_cum: Vec<Vec<f64>>,
    /// `a_i(t_k)` per β term.
    beta_now: Vec<Vec<f64>>,
    /// `Σ_{j<k} c_i(t_j) ΔW_j` per γ term.
    gamma_cum: Vec<Vec<f64>>,
    /// `c_i(t_k)` per γ term.
    gamma_now: Vec<Vec<f64>>,
}

/// A flow bound to one driver path.
///
/// Node indices past `T` are clamped, so `F(t, x) = F(T, x)` on the
/// continuation margin.
pub struct FlowPath<'a> {
    flow: &'a StochasticFlow,
    driver: &'a SamplePath,
    cache: Option<Cache>,
}

impl<'a> FlowPath<'a> {
    /// Uses the separable form when the flow declares one.
    pub fn new(flow: &'a StochasticFlow, driver: &'a SamplePath) -> Result<Self> {
        let mut fp = FlowPath::direct(flow, driver)?;
        if let Some(sep) = &flow.separable {
            let grid = driver.grid();
            let n = grid.n_nodes();
            let dt = grid.dt();
            let mut cache = Cache {
                beta_cum: Vec::with_capacity(sep.beta.len()),
                beta_now: Vec::with_capacity(sep.beta.len()),
                gamma_cum: Vec::with_capacity(sep.gamma.len()),
                gamma_now: Vec::with_capacity(sep.gamma.len()),
            };
            for term in &sep.beta {
                let now = fp.time_factor_values(&term.time, "β")?;
                let mut cum = Vec::with_capacity(n);
                let mut acc = 0.0;
                cum.push(acc);
                for a in &now[..n - 1] {
                    acc += a * dt;
                    cum.push(acc);
                }
                cache.beta_cum.push(cum);
                cache.beta_now.push(now);
            }
            for term in &sep.gamma {
                let now = fp.time_factor_values(&term.time, "γ")?;
                let j = term.component;
                let mut cum = Vec::with_capacity(n);
                let mut acc = 0.0;
                cum.push(acc);
                for k in 0..n - 1 {
                    acc += now[k] * (driver.row(k + 1)[j] - driver.row(k)[j]);
                    cum.push(acc);
                }
                cache.gamma_cum.push(cum);
                cache.gamma_now.push(now);
            }
            fp.cache = Some(cache);
        }
        Ok(fp)
    }

    /// Evaluates every integral by direct summation over the nodes.
    pub fn direct(flow: &'a StochasticFlow, driver: &'a SamplePath) -> Result<Self> {
        if driver.dim() != flow.dim() {
            return Err(contract(format!(
                "flow '{}' has dimension {} but the driver has {} components",
                flow.name,
                flow.dim(),
                driver.dim()
            )));
        }
        Ok(FlowPath {
            flow,
            driver,
            cache: None,
        })
    }

    pub fn flow(&self) -> &StochasticFlow {
        self.flow
    }

    pub fn driver(&self) -> &SamplePath {
        self.driver
    }

    pub fn is_cached(&self) -> bool {
        self.cache.is_some()
    }

    fn time_factor_values(&self, a: &super::TimeFactor, what: &str) -> Result<Vec<f64>> {
        let grid = self.driver.grid();
        (0..grid.n_nodes())
            .map(|k| {
                let v = a(&self.driver.view(k));
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(eval_err(grid.time(k), &[], format!("{what} time factor evaluated to {v}")))
                }
            })
            .collect()
    }

    #[inline]
    fn clamp(&self, k: usize) -> usize {
        k.min(self.driver.grid().n_steps())
    }

    fn checked(&self, k: usize, x: &[f64], v: f64, what: &str) -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(eval_err(
                self.driver.grid().time(self.clamp(k)),
                x,
                format!("{what} of flow '{}' evaluated to {v}", self.flow.name),
            ))
        }
    }

    fn field_at(&self, f: &FieldFn, k: usize, x: &[f64], what: &str) -> Result<f64> {
        let k = self.clamp(k);
        let v = f(&self.driver.view(k), x);
        self.checked(k, x, v, what)
    }

    /// `Σ_{r<=j<t} β(t_j, x) dt + Σ_{r<=j<t} γ(t_j, x)·ΔW_j` computed from
    /// the given fields (value or derivative fields).
    fn integrate_fields(
        &self,
        beta: &FieldFn,
        gamma: &[&FieldFn],
        r: usize,
        t: usize,
        x: &[f64],
        what: &str,
    ) -> Result<(f64, f64)> {
        let dt = self.driver.grid().dt();
        let (r, t) = (self.clamp(r), self.clamp(t));
        let mut drift = 0.0;
        let mut noise = 0.0;
        for j in r..t {
            let view = self.driver.view(j);
            let b = beta(&view, x);
            let b = self.checked(j, x, b, &format!("β{what}"))?;
            drift += b * dt;
            let (w0, w1) = (self.driver.row(j), self.driver.row(j + 1));
            for (c, g) in gamma.iter().enumerate() {
                let v = g(&view, x);
                let v = self.checked(j, x, v, &format!("γ{what}"))?;
                noise += v * (w1[c] - w0[c]);
            }
        }
        Ok((drift, noise))
    }

    /// Separable sum `Σ_i coeff_i(k) * pick(space_i)(x)` over β and γ terms.
    fn separable_sum(
        &self,
        x: &[f64],
        beta_coeff: impl Fn(usize) -> f64,
        gamma_coeff: impl Fn(usize) -> f64,
        pick: fn(&super::SpaceTerm) -> Option<&SpaceFn>,
    ) -> Option<(f64, f64)> {
        let sep = self.flow.separable.as_ref()?;
        let mut drift = 0.0;
        for (i, term) in sep.beta.iter().enumerate() {
            let c = beta_coeff(i);
            if c != 0.0 {
                drift += c * pick(&term.space)?(x);
            }
        }
        let mut noise = 0.0;
        for (i, term) in sep.gamma.iter().enumerate() {
            let c = gamma_coeff(i);
            if c != 0.0 {
                noise += c * pick(&term.space)?(x);
            }
        }
        Some((drift, noise))
    }

    /// `(∫_r^t β(s, x) ds, ∫_r^t γ(s, x)·dW_s)` with `x` frozen.
    pub fn increments(&self, r: usize, t: usize, x: &[f64]) -> Result<(f64, f64)> {
        if r > t {
            return Err(contract(format!("substitution interval [{r}, {t}] is reversed")));
        }
        let (r, t) = (self.clamp(r), self.clamp(t));
        if let Some(cache) = &self.cache {
            let (d, n) = self
                .separable_sum(
                    x,
                    |i| cache.beta_cum[i][t] - cache.beta_cum[i][r],
                    |i| cache.gamma_cum[i][t] - cache.gamma_cum[i][r],
                    |s| Some(&s.f),
                )
                .expect("values always exist");
            return Ok((self.checked(t, x, d, "drift part")?, self.checked(t, x, n, "noise part")?));
        }
        let gamma: Vec<&FieldFn> = self.flow.chars.gamma.iter().collect();
        self.integrate_fields(&self.flow.chars.beta, &gamma, r, t, x, "")
    }

    /// `F(t_k, x)`.
    pub fn value(&self, k: usize, x: &[f64]) -> Result<f64> {
        let f0 = (self.flow.f0.f)(x);
        let f0 = self.checked(0, x, f0, "F0")?;
        let (d, n) = self.increments(0, k, x)?;
        Ok(f0 + d + n)
    }

    fn analytic_derivative(&self, k: usize, x: &[f64], order: u8) -> Result<Option<f64>> {
        let flow = self.flow;
        let available = match order {
            1 => flow.has_analytic_fx(),
            _ => flow.has_analytic_fxx(),
        };
        if !available {
            return Ok(None);
        }
        let k = self.clamp(k);
        let f0 = match order {
            1 => flow.f0.dx.as_ref(),
            _ => flow.f0.dxx.as_ref(),
        }
        .expect("checked above");
        let base = self.checked(0, x, f0(x), "F0 derivative")?;
        if let Some(cache) = &self.cache {
            let pick: fn(&super::SpaceTerm) -> Option<&SpaceFn> = match order {
                1 => |s| s.dx.as_ref(),
                _ => |s| s.dxx.as_ref(),
            };
            if let Some((d, n)) = self.separable_sum(
                x,
                |i| cache.beta_cum[i][k],
                |i| cache.gamma_cum[i][k],
                pick,
            ) {
                return Ok(Some(self.checked(k, x, base + d + n, "F derivative")?));
            }
        }
        let (beta, gamma) = match order {
            1 => (&flow.derivatives.beta_x, &flow.derivatives.gamma_x),
            _ => (&flow.derivatives.beta_xx, &flow.derivatives.gamma_xx),
        };
        let (beta, gamma) = (beta.as_ref().expect("checked"), gamma.as_ref().expect("checked"));
        let (d, n) = self.integrate_fields(beta, &[gamma], 0, k, x, " derivative")?;
        Ok(Some(base + d + n))
    }

    fn fd_derivative(&self, k: usize, x: &[f64], coord: usize, order: u8, h: f64) -> Result<f64> {
        let mut shifted = x.to_vec();
        let mut at = |delta: f64| -> Result<f64> {
            shifted[coord] = x[coord] + delta;
            self.value(k, &shifted)
        };
        let plus = at(h)?;
        let minus = at(-h)?;
        Ok(match order {
            1 => (plus - minus) / (2.0 * h),
            _ => (plus - 2.0 * self.value(k, x)? + minus) / (h * h),
        })
    }

    /// `F_x(t_k, x)`, analytic when the flow provides the ingredients,
    /// otherwise a central difference.
    pub fn fx(&self, k: usize, x: &[f64]) -> Result<f64> {
        if let Some(v) = self.analytic_derivative(k, x, 1)? {
            return Ok(v);
        }
        self.fd_derivative(k, x, 0, 1, fd_step(x[0]))
    }

    /// `F_xx(t_k, x)`; requires a `C^{0,2}` flow.
    pub fn fxx(&self, k: usize, x: &[f64]) -> Result<f64> {
        if self.flow.smoothness < Smoothness::C02 {
            return Err(Error::Capability(format!(
                "flow '{}' is only C^{{0,1}}; F_xx is not defined",
                self.flow.name
            )));
        }
        if let Some(v) = self.analytic_derivative(k, x, 2)? {
            return Ok(v);
        }
        self.fd_derivative(k, x, 0, 2, fd_step(x[0]))
    }

    pub fn beta(&self, k: usize, x: &[f64]) -> Result<f64> {
        if let (Some(cache), Some(sep)) = (&self.cache, &self.flow.separable) {
            let k = self.clamp(k);
            let mut s = 0.0;
            for (i, term) in sep.beta.iter().enumerate() {
                s += cache.beta_now[i][k] * (term.space.f)(x);
            }
            return self.checked(k, x, s, "β");
        }
        self.field_at(&self.flow.chars.beta, k, x, "β")
    }

    /// Component `j` of γ.
    pub fn gamma(&self, k: usize, x: &[f64], j: usize) -> Result<f64> {
        if let (Some(cache), Some(sep)) = (&self.cache, &self.flow.separable) {
            let k = self.clamp(k);
            let mut s = 0.0;
            for (i, term) in sep.gamma.iter().enumerate() {
                if term.component == j {
                    s += cache.gamma_now[i][k] * (term.space.f)(x);
                }
            }
            return self.checked(k, x, s, "γ");
        }
        self.field_at(&self.flow.chars.gamma[j], k, x, "γ")
    }

    /// `γ_x(t_k, x)` for one-dimensional flows.
    pub fn gamma_x(&self, k: usize, x: &[f64]) -> Result<f64> {
        let g = self.flow.derivatives.gamma_x.as_ref().ok_or_else(|| {
            Error::Capability(format!("flow '{}' does not provide γ_x", self.flow.name))
        })?;
        self.field_at(g, k, x, "γ_x")
    }

    /// `Σ_{r<=j<t} [γ(t_j, x) - γ(t_r, x)]·ΔW_j`.
    pub fn gamma_deviation(&self, r: usize, t: usize, x: &[f64]) -> Result<f64> {
        let (_, noise) = self.increments(r, t, x)?;
        let (r, t) = (self.clamp(r), self.clamp(t));
        let mut frozen = 0.0;
        for j in 0..self.flow.dim() {
            frozen += self.gamma(r, x, j)? * (self.driver.row(t)[j] - self.driver.row(r)[j]);
        }
        Ok(noise - frozen)
    }
}

/// `F(t, x) = F0(x) + Σ β(t_j, x) dt + Σ γ(t_j, x)·ΔW_j` over `t_j < t`,
/// summed directly.
pub fn evaluate_flow(flow: &StochasticFlow, driver: &SamplePath, t: f64, x: &[f64]) -> Result<f64> {
    let k = driver.grid().node_index(t)?;
    check_point(flow, x)?;
    FlowPath::direct(flow, driver)?.value(k, x)
}

fn check_point(flow: &StochasticFlow, x: &[f64]) -> Result<()> {
    if x.len() != flow.dim() {
        return Err(contract(format!(
            "point has {} coordinates, flow '{}' has dimension {}",
            x.len(),
            flow.name,
            flow.dim()
        )));
    }
    Ok(())
}

/// `∂^order F / ∂x_coord^order (t, x)`.
///
/// Analytic when the flow provides the derivatives (one-dimensional
/// flows); otherwise a central difference with step `h`, accepted only if
/// the difference with step `h/2` agrees within `max(1e-6, 1e-4 |D|)` for
/// first derivatives, `max(1e-4, 1e-4 |D|) + 1e-6 (1 + |F|)` for second.
pub fn flow_partial_derivative(
    flow: &StochasticFlow,
    driver: &SamplePath,
    t: f64,
    x: &[f64],
    coord: usize,
    order: u8,
) -> Result<f64> {
    if !(order == 1 || order == 2) {
        return Err(contract(format!("derivative order must be 1 or 2, got {order}")));
    }
    check_point(flow, x)?;
    if coord >= flow.dim() {
        return Err(contract(format!("coordinate {coord} of a {}-dimensional flow", flow.dim())));
    }
    if order == 2 && flow.smoothness < Smoothness::C02 {
        return Err(Error::Capability(format!(
            "flow '{}' is only C^{{0,1}}; second derivatives are not defined",
            flow.name
        )));
    }
    let k = driver.grid().node_index(t)?;
    let fp = FlowPath::direct(flow, driver)?;
    if flow.dim() == 1 {
        if let Some(v) = fp.analytic_derivative(k, x, order)? {
            return Ok(v);
        }
    }
    let h = fd_step(x[coord]);
    let coarse = fp.fd_derivative(k, x, coord, order, h)?;
    let fine = fp.fd_derivative(k, x, coord, order, 0.5 * h)?;
    let tol = match order {
        1 => (1e-6f64).max(1e-4 * coarse.abs()),
        _ => (1e-4f64).max(1e-4 * coarse.abs()) + 1e-6 * (1.0 + fp.value(k, x)?.abs()),
    };
    if (coarse - fine).abs() > tol {
        return Err(eval_err(
            t,
            x,
            format!(
                "finite differences at h and h/2 disagree: {coarse} vs {fine} (tolerance {tol:.1e})"
            ),
        ));
    }
    Ok(coarse)
}

/// `F_x` (order 1) or `F_xx` (order 2) of a one-dimensional flow.
pub fn flow_spatial_derivative(
    flow: &StochasticFlow,
    driver: &SamplePath,
    t: f64,
    x: &[f64],
    order: u8,
) -> Result<f64> {
    if flow.dim() != 1 {
        return Err(Error::Capability(format!(
            "spatial derivative of a {}-dimensional flow; use flow_partial_derivative",
            flow.dim()
        )));
    }
    flow_partial_derivative(flow, driver, t, x, 0, order)
}

/// `(∫_r^t β(s, G) ds, ∫_r^t γ(s, G)·dW_s)` with the point `G` substituted
/// after integration.
pub fn substitute_random_point(
    flow: &StochasticFlow,
    driver: &SamplePath,
    r: f64,
    t: f64,
    g: &[f64],
) -> Result<(f64, f64)> {
    if r > t {
        return Err(contract(format!("substitution needs r <= t, got r = {r}, t = {t}")));
    }
    check_point(flow, g)?;
    if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
        return Err(contract(format!("substituted point has non-finite coordinate {bad}")));
    }
    let grid = driver.grid();
    let (kr, kt) = (grid.node_index(r)?, grid.node_index(t)?);
    FlowPath::direct(flow, driver)?.increments(kr, kt, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowkit::{catalog_flow, catalog_names, SeparableTerm, SpaceTerm};
    use crate::pathkit::{simulate_brownian, ProcessRole, TimeGrid};
    use proptest::prelude::*;

    fn setup(seed: u64) -> SamplePath {
        let g = TimeGrid::new(1.0, 128, 0.125).unwrap();
        simulate_brownian(&g, seed, 1).unwrap()
    }

    #[test]
    fn trivial_flows() {
        let w = setup(1);
        let g = *w.grid();
        for k in [0, 1, 50, 128] {
            let t = g.time(k);
            for x in [-1.5, 0.0, 2.0] {
                let frozen = evaluate_flow(&catalog_flow("frozen").unwrap(), &w, t, &[x]).unwrap();
                assert_eq!(frozen, x);
                let drift = evaluate_flow(&catalog_flow("drift-only").unwrap(), &w, t, &[x]).unwrap();
                assert!((drift - (x + t)).abs() < 1e-13);
                let noise = evaluate_flow(&catalog_flow("additive-noise").unwrap(), &w, t, &[x]).unwrap();
                assert!((noise - (x + w.at(k))).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn polynomial_derivatives() {
        let w = setup(2);
        let frozen = catalog_flow("frozen").unwrap();
        assert_eq!(flow_spatial_derivative(&frozen, &w, 0.5, &[3.0], 1).unwrap(), 1.0);
        assert_eq!(flow_spatial_derivative(&frozen, &w, 0.5, &[3.0], 2).unwrap(), 0.0);
        let sq = catalog_flow("square").unwrap();
        assert_eq!(flow_spatial_derivative(&sq, &w, 0.5, &[3.0], 1).unwrap(), 6.0);
        assert_eq!(flow_spatial_derivative(&sq, &w, 0.5, &[3.0], 2).unwrap(), 2.0);
        let kink = catalog_flow("c01-kink").unwrap();
        assert!(matches!(
            flow_spatial_derivative(&kink, &w, 0.5, &[1.0], 2),
            Err(Error::Capability(_))
        ));
        assert!(matches!(
            FlowPath::new(&kink, &w).unwrap().fxx(3, &[1.0]),
            Err(Error::Capability(_))
        ));
    }

    #[test]
    fn finite_difference_of_linear_noise() {
        let w = setup(3);
        let mut flow = catalog_flow("linear-noise").unwrap();
        // strip the analytic pieces so the finite-difference route runs
        flow.f0.dx = None;
        flow.derivatives.gamma_x = None;
        assert!(!flow.has_analytic_fx());
        for k in [10, 64, 128] {
            let t = w.grid().time(k);
            let fd = flow_spatial_derivative(&flow, &w, t, &[0.7], 1).unwrap();
            assert!((fd - (1.0 + w.at(k))).abs() < 1e-6, "{fd}");
        }
    }

    #[test]
    fn substitution_examples() {
        let w = setup(4);
        let add = catalog_flow("additive-noise").unwrap();
        let (d, n) = substitute_random_point(&add, &w, 0.25, 0.75, &[5.0]).unwrap();
        assert_eq!(d, 0.0);
        assert!((n - (w.at(96) - w.at(32))).abs() < 1e-13);

        let beta_x = StochasticFlow::separable(
            "beta-x",
            SpaceTerm::identity(),
            vec![SeparableTerm::of_time(|_| 1.0, SpaceTerm::identity())],
            vec![],
            1,
            super::Smoothness::C02,
        )
        .unwrap();
        let (d, _) = substitute_random_point(&beta_x, &w, 0.25, 0.75, &[2.0]).unwrap();
        assert!((d - 2.0 * 0.5).abs() < 1e-13);

        let lin = catalog_flow("linear-noise").unwrap();
        let g = 1.0 + w.at(32).sin();
        let (_, n) = substitute_random_point(&lin, &w, 0.25, 0.75, &[g]).unwrap();
        assert!((n - g * (w.at(96) - w.at(32))).abs() < 1e-13);

        assert!(matches!(
            substitute_random_point(&lin, &w, 0.75, 0.25, &[g]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn non_finite_field_names_time_and_point() {
        let w = setup(5);
        let bad = StochasticFlow::separable(
            "bad",
            SpaceTerm::identity(),
            vec![SeparableTerm::of_time(|_| 1.0, SpaceTerm::new(|x| 1.0 / x[0]))],
            vec![],
            1,
            super::Smoothness::C01,
        )
        .unwrap();
        match evaluate_flow(&bad, &w, 0.5, &[0.0]) {
            Err(Error::Evaluation { time, x, .. }) => {
                assert_eq!(time, 0.0);
                assert_eq!(x, vec![0.0]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fields_never_see_the_future() {
        let w = setup(6);
        let k = 40;
        let mut tampered = w.values().to_vec();
        for v in &mut tampered[k + 1..] {
            *v += 100.0;
        }
        let w2 = SamplePath::scalar(*w.grid(), tampered, ProcessRole::Driver).unwrap();
        let f = StochasticFlow::separable(
            "path-dependent",
            SpaceTerm::identity(),
            vec![SeparableTerm::new(
                |v| v.history().iter().fold(0.0f64, |m, x| m.max(x.abs())),
                SpaceTerm::identity(),
            )],
            vec![SeparableTerm::new(|v| v.current(0).cos(), SpaceTerm::identity())],
            1,
            super::Smoothness::C02,
        )
        .unwrap();
        let t = w.grid().time(k);
        assert_eq!(
            evaluate_flow(&f, &w, t, &[0.3]).unwrap(),
            evaluate_flow(&f, &w2, t, &[0.3]).unwrap()
        );
        assert_eq!(
            FlowPath::new(&f, &w).unwrap().value(k, &[0.3]).unwrap(),
            FlowPath::new(&f, &w2).unwrap().value(k, &[0.3]).unwrap()
        );
    }

    #[test]
    fn continuation_clamps_to_the_horizon() {
        let w = setup(7);
        let f = catalog_flow("kink-mixed").unwrap();
        let fp = FlowPath::new(&f, &w).unwrap();
        let n = w.grid().n_steps();
        assert_eq!(fp.value(n + 9, &[0.4]).unwrap(), fp.value(n, &[0.4]).unwrap());
        assert_eq!(fp.increments(n - 2, n + 5, &[0.4]).unwrap(), fp.increments(n - 2, n, &[0.4]).unwrap());
    }

    #[test]
    fn gamma_deviation_of_time_noise() {
        let w = setup(8);
        let f = catalog_flow("time-noise").unwrap();
        let fp = FlowPath::new(&f, &w).unwrap();
        let dt = w.grid().dt();
        let (r, t) = (20, 36);
        let direct: f64 = (r..t).map(|j| (j - r) as f64 * dt * (w.at(j + 1) - w.at(j))).sum();
        assert!((fp.gamma_deviation(r, t, &[0.0]).unwrap() - direct).abs() < 1e-13);
        let lin = catalog_flow("linear-noise").unwrap();
        let fp = FlowPath::new(&lin, &w).unwrap();
        assert!(fp.gamma_deviation(r, t, &[1.7]).unwrap().abs() < 1e-14);
    }

    #[test]
    fn analytic_and_finite_difference_agree_on_the_box() {
        let w = setup(9);
        let dt = w.grid().dt();
        for name in catalog_names() {
            let flow = catalog_flow(name).unwrap();
            let fp = FlowPath::new(&flow, &w).unwrap();
            let (lo, hi) = flow.chars.compact_box[0];
            // lattice offset so that no point sits within h of the kink at 0
            for i in 0..16 {
                let x = lo + (hi - lo) * (i as f64 + 0.37) / 16.0;
                for k in [0, 57, 128] {
                    let exact = fp.fx(k, &[x]).unwrap();
                    let h = FD_RELATIVE_STEP * x.abs().max(1.0);
                    let fd = (fp.value(k, &[x + h]).unwrap() - fp.value(k, &[x - h]).unwrap()) / (2.0 * h);
                    assert!(
                        (fd - exact).abs() <= (1e-6f64).max(1e-4 * exact.abs()),
                        "{name} at ({}, {x}): {fd} vs {exact}",
                        k as f64 * dt
                    );
                }
            }
        }
    }

    fn pair() -> impl Strategy<Value = (usize, usize)> {
        let n = catalog_names().len();
        (0..n, 0..n)
    }

    proptest! {
        #[test]
        fn cached_and_direct_routes_agree(seed in any::<u64>(), i in 0usize..8, x in -3.0f64..3.0, k in 0usize..=140) {
            let w = setup(seed);
            let flow = catalog_flow(catalog_names()[i]).unwrap();
            let cached = FlowPath::new(&flow, &w).unwrap();
            let direct = FlowPath::direct(&flow, &w).unwrap();
            prop_assert!(cached.is_cached() && !direct.is_cached());
            let a = cached.value(k, &[x]).unwrap();
            let b = direct.value(k, &[x]).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            let a = cached.fx(k, &[x]).unwrap();
            let b = direct.fx(k, &[x]).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            prop_assert!((cached.gamma(k, &[x], 0).unwrap() - direct.gamma(k, &[x], 0).unwrap()).abs() <= 1e-15);
            prop_assert!((cached.beta(k, &[x]).unwrap() - direct.beta(k, &[x]).unwrap()).abs() <= 1e-15);
        }

        #[test]
        fn evaluation_is_linear_in_the_flow(seed in any::<u64>(), (i, j) in pair(), x in -3.0f64..3.0, m in 0usize..=128) {
            let w = setup(seed);
            let f = catalog_flow(catalog_names()[i]).unwrap();
            let g = catalog_flow(catalog_names()[j]).unwrap();
            let s = f.sum(&g).unwrap();
            let t = w.grid().time(m);
            let lhs = evaluate_flow(&s, &w, t, &[x]).unwrap();
            let a = evaluate_flow(&f, &w, t, &[x]).unwrap();
            let b = evaluate_flow(&g, &w, t, &[x]).unwrap();
            prop_assert!((lhs - a - b).abs() <= 1e-12 * (1.0 + a.abs() + b.abs()));
        }

        #[test]
        fn substitution_splits_the_flow_increment(seed in any::<u64>(), i in 0usize..8, x in -3.0f64..3.0, r in 0usize..=128, len in 0usize..=128) {
            let w = setup(seed);
            let flow = catalog_flow(catalog_names()[i]).unwrap();
            let t = (r + len).min(128);
            let g = *w.grid();
            let (d, n) = substitute_random_point(&flow, &w, g.time(r), g.time(t), &[x]).unwrap();
            let direct = FlowPath::direct(&flow, &w).unwrap();
            let (d0, n0) = direct.increments(0, r, &[x]).unwrap();
            let (d1, n1) = direct.increments(0, t, &[x]).unwrap();
            prop_assert!((d - (d1 - d0)).abs() <= 1e-12 * (1.0 + d1.abs()));
            prop_assert!((n - (n1 - n0)).abs() <= 1e-12 * (1.0 + n1.abs()));
            let diff = evaluate_flow(&flow, &w, g.time(t), &[x]).unwrap() - evaluate_flow(&flow, &w, g.time(r), &[x]).unwrap();
            prop_assert!((diff - d - n).abs() <= 1e-12 * (1.0 + diff.abs()));
        }
    }
}
