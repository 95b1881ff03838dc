//! ε-regularized covariation and forward integrals on the grid.
//!
//! Every estimator is a left-point Riemann sum over the nodes `t_k < t`,
//! with increments `X(t_k + ε) - X(t_k)` read through constant
//! continuation past `T`. The `*_curve` variants return the running sum at
//! every node of `[0, T]`; the scalar variants return one entry of it.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::pathkit::SamplePath;

/// One ε-regularized estimate at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizationEstimate {
    pub t: f64,
    pub eps: f64,
    pub value: f64,
    /// Number of left-point terms in the sum.
    pub quadrature_nodes: usize,
}

fn check_pair(x: &SamplePath, y: &SamplePath) -> Result<()> {
    x.require_same_grid(y, "regularization integral")?;
    x.require_scalar("integrator")?;
    y.require_scalar("integrator")
}

/// Steps spanned by ε, validated against the widest continuation margin
/// among `paths`.
fn eps_steps(paths: &[&SamplePath], eps: f64) -> Result<usize> {
    let widest = paths
        .iter()
        .max_by_key(|p| p.grid().margin_steps())
        .expect("at least one path");
    widest.grid().epsilon_steps(eps)
}

/// Running left-point sum `c[m] = sum_{k<m} f(k) * scale`.
fn cumulate(n_nodes: usize, scale: f64, f: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_nodes);
    let mut acc = 0.0;
    out.push(acc);
    for k in 0..n_nodes - 1 {
        acc += f(k) * scale;
        out.push(acc);
    }
    out
}

fn estimate(curve: &[f64], path: &SamplePath, eps: f64, t: f64) -> Result<RegularizationEstimate> {
    let m = path.grid().node_index(t)?;
    Ok(RegularizationEstimate {
        t,
        eps,
        value: curve[m],
        quadrature_nodes: m,
    })
}

/// `[X, Y]^ε` at every node.
pub fn eps_covariation_curve(x: &SamplePath, y: &SamplePath, eps: f64) -> Result<Vec<f64>> {
    check_pair(x, y)?;
    let e = eps_steps(&[x, y], eps)?;
    let scale = x.grid().dt() / eps;
    Ok(cumulate(x.n_nodes(), scale, |k| {
        (x.at(k + e) - x.at(k)) * (y.at(k + e) - y.at(k))
    }))
}

/// `[X, Y]^ε_t = sum_{t_k < t} (X(t_k+ε) - X(t_k)) (Y(t_k+ε) - Y(t_k)) / ε * dt`.
pub fn eps_covariation(x: &SamplePath, y: &SamplePath, eps: f64, t: f64) -> Result<RegularizationEstimate> {
    let curve = eps_covariation_curve(x, y, eps)?;
    estimate(&curve, x, eps, t)
}

/// `∫ H d[X, Y]^ε` at every node.
pub fn weighted_eps_covariation_curve(
    h: &SamplePath,
    x: &SamplePath,
    y: &SamplePath,
    eps: f64,
) -> Result<Vec<f64>> {
    check_pair(x, y)?;
    h.require_same_grid(x, "weight")?;
    h.require_scalar("weight")?;
    let e = eps_steps(&[x, y], eps)?;
    let scale = x.grid().dt() / eps;
    Ok(cumulate(x.n_nodes(), scale, |k| {
        h.at(k) * ((x.at(k + e) - x.at(k)) * (y.at(k + e) - y.at(k)))
    }))
}

pub fn weighted_eps_covariation(
    h: &SamplePath,
    x: &SamplePath,
    y: &SamplePath,
    eps: f64,
    t: f64,
) -> Result<RegularizationEstimate> {
    let curve = weighted_eps_covariation_curve(h, x, y, eps)?;
    estimate(&curve, x, eps, t)
}

/// `∫ H d⁻Y` at ε, at every node.
pub fn eps_forward_integral_curve(h: &SamplePath, y: &SamplePath, eps: f64) -> Result<Vec<f64>> {
    check_pair(h, y)?;
    let e = eps_steps(&[h, y], eps)?;
    let scale = y.grid().dt() / eps;
    Ok(cumulate(y.n_nodes(), scale, |k| h.at(k) * (y.at(k + e) - y.at(k))))
}

/// `sum_{t_k < t} H(t_k) (Y(t_k+ε) - Y(t_k)) / ε * dt`.
pub fn eps_forward_integral(h: &SamplePath, y: &SamplePath, eps: f64, t: f64) -> Result<RegularizationEstimate> {
    let curve = eps_forward_integral_curve(h, y, eps)?;
    estimate(&curve, y, eps, t)
}

/// Itô sum `sum_{t_k < t} H(t_k) (Y(t_{k+1}) - Y(t_k))` at every node.
pub fn ito_integral_curve(h: &SamplePath, y: &SamplePath) -> Result<Vec<f64>> {
    check_pair(h, y)?;
    Ok(cumulate(y.n_nodes(), 1.0, |k| h.at(k) * (y.at(k + 1) - y.at(k))))
}

pub fn ito_integral_oracle(h: &SamplePath, y: &SamplePath, t: f64) -> Result<f64> {
    let curve = ito_integral_curve(h, y)?;
    let m = y.grid().node_index(t)?;
    Ok(curve[m])
}

/// Least-squares slope of `log|value|` against `log ε`.
///
/// Reported next to convergence studies; nothing is extrapolated from it.
/// Returns `None` with fewer than two usable points.
pub fn loglog_slope(eps: &[f64], values: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = eps
        .iter()
        .zip(values)
        .filter(|(e, v)| **e > 0.0 && v.abs() > 0.0 && v.is_finite())
        .map(|(e, v)| (e.ln(), v.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// CSV with columns `t,epsilon,value,n_nodes`; floats carry 17
/// significant digits.
pub fn write_csv<W: Write>(rows: &[RegularizationEstimate], out: &mut W) -> Result<()> {
    writeln!(out, "t,epsilon,value,n_nodes")?;
    for r in rows {
        writeln!(out, "{:.16e},{:.16e},{:.16e},{}", r.t, r.eps, r.value, r.quadrature_nodes)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathkit::{simulate_brownian, ProcessRole, TimeGrid};
    use crate::Error;
    use proptest::prelude::*;

    fn grid(n: usize, margin: f64) -> TimeGrid {
        TimeGrid::new(1.0, n, margin).unwrap()
    }

    #[test]
    fn hand_quadrature() {
        let g = grid(2, 0.5);
        let x = SamplePath::scalar(g, vec![0.0, 1.0, 0.0], ProcessRole::Composite).unwrap();
        let est = eps_covariation(&x, &x, 0.5, 0.5).unwrap();
        assert_eq!(est.value, 1.0);
        assert_eq!(est.quadrature_nodes, 1);
        // second term: (0 - 1)^2 / 0.5 * 0.5, then constant continuation
        assert_eq!(eps_covariation(&x, &x, 0.5, 1.0).unwrap().value, 2.0);
    }

    #[test]
    fn identity_path_gives_eps_times_t() {
        let g = grid(64, 0.25);
        let x = SamplePath::from_fn(g, ProcessRole::Deterministic, |t| t);
        let eps = 0.125;
        let t = 0.5;
        let v = eps_covariation(&x, &x, eps, t).unwrap().value;
        assert!((v - eps * t).abs() < 1e-14);
    }

    #[test]
    fn errors() {
        let g = grid(8, 0.25);
        let x = SamplePath::from_fn(g, ProcessRole::Deterministic, |t| t);
        let other = SamplePath::from_fn(grid(16, 0.25), ProcessRole::Deterministic, |t| t);
        assert!(matches!(eps_covariation(&x, &other, 0.125, 1.0), Err(Error::Contract(_))));
        assert!(matches!(eps_covariation(&x, &x, 0.1, 1.0), Err(Error::Config(_))));
        assert!(matches!(eps_covariation(&x, &x, 0.5, 1.0), Err(Error::Config(_))));
        assert!(matches!(eps_covariation(&x, &x, 0.125, 0.3), Err(Error::Config(_))));
        let v = SamplePath::new(g, 2, vec![0.0; 18], ProcessRole::Driver).unwrap();
        assert!(matches!(eps_covariation(&v, &v, 0.125, 1.0), Err(Error::Contract(_))));
    }

    #[test]
    fn unit_and_zero_weights() {
        let g = grid(256, 1.0 / 16.0);
        let w = simulate_brownian(&g, 3, 1).unwrap();
        let one = SamplePath::constant(g, 1.0, ProcessRole::Deterministic);
        let zero = SamplePath::constant(g, 0.0, ProcessRole::Deterministic);
        let eps = 1.0 / 32.0;
        assert_eq!(
            weighted_eps_covariation(&one, &w, &w, eps, 1.0).unwrap().value,
            eps_covariation(&w, &w, eps, 1.0).unwrap().value
        );
        assert_eq!(weighted_eps_covariation(&zero, &w, &w, eps, 1.0).unwrap().value, 0.0);
    }

    #[test]
    fn constant_integrand_telescopes_in_the_ito_sum() {
        let g = grid(128, 0.0);
        let w = simulate_brownian(&g, 8, 1).unwrap();
        let c = SamplePath::constant(g, 2.5, ProcessRole::Deterministic);
        let v = ito_integral_oracle(&c, &w, 1.0).unwrap();
        assert!((v - 2.5 * w.terminal()).abs() < 1e-12);
    }

    #[test]
    fn forward_integral_of_one_is_a_window_average() {
        let g = grid(512, 1.0 / 8.0);
        let w = simulate_brownian(&g, 21, 1).unwrap();
        let one = SamplePath::constant(g, 1.0, ProcessRole::Deterministic);
        let eps = 1.0 / 16.0;
        let e = g.epsilon_steps(eps).unwrap();
        let t = 0.5;
        let m = g.node_index(t).unwrap();
        let avg = |from: usize| (from..from + e).map(|k| w.at(k)).sum::<f64>() / e as f64;
        let expected = avg(m) - avg(0);
        let got = eps_forward_integral(&one, &w, eps, t).unwrap().value;
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn riemann_stieltjes_value() {
        let g = grid(4096, 0.0);
        let h = SamplePath::from_fn(g, ProcessRole::Deterministic, |t| t);
        let y = SamplePath::from_fn(g, ProcessRole::Deterministic, |t| t * t);
        let v = ito_integral_oracle(&h, &y, 1.0).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 2.0 * g.dt());
    }

    #[test]
    fn slope_of_power_law() {
        let eps = [0.5, 0.25, 0.125];
        let vals: Vec<f64> = eps.iter().map(|e: &f64| 3.0 * e.sqrt()).collect();
        assert!((loglog_slope(&eps, &vals).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(loglog_slope(&[0.5], &[1.0]), None);
    }

    #[test]
    fn csv_layout() {
        let rows = [RegularizationEstimate {
            t: 1.0,
            eps: 0.5,
            value: 0.1,
            quadrature_nodes: 3,
        }];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "t,epsilon,value,n_nodes\n1.0000000000000000e0,5.0000000000000000e-1,1.0000000000000001e-1,3\n"
        );
    }

    fn rel_close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
    }

    proptest! {
        #[test]
        fn covariation_is_symmetric_and_additive(s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>(), j in 1usize..4) {
            let g = grid(128, 0.125);
            let eps = 0.125 / (1 << (j - 1)) as f64;
            let x1 = simulate_brownian(&g, s1, 1).unwrap();
            let x2 = simulate_brownian(&g, s2, 1).unwrap();
            let y = simulate_brownian(&g, s3, 1).unwrap();
            let a = eps_covariation_curve(&x1, &y, eps).unwrap();
            let b = eps_covariation_curve(&y, &x1, eps).unwrap();
            prop_assert_eq!(&a, &b);
            let sum = x1.add(&x2, ProcessRole::Composite).unwrap();
            let lhs = eps_covariation_curve(&sum, &y, eps).unwrap();
            let rhs = eps_covariation_curve(&x2, &y, eps).unwrap();
            for k in 0..lhs.len() {
                prop_assert!(rel_close(lhs[k], a[k] + rhs[k]));
            }
        }

        #[test]
        fn forward_integral_is_linear(s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>(), c in -3.0f64..3.0) {
            let g = grid(128, 0.125);
            let eps = 1.0 / 16.0;
            let h1 = simulate_brownian(&g, s1, 1).unwrap();
            let h2 = simulate_brownian(&g, s2, 1).unwrap();
            let y = simulate_brownian(&g, s3, 1).unwrap();
            let combo = h1.map(ProcessRole::Composite, |k, r| r[0] + c * h2.at(k));
            let lhs = eps_forward_integral_curve(&combo, &y, eps).unwrap();
            let a = eps_forward_integral_curve(&h1, &y, eps).unwrap();
            let b = eps_forward_integral_curve(&h2, &y, eps).unwrap();
            for k in 0..lhs.len() {
                prop_assert!((lhs[k] - a[k] - c * b[k]).abs() <= 1e-12 * (1.0 + a[k].abs() + (c * b[k]).abs()));
            }
            let y2 = simulate_brownian(&g, s1 ^ s3, 1).unwrap();
            let ysum = y.add(&y2, ProcessRole::Composite).unwrap();
            let lhs = eps_forward_integral_curve(&h1, &ysum, eps).unwrap();
            let b = eps_forward_integral_curve(&h1, &y2, eps).unwrap();
            for k in 0..lhs.len() {
                prop_assert!((lhs[k] - a[k] - b[k]).abs() <= 1e-12 * (1.0 + a[k].abs() + b[k].abs()));
            }
        }

        #[test]
        fn curve_increments_are_bounded_by_the_integrand(seed in any::<u64>()) {
            let g = grid(256, 1.0 / 16.0);
            let eps = 1.0 / 32.0;
            let e = g.epsilon_steps(eps).unwrap();
            let w = simulate_brownian(&g, seed, 1).unwrap();
            let curve = eps_covariation_curve(&w, &w, eps).unwrap();
            let sup = (0..g.n_nodes()).map(|k| (w.at(k + e) - w.at(k)).powi(2) / eps).fold(0.0, f64::max);
            for k in 1..curve.len() {
                prop_assert!((curve[k] - curve[k - 1]).abs() <= sup * g.dt() * (1.0 + 1e-12));
            }
        }

        #[test]
        fn scalar_matches_curve_bitwise(seed in any::<u64>(), m in 0usize..=64) {
            let g = grid(64, 0.25);
            let w = simulate_brownian(&g, seed, 1).unwrap();
            let curve = eps_covariation_curve(&w, &w, 0.125).unwrap();
            let t = g.time(m);
            prop_assert_eq!(eps_covariation(&w, &w, 0.125, t).unwrap().value.to_bits(), curve[m].to_bits());
        }
    }
}
