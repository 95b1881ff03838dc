//! Sampled checks of the regularity a flow's author declares.
//!
//! Continuity and integrability cannot be certified from samples, only
//! falsified; both checks report what they saw and a pass flag.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::pathkit::SamplePath;

use super::eval::FlowPath;
use super::StochasticFlow;

/// Scale of the two-point quotient in [`holder_check`].
pub const HOLDER_SCALE: f64 = 1e-3;
/// A quotient above this multiple of the declared constant is a rejection.
pub const HOLDER_SLACK: f64 = 10.0;
const LATTICE: usize = 9;
const TIME_SAMPLES: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderCheck {
    pub alpha: f64,
    pub declared_constant: f64,
    pub max_quotient: f64,
    /// Time and point of the largest quotient.
    pub worst: (f64, Vec<f64>),
    pub pass: bool,
}

fn lattice(bx: &[(f64, f64)]) -> Vec<Vec<f64>> {
    let per_axis = if bx.len() <= 2 { LATTICE } else { 3 };
    let mut points = vec![vec![]];
    for &(lo, hi) in bx {
        let mut next = Vec::new();
        for p in &points {
            for i in 0..per_axis {
                let mut q = p.clone();
                q.push(lo + (hi - lo) * i as f64 / (per_axis - 1) as f64);
                next.push(q);
            }
        }
        points = next;
    }
    points
}

fn time_nodes(driver: &SamplePath) -> Vec<usize> {
    let n = driver.grid().n_steps();
    (0..TIME_SAMPLES).map(|i| i * n / (TIME_SAMPLES - 1)).collect()
}

/// Largest `|γ(t, x + h e_i) - γ(t, x)| / h^α` over a lattice on the
/// declared box and nine time nodes, with `h = 1e-3`.
pub fn holder_check(flow: &StochasticFlow, driver: &SamplePath) -> Result<HolderCheck> {
    let fp = FlowPath::new(flow, driver)?;
    let alpha = flow.chars.holder_alpha;
    let h = HOLDER_SCALE;
    let mut max_q = 0.0;
    let mut worst = (0.0, vec![]);
    for k in time_nodes(driver) {
        for x in lattice(&flow.chars.compact_box) {
            for i in 0..flow.dim() {
                let mut y = x.clone();
                y[i] += h;
                let mut diff = 0.0f64;
                for j in 0..flow.dim() {
                    let d = fp.gamma(k, &y, j)? - fp.gamma(k, &x, j)?;
                    diff += d * d;
                }
                let q = diff.sqrt() / h.powf(alpha);
                if q > max_q {
                    max_q = q;
                    worst = (driver.grid().time(k), x.clone());
                }
            }
        }
    }
    let declared = flow.chars.holder_constant;
    Ok(HolderCheck {
        alpha,
        declared_constant: declared,
        max_quotient: max_q,
        worst,
        pass: max_q <= HOLDER_SLACK * declared + 1e-12,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrabilityCheck {
    /// `Σ_k sup_{x∈K} |β(t_k, x)| dt` over the lattice.
    pub beta_l1: f64,
    /// `Σ_k sup_{x∈K} |γ(t_k, x)|² dt` over the lattice.
    pub gamma_l2: f64,
    pub finite: bool,
}

/// Sampled pathwise versions of `sup_K |β| ∈ L¹(dt)` and
/// `sup_K |γ| ∈ L²(dt)` along one driver path.
pub fn integrability_check(flow: &StochasticFlow, driver: &SamplePath) -> Result<IntegrabilityCheck> {
    let fp = FlowPath::new(flow, driver)?;
    let dt = driver.grid().dt();
    let points = lattice(&flow.chars.compact_box);
    let stride = (driver.grid().n_steps() / 256).max(1);
    let mut beta_l1 = 0.0;
    let mut gamma_l2 = 0.0;
    for k in (0..driver.grid().n_steps()).step_by(stride) {
        let mut sb = 0.0f64;
        let mut sg = 0.0f64;
        for x in &points {
            sb = sb.max(fp.beta(k, x)?.abs());
            let mut g2 = 0.0;
            for j in 0..flow.dim() {
                g2 += fp.gamma(k, x, j)?.powi(2);
            }
            sg = sg.max(g2);
        }
        beta_l1 += sb * dt * stride as f64;
        gamma_l2 += sg * dt * stride as f64;
    }
    Ok(IntegrabilityCheck {
        beta_l1,
        gamma_l2,
        finite: beta_l1.is_finite() && gamma_l2.is_finite(),
    })
}
