//! Term-by-term decomposition of `[F(·, X), N]^ε` and numerical checks of
//! the convergence lemmas and moment bounds behind it.
//!
//! With `ΔX_r = X_{r+ε} - X_r` (likewise `ΔN`, `ΔW`) and all integrals as
//! left-point sums scaled by `dt/ε`:
//!
//! * `I1 = ∫[F(r+ε, X_{r+ε}) - F(r+ε, X_r)] ΔN`, `I2 = ∫[F(r+ε, X_r) - F(r, X_r)] ΔN`
//! * `I1 = I11 + R11 + R12` with weights `F_x(r, X_r)`, `Y_r` and `Z_r` on `ΔX ΔN`
//! * `I2 = I21 + R21 + R22` with `γ(r, X_r) ΔW ΔN`, `ε Ỹ_r ΔN` and `√ε Z̃_r ΔN`
//!
//! where `Y_r = F_x(r+ε, X_r) - F_x(r, X_r)`,
//! `Z_r = ∫₀¹ [F_x(r+ε, X_r + λΔX_r) - F_x(r+ε, X_r)] dλ`,
//! `Ỹ_r = ε⁻¹ ∫_r^{r+ε} β(s, X_r) ds` and
//! `Z̃_r = ε^{-1/2} ∫_r^{r+ε} [γ(s, X_r) - γ(r, X_r)] dW_s`.

use std::cell::Cell;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ensemble::map_paths;
use crate::error::{contract, Error, Result};
use crate::flowkit::{FlowPath, StochasticFlow};
use crate::pathkit::{SamplePath, TimeGrid, WeakDirichletPaths};
use crate::quadrature::{gl16, gl16_adaptive_budget};
use crate::sum;
use crate::ucpstats::{
    convergence_verdict, decreasing_up_to_overlap, moment_estimate, ConvergenceVerdict, Interval, UcpEstimate,
};
use crate::ventzell::{check_inputs, TestMartingale};

/// Nodewise reconstruction identities must hold to this relative error.
pub const RECONSTRUCTION_TOLERANCE: f64 = 1e-10;
/// Error budget of the adaptive λ-rule, relative to `max(1, |F_x|)`.
const LAMBDA_REL_TOL: f64 = 1e-14;
const LAMBDA_MAX_DEPTH: u32 = 50;
const LAMBDA_MAX_PANELS: usize = 512;
/// With finite-difference `F_x` the rule cannot match F-increments exactly.
const FD_LAMBDA_MAX_DEPTH: u32 = 12;
/// Moment checks call `Z̃` degenerate when every sample is below this.
pub const DEGENERATE_TOLERANCE: f64 = 1e-12;
/// Mao checks sample `r` on this many nodes.
pub const MAO_R_NODES: usize = 9;
/// Side of the `(s, t)` lattice on which `B₂` and `B̃₂` are spot-computed.
pub const MAO_SPOT_LATTICE: usize = 33;

/// All proof terms of one realization at one ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofTermSet {
    pub eps: f64,
    pub grid: TimeGrid,
    /// `[F(·, X), N]^ε`.
    pub full: Vec<f64>,
    pub i1: Vec<f64>,
    pub i2: Vec<f64>,
    pub i11: Vec<f64>,
    pub r11: Vec<f64>,
    pub r12: Vec<f64>,
    pub i21: Vec<f64>,
    pub r21: Vec<f64>,
    pub r22: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub y_tilde: Vec<f64>,
    pub z_tilde: Vec<f64>,
}

/// Relative reconstruction errors, sup over nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    /// `full` against `I1 + I2`.
    pub split: f64,
    /// `I1` against `I11 + R11 + R12`.
    pub first: f64,
    /// `I2` against `I21 + R21 + R22`.
    pub second: f64,
}

impl Reconstruction {
    pub fn worst(&self) -> f64 {
        self.split.max(self.first).max(self.second)
    }

    pub fn holds(&self) -> bool {
        self.worst() <= RECONSTRUCTION_TOLERANCE
    }
}

fn relative_gap(whole: &[f64], parts: &[&[f64]]) -> f64 {
    let mut scale = sum::sup_abs(whole);
    for p in parts {
        scale = scale.max(sum::sup_abs(p));
    }
    if scale == 0.0 {
        return 0.0;
    }
    let gap = (0..whole.len())
        .map(|k| (whole[k] - parts.iter().map(|p| p[k]).sum::<f64>()).abs())
        .fold(0.0, f64::max);
    gap / scale
}

impl ProofTermSet {
    pub const TERM_NAMES: [&'static str; 8] = ["I1", "I2", "I11", "R11", "R12", "I21", "R21", "R22"];

    pub fn terms(&self) -> [&[f64]; 8] {
        [
            &self.i1, &self.i2, &self.i11, &self.r11, &self.r12, &self.i21, &self.r21, &self.r22,
        ]
    }

    pub fn reconstruction(&self) -> Reconstruction {
        Reconstruction {
            split: relative_gap(&self.full, &[&self.i1, &self.i2]),
            first: relative_gap(&self.i1, &[&self.i11, &self.r11, &self.r12]),
            second: relative_gap(&self.i2, &[&self.i21, &self.r21, &self.r22]),
        }
    }

    pub fn summary(&self) -> ProofTermSummary {
        let t = self.terms();
        let sup = |i: usize| sum::sup_abs(t[i]);
        ProofTermSummary {
            eps: self.eps,
            sup_y: sum::sup_abs(&self.y),
            sup_z: sum::sup_abs(&self.z),
            sup_terms: std::array::from_fn(sup),
            terminal: std::array::from_fn(|i| *t[i].last().expect("nonempty grid")),
            reconstruction: self.reconstruction(),
        }
    }

    /// Rows are grid nodes, columns the eight terms and the full covariation.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "t,{},full", Self::TERM_NAMES.join(","))?;
        let terms = self.terms();
        for k in 0..self.full.len() {
            write!(out, "{:.16e}", self.grid.time(k))?;
            for term in terms {
                write!(out, ",{:.16e}", term[k])?;
            }
            writeln!(out, ",{:.16e}", self.full[k])?;
        }
        Ok(())
    }
}

/// Per-realization digest of a [`ProofTermSet`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProofTermSummary {
    pub eps: f64,
    pub sup_y: f64,
    pub sup_z: f64,
    /// `sup_t |term(t)|` in [`ProofTermSet::TERM_NAMES`] order.
    pub sup_terms: [f64; 8],
    /// Terms at `T`, same order.
    pub terminal: [f64; 8],
    pub reconstruction: Reconstruction,
}

/// Every proof term of `[F(·, X), N]^ε` along one realization.
pub fn compute_proof_terms(
    flow: &StochasticFlow,
    paths: &WeakDirichletPaths,
    n: &SamplePath,
    eps: f64,
) -> Result<ProofTermSet> {
    check_inputs(flow, paths)?;
    n.require_scalar("N")?;
    n.require_same_grid(&paths.x, "N")?;
    let WeakDirichletPaths { x, driver: w, .. } = paths;
    let grid = *x.grid();
    let e = grid.epsilon_steps(eps)?;
    let fp = FlowPath::new(flow, w)?;
    let adaptive = flow.piecewise_fx || !flow.has_analytic_fx();
    let scale = grid.dt() / eps;
    let sqrt_eps = eps.sqrt();
    let nodes = grid.n_nodes();

    let mut set = ProofTermSet {
        eps,
        grid,
        full: Vec::with_capacity(nodes),
        i1: Vec::with_capacity(nodes),
        i2: Vec::with_capacity(nodes),
        i11: Vec::with_capacity(nodes),
        r11: Vec::with_capacity(nodes),
        r12: Vec::with_capacity(nodes),
        i21: Vec::with_capacity(nodes),
        r21: Vec::with_capacity(nodes),
        r22: Vec::with_capacity(nodes),
        y: Vec::with_capacity(nodes),
        z: Vec::with_capacity(nodes),
        y_tilde: Vec::with_capacity(nodes),
        z_tilde: Vec::with_capacity(nodes),
    };
    let mut acc = [0.0f64; 9];
    for k in 0..nodes {
        let xk = x.at(k);
        let dx = x.at(k + e) - xk;
        let dn = n.at(k + e) - n.at(k);
        let dw = w.at(k + e) - w.at(k);

        let f_k = fp.value(k, &[xk])?;
        let f_e_xe = fp.value(k + e, &[xk + dx])?;
        let f_e_xk = fp.value(k + e, &[xk])?;
        let (drift, noise) = fp.increments(k, k + e, &[xk])?;
        let fx_k = fp.fx(k, &[xk])?;
        let fx_e = fp.fx(k + e, &[xk])?;
        let gamma = fp.gamma(k, &[xk], 0)?;

        let y = fx_e - fx_k;
        let z = if dx == 0.0 {
            0.0
        } else {
            let failure = Cell::new(None);
            let keep = |r: Result<f64>| {
                r.unwrap_or_else(|err| {
                    failure.set(Some(err));
                    0.0
                })
            };
            let g = |lambda: f64| keep(fp.fx(k + e, &[xk + lambda * dx])) - fx_e;
            let v = if !adaptive {
                gl16(&g, 0.0, 1.0)
            } else if flow.has_analytic_fx() {
                // F is known along the segment, so each panel's exact
                // integral is an F-increment and serves as the error estimate
                let panel = |a: f64, b: f64| {
                    let fa = keep(fp.value(k + e, &[xk + a * dx]));
                    let fb = keep(fp.value(k + e, &[xk + b * dx]));
                    ((fb - fa) / dx - (b - a) * fx_e, 64.0 * f64::EPSILON * (1.0 + fa.abs() + fb.abs()) / dx.abs())
                };
                let panels = Cell::new(0);
                lambda_refine(&g, &panel, &panels, 0.0, 1.0, LAMBDA_REL_TOL * fx_e.abs().max(1.0), LAMBDA_MAX_DEPTH)
            } else {
                gl16_adaptive_budget(&g, 0.0, 1.0, LAMBDA_REL_TOL * fx_e.abs().max(1.0), FD_LAMBDA_MAX_DEPTH)
            };
            if let Some(err) = failure.take() {
                return Err(err);
            }
            v
        };
        let deviation = noise - gamma * dw;

        set.y.push(y);
        set.z.push(z);
        set.y_tilde.push(drift / eps);
        set.z_tilde.push(deviation / sqrt_eps);

        let dxdn = dx * dn;
        let integrands = [
            (f_e_xe - f_k) * dn,
            (f_e_xe - f_e_xk) * dn,
            (drift + noise) * dn,
            fx_k * dxdn,
            y * dxdn,
            z * dxdn,
            gamma * dw * dn,
            drift * dn,
            deviation * dn,
        ];
        let curves = [
            &mut set.full,
            &mut set.i1,
            &mut set.i2,
            &mut set.i11,
            &mut set.r11,
            &mut set.r12,
            &mut set.i21,
            &mut set.r21,
            &mut set.r22,
        ];
        for ((c, a), v) in curves.into_iter().zip(&mut acc).zip(integrands) {
            c.push(*a);
            *a += v * scale;
        }
    }
    Ok(set)
}

/// 16-point rule on `[a, b]`, bisected until it agrees with the exact panel
/// integral `panel(a, b).0` to within `budget (b - a)` plus the roundoff
/// floor `panel(a, b).1`. At most `LAMBDA_MAX_PANELS` panels are visited.
fn lambda_refine(
    g: &impl Fn(f64) -> f64,
    panel: &impl Fn(f64, f64) -> (f64, f64),
    visited: &Cell<usize>,
    a: f64,
    b: f64,
    budget: f64,
    depth: u32,
) -> f64 {
    visited.set(visited.get() + 1);
    let q = gl16(g, a, b);
    let (exact, floor) = panel(a, b);
    if depth == 0 || visited.get() >= LAMBDA_MAX_PANELS || (q - exact).abs() <= budget * (b - a) + floor {
        return q;
    }
    let mid = 0.5 * (a + b);
    lambda_refine(g, panel, visited, a, mid, budget, depth - 1)
        + lambda_refine(g, panel, visited, mid, b, budget, depth - 1)
}

/// Bracket increments used by [`fx_bracket_oracle`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BracketOracle {
    /// `d[M, N] = dt`, exact when `M = N = W`.
    ExactDriver,
    /// One-step realized increments `ΔM ΔN`.
    Realized,
}

/// Stieltjes sum `Σ F_x(t_k, X_k) d[M, N]_k` at every node.
pub fn fx_bracket_oracle(
    flow: &StochasticFlow,
    paths: &WeakDirichletPaths,
    n: &SamplePath,
    oracle: BracketOracle,
) -> Result<Vec<f64>> {
    check_inputs(flow, paths)?;
    n.require_same_grid(&paths.x, "N")?;
    let fp = FlowPath::new(flow, &paths.driver)?;
    let dt = paths.x.grid().dt();
    let m = &paths.m;
    let mut out = Vec::with_capacity(m.n_nodes());
    let mut acc = 0.0;
    out.push(acc);
    for k in 0..m.n_nodes() - 1 {
        let bracket = match oracle {
            BracketOracle::ExactDriver => dt,
            BracketOracle::Realized => (m.at(k + 1) - m.at(k)) * (n.at(k + 1) - n.at(k)),
        };
        acc += fp.fx(k, paths.x.row(k))? * bracket;
        out.push(acc);
    }
    Ok(out)
}

/// A median with its CI per ε, and whether it decays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecaySeries {
    pub name: String,
    pub medians: Vec<Interval>,
    /// Every sample was exactly zero.
    pub identically_zero: bool,
    pub decreasing: bool,
}

impl DecaySeries {
    pub fn from_samples(name: &str, samples_by_eps: &[Vec<f64>]) -> Self {
        let medians: Vec<Interval> = samples_by_eps.iter().map(|s| Interval::median_of(s)).collect();
        let identically_zero = samples_by_eps.iter().flatten().all(|v| *v == 0.0);
        DecaySeries {
            name: name.to_string(),
            decreasing: identically_zero || decreasing_up_to_overlap(&medians),
            medians,
            identically_zero,
        }
    }

    pub fn terminal(&self) -> f64 {
        self.medians.last().map_or(f64::NAN, |m| m.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofTermStudy {
    pub flow: String,
    pub martingale: TestMartingale,
    pub epsilons: Vec<f64>,
    pub n_paths: usize,
    pub sup_y: DecaySeries,
    /// `sup_t |R11|`, `|R12|`, `|R21|`, `|R22|`.
    pub remainders: Vec<DecaySeries>,
    /// `|I11(T) - Σ F_x d[M, N]|`.
    pub i11_gap: DecaySeries,
    pub worst_reconstruction: f64,
    pub pass: bool,
}

/// Proof terms over an ensemble; `build(seed)` realizes one `X = M + A`.
pub fn proof_term_study<B>(
    flow: &StochasticFlow,
    build: B,
    martingale: TestMartingale,
    oracle: BracketOracle,
    n_paths: usize,
    master_seed: u64,
    eps_schedule: &[f64],
) -> Result<ProofTermStudy>
where
    B: Fn(u64) -> Result<WeakDirichletPaths> + Sync + Send,
{
    if eps_schedule.is_empty() {
        return Err(Error::Config("the epsilon schedule is empty".into()));
    }
    let per_path = map_paths(n_paths, master_seed, |_, seed| {
        let paths = build(seed)?;
        let n = martingale.realize(&paths.driver)?;
        let target = *fx_bracket_oracle(flow, &paths, &n, oracle)?.last().expect("nonempty grid");
        eps_schedule
            .iter()
            .map(|&eps| {
                let set = compute_proof_terms(flow, &paths, &n, eps)?;
                let s = set.summary();
                Ok((s, (s.terminal[2] - target).abs()))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let by_eps = |f: &dyn Fn(&(ProofTermSummary, f64)) -> f64| -> Vec<Vec<f64>> {
        (0..eps_schedule.len())
            .map(|i| per_path.iter().map(|p| f(&p[i])).collect())
            .collect()
    };
    let sup_y = DecaySeries::from_samples("sup|Y|", &by_eps(&|p| p.0.sup_y));
    let remainders: Vec<DecaySeries> = [(3, "R11"), (4, "R12"), (6, "R21"), (7, "R22")]
        .iter()
        .map(|&(i, name)| DecaySeries::from_samples(name, &by_eps(&|p| p.0.sup_terms[i])))
        .collect();
    let i11_gap = DecaySeries::from_samples("|I11 - oracle|", &by_eps(&|p| p.1));
    let worst_reconstruction = per_path
        .iter()
        .flatten()
        .map(|p| p.0.reconstruction.worst())
        .fold(0.0, f64::max);
    let pass = sup_y.decreasing
        && remainders.iter().all(|r| r.decreasing)
        && i11_gap.decreasing
        && worst_reconstruction <= RECONSTRUCTION_TOLERANCE;
    Ok(ProofTermStudy {
        flow: flow.name.clone(),
        martingale,
        epsilons: eps_schedule.to_vec(),
        n_paths,
        sup_y,
        remainders,
        i11_gap,
        worst_reconstruction,
        pass,
    })
}

/// The three convergence lemmas used in the proof.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LemmaId {
    /// `∫ Z (X_{r+ε} - X_r)/√ε dr → 0` when `∫|Z|² → 0`.
    L42,
    /// `∫ Z (X_{r+ε} - X_r) dr → 0` for `Z` bounded in probability.
    L45,
    /// `∫ Z (X_{r+ε} - X_r)(Y_{r+ε} - Y_r)/ε dr → 0` when `sup|Z| → 0`.
    L46,
}

impl FromStr for LemmaId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L42" => Ok(LemmaId::L42),
            "L45" => Ok(LemmaId::L45),
            "L46" => Ok(LemmaId::L46),
            other => Err(contract(format!("unknown lemma '{other}'; expected L42, L45 or L46"))),
        }
    }
}

impl fmt::Display for LemmaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// The lemma's functional at every node, for weights `z` (one per node).
/// `y` defaults to `x`; it only enters `L46`.
pub fn lemma_functional(lemma: LemmaId, x: &SamplePath, y: Option<&SamplePath>, z: &[f64], eps: f64) -> Result<Vec<f64>> {
    let y = y.unwrap_or(x);
    x.require_same_grid(y, "lemma input")?;
    if z.len() != x.n_nodes() {
        return Err(contract(format!("{} weights for {} nodes", z.len(), x.n_nodes())));
    }
    let e = x.grid().epsilon_steps(eps)?;
    let dt = x.grid().dt();
    let scale = match lemma {
        LemmaId::L42 => dt / eps.sqrt(),
        LemmaId::L45 => dt,
        LemmaId::L46 => dt / eps,
    };
    let mut out = Vec::with_capacity(z.len());
    let mut acc = 0.0;
    out.push(acc);
    for k in 0..z.len() - 1 {
        let dx = x.at(k + e) - x.at(k);
        let v = match lemma {
            LemmaId::L46 => z[k] * dx * (y.at(k + e) - y.at(k)),
            _ => z[k] * dx,
        };
        acc += v * scale;
        out.push(acc);
    }
    Ok(out)
}

/// Weight families with known decay for the lemma checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticFamily {
    Zero,
    /// `Z_r = √ε`.
    SqrtEps,
    /// `Z_r = 1`.
    One,
}

impl SyntheticFamily {
    pub fn weights(&self, eps: f64, nodes: usize) -> Vec<f64> {
        let v = match self {
            SyntheticFamily::Zero => 0.0,
            SyntheticFamily::SqrtEps => eps.sqrt(),
            SyntheticFamily::One => 1.0,
        };
        vec![v; nodes]
    }
}

/// One ensemble member for [`lemma_convergence_check`]: the paths and one
/// weight array per ε.
#[derive(Debug, Clone)]
pub struct LemmaInput {
    pub x: SamplePath,
    pub y: Option<SamplePath>,
    pub z_by_eps: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub lemma: LemmaId,
    pub epsilons: Vec<f64>,
    pub series: Vec<UcpEstimate>,
    pub median_sups: DecaySeries,
    pub verdict: ConvergenceVerdict,
}

impl LemmaReport {
    /// From per-path sups, `sups[path][ε]`.
    pub fn from_sups(lemma: LemmaId, sups: &[Vec<f64>], eps_schedule: &[f64], delta: f64, eta: f64) -> Result<Self> {
        if sups.iter().any(|s| s.len() != eps_schedule.len()) {
            return Err(contract("every path needs one sup per epsilon"));
        }
        let by_eps: Vec<Vec<f64>> = (0..eps_schedule.len())
            .map(|i| sups.iter().map(|s| s[i]).collect())
            .collect();
        let series = by_eps
            .iter()
            .map(|s| UcpEstimate::from_sup_samples(s.clone(), delta))
            .collect::<Result<Vec<_>>>()?;
        Ok(LemmaReport {
            lemma,
            epsilons: eps_schedule.to_vec(),
            verdict: convergence_verdict(&series, eta)?,
            median_sups: DecaySeries::from_samples(&format!("{lemma} sup"), &by_eps),
            series,
        })
    }
}

/// ucp estimates of a lemma's conclusion against 0, one per ε.
pub fn lemma_convergence_check(
    lemma: LemmaId,
    inputs: &[LemmaInput],
    eps_schedule: &[f64],
    delta: f64,
    eta: f64,
) -> Result<LemmaReport> {
    let sups = inputs
        .iter()
        .map(|inp| {
            if inp.z_by_eps.len() != eps_schedule.len() {
                return Err(contract("one weight array per epsilon is required"));
            }
            eps_schedule
                .iter()
                .zip(&inp.z_by_eps)
                .map(|(&eps, z)| Ok(sum::sup_abs(&lemma_functional(lemma, &inp.x, inp.y.as_ref(), z, eps)?)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    LemmaReport::from_sups(lemma, &sups, eps_schedule, delta, eta)
}

/// Where the weights of a lemma study come from.
#[derive(Debug, Clone, Copy)]
pub enum LemmaWeights<'a> {
    Synthetic(SyntheticFamily),
    /// `Y^ε` of the flow along `X`.
    FlowY(&'a StochasticFlow),
    /// `Z^ε` of the flow along `X`.
    FlowZ(&'a StochasticFlow),
}

/// Ensemble version of [`lemma_convergence_check`] that streams paths.
#[allow(clippy::too_many_arguments)]
pub fn lemma_study<B>(
    lemma: LemmaId,
    weights: LemmaWeights<'_>,
    build: B,
    n_paths: usize,
    master_seed: u64,
    eps_schedule: &[f64],
    delta: f64,
    eta: f64,
) -> Result<LemmaReport>
where
    B: Fn(u64) -> Result<WeakDirichletPaths> + Sync + Send,
{
    let sups = map_paths(n_paths, master_seed, |_, seed| {
        let paths = build(seed)?;
        eps_schedule
            .iter()
            .map(|&eps| {
                let z = match weights {
                    LemmaWeights::Synthetic(f) => f.weights(eps, paths.x.n_nodes()),
                    LemmaWeights::FlowY(flow) => compute_proof_terms(flow, &paths, &paths.driver, eps)?.y,
                    LemmaWeights::FlowZ(flow) => compute_proof_terms(flow, &paths, &paths.driver, eps)?.z,
                };
                let y = (lemma == LemmaId::L46).then_some(&paths.driver);
                Ok(sum::sup_abs(&lemma_functional(lemma, &paths.x, y, &z, eps)?))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    LemmaReport::from_sups(lemma, &sups, eps_schedule, delta, eta)
}

/// `(C̃, C)` with `C̃ = ((2+ϱ)(1+ϱ)/2)^{(2+ϱ)/2}` and `C = C̃ 2^{2+ϱ}`.
pub fn mao_constants(rho: f64) -> (f64, f64) {
    let p = 2.0 + rho;
    let c_tilde = (p * (1.0 + rho) / 2.0).powf(p / 2.0);
    (c_tilde, c_tilde * 2f64.powf(p))
}

/// Nine equispaced nodes in `[0, T - eps_max]`, rounded down to the grid.
pub fn default_r_nodes(grid: &TimeGrid, eps_max: f64) -> Result<Vec<usize>> {
    let span = grid.horizon() - eps_max;
    if !(span >= 0.0) {
        return Err(Error::Config(format!("eps_max = {eps_max} exceeds the horizon")));
    }
    (0..MAO_R_NODES)
        .map(|i| grid.floor_index(span * i as f64 / (MAO_R_NODES - 1) as f64))
        .collect()
}

/// What one realization contributes to a moment-bound check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaoPathSample {
    /// `Z̃^ε_r` indexed `[ε][r]`.
    pub z_tilde: Vec<Vec<f64>>,
    /// `∫₀ᵀ |Z̃^ε_r|² dr` per ε.
    pub integrated_sq: Vec<f64>,
    /// `|γ(s_i, X_{t_j})|` on the spot lattice, row-major in `(i, j)`.
    pub gamma_spot: Vec<f64>,
}

fn lattice_nodes(grid: &TimeGrid) -> Vec<usize> {
    let n = grid.n_steps();
    (0..MAO_SPOT_LATTICE).map(|i| i * n / (MAO_SPOT_LATTICE - 1)).collect()
}

pub fn mao_path_sample(
    flow: &StochasticFlow,
    paths: &WeakDirichletPaths,
    r_nodes: &[usize],
    eps_schedule: &[f64],
) -> Result<MaoPathSample> {
    check_inputs(flow, paths)?;
    let WeakDirichletPaths { x, driver, .. } = paths;
    let grid = *x.grid();
    let fp = FlowPath::new(flow, driver)?;
    let z_at = |r: usize, e: usize, eps: f64| -> Result<f64> {
        Ok(fp.gamma_deviation(r, r + e, x.row(r))? / eps.sqrt())
    };
    let stride = (grid.n_steps() / 256).max(1);
    let mut z_tilde = Vec::with_capacity(eps_schedule.len());
    let mut integrated_sq = Vec::with_capacity(eps_schedule.len());
    for &eps in eps_schedule {
        let e = grid.epsilon_steps(eps)?;
        z_tilde.push(r_nodes.iter().map(|&r| z_at(r, e, eps)).collect::<Result<Vec<_>>>()?);
        let mut acc = 0.0;
        for r in (0..grid.n_steps()).step_by(stride) {
            acc += z_at(r, e, eps)?.powi(2) * stride as f64 * grid.dt();
        }
        integrated_sq.push(acc);
    }
    let nodes = lattice_nodes(&grid);
    let mut gamma_spot = Vec::with_capacity(nodes.len() * nodes.len());
    for &s in &nodes {
        for &t in &nodes {
            gamma_spot.push(fp.gamma(s, x.row(t), 0)?.abs());
        }
    }
    Ok(MaoPathSample {
        z_tilde,
        integrated_sq,
        gamma_spot,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaoCell {
    pub r: f64,
    pub eps: f64,
    /// `E|Z̃|²` and its 95% half-width.
    pub second: (f64, f64),
    /// `E|Z̃|^{2+ϱ}` and its 95% half-width.
    pub p_moment: (f64, f64),
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaoReport {
    pub rho: f64,
    pub c_tilde: f64,
    pub c: f64,
    /// `max_{s,t} E|γ(s, X_t)|^{2+ϱ}` on the spot lattice.
    pub b2: f64,
    /// `max |γ(s, X_t)|` over the lattice and the ensemble.
    pub b2_tilde: f64,
    /// `C max(B̃₂^{2+ϱ}, B₂)`.
    pub bound: f64,
    /// `C max(B̃₂², B₂)`, the bound on the second moment.
    pub second_moment_bound: f64,
    pub cells: Vec<MaoCell>,
    pub epsilons: Vec<f64>,
    /// Mean of `∫₀ᵀ |Z̃^ε_r|² dr` per ε.
    pub integrated_second: Vec<Interval>,
    pub integrated_decreasing: bool,
    pub degenerate: bool,
    pub flagged: usize,
    pub pass: bool,
}

pub fn mao_bound_check(
    samples: &[MaoPathSample],
    grid: &TimeGrid,
    r_nodes: &[usize],
    eps_schedule: &[f64],
    rho: f64,
) -> Result<MaoReport> {
    if !(rho > 0.0) {
        return Err(Error::Config(format!("rho must be > 0, got {rho}")));
    }
    if samples.is_empty() {
        return Err(contract("moment check needs a nonempty ensemble"));
    }
    let p = 2.0 + rho;
    let (c_tilde, c) = mao_constants(rho);
    let spots = samples[0].gamma_spot.len();
    let mut b2 = 0.0f64;
    let mut b2_tilde = 0.0f64;
    for i in 0..spots {
        let col: Vec<f64> = samples.iter().map(|s| s.gamma_spot[i]).collect();
        b2 = b2.max(moment_estimate(&col, p)?.0);
        b2_tilde = b2_tilde.max(col.iter().copied().fold(0.0, f64::max));
    }
    let bound = c * b2_tilde.powf(p).max(b2);
    let second_moment_bound = c * b2_tilde.powi(2).max(b2);

    let mut cells = Vec::new();
    let mut degenerate = true;
    for (ie, &eps) in eps_schedule.iter().enumerate() {
        for (ir, &r) in r_nodes.iter().enumerate() {
            let z: Vec<f64> = samples.iter().map(|s| s.z_tilde[ie][ir]).collect();
            degenerate &= z.iter().all(|v| v.abs() <= DEGENERATE_TOLERANCE);
            let second = moment_estimate(&z, 2.0)?;
            let p_moment = moment_estimate(&z, p)?;
            let flagged =
                p_moment.0 - p_moment.1 > bound || second.0 - second.1 > second_moment_bound;
            cells.push(MaoCell {
                r: grid.time(r),
                eps,
                second,
                p_moment,
                flagged,
            });
        }
    }
    let integrated_second: Vec<Interval> = (0..eps_schedule.len())
        .map(|ie| Interval::mean_of(&samples.iter().map(|s| s.integrated_sq[ie]).collect::<Vec<_>>()))
        .collect();
    let integrated_decreasing = degenerate || decreasing_up_to_overlap(&integrated_second);
    let flagged = cells.iter().filter(|c| c.flagged).count();
    Ok(MaoReport {
        rho,
        c_tilde,
        c,
        b2,
        b2_tilde,
        bound,
        second_moment_bound,
        cells,
        epsilons: eps_schedule.to_vec(),
        integrated_second,
        integrated_decreasing,
        degenerate,
        flagged,
        pass: flagged == 0 && integrated_decreasing,
    })
}

/// Streams an ensemble through [`mao_path_sample`] and reduces it.
pub fn mao_study<B>(
    flow: &StochasticFlow,
    build: B,
    grid: &TimeGrid,
    n_paths: usize,
    master_seed: u64,
    eps_schedule: &[f64],
    rho: f64,
) -> Result<MaoReport>
where
    B: Fn(u64) -> Result<WeakDirichletPaths> + Sync + Send,
{
    let eps_max = eps_schedule.iter().copied().fold(0.0, f64::max);
    let r_nodes = default_r_nodes(grid, eps_max)?;
    let samples = map_paths(n_paths, master_seed, |_, seed| {
        mao_path_sample(flow, &build(seed)?, &r_nodes, eps_schedule)
    })?;
    mao_bound_check(&samples, grid, &r_nodes, eps_schedule, rho)
}
