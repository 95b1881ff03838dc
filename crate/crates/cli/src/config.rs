//! Experiment configuration: one TOML document per experiment.
//!
//! Every field has a default except `kind`. Unknown keys are rejected.
//! [`ExperimentConfig::validate`] runs before any path is simulated and
//! reports the offending field by name.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use ventzell_core::expr::{Env, Expr};
use ventzell_core::flowkit::{catalog_flow, flow_from_expressions, FlowExpressions, Smoothness, StochasticFlow};
use ventzell_core::pathkit::{ProcessSpec, TimeGrid, ZeroEnergyRecipe};
use ventzell_core::proofterms::{LemmaId, SyntheticFamily};
use ventzell_core::ventzell::TestMartingale;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Covariation,
    ForwardIntegral,
    VentzellVerify,
    ZeroEnergy,
    Corollary,
    ProofTerms,
    LemmaCheck,
    MaoBound,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::Covariation,
        ExperimentKind::ForwardIntegral,
        ExperimentKind::VentzellVerify,
        ExperimentKind::ZeroEnergy,
        ExperimentKind::Corollary,
        ExperimentKind::ProofTerms,
        ExperimentKind::LemmaCheck,
        ExperimentKind::MaoBound,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Covariation => "covariation",
            ExperimentKind::ForwardIntegral => "forward-integral",
            ExperimentKind::VentzellVerify => "ventzell-verify",
            ExperimentKind::ZeroEnergy => "zero-energy",
            ExperimentKind::Corollary => "corollary",
            ExperimentKind::ProofTerms => "proof-terms",
            ExperimentKind::LemmaCheck => "lemma-check",
            ExperimentKind::MaoBound => "mao-bound",
        }
    }

    fn uses_flow(&self) -> bool {
        !matches!(self, ExperimentKind::Covariation | ExperimentKind::ForwardIntegral | ExperimentKind::LemmaCheck)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Time grid; `eps_max` sets the continuation margin and defaults to the
/// largest ε of the schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_steps")]
    pub n_steps: usize,
    #[serde(default)]
    pub eps_max: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            horizon: default_horizon(),
            n_steps: default_steps(),
            eps_max: None,
        }
    }
}

/// `X = M + A` driven by one Brownian motion `W`.
///
/// `martingale` is `"brownian"` or a diffusion coefficient `σ(t, x)` for
/// `dM = σ(t, M) dW`, `M(0) = x0`. At most one of `a` (closed form in
/// `t`), `a_integrand` (`A = ∫ f(s, W_s) ds`) and `a_hurst` (a convolution
/// of the driver) may be given; the default is `A = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessConfig {
    #[serde(default = "default_martingale")]
    pub martingale: String,
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub a: Option<String>,
    #[serde(default)]
    pub a_integrand: Option<String>,
    #[serde(default)]
    pub a_hurst: Option<f64>,
}

impl Default for ProcessConfig {
    fn default() -> Self {
        ProcessConfig {
            martingale: default_martingale(),
            x0: 0.0,
            a: None,
            a_integrand: None,
            a_hurst: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Catalog name; ignored when `flow_expr` is given.
    #[serde(default = "default_flow")]
    pub flow: String,
    #[serde(default)]
    pub flow_expr: Option<FlowExpressions>,
    #[serde(default)]
    pub process: ProcessConfig,
    #[serde(default)]
    pub grid: GridConfig,
    /// Regularization widths, strictly decreasing.
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Largest tolerated terminal exceedance probability in ucp verdicts.
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Levels `M` of the boundedness-in-probability report.
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Test martingale `N` for zero-energy and proof-term experiments.
    #[serde(default = "default_test_martingale")]
    pub martingale: TestMartingale,
    #[serde(default)]
    pub lemma: Option<String>,
    /// `zero`, `sqrt-eps`, `one`, `flow-y` or `flow-z`.
    #[serde(default = "default_lemma_weights")]
    pub lemma_weights: String,
    /// Per-node CSVs are written for this many leading paths.
    #[serde(default = "default_csv_paths")]
    pub csv_paths: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_horizon() -> f64 {
    1.0
}
fn default_steps() -> usize {
    1 << 14
}
fn default_martingale() -> String {
    "brownian".into()
}
fn default_flow() -> String {
    "frozen".into()
}
fn default_epsilons() -> Vec<f64> {
    (3..=8).map(|k| 2f64.powi(-k)).collect()
}
fn default_paths() -> usize {
    1000
}
fn default_delta() -> f64 {
    0.05
}
fn default_eta() -> f64 {
    0.05
}
fn default_thresholds() -> Vec<f64> {
    vec![0.5, 1.0, 2.0, 4.0]
}
fn default_rho() -> f64 {
    1.0
}
fn default_test_martingale() -> TestMartingale {
    TestMartingale::Driver
}
fn default_lemma_weights() -> String {
    "sqrt-eps".into()
}
fn default_csv_paths() -> usize {
    1
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn field(name: &str, message: impl fmt::Display) -> CliError {
    CliError::Config(format!("{name}: {message}"))
}

/// Weights for `lemma-check`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LemmaWeightChoice {
    Synthetic(SyntheticFamily),
    FlowY,
    FlowZ,
}

impl FromStr for LemmaWeightChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "zero" => LemmaWeightChoice::Synthetic(SyntheticFamily::Zero),
            "sqrt-eps" => LemmaWeightChoice::Synthetic(SyntheticFamily::SqrtEps),
            "one" => LemmaWeightChoice::Synthetic(SyntheticFamily::One),
            "flow-y" => LemmaWeightChoice::FlowY,
            "flow-z" => LemmaWeightChoice::FlowZ,
            other => return Err(format!("unknown weights '{other}'; expected zero, sqrt-eps, one, flow-y or flow-z")),
        })
    }
}

/// A validated configuration with everything resolved.
pub struct Resolved {
    pub config: ExperimentConfig,
    pub grid: TimeGrid,
    pub flow: Option<StochasticFlow>,
    pub m_spec: ProcessSpec,
    pub a_spec: ProcessSpec,
    pub lemma: Option<LemmaId>,
    pub lemma_weights: LemmaWeightChoice,
}

fn time_expr(name: &str, src: &str) -> Result<Expr, CliError> {
    let e = Expr::parse(src).map_err(|e| field(name, e))?;
    if e.space_dim() > 0 {
        return Err(field(name, "may only depend on t and W"));
    }
    Ok(e)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Canonical JSON of the configuration after defaults, the input of
    /// the manifest's config hash. The output directory is left out.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        serde_json::to_string(&c).expect("configs serialize")
    }

    pub fn flow_label(&self) -> String {
        match &self.flow_expr {
            Some(_) => "custom".into(),
            None => self.flow.clone(),
        }
    }

    pub fn validate(self) -> Result<Resolved, CliError> {
        let c = self;
        if c.epsilons.is_empty() {
            return Err(field("epsilons", "the schedule is empty"));
        }
        if !c.epsilons.windows(2).all(|w| w[1] < w[0]) {
            return Err(field("epsilons", "the schedule must be strictly decreasing"));
        }
        let eps_max = c.grid.eps_max.unwrap_or(c.epsilons[0]);
        if c.epsilons[0] > eps_max {
            return Err(field("grid.eps_max", format!("{eps_max} is below the largest epsilon {}", c.epsilons[0])));
        }
        let margin_field = if c.grid.eps_max.is_some() { "grid" } else { "epsilons" };
        let grid = TimeGrid::new(c.grid.horizon, c.grid.n_steps, eps_max).map_err(|e| field(margin_field, e))?;
        for &e in &c.epsilons {
            grid.epsilon_steps(e).map_err(|err| field("epsilons", err))?;
        }
        if c.paths < 2 {
            return Err(field("paths", "at least two paths are needed for interval estimates"));
        }
        if !(c.delta > 0.0 && c.delta.is_finite()) {
            return Err(field("delta", format!("must be > 0, got {}", c.delta)));
        }
        if !(c.eta > 0.0 && c.eta < 1.0) {
            return Err(field("eta", format!("must lie in (0, 1), got {}", c.eta)));
        }
        if c.thresholds.is_empty() || c.thresholds.iter().any(|m| !(*m > 0.0)) {
            return Err(field("thresholds", "need at least one positive level"));
        }
        if !(c.rho > 0.0 && c.rho.is_finite()) {
            return Err(field("rho", format!("must be > 0, got {}", c.rho)));
        }

        let m_spec = match c.process.martingale.as_str() {
            "brownian" => {
                if c.process.x0 != 0.0 {
                    return Err(field("process.x0", "Brownian motion starts at 0; use a diffusion for other starts"));
                }
                ProcessSpec::BrownianMotion
            }
            src => {
                let e = Expr::parse(src).map_err(|e| field("process.martingale", e))?;
                if e.space_dim() > 1 || e.driver_dim() > 0 {
                    return Err(field("process.martingale", "the diffusion may only depend on t and x"));
                }
                let f = e.compile();
                ProcessSpec::martingale(move |t, x| f(&Env { t, x: &[x], w: &[] }), c.process.x0)
            }
        };
        let given = [c.process.a.is_some(), c.process.a_integrand.is_some(), c.process.a_hurst.is_some()];
        if given.iter().filter(|g| **g).count() > 1 {
            return Err(field("process", "give at most one of a, a_integrand and a_hurst"));
        }
        let a_spec = if let Some(src) = &c.process.a {
            let e = time_expr("process.a", src)?;
            if e.driver_dim() > 0 {
                return Err(field("process.a", "a closed-form A may only depend on t"));
            }
            let at0 = e.eval(&Env { t: 0.0, x: &[], w: &[] });
            if at0 != 0.0 {
                return Err(field("process.a", format!("A(0) must be 0, got {at0}")));
            }
            let f = e.compile();
            ProcessSpec::deterministic(move |t| f(&Env { t, x: &[], w: &[] }))
        } else if let Some(src) = &c.process.a_integrand {
            let f = time_expr("process.a_integrand", src)?.compile();
            ProcessSpec::path_integral(move |v| f(&Env { t: v.time(), x: &[], w: v.current_row() }))
        } else if let Some(h) = c.process.a_hurst {
            if !(h > 0.5 && h < 1.0) {
                return Err(field("process.a_hurst", format!("must lie in (1/2, 1), got {h}")));
            }
            ProcessSpec::ZeroEnergyCandidate(ZeroEnergyRecipe::ConvolvedBrownian { hurst: h })
        } else {
            ProcessSpec::zero()
        };

        let flow = if c.kind.uses_flow() || c.lemma_weights.starts_with("flow") {
            let f = match &c.flow_expr {
                Some(spec) => flow_from_expressions("custom", spec).map_err(|e| field("flow_expr", e))?,
                None => catalog_flow(&c.flow).map_err(|e| field("flow", e))?,
            };
            if f.dim() != 1 {
                return Err(field("flow_expr", "experiments run one-dimensional flows only"));
            }
            Some(f)
        } else {
            None
        };
        if c.kind == ExperimentKind::VentzellVerify {
            let f = flow.as_ref().expect("resolved above");
            if f.smoothness < Smoothness::C02 {
                return Err(field(
                    "flow",
                    format!("'{}' is only C^{{0,1}}; ventzell-verify needs the explicit formula", f.name),
                ));
            }
        }
        let lemma = match (&c.lemma, c.kind) {
            (Some(l), _) => Some(l.parse::<LemmaId>().map_err(|e| field("lemma", e))?),
            (None, ExperimentKind::LemmaCheck) => return Err(field("lemma", "lemma-check needs one of L42, L45, L46")),
            (None, _) => None,
        };
        let lemma_weights = c.lemma_weights.parse().map_err(|e| field("lemma_weights", e))?;
        Ok(Resolved {
            config: c,
            grid,
            flow,
            m_spec,
            a_spec,
            lemma,
            lemma_weights,
        })
    }
}
