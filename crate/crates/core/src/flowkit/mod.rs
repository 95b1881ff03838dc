//! Stochastic flows `F(t, x) = F0(x) + ∫β(r, x) dr + ∫γ(r, x)·dW_r` given
//! by their local characteristics.
//!
//! Random fields see the driver only through a [`DriverView`], i.e. up to
//! the node at which they are evaluated. Flows whose characteristics are
//! sums of products `a(t, ω) b(x)` can declare that structure; evaluation
//! then runs on cached time integrals in O(1) per `(t, x)`.

mod catalog;
mod checks;
mod eval;
mod expression;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::pathkit::DriverView;

pub use catalog::{catalog_flow, catalog_names, CATALOG};
pub use checks::{holder_check, integrability_check, HolderCheck, IntegrabilityCheck};
pub use eval::{
    evaluate_flow, flow_partial_derivative, flow_spatial_derivative, substitute_random_point, FlowPath,
    FD_RELATIVE_STEP,
};
pub use expression::{flow_from_expressions, FlowExpressions};

/// `(view, x) -> value`, evaluated at the view's current node.
pub type FieldFn = Arc<dyn Fn(&DriverView<'_>, &[f64]) -> f64 + Send + Sync>;
/// `view -> value`, the time factor of a separable term.
pub type TimeFactor = Arc<dyn Fn(&DriverView<'_>) -> f64 + Send + Sync>;
/// `x -> value`.
pub type SpaceFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Smoothness {
    /// `F_x` continuous in `x`.
    C01,
    /// `F_xx` continuous in `x`.
    C02,
}

/// A function of `x` with optional first and second derivatives (in the
/// one-dimensional case).
#[derive(Clone)]
pub struct SpaceTerm {
    pub f: SpaceFn,
    pub dx: Option<SpaceFn>,
    pub dxx: Option<SpaceFn>,
}

impl SpaceTerm {
    pub fn new(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        SpaceTerm {
            f: Arc::new(f),
            dx: None,
            dxx: None,
        }
    }

    /// One-dimensional function with its two derivatives.
    pub fn smooth(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dx: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dxx: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        SpaceTerm {
            f: Arc::new(move |x: &[f64]| f(x[0])),
            dx: Some(Arc::new(move |x: &[f64]| dx(x[0]))),
            dxx: Some(Arc::new(move |x: &[f64]| dxx(x[0]))),
        }
    }

    /// One-dimensional function with only a first derivative.
    pub fn c1(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dx: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        SpaceTerm {
            f: Arc::new(move |x: &[f64]| f(x[0])),
            dx: Some(Arc::new(move |x: &[f64]| dx(x[0]))),
            dxx: None,
        }
    }

    pub fn constant(c: f64) -> Self {
        SpaceTerm::smooth(move |_| c, |_| 0.0, |_| 0.0)
    }

    pub fn identity() -> Self {
        SpaceTerm::smooth(|x| x, |_| 1.0, |_| 0.0)
    }

    fn sum(&self, other: &SpaceTerm) -> SpaceTerm {
        let add = |a: &SpaceFn, b: &SpaceFn| -> SpaceFn {
            let (a, b) = (a.clone(), b.clone());
            Arc::new(move |x: &[f64]| a(x) + b(x))
        };
        SpaceTerm {
            f: add(&self.f, &other.f),
            dx: match (&self.dx, &other.dx) {
                (Some(a), Some(b)) => Some(add(a, b)),
                _ => None,
            },
            dxx: match (&self.dxx, &other.dxx) {
                (Some(a), Some(b)) => Some(add(a, b)),
                _ => None,
            },
        }
    }
}

/// `time(view) * space(x)`, acting on driver component `component` when it
/// is part of γ.
#[derive(Clone)]
pub struct SeparableTerm {
    pub time: TimeFactor,
    pub space: SpaceTerm,
    pub component: usize,
}

impl SeparableTerm {
    pub fn new(time: impl Fn(&DriverView<'_>) -> f64 + Send + Sync + 'static, space: SpaceTerm) -> Self {
        SeparableTerm {
            time: Arc::new(time),
            space,
            component: 0,
        }
    }

    /// Deterministic time factor `a(t)`.
    pub fn of_time(a: impl Fn(f64) -> f64 + Send + Sync + 'static, space: SpaceTerm) -> Self {
        SeparableTerm::new(move |v| a(v.time()), space)
    }

    pub fn on_component(mut self, j: usize) -> Self {
        self.component = j;
        self
    }
}

/// `β = Σ a_i(t) b_i(x)`, `γ_j = Σ c_i(t) g_i(x)` over the terms acting on
/// component `j`.
#[derive(Clone, Default)]
pub struct SeparableForm {
    pub beta: Vec<SeparableTerm>,
    pub gamma: Vec<SeparableTerm>,
}

/// Local characteristics `(β, γ)` plus the regularity metadata declared by
/// the author of the flow.
#[derive(Clone)]
pub struct LocalCharacteristics {
    pub beta: FieldFn,
    /// One field per driver component.
    pub gamma: Vec<FieldFn>,
    /// Declared local Hölder exponent of γ in `x`.
    pub holder_alpha: f64,
    /// Declared Hölder constant of γ on `compact_box`.
    pub holder_constant: f64,
    /// Compact set `K` on which the declarations are made, one interval per
    /// coordinate.
    pub compact_box: Vec<(f64, f64)>,
    pub dim: usize,
}

/// Spatial derivatives of β and γ, one-dimensional flows only.
#[derive(Clone, Default)]
pub struct FieldDerivatives {
    pub beta_x: Option<FieldFn>,
    pub beta_xx: Option<FieldFn>,
    pub gamma_x: Option<FieldFn>,
    pub gamma_xx: Option<FieldFn>,
}

#[derive(Clone)]
pub struct StochasticFlow {
    pub name: String,
    pub f0: SpaceTerm,
    pub chars: LocalCharacteristics,
    pub smoothness: Smoothness,
    pub derivatives: FieldDerivatives,
    pub separable: Option<SeparableForm>,
    /// Whether `F_x` has kinks in `x` (e.g. contains `|x|`).
    pub piecewise_fx: bool,
}

impl fmt::Debug for StochasticFlow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StochasticFlow")
            .field("name", &self.name)
            .field("dim", &self.chars.dim)
            .field("smoothness", &self.smoothness)
            .field("separable", &self.separable.is_some())
            .finish()
    }
}

fn sum_field(terms: &[SeparableTerm], component: Option<usize>, pick: fn(&SpaceTerm) -> Option<SpaceFn>) -> Option<FieldFn> {
    let mut parts: Vec<(TimeFactor, SpaceFn)> = Vec::new();
    for t in terms {
        if component.is_some_and(|j| t.component != j) {
            continue;
        }
        parts.push((t.time.clone(), pick(&t.space)?));
    }
    Some(Arc::new(move |v: &DriverView<'_>, x: &[f64]| {
        let mut s = 0.0;
        for (a, b) in &parts {
            s += a(v) * b(x);
        }
        s
    }))
}

impl StochasticFlow {
    /// Flow with separable characteristics; β, γ and every derivative that
    /// all terms provide are assembled from the terms.
    pub fn separable(
        name: impl Into<String>,
        f0: SpaceTerm,
        beta: Vec<SeparableTerm>,
        gamma: Vec<SeparableTerm>,
        dim: usize,
        smoothness: Smoothness,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(config("flow dimension must be >= 1"));
        }
        if let Some(t) = gamma.iter().find(|t| t.component >= dim) {
            return Err(config(format!(
                "γ term on driver component {} of a {dim}-dimensional flow",
                t.component
            )));
        }
        let value = |t: &SpaceTerm| Some(t.f.clone());
        let dx = |t: &SpaceTerm| t.dx.clone();
        let dxx = |t: &SpaceTerm| t.dxx.clone();
        let beta_f = sum_field(&beta, None, value).expect("values always exist");
        let gamma_f = (0..dim)
            .map(|j| sum_field(&gamma, Some(j), value).expect("values always exist"))
            .collect();
        let derivatives = if dim == 1 {
            FieldDerivatives {
                beta_x: sum_field(&beta, None, dx),
                beta_xx: sum_field(&beta, None, dxx),
                gamma_x: sum_field(&gamma, Some(0), dx),
                gamma_xx: sum_field(&gamma, Some(0), dxx),
            }
        } else {
            FieldDerivatives::default()
        };
        Ok(StochasticFlow {
            name: name.into(),
            f0,
            chars: LocalCharacteristics {
                beta: beta_f,
                gamma: gamma_f,
                holder_alpha: 1.0,
                holder_constant: f64::INFINITY,
                compact_box: vec![(-4.0, 4.0); dim],
                dim,
            },
            smoothness,
            derivatives,
            separable: Some(SeparableForm { beta, gamma }),
            piecewise_fx: false,
        })
    }

    /// Flow from arbitrary fields. Derivatives default to absent.
    pub fn general(
        name: impl Into<String>,
        f0: SpaceTerm,
        chars: LocalCharacteristics,
        smoothness: Smoothness,
    ) -> Result<Self> {
        if chars.dim == 0 || chars.gamma.len() != chars.dim {
            return Err(config(format!(
                "flow of dimension {} needs one γ field per driver component, got {}",
                chars.dim,
                chars.gamma.len()
            )));
        }
        Ok(StochasticFlow {
            name: name.into(),
            f0,
            chars,
            smoothness,
            derivatives: FieldDerivatives::default(),
            separable: None,
            piecewise_fx: true,
        })
    }

    pub fn with_derivatives(mut self, d: FieldDerivatives) -> Self {
        self.derivatives = d;
        self
    }

    pub fn with_holder(mut self, alpha: f64, constant: f64) -> Self {
        self.chars.holder_alpha = alpha;
        self.chars.holder_constant = constant;
        self
    }

    pub fn with_box(mut self, compact_box: Vec<(f64, f64)>) -> Self {
        self.chars.compact_box = compact_box;
        self
    }

    pub fn with_piecewise_fx(mut self, piecewise: bool) -> Self {
        self.piecewise_fx = piecewise;
        self
    }

    pub fn dim(&self) -> usize {
        self.chars.dim
    }

    /// Analytic `F_x` can be assembled from the ingredients.
    pub fn has_analytic_fx(&self) -> bool {
        self.dim() == 1
            && self.f0.dx.is_some()
            && self.derivatives.beta_x.is_some()
            && self.derivatives.gamma_x.is_some()
    }

    /// Analytic `F_xx` can be assembled from the ingredients.
    pub fn has_analytic_fxx(&self) -> bool {
        self.dim() == 1
            && self.f0.dxx.is_some()
            && self.derivatives.beta_xx.is_some()
            && self.derivatives.gamma_xx.is_some()
    }

    /// `β` is identically zero by construction.
    pub fn beta_vanishes(&self) -> bool {
        self.separable.as_ref().is_some_and(|s| s.beta.is_empty())
    }

    /// The flow with characteristics and profile added termwise.
    pub fn sum(&self, other: &StochasticFlow) -> Result<StochasticFlow> {
        if self.dim() != other.dim() {
            return Err(config("cannot add flows of different dimensions"));
        }
        let add = |a: &FieldFn, b: &FieldFn| -> FieldFn {
            let (a, b) = (a.clone(), b.clone());
            Arc::new(move |v: &DriverView<'_>, x: &[f64]| a(v, x) + b(v, x))
        };
        let add_opt = |a: &Option<FieldFn>, b: &Option<FieldFn>| match (a, b) {
            (Some(a), Some(b)) => Some(add(a, b)),
            _ => None,
        };
        let chars = LocalCharacteristics {
            beta: add(&self.chars.beta, &other.chars.beta),
            gamma: self
                .chars
                .gamma
                .iter()
                .zip(&other.chars.gamma)
                .map(|(a, b)| add(a, b))
                .collect(),
            holder_alpha: self.chars.holder_alpha.min(other.chars.holder_alpha),
            holder_constant: self.chars.holder_constant + other.chars.holder_constant,
            compact_box: self
                .chars
                .compact_box
                .iter()
                .zip(&other.chars.compact_box)
                .map(|(a, b)| (a.0.max(b.0), a.1.min(b.1)))
                .collect(),
            dim: self.dim(),
        };
        let separable = match (&self.separable, &other.separable) {
            (Some(a), Some(b)) => Some(SeparableForm {
                beta: a.beta.iter().chain(&b.beta).cloned().collect(),
                gamma: a.gamma.iter().chain(&b.gamma).cloned().collect(),
            }),
            _ => None,
        };
        Ok(StochasticFlow {
            name: format!("{}+{}", self.name, other.name),
            f0: self.f0.sum(&other.f0),
            chars,
            smoothness: self.smoothness.min(other.smoothness),
            derivatives: FieldDerivatives {
                beta_x: add_opt(&self.derivatives.beta_x, &other.derivatives.beta_x),
                beta_xx: add_opt(&self.derivatives.beta_xx, &other.derivatives.beta_xx),
                gamma_x: add_opt(&self.derivatives.gamma_x, &other.derivatives.gamma_x),
                gamma_xx: add_opt(&self.derivatives.gamma_xx, &other.derivatives.gamma_xx),
            },
            separable,
            piecewise_fx: self.piecewise_fx || other.piecewise_fx,
        })
    }

    /// Zero flow of dimension `dim`.
    pub fn zero(dim: usize) -> StochasticFlow {
        let mut f = StochasticFlow::separable("zero", SpaceTerm::constant(0.0), vec![], vec![], dim, Smoothness::C02)
            .expect("dimension is positive");
        if dim > 1 {
            f.f0 = SpaceTerm::new(|_| 0.0);
        }
        f.chars.holder_constant = 0.0;
        f
    }
}
