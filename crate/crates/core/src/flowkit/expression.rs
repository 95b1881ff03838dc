use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::expr::{Env, Expr};
use crate::pathkit::DriverView;

use super::{
    FieldDerivatives, FieldFn, LocalCharacteristics, SeparableTerm, Smoothness, SpaceFn, SpaceTerm,
    StochasticFlow,
};

/// Declarative flow: `F0(x)`, `β(t, x)` and one `γ` per driver component.
///
/// `β` and `γ` may reference `t` and the current driver value `W`; `F0`
/// only `x`. The smoothness class is inferred (`C^{0,1}` as soon as a
/// first derivative has a kink) unless given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowExpressions {
    pub f0: String,
    #[serde(default = "zero")]
    pub beta: String,
    #[serde(default)]
    pub gamma: Vec<String>,
    #[serde(default)]
    pub smoothness: Option<Smoothness>,
    #[serde(default)]
    pub holder_alpha: Option<f64>,
    #[serde(default)]
    pub holder_constant: Option<f64>,
    #[serde(default)]
    pub compact_box: Option<Vec<(f64, f64)>>,
}

fn zero() -> String {
    "0".into()
}

fn parse(what: &str, src: &str) -> Result<Expr> {
    Expr::parse(src).map_err(|e| config(format!("{what}: {e}")))
}

fn space_fn(e: &Expr) -> SpaceFn {
    let c = e.compile();
    Arc::new(move |x: &[f64]| c(&Env { t: 0.0, x, w: &[] }))
}

fn space_term(e: &Expr, dim: usize) -> SpaceTerm {
    if dim != 1 {
        return SpaceTerm {
            f: space_fn(e),
            dx: None,
            dxx: None,
        };
    }
    let dx = e.derivative(0);
    let dxx = dx.derivative(0);
    SpaceTerm {
        f: space_fn(e),
        dx: Some(space_fn(&dx)),
        dxx: Some(space_fn(&dxx)),
    }
}

fn field_fn(e: &Expr) -> FieldFn {
    let c = e.compile();
    Arc::new(move |v: &DriverView<'_>, x: &[f64]| {
        c(&Env {
            t: v.time(),
            x,
            w: v.current_row(),
        })
    })
}

fn separable_terms(e: &Expr, component: usize, dim: usize) -> Option<Vec<SeparableTerm>> {
    let parts = e.separate()?;
    Some(
        parts
            .into_iter()
            .map(|(time, space)| {
                let c = time.compile();
                SeparableTerm::new(
                    move |v: &DriverView<'_>| {
                        c(&Env {
                            t: v.time(),
                            x: &[],
                            w: v.current_row(),
                        })
                    },
                    space_term(&space, dim),
                )
                .on_component(component)
            })
            .collect(),
    )
}

pub fn flow_from_expressions(name: &str, spec: &FlowExpressions) -> Result<StochasticFlow> {
    let f0 = parse("f0", &spec.f0)?;
    if f0.uses_time() {
        return Err(config("f0: the initial profile may only depend on x"));
    }
    let beta = parse("beta", &spec.beta)?;
    let gamma = spec
        .gamma
        .iter()
        .enumerate()
        .map(|(j, g)| parse(&format!("gamma[{j}]"), g))
        .collect::<Result<Vec<_>>>()?;
    let dim = std::iter::once(&f0)
        .chain(&gamma)
        .chain(std::iter::once(&beta))
        .map(|e| e.space_dim().max(e.driver_dim()))
        .chain(std::iter::once(gamma.len()))
        .max()
        .unwrap_or(1)
        .max(1);
    let gamma = if gamma.is_empty() {
        vec![Expr::Const(0.0); dim]
    } else if gamma.len() == dim {
        gamma
    } else {
        return Err(config(format!(
            "gamma: a {dim}-dimensional flow needs {dim} components, got {}",
            gamma.len()
        )));
    };

    let kinked = |e: &Expr| (0..dim).any(|i| e.derivative(i).is_piecewise());
    let piecewise_fx = kinked(&f0) || kinked(&beta) || gamma.iter().any(kinked);
    let inferred = if piecewise_fx {
        Smoothness::C01
    } else {
        Smoothness::C02
    };
    let smoothness = spec.smoothness.unwrap_or(inferred);
    if smoothness == Smoothness::C02 && piecewise_fx {
        return Err(config(format!(
            "flow '{name}' is declared C^{{0,2}} but a first derivative has a kink"
        )));
    }

    let separable = separable_terms(&beta, 0, dim).and_then(|b| {
        let mut g = Vec::new();
        for (j, e) in gamma.iter().enumerate() {
            g.extend(separable_terms(e, j, dim)?);
        }
        Some((b, g))
    });
    let mut flow = match separable {
        Some((b, g)) => StochasticFlow::separable(name, space_term(&f0, dim), b, g, dim, smoothness)?,
        None => {
            let chars = LocalCharacteristics {
                beta: field_fn(&beta),
                gamma: gamma.iter().map(field_fn).collect(),
                holder_alpha: 1.0,
                holder_constant: f64::INFINITY,
                compact_box: vec![(-4.0, 4.0); dim],
                dim,
            };
            let mut f = StochasticFlow::general(name, space_term(&f0, dim), chars, smoothness)?;
            if dim == 1 {
                let d = |e: &Expr| Some(field_fn(&e.derivative(0)));
                let dd = |e: &Expr| Some(field_fn(&e.derivative(0).derivative(0)));
                f = f.with_derivatives(FieldDerivatives {
                    beta_x: d(&beta),
                    beta_xx: dd(&beta),
                    gamma_x: d(&gamma[0]),
                    gamma_xx: dd(&gamma[0]),
                });
            }
            f
        }
    };
    if dim == 1 && smoothness == Smoothness::C01 {
        flow.f0.dxx = None;
        flow.derivatives.beta_xx = None;
        flow.derivatives.gamma_xx = None;
    }
    flow.piecewise_fx = piecewise_fx;
    if let Some(a) = spec.holder_alpha {
        if !(a > 0.0 && a <= 1.0) {
            return Err(config(format!("holder_alpha must lie in (0, 1], got {a}")));
        }
        flow.chars.holder_alpha = a;
    }
    if let Some(c) = spec.holder_constant {
        flow.chars.holder_constant = c;
    }
    if let Some(b) = &spec.compact_box {
        if b.len() != dim || b.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(config("compact_box needs one nonempty interval per coordinate"));
        }
        flow.chars.compact_box = b.clone();
    }
    Ok(flow)
}
