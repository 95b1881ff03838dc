use crate::error::{config, Result};

use super::{SeparableTerm, Smoothness, SpaceTerm, StochasticFlow};

/// Built-in one-dimensional flows: `(name, description)`.
pub const CATALOG: &[(&str, &str)] = &[
    ("frozen", "F0(x) = x, β = γ = 0"),
    ("drift-only", "F0(x) = x, β = 1, γ = 0"),
    ("additive-noise", "F0(x) = x, β = 0, γ = 1"),
    ("linear-noise", "F0(x) = x, β = 0, γ(t, x) = x"),
    ("c01-kink", "F0(x) = x|x|/2, β = γ = 0; F_x = |x|, no F_xx at 0"),
    ("square", "F0(x) = x^2, β = γ = 0"),
    ("time-noise", "F0(x) = x, β = 0, γ(t, x) = t"),
    ("kink-mixed", "F0(x) = x|x|/2, β(t, x) = x, γ(t, x) = t x"),
];

pub fn catalog_names() -> Vec<&'static str> {
    CATALOG.iter().map(|c| c.0).collect()
}

fn kink() -> SpaceTerm {
    SpaceTerm::c1(|x| 0.5 * x * x.abs(), f64::abs)
}

fn one() -> SpaceTerm {
    SpaceTerm::constant(1.0)
}

pub fn catalog_flow(name: &str) -> Result<StochasticFlow> {
    let id = SpaceTerm::identity;
    let build = |f0, beta, gamma, smooth| StochasticFlow::separable(name, f0, beta, gamma, 1, smooth);
    let flow = match name {
        "frozen" => build(id(), vec![], vec![], Smoothness::C02)?.with_holder(1.0, 0.0),
        "drift-only" => build(
            id(),
            vec![SeparableTerm::of_time(|_| 1.0, one())],
            vec![],
            Smoothness::C02,
        )?
        .with_holder(1.0, 0.0),
        "additive-noise" => build(
            id(),
            vec![],
            vec![SeparableTerm::of_time(|_| 1.0, one())],
            Smoothness::C02,
        )?
        .with_holder(1.0, 0.0),
        "linear-noise" => build(
            id(),
            vec![],
            vec![SeparableTerm::of_time(|_| 1.0, id())],
            Smoothness::C02,
        )?
        .with_holder(1.0, 1.0),
        "c01-kink" => build(kink(), vec![], vec![], Smoothness::C01)?
            .with_holder(1.0, 0.0)
            .with_piecewise_fx(true),
        "square" => build(
            SpaceTerm::smooth(|x| x * x, |x| 2.0 * x, |_| 2.0),
            vec![],
            vec![],
            Smoothness::C02,
        )?
        .with_holder(1.0, 0.0),
        "time-noise" => build(
            id(),
            vec![],
            vec![SeparableTerm::of_time(|t| t, one())],
            Smoothness::C02,
        )?
        .with_holder(1.0, 0.0),
        "kink-mixed" => build(
            kink(),
            vec![SeparableTerm::of_time(|_| 1.0, id())],
            vec![SeparableTerm::of_time(|t| t, id())],
            Smoothness::C01,
        )?
        .with_holder(1.0, 1.0)
        .with_piecewise_fx(true),
        _ => {
            return Err(config(format!(
                "unknown flow '{name}'; catalog: {}",
                catalog_names().join(", ")
            )))
        }
    };
    Ok(flow)
}
