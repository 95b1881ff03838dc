//! One function per experiment kind. Each reduces its ensemble to a
//! pass/fail summary plus CSV tables; nothing is written here.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::{json, Value};
use ventzell_core::ensemble::map_paths;
use ventzell_core::flowkit::StochasticFlow;
use ventzell_core::pathkit::{build_weak_dirichlet, ProcessSpec, WeakDirichletPaths};
use ventzell_core::proofterms::{
    compute_proof_terms, lemma_study, mao_study, proof_term_study, BracketOracle, DecaySeries, LemmaWeights,
};
use ventzell_core::regint::{eps_covariation, eps_forward_integral_curve, ito_integral_curve};
use ventzell_core::rng::path_seed;
use ventzell_core::sum;
use ventzell_core::ucpstats::{
    boundedness_in_probability, decreasing_up_to_overlap, Interval, UcpEstimate, UcpReport,
};
use ventzell_core::ventzell::{
    assemble_rhs_terms, assumption_spot_check, characteristic_sups, decompose, martingale_corollary_check,
    zero_energy_check, zero_energy_samples, TestMartingale,
};

use crate::config::{ExperimentKind, LemmaWeightChoice, Resolved};
use crate::manifest::{TOOL_NAME, TOOL_VERSION};
use crate::CliError;

/// Standard errors allowed between the terminal covariation mean and its
/// target.
pub const MEAN_SE_TOLERANCE: f64 = 3.0;
/// Allowed `|Itô sum - (W_T² - T)/2|` in units of `√dt`.
pub const ITO_ORACLE_SQRT_DT: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub kind: ExperimentKind,
    pub pass: bool,
    pub summary: Value,
    /// Verdict JSON first, then CSVs.
    pub artifacts: Vec<Artifact>,
}

impl RunOutcome {
    pub fn verdict_json(&self) -> &[u8] {
        &self.artifacts[0].bytes
    }
}

/// `2m7` for `2^-7`; other values in exponent notation with `p` for the
/// decimal point.
pub fn pow2_label(x: f64) -> String {
    if x > 0.0 {
        let k = x.log2().round();
        if 2f64.powi(k as i32) == x {
            return if k < 0.0 { format!("2m{}", -k) } else { format!("2p{k}") };
        }
    }
    format!("{x:e}").replace('.', "p").replace('-', "m")
}

fn f(v: f64) -> String {
    format!("{v:.16e}")
}

struct Ctx<'a> {
    r: &'a Resolved,
    stem: String,
    artifacts: Vec<Artifact>,
}

impl<'a> Ctx<'a> {
    fn rt(&self, e: ventzell_core::Error) -> CliError {
        CliError::Runtime {
            experiment: self.r.config.kind.name().into(),
            source: e,
        }
    }

    fn csv(&mut self, suffix: &str, body: String) {
        self.artifacts.push(Artifact {
            name: format!("{}_{suffix}.csv", self.stem),
            bytes: body.into_bytes(),
        });
    }

    fn build(&self, seed: u64) -> ventzell_core::Result<WeakDirichletPaths> {
        build_weak_dirichlet(&self.r.grid, &self.r.m_spec, &self.r.a_spec, seed)
    }

    fn flow(&self) -> &'a StochasticFlow {
        self.r.flow.as_ref().expect("validated configs resolve a flow")
    }

    fn eps(&self) -> &'a [f64] {
        &self.r.config.epsilons
    }

    fn brownian(&self) -> bool {
        matches!(self.r.m_spec, ProcessSpec::BrownianMotion)
    }

    /// The first `csv_paths` members, rebuilt from their seeds.
    fn leading_paths(&self) -> ventzell_core::Result<Vec<(usize, WeakDirichletPaths)>> {
        let c = &self.r.config;
        (0..c.csv_paths.min(c.paths))
            .map(|i| Ok((i, self.build(path_seed(c.seed, i as u64))?)))
            .collect()
    }
}

fn transpose(per_path: &[Vec<f64>], n_eps: usize) -> Vec<Vec<f64>> {
    (0..n_eps).map(|i| per_path.iter().map(|p| p[i]).collect()).collect()
}

fn ucp_series(by_eps: &[Vec<f64>], delta: f64) -> ventzell_core::Result<Vec<UcpEstimate>> {
    by_eps
        .iter()
        .map(|s| UcpEstimate::from_sup_samples(s.iter().map(|v| v.abs()).collect(), delta))
        .collect()
}

fn records(eps: &[f64], series: &[UcpEstimate], eta: f64) -> ventzell_core::Result<Value> {
    Ok(serde_json::to_value(UcpReport::new(eps, series, eta)?).expect("reports serialize"))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

pub fn run_experiment(r: &Resolved) -> Result<RunOutcome, CliError> {
    let c = &r.config;
    let flow_part = match c.kind {
        ExperimentKind::Covariation | ExperimentKind::ForwardIntegral => "x".to_string(),
        ExperimentKind::LemmaCheck if r.flow.is_none() => "x".to_string(),
        _ => c.flow_label(),
    };
    let stem = format!("{}_{}_s{}_dt{}", c.kind, flow_part, c.seed, pow2_label(r.grid.dt()));
    let mut ctx = Ctx {
        r,
        stem,
        artifacts: Vec::new(),
    };
    let (pass, summary) = match c.kind {
        ExperimentKind::Covariation => covariation(&mut ctx),
        ExperimentKind::ForwardIntegral => forward_integral(&mut ctx),
        ExperimentKind::VentzellVerify => ventzell_verify(&mut ctx),
        ExperimentKind::ZeroEnergy => zero_energy(&mut ctx),
        ExperimentKind::Corollary => corollary(&mut ctx),
        ExperimentKind::ProofTerms => proof_terms(&mut ctx),
        ExperimentKind::LemmaCheck => lemma_check(&mut ctx),
        ExperimentKind::MaoBound => mao_bound(&mut ctx),
    }
    .map_err(|e| ctx.rt(e))?;
    log::info!("{}: {}", c.kind, if pass { "pass" } else { "fail" });

    let verdict = json!({
        "tool": TOOL_NAME,
        "version": TOOL_VERSION,
        "kind": c.kind.name(),
        "flow": flow_part,
        "seed": c.seed,
        "paths": c.paths,
        "dt": r.grid.dt(),
        "epsilons": c.epsilons,
        "pass": pass,
        "summary": summary,
    });
    let mut text = serde_json::to_string_pretty(&verdict).expect("verdicts serialize");
    text.push('\n');
    let mut artifacts = vec![Artifact {
        name: format!("{}_verdict.json", ctx.stem),
        bytes: text.into_bytes(),
    }];
    artifacts.append(&mut ctx.artifacts);
    Ok(RunOutcome {
        kind: c.kind,
        pass,
        summary,
        artifacts,
    })
}

type Step = ventzell_core::Result<(bool, Value)>;

fn realized_qv(x: &ventzell_core::pathkit::SamplePath) -> f64 {
    let sq: Vec<f64> = (0..x.n_nodes() - 1).map(|k| (x.at(k + 1) - x.at(k)).powi(2)).collect();
    sum::pairwise_sum(&sq)
}

/// `[X, X]^ε_T` per path against `T` for a Brownian `X` and against the
/// realized quadratic variation otherwise.
fn covariation(ctx: &mut Ctx<'_>) -> Step {
    let c = &ctx.r.config;
    let horizon = ctx.r.grid.horizon();
    let brownian = ctx.brownian();
    let per_path = map_paths(c.paths, c.seed, |_, s| {
        let p = ctx.build(s)?;
        let target = if brownian { horizon } else { realized_qv(&p.x) };
        let vals = ctx
            .eps()
            .iter()
            .map(|&e| Ok(eps_covariation(&p.x, &p.x, e, horizon)?.value))
            .collect::<ventzell_core::Result<Vec<_>>>()?;
        Ok((vals, target))
    })?;
    let n_eps = ctx.eps().len();
    let values: Vec<Vec<f64>> = per_path.iter().map(|p| p.0.clone()).collect();
    let errors: Vec<Vec<f64>> = per_path.iter().map(|(v, t)| v.iter().map(|x| x - t).collect()).collect();
    let by_eps = transpose(&values, n_eps);
    let err_by_eps = transpose(&errors, n_eps);
    let means: Vec<Interval> = by_eps.iter().map(|s| Interval::mean_of(s)).collect();
    let abs_dev: Vec<Interval> = err_by_eps
        .iter()
        .map(|s| Interval::mean_of(&s.iter().map(|v| v.abs()).collect::<Vec<_>>()))
        .collect();
    let last = err_by_eps.last().expect("nonempty schedule");
    let bias = sum::mean(last);
    let se = sum::std_error(last);
    let terminal_within = bias.abs() <= MEAN_SE_TOLERANCE * se;
    let decreasing = decreasing_up_to_overlap(&abs_dev);
    let series = ucp_series(&err_by_eps, c.delta)?;
    let tight = boundedness_in_probability(
        &ctx.eps().iter().zip(&by_eps).map(|(&e, s)| (e, s.clone())).collect::<Vec<_>>(),
        &c.thresholds,
    )?;

    let mut body = String::from("path,eps,value,target\n");
    for (i, (vals, t)) in per_path.iter().enumerate() {
        for (e, v) in ctx.eps().iter().zip(vals) {
            writeln!(body, "{i},{},{},{}", f(*e), f(*v), f(*t)).unwrap();
        }
    }
    ctx.csv("values", body);

    let pass = decreasing && terminal_within;
    Ok((
        pass,
        json!({
            "target": if brownian { "T" } else { "realized quadratic variation" },
            "mean": means,
            "mean_abs_deviation": abs_dev,
            "deviation_decreasing": decreasing,
            "terminal_bias": bias,
            "terminal_standard_error": se,
            "terminal_within_3se": terminal_within,
            "exceedance": records(ctx.eps(), &series, c.eta)?,
            "tightness": to_value(&tight),
        }),
    ))
}

/// `∫ X d⁻M` at ε against the Itô sum `Σ X_k ΔM_k`.
fn forward_integral(ctx: &mut Ctx<'_>) -> Step {
    let c = &ctx.r.config;
    let brownian = ctx.brownian();
    let horizon = ctx.r.grid.horizon();
    let per_path = map_paths(c.paths, c.seed, |_, s| {
        let p = ctx.build(s)?;
        let ito = ito_integral_curve(&p.x, &p.m)?;
        let it = *ito.last().expect("nonempty grid");
        let oracle_gap = if brownian {
            (it - (p.x.terminal().powi(2) - horizon) / 2.0).abs()
        } else {
            0.0
        };
        let mut terminal = Vec::new();
        let mut sups = Vec::new();
        let mut values = Vec::new();
        for &e in ctx.eps() {
            let fwd = eps_forward_integral_curve(&p.x, &p.m, e)?;
            let ft = *fwd.last().expect("nonempty grid");
            values.push(ft);
            terminal.push((ft - it).abs());
            sups.push(fwd.iter().zip(&ito).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
        Ok((terminal, sups, values, it, oracle_gap))
    })?;
    let n_eps = ctx.eps().len();
    let terminal = transpose(&per_path.iter().map(|p| p.0.clone()).collect::<Vec<_>>(), n_eps);
    let sups = transpose(&per_path.iter().map(|p| p.1.clone()).collect::<Vec<_>>(), n_eps);
    let gaps = DecaySeries::from_samples("|forward - ito| at T", &terminal);
    let terminal_ok = gaps.terminal() <= c.delta;
    let sqrt_dt = ctx.r.grid.dt().sqrt();
    let worst_oracle = per_path.iter().map(|p| p.4).fold(0.0, f64::max);
    let oracle_ok = worst_oracle <= ITO_ORACLE_SQRT_DT * sqrt_dt;
    let series = ucp_series(&sups, c.delta)?;

    let mut body = String::from("path,eps,forward,ito\n");
    for (i, p) in per_path.iter().enumerate() {
        for (e, v) in ctx.eps().iter().zip(&p.2) {
            writeln!(body, "{i},{},{},{}", f(*e), f(*v), f(p.3)).unwrap();
        }
    }
    ctx.csv("values", body);

    let pass = gaps.decreasing && terminal_ok && oracle_ok;
    Ok((
        pass,
        json!({
            "terminal_gap": to_value(&gaps),
            "terminal_median_within_delta": terminal_ok,
            "oracle_checked": brownian,
            "worst_oracle_gap": worst_oracle,
            "oracle_tolerance": ITO_ORACLE_SQRT_DT * sqrt_dt,
            "ucp": records(ctx.eps(), &series, c.eta)?,
        }),
    ))
}

fn assumptions(ctx: &Ctx<'_>, sups: &[(f64, f64)]) -> ventzell_core::Result<Value> {
    let c = &ctx.r.config;
    let reference = ctx.build(path_seed(c.seed, 0))?;
    Ok(to_value(&assumption_spot_check(ctx.flow(), &reference, sups, c.rho)?))
}

fn write_decompositions(ctx: &mut Ctx<'_>, eps: Option<f64>) -> ventzell_core::Result<()> {
    for (i, p) in ctx.leading_paths()? {
        let seed = path_seed(ctx.r.config.seed, i as u64);
        let report = match eps {
            Some(e) => decompose(ctx.flow(), &p, e)?,
            None => assemble_rhs_terms(ctx.flow(), &p)?,
        }
        .with_seed(seed);
        let mut out = Vec::new();
        report.write_csv(&mut out)?;
        let suffix = match eps {
            Some(e) => format!("path{i}_eps{}", pow2_label(e)),
            None => format!("path{i}"),
        };
        ctx.csv(&suffix, String::from_utf8(out).expect("csv is utf-8"));
    }
    Ok(())
}

/// `sup_t |residual - explicit|` per ε.
fn ventzell_verify(ctx: &mut Ctx<'_>) -> Step {
    let c = &ctx.r.config;
    let flow = ctx.flow();
    let per_path = map_paths(c.paths, c.seed, |_, s| {
        let p = ctx.build(s)?;
        let sups = ctx
            .eps()
            .iter()
            .map(|&e| Ok(decompose(flow, &p, e)?.sup_discrepancy().expect("explicit side attached")))
            .collect::<ventzell_core::Result<Vec<_>>>()?;
        Ok((sups, characteristic_sups(flow, &p)?))
    })?;
    let by_eps = transpose(&per_path.iter().map(|p| p.0.clone()).collect::<Vec<_>>(), ctx.eps().len());
    let series = DecaySeries::from_samples("sup|residual - explicit|", &by_eps);
    let terminal_ok = series.terminal() <= c.delta;
    let ucp = ucp_series(&by_eps, c.delta)?;
    let spot = assumptions(ctx, &per_path.iter().map(|p| p.1).collect::<Vec<_>>())?;
    let last = *ctx.eps().last().expect("nonempty schedule");
    write_decompositions(ctx, Some(last))?;
    let pass = series.decreasing && terminal_ok;
    Ok((
        pass,
        json!({
            "sup_discrepancy": to_value(&series),
            "terminal_median_within_delta": terminal_ok,
            "ucp": records(ctx.eps(), &ucp, c.eta)?,
            "assumptions": spot,
        }),
    ))
}

/// `[B^X(F), N]^ε_T` against 0.
fn zero_energy(ctx: &mut Ctx<'_>) -> Step {
    let c = &ctx.r.config;
    let flow = ctx.flow();
    let per_path = map_paths(c.paths, c.seed, |_, s| {
        let p = ctx.build(s)?;
        let report = assemble_rhs_terms(flow, &p)?;
        let n = c.martingale.realize(&p.driver)?;
        Ok((zero_energy_samples(&report, &n, ctx.eps())?, characteristic_sups(flow, &p)?))
    })?;
    let samples: Vec<Vec<f64>> = per_path.iter().map(|p| p.0.clone()).collect();
    let report = zero_energy_check(&samples, ctx.eps(), c.delta, c.eta)?;
    let by_eps = transpose(&samples, ctx.eps().len());
    let tight = boundedness_in_probability(
        &ctx.eps().iter().zip(&by_eps).map(|(&e, s)| (e, s.clone())).collect::<Vec<_>>(),
        &c.thresholds,
    )?;
    let spot = assumptions(ctx, &per_path.iter().map(|p| p.1).collect::<Vec<_>>())?;

    let mut body = String::from("path,eps,covariation\n");
    for (i, s) in samples.iter().enumerate() {
        for (e, v) in ctx.eps().iter().zip(s) {
            writeln!(body, "{i},{},{}", f(*e), f(*v)).unwrap();
        }
    }
    ctx.csv("values", body);
    write_decompositions(ctx, None)?;

    Ok((
        report.verdict.pass,
        json!({
            "martingale": c.martingale,
            "exceedance": records(ctx.eps(), &report.series, c.eta)?,
            "median_abs": DecaySeries::from_samples("|[B, N]^eps_T|", &by_eps.iter().map(|s| s.iter().map(|v| v.abs()).collect()).collect::<Vec<Vec<f64>>>()),
            "tightness": to_value(&tight),
            "assumptions": spot,
        }),
    ))
}

/// Residual must vanish on every path of a declared martingale case.
fn corollary(ctx: &mut Ctx<'_>) -> Step {
    let c = &ctx.r.config;
    let flow = ctx.flow();
    let eps = *ctx.eps().last().expect("nonempty schedule");
    let per_path = map_paths(c.paths, c.seed, |_, s| {
        let p = ctx.build(s)?;
        let v = martingale_corollary_check(flow, &p, eps)?;
        let terminal = *assemble_rhs_terms(flow, &p)?.residual.last().expect("nonempty grid");
        Ok((v, terminal))
    })?;
    let failures: Vec<usize> = (0..per_path.len()).filter(|&i| !per_path[i].0.pass).collect();
    let (worst_path, worst) = per_path
        .iter()
        .enumerate()
        .fold((0, &per_path[0].0), |b, (i, p)| if p.0.sup_residual > b.1.sup_residual { (i, &p.0) } else { b });
    let terminal: Vec<f64> = per_path.iter().map(|p| p.1).collect();

    let mut body = String::from("path,sup_residual,worst_time,residual_covariation,residual_T\n");
    for (i, (v, t)) in per_path.iter().enumerate() {
        writeln!(body, "{i},{},{},{},{}", f(v.sup_residual), f(v.worst_time), f(v.residual_covariation), f(*t)).unwrap();
    }
    ctx.csv("values", body);
    write_decompositions(ctx, None)?;

    Ok((
        failures.is_empty(),
        json!({
            "eps": eps,
            "tolerance": worst.tolerance,
            "failing_paths": failures.len(),
            "first_failures": failures.iter().take(10).collect::<Vec<_>>(),
            "worst_path": worst_path,
            "worst": to_value(worst),
            "residual_at_T": Interval::mean_of(&terminal),
        }),
    ))
}

fn proof_terms(ctx: &mut Ctx<'_>) -> Step {
    let c = &ctx.r.config;
    let flow = ctx.flow();
    let oracle = if ctx.brownian() && c.martingale == TestMartingale::Driver {
        BracketOracle::ExactDriver
    } else {
        BracketOracle::Realized
    };
    let study = proof_term_study(flow, |s| ctx.build(s), c.martingale, oracle, c.paths, c.seed, ctx.eps())?;
    let last = *ctx.eps().last().expect("nonempty schedule");
    for (i, p) in ctx.leading_paths()? {
        let n = c.martingale.realize(&p.driver)?;
        let set = compute_proof_terms(flow, &p, &n, last)?;
        let mut out = Vec::new();
        set.write_csv(&mut out)?;
        ctx.csv(&format!("path{i}_eps{}", pow2_label(last)), String::from_utf8(out).expect("csv is utf-8"));
    }
    Ok((study.pass, json!({ "oracle": oracle, "study": to_value(&study) })))
}

fn lemma_check(ctx: &mut Ctx<'_>) -> Step {
    let r = ctx.r;
    let c = &r.config;
    let lemma = r.lemma.expect("validated lemma-check configs name a lemma");
    let weights = match r.lemma_weights {
        LemmaWeightChoice::Synthetic(fam) => LemmaWeights::Synthetic(fam),
        LemmaWeightChoice::FlowY => LemmaWeights::FlowY(ctx.flow()),
        LemmaWeightChoice::FlowZ => LemmaWeights::FlowZ(ctx.flow()),
    };
    let report = lemma_study(lemma, weights, |s| ctx.build(s), c.paths, c.seed, ctx.eps(), c.delta, c.eta)?;
    let mut body = String::from("eps,median_sup,median_lo,median_hi,prob,prob_lo,prob_hi\n");
    for ((e, m), u) in report.epsilons.iter().zip(&report.median_sups.medians).zip(&report.series) {
        writeln!(
            body,
            "{},{},{},{},{},{},{}",
            f(*e),
            f(m.value),
            f(m.lo),
            f(m.hi),
            f(u.empirical_prob),
            f(u.ci_low),
            f(u.ci_high)
        )
        .unwrap();
    }
    ctx.csv("series", body);
    Ok((
        report.verdict.pass,
        json!({
            "lemma": lemma.to_string(),
            "weights": c.lemma_weights,
            "exceedance": records(&report.epsilons, &report.series, c.eta)?,
            "median_sups": to_value(&report.median_sups),
        }),
    ))
}

fn mao_bound(ctx: &mut Ctx<'_>) -> Step {
    let c = &ctx.r.config;
    let report = mao_study(ctx.flow(), |s| ctx.build(s), &ctx.r.grid, c.paths, c.seed, ctx.eps(), c.rho)?;
    let mut body = String::from("r,eps,second,second_hw,p_moment,p_moment_hw,flagged\n");
    for cell in &report.cells {
        writeln!(
            body,
            "{},{},{},{},{},{},{}",
            f(cell.r),
            f(cell.eps),
            f(cell.second.0),
            f(cell.second.1),
            f(cell.p_moment.0),
            f(cell.p_moment.1),
            cell.flagged
        )
        .unwrap();
    }
    ctx.csv("cells", body);
    Ok((report.pass, to_value(&report)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(pow2_label(0.0078125), "2m7");
        assert_eq!(pow2_label(2f64.powi(-14)), "2m14");
        assert_eq!(pow2_label(4.0), "2p2");
        assert_eq!(pow2_label(0.1), "1em1");
        assert_eq!(pow2_label(0.15), "1p5em1");
    }
}
