//! Decompositions with closed-form residuals and small lemma studies.

use ventzell_core::flowkit::catalog_flow;
use ventzell_core::pathkit::{build_weak_dirichlet, ProcessSpec, TimeGrid, WeakDirichletPaths};
use ventzell_core::proofterms::{lemma_study, LemmaId, LemmaWeights, SyntheticFamily};
use ventzell_core::ventzell::{assemble_rhs_terms, decompose};

fn grid() -> TimeGrid {
    TimeGrid::new(1.0, 2048, 0.125).unwrap()
}

fn w_plus_t2(seed: u64) -> ventzell_core::Result<WeakDirichletPaths> {
    build_weak_dirichlet(&grid(), &ProcessSpec::BrownianMotion, &ProcessSpec::deterministic(|t| t * t), seed)
}

#[test]
fn additive_noise_residual_is_the_drift_part() {
    // F(t, x) = x + W_t, so B = X - W - M = A.
    let flow = catalog_flow("additive-noise").unwrap();
    let p = w_plus_t2(3).unwrap();
    let r = assemble_rhs_terms(&flow, &p).unwrap();
    for k in 0..p.x.n_nodes() {
        let t = grid().time(k);
        assert!((r.residual[k] - t * t).abs() < 1e-12, "node {k}");
    }
}

#[test]
fn drift_only_residual_is_time() {
    let flow = catalog_flow("drift-only").unwrap();
    let p = build_weak_dirichlet(&grid(), &ProcessSpec::BrownianMotion, &ProcessSpec::zero(), 4).unwrap();
    let r = decompose(&flow, &p, 0.0625).unwrap();
    for k in 0..p.x.n_nodes() {
        assert!((r.residual[k] - grid().time(k)).abs() < 1e-12);
    }
    // Nothing in the explicit side depends on ε for this flow.
    assert!(r.sup_discrepancy().unwrap() < 1e-12);
}

#[test]
fn lemma_studies_with_vanishing_weights_pass() {
    let eps = [0.125, 0.03125, 0.0078125];
    for lemma in [LemmaId::L42, LemmaId::L45, LemmaId::L46] {
        let r = lemma_study(lemma, LemmaWeights::Synthetic(SyntheticFamily::SqrtEps), w_plus_t2, 200, 5, &eps, 0.2, 0.05)
            .unwrap();
        assert!(r.median_sups.decreasing, "{lemma}: {:?}", r.median_sups);
        assert!(r.verdict.pass, "{lemma}: {:?}", r.verdict);
    }
}

#[test]
fn lemma_46_with_unit_weights_does_not_vanish() {
    // ∫ d[W]^ε tends to T, not 0.
    let eps = [0.125, 0.03125, 0.0078125];
    let r = lemma_study(LemmaId::L46, LemmaWeights::Synthetic(SyntheticFamily::One), w_plus_t2, 100, 6, &eps, 0.2, 0.05)
        .unwrap();
    assert!(!r.verdict.pass);
    assert!(r.median_sups.terminal() > 0.8);
}
