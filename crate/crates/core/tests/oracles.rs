//! Ensemble checks against closed-form expectations of the discrete
//! estimators.

use proptest::prelude::*;
use ventzell_core::ensemble::map_paths;
use ventzell_core::flowkit::{catalog_flow, FlowPath};
use ventzell_core::pathkit::{build_weak_dirichlet, simulate_brownian, ProcessRole, ProcessSpec, SamplePath, TimeGrid};
use ventzell_core::proofterms::mao_path_sample;
use ventzell_core::regint::{eps_covariation, eps_forward_integral, ito_integral_oracle};
use ventzell_core::sum;

fn grid(n: usize) -> TimeGrid {
    TimeGrid::new(1.0, n, 0.125).unwrap()
}

fn within(samples: &[f64], target: f64, k: f64) -> bool {
    (sum::mean(samples) - target).abs() <= k * sum::std_error(samples)
}

/// With constant continuation, `E [W]^ε_T = T - (ε - dt)/2`.
#[test]
fn covariation_mean_matches_continuation_bias() {
    let g = grid(2048);
    for eps in [0.125, 0.03125] {
        let vals = map_paths(2000, 11, |_, s| {
            let w = simulate_brownian(&g, s, 1)?;
            Ok(eps_covariation(&w, &w, eps, 1.0)?.value)
        })
        .unwrap();
        let target = 1.0 - (eps - g.dt()) / 2.0;
        assert!(within(&vals, target, 4.0), "eps {eps}: mean {} vs {target}", sum::mean(&vals));
    }
}

/// `Var [W]^ε_T ≈ 4ε/3` for small ε.
#[test]
fn covariation_variance_scales_with_eps() {
    let g = grid(4096);
    let eps = 0.03125;
    let vals = map_paths(2000, 12, |_, s| {
        let w = simulate_brownian(&g, s, 1)?;
        Ok(eps_covariation(&w, &w, eps, 1.0)?.value)
    })
    .unwrap();
    let ratio = sum::variance(&vals) / (4.0 * eps / 3.0);
    assert!((ratio - 1.0).abs() < 0.15, "variance ratio {ratio}");
}

/// Both integrals of `W` against `W` are centred.
#[test]
fn forward_and_ito_sums_are_centred() {
    let g = grid(2048);
    let per_path = map_paths(2000, 13, |_, s| {
        let w = simulate_brownian(&g, s, 1)?;
        Ok((eps_forward_integral(&w, &w, 0.0625, 1.0)?.value, ito_integral_oracle(&w, &w, 1.0)?))
    })
    .unwrap();
    let fwd: Vec<f64> = per_path.iter().map(|p| p.0).collect();
    let ito: Vec<f64> = per_path.iter().map(|p| p.1).collect();
    assert!(within(&fwd, 0.0, 4.0));
    assert!(within(&ito, 0.0, 4.0));
}

/// For `γ(s, x) = s`, `Z̃^ε_r = Σ_{i<e} i dt ΔW_{r+i} / √ε`, so
/// `E|Z̃|² = dt³ Σ_{i<e} i² / ε`.
#[test]
fn time_noise_second_moment_is_exact_on_the_grid() {
    let g = grid(1024);
    let flow = catalog_flow("time-noise").unwrap();
    let eps = [0.0625];
    let r_nodes = [0, 300, 700];
    let samples = map_paths(4000, 14, |_, s| {
        let p = build_weak_dirichlet(&g, &ProcessSpec::BrownianMotion, &ProcessSpec::zero(), s)?;
        mao_path_sample(&flow, &p, &r_nodes, &eps)
    })
    .unwrap();
    let e = g.epsilon_steps(eps[0]).unwrap();
    let exact = g.dt().powi(3) * (0..e).map(|i| (i * i) as f64).sum::<f64>() / eps[0];
    for j in 0..r_nodes.len() {
        let sq: Vec<f64> = samples.iter().map(|s| s.z_tilde[0][j].powi(2)).collect();
        assert!(within(&sq, exact, 4.0), "node {j}: {} vs {exact}", sum::mean(&sq));
    }
}

/// Finite differences of the flow against its analytic `F_x`.
#[test]
fn analytic_and_numeric_fx_agree() {
    let g = grid(256);
    let w = simulate_brownian(&g, 15, 1).unwrap();
    for name in ["square", "linear-noise", "kink-mixed"] {
        let flow = catalog_flow(name).unwrap();
        let fp = FlowPath::new(&flow, &w).unwrap();
        for k in [0, 100, 256] {
            for x in [-1.3, -0.2, 0.45, 2.0] {
                let h = 1e-5;
                let fd = (fp.value(k, &[x + h]).unwrap() - fp.value(k, &[x - h]).unwrap()) / (2.0 * h);
                let an = fp.fx(k, &[x]).unwrap();
                assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "{name} k={k} x={x}: {fd} vs {an}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// `|[A, W]^ε| ≤ √([A]^ε [W]^ε)` and `[A]^ε_T ≤ sup|ΔA|² T / ε` for
    /// `A(t) = t²`.
    #[test]
    fn finite_variation_covariation_is_small(seed in any::<u64>(), k in 3i32..7) {
        let g = grid(1024);
        let eps = 2f64.powi(-k);
        let w = simulate_brownian(&g, seed, 1).unwrap();
        let a = SamplePath::from_fn(g, ProcessRole::ZeroEnergy, |t| t * t);
        let aw = eps_covariation(&a, &w, eps, 1.0).unwrap().value;
        let aa = eps_covariation(&a, &a, eps, 1.0).unwrap().value;
        let ww = eps_covariation(&w, &w, eps, 1.0).unwrap().value;
        prop_assert!(aw.abs() <= (aa * ww).sqrt() * (1.0 + 1e-12) + 1e-15);
        let jump = 2.0 * eps;
        prop_assert!(aa <= jump * jump / eps + 1e-12);
    }

    /// Polarization: `[X+Y]^ε = [X]^ε + 2[X,Y]^ε + [Y]^ε`.
    #[test]
    fn covariation_polarizes(s1 in any::<u64>(), s2 in any::<u64>(), k in 3i32..7, t in 0.0f64..1.0) {
        let g = grid(512);
        let eps = 2f64.powi(-k);
        let t = g.time(g.floor_index(t).unwrap());
        let x = simulate_brownian(&g, s1, 1).unwrap();
        let y = simulate_brownian(&g, s2, 1).unwrap();
        let z = x.add(&y, ProcessRole::Composite).unwrap();
        let c = |p: &SamplePath, q: &SamplePath| eps_covariation(p, q, eps, t).unwrap().value;
        let lhs = c(&z, &z);
        let rhs = c(&x, &x) + 2.0 * c(&x, &y) + c(&y, &y);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }
}
