//! Gauss-Legendre quadrature on `[0, 1]`.

use std::sync::OnceLock;

pub const GL_POINTS: usize = 16;

/// Nodes and weights of the 16-point rule mapped to `[0, 1]`.
pub fn gauss_legendre_16() -> &'static [(f64, f64); GL_POINTS] {
    static RULE: OnceLock<[(f64, f64); GL_POINTS]> = OnceLock::new();
    RULE.get_or_init(|| {
        let mut rule = [(0.0, 0.0); GL_POINTS];
        let n = GL_POINTS;
        for i in 0..n {
            // Newton on P_n starting from the Chebyshev guess
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let step = p / d;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            rule[i] = (0.5 * (1.0 - x), 0.5 * w);
        }
        rule.sort_by(|a, b| a.0.total_cmp(&b.0));
        rule
    })
}

/// `P_n(x)` and `P_n'(x)` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// 16-point rule on `[a, b]`.
pub fn gl16(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let h = b - a;
    let mut s = 0.0;
    for &(x, w) in gauss_legendre_16() {
        s += w * f(a + h * x);
    }
    s * h
}

/// Adaptive bisection of the 16-point rule, for integrands with a kink.
///
/// The error budget is `rel_tol` times the rule applied to `|f|` on the
/// whole interval; each half of a refined panel gets half of its parent's
/// budget.
pub fn gl16_adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64, max_depth: u32) -> f64 {
    let scale = gl16(&|x: f64| f(x).abs(), a, b).abs();
    gl16_adaptive_budget(f, a, b, rel_tol * scale, max_depth)
}

/// As [`gl16_adaptive`] with an absolute error budget.
pub fn gl16_adaptive_budget(f: &impl Fn(f64) -> f64, a: f64, b: f64, budget: f64, max_depth: u32) -> f64 {
    let whole = gl16(f, a, b);
    refine(f, a, b, whole, budget.max(f64::MIN_POSITIVE), max_depth)
}

fn refine(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, budget: f64, depth: u32) -> f64 {
    let mid = 0.5 * (a + b);
    let left = gl16(f, a, mid);
    let right = gl16(f, mid, b);
    let split = left + right;
    if depth == 0 || (split - whole).abs() <= budget {
        return split;
    }
    refine(f, a, mid, left, 0.5 * budget, depth - 1) + refine(f, mid, b, right, 0.5 * budget, depth - 1)
}
