#![allow(dead_code)]

use levy_toft::fluctuation::FluctuationContext;
use levy_toft::levy_model::LevyModel;
use levy_toft::valuation::MarketParams;

pub const LAMBDAS: [f64; 7] = [1.0, 2.0, 4.0, 6.0, 12.0, 52.0, 365.0];
pub const JUMP_RATES: [f64; 7] = [0.001, 0.1, 0.2, 0.3, 0.4, 0.5, 1.0];

pub fn reference_ctx() -> FluctuationContext {
    FluctuationContext::new(LevyModel::reference())
}

pub fn reference_market() -> MarketParams {
    MarketParams::reference()
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Composite Gauss-Legendre quadrature of `f` over `[a, b]` with `panels`
/// equal panels.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let rule = gauss_legendre(16);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * h;
        let panel: f64 = rule.iter().map(|&(x, w)| w * f(mid + 0.5 * h * x)).sum();
        total += 0.5 * h * panel;
    }
    total
}

/// `int_0^inf e^{-s x} W^{(q)}(x) dx` by quadrature on `[0, cut]` plus the
/// dominant-exponential tail `e^{Phi x} / psi'(Phi)` beyond `cut`.
pub fn scale_laplace_by_quadrature(ctx: &FluctuationContext, q: f64, s: f64) -> f64 {
    let scale = ctx.scale(q).unwrap();
    let phi = scale.phi();
    let cut = (600.0 / phi.max(1.0)).min(120.0);
    let body = integrate(|x| (-s * x).exp() * scale.w(x), 0.0, cut, (cut * 40.0) as usize);
    let tail = ((phi - s) * cut).exp() / (ctx.model().psi_deriv(phi) * (s - phi));
    body + tail
}

/// True when a strict rise is followed later by a strict fall.
pub fn rises_then_falls(xs: &[f64]) -> bool {
    let first_rise = (1..xs.len()).find(|&i| xs[i] > xs[i - 1]);
    match first_rise {
        Some(i) => (i + 1..xs.len()).any(|j| xs[j] < xs[j - 1]),
        None => false,
    }
}

pub fn report(id: usize, pass: bool, detail: &str) -> bool {
    println!("criterion {id:>2}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}
