//! Monte Carlo cross-checks of the closed forms.

mod common;

use common::*;
use levy_toft::fluctuation::FluctuationContext;
use levy_toft::levy_model::{LevyModel, PhaseType};
use levy_toft::optimizer::solve_barrier;
use levy_toft::simulate::{mc_continuous_passage, mc_periodic_equity, mc_periodic_valuation, SimConfig};
use levy_toft::valuation::{equity_at_barrier, value, MarketParams};

/// Grid passage detection misses short excursions; the effective barrier
/// moves by about `0.5826 sigma sqrt(h)`.
fn grid_shift(model: &LevyModel, cfg: &SimConfig) -> f64 {
    0.5826 * model.sigma() * cfg.grid_step.sqrt()
}

#[test]
fn pure_drift_passage_matches_gamma() {
    let model = LevyModel::new(0.0, -0.5, 0.0, PhaseType::exponential(1.0).unwrap()).unwrap();
    let ctx = FluctuationContext::new(model.clone());
    let q = 0.075;
    let est = mc_continuous_passage(&model, 0.5, q, f64::NEG_INFINITY, &SimConfig::default().with_paths(8))
        .unwrap();
    let closed = 1.0 - ctx.gamma(0.5, q).unwrap();
    assert!((est.laplace.mean - closed).abs() < 1e-12, "{} vs {closed}", est.laplace.mean);
    assert!((closed - (-q).exp()).abs() < 1e-12);
}

#[test]
fn gamma_by_simulation() {
    let ctx = reference_ctx();
    let model = ctx.model().clone();
    let (x, q) = (0.5, 0.075);
    let cfg = SimConfig::default().with_paths(20_000);
    let est = mc_continuous_passage(&model, x, q, f64::NEG_INFINITY, &cfg).unwrap();
    let closed = 1.0 - ctx.gamma(x, q).unwrap();
    let bias = grid_shift(&model, &cfg) * ctx.gamma_deriv(x, q).unwrap();
    assert!(est.laplace.agrees_with(closed, 3.0, bias), "{:?} vs {closed}", est.laplace);
}

#[test]
fn occupation_g_by_simulation() {
    let ctx = reference_ctx();
    let model = ctx.model().clone();
    let (x, q, a) = (0.5, 0.075, 0.2);
    let cfg = SimConfig::default().with_paths(20_000);
    let est = mc_continuous_passage(&model, x, q, a, &cfg).unwrap();
    let closed = ctx.g(x, q, a).unwrap();
    let slope = ctx.g_deriv(x, q, a, Default::default()).unwrap();
    let bias = grid_shift(&model, &cfg) * slope.abs();
    assert!(est.occupation.agrees_with(closed, 3.0, bias), "{:?} vs {closed}", est.occupation);
}

#[test]
fn degenerate_market_equity() {
    let ctx = reference_ctx();
    let mkt = MarketParams { eta: 1.0, kappa: 0.0, rho: 0.0, tax_threshold: 0.0, ..reference_market() }
        .periodic(4.0);
    let (v, vb) = (100.0, 40.0);
    let closed = value(&ctx, &mkt, v, vb).unwrap().equity;
    let est = mc_periodic_equity(ctx.model(), &mkt, v, vb, &SimConfig::default().with_paths(20_000)).unwrap();
    assert!(est.agrees_with(closed, 3.0, 0.0), "{est:?} vs {closed}");
}

#[test]
fn equity_started_at_the_barrier() {
    let ctx = reference_ctx();
    let mkt = reference_market().periodic(4.0);
    let vb = 1.2 * solve_barrier(&ctx, &mkt).unwrap().barrier;
    let closed = equity_at_barrier(&ctx, &mkt, vb).unwrap();
    assert!(closed > 0.0);
    let est =
        mc_periodic_equity(ctx.model(), &mkt, vb, vb, &SimConfig::default().with_paths(20_000)).unwrap();
    assert!(est.agrees_with(closed, 3.0, 0.0), "{est:?} vs {closed}");
}

#[test]
fn infrequent_observation_raises_firm_and_debt_values() {
    let ctx = reference_ctx();
    let base = reference_market();
    let cfg = SimConfig::default().with_paths(20_000);
    let mut firms = Vec::new();
    let mut debts = Vec::new();
    for lambda in [1.0, 52.0] {
        let mkt = base.periodic(lambda);
        let vb = solve_barrier(&ctx, &mkt).unwrap().barrier;
        let closed = value(&ctx, &mkt, 100.0, vb).unwrap();
        let mc = mc_periodic_valuation(ctx.model(), &mkt, 100.0, vb, &cfg).unwrap();
        assert!(mc.firm.agrees_with(closed.firm, 3.0, 0.0), "{:?} vs {}", mc.firm, closed.firm);
        assert!(mc.debt.agrees_with(closed.debt, 3.0, 0.0), "{:?} vs {}", mc.debt, closed.debt);
        firms.push(mc.firm);
        debts.push(mc.debt);
    }
    let gap = |a: &levy_toft::McEstimate, b: &levy_toft::McEstimate| {
        (a.mean - b.mean) / (a.std_error.hypot(b.std_error))
    };
    assert!(gap(&firms[0], &firms[1]) > 5.0);
    assert!(gap(&debts[0], &debts[1]) > 5.0);
}

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let ctx = reference_ctx();
    let mkt = reference_market().periodic(4.0);
    let cfg = SimConfig::default().with_paths(2_000);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| mc_periodic_equity(ctx.model(), &mkt, 100.0, 40.0, &cfg).unwrap())
    };
    assert_eq!(run(1), run(3));
}
