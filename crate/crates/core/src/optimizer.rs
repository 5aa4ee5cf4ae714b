//! Optimal bankruptcy barriers and the two-stage choice of debt level.
//!
//! The continuous barrier is the infimum of `{v > 0 : f(v) > 0}` (smooth
//! fit away from `V_T`); the periodic barrier is the root of the strictly
//! increasing map `V_B -> E(V_B; V_B)` (continuous fit). Both are found by
//! bisection on a geometrically expanded bracket.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fluctuation::FluctuationContext;
use crate::valuation::{
    c_continuous, c_periodic, equity_at_barrier, k_continuous, k_periodic, value, MarketParams, Observation,
    Valuation,
};

const BRACKET_CAP: f64 = 1e12;
const MAX_BISECTIONS: usize = 400;

/// Which optimality condition produced a barrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    SmoothFitRoot,
    ZeroBarrier,
    ContinuousFitRoot,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::SmoothFitRoot => "SmoothFitRoot",
            Regime::ZeroBarrier => "ZeroBarrier",
            Regime::ContinuousFitRoot => "ContinuousFitRoot",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierSolution {
    pub barrier: f64,
    pub regime: Regime,
    /// `|f|` or `|E(V_B; V_B)|` at the returned barrier.
    pub residual: f64,
    pub iterations: usize,
    /// Set when the continuous root sits on the jump of `f` at `V_T`.
    pub note: Option<String>,
}

impl BarrierSolution {
    fn zero() -> Self {
        Self { barrier: 0.0, regime: Regime::ZeroBarrier, residual: 0.0, iterations: 0, note: None }
    }
}

/// `f(v) = v - (K + 1{V_T > 0} kappa rho (W - Phi W-bar)(log(V_T / v))) P / C`,
/// the sign of the equity slope at `V_B = v`.
pub fn f_continuous(ctx: &FluctuationContext, mkt: &MarketParams, v: f64) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::Domain(format!("f needs v > 0, got {v}")));
    }
    let c = c_continuous(ctx, mkt)?;
    let mut level = k_continuous(ctx, mkt)?;
    if mkt.tax_threshold > 0.0 {
        level += mkt.kappa * mkt.rho * ctx.w_minus_phi_wbar((mkt.tax_threshold / v).ln(), mkt.r)?;
    }
    Ok(v - level * mkt.principal / c)
}

/// Right derivative `dE/dV (V_B+; V_B) = C f(V_B) / V_B` under continuous
/// observation.
pub fn equity_slope_at_barrier(ctx: &FluctuationContext, mkt: &MarketParams, vb: f64) -> Result<f64> {
    Ok(c_continuous(ctx, mkt)? * f_continuous(ctx, mkt, vb)? / vb)
}

/// `epsilon = K / C` (continuous) or `K_lambda / C_lambda` (periodic), or
/// `None` when `K <= 0` and a zero tax threshold gives a zero barrier.
pub fn epsilon(ctx: &FluctuationContext, mkt: &MarketParams) -> Result<Option<f64>> {
    let (k, c) = match mkt.observation {
        Observation::Continuous => (k_continuous(ctx, mkt)?, c_continuous(ctx, mkt)?),
        Observation::Periodic { lambda } => (k_periodic(ctx, mkt, lambda)?, c_periodic(ctx, mkt, lambda)?),
    };
    Ok((k > 0.0).then_some(k / c))
}

/// `L(V, V_B)` with `dE/dV_B = -(Phi(lambda + r + m) - Phi(r + m)) / V_B
/// (V_B / V)^{Phi(r + m)} L(V, V_B)` under periodic observation.
pub fn periodic_sensitivity_kernel(
    ctx: &FluctuationContext,
    mkt: &MarketParams,
    v: f64,
    vb: f64,
) -> Result<f64> {
    let lambda = periodic_lambda(mkt)?;
    let (r, m, p) = (mkt.r, mkt.m, mkt.principal);
    let (pr, prm) = (ctx.phi(r)?, ctx.phi(r + m)?);
    let (plr, plrm) = (ctx.phi(lambda + r)?, ctx.phi(lambda + r + m)?);
    let diag = ctx.lambda_diag(vb.ln(), r, lambda, mkt.tax_threshold)?;
    let lead = (plr - pr) / (plrm - prm) * (v / vb).powf(prm - pr);
    Ok(lead * (p * mkt.kappa * mkt.rho * diag + mkt.eta * vb * (1.0 + pr) / (1.0 + plr))
        + (1.0 - mkt.eta) * vb * (1.0 + prm) / (1.0 + plrm)
        - p * (mkt.rho + m) / (r + m) * prm / plrm)
}

fn periodic_lambda(mkt: &MarketParams) -> Result<f64> {
    mkt.observation
        .lambda()
        .ok_or_else(|| Error::InvalidMarket("periodic solver needs an observation rate".into()))
}

/// Bisection state on an increasing function with `h(lo) <= 0 < h(hi)`.
struct Bracket {
    lo: f64,
    hi: f64,
    h_lo: f64,
    h_hi: f64,
    iterations: usize,
}

/// Finds a bracket for the sign change of an increasing `h` starting from
/// `[1e-8 scale, scale]`, doubling upward and shrinking downward.
fn bracket<H>(h: &H, scale: f64, what: &'static str) -> Result<Bracket>
where
    H: Fn(f64) -> Result<f64>,
{
    let mut iterations = 0;
    let mut hi = scale;
    let mut h_hi = h(hi)?;
    while h_hi <= 0.0 {
        hi *= 2.0;
        iterations += 1;
        if hi > BRACKET_CAP {
            return Err(Error::BracketFailure { what, last_upper: hi });
        }
        h_hi = h(hi)?;
    }
    let mut lo = (1e-8 * scale).min(0.5 * hi);
    let mut h_lo = h(lo)?;
    while h_lo > 0.0 {
        hi = lo;
        h_hi = h_lo;
        lo *= 1e-4;
        iterations += 1;
        if lo < 1e-300 {
            return Err(Error::BracketFailure { what, last_upper: hi });
        }
        h_lo = h(lo)?;
    }
    Ok(Bracket { lo, hi, h_lo, h_hi, iterations })
}

fn bisect<H>(h: &H, mut b: Bracket) -> Result<Bracket>
where
    H: Fn(f64) -> Result<f64>,
{
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (b.lo + b.hi);
        if mid <= b.lo || mid >= b.hi || b.hi - b.lo <= 1e-15 * b.hi {
            break;
        }
        let hm = h(mid)?;
        b.iterations += 1;
        if hm <= 0.0 {
            b.lo = mid;
            b.h_lo = hm;
        } else {
            b.hi = mid;
            b.h_hi = hm;
        }
    }
    Ok(b)
}

fn bracket_scale(mkt: &MarketParams) -> f64 {
    mkt.principal.max(mkt.tax_threshold).max(1.0)
}

/// Optimal barrier under continuous observation.
pub fn solve_barrier_continuous(ctx: &FluctuationContext, mkt: &MarketParams) -> Result<BarrierSolution> {
    mkt.validate()?;
    if mkt.principal == 0.0 {
        return Ok(BarrierSolution::zero());
    }
    if mkt.tax_threshold == 0.0 && k_continuous(ctx, mkt)? <= 0.0 {
        return Ok(BarrierSolution::zero());
    }
    let h = |v: f64| f_continuous(ctx, mkt, v);
    let scale = bracket_scale(mkt);
    let b = bisect(&h, bracket(&h, scale, "continuous barrier")?)?;
    // A jump of f across zero at V_T leaves both ends far from zero.
    let jump_tol = 1e-8 * scale;
    let vt = mkt.tax_threshold;
    if b.h_lo.abs() > jump_tol && b.h_hi.abs() > jump_tol && vt >= b.lo && vt <= b.hi {
        return Ok(BarrierSolution {
            barrier: vt,
            regime: Regime::SmoothFitRoot,
            residual: h(vt)?.abs().min(b.h_hi.abs()),
            iterations: b.iterations,
            note: Some("f jumps across zero at the tax threshold; smooth fit does not hold there".into()),
        });
    }
    let (barrier, residual) =
        if b.h_lo.abs() <= b.h_hi.abs() { (b.lo, b.h_lo.abs()) } else { (b.hi, b.h_hi.abs()) };
    Ok(BarrierSolution {
        barrier,
        regime: Regime::SmoothFitRoot,
        residual,
        iterations: b.iterations,
        note: None,
    })
}

/// Optimal barrier under Poisson observation.
pub fn solve_barrier_periodic(ctx: &FluctuationContext, mkt: &MarketParams) -> Result<BarrierSolution> {
    mkt.validate()?;
    let lambda = periodic_lambda(mkt)?;
    if mkt.principal == 0.0 {
        return Ok(BarrierSolution::zero());
    }
    if mkt.tax_threshold == 0.0 && k_periodic(ctx, mkt, lambda)? <= 0.0 {
        return Ok(BarrierSolution::zero());
    }
    let h = |vb: f64| equity_at_barrier(ctx, mkt, vb);
    let b = bisect(&h, bracket(&h, bracket_scale(mkt), "periodic barrier")?)?;
    let (barrier, residual) =
        if b.h_lo.abs() <= b.h_hi.abs() { (b.lo, b.h_lo.abs()) } else { (b.hi, b.h_hi.abs()) };
    Ok(BarrierSolution {
        barrier,
        regime: Regime::ContinuousFitRoot,
        residual,
        iterations: b.iterations,
        note: None,
    })
}

/// Dispatches on `mkt.observation`.
pub fn solve_barrier(ctx: &FluctuationContext, mkt: &MarketParams) -> Result<BarrierSolution> {
    match mkt.observation {
        Observation::Continuous => solve_barrier_continuous(ctx, mkt),
        Observation::Periodic { .. } => solve_barrier_periodic(ctx, mkt),
    }
}

/// How `V_T` follows the debt level in the two-stage problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaxThresholdRule {
    Zero,
    /// `V_T = P rho / delta`.
    ProportionalToP,
}

impl TaxThresholdRule {
    pub fn threshold(&self, mkt: &MarketParams, principal: f64) -> f64 {
        match self {
            TaxThresholdRule::Zero => 0.0,
            TaxThresholdRule::ProportionalToP => principal * mkt.rho / mkt.delta,
        }
    }
}

/// One debt level with its first-stage barrier and the resulting values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeveragePoint {
    pub principal: f64,
    pub barrier: f64,
    pub valuation: Valuation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageSolution {
    pub principal: f64,
    pub barrier: f64,
    pub firm_value: f64,
    pub debt_value: f64,
    /// `P* / V`.
    pub leverage: f64,
    /// False when the coarse scan found more than one local maximum.
    pub unimodal: bool,
    /// Upper end of the searched debt range.
    pub upper_principal: f64,
}

/// First-stage barrier for debt level `principal`. Under the zero-threshold
/// rule the barrier is `epsilon P`; otherwise it is solved numerically.
pub fn first_stage(
    ctx: &FluctuationContext,
    template: &MarketParams,
    principal: f64,
    rule: TaxThresholdRule,
) -> Result<(MarketParams, f64)> {
    let mkt = template.with_principal(principal).with_tax_threshold(rule.threshold(template, principal));
    let barrier = match rule {
        TaxThresholdRule::Zero => epsilon(ctx, &mkt)?.map_or(0.0, |eps| eps * principal),
        TaxThresholdRule::ProportionalToP => solve_barrier(ctx, &mkt)?.barrier,
    };
    Ok((mkt, barrier))
}

pub fn leverage_point(
    ctx: &FluctuationContext,
    template: &MarketParams,
    v: f64,
    principal: f64,
    rule: TaxThresholdRule,
) -> Result<LeveragePoint> {
    let (mkt, barrier) = first_stage(ctx, template, principal, rule)?;
    Ok(LeveragePoint { principal, barrier, valuation: value(ctx, &mkt, v, barrier)? })
}

/// Evaluates a grid of debt levels in parallel; output follows input order.
pub fn leverage_curve(
    ctx: &FluctuationContext,
    template: &MarketParams,
    v: f64,
    rule: TaxThresholdRule,
    principals: &[f64],
) -> Result<Vec<LeveragePoint>> {
    principals.par_iter().map(|&p| leverage_point(ctx, template, v, p, rule)).collect()
}

const SCAN_POINTS: usize = 101;

/// Maximises the firm value `V(V; V_B*(P), P)` over the debt level `P`.
///
/// Under the zero-threshold rule the search runs on `[0, V / epsilon]`, where
/// the firm value is concave; if `epsilon` does not exist the firm value is
/// linear and the maximum sits at the upper bound `P = V`. Under the
/// proportional rule the search runs on `[0, V]`, and a coarse scan picks the
/// golden-section bracket.
pub fn two_stage(
    ctx: &FluctuationContext,
    template: &MarketParams,
    v: f64,
    rule: TaxThresholdRule,
) -> Result<TwoStageSolution> {
    template.validate()?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Domain(format!("asset value must be > 0, got {v}")));
    }
    let firm_at = |p: f64| leverage_point(ctx, template, v, p, rule).map(|pt| pt.valuation.firm);
    let (lo, hi, upper, unimodal) = match rule {
        TaxThresholdRule::Zero => {
            let probe = template.with_principal(1.0).with_tax_threshold(0.0);
            match epsilon(ctx, &probe)? {
                Some(eps) => (0.0, v / eps, v / eps, true),
                None => {
                    let point = leverage_point(ctx, template, v, v, rule)?;
                    return Ok(solution(point, v, true, v));
                }
            }
        }
        TaxThresholdRule::ProportionalToP => {
            let grid: Vec<f64> = (0..SCAN_POINTS).map(|i| v * i as f64 / (SCAN_POINTS - 1) as f64).collect();
            let curve = leverage_curve(ctx, template, v, rule, &grid)?;
            let firms: Vec<f64> = curve.iter().map(|pt| pt.valuation.firm).collect();
            let peaks = local_maxima(&firms);
            let best =
                (0..firms.len()).max_by(|&a, &b| firms[a].total_cmp(&firms[b])).expect("non-empty grid");
            let lo = grid[best.saturating_sub(1)];
            let hi = grid[(best + 1).min(grid.len() - 1)];
            (lo, hi, v, peaks <= 1)
        }
    };
    let p_star = golden_section_max(&firm_at, lo, hi, 1e-10 * upper.max(1.0))?;
    let point = leverage_point(ctx, template, v, p_star, rule)?;
    Ok(solution(point, v, unimodal, upper))
}

fn solution(point: LeveragePoint, v: f64, unimodal: bool, upper: f64) -> TwoStageSolution {
    TwoStageSolution {
        principal: point.principal,
        barrier: point.barrier,
        firm_value: point.valuation.firm,
        debt_value: point.valuation.debt,
        leverage: point.principal / v,
        unimodal,
        upper_principal: upper,
    }
}

/// Number of strict local maxima of a sampled curve, endpoints included.
fn local_maxima(values: &[f64]) -> usize {
    let n = values.len();
    (0..n)
        .filter(|&i| {
            let left = i == 0 || values[i] > values[i - 1];
            let right = i + 1 == n || values[i] > values[i + 1];
            left && right
        })
        .count()
}

/// Golden-section search for the maximiser of a unimodal function on `[a, b]`.
pub fn golden_section_max<F>(f: &F, mut a: f64, mut b: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    // Compare the interior estimate with the ends so that a monotone
    // function returns its boundary maximiser.
    let mid = 0.5 * (a + b);
    let candidates = [(a, f(a)?), (mid, f(mid)?), (b, f(b)?)];
    Ok(candidates.iter().copied().max_by(|x, y| x.1.total_cmp(&y.1)).expect("three candidates").0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_model::LevyModel;
    use crate::valuation::{value_continuous, value_periodic};
    use approx::assert_relative_eq;

    fn ctx() -> FluctuationContext {
        FluctuationContext::new(LevyModel::reference())
    }

    #[test]
    fn f_limits() {
        let c = ctx();
        let mkt = MarketParams::reference();
        let cc = c_continuous(&c, &mkt).unwrap();
        let k = k_continuous(&c, &mkt).unwrap();
        let big = 1e6;
        let tail = f_continuous(&c, &mkt, big).unwrap() - big;
        assert!((tail + k * mkt.principal / cc).abs() < 1e-8);
        let prm = c.phi(mkt.r + mkt.m).unwrap();
        let low = -(mkt.rho + mkt.m) / (mkt.r + mkt.m) * prm * mkt.principal / cc;
        let tiny = f_continuous(&c, &mkt, 1e-40).unwrap();
        assert!((tiny - low).abs() < 1e-6, "{tiny} vs {low}");
    }

    #[test]
    fn f_is_increasing() {
        let c = ctx();
        let mkt = MarketParams::reference();
        let mut prev = f64::NEG_INFINITY;
        for i in 1..400 {
            let v = 0.25 * i as f64;
            let cur = f_continuous(&c, &mkt, v).unwrap();
            assert!(cur > prev, "v {v}");
            prev = cur;
        }
    }

    #[test]
    fn continuous_barrier_reference() {
        let c = ctx();
        let mkt = MarketParams::reference();
        let sol = solve_barrier_continuous(&c, &mkt).unwrap();
        assert_eq!(sol.regime, Regime::SmoothFitRoot);
        assert!(sol.barrier > 0.0);
        assert!(sol.residual < 1e-10, "{}", sol.residual);
        assert!(sol.note.is_none());
        assert!(f_continuous(&c, &mkt, 0.99 * sol.barrier).unwrap() < 0.0);
        assert!(f_continuous(&c, &mkt, 1.01 * sol.barrier).unwrap() > 0.0);
    }

    #[test]
    fn zero_threshold_barrier_is_linear_in_debt() {
        let c = ctx();
        let mkt = MarketParams::reference().with_tax_threshold(0.0);
        let eps = epsilon(&c, &mkt).unwrap().expect("K > 0 at the reference market");
        for p in [10.0, 50.0, 90.0] {
            let sol = solve_barrier_continuous(&c, &mkt.with_principal(p)).unwrap();
            assert_relative_eq!(sol.barrier, eps * p, max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_barrier_when_k_nonpositive() {
        let c = ctx();
        let mkt = MarketParams { kappa: 1.7, ..MarketParams::reference().with_tax_threshold(0.0) };
        assert!(k_continuous(&c, &mkt).unwrap() <= 0.0);
        let sol = solve_barrier_continuous(&c, &mkt).unwrap();
        assert_eq!(sol.regime, Regime::ZeroBarrier);
        assert_eq!(sol.barrier, 0.0);
        let per = mkt.periodic(4.0);
        assert!(k_periodic(&c, &per, 4.0).unwrap() <= 0.0);
        assert_eq!(solve_barrier_periodic(&c, &per).unwrap().regime, Regime::ZeroBarrier);
    }

    #[test]
    fn periodic_barrier_reference() {
        let c = ctx();
        let mkt = MarketParams::reference().periodic(4.0);
        let sol = solve_barrier_periodic(&c, &mkt).unwrap();
        assert_eq!(sol.regime, Regime::ContinuousFitRoot);
        assert!(equity_at_barrier(&c, &mkt, sol.barrier).unwrap().abs() < 1e-10);
        let cont = solve_barrier_continuous(&c, &mkt.continuous()).unwrap();
        // Infrequent observation makes shareholders give up earlier.
        assert!(sol.barrier > cont.barrier);
    }

    #[test]
    fn smooth_fit_slope_vanishes() {
        let c = ctx();
        let mkt = MarketParams::reference();
        let vb = solve_barrier_continuous(&c, &mkt).unwrap().barrier;
        assert!(equity_slope_at_barrier(&c, &mkt, vb).unwrap().abs() < 1e-10);
        let h = 1e-5 * vb;
        let slope = value_continuous(&c, &mkt, vb + h, vb).unwrap().equity / h;
        assert!(slope.abs() < 1e-4, "{slope}");
    }

    #[test]
    fn periodic_sensitivity_kernel_matches_finite_difference() {
        let c = ctx();
        let mkt = MarketParams::reference().periodic(4.0);
        let (r, m) = (mkt.r, mkt.m);
        let (prm, plrm) = (c.phi(r + m).unwrap(), c.phi(4.0 + r + m).unwrap());
        for (v, vb) in [(100.0, 40.0), (80.0, 60.0)] {
            let h = 1e-5;
            let fd = (value_periodic(&c, &mkt, v, vb + h).unwrap().equity
                - value_periodic(&c, &mkt, v, vb - h).unwrap().equity)
                / (2.0 * h);
            let l = periodic_sensitivity_kernel(&c, &mkt, v, vb).unwrap();
            let exact = -(plrm - prm) / vb * (vb / v).powf(prm) * l;
            assert!((fd - exact).abs() < 1e-6, "{fd} vs {exact}");
        }
    }

    #[test]
    fn golden_section_on_quadratic_and_line() {
        let f = |x: f64| Ok(-(x - 0.3) * (x - 0.3));
        assert!((golden_section_max(&f, 0.0, 1.0, 1e-12).unwrap() - 0.3).abs() < 1e-6);
        let g = |x: f64| Ok(2.0 * x);
        assert_eq!(golden_section_max(&g, 0.0, 1.0, 1e-12).unwrap(), 1.0);
    }

    #[test]
    fn local_maxima_counts() {
        assert_eq!(local_maxima(&[0.0, 1.0, 0.5]), 1);
        assert_eq!(local_maxima(&[0.0, 1.0, 0.5, 2.0]), 2);
        assert_eq!(local_maxima(&[3.0, 2.0, 1.0]), 1);
    }

    #[test]
    fn two_stage_zero_rule_is_interior() {
        let c = ctx();
        let mkt = MarketParams::reference();
        let sol = two_stage(&c, &mkt, 100.0, TaxThresholdRule::Zero).unwrap();
        let eps = epsilon(&c, &mkt.with_tax_threshold(0.0)).unwrap().unwrap();
        assert!(sol.principal > 0.0 && sol.principal < sol.upper_principal);
        assert_relative_eq!(sol.barrier, eps * sol.principal, max_relative = 1e-12);
        for p in [0.5 * sol.principal, 1.2 * sol.principal] {
            let other = leverage_point(&c, &mkt, 100.0, p, TaxThresholdRule::Zero).unwrap();
            assert!(other.valuation.firm <= sol.firm_value);
        }
    }

    #[test]
    fn two_stage_linear_when_k_nonpositive() {
        let c = ctx();
        let mkt = MarketParams { kappa: 1.7, ..MarketParams::reference() };
        let sol = two_stage(&c, &mkt, 100.0, TaxThresholdRule::Zero).unwrap();
        assert_eq!(sol.barrier, 0.0);
        assert_eq!(sol.principal, 100.0);
        assert_relative_eq!(
            sol.firm_value,
            100.0 + 100.0 * mkt.kappa * mkt.rho / mkt.r,
            max_relative = 1e-14
        );
    }
}
