//! Firm, debt and equity values for a given bankruptcy barrier.
//!
//! Asset values are in currency units at the API; internally everything is
//! expressed through `x = log(V / V_B)`.

use crate::error::{Error, Result};
use crate::fluctuation::FluctuationContext;

/// How the asset value is monitored for bankruptcy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observation {
    Continuous,
    /// Observation at the arrival times of a Poisson process with this rate.
    Periodic {
        lambda: f64,
    },
}

impl Observation {
    pub fn lambda(&self) -> Option<f64> {
        match self {
            Observation::Continuous => None,
            Observation::Periodic { lambda } => Some(*lambda),
        }
    }
}

/// Market and debt parameters. Rates are raw decimals (`0.075`, not `7.5`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams {
    /// Risk-free rate.
    pub r: f64,
    /// Total payout rate to investors.
    pub delta: f64,
    /// Debt retirement rate; average maturity is `1/m`.
    pub m: f64,
    /// Coupon rate.
    pub rho: f64,
    /// Corporate tax rate.
    pub kappa: f64,
    /// Fraction of assets lost at bankruptcy.
    pub eta: f64,
    /// Total face value of debt `P`.
    pub principal: f64,
    /// Asset level `V_T` at or above which tax rebates accrue.
    pub tax_threshold: f64,
    pub observation: Observation,
}

impl MarketParams {
    /// The reference market: `r = 7.5%`, `delta = 7%`, `kappa = 35%`,
    /// `eta = 50%`, `rho = 8.162%`, `m = 0.2`, `P = 50`, `V_T = P rho / delta`,
    /// continuous observation.
    pub fn reference() -> Self {
        let (principal, rho, delta) = (50.0, 0.08162, 0.07);
        Self {
            r: 0.075,
            delta,
            m: 0.2,
            rho,
            kappa: 0.35,
            eta: 0.5,
            principal,
            tax_threshold: principal * rho / delta,
            observation: Observation::Continuous,
        }
    }

    pub fn with_observation(mut self, observation: Observation) -> Self {
        self.observation = observation;
        self
    }

    pub fn periodic(self, lambda: f64) -> Self {
        self.with_observation(Observation::Periodic { lambda })
    }

    pub fn continuous(self) -> Self {
        self.with_observation(Observation::Continuous)
    }

    pub fn with_principal(mut self, principal: f64) -> Self {
        self.principal = principal;
        self
    }

    pub fn with_tax_threshold(mut self, tax_threshold: f64) -> Self {
        self.tax_threshold = tax_threshold;
        self
    }

    /// `V_T = P rho / delta`, the rule used by the reference market.
    pub fn proportional_tax_threshold(&self) -> f64 {
        self.principal * self.rho / self.delta
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidMarket(msg));
        if !(self.r > 0.0 && self.r.is_finite()) {
            return bad(format!("r must be > 0, got {}", self.r));
        }
        if !(self.delta >= 0.0 && self.delta < self.r) {
            return bad(format!("delta must lie in [0, r), got {}", self.delta));
        }
        if !(self.m > 0.0 && self.m.is_finite()) {
            return bad(format!("m must be > 0, got {}", self.m));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return bad(format!("rho must be >= 0, got {}", self.rho));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa must be >= 0, got {}", self.kappa));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return bad(format!("eta must lie in [0, 1], got {}", self.eta));
        }
        if !(self.principal >= 0.0 && self.principal.is_finite()) {
            return bad(format!("principal must be >= 0, got {}", self.principal));
        }
        if !(self.tax_threshold >= 0.0 && self.tax_threshold.is_finite()) {
            return bad(format!("tax threshold must be >= 0, got {}", self.tax_threshold));
        }
        if let Observation::Periodic { lambda } = self.observation {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return bad(format!("lambda must be > 0, got {lambda}"));
            }
        }
        Ok(())
    }

    fn lambda_or_err(&self) -> Result<f64> {
        self.observation
            .lambda()
            .ok_or_else(|| Error::InvalidMarket("periodic valuation needs an observation rate".into()))
    }
}

/// Firm, debt and equity value at one asset level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Valuation {
    pub firm: f64,
    pub debt: f64,
    pub equity: f64,
}

impl Valuation {
    fn from_parts(firm: f64, debt: f64) -> Self {
        Self { firm, debt, equity: firm - debt }
    }

    fn liquidated(eta: f64, v: f64) -> Self {
        let left = (1.0 - eta) * v;
        Self { firm: left, debt: left, equity: 0.0 }
    }
}

/// `C = 1 + eta Phi(r) + (1 - eta) Phi(r + m)`.
pub fn c_continuous(ctx: &FluctuationContext, mkt: &MarketParams) -> Result<f64> {
    let (pr, prm) = (ctx.phi(mkt.r)?, ctx.phi(mkt.r + mkt.m)?);
    Ok(1.0 + mkt.eta * pr + (1.0 - mkt.eta) * prm)
}

/// `K = (rho + m)/(r + m) Phi(r + m) - kappa rho / r Phi(r)`.
pub fn k_continuous(ctx: &FluctuationContext, mkt: &MarketParams) -> Result<f64> {
    let (pr, prm) = (ctx.phi(mkt.r)?, ctx.phi(mkt.r + mkt.m)?);
    Ok((mkt.rho + mkt.m) / (mkt.r + mkt.m) * prm - mkt.kappa * mkt.rho / mkt.r * pr)
}

/// `C_lambda = eta (1 + Phi(r))/(1 + Phi(lambda + r))
///           + (1 - eta)(1 + Phi(r + m))/(1 + Phi(lambda + r + m))`.
pub fn c_periodic(ctx: &FluctuationContext, mkt: &MarketParams, lambda: f64) -> Result<f64> {
    let (r, m) = (mkt.r, mkt.m);
    let lhs = (1.0 + ctx.phi(r)?) / (1.0 + ctx.phi(lambda + r)?);
    let rhs = (1.0 + ctx.phi(r + m)?) / (1.0 + ctx.phi(lambda + r + m)?);
    Ok(mkt.eta * lhs + (1.0 - mkt.eta) * rhs)
}

/// `K_lambda = (rho + m)/(r + m) Phi(r + m)/Phi(lambda + r + m)
///           - kappa rho / r Phi(r)/Phi(lambda + r)`.
pub fn k_periodic(ctx: &FluctuationContext, mkt: &MarketParams, lambda: f64) -> Result<f64> {
    let (r, m) = (mkt.r, mkt.m);
    Ok((mkt.rho + mkt.m) / (r + m) * ctx.phi(r + m)? / ctx.phi(lambda + r + m)?
        - mkt.kappa * mkt.rho / r * ctx.phi(r)? / ctx.phi(lambda + r)?)
}

/// Values with the barrier at zero (bankruptcy never happens); needs `V_T = 0`.
fn value_zero_barrier(mkt: &MarketParams, v: f64) -> Result<Valuation> {
    if mkt.tax_threshold > 0.0 {
        return Err(Error::Domain("a zero barrier is only defined for a zero tax threshold".into()));
    }
    let debt = (mkt.rho + mkt.m) * mkt.principal / (mkt.r + mkt.m);
    let firm = v + mkt.kappa * mkt.rho * mkt.principal / mkt.r;
    Ok(Valuation::from_parts(firm, debt))
}

fn check_levels(v: f64, vb: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Domain(format!("asset value must be > 0, got {v}")));
    }
    if !(vb >= 0.0 && vb.is_finite()) {
        return Err(Error::Domain(format!("barrier must be >= 0, got {vb}")));
    }
    Ok(())
}

/// Values under continuous observation with barrier `vb`.
pub fn value_continuous(ctx: &FluctuationContext, mkt: &MarketParams, v: f64, vb: f64) -> Result<Valuation> {
    mkt.validate()?;
    check_levels(v, vb)?;
    if vb == 0.0 {
        return value_zero_barrier(mkt, v);
    }
    if v <= vb {
        return Ok(Valuation::liquidated(mkt.eta, v));
    }
    let (r, m, p) = (mkt.r, mkt.m, mkt.principal);
    let x = (v / vb).ln();
    let a = if mkt.tax_threshold > 0.0 { (mkt.tax_threshold / vb).ln() } else { f64::NEG_INFINITY };
    let survive_r = (-ctx.phi(r)? * x).exp();
    let survive_rm = (-ctx.phi(r + m)? * x).exp();
    let firm = v + mkt.kappa * mkt.rho * p * ctx.g(x, r, a)? - mkt.eta * vb * survive_r;
    let debt = (mkt.rho + m) * p / (r + m) * (1.0 - survive_rm) + (1.0 - mkt.eta) * vb * survive_rm;
    Ok(Valuation::from_parts(firm, debt))
}

/// Values under Poisson observation with barrier `vb`. Below the barrier the
/// firm is treated as liquidated, as in the continuous case.
pub fn value_periodic(ctx: &FluctuationContext, mkt: &MarketParams, v: f64, vb: f64) -> Result<Valuation> {
    mkt.validate()?;
    check_levels(v, vb)?;
    let lambda = mkt.lambda_or_err()?;
    if vb == 0.0 {
        return value_zero_barrier(mkt, v);
    }
    if v < vb {
        return Ok(Valuation::liquidated(mkt.eta, v));
    }
    let (r, m, p) = (mkt.r, mkt.m, mkt.principal);
    let x = (v / vb).ln();
    let occupation = ctx.lambda_occupation(v.ln(), vb.ln(), r, lambda, mkt.tax_threshold)?;
    let firm =
        v + p * mkt.kappa * mkt.rho * occupation - mkt.eta * vb * ctx.j_transform(x, r, 1.0, lambda)?;
    let debt = (mkt.rho + m) * p / (r + m) * (1.0 - ctx.j_transform(x, r + m, 0.0, lambda)?)
        + (1.0 - mkt.eta) * vb * ctx.j_transform(x, r + m, 1.0, lambda)?;
    Ok(Valuation::from_parts(firm, debt))
}

/// Dispatches on `mkt.observation`.
pub fn value(ctx: &FluctuationContext, mkt: &MarketParams, v: f64, vb: f64) -> Result<Valuation> {
    match mkt.observation {
        Observation::Continuous => value_continuous(ctx, mkt, v, vb),
        Observation::Periodic { .. } => value_periodic(ctx, mkt, v, vb),
    }
}

/// Equity at `V = V_B` under Poisson observation:
///
/// `V_B C_lambda + P kappa rho Lambda(log V_B, log V_B)
///  - (rho + m) P/(r + m) Phi(r + m)/Phi(lambda + r + m)`.
pub fn equity_at_barrier(ctx: &FluctuationContext, mkt: &MarketParams, vb: f64) -> Result<f64> {
    mkt.validate()?;
    let lambda = mkt.lambda_or_err()?;
    if !(vb > 0.0 && vb.is_finite()) {
        return Err(Error::Domain(format!("barrier must be > 0, got {vb}")));
    }
    let (r, m, p) = (mkt.r, mkt.m, mkt.principal);
    let diag = ctx.lambda_diag(vb.ln(), r, lambda, mkt.tax_threshold)?;
    Ok(vb * c_periodic(ctx, mkt, lambda)? + p * mkt.kappa * mkt.rho * diag
        - (mkt.rho + m) * p / (r + m) * ctx.phi(r + m)? / ctx.phi(lambda + r + m)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_model::LevyModel;
    use approx::assert_relative_eq;

    fn ctx() -> FluctuationContext {
        FluctuationContext::new(LevyModel::reference())
    }

    /// The equity expansion written out term by term.
    fn equity_expansion(ctx: &FluctuationContext, mkt: &MarketParams, v: f64, vb: f64) -> f64 {
        let x = (v / vb).ln();
        let a = (mkt.tax_threshold / vb).ln();
        let (r, m, p) = (mkt.r, mkt.m, mkt.principal);
        let (gr, grm) = (ctx.gamma(x, r).unwrap(), ctx.gamma(x, r + m).unwrap());
        v - vb
            + vb * (mkt.eta * gr + (1.0 - mkt.eta) * grm)
            + (mkt.kappa * mkt.rho * ctx.g(x, r, a).unwrap() - (mkt.rho + m) / (r + m) * grm) * p
    }

    #[test]
    fn reference_market_is_valid() {
        let mkt = MarketParams::reference();
        mkt.validate().unwrap();
        assert_relative_eq!(mkt.tax_threshold, 50.0 * 0.08162 / 0.07);
        assert!(mkt.periodic(0.0).validate().is_err());
        assert!(MarketParams { delta: 0.075, ..mkt }.validate().is_err());
        assert!(MarketParams { eta: 1.5, ..mkt }.validate().is_err());
    }

    #[test]
    fn continuous_equity_matches_expansion() {
        let c = ctx();
        let mkt = MarketParams::reference();
        for (v, vb) in [(100.0, 30.0), (100.0, 60.0), (45.0, 40.0), (200.0, 70.0)] {
            let val = value_continuous(&c, &mkt, v, vb).unwrap();
            let e = equity_expansion(&c, &mkt, v, vb);
            assert!((val.equity - e).abs() < 1e-9 * (1.0 + e.abs()), "v {v} vb {vb}");
            assert_eq!(val.equity, val.firm - val.debt);
        }
    }

    #[test]
    fn continuous_equity_vanishes_at_barrier() {
        let c = ctx();
        let mkt = MarketParams::reference();
        let vb = 35.0;
        let near = value_continuous(&c, &mkt, vb * (1.0 + 1e-10), vb).unwrap();
        assert!(near.equity.abs() < 1e-6);
        let below = value_continuous(&c, &mkt, 30.0, vb).unwrap();
        assert_eq!(below.equity, 0.0);
        assert_relative_eq!(below.firm, 15.0);
        assert_relative_eq!(below.debt, 15.0);
    }

    #[test]
    fn zero_barrier_needs_zero_threshold() {
        let c = ctx();
        let mkt = MarketParams::reference();
        assert!(value_continuous(&c, &mkt, 100.0, 0.0).is_err());
        let mkt = mkt.with_tax_threshold(0.0);
        let val = value_continuous(&c, &mkt, 100.0, 0.0).unwrap();
        let expected = 100.0 + (mkt.kappa * mkt.rho / mkt.r - (mkt.rho + mkt.m) / (mkt.r + mkt.m)) * 50.0;
        assert_relative_eq!(val.equity, expected, epsilon = 1e-12);
        let per = value_periodic(&c, &mkt.periodic(4.0), 100.0, 0.0).unwrap();
        assert_relative_eq!(per.equity, expected, epsilon = 1e-12);
    }

    #[test]
    fn periodic_at_barrier_matches_diagonal_form() {
        let c = ctx();
        for vt in [0.0, 58.3] {
            let mkt = MarketParams::reference().with_tax_threshold(vt).periodic(4.0);
            for vb in [5.0, 30.0, 58.3, 80.0] {
                let a = value_periodic(&c, &mkt, vb, vb).unwrap().equity;
                let b = equity_at_barrier(&c, &mkt, vb).unwrap();
                assert!((a - b).abs() < 1e-10, "vt {vt} vb {vb}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn equity_at_barrier_limits_and_monotonicity() {
        let c = ctx();
        let mkt = MarketParams::reference().periodic(4.0);
        let (r, m) = (mkt.r, mkt.m);
        let limit =
            -mkt.principal * (mkt.rho + m) / (r + m) * c.phi(r + m).unwrap() / c.phi(4.0 + r + m).unwrap();
        let tiny = equity_at_barrier(&c, &mkt, 1e-60).unwrap();
        assert!((tiny - limit).abs() < 1e-6, "{tiny} vs {limit}");
        let mkt0 = mkt.with_tax_threshold(0.0);
        let k = k_periodic(&c, &mkt0, 4.0).unwrap();
        let tiny0 = equity_at_barrier(&c, &mkt0, 1e-9).unwrap();
        assert!((tiny0 + mkt0.principal * k).abs() < 1e-6);
        let mut prev = f64::NEG_INFINITY;
        for i in 1..200 {
            let e = equity_at_barrier(&c, &mkt, 0.5 * i as f64).unwrap();
            assert!(e > prev);
            prev = e;
        }
    }

    #[test]
    fn periodic_values_approach_continuous() {
        let c = ctx();
        let base = MarketParams::reference();
        let (v, vb) = (100.0, 40.0);
        let cont = value_continuous(&c, &base, v, vb).unwrap();
        let mut prev_gap = f64::INFINITY;
        for lambda in [1e2, 1e3, 1e4] {
            let per = value_periodic(&c, &base.periodic(lambda), v, vb).unwrap();
            let gap = (per.equity - cont.equity).abs();
            assert!(gap < prev_gap, "lambda {lambda}");
            prev_gap = gap;
        }
        assert!(prev_gap / cont.equity.abs() < 1e-3, "{prev_gap}");
    }

    #[test]
    fn periodic_below_barrier_is_liquidated() {
        let c = ctx();
        let mkt = MarketParams::reference().periodic(4.0);
        let val = value_periodic(&c, &mkt, 20.0, 25.0).unwrap();
        assert_eq!(val.equity, 0.0);
        assert_relative_eq!(val.firm, 10.0);
        assert!(value_periodic(&c, &MarketParams::reference(), 20.0, 10.0).is_err());
    }

    #[test]
    fn periodic_accounting_identity() {
        let c = ctx();
        let mkt = MarketParams::reference().periodic(4.0);
        for v in [40.0, 60.0, 100.0, 300.0] {
            let val = value_periodic(&c, &mkt, v, 35.0).unwrap();
            assert_eq!(val.equity, val.firm - val.debt);
            assert!(val.debt > 0.0 && val.firm > val.debt);
        }
    }

    #[test]
    fn coefficients_are_positive() {
        let c = ctx();
        let mkt = MarketParams::reference();
        assert!(c_continuous(&c, &mkt).unwrap() > 1.0);
        for lambda in [1.0, 4.0, 365.0] {
            let cl = c_periodic(&c, &mkt, lambda).unwrap();
            assert!(cl > 0.0 && cl < 1.0);
        }
    }
}
