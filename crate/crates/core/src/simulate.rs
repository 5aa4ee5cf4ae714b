//! Monte Carlo estimators for the quantities that the closed forms claim.
//!
//! Every path owns a ChaCha8 stream: the generator is seeded with
//! `SimConfig::seed` and switched to stream `i` for path `i`, so a parallel
//! run reproduces a serial run bit for bit. Per-path results are collected in
//! path order and reduced with pairwise summation.
//!
//! Under Poisson observation the pair (time to next observation, increment)
//! is drawn exactly. The discounted occupation above a level between two
//! observations is approximated by midpoint quadrature on `bridge_points`
//! cells of the conditioned path (Brownian bridge plus the sampled jumps);
//! intervals that stay on one side of the level except with probability
//! below `1e-16` are integrated exactly.
//!
//! Under continuous observation the path is advanced in steps no longer than
//! `grid_step` near the barrier or near the occupation level, and in longer
//! exact steps elsewhere; the continuous part is interpolated linearly inside
//! a step, which biases the passage time upward by `O(sqrt(grid_step))`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::levy_model::{sample_poisson, LevyModel};
use crate::valuation::MarketParams;

/// Paths whose discount factor at the horizon exceeds this get a warning.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-4;
const SKIP_PROBABILITY: f64 = 1e-16;
/// Standard deviations of clearance that make a crossing inside a coarse
/// continuous-mode step negligible (`2 P(N > 8.5) < 1e-16`).
const CLEARANCE_SDS: f64 = 8.5;
const MAX_COARSE_STEP: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub paths: usize,
    pub seed: u64,
    /// Fine time step for continuous-observation paths.
    pub grid_step: f64,
    /// Paths are stopped at this time.
    pub horizon: f64,
    /// Midpoint cells per observation interval for the occupation integral.
    pub bridge_points: usize,
    pub tail_tolerance: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            paths: 100_000,
            seed: 0x5EED_1E7E,
            grid_step: 1e-4,
            horizon: 150.0,
            bridge_points: 32,
            tail_tolerance: DEFAULT_TAIL_TOLERANCE,
        }
    }
}

impl SimConfig {
    pub fn with_paths(mut self, paths: usize) -> Self {
        self.paths = paths;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths < 2 {
            return Err(Error::Domain("at least two paths are needed for a standard error".into()));
        }
        if !(self.grid_step > 0.0 && self.grid_step.is_finite()) {
            return Err(Error::Domain(format!("grid step must be > 0, got {}", self.grid_step)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Domain(format!("horizon must be > 0, got {}", self.horizon)));
        }
        if self.bridge_points == 0 {
            return Err(Error::Domain("bridge_points must be >= 1".into()));
        }
        Ok(())
    }

    /// Warning text when `exp(-q horizon)` exceeds the tail tolerance.
    fn tail_warning(&self, q: f64) -> Option<String> {
        let tail = (-q * self.horizon).exp();
        (tail > self.tail_tolerance).then(|| {
            format!(
                "discount factor at the horizon is {tail:.3e}, above the tolerance {:.1e}",
                self.tail_tolerance
            )
        })
    }

    fn rng_for_path(&self, path: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path as u64);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub paths_used: usize,
    pub warning: Option<String>,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        let mean = pairwise_sum(samples) / n as f64;
        let dev: Vec<f64> = samples.iter().map(|s| (s - mean) * (s - mean)).collect();
        let var = if n > 1 { pairwise_sum(&dev) / (n - 1) as f64 } else { 0.0 };
        Self { mean, std_error: (var / n as f64).sqrt(), paths_used: n, warning: None }
    }

    fn with_warning(mut self, warning: Option<String>) -> Self {
        self.warning = warning;
        self
    }

    /// `(mean - reference) / std_error`.
    pub fn z_score(&self, reference: f64) -> f64 {
        (self.mean - reference) / self.std_error
    }

    /// True when `reference` lies within `k` standard errors plus `slack`.
    pub fn agrees_with(&self, reference: f64, k: f64, slack: f64) -> bool {
        (self.mean - reference).abs() <= k * self.std_error + slack
    }
}

/// Pairwise summation; the result does not depend on thread scheduling.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn run_paths<T, F>(cfg: &SimConfig, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> T + Sync,
{
    (0..cfg.paths).into_par_iter().map(|i| f(&mut cfg.rng_for_path(i))).collect()
}

/// One exact draw of the time to the next observation and the increment of
/// `X` over it.
pub fn sample_periodic_increment<R: Rng + ?Sized>(model: &LevyModel, lambda: f64, rng: &mut R) -> (f64, f64) {
    let dt: f64 = Exp::new(lambda).expect("lambda > 0").sample(rng);
    let z: f64 = StandardNormal.sample(rng);
    let dx = model.drift() * dt + model.sigma() * dt.sqrt() * z + model.sample_jump_sum(dt, rng);
    (dt, dx)
}

/// One observation interval with the path details needed for occupation.
struct Interval {
    dt: f64,
    /// Brownian part at the end of the interval (already scaled by sigma).
    brownian: f64,
    /// Jump times within the interval (sorted) and sizes.
    jumps: Vec<(f64, f64)>,
}

impl Interval {
    fn sample<R: Rng + ?Sized>(model: &LevyModel, lambda: f64, rng: &mut R) -> Self {
        let dt: f64 = Exp::new(lambda).expect("lambda > 0").sample(rng);
        let z: f64 = StandardNormal.sample(rng);
        Self { dt, brownian: model.sigma() * dt.sqrt() * z, jumps: sample_jumps(model, dt, rng) }
    }

    fn jump_total(&self) -> f64 {
        self.jumps.iter().map(|j| j.1).sum()
    }

    fn increment(&self, drift: f64) -> f64 {
        drift * self.dt + self.brownian + self.jump_total()
    }
}

fn sample_jumps<R: Rng + ?Sized>(model: &LevyModel, dt: f64, rng: &mut R) -> Vec<(f64, f64)> {
    if !model.has_jumps() {
        return Vec::new();
    }
    let n = sample_poisson(model.jump_rate() * dt, rng);
    let mut jumps: Vec<(f64, f64)> =
        (0..n).map(|_| (rng.random::<f64>() * dt, model.jumps().sample(rng))).collect();
    jumps.sort_by(|a, b| a.0.total_cmp(&b.0));
    jumps
}

/// `int_a^b e^{-q s} ds`.
fn discount_integral(q: f64, a: f64, b: f64) -> f64 {
    if q == 0.0 {
        b - a
    } else {
        (-q * a).exp() * -(-q * (b - a)).exp_m1() / q
    }
}

/// Probability that a Brownian bridge from 0 to `end` with total variance
/// `var` rises above `level > max(0, end)`.
fn bridge_exceeds(level: f64, end: f64, var: f64) -> f64 {
    if level <= end.max(0.0) {
        return 1.0;
    }
    if var == 0.0 {
        return 0.0;
    }
    (-2.0 * level * (level - end) / var).exp()
}

/// Discounted time at or above `level` during one interval started at time
/// `t0` from `x0`.
#[allow(clippy::too_many_arguments)]
fn interval_occupation<R: Rng + ?Sized>(
    model: &LevyModel,
    iv: &Interval,
    x0: f64,
    t0: f64,
    level: f64,
    q: f64,
    cells: usize,
    rng: &mut R,
) -> f64 {
    let c = model.drift();
    let var = model.sigma().powi(2) * iv.dt;
    let low = x0 + (c * iv.dt).min(0.0);
    if low >= level && bridge_exceeds(low - level, -iv.brownian, var) < SKIP_PROBABILITY {
        return discount_integral(q, t0, t0 + iv.dt);
    }
    let high = x0 + (c * iv.dt).max(0.0) + iv.jump_total();
    if high < level && bridge_exceeds(level - high, iv.brownian, var) < SKIP_PROBABILITY {
        return 0.0;
    }
    let h = iv.dt / cells as f64;
    let sigma2 = model.sigma().powi(2);
    let (mut s_prev, mut w_prev) = (0.0, 0.0);
    let mut jump_idx = 0;
    let mut jump_sum = 0.0;
    let mut total = 0.0;
    for j in 0..cells {
        let s = (j as f64 + 0.5) * h;
        // Bridge from (s_prev, w_prev) to (dt, brownian), observed at s.
        let rest = iv.dt - s_prev;
        let frac = (s - s_prev) / rest;
        let mean = w_prev + frac * (iv.brownian - w_prev);
        let sd = (sigma2 * (s - s_prev) * (iv.dt - s) / rest).sqrt();
        let z: f64 = StandardNormal.sample(rng);
        let w = mean + sd * z;
        while jump_idx < iv.jumps.len() && iv.jumps[jump_idx].0 <= s {
            jump_sum += iv.jumps[jump_idx].1;
            jump_idx += 1;
        }
        if x0 + c * s + w + jump_sum >= level {
            let start = t0 + j as f64 * h;
            total += discount_integral(q, start, start + h);
        }
        s_prev = s;
        w_prev = w;
    }
    total
}

/// Result of one path observed at Poisson times.
struct PeriodicPath {
    /// Observed passage time and level, or `None` if the horizon came first.
    passage: Option<(f64, f64)>,
    occupation: f64,
}

/// Runs one path from `x0` until the first observation below `barrier` or
/// until the horizon. `occupation = Some((level, q))` also integrates
/// `e^{-q t} 1{X_t >= level}`.
fn periodic_path<R: Rng + ?Sized>(
    model: &LevyModel,
    lambda: f64,
    x0: f64,
    barrier: f64,
    occupation: Option<(f64, f64)>,
    cfg: &SimConfig,
    rng: &mut R,
) -> PeriodicPath {
    let (mut t, mut x, mut occ) = (0.0, x0, 0.0);
    while t < cfg.horizon {
        let iv = Interval::sample(model, lambda, rng);
        if let Some((level, q)) = occupation {
            occ += interval_occupation(model, &iv, x, t, level, q, cfg.bridge_points, rng);
        }
        t += iv.dt;
        x += iv.increment(model.drift());
        if x < barrier {
            return PeriodicPath { passage: Some((t, x)), occupation: occ };
        }
    }
    PeriodicPath { passage: None, occupation: occ }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("observation rate must be > 0, got {lambda}")))
    }
}

/// `E_x[e^{-q T + beta X_T}; T < inf]` for the first observation `T` below zero.
pub fn mc_observed_passage(
    model: &LevyModel,
    x: f64,
    q: f64,
    beta: f64,
    lambda: f64,
    cfg: &SimConfig,
) -> Result<McEstimate> {
    cfg.validate()?;
    check_lambda(lambda)?;
    let samples = run_paths(cfg, |rng| match periodic_path(model, lambda, x, 0.0, None, cfg, rng).passage {
        Some((t, level)) => (-q * t + beta * level).exp(),
        None => 0.0,
    });
    Ok(McEstimate::from_samples(&samples).with_warning(cfg.tail_warning(q)))
}

/// `E_x[int_0^{T_z} e^{-q t} 1{X_t >= log V_T} dt]` with `T_z` the first
/// observation below `z` (absolute log levels).
pub fn mc_observed_occupation(
    model: &LevyModel,
    x: f64,
    z: f64,
    q: f64,
    lambda: f64,
    vt: f64,
    cfg: &SimConfig,
) -> Result<McEstimate> {
    cfg.validate()?;
    check_lambda(lambda)?;
    let level = if vt > 0.0 { vt.ln() } else { f64::NEG_INFINITY };
    let samples =
        run_paths(cfg, |rng| periodic_path(model, lambda, x, z, Some((level, q)), cfg, rng).occupation);
    Ok(McEstimate::from_samples(&samples).with_warning(cfg.tail_warning(q)))
}

/// Monte Carlo firm, debt and equity values under Poisson observation.
#[derive(Debug, Clone, PartialEq)]
pub struct McValuation {
    pub firm: McEstimate,
    pub debt: McEstimate,
    pub equity: McEstimate,
}

/// Simulates the firm up to its first observed bankruptcy and prices the
/// coupon, principal, tax-rebate and bankruptcy cash flows.
pub fn mc_periodic_valuation(
    model: &LevyModel,
    mkt: &MarketParams,
    v: f64,
    vb: f64,
    cfg: &SimConfig,
) -> Result<McValuation> {
    mkt.validate()?;
    cfg.validate()?;
    let lambda = mkt
        .observation
        .lambda()
        .ok_or_else(|| Error::InvalidMarket("periodic simulation needs an observation rate".into()))?;
    if !(vb > 0.0 && v >= vb) {
        return Err(Error::Domain(format!("need V >= V_B > 0, got V = {v}, V_B = {vb}")));
    }
    let (r, m, p) = (mkt.r, mkt.m, mkt.principal);
    let level = if mkt.tax_threshold > 0.0 { mkt.tax_threshold.ln() } else { f64::NEG_INFINITY };
    let stream = (mkt.rho + m) * p;
    let outcomes = run_paths(cfg, |rng| {
        let path = periodic_path(model, lambda, v.ln(), vb.ln(), Some((level, r)), cfg, rng);
        let (end, recovered_r, recovered_rm) = match path.passage {
            Some((t, x)) => (t, (-r * t).exp() * x.exp(), (-(r + m) * t).exp() * x.exp()),
            None => (cfg.horizon, 0.0, 0.0),
        };
        let firm = v + mkt.kappa * mkt.rho * p * path.occupation - mkt.eta * recovered_r;
        let debt = stream * discount_integral(r + m, 0.0, end) + (1.0 - mkt.eta) * recovered_rm;
        (firm, debt)
    });
    let firm: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    let debt: Vec<f64> = outcomes.iter().map(|o| o.1).collect();
    let equity: Vec<f64> = outcomes.iter().map(|o| o.0 - o.1).collect();
    let warning = cfg.tail_warning(r);
    Ok(McValuation {
        firm: McEstimate::from_samples(&firm).with_warning(warning.clone()),
        debt: McEstimate::from_samples(&debt).with_warning(warning.clone()),
        equity: McEstimate::from_samples(&equity).with_warning(warning),
    })
}

pub fn mc_periodic_equity(
    model: &LevyModel,
    mkt: &MarketParams,
    v: f64,
    vb: f64,
    cfg: &SimConfig,
) -> Result<McEstimate> {
    Ok(mc_periodic_valuation(model, mkt, v, vb, cfg)?.equity)
}

/// Continuous-observation estimates from one set of paths.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousPassageEstimate {
    /// `E_x[e^{-q tau}; tau < inf]` for the first passage `tau` below zero.
    pub laplace: McEstimate,
    /// `E_x[int_0^tau e^{-q t} 1{X_t >= a} dt]`.
    pub occupation: McEstimate,
}

/// Tracks one continuous-mode path through linear pieces.
struct LinearWalker {
    t: f64,
    x: f64,
    level: f64,
    q: f64,
    occupation: f64,
}

impl LinearWalker {
    /// Moves linearly to `x1` over `dt`. Returns the crossing time if the
    /// piece ends below zero.
    fn piece(&mut self, dt: f64, x1: f64) -> Option<f64> {
        let (x0, t0) = (self.x, self.t);
        let end = if x1 < 0.0 { t0 + dt * x0 / (x0 - x1) } else { t0 + dt };
        let at = |t: f64| x0 + (x1 - x0) * (t - t0) / dt;
        // Portion of [t0, end] where the line is at or above the level.
        let (a0, a1) = (at(t0) >= self.level, at(end) >= self.level);
        let cross = |lvl: f64| t0 + dt * (lvl - x0) / (x1 - x0);
        let span = match (a0, a1) {
            (true, true) => Some((t0, end)),
            (false, false) => None,
            (true, false) => Some((t0, cross(self.level))),
            (false, true) => Some((cross(self.level), end)),
        };
        if let Some((s, e)) = span {
            self.occupation += discount_integral(self.q, s, e);
        }
        self.t = t0 + dt;
        self.x = x1;
        (x1 < 0.0).then_some(end)
    }
}

/// One continuous-mode path; returns the passage time (if before the
/// horizon) and the occupation.
fn continuous_path<R: Rng + ?Sized>(
    model: &LevyModel,
    x0: f64,
    level: f64,
    q: f64,
    cfg: &SimConfig,
    rng: &mut R,
) -> (Option<f64>, f64) {
    let (c, sigma) = (model.drift(), model.sigma());
    let mut w = LinearWalker { t: 0.0, x: x0, level, q, occupation: 0.0 };
    let clear = |dist: f64, h: f64| dist - c.abs() * h - CLEARANCE_SDS * sigma * h.sqrt() > 0.0;
    while w.t < cfg.horizon {
        // Longest step, doubling from the fine grid, with no barrier crossing.
        let mut h = cfg.grid_step;
        while 2.0 * h <= MAX_COARSE_STEP && clear(w.x, 2.0 * h) {
            h *= 2.0;
        }
        let jumps = sample_jumps(model, h, rng);
        let jump_total: f64 = jumps.iter().map(|j| j.1).sum();
        let above = clear(w.x - level, h);
        let below = level - (w.x + c.abs() * h + jump_total + CLEARANCE_SDS * sigma * h.sqrt()) > 0.0;
        if h > cfg.grid_step && (above || below) {
            let z: f64 = StandardNormal.sample(rng);
            let x1 = w.x + c * h + sigma * h.sqrt() * z + jump_total;
            if above {
                w.occupation += discount_integral(q, w.t, w.t + h);
            }
            w.t += h;
            w.x = x1;
            if x1 < 0.0 {
                return (Some(w.t), w.occupation);
            }
            continue;
        }
        // Fine sub-steps with jumps placed at their times.
        let n = (h / cfg.grid_step).round().max(1.0) as usize;
        let d = h / n as f64;
        let mut jump_idx = 0;
        for k in 0..n {
            let z: f64 = StandardNormal.sample(rng);
            let slope = c + sigma * z / d.sqrt();
            let (start, stop) = (k as f64 * d, (k + 1) as f64 * d);
            let mut s = start;
            while jump_idx < jumps.len() && jumps[jump_idx].0 < stop {
                let tj = jumps[jump_idx].0.max(s);
                let x1 = w.x + slope * (tj - s);
                if tj > s {
                    if let Some(tau) = w.piece(tj - s, x1) {
                        return (Some(tau), w.occupation);
                    }
                }
                w.x += jumps[jump_idx].1;
                s = tj;
                jump_idx += 1;
            }
            let x1 = w.x + slope * (stop - s);
            if stop > s {
                if let Some(tau) = w.piece(stop - s, x1) {
                    return (Some(tau), w.occupation);
                }
            }
        }
    }
    (None, w.occupation)
}

/// First passage below zero under continuous observation, from `x >= 0`.
/// `level` is the occupation threshold `a` (use `f64::NEG_INFINITY` for the
/// total discounted time).
pub fn mc_continuous_passage(
    model: &LevyModel,
    x: f64,
    q: f64,
    level: f64,
    cfg: &SimConfig,
) -> Result<ContinuousPassageEstimate> {
    cfg.validate()?;
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("start must be >= 0, got {x}")));
    }
    let outcomes = run_paths(cfg, |rng| continuous_path(model, x, level, q, cfg, rng));
    let laplace: Vec<f64> = outcomes.iter().map(|o| o.0.map_or(0.0, |t| (-q * t).exp())).collect();
    let occupation: Vec<f64> = outcomes.iter().map(|o| o.1).collect();
    let warning = cfg.tail_warning(q);
    Ok(ContinuousPassageEstimate {
        laplace: McEstimate::from_samples(&laplace).with_warning(warning.clone()),
        occupation: McEstimate::from_samples(&occupation).with_warning(warning),
    })
}

/// One path on a fine grid observed both continuously and at Poisson times,
/// both from `x > 0` against the barrier zero. Returns
/// `(continuous passage, observed passage)`; either is `None` past `horizon`.
pub fn coupled_passage<R: Rng + ?Sized>(
    model: &LevyModel,
    x: f64,
    lambda: f64,
    grid_step: f64,
    horizon: f64,
    rng: &mut R,
) -> (Option<f64>, Option<f64>) {
    let exp = Exp::new(lambda).expect("lambda > 0");
    let (c, sigma) = (model.drift(), model.sigma());
    let (mut t, mut y) = (0.0, x);
    let mut next_obs: f64 = exp.sample(rng);
    let mut continuous = None;
    while t < horizon {
        // Split the step at an observation so the path is read there exactly.
        let step = grid_step.min(next_obs - t);
        let z: f64 = StandardNormal.sample(rng);
        let y1 = y + c * step + sigma * step.sqrt() * z + model.sample_jump_sum(step, rng);
        t += step;
        if continuous.is_none() && y1 < 0.0 {
            continuous = Some(t);
        }
        y = y1;
        if t >= next_obs {
            if y < 0.0 {
                return (continuous, Some(t));
            }
            next_obs += exp.sample(rng);
        }
    }
    (continuous, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_model::PhaseType;

    fn small(paths: usize) -> SimConfig {
        SimConfig { paths, grid_step: 1e-3, horizon: 60.0, ..SimConfig::default() }
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 * 0.5).collect();
        assert_eq!(pairwise_sum(&xs), 249_750.0);
    }

    #[test]
    fn estimate_statistics() {
        let est = McEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(est.mean, 2.5);
        assert!((est.std_error - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert!(est.agrees_with(2.6, 1.0, 0.0));
    }

    #[test]
    fn increment_without_noise_is_drift() {
        let model = LevyModel::new(0.0, -0.3, 0.0, PhaseType::exponential(1.0).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let (dt, dx) = sample_periodic_increment(&model, 2.0, &mut rng);
            assert!((dx + 0.3 * dt).abs() < 1e-15);
        }
    }

    #[test]
    fn increment_moments() {
        let model = LevyModel::reference();
        let lambda = 4.0;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let draws: Vec<(f64, f64)> =
            (0..n).map(|_| sample_periodic_increment(&model, lambda, &mut rng)).collect();
        let dx: Vec<f64> = draws.iter().map(|d| d.1).collect();
        let est = McEstimate::from_samples(&dx);
        // Wald: E[dx] = E[dt] (c + rate E[U]).
        assert!(est.agrees_with(model.mean() / lambda, 3.0, 0.0), "{est:?}");
        let var_dt: Vec<f64> = draws.iter().map(|d| (d.0 - 1.0 / lambda).powi(2)).collect();
        let var_est = McEstimate::from_samples(&var_dt);
        assert!(var_est.agrees_with(1.0 / lambda.powi(2), 3.0, 0.0), "{var_est:?}");
    }

    #[test]
    fn runs_are_reproducible() {
        let model = LevyModel::reference();
        let cfg = small(500);
        let a = mc_observed_passage(&model, 0.3, 0.075, 1.0, 4.0, &cfg).unwrap();
        let b = mc_observed_passage(&model, 0.3, 0.075, 1.0, 4.0, &cfg).unwrap();
        assert_eq!(a, b);
        let c = mc_observed_passage(&model, 0.3, 0.075, 1.0, 4.0, &cfg.with_seed(99)).unwrap();
        assert_ne!(a.mean, c.mean);
    }

    #[test]
    fn pure_drift_passage_is_deterministic() {
        let model = LevyModel::new(0.0, -0.5, 0.0, PhaseType::exponential(1.0).unwrap()).unwrap();
        let cfg = small(4);
        let est = mc_continuous_passage(&model, 0.5, 0.1, f64::NEG_INFINITY, &cfg).unwrap();
        // tau = 1 exactly.
        assert!((est.laplace.mean - (-0.1f64).exp()).abs() < 1e-12);
        assert_eq!(est.laplace.std_error, 0.0);
        let occ = discount_integral(0.1, 0.0, 1.0);
        assert!((est.occupation.mean - occ).abs() < 1e-12);
    }

    #[test]
    fn pure_drift_occupation_above_level() {
        let model = LevyModel::new(0.0, -0.5, 0.0, PhaseType::exponential(1.0).unwrap()).unwrap();
        let est = mc_continuous_passage(&model, 1.0, 0.1, 0.4, &small(2)).unwrap();
        // X_t = 1 - t / 2 stays above 0.4 until t = 1.2.
        assert!((est.occupation.mean - discount_integral(0.1, 0.0, 1.2)).abs() < 1e-12);
    }

    #[test]
    fn bridge_probability_limits() {
        assert_eq!(bridge_exceeds(0.5, 1.0, 1.0), 1.0);
        assert_eq!(bridge_exceeds(0.5, 0.0, 0.0), 0.0);
        assert!((bridge_exceeds(1.0, 0.0, 1.0) - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn coupled_observed_passage_is_later() {
        let model = LevyModel::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut seen = 0;
        for _ in 0..200 {
            let (cont, obs) = coupled_passage(&model, 0.2, 4.0, 1e-3, 30.0, &mut rng);
            if let Some(t_obs) = obs {
                let t_cont = cont.expect("an observed passage implies a continuous one");
                assert!(t_cont <= t_obs);
                seen += 1;
            }
        }
        assert!(seen > 10);
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        assert!(SimConfig { paths: 1, ..SimConfig::default() }.validate().is_err());
        assert!(SimConfig { grid_step: 0.0, ..SimConfig::default() }.validate().is_err());
        assert!(SimConfig { horizon: 1.0, ..SimConfig::default() }.tail_warning(0.075).is_some());
        assert!(SimConfig::default().tail_warning(0.075).is_none());
    }
}
