use std::path::Path;

use levy_toft::optimizer::{solve_barrier, two_stage};
use levy_toft::simulate::{mc_continuous_passage, mc_periodic_valuation, McEstimate, SimConfig};
use levy_toft::valuation::value;
use levy_toft::{FluctuationContext, MarketParams, Observation};
use rayon::prelude::*;

use crate::config::{RunConfig, SweepSpec, SweepVariable};
use crate::error::CliError;
use crate::output::{sig12, Table};

fn context(cfg: &RunConfig) -> Result<(FluctuationContext, MarketParams), CliError> {
    cfg.validate()?;
    Ok((FluctuationContext::new(cfg.model()?), cfg.market()?))
}

fn optimal_barrier(ctx: &FluctuationContext, mkt: &MarketParams) -> Result<f64, CliError> {
    Ok(solve_barrier(ctx, mkt)?.barrier)
}

/// Key-value report of the optimal barrier.
pub fn barrier(cfg: &RunConfig) -> Result<String, CliError> {
    let (ctx, mkt) = context(cfg)?;
    let sol = solve_barrier(&ctx, &mkt)?;
    let mut lines = vec![
        format!("barrier={}", sig12(sol.barrier)),
        format!("regime={}", sol.regime.as_str()),
        format!("residual={}", sig12(sol.residual)),
        format!("iterations={}", sol.iterations),
        format!("tax_threshold={}", sig12(mkt.tax_threshold)),
        format!("drift={}", sig12(ctx.model().drift())),
        format!("phi_r={}", sig12(ctx.phi(mkt.r)?)),
        format!("phi_r_plus_m={}", sig12(ctx.phi(mkt.r + mkt.m)?)),
    ];
    if let Observation::Periodic { lambda } = mkt.observation {
        lines.push(format!("lambda={}", sig12(lambda)));
        lines.push(format!("phi_lambda_plus_r={}", sig12(ctx.phi(lambda + mkt.r)?)));
        lines.push(format!("phi_lambda_plus_r_plus_m={}", sig12(ctx.phi(lambda + mkt.r + mkt.m)?)));
    }
    if let Some(note) = sol.note {
        lines.push(format!("note={note}"));
    }
    Ok(lines.join("\n") + "\n")
}

const VALUE_HEADER: [&str; 5] = ["asset_value", "barrier", "firm", "debt", "equity"];

pub fn value_row(cfg: &RunConfig, v: f64, vb: Option<f64>, out: Option<&Path>) -> Result<(), CliError> {
    let (ctx, mkt) = context(cfg)?;
    let vb = match vb {
        Some(b) => b,
        None => optimal_barrier(&ctx, &mkt)?,
    };
    let val = value(&ctx, &mkt, v, vb)?;
    let mut table = Table::new(&VALUE_HEADER);
    table.push_numbers(&[v, vb, val.firm, val.debt, val.equity]);
    table.emit(out)
}

/// One row of a sweep: grid value, barrier and the three values at the
/// configured asset value (or at the grid value for a `V` sweep).
fn sweep_point(
    cfg: &RunConfig,
    base: &MarketParams,
    variable: SweepVariable,
    g: f64,
) -> Result<[f64; 5], CliError> {
    let v = cfg.output.asset_value;
    let base_model = cfg.model()?;
    let (ctx, mkt, v) = match variable {
        SweepVariable::Lambda => (FluctuationContext::new(base_model), base.periodic(g), v),
        SweepVariable::JumpRate => (FluctuationContext::new(base_model.with_jump_rate(g)?), *base, v),
        SweepVariable::Principal => (FluctuationContext::new(base_model), cfg.market_with_principal(g)?, v),
        SweepVariable::Barrier | SweepVariable::AssetValue => (FluctuationContext::new(base_model), *base, v),
    };
    mkt.validate()?;
    let opt = optimal_barrier(&ctx, &mkt)?;
    let (vb, v) = match variable {
        SweepVariable::Barrier => (opt * g.exp(), v),
        SweepVariable::AssetValue => (opt, g),
        _ => (opt, v),
    };
    let val = value(&ctx, &mkt, v, vb)?;
    Ok([g, vb, val.firm, val.debt, val.equity])
}

pub fn sweep(cfg: &RunConfig, spec: &SweepSpec, out: Option<&Path>) -> Result<(), CliError> {
    let (_, base) = context(cfg)?;
    if spec.grid.is_empty() || spec.grid.iter().any(|g| !g.is_finite()) {
        return Err(CliError::Config("sweep grid must be a non-empty list of finite numbers".into()));
    }
    let rows: Vec<[f64; 5]> =
        spec.grid.par_iter().map(|&g| sweep_point(cfg, &base, spec.variable, g)).collect::<Result<_, _>>()?;
    let mut table = Table::new(&[spec.variable.column(), "barrier", "firm", "debt", "equity"]);
    for row in rows {
        table.push_numbers(&row);
    }
    table.emit(out)
}

pub fn two_stage_row(cfg: &RunConfig, v: f64, out: Option<&Path>) -> Result<(), CliError> {
    let (ctx, mkt) = context(cfg)?;
    let rule = cfg.threshold_rule()?.ok_or_else(|| {
        CliError::Config("two-stage needs tax_threshold = 0 or \"P*rho/delta\" so that V_T follows P".into())
    })?;
    let sol = two_stage(&ctx, &mkt, v, rule)?;
    if !sol.unimodal {
        eprintln!("warning: the firm value has several local maxima in the debt level");
    }
    let mut table =
        Table::new(&["asset_value", "principal", "leverage", "barrier", "firm", "debt", "unimodal"]);
    let mut row: Vec<String> = [v, sol.principal, sol.leverage, sol.barrier, sol.firm_value, sol.debt_value]
        .iter()
        .map(|&x| sig12(x))
        .collect();
    row.push(sol.unimodal.to_string());
    table.push(row);
    table.emit(out)
}

fn estimate_row(table: &mut Table, name: &str, est: &McEstimate, closed: f64) {
    if let Some(w) = &est.warning {
        eprintln!("warning: {name}: {w}");
    }
    let mut row = vec![name.to_string()];
    row.extend([est.mean, est.std_error, closed, est.z_score(closed)].iter().map(|&x| sig12(x)));
    row.push(est.paths_used.to_string());
    table.push(row);
}

pub fn simulate(
    cfg: &RunConfig,
    v: f64,
    vb: Option<f64>,
    sim: &SimConfig,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let (ctx, mkt) = context(cfg)?;
    sim.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let vb = match vb {
        Some(b) => b,
        None => optimal_barrier(&ctx, &mkt)?,
    };
    let mut table = Table::new(&["quantity", "mc_mean", "std_error", "closed_form", "z_score", "paths"]);
    match mkt.observation {
        Observation::Periodic { .. } => {
            let closed = value(&ctx, &mkt, v, vb)?;
            let mc = mc_periodic_valuation(ctx.model(), &mkt, v, vb, sim)?;
            estimate_row(&mut table, "firm", &mc.firm, closed.firm);
            estimate_row(&mut table, "debt", &mc.debt, closed.debt);
            estimate_row(&mut table, "equity", &mc.equity, closed.equity);
        }
        Observation::Continuous => {
            if !(vb > 0.0 && v >= vb) {
                return Err(CliError::Solver(levy_toft::Error::Domain(format!(
                    "continuous simulation needs V >= V_B > 0, got V = {v}, V_B = {vb}"
                ))));
            }
            let x = (v / vb).ln();
            let a = if mkt.tax_threshold > 0.0 { (mkt.tax_threshold / vb).ln() } else { f64::NEG_INFINITY };
            let est = mc_continuous_passage(ctx.model(), x, mkt.r, a, sim)?;
            let laplace = 1.0 - ctx.gamma(x, mkt.r)?;
            let occupation = ctx.g(x, mkt.r, a)?;
            estimate_row(&mut table, "passage_laplace", &est.laplace, laplace);
            estimate_row(&mut table, "tax_occupation", &est.occupation, occupation);
        }
    }
    table.emit(out)
}
