//! Dispatch from a validated config to the engines, producing result tables.

use std::path::Path;

use lossmesh_core::insensitive::InsensitiveFixedPoint;
use lossmesh_core::mf_exp::{
    blocking_probability, hetero_equilibrium, integrate_exp_occupancy, integrate_hetero, FixedPointSolver,
    HeteroProfile, OccupancyDist,
};
use lossmesh_core::mf_phase::{occupancy_marginal, PhaseModel, PhaseParams, PhaseState};
use lossmesh_core::ode::{StepPlan, Trajectory};
use lossmesh_core::sim::{run, transient_trace, Servers, SimConfig, SimStats};
use lossmesh_core::{ServiceDistribution, ServiceKind};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Mode};
use crate::table::ResultTable;
use crate::CliError;

/// Horizon used to locate the phase-resolved equilibrium.
pub const PHASE_EQUILIBRIUM_HORIZON: f64 = 500.0;
/// Residual accepted for ODE equilibria.
pub const EQUILIBRIUM_RESIDUAL: f64 = 1e-10;

/// Runs the experiment, stamps every table with the config hash, seed and
/// version, and writes `<name>.csv` files into `out` when given.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Vec<ResultTable>, CliError> {
    cfg.validate()?;
    let mut tables = match cfg.mode {
        Mode::Fixedpoint => fixedpoint(cfg)?,
        Mode::OdeExp => ode_exp(cfg)?,
        Mode::OdePhase => ode_phase(cfg)?,
        Mode::OdeHetero => ode_hetero(cfg)?,
        Mode::Simulate => simulate(cfg)?,
        Mode::Insensitivity => insensitivity(cfg)?,
        Mode::Transient => transient(cfg)?,
    };
    let hash = cfg.hash();
    for t in &mut tables {
        let mut meta = vec![
            ("table".to_string(), t.name.clone()),
            ("mode".to_string(), cfg.mode.to_string()),
            ("config_hash".to_string(), hash.clone()),
            ("seed".to_string(), cfg.run.seed.to_string()),
            ("version".to_string(), format!("lossmesh {}", env!("CARGO_PKG_VERSION"))),
        ];
        meta.append(&mut t.metadata);
        t.metadata = meta;
    }
    if let Some(dir) = out {
        for t in &tables {
            t.write_csv(dir)?;
        }
    }
    Ok(tables)
}

fn level_columns(prefix: &str, c: usize) -> Vec<String> {
    (0..=c).map(|n| format!("{prefix}{n}")).collect()
}

fn plan(dt: f64, t_end: f64, out_every: usize) -> Result<StepPlan, CliError> {
    Ok(StepPlan::new(dt, t_end, out_every)?)
}

/// States of an autonomous ODE at the given increasing times, stepping each
/// gap with the largest step not exceeding `dt` that lands on it exactly.
pub fn sample_ode<F>(mut advance: F, x0: &[f64], times: &[f64], dt: f64) -> Result<Vec<Vec<f64>>, CliError>
where
    F: FnMut(&[f64], &StepPlan) -> lossmesh_core::Result<Trajectory>,
{
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &s in times {
        let gap = s - t;
        if gap > 0.0 {
            let steps = (gap / dt).ceil().max(1.0);
            let p = plan(gap / steps, gap, steps as usize)?;
            x = advance(&x, &p)?.last().to_vec();
            t = s;
        }
        out.push(x.clone());
    }
    Ok(out)
}

fn fixedpoint(cfg: &ExperimentConfig) -> Result<Vec<ResultTable>, CliError> {
    let s = &cfg.system;
    let c = cfg.capacity()?;
    let solver = FixedPointSolver {
        tol: cfg.numerics.tolerance,
        ..FixedPointSolver::default()
    };
    let p = solver.solve(s.lambda, s.mu, c, s.d)?;
    let q = p.occupancy();
    let mut t = ResultTable::new("fixedpoint", ["n", "P_n", "Q_n"]);
    for n in 0..=c {
        t.push(vec![n as f64, p.tail(n), q.as_slice()[n]])?;
    }
    t.meta("blocking", blocking_probability(&p, s.d));
    Ok(vec![t])
}

fn ode_exp(cfg: &ExperimentConfig) -> Result<Vec<ResultTable>, CliError> {
    let s = &cfg.system;
    let c = cfg.capacity()?;
    let pi = FixedPointSolver::default().solve(s.lambda, s.mu, c, s.d)?.occupancy();
    let p = plan(cfg.dt(s.mu), cfg.numerics.t_ode, cfg.numerics.out_every)?;
    let tr = integrate_exp_occupancy(OccupancyDist::empty(c).as_slice(), s.lambda, s.mu, s.d, &p)?;
    let mut cols = vec!["t".to_string()];
    cols.extend(level_columns("Q_", c));
    cols.push("sup_to_fixed_point".into());
    let mut t = ResultTable::new("ode_exp", cols);
    for (time, x) in tr.times.iter().zip(&tr.states) {
        let mut row = vec![*time];
        row.extend(x);
        row.push(pi.sup_distance(x));
        t.push(row)?;
    }
    t.meta("dt", p.dt);
    Ok(vec![t])
}

fn phase_model(cfg: &ExperimentConfig, service: &ServiceDistribution) -> Result<PhaseModel, CliError> {
    let (phase_rate, phase_probs) = match service.kind() {
        ServiceKind::MixedErlang { phase_rate, phase_probs } => (*phase_rate, phase_probs.clone()),
        _ => return Err(CliError::Config("system.service: not mixed_erlang".into())),
    };
    let params = PhaseParams {
        lambda: cfg.system.lambda,
        phase_rate,
        phase_probs,
        d: cfg.system.d,
    };
    Ok(PhaseModel::new(cfg.capacity()?, params)?)
}

/// Phase-resolved equilibrium, located by long integration from empty.
pub fn phase_equilibrium(model: &PhaseModel, dt: f64, horizon: f64) -> Result<PhaseState, CliError> {
    let p = plan(dt, horizon, usize::MAX)?;
    Ok(model.equilibrium(&p, EQUILIBRIUM_RESIDUAL)?)
}

fn ode_phase(cfg: &ExperimentConfig) -> Result<Vec<ResultTable>, CliError> {
    let service = cfg.service();
    let model = phase_model(cfg, &service)?;
    let rate = model.params().phase_rate;
    let dt = cfg.dt(rate);
    let pi = phase_equilibrium(&model, dt, PHASE_EQUILIBRIUM_HORIZON.max(cfg.numerics.t_ode))?;
    let starts: Vec<PhaseState> = cfg
        .numerics
        .initial_points
        .iter()
        .map(|&seed| PhaseState::random(model.space(), seed))
        .collect();
    let p = plan(dt, cfg.numerics.t_ode, cfg.numerics.out_every)?;
    let curves = model.convergence_curves(&starts, &pi, &p)?;
    let c = model.space().capacity();
    let mut cols = vec!["init".to_string(), "t".into(), "dE2".into()];
    cols.extend(level_columns("Q_", c));
    if cfg.output.full_state {
        cols.extend((0..model.space().len()).map(|i| format!("x_{i}")));
    }
    let mut curve_table = ResultTable::new("ode_phase", cols);
    let mut summary = ResultTable::new("ode_phase_summary", ["init", "final_dE2", "monotone_from"]);
    for (seed, curve) in cfg.numerics.initial_points.iter().zip(&curves) {
        // Full states are only kept for the sampled times when requested.
        let states = if cfg.output.full_state {
            Some(model.integrate(PhaseState::random(model.space(), *seed).as_slice(), &p)?)
        } else {
            None
        };
        for (i, t) in curve.times.iter().enumerate() {
            let mut row = vec![*seed as f64, *t, curve.distance_sq[i]];
            row.extend(&curve.marginals[i]);
            if let Some(tr) = &states {
                row.extend(&tr.states[i]);
            }
            curve_table.push(row)?;
        }
        summary.push(vec![
            *seed as f64,
            *curve.distance_sq.last().expect("nonempty curve"),
            curve.monotone_from(),
        ])?;
    }
    curve_table.meta("states", model.space().len());
    curve_table.meta("dt", p.dt);
    Ok(vec![curve_table, summary])
}

fn hetero_profile(cfg: &ExperimentConfig) -> Result<HeteroProfile, CliError> {
    let h = cfg
        .system
        .hetero
        .as_ref()
        .ok_or_else(|| CliError::Config("system.hetero: required".into()))?;
    Ok(HeteroProfile::new(
        h.gamma.clone(),
        h.capacity.clone(),
        cfg.system.lambda,
        cfg.system.mu,
    )?)
}

fn ode_hetero(cfg: &ExperimentConfig) -> Result<Vec<ResultTable>, CliError> {
    let profile = hetero_profile(cfg)?;
    let d = cfg.system.d;
    let p = plan(cfg.dt(cfg.system.mu), cfg.numerics.t_ode, cfg.numerics.out_every)?;
    let tr = integrate_hetero(&profile.empty_state(), &profile, d, &p)?;
    let c_max = *profile.capacities().last().expect("at least one type");
    let mut cols = vec!["t".to_string(), "k".into()];
    cols.extend(level_columns("Q_", c_max));
    let mut t = ResultTable::new("ode_hetero", cols);
    for (time, x) in tr.times.iter().zip(&tr.states) {
        for (k, block) in profile.split(x).into_iter().enumerate() {
            let mut row = vec![*time, (k + 1) as f64];
            row.extend(block);
            row.resize(c_max + 3, 0.0);
            t.push(row)?;
        }
    }
    let residual = lossmesh_core::mf_exp::hetero_occupancy_rhs(tr.last(), &profile, d)?
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    t.meta("final_residual", residual);
    Ok(vec![t])
}

fn sim_config(cfg: &ExperimentConfig, n: usize, service: ServiceDistribution) -> Result<SimConfig, CliError> {
    let servers = match &cfg.system.hetero {
        Some(h) if cfg.mode == Mode::Simulate => Servers::Heterogeneous {
            gamma: h.gamma.clone(),
            capacities: h.capacity.clone(),
        },
        _ => Servers::Homogeneous {
            capacity: cfg.capacity()?,
        },
    };
    let snapshot_interval = cfg.run.age_snapshots.then(|| 5.0 * service.mean());
    Ok(SimConfig {
        n_servers: n,
        lambda: cfg.system.lambda,
        d: cfg.system.d,
        servers,
        service,
        t_total: cfg.run.t_total,
        t_warmup: cfg.run.warmup(),
        batches: cfg.run.batches,
        seed: cfg.run.seed,
        sampling: cfg.run.sampling,
        snapshot_interval,
        trace_times: Vec::new(),
    })
}

/// Model occupancy per type: the fixed point, or the heterogeneous equilibrium.
fn occupancy_models(cfg: &ExperimentConfig) -> Result<Vec<Vec<f64>>, CliError> {
    let s = &cfg.system;
    match &s.hetero {
        Some(_) if cfg.mode == Mode::Simulate => {
            let profile = hetero_profile(cfg)?;
            let p = plan(cfg.dt(s.mu), PHASE_EQUILIBRIUM_HORIZON, usize::MAX)?;
            let eq = hetero_equilibrium(&profile, s.d, &p, EQUILIBRIUM_RESIDUAL)?;
            Ok(profile.split(&eq).into_iter().map(<[f64]>::to_vec).collect())
        }
        _ => {
            let p = FixedPointSolver::default().solve(s.lambda, s.mu, cfg.capacity()?, s.d)?;
            Ok(vec![p.occupancy().into_vec()])
        }
    }
}

fn occupancy_rows(
    table: &mut ResultTable,
    prefix: &[f64],
    stats: &SimStats,
    models: &[Vec<f64>],
) -> Result<f64, CliError> {
    let mut sup = 0.0f64;
    for (k, model) in models.iter().enumerate() {
        let est = stats.occupancy_estimate(k)?;
        for (n, m) in model.iter().enumerate() {
            let mut row = prefix.to_vec();
            row.extend([(k + 1) as f64, n as f64, est.dist.as_slice()[n], est.se[n], *m]);
            table.push(row)?;
        }
        sup = sup.max(est.sup_distance(model));
    }
    Ok(sup)
}

fn blocking_row(table: &mut ResultTable, prefix: &[f64], stats: &SimStats) -> Result<(), CliError> {
    let b = stats.blocking_estimate()?;
    let mut row = prefix.to_vec();
    row.extend([
        stats.arrivals as f64,
        stats.admissions as f64,
        stats.blocks as f64,
        b.fraction.mean,
        b.fraction.se,
        b.full.mean,
        b.model,
        b.difference.mean,
        b.difference.se,
        if b.consistent() { 1.0 } else { 0.0 },
    ]);
    table.push(row)
}

const BLOCKING_COLUMNS: [&str; 10] = [
    "arrivals",
    "admissions",
    "blocks",
    "blocking",
    "blocking_se",
    "full_fraction",
    "model",
    "difference",
    "difference_se",
    "consistent",
];

fn simulate(cfg: &ExperimentConfig) -> Result<Vec<ResultTable>, CliError> {
    let models = occupancy_models(cfg)?;
    let service = cfg.service();
    let runs: Vec<SimStats> = cfg
        .run
        .n_servers
        .par_iter()
        .map(|&n| Ok(run(&sim_config(cfg, n, service.clone())?)?))
        .collect::<Result<_, CliError>>()?;
    let mut occ = ResultTable::new("occupancy", ["N", "k", "n", "fraction", "se", "model"]);
    let mut blk = ResultTable::new("blocking", std::iter::once("N").chain(BLOCKING_COLUMNS));
    let mut ages = ResultTable::new("ages", ["N", "n", "y", "estimate", "se", "model"]);
    let s = &cfg.system;
    for (&n, stats) in cfg.run.n_servers.iter().zip(&runs) {
        occupancy_rows(&mut occ, &[n as f64], stats, &models)?;
        blocking_row(&mut blk, &[n as f64], stats)?;
        if cfg.run.age_snapshots && s.hetero.is_none() {
            let fp = InsensitiveFixedPoint::from_parts(
                OccupancyDist::new(models[0].clone())?,
                service.clone(),
                s.mu,
            )?;
            for level in 0..=cfg.capacity()? {
                let est = stats.age_cdf_estimate(0, level, &cfg.output.y_grid)?;
                for (y, e) in cfg.output.y_grid.iter().zip(est) {
                    let model = fp.eval_pi_diagonal(level, *y)?;
                    ages.push(vec![n as f64, level as f64, *y, e.mean, e.se, model])?;
                }
            }
        }
    }
    occ.meta("service", service.label());
    let mut tables = vec![occ, blk];
    if !ages.rows.is_empty() {
        tables.push(ages);
    }
    Ok(tables)
}

fn insensitivity(cfg: &ExperimentConfig) -> Result<Vec<ResultTable>, CliError> {
    let models = occupancy_models(cfg)?;
    let jobs: Vec<(usize, usize)> = cfg
        .run
        .n_servers
        .iter()
        .flat_map(|&n| (0..cfg.system.services.len()).map(move |i| (n, i)))
        .collect();
    let runs: Vec<SimStats> = jobs
        .par_iter()
        .map(|&(n, i)| Ok(run(&sim_config(cfg, n, cfg.system.services[i].clone())?)?))
        .collect::<Result<_, CliError>>()?;
    let mut occ = ResultTable::new("insensitivity", ["N", "service", "k", "n", "fraction", "se", "model"]);
    let mut report = ResultTable::new(
        "insensitivity_report",
        ["N", "service", "sup_diff", "pass", "blocking", "blocking_consistent"],
    );
    let abs_tol = cfg.output.abs_tol;
    let mut all = true;
    for (&(n, i), stats) in jobs.iter().zip(&runs) {
        let prefix = [n as f64, i as f64];
        let sup = occupancy_rows(&mut occ, &prefix, stats, &models)?;
        let est = stats.occupancy_estimate(0)?;
        let pass = est.agrees_with(&models[0], abs_tol);
        let b = stats.blocking_estimate()?;
        all &= pass && b.consistent();
        report.push(vec![
            n as f64,
            i as f64,
            sup,
            if pass { 1.0 } else { 0.0 },
            b.fraction.mean,
            if b.consistent() { 1.0 } else { 0.0 },
        ])?;
    }
    for (i, dist) in cfg.system.services.iter().enumerate() {
        let kind = serde_json::to_string(dist).expect("service serializes");
        report.meta(&format!("service.{i}"), kind);
    }
    report.meta("abs_tol", abs_tol);
    report.meta("verdict", if all { "pass" } else { "fail" });
    Ok(vec![occ, report])
}

/// Mean-field occupancy path at `times` for the configured service, from empty.
pub fn mean_field_path(
    cfg: &ExperimentConfig,
    service: &ServiceDistribution,
    times: &[f64],
) -> Result<Vec<Vec<f64>>, CliError> {
    let s = &cfg.system;
    let c = cfg.capacity()?;
    match service.kind() {
        ServiceKind::Exponential { rate } => {
            let rate = *rate;
            sample_ode(
                |x, p| integrate_exp_occupancy(x, s.lambda, rate, s.d, p),
                OccupancyDist::empty(c).as_slice(),
                times,
                cfg.dt(rate),
            )
        }
        ServiceKind::MixedErlang { phase_rate, .. } => {
            let model = phase_model(cfg, service)?;
            let states = sample_ode(
                |x, p| model.integrate(x, p),
                PhaseState::empty(model.space()).as_slice(),
                times,
                cfg.dt(*phase_rate),
            )?;
            states
                .iter()
                .map(|x| Ok(occupancy_marginal(model.space(), x)?.into_vec()))
                .collect()
        }
        _ => Err(CliError::Config(format!(
            "system.service: no transient mean-field model for {} service",
            service.label()
        ))),
    }
}

fn transient(cfg: &ExperimentConfig) -> Result<Vec<ResultTable>, CliError> {
    let c = cfg.capacity()?;
    let service = cfg.service();
    let times = cfg.run.trace_times();
    let model = mean_field_path(cfg, &service, &times)?;
    let mut sim = {
        let mut cols = vec!["N".to_string(), "t".into()];
        cols.extend(level_columns("Q_", c));
        ResultTable::new("transient", cols)
    };
    let mut ode = {
        let mut cols = vec!["t".to_string()];
        cols.extend(level_columns("Q_", c));
        ResultTable::new("transient_model", cols)
    };
    for (t, x) in times.iter().zip(&model) {
        let mut row = vec![*t];
        row.extend(x);
        ode.push(row)?;
    }
    let mut dist_cols = vec!["t".to_string()];
    dist_cols.extend(cfg.run.n_servers.iter().map(|n| format!("sup_N{n}")));
    let mut dist = ResultTable::new("transient_distance", dist_cols);
    let mut per_n = Vec::new();
    for &n in &cfg.run.n_servers {
        let base = sim_config(cfg, n, service.clone())?;
        let trace = transient_trace(&base, &times, cfg.run.replications)?;
        for (t, x) in times.iter().zip(&trace.mean) {
            let mut row = vec![n as f64, *t];
            row.extend(x);
            sim.push(row)?;
        }
        per_n.push(trace.sup_distances(&model));
    }
    for (i, t) in times.iter().enumerate() {
        let mut row = vec![*t];
        row.extend(per_n.iter().map(|d| d[i]));
        dist.push(row)?;
    }
    sim.meta("replications", cfg.run.replications);
    Ok(vec![sim, ode, dist])
}
