//! The acceptance checks, each returning a verdict with a one-line summary.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use lossmesh_core::insensitive::{single_server_product_form, InsensitiveFixedPoint, StateDepArrivalLaw};
use lossmesh_core::mf_exp::{
    exp_occupancy_rhs, hetero_equilibrium, hetero_occupancy_rhs, integrate_exp_occupancy, integrate_hetero,
    power_sum_ratio, solve_fixed_point, tails, HeteroProfile, OccupancyDist,
};
use lossmesh_core::mf_phase::{occupancy_marginal, PhaseModel, PhaseParams, PhaseState};
use lossmesh_core::ode::StepPlan;
use lossmesh_core::sim::routing::Prober;
use lossmesh_core::sim::{
    run, run_single_server, transient_trace, Cluster, ProbeSampling, RouteDecision, Servers, SimConfig,
    SingleServerRun,
};
use lossmesh_core::ServiceDistribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Mode, NumericsConfig, OutputConfig, RunConfig, SystemConfig};
use crate::experiment::{mean_field_path, run_experiment};
use crate::CliError;

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Criterion {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl Criterion {
    pub fn line(&self) -> String {
        format!(
            "[{}] C{} {}: {} ({:.2} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

type Check = Result<(bool, String), CliError>;

fn timed(id: u8, name: &'static str, budget: Option<Duration>, f: impl FnOnce() -> Check) -> Criterion {
    let start = Instant::now();
    let outcome = f();
    let elapsed = start.elapsed();
    let (mut passed, mut detail) = match outcome {
        Ok(v) => v,
        Err(e) => (false, e.to_string()),
    };
    if let Some(b) = budget {
        if elapsed > b {
            passed = false;
            detail.push_str(&format!("; exceeded budget of {} s", b.as_secs()));
        }
    }
    Criterion {
        id,
        name,
        passed,
        detail,
        elapsed,
    }
}

fn exp(rate: f64) -> ServiceDistribution {
    ServiceDistribution::exponential(rate).expect("positive rate")
}

fn reference_mixed_erlang() -> ServiceDistribution {
    ServiceDistribution::mixed_erlang(2.1, vec![0.3, 0.3, 0.4]).expect("valid mixture")
}

fn reference_phase_model() -> Result<PhaseModel, CliError> {
    Ok(PhaseModel::new(
        5,
        PhaseParams {
            lambda: 1.0,
            phase_rate: 2.1,
            phase_probs: vec![0.3, 0.3, 0.4],
            d: 2,
        },
    )?)
}

fn reference_pi() -> Result<Vec<f64>, CliError> {
    Ok(solve_fixed_point(1.0, 1.0, 5, 2)?.occupancy().into_vec())
}

fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Truncated Poisson weights `a^n/n!`, normalised.
fn truncated_poisson(a: f64, c: usize) -> Vec<f64> {
    let mut w = vec![1.0];
    for n in 1..=c {
        w.push(w[n - 1] * a / n as f64);
    }
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

pub fn erlang_b_reduction() -> Criterion {
    timed(1, "Erlang-B reduction (d = 1)", Some(Duration::from_secs(1)), || {
        let mut worst = 0.0f64;
        for lambda in [0.5, 1.0, 2.0] {
            for c in 1..=20 {
                let q = solve_fixed_point(lambda, 1.0, c, 1)?.occupancy();
                worst = worst.max(sup(q.as_slice(), &truncated_poisson(lambda, c)));
            }
        }
        Ok((worst <= 1e-10, format!("max sup-norm error {worst:.3e} over 60 cases")))
    })
}

pub fn golden_ratio() -> Criterion {
    timed(2, "closed form at C = 1, d = 2", Some(Duration::from_secs(1)), || {
        let p1 = solve_fixed_point(1.0, 1.0, 1, 2)?.tail(1);
        let exact = (5f64.sqrt() - 1.0) / 2.0;
        let err = (p1 - exact).abs();
        Ok((err <= 1e-10, format!("P_1 = {p1:.12}, error {err:.3e}")))
    })
}

pub fn phase_ode_insensitivity() -> Criterion {
    timed(3, "mixed-Erlang ODE marginal equals exponential fixed point", Some(Duration::from_secs(30)), || {
        let model = reference_phase_model()?;
        let pi = reference_pi()?;
        let plan = StepPlan::new(1e-3 / 2.1, 200.0, usize::MAX)?;
        let mut worst = 0.0f64;
        for x0 in [PhaseState::empty(model.space()), PhaseState::random(model.space(), 1)] {
            let tr = model.integrate(x0.as_slice(), &plan)?;
            let q = occupancy_marginal(model.space(), tr.last())?;
            worst = worst.max(q.sup_distance(&pi));
        }
        Ok((worst <= 1e-6, format!("sup |Q(200) - pi_exp| = {worst:.3e} from empty and random starts")))
    })
}

pub fn global_convergence(out_dir: &Path) -> Criterion {
    timed(4, "convergence from random initial points", Some(Duration::from_secs(120)), || {
        let cfg = ExperimentConfig {
            mode: Mode::OdePhase,
            system: SystemConfig {
                lambda: 1.0,
                mu: 1.0,
                capacity: Some(5),
                d: 2,
                service: Some(reference_mixed_erlang()),
                services: Vec::new(),
                hetero: None,
            },
            run: RunConfig::default(),
            numerics: NumericsConfig {
                t_ode: 200.0,
                out_every: 2100,
                initial_points: vec![1, 2, 3, 4],
                ..NumericsConfig::default()
            },
            output: OutputConfig {
                dir: out_dir.display().to_string(),
                ..OutputConfig::default()
            },
        };
        let tables = run_experiment(&cfg, Some(out_dir))?;
        let summary = tables
            .iter()
            .find(|t| t.name == "ode_phase_summary")
            .ok_or_else(|| CliError::Engine("missing summary table".into()))?;
        let finals = summary.values("final_dE2").expect("column exists");
        let csv = out_dir.join("ode_phase.csv");
        let ok = finals.len() == 4 && finals.iter().all(|v| *v < 1e-8) && csv.is_file();
        let worst = finals.iter().cloned().fold(0.0, f64::max);
        Ok((ok, format!("max final dE2 = {worst:.3e}; curves in {}", csv.display())))
    })
}

pub fn single_phase_reduction() -> Criterion {
    timed(5, "single-phase ODE equals exponential ODE", None, || {
        let model = PhaseModel::new(
            5,
            PhaseParams {
                lambda: 1.0,
                phase_rate: 1.0,
                phase_probs: vec![1.0],
                d: 2,
            },
        )?;
        let plan = StepPlan::new(1e-3, 50.0, 1)?;
        let mut worst = 0.0f64;
        for seed in [3, 7] {
            let x0 = PhaseState::random(model.space(), seed);
            let q0 = occupancy_marginal(model.space(), x0.as_slice())?;
            let phase = model.integrate(x0.as_slice(), &plan)?;
            let expo = integrate_exp_occupancy(q0.as_slice(), 1.0, 1.0, 2, &plan)?;
            for (x, q) in phase.states.iter().zip(&expo.states) {
                worst = worst.max(occupancy_marginal(model.space(), x)?.sup_distance(q));
            }
        }
        Ok((worst <= 1e-12, format!("max pointwise difference on [0, 50]: {worst:.3e}")))
    })
}

pub fn mean_field_limit() -> Criterion {
    timed(6, "transient traces approach the ODE as N grows", Some(Duration::from_secs(300)), || {
        let times: Vec<f64> = (1..=40).map(|i| i as f64 * 0.25).collect();
        let cfg = ExperimentConfig {
            mode: Mode::Transient,
            system: SystemConfig {
                lambda: 1.0,
                mu: 1.0,
                capacity: Some(5),
                d: 2,
                service: None,
                services: Vec::new(),
                hetero: None,
            },
            run: RunConfig {
                n_servers: vec![100, 10_000],
                replications: 20,
                seed: 6,
                sample_times: times.clone(),
                ..RunConfig::default()
            },
            numerics: NumericsConfig::default(),
            output: OutputConfig::default(),
        };
        let model = mean_field_path(&cfg, &exp(1.0), &times)?;
        let mut dists = Vec::new();
        for &n in &cfg.run.n_servers {
            let sim = SimConfig::homogeneous(n, 1.0, 5, 2, exp(1.0), 10.0, cfg.run.seed);
            dists.push(transient_trace(&sim, &times, 20)?.sup_distances(&model));
        }
        let large = dists[1].iter().cloned().fold(0.0, f64::max);
        let closer = dists[0].iter().zip(&dists[1]).filter(|(a, b)| b < a).count();
        let frac = closer as f64 / times.len() as f64;
        Ok((
            large <= 0.03 && frac >= 0.9,
            format!("sup at N=1e4: {large:.4}; N=1e4 closer than N=1e2 at {:.0}% of times", 100.0 * frac),
        ))
    })
}

pub fn simulation_insensitivity() -> Criterion {
    timed(7, "simulated occupancy is insensitive to the service law", Some(Duration::from_secs(600)), || {
        let pi = reference_pi()?;
        let services = vec![
            exp(1.0),
            reference_mixed_erlang(),
            ServiceDistribution::gamma_with_mean(2.0, 1.0)?,
            ServiceDistribution::deterministic(1.0)?,
        ];
        let results = services
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let cfg = SimConfig::homogeneous(10_000, 1.0, 5, 2, s.clone(), 2000.0, 70 + i as u64);
                let stats = run(&cfg)?;
                Ok((s.label(), stats.occupancy_estimate(0)?, stats.blocking_estimate()?))
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let mut ok = true;
        let mut parts = Vec::new();
        for (label, occ, block) in &results {
            let pass = occ.agrees_with(&pi, 0.02) && block.consistent();
            ok &= pass;
            parts.push(format!(
                "{label} sup {:.2e} blocking {:.1e}{}",
                occ.sup_distance(&pi),
                block.fraction.mean,
                if pass { "" } else { " FAIL" }
            ));
        }
        Ok((ok, parts.join("; ")))
    })
}

pub fn age_law() -> Criterion {
    timed(8, "joint occupancy/age law", None, || {
        let fp = InsensitiveFixedPoint::new(1.0, 1.0, 5, 2, exp(1.0))?;
        let cfg = SimConfig::homogeneous(10_000, 1.0, 5, 2, exp(1.0), 2000.0, 8).with_age_snapshots();
        let stats = run(&cfg)?;
        let ys = [std::f64::consts::LN_2, 1.0, 2.0];
        let mut ok = true;
        let mut worst = 0.0f64;
        for n in [1, 2] {
            for (y, e) in ys.iter().zip(stats.age_cdf_estimate(0, n, &ys)?) {
                let model = fp.eval_pi_diagonal(n, *y)?;
                ok &= e.agrees_with(model, 0.01);
                worst = worst.max((e.mean - model).abs());
            }
        }
        Ok((ok, format!("max |estimate - pi(n, y..y)| = {worst:.2e} over 6 points")))
    })
}

pub fn single_server_oracle() -> Criterion {
    timed(9, "single-server product form", None, || {
        let fp = InsensitiveFixedPoint::new(1.0, 1.0, 5, 2, exp(1.0))?;
        let generic = fp.generic_arrival_rates(1.0, 2);
        let services = [exp(1.0), ServiceDistribution::gamma(2.0, 0.5)?];
        let mut ok = true;
        let mut seed = 90;
        for alpha in [vec![1.0; 5], generic] {
            for dist in &services {
                let law = StateDepArrivalLaw::new(alpha.clone(), dist.clone())?;
                seed += 1;
                let stats = run_single_server(&law, &SingleServerRun::new(2e5, seed))?;
                let est = stats.occupancy_estimate(0)?;
                let model: Vec<f64> = (0..=5)
                    .map(|n| single_server_product_form(&law, n, &vec![f64::INFINITY; n]))
                    .collect::<Result<_, _>>()?;
                ok &= est.agrees_with(&model, 1.0 / stats.measured_time());
            }
        }
        // The product form with mean-field rates reproduces the fixed point.
        let mut identity = 0.0f64;
        for (lambda, c, d) in [(1.0, 5, 2), (0.6, 3, 3), (2.0, 8, 2), (1.5, 10, 4)] {
            let dist = ServiceDistribution::gamma(2.0, 0.5)?;
            let fp = InsensitiveFixedPoint::new(lambda, 1.0, c, d, dist.clone())?;
            let law = StateDepArrivalLaw::new(fp.generic_arrival_rates(lambda, d), dist)?;
            for n in 0..=c {
                for y in [0.5, 2.0, f64::INFINITY] {
                    let ages = vec![y; n];
                    let a = single_server_product_form(&law, n, &ages)?;
                    identity = identity.max((a - fp.eval_pi(n, &ages)?).abs());
                }
            }
        }
        ok &= identity <= 1e-12;
        Ok((ok, format!("4 simulations within 3 SE; self-consistency error {identity:.2e}")))
    })
}

pub fn property_suite() -> Criterion {
    timed(10, "conservation, routing and invariant properties", None, || {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut worst_exp = 0.0f64;
        let mut worst_phase = 0.0f64;
        let mut worst_hetero = 0.0f64;
        let phase = reference_phase_model()?;
        let profile = HeteroProfile::new(vec![0.3, 0.7], vec![2, 5], 1.3, 1.0)?;
        for i in 0..1000u64 {
            let c = rng.random_range(1..=10);
            let raw: Vec<f64> = (0..=c).map(|_| rng.random::<f64>()).collect();
            let q = OccupancyDist::from_approximate(&raw)?;
            let lambda = rng.random_range(0.1..5.0);
            let d = rng.random_range(1..=4);
            let s: f64 = exp_occupancy_rhs(q.as_slice(), lambda, 1.0, d).iter().sum();
            worst_exp = worst_exp.max(s.abs());
            let x = PhaseState::random(phase.space(), i);
            worst_phase = worst_phase.max(phase.rhs(x.as_slice())?.iter().sum::<f64>().abs());
            let mut state = Vec::new();
            for k in 0..2 {
                let raw: Vec<f64> = (0..=profile.capacities()[k]).map(|_| rng.random::<f64>()).collect();
                state.extend(OccupancyDist::from_approximate(&raw)?.into_vec());
            }
            let h = hetero_occupancy_rhs(&state, &profile, 2)?;
            for block in profile.split(&h) {
                worst_hetero = worst_hetero.max(block.iter().sum::<f64>().abs());
            }
        }
        let conservation = worst_exp < 1e-12 && worst_phase < 1e-12 && worst_hetero < 1e-12;

        // Destination frequencies per occupancy level against the formula.
        let mut routing_ok = true;
        let mut worst_z = 0.0f64;
        for (case, (n, c, d)) in [(20usize, 3usize, 2u32), (50, 5, 2), (10, 2, 3)].into_iter().enumerate() {
            let occ: Vec<usize> = (0..n).map(|_| rng.random_range(0..=c)).collect();
            let mut q = vec![0.0; c + 1];
            for &o in &occ {
                q[o] += 1.0 / n as f64;
            }
            let r = tails(&q);
            let trials = 1_000_000u64;
            let mut hits = vec![0u64; c + 2];
            let mut route_rng = ChaCha8Rng::seed_from_u64(100 + case as u64);
            let mut prober = Prober::new();
            for _ in 0..trials {
                match prober.power_of_d(&occ, c, d as usize, ProbeSampling::WithReplacement, &mut route_rng)? {
                    RouteDecision::Server(s) => hits[occ[s]] += 1,
                    RouteDecision::Blocked => hits[c + 1] += 1,
                }
            }
            for level in 0..=c + 1 {
                let p = if level == c + 1 {
                    r[c].powi(d as i32)
                } else if level == c {
                    0.0
                } else {
                    q[level] * power_sum_ratio(r[level], r[level + 1], d)?
                };
                let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
                let dev = (hits[level] as f64 - trials as f64 * p).abs();
                if sigma > 0.0 {
                    worst_z = worst_z.max(dev / sigma);
                }
                routing_ok &= dev <= 3.0 * sigma;
            }
        }

        // Fuzzed simulator configurations, invariants checked at every event.
        let services = [
            exp(1.0),
            reference_mixed_erlang(),
            ServiceDistribution::gamma(0.5, 2.0)?,
            ServiceDistribution::lognormal_with_mean(1.0, 1.0)?,
            ServiceDistribution::deterministic(1.0)?,
        ];
        let mut violations = 0usize;
        for case in 0..100usize {
            let n = rng.random_range(1..40);
            let c = rng.random_range(1..6);
            let d = rng.random_range(1..4u32);
            let mut cfg = SimConfig::homogeneous(
                n,
                rng.random_range(0.2..4.0),
                c,
                d,
                services[case % services.len()].clone(),
                25.0,
                case as u64,
            );
            if case % 3 == 0 && n >= 2 {
                cfg.servers = Servers::Heterogeneous {
                    gamma: vec![0.5, 0.5],
                    capacities: vec![c, c + 2],
                };
            }
            if case % 4 == 1 && d as usize <= n {
                cfg.sampling = ProbeSampling::WithoutReplacement;
            }
            let mut cluster = Cluster::new(&cfg, 0)?;
            while cluster.step()? {
                if cluster.check_invariants().is_err() {
                    violations += 1;
                    break;
                }
            }
        }
        Ok((
            conservation && routing_ok && violations == 0,
            format!(
                "RHS sums exp {worst_exp:.1e} phase {worst_phase:.1e} hetero {worst_hetero:.1e}; \
                 routing max |z| {worst_z:.2}; {violations} invariant violations in 100 runs"
            ),
        ))
    })
}

pub fn heterogeneous_reduction() -> Criterion {
    timed(11, "heterogeneous engine", None, || {
        let single = HeteroProfile::homogeneous(5, 1.0, 1.0)?;
        let plan = StepPlan::new(1e-3, 50.0, 100)?;
        let mut bitwise = true;
        for q0 in [OccupancyDist::empty(5), OccupancyDist::new(vec![0.1, 0.2, 0.3, 0.2, 0.1, 0.1])?] {
            let a = integrate_exp_occupancy(q0.as_slice(), 1.0, 1.0, 2, &plan)?;
            let b = integrate_hetero(q0.as_slice(), &single, 2, &plan)?;
            bitwise &= a == b;
        }
        let homo = SimConfig::homogeneous(500, 1.0, 5, 2, exp(1.0), 200.0, 11).with_age_snapshots();
        let hetero = SimConfig {
            servers: Servers::Heterogeneous {
                gamma: vec![1.0],
                capacities: vec![5],
            },
            ..homo.clone()
        };
        let same_sim = run(&homo)? == run(&hetero)?;

        let profile = HeteroProfile::new(vec![0.5, 0.5], vec![3, 5], 1.0, 1.0)?;
        let eq = hetero_equilibrium(&profile, 2, &StepPlan::new(1e-3, 500.0, usize::MAX)?, 1e-8)?;
        let residual = hetero_occupancy_rhs(&eq, &profile, 2)?
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let cfg = SimConfig {
            servers: Servers::Heterogeneous {
                gamma: vec![0.5, 0.5],
                capacities: vec![3, 5],
            },
            ..SimConfig::homogeneous(10_000, 1.0, 5, 2, exp(1.0), 2000.0, 12)
        };
        let stats = run(&cfg)?;
        let mut sim_ok = true;
        let mut worst = 0.0f64;
        for (k, model) in profile.split(&eq).into_iter().enumerate() {
            let est = stats.occupancy_estimate(k)?;
            sim_ok &= est.agrees_with(model, 0.02);
            worst = worst.max(est.sup_distance(model));
        }
        Ok((
            bitwise && same_sim && residual < 1e-8 && sim_ok,
            format!(
                "K=1 ODE bitwise {bitwise}, K=1 simulation identical {same_sim}; \
                 K=2 residual {residual:.1e}, simulation sup {worst:.2e}"
            ),
        ))
    })
}

/// Runs every criterion in order; the convergence curves go to `out_dir`.
pub fn run_all(out_dir: &Path) -> Vec<Criterion> {
    vec![
        erlang_b_reduction(),
        golden_ratio(),
        phase_ode_insensitivity(),
        global_convergence(out_dir),
        single_phase_reduction(),
        mean_field_limit(),
        simulation_insensitivity(),
        age_law(),
        single_server_oracle(),
        property_suite(),
        heterogeneous_reduction(),
    ]
}

/// Default location of verification artifacts.
pub fn default_out_dir() -> PathBuf {
    PathBuf::from("out").join("verify")
}
