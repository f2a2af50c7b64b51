use lossmesh_core::insensitive::{single_server_product_form, InsensitiveFixedPoint, StateDepArrivalLaw};
use lossmesh_core::mf_exp::{birth_death_stationary, erlang_b, solve_fixed_point};
use lossmesh_core::sim::{run, run_single_server, SimConfig, SingleServerRun};
use lossmesh_core::ServiceDistribution;

fn exp1() -> ServiceDistribution {
    ServiceDistribution::exponential(1.0).unwrap()
}

#[test]
fn heavy_load_blocking_matches_full_fraction() {
    let cfg = SimConfig::homogeneous(1000, 2.0, 2, 2, exp1(), 400.0, 5);
    let stats = run(&cfg).unwrap();
    let b = stats.blocking_estimate().unwrap();
    assert!(b.fraction.mean > 0.05, "{b:?}");
    assert!(b.consistent(), "{b:?}");
    assert_eq!(stats.arrivals, stats.admissions + stats.blocks);
}

#[test]
fn single_random_probe_is_erlang_b_per_server() {
    // With d = 1 every server is an independent M/M/C/C queue.
    let cfg = SimConfig::homogeneous(200, 1.5, 3, 1, exp1(), 2000.0, 8);
    let q = run(&cfg).unwrap().occupancy_estimate(0).unwrap();
    let oracle = erlang_b(1.5, 1.0, 3).unwrap();
    assert!(q.agrees_with(oracle.as_slice(), 0.005), "{q:?}");
}

#[test]
fn moderate_cluster_tracks_fixed_point_for_lognormal_service() {
    let pi = solve_fixed_point(0.9, 1.0, 4, 2).unwrap().occupancy();
    let service = ServiceDistribution::lognormal_with_mean(1.0, 1.0).unwrap();
    let q = run(&SimConfig::homogeneous(2000, 0.9, 4, 2, service, 600.0, 21))
        .unwrap()
        .occupancy_estimate(0)
        .unwrap();
    assert!(q.agrees_with(pi.as_slice(), 0.02), "{q:?}");
}

fn single_server_matches(law: &StateDepArrivalLaw, seed: u64) {
    let stats = run_single_server(law, &SingleServerRun::new(2e5, seed)).unwrap();
    let q = stats.occupancy_estimate(0).unwrap();
    let model: Vec<f64> = (0..=law.capacity())
        .map(|n| single_server_product_form(law, n, &vec![f64::INFINITY; n]).unwrap())
        .collect();
    // Levels too rare to be visited at all have zero SE; one time unit of
    // occupancy is the resolution floor.
    let floor = 1.0 / stats.measured_time();
    assert!(q.agrees_with(&model, floor), "{q:?} vs {model:?}");
}

#[test]
fn single_server_constant_rate_is_truncated_poisson() {
    let law = StateDepArrivalLaw::new(vec![1.3; 4], exp1()).unwrap();
    let oracle = birth_death_stationary(&[1.3; 4], 1.0, 4).unwrap();
    assert!(law.occupancy().unwrap().sup_distance(oracle.as_slice()) < 1e-15);
    single_server_matches(&law, 1);
    let gamma = ServiceDistribution::gamma(2.0, 0.5).unwrap();
    single_server_matches(&StateDepArrivalLaw::new(vec![1.3; 4], gamma).unwrap(), 2);
}

#[test]
fn single_server_with_mean_field_rates() {
    let fp = InsensitiveFixedPoint::new(1.0, 1.0, 5, 2, exp1()).unwrap();
    let alpha = fp.generic_arrival_rates(1.0, 2);
    for (dist, seed) in [(exp1(), 3), (ServiceDistribution::gamma(2.0, 0.5).unwrap(), 4)] {
        single_server_matches(&StateDepArrivalLaw::new(alpha.clone(), dist).unwrap(), seed);
    }
}

#[test]
fn single_server_age_snapshots() {
    let law = StateDepArrivalLaw::new(vec![1.0], exp1()).unwrap();
    let run = SingleServerRun {
        snapshot_interval: Some(2.0),
        ..SingleServerRun::new(1e5, 6)
    };
    let stats = run_single_server(&law, &run).unwrap();
    let ln2 = std::f64::consts::LN_2;
    let est = stats.age_cdf_estimate(0, 1, &[0.0, ln2, f64::INFINITY]).unwrap();
    let model = single_server_product_form(&law, 1, &[ln2]).unwrap();
    assert_eq!(est[0].mean, 0.0);
    assert!(est[1].agrees_with(model, 0.0), "{:?} vs {model}", est[1]);
    assert!(est[2].agrees_with(0.5, 0.0), "{:?}", est[2]);
}
