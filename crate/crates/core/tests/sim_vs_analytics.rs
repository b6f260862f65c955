use hetq_core::oracle::{oracle_perf, DEFAULT_T_CAP};
use hetq_core::ps::{ps_sojourn_bounds, ps_sojourn_sfj};
use hetq_core::sim::{run_replications, Horizon, SimConfig};
use hetq_core::{PolicyKind, PolicySpec, SystemParams};

#[test]
fn simulated_sojourn_is_bracketed_and_approaches_the_limit() {
    let sfj = ps_sojourn_sfj(1.0, 0.3, 3, 2.0, 8.0).unwrap();
    let mut prev_gap = f64::INFINITY;
    for (idx, &mu) in [20.0, 40.0, 80.0, 160.0].iter().enumerate() {
        let params = SystemParams::from_load(0.3, mu, 2.0, 8.0, 1.0, 3).unwrap();
        let spec = PolicySpec::new(PolicyKind::Ps, params).unwrap();
        let cfg = SimConfig::new(Horizon::TolerantArrivals(1_000_000));
        let est = run_replications(&spec, &cfg, 4, 500 + idx as u64).unwrap().e_sojourn;

        let b = ps_sojourn_bounds(&params).unwrap();
        assert!(
            est.mean + est.half_width >= b.lower,
            "mu {mu}: {est:?} below {}",
            b.lower
        );
        assert!(
            est.mean - est.half_width <= b.upper,
            "mu {mu}: {est:?} above {}",
            b.upper
        );

        let exact = oracle_perf(&spec, DEFAULT_T_CAP).unwrap().e_sojourn.unwrap();
        assert!(
            (est.mean - exact).abs() <= 1.5 * est.half_width,
            "mu {mu}: sim {est:?} exact {exact}"
        );

        let gap = (est.mean - sfj).abs();
        assert!(gap < prev_gap, "mu {mu}: {gap} after {prev_gap}");
        prev_gap = gap;
    }
}

#[test]
fn cd_simulation_matches_exact_chain() {
    let params = SystemParams::from_load(0.4, 30.0, 2.0, 6.0, 0.7, 3).unwrap();
    let spec = PolicySpec::new(PolicyKind::Cd, params).unwrap();
    let est = run_replications(&spec, &SimConfig::new(Horizon::TolerantArrivals(300_000)), 5, 77).unwrap();
    let exact = oracle_perf(&spec, DEFAULT_T_CAP).unwrap();
    assert!((est.e_sojourn.mean - exact.e_sojourn.unwrap()).abs() <= 1.5 * est.e_sojourn.half_width);
    assert!((est.p_block.mean - exact.p_block).abs() <= 1.5 * est.p_block.half_width);
    assert!(est.littles_check < 0.02);
}
