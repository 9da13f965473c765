mod common;

use approx::assert_relative_eq;
use netsynth::admm::{run, AdmmConfig};
use netsynth::analysis::SynthesisOptions;
use netsynth::decomposed::decomposed_synthesis_hetero;
use netsynth::generator::{fig4_fixture, random_system, RandomDims};
use netsynth::graph::Topology;

fn pair_system() -> (netsynth::sysmodel::InterconnectedSystem, Topology) {
    let t = Topology::new(2, [(1, 2), (2, 1)]).unwrap();
    (
        random_system(&t, 7, RandomDims::default(), true).unwrap(),
        t,
    )
}

#[test]
fn two_agents_reach_the_decomposed_optimum() {
    let (sys, t) = pair_system();
    let central = decomposed_synthesis_hetero(&sys, &t, &SynthesisOptions::default()).unwrap();
    let cfg = AdmmConfig {
        eps_pri: Some(1e-5),
        eps_dual: Some(1e-5),
        ..Default::default()
    };
    let out = run(&sys, &t, &cfg).unwrap();
    assert!(out.converged);
    assert_relative_eq!(out.result.gamma, central.gamma, max_relative = 1e-5);
    let c = &out.result.certification;
    assert!(c.hinf <= out.result.gamma * (1.0 + 1e-6));
}

#[test]
fn two_step_reduction_identities_hold() {
    let t = Topology::new(3, [(1, 2), (2, 1), (2, 3), (3, 2)]).unwrap();
    let sys = random_system(&t, 12, RandomDims::default(), true).unwrap();
    let (rounds, drift) = common::reduction_drift(&sys, &t, 30);
    assert_eq!(rounds, 30);
    assert!(drift <= 1e-9, "drift {drift:e}");
}

#[test]
fn residuals_follow_their_definitions() {
    for seed in 0..5 {
        let (edges, gap) = common::residual_formula_gap(seed);
        assert_eq!(edges, 2);
        assert_eq!(gap, 0.0, "seed {seed}");
    }
}

#[test]
fn parallel_and_sequential_runs_are_identical() {
    let (sys, t) = pair_system();
    let base = AdmmConfig {
        max_iter: 60,
        certify_every: 20,
        ..Default::default()
    };
    let a = run(&sys, &t, &base).unwrap();
    let b = run(
        &sys,
        &t,
        &AdmmConfig {
            parallel: false,
            ..base.clone()
        },
    )
    .unwrap();
    let c = run(&sys, &t, &base).unwrap();
    for other in [&b, &c] {
        assert_eq!(a.trace.rows.len(), other.trace.rows.len());
        for (x, y) in a.trace.rows.iter().zip(&other.trace.rows) {
            assert_eq!(x.gamma_tilde, y.gamma_tilde);
            assert_eq!(x.r_norm.to_bits(), y.r_norm.to_bits());
            assert_eq!(x.d_norm.to_bits(), y.d_norm.to_bits());
        }
        assert_eq!(a.result.gamma.to_bits(), other.result.gamma.to_bits());
    }
}

#[test]
fn accepted_certificates_never_get_worse() {
    let (sys, t) = pair_system();
    let out = run(
        &sys,
        &t,
        &AdmmConfig {
            certify_every: 5,
            max_iter: 200,
            ..Default::default()
        },
    )
    .unwrap();
    let accepted: Vec<f64> = out
        .trace
        .rows
        .iter()
        .filter_map(|r| r.certified_gamma)
        .collect();
    assert!(!accepted.is_empty());
    assert!(accepted.windows(2).all(|w| w[1] <= w[0]));
    assert!(out.result.certified_gamma() <= accepted[0]);
}

#[test]
fn non_convergence_reports_the_best_certified_iterate() {
    let (sys, t) = pair_system();
    let out = run(
        &sys,
        &t,
        &AdmmConfig {
            max_iter: 12,
            certify_every: 4,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(!out.converged);
    assert!(out.warning.is_some());
    let best = out
        .trace
        .rows
        .iter()
        .filter_map(|r| r.certified_gamma)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(out.result.certified_gamma(), best);
}

#[test]
fn benchmark_network_reaches_consensus() {
    let (sys, topo) = fig4_fixture();
    let cfg = AdmmConfig {
        eps_pri: Some(1e-4),
        eps_dual: Some(1e-4),
        ..Default::default()
    };
    let out = run(&sys, &topo, &cfg).unwrap();
    assert!(out.converged, "{:?}", out.warning);
    let last = out.trace.rows.last().unwrap();
    assert!(last.r_norm <= 1e-4 && last.d_norm <= 1e-4);
    let spread = last
        .gamma_tilde
        .iter()
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
        - last
            .gamma_tilde
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b));
    assert!(spread < 1e-3);
    assert!(out.result.certification.hinf <= out.result.gamma * (1.0 + 1e-6));
    for (s, a) in out.agent_stats.iter().zip(1..) {
        assert_eq!(s.n_nominal(), 1, "agent {a}");
    }
}
