#![allow(dead_code)]

use netsynth::admm::{build_agents, residuals, run, AdmmConfig, AgentState, MessageBus};
use netsynth::analysis::{h2_norm, hinf_norm, Method, SynthesisOptions};
use netsynth::decomposed::{
    compress_homogeneous, compressed_program, decomposed_synthesis_hetero, kronecker_condition,
    ClassDescriptor, MultiplierPath,
};
use netsynth::generator::{
    grouped_system, random_controller, random_global_performance, random_system, RandomDims,
};
use netsynth::graph::{symmetrize, Topology};
use netsynth::linalg::{rel_diff, Mat};
use netsynth::report::{even_groups, grouped_instance, instance_for, scaling_report};
use netsynth::sdp::{check_feasible, solve};
use netsynth::sysmodel::{
    augment_performance, close_loop, close_monolithic, flatten, monolithic_closed_loop,
    monolithic_controller, InterconnectedSystem,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Norms of the original and the augmented closed loop under the same gains.
pub struct Invariance {
    pub hinf: (f64, f64),
    pub h2: (f64, f64),
    pub abscissa: (f64, f64),
    pub residuals: (f64, f64),
}

impl Invariance {
    pub fn hinf_rel(&self) -> f64 {
        (self.hinf.0 - self.hinf.1).abs() / self.hinf.0
    }

    pub fn h2_rel(&self) -> f64 {
        (self.h2.0 - self.h2.1).abs() / self.h2.0
    }
}

/// Augments a random 4-subsystem plant, designs gains on the augmented
/// plant and evaluates both closed loops with them.
pub fn norm_invariance(seed: u64, feedthrough: bool) -> Invariance {
    let topo = Topology::ring(4).unwrap();
    let (global, spec) = random_global_performance(&topo, seed, feedthrough).unwrap();
    let (aug, pa) = augment_performance(&global, &spec).unwrap();
    let gains = decomposed_synthesis_hetero(&aug, &topo, &SynthesisOptions::default())
        .unwrap()
        .gains;
    let ctrl = gains.to_controller(&aug, &topo).unwrap();
    let local = flatten(&close_loop(&aug, &ctrl).unwrap()).unwrap();
    let original = close_monolithic(
        &global.monolithic().unwrap(),
        &monolithic_controller(&ctrl).unwrap(),
    );
    Invariance {
        hinf: (hinf_norm(&original, 1e-10), hinf_norm(&local, 1e-10)),
        h2: (h2_norm(&original), h2_norm(&local)),
        abscissa: (original.spectral_abscissa(), local.spectral_abscissa()),
        residuals: (pa.residual_l, pa.residual_r),
    }
}

fn oracle_topologies() -> Vec<(Topology, Topology)> {
    vec![
        (
            Topology::new(3, [(1, 2), (2, 3), (3, 1)]).unwrap(),
            Topology::new(3, [(2, 1), (3, 2)]).unwrap(),
        ),
        (
            Topology::path(4).unwrap(),
            Topology::new(4, [(1, 3), (4, 1), (2, 4)]).unwrap(),
        ),
        (
            Topology::new(2, [(1, 2)]).unwrap(),
            Topology::new(2, [(1, 2), (2, 1)]).unwrap(),
        ),
        (
            Topology::new(4, [(1, 2), (2, 3), (3, 4)]).unwrap(),
            Topology::edge_set(4, []).unwrap(),
        ),
        (Topology::complete(3).unwrap(), Topology::ring(3).unwrap()),
    ]
}

/// Worst relative gap between the interconnected and the monolithic closed
/// loop over `trials` random instances at 20 frequencies each.
pub fn lft_worst_error(trials: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let tops = oracle_topologies();
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let (tg, tk) = &tops[trial as usize % tops.len()];
        let sys = random_system(tg, trial, RandomDims::default(), false).unwrap();
        let ctrl = random_controller(&sys, tk, trial, 1 + (trial as usize % 2)).unwrap();
        let flat = flatten(&close_loop(&sys, &ctrl).unwrap()).unwrap();
        let mono = monolithic_closed_loop(&sys, &ctrl).unwrap();
        assert_eq!(flat.a.shape(), mono.a.shape());
        for _ in 0..20 {
            let s = Complex64::new(0.0, 10f64.powf(rng.random_range(-2.0..2.0)));
            worst = worst.max(rel_diff(&flat.eval(s), &mono.eval(s)));
        }
    }
    worst
}

/// Largest deviation from the two-step reduction identities over a debug
/// run of `rounds` rounds: `u + v = 0`, `u_ik = -u_ki`, `t` equal to the
/// consensus mean and `λ_i` equal to twice the stacked `u`-blocks.
pub fn reduction_drift(sys: &InterconnectedSystem, topo: &Topology, rounds: usize) -> (usize, f64) {
    let cfg = AdmmConfig {
        debug: true,
        max_iter: rounds,
        certify_every: 0,
        eps_pri: Some(0.0),
        eps_dual: Some(0.0),
        ..Default::default()
    };
    let out = run(sys, topo, &cfg).unwrap();
    let log = out.debug.unwrap();
    let (_, _, sels) = build_agents(sys, topo, &SynthesisOptions::default()).unwrap();
    let mut drift: f64 = 0.0;
    for (kappa, round) in log.rounds.iter().enumerate() {
        for (&(i, k), e) in round {
            let back = &round[&(k, i)];
            for j in 0..e.u.len() {
                drift = drift.max((e.u[j] + e.v[j]).abs());
                drift = drift.max((e.u[j] + back.u[j]).abs());
                drift = drift.max((e.t[j] - e.mean[j]).abs() / (1.0 + e.mean[j].abs()));
            }
        }
        let Some(lambdas) = log.lambdas.get(kappa + 1) else {
            continue;
        };
        for (a, lam) in lambdas.iter().enumerate() {
            let mut twice_u = vec![0.0; lam.len()];
            for (&(i, k), e) in round {
                if i == a + 1 {
                    let sel = sels.get(i, k).unwrap();
                    sel.scatter_add(&mut twice_u, &e.u, 2.0);
                }
            }
            for (x, y) in lam.iter().zip(&twice_u) {
                drift = drift.max((x - y).abs() / (1.0 + x.abs()));
            }
        }
    }
    (log.rounds.len(), drift)
}

fn directed_cycle(n: usize) -> Topology {
    Topology::new(n, (1..=n).map(|i| (i, i % n + 1))).unwrap()
}

fn sym_max_eig(m: &Mat) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigen().eigenvalues.max()
}

/// Solves the eigenvalue-path program on undirected rings, complete graphs
/// and directed cycles with 3 to 6 nodes, then evaluates the full Kronecker
/// multiplier condition at each solution. Returns the number of classes
/// checked, how many failed `check_feasible` and the worst scaled largest
/// eigenvalue of the Kronecker condition.
pub fn eigen_soundness() -> (usize, usize, f64) {
    let dims = RandomDims {
        nx: (2, 2),
        nu: (1, 1),
        nw: (1, 1),
        nz: (2, 2),
        ns: (1, 1),
    };
    let opts = SynthesisOptions::default();
    let (mut checked, mut failed, mut worst) = (0, 0, f64::NEG_INFINITY);
    for n in 3..=6 {
        for t in [
            Topology::ring(n).unwrap(),
            Topology::complete(n).unwrap(),
            directed_cycle(n),
        ] {
            let sys =
                grouped_system(&t, &ClassDescriptor::homogeneous(&t), n as u64, dims).unwrap();
            let cs = compress_homogeneous(&sys, &t).unwrap();
            let cp = compressed_program(&cs, &opts, MultiplierPath::Eigen).unwrap();
            let sol = solve(&cp.program, &opts.solver).require_optimal().unwrap();
            for (c, m) in cs.classes.iter().zip(&cp.class_mults) {
                let lmi = kronecker_condition(c, m, "kronecker");
                let v = lmi.eval(&sol.x);
                let scale = 1.0 + v.amax();
                worst = worst.max(sym_max_eig(&v) / scale);
                let mut p = cp.program.clone();
                p.add_nsd(lmi);
                if !check_feasible(&p, &sol.x, 10.0 * opts.solver.tol * scale).0 {
                    failed += 1;
                }
                checked += 1;
            }
        }
    }
    (checked, failed, worst)
}

fn expect(
    checked: &mut usize,
    bad: &mut Vec<String>,
    label: &str,
    got: (usize, usize),
    want: (usize, usize),
) {
    *checked += 1;
    if got != want {
        bad.push(format!("{label}: {got:?} != {want:?}"));
    }
}

/// Compares the instrumented condition counts of every method with the
/// closed forms over `N ∈ {2, 4, 8}`, ring and complete graphs and
/// `α ∈ {1, 2, 3}`. Returns the number of comparisons and the mismatches.
pub fn count_mismatches() -> (usize, Vec<String>) {
    let methods = [
        Method::Central,
        Method::Decomposed,
        Method::Homogeneous,
        Method::AlphaBeta,
        Method::Admm,
    ];
    let mut checked = 0;
    let mut bad = Vec::new();
    for n in [2, 4, 8] {
        for t in [Topology::ring(n).unwrap(), Topology::complete(n).unwrap()] {
            let e = symmetrize(&t).n_edges();
            for m in methods {
                let label = format!("{} n={n} |E|={e}", m.name());
                let r = match instance_for(m, t.clone(), 1, 3)
                    .and_then(|inst| scaling_report(m, &inst, false))
                {
                    Ok(r) => r,
                    Err(err) => {
                        bad.push(format!("{label}: {err}"));
                        continue;
                    }
                };
                let want = match m {
                    Method::Central => (1, 1),
                    Method::Decomposed | Method::Admm => (n, e),
                    Method::Homogeneous | Method::AlphaBeta => (1, 2),
                };
                expect(
                    &mut checked,
                    &mut bad,
                    &label,
                    (r.nominal(), r.multiplier()),
                    want,
                );
                if m == Method::Admm {
                    for a in &r.per_agent {
                        expect(
                            &mut checked,
                            &mut bad,
                            &format!("{label} agent {}", a.agent),
                            (a.nominal, a.multiplier),
                            (1, a.neighbors),
                        );
                    }
                }
            }
            for alpha in [1, 2, 3].into_iter().filter(|&a| a <= n) {
                let label = format!("alphabeta n={n} alpha={alpha}");
                let r = even_groups(n, alpha)
                    .and_then(|g| {
                        grouped_instance(
                            t.clone(),
                            ClassDescriptor {
                                group_sizes: g,
                                classes: vec![t.edges().collect()],
                            },
                            3,
                        )
                    })
                    .and_then(|inst| scaling_report(Method::AlphaBeta, &inst, false));
                match r {
                    Ok(r) => expect(
                        &mut checked,
                        &mut bad,
                        &label,
                        (r.nominal(), r.multiplier()),
                        (alpha, 2),
                    ),
                    Err(err) => bad.push(format!("{label}: {err}")),
                }
            }
        }
    }
    (checked, bad)
}

/// Two-agent instance on which residuals are evaluated by hand: returns the
/// largest gap between `r_ik = E_ik y_i - E_ki y_k`,
/// `d_ik = ½ (E_ik Δy_i + E_ki Δy_k)` and the implemented residuals, and
/// the number of ordered edges compared.
pub fn residual_formula_gap(seed: u64) -> (usize, f64) {
    let t = Topology::new(2, [(1, 2), (2, 1)]).unwrap();
    let sys = random_system(&t, seed, RandomDims::default(), true).unwrap();
    let (_, agents, sels) = build_agents(&sys, &t, &SynthesisOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states: Vec<AgentState> = agents
        .iter()
        .map(|a| AgentState::new(a.layout.agent, a.layout.len))
        .collect();
    let mut bus = MessageBus::default();
    for round in 0..2 {
        for st in states.iter_mut() {
            st.prev_y = std::mem::take(&mut st.y);
            st.y = (0..st.prev_y.len())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
        }
        bus.broadcast(round, &states, &sels);
        bus.deliver(round, &mut states, &sels).unwrap();
    }
    let res = residuals(&mut states, &sels);
    let mut gap: f64 = 0.0;
    let (mut r2, mut d2) = (0.0, 0.0);
    for &(edge, r_impl, d_impl) in &res.per_edge {
        let (i, k) = edge;
        let (si, sk) = (sels.get(i, k).unwrap(), sels.get(k, i).unwrap());
        let (yi, yk) = (&states[i - 1], &states[k - 1]);
        let (a, b) = (si.gather(&yi.y), sk.gather(&yk.y));
        let (a0, b0) = (si.gather(&yi.prev_y), sk.gather(&yk.prev_y));
        let r: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
        let d: f64 = (0..a.len())
            .map(|j| (0.5 * ((a[j] - a0[j]) + (b[j] - b0[j]))).powi(2))
            .sum();
        gap = gap.max((r.sqrt() - r_impl).abs());
        gap = gap.max((d.sqrt() - d_impl).abs());
        r2 += r;
        d2 += d;
    }
    gap = gap.max((r2.sqrt() - res.r_norm).abs());
    gap = gap.max((d2.sqrt() - res.d_norm).abs());
    (res.per_edge.len(), gap)
}
