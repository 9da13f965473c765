//! One PASS/FAIL line per acceptance criterion; exits non-zero on any FAIL.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use netsynth::admm::{run, AdmmConfig, AdmmRun};
use netsynth::analysis::{
    fbsp_analysis, hinf_norm, hinf_state_feedback_central, MultiplierStructure, SynthesisOptions,
    SynthesisResult,
};
use netsynth::decomposed::{
    compress_homogeneous, decomposed_synthesis_alphabeta, decomposed_synthesis_hetero,
    decomposed_synthesis_homogeneous, ClassDescriptor, MultiplierPath,
};
use netsynth::generator::{fig4_fixture, grouped_system, random_system, RandomDims};
use netsynth::graph::Topology;
use netsynth::sysmodel::{close_loop, flatten, InterconnectedSystem};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(t: Instant, budget: Duration) -> Result<(), String> {
    let e = t.elapsed();
    ensure(e <= budget, || format!("took {e:.1?}, budget {budget:?}"))
}

fn small_dims() -> RandomDims {
    RandomDims {
        nx: (2, 3),
        nu: (1, 1),
        nw: (1, 1),
        nz: (2, 2),
        ns: (1, 2),
    }
}

fn identical() -> SynthesisOptions {
    SynthesisOptions {
        structure: MultiplierStructure::IdenticalAcrossEdges,
        ..Default::default()
    }
}

fn norm_invariance() -> Outcome {
    let t = Instant::now();
    let (mut hinf, mut h2, mut res): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for seed in 0..20 {
        let r = common::norm_invariance(seed, true);
        ensure(r.hinf.0.is_finite(), || format!("seed {seed}: unstable"))?;
        hinf = hinf.max(r.hinf_rel());
        res = res.max(r.residuals.0).max(r.residuals.1);
    }
    for seed in 100..120 {
        let r = common::norm_invariance(seed, false);
        h2 = h2.max(r.h2_rel());
        hinf = hinf.max(r.hinf_rel());
        res = res.max(r.residuals.0).max(r.residuals.1);
    }
    ensure(hinf <= 1e-6, || format!("H∞ relative gap {hinf:e}"))?;
    ensure(h2 <= 1e-6, || format!("H2 relative gap {h2:e}"))?;
    ensure(res <= 1e-9, || {
        format!("semi-orthogonality residual {res:e}")
    })?;
    within(t, Duration::from_secs(30))?;
    Ok(format!(
        "H∞ gap {hinf:.1e}, H2 gap {h2:.1e}, residual {res:.1e}"
    ))
}

fn lft_oracle() -> Outcome {
    let t = Instant::now();
    let worst = common::lft_worst_error(50);
    ensure(worst <= 1e-8, || format!("worst relative error {worst:e}"))?;
    within(t, Duration::from_secs(10))?;
    Ok(format!("worst relative error {worst:.1e} over 50 x 20"))
}

/// Re-runs the analysis conditions on the closed loop and the H∞ oracle.
fn sound(name: &str, sys: &InterconnectedSystem, r: &SynthesisResult) -> Result<(), String> {
    let opts = SynthesisOptions::default();
    let ctrl = r
        .gains
        .to_controller(sys, &r.controller_topology)
        .map_err(|e| format!("{name}: {e}"))?;
    let clp = close_loop(sys, &ctrl).map_err(|e| format!("{name}: {e}"))?;
    let analysis = fbsp_analysis(&clp.transpose(), &MultiplierStructure::FullPerEdge)
        .map_err(|e| format!("{name}: analysis {e}"))?;
    let (ok, viol) = analysis.recheck(10.0 * opts.solver.tol);
    ensure(ok, || format!("{name}: analysis violation {viol:e}"))?;
    let hinf = hinf_norm(&flatten(&clp).map_err(|e| e.to_string())?, 1e-9);
    ensure(hinf <= r.gamma * (1.0 + 1e-6), || {
        format!("{name}: H∞ {hinf} above γ {}", r.gamma)
    })
}

fn soundness() -> Outcome {
    let o = SynthesisOptions::default();
    let err = |e: netsynth::Error| e.to_string();
    let mut count = 0;
    let (fig4, topo) = fig4_fixture();
    for r in [
        hinf_state_feedback_central(&fig4, &topo, &o).map_err(err)?,
        decomposed_synthesis_hetero(&fig4, &topo, &o).map_err(err)?,
    ] {
        sound(&format!("fig4 {}", r.method.name()), &fig4, &r)?;
        count += 1;
    }
    let path = Topology::path(3).unwrap();
    for seed in 0..4 {
        let sys = random_system(&path, 60 + seed, small_dims(), true).map_err(err)?;
        for r in [
            hinf_state_feedback_central(&sys, &path, &o).map_err(err)?,
            decomposed_synthesis_hetero(&sys, &path, &o).map_err(err)?,
        ] {
            sound(&format!("path3/{seed} {}", r.method.name()), &sys, &r)?;
            count += 1;
        }
    }
    for n in [3, 4, 5] {
        let ring = Topology::ring(n).unwrap();
        let cls = ClassDescriptor::homogeneous(&ring);
        let sys = grouped_system(&ring, &cls, n as u64, small_dims()).map_err(err)?;
        let cs = compress_homogeneous(&sys, &ring).map_err(err)?;
        let r = decomposed_synthesis_homogeneous(&cs, &o).map_err(err)?;
        sound(&format!("ring{n} homogeneous"), &sys, &r)?;
        count += 1;
    }
    let star = Topology::new(4, [(1, 2), (2, 1), (2, 3), (2, 4), (3, 2), (4, 2)]).unwrap();
    let cls = ClassDescriptor {
        group_sizes: vec![2, 2],
        classes: vec![vec![(1, 2), (2, 1)], vec![(2, 3), (2, 4), (3, 2), (4, 2)]],
    };
    let sys = grouped_system(&star, &cls, 5, RandomDims::default()).map_err(err)?;
    for path in [MultiplierPath::Auto, MultiplierPath::Kronecker] {
        let r = decomposed_synthesis_alphabeta(&sys, &star, &cls, &o, path).map_err(err)?;
        sound(&format!("grouped {path:?}"), &sys, &r)?;
        count += 1;
    }
    Ok(format!("{count} results re-certified"))
}

fn ordering() -> Outcome {
    let topo = Topology::new(3, [(1, 2), (2, 1), (2, 3), (3, 2)]).unwrap();
    let dims = RandomDims {
        nu: (1, 1),
        ns: (2, 2),
        ..RandomDims::default()
    };
    let o = SynthesisOptions::default();
    let mut tightest = f64::INFINITY;
    for seed in 0..10 {
        let sys = random_system(&topo, 40 + seed, dims, true).map_err(|e| e.to_string())?;
        let c = hinf_state_feedback_central(&sys, &topo, &o).map_err(|e| e.to_string())?;
        let d = decomposed_synthesis_hetero(&sys, &topo, &o).map_err(|e| e.to_string())?;
        let i =
            decomposed_synthesis_hetero(&sys, &topo, &identical()).map_err(|e| e.to_string())?;
        ensure(c.gamma <= d.gamma + 1e-6, || {
            format!("seed {seed}: central {} > decomposed {}", c.gamma, d.gamma)
        })?;
        ensure(d.gamma <= i.gamma + 1e-6, || {
            format!(
                "seed {seed}: decomposed {} > identical {}",
                d.gamma, i.gamma
            )
        })?;
        tightest = tightest.min((d.gamma - c.gamma).min(i.gamma - d.gamma));
    }
    Ok(format!("10 instances, smallest margin {tightest:.1e}"))
}

fn special_classes() -> Outcome {
    let err = |e: netsynth::Error| e.to_string();
    let o = SynthesisOptions::default();

    let ring = Topology::ring(4).unwrap();
    let cls = ClassDescriptor::homogeneous(&ring);
    let sys = grouped_system(&ring, &cls, 1, small_dims()).map_err(err)?;
    let hom =
        decomposed_synthesis_homogeneous(&compress_homogeneous(&sys, &ring).map_err(err)?, &o)
            .map_err(err)?;
    let ab =
        decomposed_synthesis_alphabeta(&sys, &ring, &cls, &o, MultiplierPath::Auto).map_err(err)?;
    let g1 = (hom.gamma - ab.gamma).abs();
    ensure(g1 <= 1e-6, || format!("α = β = 1: gap {g1:e}"))?;

    let tri = Topology::new(3, [(1, 2), (2, 3), (3, 1)]).unwrap();
    let cls = ClassDescriptor::fully_heterogeneous(&tri);
    let sys = grouped_system(&tri, &cls, 3, RandomDims::default()).map_err(err)?;
    let het = decomposed_synthesis_hetero(&sys, &tri, &o).map_err(err)?;
    let ab =
        decomposed_synthesis_alphabeta(&sys, &tri, &cls, &o, MultiplierPath::Auto).map_err(err)?;
    let g2 = (het.gamma - ab.gamma).abs() / het.gamma;
    ensure(g2 <= 1e-5, || format!("α = N, β = |E|: gap {g2:e}"))?;

    let mut g3: f64 = 0.0;
    for (n, seed) in [(4, 1), (6, 3)] {
        let ring = Topology::ring(n).unwrap();
        let sys = grouped_system(
            &ring,
            &ClassDescriptor::homogeneous(&ring),
            seed,
            small_dims(),
        )
        .map_err(err)?;
        let hom =
            decomposed_synthesis_homogeneous(&compress_homogeneous(&sys, &ring).map_err(err)?, &o)
                .map_err(err)?;
        let id = decomposed_synthesis_hetero(&sys, &ring, &identical()).map_err(err)?;
        g3 = g3.max((hom.gamma - id.gamma).abs());
    }
    ensure(g3 <= 1e-5, || {
        format!("homogeneous vs identical: gap {g3:e}")
    })?;
    Ok(format!("gaps {g1:.1e}, {g2:.1e}, {g3:.1e}"))
}

fn eigen_soundness() -> Outcome {
    let (checked, failed, worst) = common::eigen_soundness();
    ensure(failed == 0, || {
        format!("{failed} of {checked} Kronecker conditions violated (worst {worst:e})")
    })?;
    Ok(format!(
        "{checked} patterns, largest scaled eigenvalue {worst:.1e}"
    ))
}

fn admm_identities() -> Outcome {
    let (sys, topo) = fig4_fixture();
    let (rounds, drift) = common::reduction_drift(&sys, &topo, 200);
    ensure(rounds == 200, || format!("only {rounds} rounds logged"))?;
    ensure(drift <= 1e-9, || format!("drift {drift:e}"))?;
    Ok(format!("200 rounds, drift {drift:.1e}"))
}

fn spread(r: &AdmmRun) -> f64 {
    let row = r
        .trace
        .rows
        .iter()
        .find(|row| row.iteration == r.reported_iteration)
        .unwrap_or_else(|| r.trace.rows.last().unwrap());
    let hi = row
        .gamma_tilde
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let lo = row
        .gamma_tilde
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    (hi - lo) / hi.abs()
}

fn admm_end_to_end() -> Outcome {
    let t = Instant::now();
    let (sys, topo) = fig4_fixture();
    let cfg = AdmmConfig {
        eps_pri: Some(1e-4),
        eps_dual: Some(1e-4),
        max_iter: 3000,
        ..Default::default()
    };
    let a = run(&sys, &topo, &cfg).map_err(|e| e.to_string())?;
    ensure(a.converged, || format!("no convergence: {:?}", a.warning))?;
    let last = a.trace.rows.last().unwrap();
    ensure(last.r_norm <= 1e-4 && last.d_norm <= 1e-4, || {
        format!("residuals {:e}, {:e}", last.r_norm, last.d_norm)
    })?;
    let s = spread(&a);
    ensure(s <= 1e-4, || format!("γ̃ spread {s:e}"))?;
    sound("admm", &sys, &a.result)?;
    let b = run(&sys, &topo, &cfg).map_err(|e| e.to_string())?;
    let same = a.trace.rows.len() == b.trace.rows.len()
        && a.trace.rows.iter().zip(&b.trace.rows).all(|(x, y)| {
            x.gamma_tilde
                .iter()
                .zip(&y.gamma_tilde)
                .all(|(p, q)| p.to_bits() == q.to_bits())
                && x.r_norm.to_bits() == y.r_norm.to_bits()
                && x.d_norm.to_bits() == y.d_norm.to_bits()
        })
        && a.result.gamma.to_bits() == b.result.gamma.to_bits();
    ensure(same, || "repeated run differs".into())?;
    within(t, Duration::from_secs(600))?;
    Ok(format!(
        "{} rounds, spread {s:.1e}, γ {:.6}",
        a.reported_iteration, a.result.gamma
    ))
}

fn kkt() -> Outcome {
    let t = Topology::new(2, [(1, 2), (2, 1)]).unwrap();
    let sys = random_system(&t, 7, RandomDims::default(), true).map_err(|e| e.to_string())?;
    let central = decomposed_synthesis_hetero(&sys, &t, &SynthesisOptions::default())
        .map_err(|e| e.to_string())?;
    let cfg = AdmmConfig {
        eps_pri: Some(1e-5),
        eps_dual: Some(1e-5),
        ..Default::default()
    };
    let out = run(&sys, &t, &cfg).map_err(|e| e.to_string())?;
    ensure(out.converged, || "no convergence".into())?;
    let gap = (out.result.gamma - central.gamma).abs() / central.gamma;
    ensure(gap <= 1e-4, || {
        format!("ADMM {} vs decomposed {}", out.result.gamma, central.gamma)
    })?;
    Ok(format!("relative gap {gap:.1e}"))
}

fn condition_counts() -> Outcome {
    let (checked, bad) = common::count_mismatches();
    ensure(bad.is_empty(), || bad.join("; "))?;
    Ok(format!("{checked} counts equal"))
}

fn residual_formulas() -> Outcome {
    for seed in 0..5 {
        let (edges, gap) = common::residual_formula_gap(seed);
        ensure(edges == 2, || format!("{edges} ordered edges"))?;
        ensure(gap == 0.0, || format!("seed {seed}: gap {gap:e}"))?;
    }
    Ok("5 random iterate pairs, exact".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("norm invariance under augmentation", norm_invariance),
        ("LFT oracle", lft_oracle),
        ("synthesis soundness", soundness),
        ("decomposition ordering", ordering),
        ("special classes", special_classes),
        ("eigenvalue path soundness", eigen_soundness),
        ("ADMM reduction identities", admm_identities),
        ("ADMM end to end", admm_end_to_end),
        ("ADMM fixed point", kkt),
        ("condition counts", condition_counts),
        ("residual formulas", residual_formulas),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.1}s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.1}s): {why}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
