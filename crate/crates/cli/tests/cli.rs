use std::path::Path;
use std::process::{Command, Output};

use netsynth::generator::unstabilizable_fixture;
use netsynth::io::{ResultJson, SystemFile};
use tempfile::TempDir;

fn netsynth(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netsynth"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn generate_is_a_function_of_its_arguments() {
    let dir = TempDir::new().unwrap();
    for name in ["a.json", "b.json"] {
        let o = netsynth(
            &[
                "generate",
                "--n",
                "8",
                "--seed",
                "42",
                "--topology",
                "fig4",
                "-o",
                name,
            ],
            dir.path(),
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.json")).unwrap());
    let f = SystemFile::load(&dir.path().join("a.json")).unwrap();
    assert_eq!(f.system.n(), 8);
    assert_eq!(f.system.topology.n_edges(), 9);
}

#[test]
fn fig4_requires_eight_nodes() {
    let dir = TempDir::new().unwrap();
    let o = netsynth(
        &[
            "generate",
            "--n",
            "5",
            "--seed",
            "1",
            "--topology",
            "fig4",
            "-o",
            "s.json",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn synthesize_then_analyze() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    assert_eq!(
        code(&netsynth(
            &[
                "generate",
                "--n",
                "4",
                "--seed",
                "3",
                "--topology",
                "ring",
                "-o",
                "s.json"
            ],
            p
        )),
        0
    );
    for method in ["central", "decomposed"] {
        let o = netsynth(
            &["synthesize", "s.json", "--method", method, "-o", "r.json"],
            p,
        );
        assert_eq!(code(&o), 0, "{method}: {}", stderr(&o));
        let r: ResultJson =
            serde_json::from_str(&std::fs::read_to_string(p.join("r.json")).unwrap()).unwrap();
        assert_eq!(r.method, method);
        assert!(r.certificate.hinf <= r.certified_gamma * (1.0 + 1e-6));
        assert_eq!(r.gains.local.len(), 4);

        let a = netsynth(&["analyze", "s.json", "r.json"], p);
        assert_eq!(code(&a), 0, "{}", stderr(&a));
        let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
        assert_eq!(v["stable"], true);
        assert!(
            (v["hinf"].as_f64().unwrap() - r.certificate.hinf).abs() <= 1e-6 * r.certificate.hinf
        );
    }
}

#[test]
fn grouped_systems_run_the_compressed_methods() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    let g = netsynth(
        &[
            "generate", "--n", "6", "--seed", "2", "--model", "grouped", "--alpha", "2", "-o",
            "g.json",
        ],
        p,
    );
    assert_eq!(code(&g), 0, "{}", stderr(&g));
    let o = netsynth(
        &[
            "synthesize",
            "g.json",
            "--method",
            "alphabeta",
            "-o",
            "r.json",
        ],
        p,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: ResultJson =
        serde_json::from_str(&std::fs::read_to_string(p.join("r.json")).unwrap()).unwrap();
    assert_eq!(r.nominal_dims.len(), 2);
    assert_eq!(r.multiplier_dims.len(), 2);
    // Two groups are not one homogeneous network.
    assert_eq!(
        code(&netsynth(
            &[
                "synthesize",
                "g.json",
                "--method",
                "homogeneous",
                "-o",
                "h.json"
            ],
            p
        )),
        2
    );
}

#[test]
fn admm_on_the_benchmark_writes_a_trace() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    assert_eq!(
        code(&netsynth(
            &[
                "generate",
                "--n",
                "8",
                "--seed",
                "42",
                "--topology",
                "fig4",
                "-o",
                "s.json"
            ],
            p
        )),
        0
    );
    let o = netsynth(
        &["synthesize", "s.json", "--method", "admm", "-o", "r.json"],
        p,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: ResultJson =
        serde_json::from_str(&std::fs::read_to_string(p.join("r.json")).unwrap()).unwrap();
    let admm = r.admm.expect("admm summary");
    assert!(admm.converged);
    assert_eq!(admm.gamma_tilde.len(), 8);
    let trace = r.trace_file.expect("trace path");
    assert!(p.join(&trace).exists());

    let e = netsynth(&["export-plot", &trace, "-o", "trace.csv"], p);
    assert_eq!(code(&e), 0, "{}", stderr(&e));
    let csv = std::fs::read_to_string(p.join("trace.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("iteration,gamma_tilde_1,"));
    assert!(header.ends_with(",certified_gamma"));
    assert!(csv.lines().count() > 2);
}

#[test]
fn unstabilizable_plant_exits_with_one() {
    let dir = TempDir::new().unwrap();
    let (sys, topo) = unstabilizable_fixture();
    SystemFile::new(sys, topo)
        .save(&dir.path().join("u.json"))
        .unwrap();
    for method in ["central", "decomposed"] {
        let o = netsynth(
            &["synthesize", "u.json", "--method", method, "-o", "r.json"],
            dir.path(),
        );
        assert_eq!(code(&o), 1, "{method}: {}", stderr(&o));
        assert!(stderr(&o).contains("infeasible"));
    }
}

#[test]
fn malformed_input_exits_with_two() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{\"version\": 1, \"nodes\": ").unwrap();
    let o = netsynth(
        &[
            "synthesize",
            "bad.json",
            "--method",
            "central",
            "-o",
            "r.json",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("malformed json"));

    std::fs::write(
        dir.path().join("short.json"),
        r#"{"version": 1, "nodes": 1, "plant_edges": [], "subsystems": []}"#,
    )
    .unwrap();
    assert_eq!(
        code(&netsynth(
            &[
                "synthesize",
                "short.json",
                "--method",
                "central",
                "-o",
                "r.json"
            ],
            dir.path()
        )),
        2
    );
    assert_eq!(
        code(&netsynth(
            &[
                "synthesize",
                "missing.json",
                "--method",
                "central",
                "-o",
                "r.json"
            ],
            dir.path()
        )),
        2
    );
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&netsynth(&["synthesize"], dir.path())), 2);
    assert_eq!(
        code(&netsynth(
            &[
                "synthesize",
                "s.json",
                "--method",
                "simplex",
                "-o",
                "r.json"
            ],
            dir.path()
        )),
        2
    );
    assert_eq!(code(&netsynth(&["frobnicate"], dir.path())), 2);
}

#[test]
fn bench_sweeps_emit_csv() {
    let dir = TempDir::new().unwrap();
    let o = netsynth(
        &[
            "bench",
            "--sweep",
            "N",
            "--values",
            "2,4,8",
            "--methods",
            "central,decomposed,homogeneous,admm",
            "--topology",
            "complete",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let headers = rows.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let records: Vec<csv::StringRecord> = rows.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), 12);
    for r in &records {
        assert_eq!(r[col("nominal")], r[col("expected_nominal")]);
        assert_eq!(r[col("multiplier")], r[col("expected_multiplier")]);
    }

    let a = netsynth(
        &[
            "bench", "--sweep", "alpha", "--values", "1,2,3", "--n", "6", "--beta", "2", "-o",
            "a.csv",
        ],
        dir.path(),
    );
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(
        std::fs::read_to_string(dir.path().join("a.csv"))
            .unwrap()
            .lines()
            .count(),
        4
    );
}
