use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use netsynth::admm::{self, AdmmConfig, AdmmTrace};
use netsynth::analysis::{
    h2_norm, hinf_norm, hinf_state_feedback_central, Method, MultiplierStructure, SynthesisOptions,
};
use netsynth::decomposed::{
    compress_homogeneous, decomposed_synthesis_alphabeta, decomposed_synthesis_hetero,
    decomposed_synthesis_homogeneous, ClassDescriptor, MultiplierPath,
};
use netsynth::generator::{generate_msd, grouped_system, MsdConfig, RandomDims};
use netsynth::graph::Topology;
use netsynth::io::{read_json, write_json, AdmmSummaryJson, GainsFile, ResultJson, SystemFile};
use netsynth::report::{even_groups, sweep_alpha, sweep_n, sweep_neighbors, TopologyKind};
use netsynth::sysmodel::{close_loop, flatten};
use netsynth::Error;

#[derive(Parser)]
#[command(
    name = "netsynth",
    version,
    about = "Distributed H∞ state-feedback synthesis for networked systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded example system as JSON.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "ring")]
        topology: String,
        /// `msd` for mass-spring-damper networks, `grouped` for random
        /// systems made of `--alpha` groups of identical subsystems.
        #[arg(long, value_enum, default_value_t = Model::Msd)]
        model: Model,
        #[arg(long, default_value_t = 1)]
        alpha: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Synthesize static state-feedback gains for a system file.
    Synthesize {
        system: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(short, long)]
        output: PathBuf,
        /// ADMM trace file (JSON); defaults to `<output>.trace.json`.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = StructureArg::Full)]
        structure: StructureArg,
        #[arg(long, value_enum, default_value_t = PathArg::Auto)]
        path: PathArg,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, default_value_t = 3000)]
        max_iter: usize,
        /// Absolute residual thresholds for ADMM.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Close the loop with the gains of a result file and report its norms.
    Analyze { system: PathBuf, gains: PathBuf },
    /// Condition counts and solve times as CSV.
    Bench {
        #[arg(long, value_enum)]
        sweep: Sweep,
        /// Network sizes, group counts or neighbourhood radii.
        #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
        values: Vec<usize>,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "central,decomposed,homogeneous,admm"
        )]
        methods: Vec<MethodArg>,
        #[arg(long, default_value = "ring")]
        topology: String,
        /// Network size for the alpha and neighbors sweeps.
        #[arg(long, default_value_t = 12)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        beta: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also solve each program and report its time.
        #[arg(long)]
        solve: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Convert an ADMM trace to CSV.
    ExportPlot {
        trace: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Msd,
    Grouped,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Central,
    Decomposed,
    Homogeneous,
    Alphabeta,
    Admm,
}

impl MethodArg {
    fn method(self) -> Method {
        match self {
            Self::Central => Method::Central,
            Self::Decomposed => Method::Decomposed,
            Self::Homogeneous => Method::Homogeneous,
            Self::Alphabeta => Method::AlphaBeta,
            Self::Admm => Method::Admm,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StructureArg {
    Full,
    Identical,
    Diagonal,
}

#[derive(Clone, Copy, ValueEnum)]
enum PathArg {
    Auto,
    Eigen,
    Kronecker,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sweep {
    #[value(name = "N", alias = "n")]
    N,
    Alpha,
    Neighbors,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible => 1,
        Error::Numerical(_) | Error::Certification(_) | Error::Protocol(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("netsynth: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cmd: Command) -> netsynth::Result<()> {
    match cmd {
        Command::Generate {
            n,
            seed,
            topology,
            model,
            alpha,
            output,
        } => generate(n, seed, &topology, model, alpha, &output),
        Command::Synthesize {
            system,
            method,
            output,
            trace,
            structure,
            path,
            rho,
            max_iter,
            eps,
        } => {
            let opts = SynthesisOptions {
                structure: match structure {
                    StructureArg::Full => MultiplierStructure::FullPerEdge,
                    StructureArg::Identical => MultiplierStructure::IdenticalAcrossEdges,
                    StructureArg::Diagonal => MultiplierStructure::Diagonal,
                },
                ..Default::default()
            };
            let path = match path {
                PathArg::Auto => MultiplierPath::Auto,
                PathArg::Eigen => MultiplierPath::Eigen,
                PathArg::Kronecker => MultiplierPath::Kronecker,
            };
            let file = SystemFile::load(&system)?;
            let admm_cfg = AdmmConfig {
                rho,
                max_iter,
                eps_pri: eps,
                eps_dual: eps,
                options: opts.clone(),
                ..Default::default()
            };
            synthesize(
                &file,
                method.method(),
                &opts,
                path,
                admm_cfg,
                &output,
                trace,
            )
        }
        Command::Analyze { system, gains } => analyze(&system, &gains),
        Command::Bench {
            sweep,
            values,
            methods,
            topology,
            n,
            beta,
            seed,
            solve,
            output,
        } => {
            let kind: TopologyKind = topology.parse()?;
            let methods: Vec<Method> = methods.iter().map(|m| m.method()).collect();
            let reports = match sweep {
                Sweep::N => sweep_n(&methods, &values, kind, seed, solve)?,
                Sweep::Alpha => sweep_alpha(&values, n, beta, kind, seed, solve)?,
                Sweep::Neighbors => sweep_neighbors(&methods, n, &values, seed, solve)?,
            };
            let sink: Box<dyn std::io::Write> = match output {
                Some(p) => Box::new(std::fs::File::create(p)?),
                None => Box::new(std::io::stdout()),
            };
            let mut w = csv::Writer::from_writer(sink);
            for r in &reports {
                w.serialize(r.row()).map_err(|e| Error::Io(e.into()))?;
            }
            w.flush()?;
            Ok(())
        }
        Command::ExportPlot { trace, output } => {
            let t: AdmmTrace = read_json(&trace)?;
            match output {
                Some(p) => std::fs::write(p, t.to_csv())?,
                None => print!("{}", t.to_csv()),
            }
            Ok(())
        }
    }
}

fn generate(
    n: usize,
    seed: u64,
    topology: &str,
    model: Model,
    alpha: usize,
    output: &Path,
) -> netsynth::Result<()> {
    let topo = topology.parse::<TopologyKind>()?.build(n)?;
    let file = match model {
        Model::Msd => SystemFile::new(generate_msd(&MsdConfig::new(topo.clone(), seed))?, topo),
        Model::Grouped => {
            let cls = ClassDescriptor {
                group_sizes: even_groups(n, alpha)?,
                classes: vec![topo.edges().collect()],
            };
            let dims = RandomDims {
                nx: (2, 2),
                nu: (1, 1),
                nw: (1, 1),
                nz: (2, 2),
                ns: (2, 2),
            };
            let mut f = SystemFile::new(grouped_system(&topo, &cls, seed, dims)?, topo);
            f.classes = Some(cls);
            f
        }
    };
    file.save(output)
}

fn synthesize(
    file: &SystemFile,
    method: Method,
    opts: &SynthesisOptions,
    path: MultiplierPath,
    admm_cfg: AdmmConfig,
    output: &Path,
    trace: Option<PathBuf>,
) -> netsynth::Result<()> {
    let sys = &file.system;
    let topo_k = &file.controller_topology;
    let classes = || {
        file.classes
            .as_ref()
            .ok_or_else(|| Error::Precondition("the system file has no classes".into()))
    };
    let json = match method {
        Method::Central => {
            ResultJson::from_result(&hinf_state_feedback_central(sys, topo_k, opts)?)
        }
        Method::Decomposed => {
            ResultJson::from_result(&decomposed_synthesis_hetero(sys, topo_k, opts)?)
        }
        Method::Homogeneous => ResultJson::from_result(&decomposed_synthesis_homogeneous(
            &compress_homogeneous(sys, topo_k)?,
            opts,
        )?),
        Method::AlphaBeta => ResultJson::from_result(&decomposed_synthesis_alphabeta(
            sys,
            topo_k,
            classes()?,
            opts,
            path,
        )?),
        Method::Admm => {
            let run = admm::run(sys, topo_k, &admm_cfg)?;
            if let Some(w) = &run.warning {
                eprintln!("netsynth: warning: {w}");
            }
            let trace_path = trace.unwrap_or_else(|| output.with_extension("trace.json"));
            write_json(&trace_path, &run.trace)?;
            let mut j = ResultJson::from_result(&run.result);
            j.trace_file = Some(trace_path.display().to_string());
            j.admm = Some(AdmmSummaryJson {
                converged: run.converged,
                iterations: run.reported_iteration,
                detected_at: run.detected_at,
                gamma_tilde: run
                    .trace
                    .rows
                    .iter()
                    .find(|r| r.iteration == run.reported_iteration)
                    .map_or(vec![], |r| r.gamma_tilde.clone()),
                warning: run.warning.clone(),
            });
            j
        }
    };
    write_json(output, &json)?;
    println!(
        "{} gamma = {:.9} (certified {:.9}, H∞ {:.9})",
        json.method, json.gamma, json.certified_gamma, json.certificate.hinf
    );
    Ok(())
}

fn analyze(system: &Path, gains: &Path) -> netsynth::Result<()> {
    let file = SystemFile::load(system)?;
    let g: GainsFile = read_json(gains)?;
    let topo_k = match &g.controller_edges {
        Some(e) => Topology::edge_set(file.system.n(), e.iter().copied())?,
        None => file.controller_topology.clone(),
    };
    let ctrl = g.gains.to_gains()?.to_controller(&file.system, &topo_k)?;
    let flat = flatten(&close_loop(&file.system, &ctrl)?)?;
    let report = serde_json::json!({
        "hinf": hinf_norm(&flat, 1e-9),
        "h2": h2_norm(&flat),
        "spectral_abscissa": flat.spectral_abscissa(),
        "stable": flat.is_stable(),
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
