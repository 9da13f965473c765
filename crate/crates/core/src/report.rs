//! Condition and variable bookkeeping per synthesis method, checked against
//! closed-form counts, plus the instance families used by the scaling sweeps.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::admm::{build_agents, local_step, AgentState, MessageBus};
use crate::analysis::{hetero_program, Layout, Method, ProgramStats, SynthesisOptions};
use crate::decomposed::{
    compress, compress_homogeneous, compressed_program, decomposed_synthesis_alphabeta,
    decomposed_synthesis_hetero, decomposed_synthesis_homogeneous, ClassDescriptor, MultiplierPath,
};
use crate::error::{Error, Result};
use crate::generator::{generate_msd, grouped_system, MsdConfig, RandomDims};
use crate::graph::{neighbors, symmetrize, Edge, Topology};
use crate::sysmodel::InterconnectedSystem;

/// A plant, its controller topology and, for grouped methods, its classes.
#[derive(Clone, Debug)]
pub struct Instance {
    pub system: InterconnectedSystem,
    pub controller_topology: Topology,
    pub classes: Option<ClassDescriptor>,
}

impl Instance {
    fn classes(&self) -> Result<&ClassDescriptor> {
        self.classes
            .as_ref()
            .ok_or_else(|| Error::Precondition("grouped synthesis needs a class descriptor".into()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct AgentCount {
    pub agent: usize,
    pub nominal: usize,
    pub multiplier: usize,
    pub neighbors: usize,
    pub n_vars: usize,
}

/// Instrumented sizes of one method on one instance.
#[derive(Clone, Debug)]
pub struct ScalingReport {
    pub method: Method,
    pub n: usize,
    /// Directed edges of the symmetrized communication graph.
    pub comm_edges: usize,
    pub alpha: usize,
    pub beta: usize,
    pub nominal_dims: Vec<usize>,
    pub multiplier_dims: Vec<usize>,
    pub expected_nominal: usize,
    pub expected_multiplier: usize,
    /// Expected size of the single central nominal condition.
    pub expected_nominal_dim: Option<usize>,
    pub per_agent: Vec<AgentCount>,
    pub n_vars: usize,
    /// Solve time; for ADMM the wall time of one round of local solves.
    pub solve_seconds: Option<f64>,
    pub gamma: Option<f64>,
}

/// Flat record for CSV output.
#[derive(Clone, Debug, Serialize)]
pub struct ScalingRow {
    pub method: &'static str,
    pub n: usize,
    pub comm_edges: usize,
    pub alpha: usize,
    pub beta: usize,
    pub nominal: usize,
    pub multiplier: usize,
    pub expected_nominal: usize,
    pub expected_multiplier: usize,
    pub max_nominal_dim: usize,
    pub max_multiplier_dim: usize,
    pub n_vars: usize,
    pub solve_seconds: Option<f64>,
    pub gamma: Option<f64>,
}

impl ScalingReport {
    pub fn nominal(&self) -> usize {
        self.nominal_dims.len()
    }

    pub fn multiplier(&self) -> usize {
        self.multiplier_dims.len()
    }

    /// Fails with a structure error when any instrumented count differs
    /// from its closed form.
    pub fn check(&self) -> Result<()> {
        let name = self.method.name();
        if self.nominal() != self.expected_nominal || self.multiplier() != self.expected_multiplier
        {
            return Err(Error::Structure(format!(
                "{name}: assembled {} + {} conditions, expected {} + {}",
                self.nominal(),
                self.multiplier(),
                self.expected_nominal,
                self.expected_multiplier
            )));
        }
        if let Some(d) = self.expected_nominal_dim {
            if self.nominal_dims != [d] {
                return Err(Error::Structure(format!(
                    "{name}: nominal sizes {:?}, expected [{d}]",
                    self.nominal_dims
                )));
            }
        }
        for a in &self.per_agent {
            if a.nominal != 1 || a.multiplier != a.neighbors {
                return Err(Error::Structure(format!(
                    "{name}: agent {} assembles {} + {} conditions with {} neighbours",
                    a.agent, a.nominal, a.multiplier, a.neighbors
                )));
            }
        }
        Ok(())
    }

    pub fn row(&self) -> ScalingRow {
        ScalingRow {
            method: self.method.name(),
            n: self.n,
            comm_edges: self.comm_edges,
            alpha: self.alpha,
            beta: self.beta,
            nominal: self.nominal(),
            multiplier: self.multiplier(),
            expected_nominal: self.expected_nominal,
            expected_multiplier: self.expected_multiplier,
            max_nominal_dim: self.nominal_dims.iter().copied().max().unwrap_or(0),
            max_multiplier_dim: self.multiplier_dims.iter().copied().max().unwrap_or(0),
            n_vars: self.n_vars,
            solve_seconds: self.solve_seconds,
            gamma: self.gamma,
        }
    }
}

/// Assembles the conditions of `method` on `inst`, counts them and compares
/// the counts with their closed forms. With `solve`, also times the solve.
pub fn scaling_report(method: Method, inst: &Instance, solve: bool) -> Result<ScalingReport> {
    let sys = &inst.system;
    let topo_k = &inst.controller_topology;
    let opts = SynthesisOptions::default();
    let n = sys.n();
    let comm = symmetrize(&sys.topology.union(topo_k)?);
    let mut report = ScalingReport {
        method,
        n,
        comm_edges: comm.n_edges(),
        alpha: n,
        beta: sys.topology.n_edges(),
        nominal_dims: vec![],
        multiplier_dims: vec![],
        expected_nominal: 0,
        expected_multiplier: 0,
        expected_nominal_dim: None,
        per_agent: vec![],
        n_vars: 0,
        solve_seconds: None,
        gamma: None,
    };
    let fill = |r: &mut ScalingReport, s: ProgramStats| {
        r.nominal_dims = s.nominal_dims;
        r.multiplier_dims = s.multiplier_dims;
        r.n_vars = s.n_vars;
    };
    match method {
        Method::Central => {
            let hp = hetero_program(sys, topo_k, &opts, Layout::Central)?;
            let per_node = hetero_program(sys, topo_k, &opts, Layout::Decomposed)?;
            fill(&mut report, ProgramStats::from_program(&hp.program));
            report.expected_nominal = 1;
            report.expected_multiplier = usize::from(comm.n_edges() > 0);
            report.expected_nominal_dim = Some(
                ProgramStats::from_program(&per_node.program)
                    .nominal_dims
                    .iter()
                    .sum(),
            );
            if solve {
                let r = crate::analysis::hinf_state_feedback_central(sys, topo_k, &opts)?;
                report.solve_seconds = Some(r.stats.solve_seconds);
                report.gamma = Some(r.gamma);
            }
        }
        Method::Decomposed => {
            let hp = hetero_program(sys, topo_k, &opts, Layout::Decomposed)?;
            fill(&mut report, ProgramStats::from_program(&hp.program));
            report.expected_nominal = n;
            report.expected_multiplier = comm.n_edges();
            if solve {
                let r = decomposed_synthesis_hetero(sys, topo_k, &opts)?;
                report.solve_seconds = Some(r.stats.solve_seconds);
                report.gamma = Some(r.gamma);
            }
        }
        Method::Homogeneous => {
            let cs = compress_homogeneous(sys, topo_k)?;
            let cp = compressed_program(&cs, &opts, MultiplierPath::Eigen)?;
            fill(&mut report, ProgramStats::from_program(&cp.program));
            (report.alpha, report.beta) = (1, 1);
            report.expected_nominal = 1;
            report.expected_multiplier = 2;
            if solve {
                let r = decomposed_synthesis_homogeneous(&cs, &opts)?;
                report.solve_seconds = Some(r.stats.solve_seconds);
                report.gamma = Some(r.gamma);
            }
        }
        Method::AlphaBeta => {
            let cls = inst.classes()?;
            let cs = compress(sys, topo_k, cls)?;
            let cp = compressed_program(&cs, &opts, MultiplierPath::Auto)?;
            fill(&mut report, ProgramStats::from_program(&cp.program));
            (report.alpha, report.beta) = (cls.alpha(), cls.beta());
            report.expected_nominal = cls.alpha();
            report.expected_multiplier = 2 * cls.beta();
            if solve {
                let r =
                    decomposed_synthesis_alphabeta(sys, topo_k, cls, &opts, MultiplierPath::Auto)?;
                report.solve_seconds = Some(r.stats.solve_seconds);
                report.gamma = Some(r.gamma);
            }
        }
        Method::Admm => {
            let (comm, agents, sels) = build_agents(sys, topo_k, &opts)?;
            for a in &agents {
                let s = a.stats();
                report.per_agent.push(AgentCount {
                    agent: a.layout.agent,
                    nominal: s.n_nominal(),
                    multiplier: s.n_multiplier(),
                    neighbors: neighbors(&comm, a.layout.agent)?.len(),
                    n_vars: s.n_vars,
                });
                report.nominal_dims.extend(s.nominal_dims);
                report.multiplier_dims.extend(s.multiplier_dims);
                report.n_vars += s.n_vars;
            }
            report.expected_nominal = n;
            report.expected_multiplier = report.per_agent.iter().map(|a| a.neighbors).sum();
            if solve {
                let mut states: Vec<AgentState> = agents
                    .iter()
                    .map(|a| AgentState::new(a.layout.agent, a.layout.len))
                    .collect();
                let mut bus = MessageBus::default();
                bus.broadcast(0, &states, &sels);
                bus.deliver(0, &mut states, &sels)?;
                let t0 = Instant::now();
                agents
                    .par_iter()
                    .zip(&states)
                    .map(|(a, st)| {
                        local_step(
                            a,
                            st,
                            &sels.agents[a.layout.agent - 1],
                            1.0,
                            n,
                            &opts.solver,
                        )
                        .map(|_| ())
                    })
                    .collect::<Result<Vec<()>>>()?;
                report.solve_seconds = Some(t0.elapsed().as_secs_f64());
            }
        }
    }
    report.check()?;
    Ok(report)
}

/// Graph families of the command line and the sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TopologyKind {
    Ring,
    Complete,
    Path,
    Fig4,
}

impl std::str::FromStr for TopologyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ring" => Ok(Self::Ring),
            "complete" => Ok(Self::Complete),
            "path" => Ok(Self::Path),
            "fig4" => Ok(Self::Fig4),
            _ => Err(Error::Precondition(format!(
                "unknown topology '{s}' (ring, complete, path, fig4)"
            ))),
        }
    }
}

impl TopologyKind {
    pub fn build(self, n: usize) -> Result<Topology> {
        match self {
            Self::Ring => Topology::ring(n),
            Self::Complete => Topology::complete(n),
            Self::Path => Topology::path(n),
            Self::Fig4 if n == 8 => Ok(crate::generator::fig4_topology()),
            Self::Fig4 => Err(Error::Precondition(format!(
                "the fig4 topology has 8 nodes, not {n}"
            ))),
        }
    }
}

/// Node `i` is coupled in both directions to the `k` nearest nodes on each
/// side along a cycle.
pub fn circulant(n: usize, k: usize) -> Result<Topology> {
    if n < 2 || k == 0 || 2 * k >= n + 1 {
        return Err(Error::Topology(format!(
            "circulant({n}, {k}) needs 1 <= k and 2k <= n"
        )));
    }
    let mut edges = std::collections::BTreeSet::new();
    for i in 0..n {
        for s in 1..=k {
            let j = (i + s) % n;
            edges.insert((i + 1, j + 1));
            edges.insert((j + 1, i + 1));
        }
    }
    Topology::new(n, edges)
}

/// Splits `n` nodes into `alpha` contiguous groups of near-equal size.
pub fn even_groups(n: usize, alpha: usize) -> Result<Vec<usize>> {
    if alpha == 0 || alpha > n {
        return Err(Error::Precondition(format!(
            "cannot split {n} subsystems into {alpha} groups"
        )));
    }
    Ok((0..alpha)
        .map(|g| n / alpha + usize::from(g < n % alpha))
        .collect())
}

/// Two classes on an even ring: the edges `{2m-1, 2m}` and the remaining ones.
pub fn ring_matching_classes(n: usize) -> Result<Vec<Vec<Edge>>> {
    if n < 4 || n % 2 == 1 {
        return Err(Error::Precondition(format!(
            "alternating matchings need an even ring with n >= 4, got {n}"
        )));
    }
    let ring = Topology::ring(n)?;
    let in_first = |(i, k): Edge| i.min(k) % 2 == 1 && i.max(k) == i.min(k) + 1;
    let (a, b): (Vec<Edge>, Vec<Edge>) = ring.edges().partition(|&e| in_first(e));
    Ok(vec![a, b])
}

fn sweep_dims() -> RandomDims {
    RandomDims {
        nx: (2, 2),
        nu: (1, 1),
        nw: (1, 1),
        nz: (2, 2),
        ns: (2, 2),
    }
}

/// Seeded mass-spring-damper network with `E^K = E^G`.
pub fn msd_instance(topology: Topology, seed: u64) -> Result<Instance> {
    let system = generate_msd(&MsdConfig::new(topology.clone(), seed))?;
    Ok(Instance {
        system,
        controller_topology: topology,
        classes: None,
    })
}

/// Grouped random system with second-order subsystems.
pub fn grouped_instance(topology: Topology, cls: ClassDescriptor, seed: u64) -> Result<Instance> {
    let system = grouped_system(&topology, &cls, seed, sweep_dims())?;
    Ok(Instance {
        system,
        controller_topology: topology,
        classes: Some(cls),
    })
}

/// The instance a method is benchmarked on: MSD networks for the methods
/// that accept heterogeneous subsystems, grouped systems otherwise.
pub fn instance_for(
    method: Method,
    topology: Topology,
    alpha: usize,
    seed: u64,
) -> Result<Instance> {
    match method {
        Method::Homogeneous => grouped_instance(
            topology.clone(),
            ClassDescriptor::homogeneous(&topology),
            seed,
        ),
        Method::AlphaBeta => {
            let n = topology.n_nodes();
            let cls = ClassDescriptor {
                group_sizes: even_groups(n, alpha)?,
                classes: vec![topology.edges().collect()],
            };
            grouped_instance(topology, cls, seed)
        }
        _ => msd_instance(topology, seed),
    }
}

/// Reports over network sizes.
pub fn sweep_n(
    methods: &[Method],
    sizes: &[usize],
    kind: TopologyKind,
    seed: u64,
    solve: bool,
) -> Result<Vec<ScalingReport>> {
    let mut out = Vec::new();
    for &n in sizes {
        for &m in methods {
            out.push(scaling_report(
                m,
                &instance_for(m, kind.build(n)?, 1, seed)?,
                solve,
            )?);
        }
    }
    Ok(out)
}

/// Grouped reports over the number of groups, with one class when `beta`
/// is 1 and alternating ring matchings when it is 2.
pub fn sweep_alpha(
    alphas: &[usize],
    n: usize,
    beta: usize,
    kind: TopologyKind,
    seed: u64,
    solve: bool,
) -> Result<Vec<ScalingReport>> {
    let topology = kind.build(n)?;
    let classes = match beta {
        1 => vec![topology.edges().collect()],
        2 if kind == TopologyKind::Ring => ring_matching_classes(n)?,
        _ => {
            return Err(Error::Precondition(format!(
                "no class family with beta = {beta} on {kind:?}"
            )))
        }
    };
    alphas
        .iter()
        .map(|&a| {
            let cls = ClassDescriptor {
                group_sizes: even_groups(n, a)?,
                classes: classes.clone(),
            };
            scaling_report(
                Method::AlphaBeta,
                &grouped_instance(topology.clone(), cls, seed)?,
                solve,
            )
        })
        .collect()
}

/// Reports over the neighbourhood size on circulant graphs.
pub fn sweep_neighbors(
    methods: &[Method],
    n: usize,
    ks: &[usize],
    seed: u64,
    solve: bool,
) -> Result<Vec<ScalingReport>> {
    let mut out = Vec::new();
    for &k in ks {
        for &m in methods {
            out.push(scaling_report(
                m,
                &instance_for(m, circulant(n, k)?, 1, seed)?,
                solve,
            )?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::fig4_fixture;

    #[test]
    fn benchmark_decomposed_is_eight_plus_eighteen() {
        let (system, t) = fig4_fixture();
        let inst = Instance {
            system,
            controller_topology: t,
            classes: None,
        };
        let r = scaling_report(Method::Decomposed, &inst, false).unwrap();
        assert_eq!((r.nominal(), r.multiplier()), (8, 18));
    }

    #[test]
    fn homogeneous_ring_of_ten() {
        let r = scaling_report(
            Method::Homogeneous,
            &instance_for(Method::Homogeneous, Topology::ring(10).unwrap(), 1, 0).unwrap(),
            false,
        )
        .unwrap();
        assert_eq!((r.nominal(), r.multiplier()), (1, 2));
    }

    #[test]
    fn three_groups_two_classes() {
        let r = sweep_alpha(&[3], 6, 2, TopologyKind::Ring, 4, false).unwrap();
        assert_eq!((r[0].nominal(), r[0].multiplier()), (3, 4));
    }

    #[test]
    fn mismatch_is_reported() {
        let (system, t) = fig4_fixture();
        let inst = Instance {
            system,
            controller_topology: t,
            classes: None,
        };
        let mut r = scaling_report(Method::Central, &inst, false).unwrap();
        r.expected_multiplier = 2;
        assert!(matches!(r.check(), Err(Error::Structure(_))));
    }

    #[test]
    fn circulant_degrees() {
        let t = circulant(7, 2).unwrap();
        assert_eq!(t.n_edges(), 28);
        assert_eq!(neighbors(&t, 1).unwrap(), vec![2, 3, 6, 7]);
        assert!(circulant(4, 3).is_err());
    }

    #[test]
    fn matchings_partition_the_ring() {
        let c = ring_matching_classes(6).unwrap();
        assert_eq!(c[0], vec![(1, 2), (2, 1), (3, 4), (4, 3), (5, 6), (6, 5)]);
        assert_eq!(c[0].len() + c[1].len(), 12);
    }

    #[test]
    fn groups_are_balanced() {
        assert_eq!(even_groups(8, 3).unwrap(), vec![3, 3, 2]);
        assert!(even_groups(2, 3).is_err());
    }
}
