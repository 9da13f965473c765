//! Nearest-neighbour consensus ADMM for the decomposed synthesis conditions.
//!
//! Every subsystem is an agent owning a local variable vector `y_i`. The
//! vector holds the performance scalar `γ̃_i = γ^{-1/2}`, the auxiliary
//! `δ_i ≥ γ̃_i²`, the scaled dual Lyapunov block `W_i`, the gain variables
//! `Y_i`, the edge-gain variables of the channels agent `i` receives, and for
//! every neighbour `k` a copy of both multipliers `M_ik` and `M_ki`. In that
//! order it is also the canonical flattening (symmetric blocks as upper
//! triangles, column by column).
//!
//! The local conditions use the δ-scaled nominal condition, in which a smaller
//! `δ` is always easier. Agents that agree on the multipliers therefore jointly
//! certify `γ = 1 / min_i δ_i`, which is what makes the consensus on `γ̃`
//! sufficient.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    certify, ensure_stabilizable, Certification, EdgeMultiplier, LyapunovCertificate, Method,
    MultiplierSet, MultiplierStructure, ProgramStats, SynthesisOptions, SynthesisResult,
};
use crate::conditions::{
    closed_loop_link, declare_nominal_vars, dual_nominal, dual_pair_condition, recover_gain,
    subsystem_problems, MultVars, NominalVars, Perf, SubsystemProblem,
};
use crate::error::{Error, Result};
use crate::graph::{Edge, Topology};
use crate::linalg::Mat;
use crate::sdp::{solve, ConicProgram, Lmi, SolverOptions, Var};
use crate::sysmodel::{InterconnectedSystem, StaticGains};

/// Tunables of [`run`].
#[derive(Clone, Debug)]
pub struct AdmmConfig {
    pub rho: f64,
    /// Primal threshold; `1e-4 · sqrt(consensus dimension)` when absent.
    pub eps_pri: Option<f64>,
    /// Dual threshold; same default as `eps_pri`.
    pub eps_dual: Option<f64>,
    pub max_iter: usize,
    /// Rounds `D` of the convergence protocol; the diameter of the
    /// communication graph when absent.
    pub diameter: Option<usize>,
    pub parallel: bool,
    /// Tracks the explicit `u`, `v`, `t` variables of the two-step reduction.
    pub debug: bool,
    /// Certify the running iterate every this many rounds (0 disables).
    pub certify_every: usize,
    pub options: SynthesisOptions,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            eps_pri: None,
            eps_dual: None,
            max_iter: 3000,
            diameter: None,
            parallel: true,
            debug: false,
            certify_every: 50,
            options: SynthesisOptions::default(),
        }
    }
}

/// Positions of agent `i`'s variables inside `y_i`.
#[derive(Clone, Debug)]
pub struct LocalLayout {
    pub agent: usize,
    pub neighbors: Vec<usize>,
    pub gamma_tilde: Var,
    pub delta: Var,
    pub w: Var,
    pub y: Var,
    pub ye: Vec<Option<Var>>,
    /// `M_ik` per neighbour, the multiplier of the channel agent `i` receives.
    pub m_in: Vec<MultVars>,
    /// Agent `i`'s copy of `M_ki`.
    pub m_out: Vec<MultVars>,
    pub len: usize,
}

/// The entries of `y_i` shared with one neighbour (`E_ik` as an index map;
/// `T_ik` is the corresponding scatter).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Selection {
    pub neighbor: usize,
    pub idx: Vec<usize>,
}

impl Selection {
    pub fn gather(&self, y: &[f64]) -> Vec<f64> {
        self.idx.iter().map(|&j| y[j]).collect()
    }

    pub fn scatter_add(&self, target: &mut [f64], v: &[f64], scale: f64) {
        for (&j, &x) in self.idx.iter().zip(v) {
            target[j] += scale * x;
        }
    }
}

/// Shared entries per edge: `γ̃`, then the multipliers of the lower-indexed
/// endpoint's channel, then those of the other endpoint.
#[derive(Clone, Debug)]
pub struct ConsensusSelections {
    pub agents: Vec<Vec<Selection>>,
}

impl ConsensusSelections {
    pub fn new(layouts: &[LocalLayout]) -> Self {
        let agents = layouts
            .iter()
            .map(|l| {
                l.neighbors
                    .iter()
                    .enumerate()
                    .map(|(c, &k)| {
                        let (first, second) = if l.agent < k {
                            (&l.m_in[c], &l.m_out[c])
                        } else {
                            (&l.m_out[c], &l.m_in[c])
                        };
                        let mut idx = vec![l.gamma_tilde.offset];
                        for m in [first, second] {
                            idx.extend(m.q.indices());
                            idx.extend(m.s.indices());
                            idx.extend(m.r.indices());
                        }
                        Selection { neighbor: k, idx }
                    })
                    .collect()
            })
            .collect();
        Self { agents }
    }

    pub fn get(&self, i: usize, k: usize) -> Option<&Selection> {
        self.agents.get(i - 1)?.iter().find(|s| s.neighbor == k)
    }

    /// Length of the stacked residual over all ordered edges.
    pub fn consensus_dim(&self) -> usize {
        self.agents.iter().flatten().map(|s| s.idx.len()).sum()
    }
}

/// An agent's fixed local data: its constraint set and variable layout.
#[derive(Clone, Debug)]
pub struct Agent {
    pub layout: LocalLayout,
    pub program: ConicProgram,
}

impl Agent {
    /// Number of assembled nominal and edge conditions.
    pub fn stats(&self) -> ProgramStats {
        ProgramStats::from_program(&self.program)
    }
}

fn build_agent(
    sys: &InterconnectedSystem,
    topo_k: &Topology,
    problems: &[SubsystemProblem],
    pr: &SubsystemProblem,
    margin: f64,
) -> Agent {
    let i = pr.index;
    let mut p = ConicProgram::with_margin(margin);
    let gamma_tilde = p.scalar("gamma_tilde");
    let delta = p.scalar("delta");
    let (w, y, ye) = declare_nominal_vars(&mut p, &pr.spec, &i.to_string());
    let mut m_in = Vec::new();
    let mut m_out = Vec::new();
    for (c, &k) in pr.neighbors.iter().enumerate() {
        let ch = &pr.spec.channels[c];
        let nu = pr.spec.nu();
        m_in.push(MultVars::declare(
            &mut p,
            &format!("M{i}_{k}"),
            ch.np(nu),
            ch.nq(),
        ));
        let other = &problems[k - 1];
        let oc = &other.spec.channels[other
            .channel_of(i)
            .expect("communication graph is symmetric")];
        m_out.push(MultVars::declare(
            &mut p,
            &format!("M{k}_{i}"),
            oc.np(other.spec.nu()),
            oc.nq(),
        ));
    }

    let mut link = Lmi::new(2, "epigraph");
    link.add_var(0, 0, delta, 1.0);
    link.add_var(0, 1, gamma_tilde, 1.0);
    link.add_identity(1, 1, 1.0);
    p.add_psd_margin(link, 0.0);

    let mults = m_in
        .iter()
        .zip(&pr.spec.channels)
        .map(|(m, ch)| (!ch.is_empty(pr.spec.nu())).then_some(*m))
        .collect();
    let vars = NominalVars {
        w,
        y,
        ye: ye.clone(),
        mults,
    };
    p.add_nsd(dual_nominal(
        &pr.spec,
        &vars,
        Perf::Delta(delta),
        &format!("nominal{i}"),
    ));
    let mut lw = Lmi::new(pr.spec.nx(), format!("lyapunov{i}"));
    lw.add_var(0, 0, w, 1.0);
    p.add_psd(lw);
    for (c, &k) in pr.neighbors.iter().enumerate() {
        let p_ik = closed_loop_link(sys, topo_k, i, k);
        let p_ki = closed_loop_link(sys, topo_k, k, i);
        if let Some(l) = dual_pair_condition(
            &m_in[c],
            &m_out[c],
            &p_ik,
            &p_ki,
            &format!("multiplier{i}_{k}"),
        ) {
            p.add_nsd(l);
        }
    }
    let len = p.n_vars();
    Agent {
        layout: LocalLayout {
            agent: i,
            neighbors: pr.neighbors.clone(),
            gamma_tilde,
            delta,
            w,
            y,
            ye,
            m_in,
            m_out,
            len,
        },
        program: p,
    }
}

/// Builds all agents and their consensus selections.
pub fn build_agents(
    sys: &InterconnectedSystem,
    topo_k: &Topology,
    opts: &SynthesisOptions,
) -> Result<(Topology, Vec<Agent>, ConsensusSelections)> {
    let (comm, problems) = subsystem_problems(sys, topo_k)?;
    let agents: Vec<Agent> = problems
        .iter()
        .map(|pr| build_agent(sys, topo_k, &problems, pr, opts.margin))
        .collect();
    let layouts: Vec<LocalLayout> = agents.iter().map(|a| a.layout.clone()).collect();
    Ok((comm, agents, ConsensusSelections::new(&layouts)))
}

/// Mutable per-agent iteration state.
#[derive(Clone, Debug)]
pub struct AgentState {
    pub id: usize,
    pub y: Vec<f64>,
    pub prev_y: Vec<f64>,
    pub lambda: Vec<f64>,
    /// `E_ki y_k` received in the current round, by sender.
    pub inbox: BTreeMap<usize, Vec<f64>>,
    pub prev_inbox: BTreeMap<usize, Vec<f64>>,
    pub kappa: usize,
    pub r_local: f64,
    pub d_local: f64,
    pub converged: bool,
}

impl AgentState {
    pub fn new(id: usize, len: usize) -> Self {
        Self {
            id,
            y: vec![0.0; len],
            prev_y: vec![0.0; len],
            lambda: vec![0.0; len],
            inbox: BTreeMap::new(),
            prev_inbox: BTreeMap::new(),
            kappa: 0,
            r_local: 0.0,
            d_local: 0.0,
            converged: false,
        }
    }

    fn message(&self, k: usize) -> Result<&Vec<f64>> {
        self.inbox.get(&k).ok_or_else(|| {
            Error::Protocol(format!(
                "agent {} has no round-{} message from {k}",
                self.id, self.kappa
            ))
        })
    }
}

/// One payload on the bus.
#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub round: usize,
    pub from: usize,
    pub to: usize,
    pub payload: Vec<f64>,
}

/// Synchronous round buffer between agents.
#[derive(Clone, Debug, Default)]
pub struct MessageBus {
    pending: Vec<Message>,
    pub delivered: usize,
}

impl MessageBus {
    pub fn send(&mut self, m: Message) {
        self.pending.push(m);
    }

    /// Every agent broadcasts `E_ik y_i` to each neighbour.
    pub fn broadcast(&mut self, round: usize, states: &[AgentState], sel: &ConsensusSelections) {
        for (st, sels) in states.iter().zip(&sel.agents) {
            for s in sels {
                self.send(Message {
                    round,
                    from: st.id,
                    to: s.neighbor,
                    payload: s.gather(&st.y),
                });
            }
        }
    }

    /// Moves the pending round into the inboxes, checking that every agent
    /// got exactly one message per neighbour.
    pub fn deliver(
        &mut self,
        round: usize,
        states: &mut [AgentState],
        sel: &ConsensusSelections,
    ) -> Result<()> {
        let mut boxes: Vec<BTreeMap<usize, Vec<f64>>> = vec![BTreeMap::new(); states.len()];
        for m in self.pending.drain(..) {
            if m.round != round {
                return Err(Error::Protocol(format!(
                    "message from round {} delivered in round {round}",
                    m.round
                )));
            }
            let slot = boxes.get_mut(m.to - 1).ok_or(Error::NodeOutOfRange(m.to))?;
            if slot.insert(m.from, m.payload).is_some() {
                return Err(Error::Protocol(format!(
                    "agent {} sent twice to {} in round {round}",
                    m.from, m.to
                )));
            }
        }
        for ((st, sels), inbox) in states.iter_mut().zip(&sel.agents).zip(boxes) {
            if inbox.len() != sels.len() || sels.iter().any(|s| !inbox.contains_key(&s.neighbor)) {
                return Err(Error::Protocol(format!(
                    "agent {} is missing round-{round} messages",
                    st.id
                )));
            }
            self.delivered += inbox.len();
            st.prev_inbox = std::mem::replace(&mut st.inbox, inbox);
            st.kappa = round;
        }
        Ok(())
    }
}

/// `λ_i ← λ_i + ρ Σ_k T_ik (E_ik y_i − E_ki y_k)`.
pub fn dual_update(state: &mut AgentState, sels: &[Selection], rho: f64) -> Result<()> {
    for s in sels {
        let own = s.gather(&state.y);
        let other = state.message(s.neighbor)?;
        let diff: Vec<f64> = own.iter().zip(other).map(|(a, b)| a - b).collect();
        s.scatter_add(&mut state.lambda, &diff, rho);
    }
    Ok(())
}

/// Local conic program of round `κ+1`, solved from the state after the dual
/// update. Returns the new `y_i` and the solve time.
pub fn local_step(
    agent: &Agent,
    state: &AgentState,
    sels: &[Selection],
    rho: f64,
    n_agents: usize,
    solver: &SolverOptions,
) -> Result<(Vec<f64>, f64)> {
    let mut p = agent.program.clone();
    p.add_objective(agent.layout.gamma_tilde.offset, -1.0 / n_agents as f64);
    for (j, &l) in state.lambda.iter().enumerate() {
        if l != 0.0 {
            p.add_objective(j, l);
        }
    }
    for s in sels {
        let own = s.gather(&state.y);
        let other = state.message(s.neighbor)?;
        let center: Vec<f64> = own.iter().zip(other).map(|(a, b)| 0.5 * (a + b)).collect();
        p.add_prox(&s.idx, &center, rho);
    }
    // The prox term scales the objective by ρ, and with it the solver's
    // relative gap tolerance.
    let opts = SolverOptions {
        tol: solver.tol / rho.max(1.0),
        ..solver.clone()
    };
    let t0 = Instant::now();
    let sol = solve(&p, &opts).require_optimal().map_err(|e| match e {
        Error::Infeasible => Error::Precondition(format!(
            "local conditions of agent {} are infeasible",
            state.id
        )),
        e => e,
    })?;
    Ok((sol.x, t0.elapsed().as_secs_f64()))
}

/// Residual norms of the current round.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub r_norm: f64,
    pub d_norm: f64,
    /// `(edge, ‖r_ik‖, ‖d_ik‖)` per ordered edge.
    pub per_edge: Vec<(Edge, f64, f64)>,
}

/// `r_ik = E_ik y_i − E_ki y_k` and `d_ik = ½ (E_ik Δy_i + E_ki Δy_k)` over
/// all ordered edges, from the delivered messages. Also fills the per-agent
/// contributions.
pub fn residuals(states: &mut [AgentState], sel: &ConsensusSelections) -> Residuals {
    let mut out = Residuals::default();
    let (mut r2, mut d2) = (0.0, 0.0);
    for (st, sels) in states.iter_mut().zip(&sel.agents) {
        let (mut ri, mut di) = (0.0, 0.0);
        for s in sels {
            let own = s.gather(&st.y);
            let own_prev = s.gather(&st.prev_y);
            let (Some(other), Some(other_prev)) =
                (st.inbox.get(&s.neighbor), st.prev_inbox.get(&s.neighbor))
            else {
                continue;
            };
            let mut re = 0.0;
            let mut de = 0.0;
            for j in 0..own.len() {
                re += (own[j] - other[j]).powi(2);
                de += (0.5 * ((own[j] - own_prev[j]) + (other[j] - other_prev[j]))).powi(2);
            }
            out.per_edge
                .push(((st.id, s.neighbor), re.sqrt(), de.sqrt()));
            ri += re;
            di += de;
        }
        st.r_local = ri.sqrt();
        st.d_local = di.sqrt();
        r2 += ri;
        d2 += di;
    }
    out.r_norm = r2.sqrt();
    out.d_norm = d2.sqrt();
    out
}

/// Simulated flood of local convergence flags: an agent's streak is one more
/// than the smallest streak it heard of in the previous round, or zero when
/// its own flag is down. Convergence is declared once a streak exceeds `D`.
#[derive(Clone, Debug)]
pub struct ConvergenceProtocol {
    neighbors: Vec<Vec<usize>>,
    d: usize,
    streak: Vec<usize>,
    round: usize,
}

impl ConvergenceProtocol {
    pub fn new(comm: &Topology, d: usize) -> Result<Self> {
        let neighbors = (1..=comm.n_nodes())
            .map(|i| crate::graph::neighbors(comm, i))
            .collect::<Result<_>>()?;
        Ok(Self {
            neighbors,
            d,
            streak: vec![0; comm.n_nodes()],
            round: 0,
        })
    }

    /// Feeds one round of local flags; returns whether convergence is detected.
    pub fn step(&mut self, flags: &[bool]) -> bool {
        assert_eq!(flags.len(), self.streak.len());
        let prev = self.streak.clone();
        for (i, &f) in flags.iter().enumerate() {
            self.streak[i] = if f {
                1 + self.neighbors[i]
                    .iter()
                    .map(|&k| prev[k - 1])
                    .fold(prev[i], usize::min)
            } else {
                0
            };
        }
        self.round += 1;
        self.streak.iter().any(|&s| s > self.d)
    }

    pub fn streaks(&self) -> &[usize] {
        &self.streak
    }
}

/// Runs the protocol on a fixed sequence of flag rounds and returns the
/// (zero-based) round of detection.
pub fn convergence_protocol(
    comm: &Topology,
    d: usize,
    rounds: &[Vec<bool>],
) -> Result<Option<usize>> {
    let mut p = ConvergenceProtocol::new(comm, d)?;
    Ok(rounds.iter().position(|f| p.step(f)))
}

/// One iteration of the trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub gamma_tilde: Vec<f64>,
    pub r_norm: f64,
    pub d_norm: f64,
    pub solve_seconds: Vec<f64>,
    /// Certified bound of this iterate when it was checked and accepted.
    pub certified_gamma: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdmmTrace {
    pub rows: Vec<TraceRow>,
}

impl AdmmTrace {
    pub fn to_csv(&self) -> String {
        let n = self.rows.first().map_or(0, |r| r.gamma_tilde.len());
        let mut out = String::from("iteration");
        for i in 1..=n {
            out.push_str(&format!(",gamma_tilde_{i}"));
        }
        out.push_str(",r_norm,d_norm");
        for i in 1..=n {
            out.push_str(&format!(",solve_seconds_{i}"));
        }
        out.push_str(",certified_gamma\n");
        for r in &self.rows {
            out.push_str(&r.iteration.to_string());
            for g in &r.gamma_tilde {
                out.push_str(&format!(",{g:.12e}"));
            }
            out.push_str(&format!(",{:.12e},{:.12e}", r.r_norm, r.d_norm));
            for t in &r.solve_seconds {
                out.push_str(&format!(",{t:.6e}"));
            }
            match r.certified_gamma {
                Some(g) => out.push_str(&format!(",{g:.12e}\n")),
                None => out.push_str(",\n"),
            }
        }
        out
    }
}

/// Explicit two-step-reduction variables of one ordered edge.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EdgeDuals {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub t: Vec<f64>,
    /// `½ (E_ik y_i + E_ki y_k)` of the round.
    pub mean: Vec<f64>,
}

/// Per-round record of the debug variables, keyed by ordered edge.
#[derive(Clone, Debug, Default)]
pub struct DebugLog {
    pub rounds: Vec<BTreeMap<Edge, EdgeDuals>>,
    /// `λ_i` after each dual update.
    pub lambdas: Vec<Vec<Vec<f64>>>,
}

/// Full ADMM update of the split variables: `t` minimises the augmented
/// Lagrangian for the current `u`, `v`, then both duals ascend.
fn debug_round(
    prev: &BTreeMap<Edge, EdgeDuals>,
    states: &[AgentState],
    sel: &ConsensusSelections,
    rho: f64,
) -> BTreeMap<Edge, EdgeDuals> {
    let mut out = BTreeMap::new();
    for (st, sels) in states.iter().zip(&sel.agents) {
        for s in sels {
            let a = s.gather(&st.y);
            let b = &st.inbox[&s.neighbor];
            let old = prev
                .get(&(st.id, s.neighbor))
                .cloned()
                .unwrap_or_else(|| EdgeDuals {
                    u: vec![0.0; a.len()],
                    v: vec![0.0; a.len()],
                    t: vec![0.0; a.len()],
                    mean: vec![0.0; a.len()],
                });
            let t: Vec<f64> = (0..a.len())
                .map(|j| 0.5 * (a[j] + b[j]) + (old.u[j] + old.v[j]) / (2.0 * rho))
                .collect();
            let u = (0..a.len())
                .map(|j| old.u[j] + rho * (a[j] - t[j]))
                .collect();
            let v = (0..a.len())
                .map(|j| old.v[j] + rho * (b[j] - t[j]))
                .collect();
            let mean = (0..a.len()).map(|j| 0.5 * (a[j] + b[j])).collect();
            out.insert((st.id, s.neighbor), EdgeDuals { u, v, t, mean });
        }
    }
    out
}

/// Outcome of [`run`].
#[derive(Clone, Debug)]
pub struct AdmmRun {
    pub result: SynthesisResult,
    pub trace: AdmmTrace,
    pub converged: bool,
    /// Round at which the protocol detected convergence.
    pub detected_at: Option<usize>,
    /// Round whose iterate is reported.
    pub reported_iteration: usize,
    pub warning: Option<String>,
    pub debug: Option<DebugLog>,
    pub agent_stats: Vec<ProgramStats>,
    pub messages: usize,
    /// Agent states after the last round.
    pub final_states: Vec<AgentState>,
}

struct Candidate {
    iteration: usize,
    ys: Vec<Vec<f64>>,
    gamma: f64,
    certification: Certification,
}

fn consensus_gamma(agents: &[Agent], ys: &[Vec<f64>]) -> Option<f64> {
    let mut g: f64 = 0.0;
    for (a, y) in agents.iter().zip(ys) {
        let gt = a.layout.gamma_tilde.scalar_value(y);
        if gt <= 0.0 {
            return None;
        }
        g = g.max(1.0 / (gt * gt));
    }
    Some(g)
}

fn gains_of(agents: &[Agent], ys: &[Vec<f64>]) -> Result<StaticGains> {
    let mut local = Vec::with_capacity(agents.len());
    let mut edges = BTreeMap::new();
    for (a, y) in agents.iter().zip(ys) {
        let l = &a.layout;
        let w = l.w.value(y);
        local.push(recover_gain(&l.y.value(y), &w)?);
        for (c, &k) in l.neighbors.iter().enumerate() {
            if let Some(ye) = l.ye[c] {
                edges.insert((k, l.agent), recover_gain(&ye.value(y), &w)?);
            }
        }
    }
    Ok(StaticGains { local, edges })
}

fn try_certify(
    sys: &InterconnectedSystem,
    topo_k: &Topology,
    agents: &[Agent],
    ys: &[Vec<f64>],
    iteration: usize,
) -> Option<Candidate> {
    let gamma = consensus_gamma(agents, ys)?;
    let gains = gains_of(agents, ys).ok()?;
    let certification = certify(sys, &gains, topo_k, gamma).ok()?;
    Some(Candidate {
        iteration,
        ys: ys.to_vec(),
        gamma,
        certification,
    })
}

fn assemble_result(
    topo_k: &Topology,
    agents: &[Agent],
    c: &Candidate,
    stats: ProgramStats,
) -> Result<SynthesisResult> {
    let scale = c.gamma;
    let mut blocks = BTreeMap::new();
    for (a, y) in agents.iter().zip(&c.ys) {
        let l = &a.layout;
        for (cidx, &k) in l.neighbors.iter().enumerate() {
            let m = l.m_in[cidx];
            if m.len() == 0 {
                continue;
            }
            let other = &agents[k - 1];
            let oc = other.layout.channel(l.agent);
            let (q1, s1, r1) = m.values(y);
            let (q2, s2, r2) = other.layout.m_out[oc].values(&c.ys[k - 1]);
            let avg = |x: Mat, z: Mat| (x + z) * (0.5 * scale);
            blocks.insert(
                (l.agent, k),
                EdgeMultiplier {
                    q: avg(q1, q2),
                    s: avg(s1, s2),
                    r: avg(r1, r2),
                },
            );
        }
    }
    let order = blocks.keys().copied().collect();
    let lyapunov = LyapunovCertificate {
        blocks: agents
            .iter()
            .zip(&c.ys)
            .map(|(a, y)| a.layout.w.value(y) * scale)
            .collect(),
    };
    Ok(SynthesisResult {
        method: Method::Admm,
        gamma: c.gamma,
        gains: gains_of(agents, &c.ys)?,
        controller_topology: topo_k.clone(),
        lyapunov,
        multipliers: MultiplierSet {
            structure: MultiplierStructure::FullPerEdge,
            dual: true,
            blocks,
            order,
            classes: vec![],
        },
        stats,
        certification: c.certification.clone(),
    })
}

impl LocalLayout {
    /// Position of neighbour `k` in this agent's neighbour list.
    pub fn channel(&self, k: usize) -> usize {
        self.neighbors
            .iter()
            .position(|&n| n == k)
            .expect("neighbour exists")
    }
}

/// Distributed synthesis by consensus ADMM.
pub fn run(sys: &InterconnectedSystem, topo_k: &Topology, cfg: &AdmmConfig) -> Result<AdmmRun> {
    if cfg.rho <= 0.0 {
        return Err(Error::Precondition("ρ must be positive".into()));
    }
    ensure_stabilizable(sys)?;
    let (comm, agents, sel) = build_agents(sys, topo_k, &cfg.options)?;
    if !comm.is_connected() {
        return Err(Error::Topology(
            "communication graph is not connected".into(),
        ));
    }
    let n = agents.len();
    let default_eps = 1e-4 * (sel.consensus_dim().max(1) as f64).sqrt();
    let eps_pri = cfg.eps_pri.unwrap_or(default_eps);
    let eps_dual = cfg.eps_dual.unwrap_or(default_eps);
    let local_pri = eps_pri / (n as f64).sqrt();
    let local_dual = eps_dual / (n as f64).sqrt();
    let d = cfg.diameter.unwrap_or_else(|| comm.diameter());
    let mut protocol = ConvergenceProtocol::new(&comm, d)?;

    let mut states: Vec<AgentState> = agents
        .iter()
        .map(|a| AgentState::new(a.layout.agent, a.layout.len))
        .collect();
    let mut bus = MessageBus::default();
    let mut trace = AdmmTrace::default();
    let mut debug = cfg.debug.then(DebugLog::default);
    let mut duals: BTreeMap<Edge, EdgeDuals> = BTreeMap::new();
    let mut best: Option<Candidate> = None;
    let mut last_times = vec![0.0; n];
    let mut detected_at = None;
    let mut round = 0;
    let mut final_certified = false;

    loop {
        bus.broadcast(round, &states, &sel);
        bus.deliver(round, &mut states, &sel)?;
        if round > 0 {
            let res = residuals(&mut states, &sel);
            if let Some(log) = debug.as_mut() {
                duals = debug_round(&duals, &states, &sel, cfg.rho);
                log.rounds.push(duals.clone());
            }
            for st in states.iter_mut() {
                st.converged = st.r_local <= local_pri && st.d_local <= local_dual;
            }
            let flags: Vec<bool> = states.iter().map(|s| s.converged).collect();
            let detected = protocol.step(&flags);
            let ys: Vec<Vec<f64>> = states.iter().map(|s| s.y.clone()).collect();
            let mut certified_gamma = None;
            let due = cfg.certify_every > 0 && round % cfg.certify_every == 0;
            if detected || round == cfg.max_iter || due {
                let candidate = try_certify(sys, topo_k, &agents, &ys, round);
                final_certified = candidate.is_some();
                if let Some(c) = candidate {
                    let value = c.gamma.max(c.certification.analysis_gamma);
                    if best
                        .as_ref()
                        .is_none_or(|b| value < b.gamma.max(b.certification.analysis_gamma))
                    {
                        certified_gamma = Some(value);
                        best = Some(c);
                    }
                }
            }
            trace.rows.push(TraceRow {
                iteration: round,
                gamma_tilde: agents
                    .iter()
                    .zip(&ys)
                    .map(|(a, y)| a.layout.gamma_tilde.scalar_value(y))
                    .collect(),
                r_norm: res.r_norm,
                d_norm: res.d_norm,
                solve_seconds: last_times.clone(),
                certified_gamma,
            });
            if detected {
                detected_at = Some(round);
                break;
            }
            if round == cfg.max_iter {
                break;
            }
        }

        for (st, sels) in states.iter_mut().zip(&sel.agents) {
            dual_update(st, sels, cfg.rho)?;
        }
        if let Some(log) = debug.as_mut() {
            log.lambdas
                .push(states.iter().map(|s| s.lambda.clone()).collect());
        }
        let step = |(a, st): (&Agent, &AgentState)| {
            local_step(
                a,
                st,
                &sel.agents[a.layout.agent - 1],
                cfg.rho,
                n,
                &cfg.options.solver,
            )
        };
        let outs: Vec<Result<(Vec<f64>, f64)>> = if cfg.parallel {
            agents.par_iter().zip(states.par_iter()).map(step).collect()
        } else {
            agents.iter().zip(states.iter()).map(step).collect()
        };
        for ((st, out), t) in states.iter_mut().zip(outs).zip(last_times.iter_mut()) {
            let (y, secs) = out?;
            st.prev_y = std::mem::replace(&mut st.y, y);
            *t = secs;
        }
        round += 1;
    }

    let converged = detected_at.is_some();
    let mut stats = ProgramStats::default();
    let agent_stats: Vec<ProgramStats> = agents.iter().map(Agent::stats).collect();
    for s in &agent_stats {
        stats.nominal_dims.extend(&s.nominal_dims);
        stats.multiplier_dims.extend(&s.multiplier_dims);
        stats.n_vars += s.n_vars;
    }
    stats.solve_seconds = trace
        .rows
        .iter()
        .map(|r| r.solve_seconds.iter().sum::<f64>())
        .sum();

    let chosen =
        best.ok_or_else(|| Error::Certification("no ADMM iterate passed certification".into()))?;
    let mut warning = None;
    if !converged {
        warning = Some(format!(
            "ADMM did not converge in {} iterations; reporting iterate {}",
            cfg.max_iter, chosen.iteration
        ));
    } else if !final_certified {
        warning = Some(format!(
            "final iterate failed certification; reporting iterate {}",
            chosen.iteration
        ));
    }
    let result = assemble_result(topo_k, &agents, &chosen, stats)?;
    Ok(AdmmRun {
        result,
        trace,
        converged,
        detected_at,
        reported_iteration: chosen.iteration,
        warning,
        debug,
        agent_stats,
        messages: bus.delivered,
        final_states: states,
    })
}
