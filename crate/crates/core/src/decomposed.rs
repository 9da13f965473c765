//! Per-subsystem and per-edge synthesis conditions, the edge-pairing
//! permutation and the compressed forms of homogeneous and grouped
//! (α-β-heterogeneous) systems.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    certify, ensure_stabilizable, run_hetero, EdgeMultiplier, Layout, LyapunovCertificate, Method,
    MultiplierSet, MultiplierStructure, ProgramStats, SynthesisOptions, SynthesisResult,
};
use crate::conditions::{
    declare_nominal_vars, dual_nominal, recover_gain, ChannelSpec, MultVars, NominalSpec,
    NominalVars, Perf,
};
use crate::error::{Error, Result};
use crate::graph::{spectrum, Edge, PatternMatrix, Topology};
use crate::linalg::{blkdiag, eye, hcat, kron, vcat, zeros, Mat};
use crate::sdp::{solve, ConicProgram, Lmi, Var, VarKind};
use crate::sysmodel::{InterconnectedSystem, StateSpace, StaticGains};

/// Tolerance used to decide that two subsystem matrices coincide.
pub const STRUCTURE_TOL: f64 = 1e-10;
/// Eigenvalues closer than this are treated as one.
pub const EIG_CLUSTER_TOL: f64 = 1e-8;

/// Multiplier blocks of an edge pair `(i, k)`, `(k, i)` in primal form.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeCondition {
    pub edge: Edge,
    pub q_ik: Mat,
    pub s_ik: Mat,
    pub r_ik: Mat,
    pub q_ki: Mat,
    pub s_ki: Mat,
    pub r_ki: Mat,
    pub p_ik: Mat,
    pub p_ki: Mat,
}

impl EdgeCondition {
    pub fn validate(&self) -> Result<()> {
        let chk = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Dimension(format!("edge {:?}: {what}", self.edge)))
            }
        };
        let (np1, nq1) = (self.q_ik.nrows(), self.r_ik.nrows());
        let (np2, nq2) = (self.q_ki.nrows(), self.r_ki.nrows());
        chk(
            self.q_ik.is_square() && self.q_ki.is_square(),
            "Q blocks must be square",
        )?;
        chk(
            self.r_ik.is_square() && self.r_ki.is_square(),
            "R blocks must be square",
        )?;
        chk(
            self.s_ik.shape() == (np1, nq1) && self.s_ki.shape() == (np2, nq2),
            "S blocks have wrong shape",
        )?;
        chk(self.p_ik.shape() == (np1, nq2), "P_ik has wrong shape")?;
        chk(self.p_ki.shape() == (np2, nq1), "P_ki has wrong shape")
    }

    /// `𝒫̂ = [[0, P_ik], [P_ki, 0]]` mapping `[q_ik; q_ki]` to `[p_ik; p_ki]`.
    pub fn p_hat(&self) -> Mat {
        let (np1, np2) = (self.p_ik.nrows(), self.p_ki.nrows());
        let (nq1, nq2) = (self.r_ik.nrows(), self.r_ki.nrows());
        let mut m = zeros(np1 + np2, nq1 + nq2);
        m.view_mut((0, nq1), (np1, nq2)).copy_from(&self.p_ik);
        m.view_mut((np1, 0), (np2, nq1)).copy_from(&self.p_ki);
        m
    }

    pub fn q_hat(&self) -> Mat {
        blkdiag(&[&self.q_ik, &self.q_ki])
    }

    pub fn s_hat(&self) -> Mat {
        blkdiag(&[&self.s_ik, &self.s_ki])
    }

    pub fn r_hat(&self) -> Mat {
        blkdiag(&[&self.r_ik, &self.r_ki])
    }

    /// `[𝒫̂; I]' Π̂ [𝒫̂; I]` on `[q_ik; q_ki]`.
    pub fn hat_form(&self) -> Mat {
        let p = self.p_hat();
        let ps = p.transpose() * self.s_hat();
        p.transpose() * self.q_hat() * &p + &ps + ps.transpose() + self.r_hat()
    }

    /// The condition written on `[q_ki; q_ik]`, the signals that feed
    /// `p_ik` and `p_ki` respectively:
    /// `[[P_ik' Q_ik P_ik + R_ki, P_ik' S_ik + S_ki' P_ki], [*, P_ki' Q_ki P_ki + R_ik]]`.
    pub fn matrix(&self) -> Mat {
        let a = self.p_ik.transpose() * &self.q_ik * &self.p_ik + &self.r_ki;
        let b = self.p_ik.transpose() * &self.s_ik + self.s_ki.transpose() * &self.p_ki;
        let d = self.p_ki.transpose() * &self.q_ki * &self.p_ki + &self.r_ik;
        let (n1, n2) = (a.nrows(), d.nrows());
        let mut m = zeros(n1 + n2, n1 + n2);
        m.view_mut((0, 0), (n1, n1)).copy_from(&a);
        m.view_mut((0, n1), (n1, n2)).copy_from(&b);
        m.view_mut((n1, 0), (n2, n1)).copy_from(&b.transpose());
        m.view_mut((n1, n1), (n2, n2)).copy_from(&d);
        m
    }

    /// Smallest eigenvalue of [`EdgeCondition::matrix`] minus `margin`; the
    /// condition holds when this is nonnegative.
    pub fn slack(&self, margin: f64) -> f64 {
        crate::linalg::min_eig(&self.matrix()) - margin
    }
}

/// Edge condition under identity links:
/// `[[Q_ik + R_ki, S_ik + S_ki'], [S_ki + S_ik', Q_ki + R_ik]]`.
pub fn ideal_edge_condition(c: &EdgeCondition) -> Result<Mat> {
    c.validate()?;
    let is_id = |p: &Mat| p.is_square() && (p - eye(p.nrows())).norm() == 0.0;
    if !is_id(&c.p_ik) || !is_id(&c.p_ki) {
        return Err(Error::Precondition(format!(
            "edge {:?} has non-identity interconnection blocks",
            c.edge
        )));
    }
    let a = &c.q_ik + &c.r_ki;
    let b = &c.s_ik + c.s_ki.transpose();
    let d = &c.q_ki + &c.r_ik;
    let n = a.nrows();
    let mut m = zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&a);
    m.view_mut((0, n), (n, n)).copy_from(&b);
    m.view_mut((n, 0), (n, n)).copy_from(&b.transpose());
    m.view_mut((n, n), (n, n)).copy_from(&d);
    Ok(m)
}

/// Block order that places every channel `(i, k)` directly before its
/// reverse `(k, i)`. Entry `t` of the result is the original position of the
/// block that moves to position `t`. Pairs appear in the order of their first
/// channel in `edges`.
pub fn edge_pairing_permutation(edges: &[Edge]) -> Result<Vec<usize>> {
    let pos: BTreeMap<Edge, usize> = edges.iter().enumerate().map(|(n, &e)| (e, n)).collect();
    if pos.len() != edges.len() {
        return Err(Error::Topology("duplicate channel in the stacking".into()));
    }
    let mut placed = vec![false; edges.len()];
    let mut order = Vec::with_capacity(edges.len());
    for (n, &(i, k)) in edges.iter().enumerate() {
        if placed[n] {
            continue;
        }
        let m = *pos
            .get(&(k, i))
            .ok_or_else(|| Error::Topology(format!("edge ({i},{k}) has no reverse edge")))?;
        order.push(n);
        order.push(m);
        placed[n] = true;
        placed[m] = true;
    }
    Ok(order)
}

/// Permutation matrix `T` with `(T v)` block `t` equal to block `order[t]` of
/// `v`, for blocks of the given sizes.
pub fn permutation_matrix(order: &[usize], dims: &[usize]) -> Mat {
    let offs: Vec<usize> = dims
        .iter()
        .scan(0, |acc, &d| {
            let o = *acc;
            *acc += d;
            Some(o)
        })
        .collect();
    let total: usize = dims.iter().sum();
    let mut t = zeros(total, total);
    let mut row = 0;
    for &b in order {
        for r in 0..dims[b] {
            t[(row + r, offs[b] + r)] = 1.0;
        }
        row += dims[b];
    }
    t
}

/// Static state-feedback synthesis with one nominal condition per subsystem
/// and one multiplier condition per directed edge of the communication graph,
/// solved as a single program.
pub fn decomposed_synthesis_hetero(
    sys: &InterconnectedSystem,
    topo_k: &Topology,
    opts: &SynthesisOptions,
) -> Result<SynthesisResult> {
    run_hetero(sys, topo_k, opts, Layout::Decomposed, Method::Decomposed)
}

/// Grouping of subsystems and partition of the plant edges into
/// interconnection classes. Groups are contiguous index ranges.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDescriptor {
    pub group_sizes: Vec<usize>,
    pub classes: Vec<Vec<Edge>>,
}

impl ClassDescriptor {
    /// One group and one class holding every plant edge.
    pub fn homogeneous(topology: &Topology) -> Self {
        Self {
            group_sizes: vec![topology.n_nodes()],
            classes: vec![topology.edges().collect()],
        }
    }

    /// Every subsystem its own group, every plant edge its own class.
    pub fn fully_heterogeneous(topology: &Topology) -> Self {
        Self {
            group_sizes: vec![1; topology.n_nodes()],
            classes: topology.edges().map(|e| vec![e]).collect(),
        }
    }

    pub fn alpha(&self) -> usize {
        self.group_sizes.len()
    }

    pub fn beta(&self) -> usize {
        self.classes.len()
    }

    /// `Θ_0 = 0, Θ_l = N_1 + ... + N_l`.
    pub fn theta(&self) -> Vec<usize> {
        std::iter::once(0)
            .chain(self.group_sizes.iter().scan(0, |acc, &n| {
                *acc += n;
                Some(*acc)
            }))
            .collect()
    }

    /// Zero-based group of node `i`.
    pub fn group_of(&self, i: usize) -> usize {
        let th = self.theta();
        (0..self.alpha())
            .find(|&g| i > th[g] && i <= th[g + 1])
            .expect("node outside every group")
    }

    pub fn group_nodes(&self, g: usize) -> std::ops::RangeInclusive<usize> {
        let th = self.theta();
        th[g] + 1..=th[g + 1]
    }

    pub fn class_of(&self, e: Edge) -> Option<usize> {
        self.classes.iter().position(|c| c.contains(&e))
    }

    /// 0/1 pattern `Λ_j` of every class.
    pub fn patterns(&self, n: usize) -> Vec<Mat> {
        self.classes
            .iter()
            .map(|c| {
                let mut m = zeros(n, n);
                for &(i, k) in c {
                    m[(i - 1, k - 1)] = 1.0;
                }
                m
            })
            .collect()
    }

    pub fn validate(&self, topology: &Topology) -> Result<()> {
        let n = topology.n_nodes();
        if self.group_sizes.contains(&0) || self.group_sizes.iter().sum::<usize>() != n {
            return Err(Error::Structure(format!(
                "group sizes {:?} do not partition {n} subsystems",
                self.group_sizes
            )));
        }
        let mut seen = BTreeSet::new();
        for (j, c) in self.classes.iter().enumerate() {
            if c.is_empty() {
                return Err(Error::Structure(format!("class {} is empty", j + 1)));
            }
            for &e in c {
                if !topology.contains(e) {
                    return Err(Error::Structure(format!(
                        "class {} lists {e:?}, which is not a plant edge",
                        j + 1
                    )));
                }
                if !seen.insert(e) {
                    return Err(Error::Structure(format!(
                        "edge {e:?} belongs to more than one class"
                    )));
                }
            }
        }
        if let Some(e) = topology.edges().find(|e| !seen.contains(e)) {
            return Err(Error::Structure(format!("edge {e:?} belongs to no class")));
        }
        Ok(())
    }
}

/// Selection matrices `Z_j` (rows: plant edges in lexicographic order,
/// columns: subsystems) with a one where edge `(i, k)` of class `j` enters `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressionMap {
    pub edges: Vec<Edge>,
    pub z: Vec<Mat>,
}

impl CompressionMap {
    pub fn new(topology: &Topology, cls: &ClassDescriptor) -> Result<Self> {
        cls.validate(topology)?;
        let edges: Vec<Edge> = topology.edges().collect();
        let n = topology.n_nodes();
        let z = cls
            .classes
            .iter()
            .map(|c| {
                let mut m = zeros(edges.len(), n);
                for (r, e) in edges.iter().enumerate() {
                    if c.contains(e) {
                        m[(r, e.0 - 1)] = 1.0;
                    }
                }
                m
            })
            .collect();
        Ok(Self { edges, z })
    }

    /// `Z = [Z_1 ... Z_β]`.
    pub fn stacked(&self) -> Mat {
        hcat(self.edges.len(), &self.z.iter().collect::<Vec<_>>())
    }
}

/// Scalar edge interconnection matrix of a symmetric edge set: entry
/// `((i, k), (k, i))` is one, so that `p_ik = q_ki`.
pub fn edge_interconnection(edges: &[Edge]) -> Result<Mat> {
    let pos: BTreeMap<Edge, usize> = edges.iter().enumerate().map(|(n, &e)| (e, n)).collect();
    let mut m = zeros(edges.len(), edges.len());
    for (r, &(i, k)) in edges.iter().enumerate() {
        let c = *pos
            .get(&(k, i))
            .ok_or_else(|| Error::Topology(format!("edge ({i},{k}) has no reverse edge")))?;
        m[(r, c)] = 1.0;
    }
    Ok(m)
}

/// Interconnection data of one class as seen by one group.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassChannel {
    pub has_in: bool,
    pub has_out: bool,
    pub bp: Mat,
    pub dzp: Mat,
    pub cq: Mat,
    pub dqw: Mat,
}

/// Shared model of the subsystems of one group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupModel {
    pub nodes: Vec<usize>,
    pub a: Mat,
    pub bu: Mat,
    pub bw: Mat,
    pub cz: Mat,
    pub dzu: Mat,
    pub dzw: Mat,
    pub channels: Vec<ClassChannel>,
}

impl GroupModel {
    pub fn nx(&self) -> usize {
        self.a.nrows()
    }
}

/// One interconnection class of the compressed model.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassModel {
    pub edges: Vec<Edge>,
    pub pattern: Mat,
    /// Plant-side channel dimension `n_s`.
    pub ns: usize,
    /// Input dimension of the receiving subsystems.
    pub nu: usize,
    /// Subsystems with an incoming (resp. outgoing) signal of this class.
    pub p_nodes: Vec<usize>,
    pub q_nodes: Vec<usize>,
}

impl ClassModel {
    /// Closed-loop channel dimension `n_s + n_u`.
    pub fn dim(&self) -> usize {
        self.ns + self.nu
    }

    /// `Λ_j` restricted to receiving rows and sending columns.
    pub fn restricted_pattern(&self) -> Mat {
        Mat::from_fn(self.p_nodes.len(), self.q_nodes.len(), |a, b| {
            self.pattern[(self.p_nodes[a] - 1, self.q_nodes[b] - 1)]
        })
    }
}

/// Interconnected system rewritten with one summed channel per class and
/// subsystem and interconnection matrix `diag_j(Λ_j ⊗ I)`.
#[derive(Clone, Debug)]
pub struct CompressedSystem {
    pub source: InterconnectedSystem,
    pub descriptor: ClassDescriptor,
    pub groups: Vec<GroupModel>,
    pub classes: Vec<ClassModel>,
    pub map: CompressionMap,
}

/// Gains of a compressed controller: one local gain per group and one edge
/// gain per (sending group, class).
#[derive(Clone, Debug, PartialEq)]
pub struct CompressedGains {
    pub local: Vec<Mat>,
    pub edges: BTreeMap<(usize, usize), Mat>,
}

fn same(a: &Mat, b: &Mat) -> bool {
    a.shape() == b.shape() && (a - b).amax() <= STRUCTURE_TOL
}

/// Rewrites a system with identity links and `E^K = E^G` in the grouped form
/// given by `cls`.
pub fn compress(
    sys: &InterconnectedSystem,
    topo_k: &Topology,
    cls: &ClassDescriptor,
) -> Result<CompressedSystem> {
    sys.check_state_feedback_scope()?;
    if *topo_k != sys.topology {
        return Err(Error::Precondition(
            "compressed forms require the controller topology to equal the plant topology".into(),
        ));
    }
    if !sys.is_ideal() {
        return Err(Error::Precondition(
            "compressed forms require identity interconnection blocks".into(),
        ));
    }
    let map = CompressionMap::new(&sys.topology, cls)?;
    let n = sys.n();
    let beta = cls.beta();

    let mut groups = Vec::with_capacity(cls.alpha());
    for g in 0..cls.alpha() {
        let nodes: Vec<usize> = cls.group_nodes(g).collect();
        let s0 = sys.sub(nodes[0]);
        for &i in &nodes[1..] {
            let s = sys.sub(i);
            let ok = same(&s.a, &s0.a)
                && same(&s.bu, &s0.bu)
                && same(&s.bw, &s0.bw)
                && same(&s.cz, &s0.cz)
                && same(&s.dzu, &s0.dzu)
                && same(&s.dzw, &s0.dzw);
            if !ok {
                return Err(Error::Structure(format!(
                    "subsystems {} and {i} of group {} differ",
                    nodes[0],
                    g + 1
                )));
            }
        }
        let channels = (0..beta)
            .map(|_| ClassChannel {
                has_in: false,
                has_out: false,
                bp: zeros(s0.nx(), 0),
                dzp: zeros(s0.nz(), 0),
                cq: zeros(0, s0.nx()),
                dqw: zeros(0, s0.nw()),
            })
            .collect();
        groups.push(GroupModel {
            nodes,
            a: s0.a.clone(),
            bu: s0.bu.clone(),
            bw: s0.bw.clone(),
            cz: s0.cz.clone(),
            dzu: s0.dzu.clone(),
            dzw: s0.dzw.clone(),
            channels,
        });
    }

    let patterns = cls.patterns(n);
    let mut classes = Vec::with_capacity(beta);
    for (j, edges) in cls.classes.iter().enumerate() {
        let mut ns = None;
        let mut nu = None;
        let mut p_set = BTreeSet::new();
        let mut q_set = BTreeSet::new();
        for &(i, k) in edges {
            let input = sys.sub(i).input(k).expect("validated plant edge");
            let output = sys.sub(k).output(i).expect("validated plant edge");
            let d = input.dim();
            if *ns.get_or_insert(d) != d {
                return Err(Error::Structure(format!(
                    "class {} mixes channel dimensions",
                    j + 1
                )));
            }
            let u = sys.sub(i).nu();
            if *nu.get_or_insert(u) != u {
                return Err(Error::Structure(format!(
                    "class {} has receivers with different input dimensions",
                    j + 1
                )));
            }
            let (gi, gk) = (cls.group_of(i), cls.group_of(k));
            let ch = &mut groups[gi].channels[j];
            if ch.has_in {
                if !same(&ch.bp, &input.bp) || !same(&ch.dzp, &input.dzp) {
                    return Err(Error::Structure(format!(
                        "edge ({i},{k}) breaks the input structure of class {}",
                        j + 1
                    )));
                }
            } else {
                ch.has_in = true;
                ch.bp = input.bp.clone();
                ch.dzp = input.dzp.clone();
            }
            let ch = &mut groups[gk].channels[j];
            if ch.has_out {
                if !same(&ch.cq, &output.cq) || !same(&ch.dqw, &output.dqw) {
                    return Err(Error::Structure(format!(
                        "edge ({i},{k}) breaks the output structure of class {}",
                        j + 1
                    )));
                }
            } else {
                ch.has_out = true;
                ch.cq = output.cq.clone();
                ch.dqw = output.dqw.clone();
            }
            p_set.insert(gi);
            q_set.insert(gk);
        }
        let expand = |set: &BTreeSet<usize>| -> Vec<usize> {
            set.iter().flat_map(|&g| cls.group_nodes(g)).collect()
        };
        classes.push(ClassModel {
            edges: edges.clone(),
            pattern: patterns[j].clone(),
            ns: ns.unwrap_or(0),
            nu: nu.unwrap_or(0),
            p_nodes: expand(&p_set),
            q_nodes: expand(&q_set),
        });
    }
    Ok(CompressedSystem {
        source: sys.clone(),
        descriptor: cls.clone(),
        groups,
        classes,
        map,
    })
}

/// Homogeneous form `Λ ⊗ I` with one summed channel per subsystem.
pub fn compress_homogeneous(
    sys: &InterconnectedSystem,
    topo_k: &Topology,
) -> Result<CompressedSystem> {
    compress(sys, topo_k, &ClassDescriptor::homogeneous(&sys.topology))
}

impl CompressedSystem {
    pub fn n(&self) -> usize {
        self.source.n()
    }

    /// Per-edge gains of the original system: `D_ik` is the edge gain of the
    /// sending group of `k` in the class of `(i, k)`.
    pub fn expand_gains(&self, g: &CompressedGains) -> StaticGains {
        let cls = &self.descriptor;
        let local = (1..=self.n())
            .map(|i| g.local[cls.group_of(i)].clone())
            .collect();
        let edges = self
            .source
            .topology
            .edges()
            .map(|(i, k)| {
                let j = cls.class_of((i, k)).expect("validated class map");
                ((i, k), g.edges[&(cls.group_of(k), j)].clone())
            })
            .collect();
        StaticGains { local, edges }
    }

    /// Closed loop of the compressed model under compressed gains, built
    /// directly from `diag_j(Λ_j ⊗ I)` without per-edge channels.
    pub fn closed_loop(&self, g: &CompressedGains) -> StateSpace {
        let cls = &self.descriptor;
        let n = self.n();
        let grp = |i: usize| &self.groups[cls.group_of(i)];
        let a_blocks: Vec<Mat> = (1..=n)
            .map(|i| &grp(i).a + &grp(i).bu * &g.local[cls.group_of(i)])
            .collect();
        let b1_blocks: Vec<Mat> = (1..=n).map(|i| grp(i).bw.clone()).collect();
        let c1_blocks: Vec<Mat> = (1..=n)
            .map(|i| &grp(i).cz + &grp(i).dzu * &g.local[cls.group_of(i)])
            .collect();
        let d11_blocks: Vec<Mat> = (1..=n).map(|i| grp(i).dzw.clone()).collect();
        let refs = |v: &[Mat]| -> Mat { blkdiag(&v.iter().collect::<Vec<_>>()) };
        let (a, b1, c1, d11) = (
            refs(&a_blocks),
            refs(&b1_blocks),
            refs(&c1_blocks),
            refs(&d11_blocks),
        );
        let nx_off: Vec<usize> = (0..=n)
            .map(|i| (1..=i).map(|m| grp(m).nx()).sum())
            .collect();
        let nw_off: Vec<usize> = (0..=n)
            .map(|i| (1..=i).map(|m| grp(m).bw.ncols()).sum())
            .collect();
        let nz_off: Vec<usize> = (0..=n)
            .map(|i| (1..=i).map(|m| grp(m).cz.nrows()).sum())
            .collect();

        let np: usize = self.classes.iter().map(|c| c.p_nodes.len() * c.dim()).sum();
        let nq: usize = self.classes.iter().map(|c| c.q_nodes.len() * c.dim()).sum();
        let mut b2 = zeros(a.nrows(), np);
        let mut d12 = zeros(c1.nrows(), np);
        let mut c2 = zeros(nq, a.ncols());
        let mut d21 = zeros(nq, b1.ncols());
        let mut pm = Vec::new();
        let (mut op, mut oq) = (0, 0);
        for (j, c) in self.classes.iter().enumerate() {
            let d = c.dim();
            for &i in &c.p_nodes {
                let ch = &grp(i).channels[j];
                let bcol = hcat(grp(i).nx(), &[&ch.bp, &grp(i).bu]);
                let dcol = hcat(grp(i).cz.nrows(), &[&ch.dzp, &grp(i).dzu]);
                b2.view_mut((nx_off[i - 1], op), (bcol.nrows(), d))
                    .copy_from(&bcol);
                d12.view_mut((nz_off[i - 1], op), (dcol.nrows(), d))
                    .copy_from(&dcol);
                op += d;
            }
            for &k in &c.q_nodes {
                let ch = &grp(k).channels[j];
                let crow = vcat(grp(k).nx(), &[&ch.cq, &g.edges[&(cls.group_of(k), j)]]);
                let drow = vcat(
                    grp(k).bw.ncols(),
                    &[&ch.dqw, &zeros(c.nu, grp(k).bw.ncols())],
                );
                c2.view_mut((oq, nx_off[k - 1]), (d, crow.ncols()))
                    .copy_from(&crow);
                d21.view_mut((oq, nw_off[k - 1]), (d, drow.ncols()))
                    .copy_from(&drow);
                oq += d;
            }
            pm.push(kron(&c.restricted_pattern(), &eye(d)));
        }
        let p = blkdiag(&pm.iter().collect::<Vec<_>>());
        StateSpace {
            a: &a + &b2 * &p * &c2,
            b: &b1 + &b2 * &p * &d21,
            c: &c1 + &d12 * &p * &c2,
            d: &d11 + &d12 * &p * &d21,
        }
    }
}

/// How the per-class multiplier conditions are instantiated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MultiplierPath {
    /// Eigenvalue conditions where every pattern allows them, otherwise the
    /// full Kronecker condition.
    #[default]
    Auto,
    /// Conditions at the eigenvalues of each (normal) class pattern.
    Eigen,
    /// The full condition `diag(I ⊗ Π̃_j)` on `Λ_j ⊗ I`.
    Kronecker,
}

/// A compressed synthesis program together with its variables.
pub struct CompressedProgram {
    pub program: ConicProgram,
    pub gamma: Var,
    pub vars: Vec<NominalVars>,
    pub specs: Vec<NominalSpec>,
    /// Class of every channel of every group nominal condition.
    pub channel_class: Vec<Vec<usize>>,
    pub class_mults: Vec<MultVars>,
}

fn empty_sym() -> Var {
    Var {
        offset: 0,
        kind: VarKind::Sym(0),
    }
}

fn empty_mat(r: usize, c: usize) -> Var {
    Var {
        offset: 0,
        kind: VarKind::Mat(r, c),
    }
}

/// Dual multiplier condition of class `j` on the stacked incoming signals,
/// `I ⊗ Q̃ - He((I ⊗ S̃)(Λ_r' ⊗ I)) + (Λ_r ⊗ I)(I ⊗ R̃)(Λ_r' ⊗ I)`, where `S̃`
/// only couples subsystems that both receive and send in this class. The
/// caller requires it `< 0`.
pub fn kronecker_condition(c: &ClassModel, m: &MultVars, label: &str) -> Lmi {
    let d = c.dim();
    let lr = c.restricted_pattern();
    let (np, nq) = (c.p_nodes.len(), c.q_nodes.len());
    let mut l = Lmi::new(np * d, label);
    let id = eye(d);
    for a in 0..np {
        l.add_var(a * d, a * d, m.q, 1.0);
    }
    for b in 0..nq {
        let col = kron(
            &Mat::from_column_slice(lr.nrows(), 1, lr.column(b).as_slice()),
            &id,
        );
        if col.amax() > 0.0 {
            l.add(0, 0, &col, m.r, &col.transpose(), 1.0);
        }
    }
    for (a, &i) in c.p_nodes.iter().enumerate() {
        if let Some(b) = c.q_nodes.iter().position(|&k| k == i) {
            let mut left = zeros(np * d, d);
            left.view_mut((a * d, 0), (d, d)).copy_from(&id);
            let right = kron(
                &Mat::from_column_slice(lr.nrows(), 1, lr.column(b).as_slice()),
                &id,
            )
            .transpose();
            if right.amax() > 0.0 {
                l.add_he(0, &left, m.s, &right, -1.0);
            }
        }
    }
    l
}

/// Dual multiplier condition at one eigenvalue `λ = a + ib`:
/// `Q̃ - λ̄ S̃ - λ S̃' + |λ|² R̃ < 0`, realified when `b ≠ 0`.
fn eigen_condition(m: &MultVars, d: usize, lam: num_complex::Complex64, label: &str) -> Lmi {
    let (a, b) = (lam.re, lam.im);
    let id = eye(d);
    if b.abs() <= EIG_CLUSTER_TOL {
        let mut l = Lmi::new(d, label);
        l.add_var(0, 0, m.q, 1.0);
        l.add_he(0, &id, m.s, &id, -a);
        l.add_var(0, 0, m.r, a * a);
        return l;
    }
    let mut l = Lmi::new(2 * d, label);
    for o in [0, d] {
        l.add_var(o, o, m.q, 1.0);
        l.add_he(o, &id, m.s, &id, -a);
        l.add_var(o, o, m.r, a * a + b * b);
    }
    l.add(d, 0, &id, m.s, &id, b);
    l.add(0, d, &id, m.s, &id, -b);
    l
}

/// Eigenvalues at which the condition of a class is instantiated, and
/// whether the curvature constraint `R̃ ⪰ 0` is needed.
pub fn eigen_points(c: &ClassModel) -> Result<(Vec<num_complex::Complex64>, bool)> {
    if c.p_nodes != c.q_nodes {
        return Err(Error::Precondition(
            "eigenvalue conditions need every subsystem of the class to both send and receive"
                .into(),
        ));
    }
    let lr = c.restricted_pattern();
    let sp = spectrum(&PatternMatrix {
        n: lr.nrows(),
        entries: lr,
    });
    if !sp.normal {
        return Err(Error::Precondition(
            "interconnection pattern is not normal".into(),
        ));
    }
    let distinct = sp.distinct(EIG_CLUSTER_TOL);
    if sp.is_real(EIG_CLUSTER_TOL) {
        let re = |z: &num_complex::Complex64| z.re;
        let lo = distinct.iter().map(re).fold(f64::INFINITY, f64::min);
        let hi = distinct.iter().map(re).fold(f64::NEG_INFINITY, f64::max);
        if distinct.len() <= 2 {
            return Ok((
                distinct
                    .iter()
                    .map(|z| num_complex::Complex64::new(z.re, 0.0))
                    .collect(),
                false,
            ));
        }
        return Ok((
            vec![
                num_complex::Complex64::new(hi, 0.0),
                num_complex::Complex64::new(lo, 0.0),
            ],
            true,
        ));
    }
    Ok((
        distinct
            .into_iter()
            .filter(|z| z.im >= -EIG_CLUSTER_TOL)
            .collect(),
        false,
    ))
}

/// Assembles the synthesis program of a compressed system: one nominal
/// condition per group and the per-class multiplier conditions.
pub fn compressed_program(
    cs: &CompressedSystem,
    opts: &SynthesisOptions,
    path: MultiplierPath,
) -> Result<CompressedProgram> {
    let mut p = ConicProgram::with_margin(opts.margin);
    let gamma = p.scalar("gamma");
    let class_mults: Vec<MultVars> = cs
        .classes
        .iter()
        .enumerate()
        .map(|(j, c)| MultVars::declare(&mut p, &format!("C{}", j + 1), c.dim(), c.dim()))
        .collect();

    let mut vars = Vec::new();
    let mut specs = Vec::new();
    let mut channel_class = Vec::new();
    for (g, grp) in cs.groups.iter().enumerate() {
        let mut channels = Vec::new();
        let mut views = Vec::new();
        let mut cc = Vec::new();
        for (j, ch) in grp.channels.iter().enumerate() {
            if !ch.has_in && !ch.has_out {
                continue;
            }
            let c = &cs.classes[j];
            let m = class_mults[j];
            let npc = if ch.has_in { c.dim() } else { 0 };
            let nqc = if ch.has_out { c.dim() } else { 0 };
            views.push(Some(MultVars {
                q: if ch.has_in { m.q } else { empty_sym() },
                s: if ch.has_in && ch.has_out {
                    m.s
                } else {
                    empty_mat(npc, nqc)
                },
                r: if ch.has_out { m.r } else { empty_sym() },
            }));
            channels.push(ChannelSpec {
                bp: ch.bp.clone(),
                dzp: ch.dzp.clone(),
                cq: ch.cq.clone(),
                dqw: ch.dqw.clone(),
                ctrl_in: ch.has_in,
                ctrl_out: if ch.has_out { c.nu } else { 0 },
            });
            cc.push(j);
        }
        let spec = NominalSpec {
            a: grp.a.clone(),
            bu: grp.bu.clone(),
            bw: grp.bw.clone(),
            cz: grp.cz.clone(),
            dzu: grp.dzu.clone(),
            dzw: grp.dzw.clone(),
            channels,
        };
        let (w, y, ye) = declare_nominal_vars(&mut p, &spec, &format!("g{}", g + 1));
        let v = NominalVars {
            w,
            y,
            ye,
            mults: views,
        };
        p.add_nsd(dual_nominal(
            &spec,
            &v,
            Perf::Gamma(gamma),
            &format!("nominal{}", g + 1),
        ));
        let mut lw = Lmi::new(spec.nx(), format!("lyapunov{}", g + 1));
        lw.add_var(0, 0, w, 1.0);
        p.add_psd(lw);
        vars.push(v);
        specs.push(spec);
        channel_class.push(cc);
    }

    for (j, c) in cs.classes.iter().enumerate() {
        let m = &class_mults[j];
        let eig = match path {
            MultiplierPath::Kronecker => None,
            MultiplierPath::Eigen => Some(eigen_points(c)?),
            MultiplierPath::Auto => eigen_points(c).ok(),
        };
        match eig {
            None => p.add_nsd(kronecker_condition(c, m, &format!("multiplier{}", j + 1))),
            Some((points, curvature)) => {
                for (l, lam) in points.iter().enumerate() {
                    p.add_nsd(eigen_condition(
                        m,
                        c.dim(),
                        *lam,
                        &format!("multiplier{}.{}", j + 1, l + 1),
                    ));
                }
                if curvature {
                    let mut lr = Lmi::new(c.dim(), format!("curvature{}", j + 1));
                    lr.add_var(0, 0, m.r, 1.0);
                    p.add_psd_margin(lr, 0.0);
                }
            }
        }
    }
    p.add_objective(gamma.offset, 1.0);
    Ok(CompressedProgram {
        program: p,
        gamma,
        vars,
        specs,
        channel_class,
        class_mults,
    })
}

impl CompressedProgram {
    /// Group gains `Y W^{-1}` and edge gains `Ye W^{-1}` at a solution.
    pub fn gains(&self, x: &[f64]) -> Result<CompressedGains> {
        let mut local = Vec::new();
        let mut edges = BTreeMap::new();
        for (g, v) in self.vars.iter().enumerate() {
            let w = v.w.value(x);
            local.push(recover_gain(&v.y.value(x), &w)?);
            for (c, &j) in self.channel_class[g].iter().enumerate() {
                if let Some(ye) = v.ye[c] {
                    edges.insert((g, j), recover_gain(&ye.value(x), &w)?);
                }
            }
        }
        Ok(CompressedGains { local, edges })
    }
}

fn synthesize_compressed(
    cs: &CompressedSystem,
    opts: &SynthesisOptions,
    path: MultiplierPath,
    method: Method,
) -> Result<SynthesisResult> {
    let cp = compressed_program(cs, opts, path)?;
    let t0 = Instant::now();
    let sol = solve(&cp.program, &opts.solver).require_optimal()?;
    let mut stats = ProgramStats::from_program(&cp.program);
    stats.solve_seconds = t0.elapsed().as_secs_f64();
    let x = &sol.x;
    let gamma = cp.gamma.scalar_value(x);
    let cg = cp.gains(x)?;
    let gains = cs.expand_gains(&cg);
    let topo_k = cs.source.topology.clone();
    let certification = certify(&cs.source, &gains, &topo_k, gamma)?;
    let cls = &cs.descriptor;
    let lyapunov = LyapunovCertificate {
        blocks: (1..=cs.n())
            .map(|i| cp.vars[cls.group_of(i)].w.value(x))
            .collect(),
    };
    let class_map = cls
        .classes
        .iter()
        .enumerate()
        .flat_map(|(j, es)| es.iter().map(move |&e| (e, j)))
        .collect();
    let classes = cp
        .class_mults
        .iter()
        .map(|m| {
            let (q, s, r) = m.values(x);
            EdgeMultiplier { q, s, r }
        })
        .collect();
    Ok(SynthesisResult {
        method,
        gamma,
        gains,
        controller_topology: topo_k,
        lyapunov,
        multipliers: MultiplierSet {
            structure: MultiplierStructure::PerClass(class_map),
            dual: true,
            blocks: BTreeMap::new(),
            order: vec![],
            classes,
        },
        stats,
        certification,
    })
}

/// Homogeneous synthesis on the compressed form: one nominal condition and
/// the multiplier condition at the spectrum of the (normal) pattern.
pub fn decomposed_synthesis_homogeneous(
    cs: &CompressedSystem,
    opts: &SynthesisOptions,
) -> Result<SynthesisResult> {
    if cs.descriptor.alpha() != 1 || cs.descriptor.beta() != 1 {
        return Err(Error::Precondition(
            "homogeneous synthesis needs a single group and a single class".into(),
        ));
    }
    synthesize_compressed(cs, opts, MultiplierPath::Eigen, Method::Homogeneous)
}

/// Grouped synthesis: one nominal condition per group and per-class
/// multiplier conditions.
pub fn decomposed_synthesis_alphabeta(
    sys: &InterconnectedSystem,
    topo_k: &Topology,
    cls: &ClassDescriptor,
    opts: &SynthesisOptions,
    path: MultiplierPath,
) -> Result<SynthesisResult> {
    ensure_stabilizable(sys)?;
    let cs = compress(sys, topo_k, cls)?;
    synthesize_compressed(&cs, opts, path, Method::AlphaBeta)
}
