//! LMI building blocks shared by the synthesis routines.
//!
//! Static state feedback is synthesized on the dual form of the full-block
//! S-procedure: with `W = X^{-1}` and the dual multiplier `(Q̃, S̃, R̃)` the
//! per-subsystem nominal condition reads, in block rows `[x, z, q, w]`,
//!
//! ```text
//! [ He(A W + Bu Y) - B2 Q̃ B2'   *                      *     *   ]
//! [ Cz W + Dzu Y - D12 Q̃ B2'    -γI - D12 Q̃ D12'       *     *   ]
//! [ C2 W + S̃' B2'                S̃' D12'               -R̃    *   ]  < 0
//! [ Bw'                          Dzw'                   D21'  -γI ]
//! ```
//!
//! where `Y = D W` and the edge-gain rows of `C2 W` are free variables
//! `Y_ki = D_ki W_i`. The dual multiplier condition per edge pair is
//! `[I; -P']' Π̃ [I; -P'] < 0` restricted to `[p_ik; p_ki]`.

use std::collections::BTreeMap;

use crate::analysis::MultiplierStructure;
use crate::error::{Error, Result};
use crate::graph::{neighbors, symmetrize, Edge, Topology};
use crate::linalg::{blkdiag, eye, hcat, vcat, zeros, Mat};
use crate::sdp::{ConicProgram, Lmi, Var};
use crate::sysmodel::InterconnectedSystem;

/// Decision variables of one channel multiplier block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MultVars {
    pub q: Var,
    pub s: Var,
    pub r: Var,
}

impl MultVars {
    pub fn declare(p: &mut ConicProgram, name: &str, np: usize, nq: usize) -> Self {
        Self {
            q: p.sym(&format!("{name}.Q"), np),
            s: p.mat(&format!("{name}.S"), np, nq),
            r: p.sym(&format!("{name}.R"), nq),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.q.shape().0, self.r.shape().0)
    }

    pub fn values(&self, x: &[f64]) -> (Mat, Mat, Mat) {
        (self.q.value(x), self.s.value(x), self.r.value(x))
    }

    pub fn len(&self) -> usize {
        self.q.len() + self.s.len() + self.r.len()
    }
}

/// Declares multiplier variables for the given `(edge, n_p, n_q)` channels,
/// sharing or restricting them as dictated by the structure tag.
pub fn alloc_multipliers(
    p: &mut ConicProgram,
    channels: &[(Edge, usize, usize)],
    structure: &MultiplierStructure,
    prefix: &str,
) -> Result<BTreeMap<Edge, MultVars>> {
    let mut out = BTreeMap::new();
    let mut shared: BTreeMap<usize, MultVars> = BTreeMap::new();
    for &(e, np, nq) in channels {
        let group = match structure {
            MultiplierStructure::FullPerEdge | MultiplierStructure::Diagonal => None,
            MultiplierStructure::IdenticalAcrossEdges => Some(0),
            MultiplierStructure::PerClass(map) => Some(*map.get(&e).ok_or_else(|| {
                Error::Structure(format!("channel {e:?} has no multiplier class"))
            })?),
        };
        let vars = match group {
            None => MultVars::declare(p, &format!("{prefix}{}{}", e.0, e.1), np, nq),
            Some(g) => match shared.get(&g) {
                Some(v) => {
                    if v.dims() != (np, nq) {
                        return Err(Error::Structure(format!(
                            "channel {e:?} has dims ({np}, {nq}) but shares multipliers of dims {:?}",
                            v.dims()
                        )));
                    }
                    *v
                }
                None => {
                    let v = MultVars::declare(p, &format!("{prefix}class{g}"), np, nq);
                    shared.insert(g, v);
                    v
                }
            },
        };
        if matches!(structure, MultiplierStructure::Diagonal) {
            for j in 0..np {
                for i in 0..j {
                    p.add_eq(vec![(vars.q.index(i, j), 1.0)], 0.0);
                }
            }
            for j in 0..nq {
                for i in 0..j {
                    p.add_eq(vec![(vars.r.index(i, j), 1.0)], 0.0);
                }
            }
            for idx in vars.s.indices() {
                p.add_eq(vec![(idx, 1.0)], 0.0);
            }
        }
        out.insert(e, vars);
    }
    Ok(out)
}

/// Open-loop data of one interconnection channel of a nominal condition.
#[derive(Clone, Debug)]
pub struct ChannelSpec {
    pub bp: Mat,
    pub dzp: Mat,
    pub cq: Mat,
    pub dqw: Mat,
    /// Controller-side input of dimension `n_u` entering through `B_u`, `D_zu`.
    pub ctrl_in: bool,
    /// Rows of the controller-side output (an edge gain applied to the local state).
    pub ctrl_out: usize,
}

impl ChannelSpec {
    pub fn np(&self, nu: usize) -> usize {
        self.bp.ncols() + if self.ctrl_in { nu } else { 0 }
    }

    pub fn nq(&self) -> usize {
        self.cq.nrows() + self.ctrl_out
    }

    pub fn is_empty(&self, nu: usize) -> bool {
        self.np(nu) == 0 && self.nq() == 0
    }
}

/// Open-loop data of a per-subsystem (or per-group) nominal condition.
#[derive(Clone, Debug)]
pub struct NominalSpec {
    pub a: Mat,
    pub bu: Mat,
    pub bw: Mat,
    pub cz: Mat,
    pub dzu: Mat,
    pub dzw: Mat,
    pub channels: Vec<ChannelSpec>,
}

impl NominalSpec {
    pub fn nx(&self) -> usize {
        self.a.nrows()
    }
    pub fn nu(&self) -> usize {
        self.bu.ncols()
    }

    fn b2(&self, c: &ChannelSpec) -> Mat {
        if c.ctrl_in {
            hcat(self.nx(), &[&c.bp, &self.bu])
        } else {
            c.bp.clone()
        }
    }

    fn d12(&self, c: &ChannelSpec) -> Mat {
        if c.ctrl_in {
            hcat(self.cz.nrows(), &[&c.dzp, &self.dzu])
        } else {
            c.dzp.clone()
        }
    }

    pub fn lmi_dim(&self) -> usize {
        self.nx()
            + self.cz.nrows()
            + self.channels.iter().map(|c| c.nq()).sum::<usize>()
            + self.bw.ncols()
    }
}

/// Variables of one nominal condition; `ye[c]` is present iff channel `c` has a
/// controller-side output and `mults[c]` iff the channel is nonempty.
#[derive(Clone, Debug)]
pub struct NominalVars {
    pub w: Var,
    pub y: Var,
    pub ye: Vec<Option<Var>>,
    pub mults: Vec<Option<MultVars>>,
}

/// How the performance level enters the nominal condition.
#[derive(Clone, Copy, Debug)]
pub enum Perf {
    /// `-γI` blocks with `γ` a decision variable.
    Gamma(Var),
    /// Everything scaled by `δ = 1/γ`: `-I` blocks and a `δ`-weighted input column.
    Delta(Var),
}

/// Declares `W`, `Y` and the edge-gain variables of a nominal condition.
pub fn declare_nominal_vars(
    p: &mut ConicProgram,
    spec: &NominalSpec,
    name: &str,
) -> (Var, Var, Vec<Option<Var>>) {
    let nx = spec.nx();
    let w = p.sym(&format!("W{name}"), nx);
    let y = p.mat(&format!("Y{name}"), spec.nu(), nx);
    let ye = spec
        .channels
        .iter()
        .enumerate()
        .map(|(c, ch)| (ch.ctrl_out > 0).then(|| p.mat(&format!("Ye{name}.{c}"), ch.ctrl_out, nx)))
        .collect();
    (w, y, ye)
}

/// Assembles the dual nominal condition; the caller requires it `< 0`.
pub fn dual_nominal(spec: &NominalSpec, vars: &NominalVars, perf: Perf, label: &str) -> Lmi {
    let nx = spec.nx();
    let nz = spec.cz.nrows();
    let nw = spec.bw.ncols();
    let nq: usize = spec.channels.iter().map(|c| c.nq()).sum();
    let (zo, qo, so) = (nx, nx + nz, nx + nz + nq);
    let mut l = Lmi::new(so + nw, label);
    let ix = eye(nx);

    l.add_he(0, &spec.a, vars.w, &ix, 1.0);
    l.add_he(0, &spec.bu, vars.y, &ix, 1.0);
    l.add(zo, 0, &spec.cz, vars.w, &ix, 1.0);
    l.add(zo, 0, &spec.dzu, vars.y, &ix, 1.0);
    match perf {
        Perf::Gamma(g) => {
            l.add_scalar(zo, zo, g, &eye(nz), -1.0);
            l.add_scalar(so, so, g, &eye(nw), -1.0);
        }
        Perf::Delta(_) => {
            l.add_identity(zo, nz, -1.0);
            l.add_identity(so, nw, -1.0);
        }
    }

    let mut d21_rows: Vec<Mat> = Vec::new();
    let mut off = qo;
    for (c, ch) in spec.channels.iter().enumerate() {
        let nqc = ch.nq();
        let nqg = ch.cq.nrows();
        d21_rows.push(vcat(nw, &[&ch.dqw, &zeros(ch.ctrl_out, nw)]));
        if nqg > 0 {
            l.add(off, 0, &ch.cq, vars.w, &ix, 1.0);
        }
        if let Some(ye) = vars.ye[c] {
            l.add_var(off + nqg, 0, ye, 1.0);
        }
        if let Some(m) = vars.mults[c] {
            let g = vcat(m.q.shape().0, &[&spec.b2(ch), &spec.d12(ch)]);
            l.add(0, 0, &g, m.q, &g.transpose(), -1.0);
            if nqc > 0 && g.ncols() > 0 {
                l.add(0, off, &g, m.s, &eye(nqc), 1.0);
            }
            if nqc > 0 {
                l.add_var(off, off, m.r, -1.0);
            }
        }
        off += nqc;
    }

    let d21 = vcat(nw, &d21_rows.iter().collect::<Vec<_>>());
    let v_t = hcat(
        nw,
        &[
            &spec.bw.transpose(),
            &spec.dzw.transpose(),
            &d21.transpose(),
        ],
    );
    match perf {
        Perf::Gamma(_) => l.add_const(so, 0, &v_t),
        Perf::Delta(d) => l.add_scalar(so, 0, d, &v_t, 1.0),
    }
    l
}

/// Dual multiplier condition of an edge pair on `[p_ik; p_ki]`; the caller
/// requires it `< 0`. Returns `None` when both channels are empty.
pub fn dual_pair_condition(
    m_ik: &MultVars,
    m_ki: &MultVars,
    p_ik: &Mat,
    p_ki: &Mat,
    label: &str,
) -> Option<Lmi> {
    let n1 = p_ik.nrows();
    let n2 = p_ki.nrows();
    if n1 + n2 == 0 {
        return None;
    }
    let mut l = Lmi::new(n1 + n2, label);
    l.add_var(0, 0, m_ik.q, 1.0);
    l.add(0, 0, p_ik, m_ki.r, &p_ik.transpose(), 1.0);
    l.add_var(n1, n1, m_ki.q, 1.0);
    l.add(n1, n1, p_ki, m_ik.r, &p_ki.transpose(), 1.0);
    if n1 > 0 && n2 > 0 {
        l.add(0, n1, &eye(n1), m_ik.s, &p_ki.transpose(), -1.0);
        l.add(n1, 0, &eye(n2), m_ki.s, &p_ik.transpose(), -1.0);
    }
    Some(l)
}

/// Per-subsystem data of the static state-feedback problem on the
/// communication graph `E = sym(E^G ∪ E^K)`.
#[derive(Clone, Debug)]
pub struct SubsystemProblem {
    pub index: usize,
    pub neighbors: Vec<usize>,
    pub spec: NominalSpec,
}

impl SubsystemProblem {
    pub fn channel_of(&self, k: usize) -> Option<usize> {
        self.neighbors.iter().position(|&n| n == k)
    }
}

/// Splits an interconnected plant into per-subsystem nominal data.
pub fn subsystem_problems(
    sys: &InterconnectedSystem,
    topo_k: &Topology,
) -> Result<(Topology, Vec<SubsystemProblem>)> {
    sys.check_state_feedback_scope()?;
    if topo_k.n_nodes() != sys.n() {
        return Err(Error::Dimension(
            "controller topology has the wrong node count".into(),
        ));
    }
    let comm = symmetrize(&sys.topology.union(topo_k)?);
    let mut out = Vec::with_capacity(sys.n());
    for i in 1..=sys.n() {
        let g = sys.sub(i);
        let nbrs = neighbors(&comm, i)?;
        let channels = nbrs
            .iter()
            .map(|&k| {
                let (bp, dzp) = match g.input(k) {
                    Some(c) => (c.bp.clone(), c.dzp.clone()),
                    None => (zeros(g.nx(), 0), zeros(g.nz(), 0)),
                };
                let (cq, dqw) = match g.output(k) {
                    Some(c) => (c.cq.clone(), c.dqw.clone()),
                    None => (zeros(0, g.nx()), zeros(0, g.nw())),
                };
                ChannelSpec {
                    bp,
                    dzp,
                    cq,
                    dqw,
                    ctrl_in: topo_k.contains((i, k)),
                    ctrl_out: if topo_k.contains((k, i)) {
                        sys.sub(k).nu()
                    } else {
                        0
                    },
                }
            })
            .collect();
        let spec = NominalSpec {
            a: g.a.clone(),
            bu: g.bu.clone(),
            bw: g.bw.clone(),
            cz: g.cz.clone(),
            dzu: g.dzu.clone(),
            dzw: g.dzw.clone(),
            channels,
        };
        out.push(SubsystemProblem {
            index: i,
            neighbors: nbrs,
            spec,
        });
    }
    Ok((comm, out))
}

/// Closed-loop link block `blkdiag(P^G_ik, I)` of channel `(i, k)` under the
/// sender-side static-gain realization.
pub fn closed_loop_link(sys: &InterconnectedSystem, topo_k: &Topology, i: usize, k: usize) -> Mat {
    let pg = match sys.links.get(&(i, k)) {
        Some(p) => p.clone(),
        None => {
            let np = sys.sub(i).input(k).map_or(0, |c| c.dim());
            let nq = sys.sub(k).output(i).map_or(0, |c| c.dim());
            zeros(np, nq)
        }
    };
    if topo_k.contains((i, k)) {
        let nu = sys.sub(i).nu();
        blkdiag(&[&pg, &eye(nu)])
    } else {
        pg
    }
}

/// Recovers `D = Y W^{-1}`.
pub fn recover_gain(y: &Mat, w: &Mat) -> Result<Mat> {
    let winv = w
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular Lyapunov block".into()))?;
    Ok(y * winv)
}
