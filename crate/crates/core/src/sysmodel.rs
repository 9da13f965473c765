//! Subsystem, controller and closed-loop state-space models, interconnection
//! matrices, LFT composition and performance-channel augmentation.
//!
//! Signal convention: for a plant edge `(i, k)` subsystem `i` receives
//! `p_ik = P_ik q_ki`, where `q_ki` is the signal emitted by `k` towards `i`.
//! Stacked channel vectors follow ascending neighbour order.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;

use crate::error::{dim_err, Error, Result};
use crate::graph::{neighbors, symmetrize, Edge, EdgeChannel, Topology};
use crate::linalg::{
    blkdiag, eye, freq_response, hcat, inv_sqrtm_pd, min_eig, pinv, rank, sqrtm_psd, vcat, zeros,
    CMat, Mat,
};

/// Plant-side signal entering subsystem `i` from neighbour `from`.
#[derive(Clone, Debug, PartialEq)]
pub struct InChannel {
    pub from: usize,
    pub bp: Mat,
    pub dyp: Mat,
    pub dzp: Mat,
}

impl InChannel {
    pub fn dim(&self) -> usize {
        self.bp.ncols()
    }
}

/// Plant-side signal leaving subsystem `i` towards neighbour `to`.
#[derive(Clone, Debug, PartialEq)]
pub struct OutChannel {
    pub to: usize,
    pub cq: Mat,
    pub dqw: Mat,
}

impl OutChannel {
    pub fn dim(&self) -> usize {
        self.cq.nrows()
    }
}

/// One subsystem `G_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsystemSS {
    pub a: Mat,
    pub bu: Mat,
    pub bw: Mat,
    pub cy: Mat,
    pub cz: Mat,
    pub dyw: Mat,
    pub dzu: Mat,
    pub dzw: Mat,
    pub inputs: Vec<InChannel>,
    pub outputs: Vec<OutChannel>,
}

impl SubsystemSS {
    pub fn nx(&self) -> usize {
        self.a.nrows()
    }
    pub fn nu(&self) -> usize {
        self.bu.ncols()
    }
    pub fn ny(&self) -> usize {
        self.cy.nrows()
    }
    pub fn nw(&self) -> usize {
        self.bw.ncols()
    }
    pub fn nz(&self) -> usize {
        self.cz.nrows()
    }

    pub fn input(&self, from: usize) -> Option<&InChannel> {
        self.inputs.iter().find(|c| c.from == from)
    }

    pub fn output(&self, to: usize) -> Option<&OutChannel> {
        self.outputs.iter().find(|c| c.to == to)
    }

    /// Checks every block against the state, input and output dimensions.
    pub fn validate(&self, label: &str) -> Result<()> {
        let (nx, nu, ny, nw, nz) = (self.nx(), self.nu(), self.ny(), self.nw(), self.nz());
        let checks: [(&str, &Mat, usize, usize); 8] = [
            ("A", &self.a, nx, nx),
            ("Bu", &self.bu, nx, nu),
            ("Bw", &self.bw, nx, nw),
            ("Cy", &self.cy, ny, nx),
            ("Cz", &self.cz, nz, nx),
            ("Dyw", &self.dyw, ny, nw),
            ("Dzu", &self.dzu, nz, nu),
            ("Dzw", &self.dzw, nz, nw),
        ];
        for (name, m, r, c) in checks {
            if m.shape() != (r, c) {
                return dim_err(format!(
                    "{label}: {name} is {:?}, expected ({r}, {c})",
                    m.shape()
                ));
            }
        }
        for ch in &self.inputs {
            let n = ch.dim();
            if ch.bp.nrows() != nx || ch.dyp.shape() != (ny, n) || ch.dzp.shape() != (nz, n) {
                return dim_err(format!(
                    "{label}: input channel from {} has inconsistent blocks",
                    ch.from
                ));
            }
        }
        for ch in &self.outputs {
            let n = ch.dim();
            if ch.cq.ncols() != nx || ch.dqw.shape() != (n, nw) {
                return dim_err(format!(
                    "{label}: output channel to {} has inconsistent blocks",
                    ch.to
                ));
            }
        }
        Ok(())
    }
}

/// Interconnected plant: subsystems, plant topology `E^G` and link blocks `P_ik`.
#[derive(Clone, Debug, PartialEq)]
pub struct InterconnectedSystem {
    pub topology: Topology,
    pub subsystems: Vec<SubsystemSS>,
    pub links: BTreeMap<Edge, Mat>,
}

impl InterconnectedSystem {
    pub fn new(
        topology: Topology,
        mut subsystems: Vec<SubsystemSS>,
        links: BTreeMap<Edge, Mat>,
    ) -> Result<Self> {
        for s in subsystems.iter_mut() {
            s.inputs.sort_by_key(|c| c.from);
            s.outputs.sort_by_key(|c| c.to);
        }
        let sys = Self {
            topology,
            subsystems,
            links,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn n(&self) -> usize {
        self.subsystems.len()
    }

    pub fn sub(&self, i: usize) -> &SubsystemSS {
        &self.subsystems[i - 1]
    }

    pub fn validate(&self) -> Result<()> {
        if self.subsystems.len() != self.topology.n_nodes() {
            return dim_err("number of subsystems differs from the node count");
        }
        for (idx, s) in self.subsystems.iter().enumerate() {
            let i = idx + 1;
            s.validate(&format!("subsystem {i}"))?;
            let ins: BTreeSet<usize> = s.inputs.iter().map(|c| c.from).collect();
            let expect_in: BTreeSet<usize> = self
                .topology
                .edges()
                .filter(|e| e.0 == i)
                .map(|e| e.1)
                .collect();
            if ins != expect_in || ins.len() != s.inputs.len() {
                return Err(Error::Structure(format!(
                    "subsystem {i}: input channels do not match plant edges"
                )));
            }
            let outs: BTreeSet<usize> = s.outputs.iter().map(|c| c.to).collect();
            let expect_out: BTreeSet<usize> = self
                .topology
                .edges()
                .filter(|e| e.1 == i)
                .map(|e| e.0)
                .collect();
            if outs != expect_out || outs.len() != s.outputs.len() {
                return Err(Error::Structure(format!(
                    "subsystem {i}: output channels do not match plant edges"
                )));
            }
        }
        for (i, k) in self.topology.edges() {
            let p = self
                .links
                .get(&(i, k))
                .ok_or_else(|| Error::Structure(format!("missing link block ({i},{k})")))?;
            let np = self.sub(i).input(k).unwrap().dim();
            let nq = self.sub(k).output(i).unwrap().dim();
            if p.shape() != (np, nq) {
                return dim_err(format!(
                    "link ({i},{k}) is {:?}, expected ({np}, {nq})",
                    p.shape()
                ));
            }
        }
        if let Some(e) = self.links.keys().find(|e| !self.topology.contains(**e)) {
            return Err(Error::Structure(format!(
                "link block for absent edge {e:?}"
            )));
        }
        Ok(())
    }

    /// True when every link block is an identity.
    pub fn is_ideal(&self) -> bool {
        self.links
            .values()
            .all(|p| p.is_square() && (p - eye(p.nrows())).norm() == 0.0)
    }

    /// Preconditions of the static state-feedback synthesis routines.
    pub fn check_state_feedback_scope(&self) -> Result<()> {
        for (idx, s) in self.subsystems.iter().enumerate() {
            let i = idx + 1;
            if s.ny() != s.nx() || (&s.cy - eye(s.nx())).norm() != 0.0 {
                return Err(Error::Precondition(format!(
                    "subsystem {i}: C_y must be the identity"
                )));
            }
            if s.dyw.norm() != 0.0 {
                return Err(Error::Precondition(format!(
                    "subsystem {i}: D_yw must vanish"
                )));
            }
            if s.inputs.iter().any(|c| c.dyp.norm() != 0.0) {
                return Err(Error::Precondition(format!(
                    "subsystem {i}: D_yp must vanish"
                )));
            }
        }
        Ok(())
    }
}

/// Controller-side signal entering controller `i` from neighbour `from`:
/// contributes `bp p` to the controller state and `dp p` to `u_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerIn {
    pub from: usize,
    pub bp: Mat,
    pub dp: Mat,
}

/// Controller-side signal `q = cq x_K + dq y` sent to neighbour `to`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerOut {
    pub to: usize,
    pub cq: Mat,
    pub dq: Mat,
}

/// One controller subsystem `K_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerSS {
    pub ak: Mat,
    pub bk: Mat,
    pub ck: Mat,
    pub dk: Mat,
    pub inputs: Vec<ControllerIn>,
    pub outputs: Vec<ControllerOut>,
}

impl ControllerSS {
    pub fn nxk(&self) -> usize {
        self.ak.nrows()
    }

    /// Static decentralized gain `u = D y` without any channels.
    pub fn static_gain(dk: Mat) -> Self {
        let (nu, ny) = dk.shape();
        Self {
            ak: zeros(0, 0),
            bk: zeros(0, ny),
            ck: zeros(nu, 0),
            dk,
            inputs: vec![],
            outputs: vec![],
        }
    }

    pub fn input(&self, from: usize) -> Option<&ControllerIn> {
        self.inputs.iter().find(|c| c.from == from)
    }

    pub fn output(&self, to: usize) -> Option<&ControllerOut> {
        self.outputs.iter().find(|c| c.to == to)
    }
}

/// Interconnected controller over topology `E^K` with link blocks `P^K_ik`.
#[derive(Clone, Debug, PartialEq)]
pub struct InterconnectedController {
    pub topology: Topology,
    pub controllers: Vec<ControllerSS>,
    pub links: BTreeMap<Edge, Mat>,
}

impl InterconnectedController {
    pub fn ctrl(&self, i: usize) -> &ControllerSS {
        &self.controllers[i - 1]
    }

    /// Decentralized controller without communication.
    pub fn decentralized(n: usize, controllers: Vec<ControllerSS>) -> Result<Self> {
        Ok(Self {
            topology: Topology::edge_set(n, [])?,
            controllers,
            links: BTreeMap::new(),
        })
    }
}

/// Static state-feedback gains `u_i = D_i x_i + sum_k D_ik x_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticGains {
    pub local: Vec<Mat>,
    pub edges: BTreeMap<Edge, Mat>,
}

impl StaticGains {
    pub fn zero(sys: &InterconnectedSystem, topo_k: &Topology) -> Self {
        let local = sys
            .subsystems
            .iter()
            .map(|s| zeros(s.nu(), s.nx()))
            .collect();
        let edges = topo_k
            .edges()
            .map(|(i, k)| ((i, k), zeros(sys.sub(i).nu(), sys.sub(k).nx())))
            .collect();
        Self { local, edges }
    }

    /// Sender-side realization: controller `k` emits `D_ik x_k` towards `i`,
    /// which adds the received signal to `u_i` through identity blocks.
    pub fn to_controller(
        &self,
        sys: &InterconnectedSystem,
        topo_k: &Topology,
    ) -> Result<InterconnectedController> {
        let n = sys.n();
        let mut controllers = Vec::with_capacity(n);
        for i in 1..=n {
            let s = sys.sub(i);
            let mut c = ControllerSS::static_gain(self.local[i - 1].clone());
            if c.dk.shape() != (s.nu(), s.ny()) {
                return dim_err(format!("gain {i} has shape {:?}", c.dk.shape()));
            }
            for (a, b) in topo_k.edges() {
                if a == i {
                    c.inputs.push(ControllerIn {
                        from: b,
                        bp: zeros(0, s.nu()),
                        dp: eye(s.nu()),
                    });
                }
                if b == i {
                    let g = self
                        .edges
                        .get(&(a, b))
                        .ok_or_else(|| Error::Structure(format!("missing edge gain ({a},{b})")))?;
                    if g.shape() != (sys.sub(a).nu(), s.ny()) {
                        return dim_err(format!("edge gain ({a},{b}) has shape {:?}", g.shape()));
                    }
                    c.outputs.push(ControllerOut {
                        to: a,
                        cq: zeros(g.nrows(), 0),
                        dq: g.clone(),
                    });
                }
            }
            c.inputs.sort_by_key(|x| x.from);
            c.outputs.sort_by_key(|x| x.to);
            controllers.push(c);
        }
        let links = topo_k
            .edges()
            .map(|(i, k)| ((i, k), eye(sys.sub(i).nu())))
            .collect();
        Ok(InterconnectedController {
            topology: topo_k.clone(),
            controllers,
            links,
        })
    }
}

/// Assembled interconnection matrix with the offsets of every channel.
#[derive(Clone, Debug)]
pub struct InterconnectionMatrix {
    pub matrix: Mat,
    pub row_offset: BTreeMap<Edge, (usize, usize)>,
    pub col_offset: BTreeMap<Edge, (usize, usize)>,
}

/// Places each `P_ik` at the rows of `p_ik` and the columns of `q_ki`, with
/// `p` and `q` stacked in the order of `channels`.
pub fn assemble_interconnection(
    channels: &[EdgeChannel],
    blocks: &BTreeMap<Edge, Mat>,
) -> Result<InterconnectionMatrix> {
    let mut row_offset = BTreeMap::new();
    let mut col_offset = BTreeMap::new();
    let (mut r, mut c) = (0, 0);
    for ch in channels {
        row_offset.insert(ch.edge, (r, ch.dim_in));
        col_offset.insert(ch.edge, (c, ch.dim_out));
        r += ch.dim_in;
        c += ch.dim_out;
    }
    let mut m = zeros(r, c);
    for (&(i, k), p) in blocks {
        let &(r0, nr) = row_offset
            .get(&(i, k))
            .ok_or_else(|| Error::Structure(format!("block for unknown channel ({i},{k})")))?;
        let &(c0, nc) = col_offset
            .get(&(k, i))
            .ok_or_else(|| Error::Structure(format!("missing reverse channel ({k},{i})")))?;
        if p.shape() != (nr, nc) {
            return dim_err(format!(
                "block ({i},{k}) is {:?}, channel needs ({nr}, {nc})",
                p.shape()
            ));
        }
        m.view_mut((r0, c0), (nr, nc)).copy_from(p);
    }
    for ch in channels {
        if ch.dim_in > 0 && !blocks.contains_key(&ch.edge) {
            return Err(Error::Structure(format!(
                "no block for nonempty channel {:?}",
                ch.edge
            )));
        }
    }
    Ok(InterconnectionMatrix {
        matrix: m,
        row_offset,
        col_offset,
    })
}

/// Plain state-space realization `(A, B, C, D)`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
}

impl StateSpace {
    pub fn eval(&self, s: Complex64) -> CMat {
        freq_response(&self.a, &self.b, &self.c, &self.d, s)
    }

    pub fn spectral_abscissa(&self) -> f64 {
        crate::linalg::spectral_abscissa(&self.a)
    }

    pub fn is_stable(&self) -> bool {
        self.spectral_abscissa() < 0.0
    }
}

/// Closed-loop channel towards one neighbour: `p_ik = [p^G_ik; p^K_ik]` and
/// `q_ik = [q^G_ik; q^K_ik]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClChannel {
    pub neighbor: usize,
    pub np: usize,
    pub nq: usize,
}

/// Closed-loop blocks of subsystem `i`.
#[derive(Clone, Debug)]
pub struct ClosedLoopSub {
    pub a: Mat,
    pub b1: Mat,
    pub b2: Mat,
    pub c1: Mat,
    pub c2: Mat,
    pub d11: Mat,
    pub d12: Mat,
    pub d21: Mat,
    pub d22: Mat,
    pub channels: Vec<ClChannel>,
}

impl ClosedLoopSub {
    pub fn np(&self) -> usize {
        self.b2.ncols()
    }
    pub fn nq(&self) -> usize {
        self.c2.nrows()
    }
    /// Column offset of the `p` block of neighbour `k` and row offset of its `q` block.
    pub fn offsets(&self, k: usize) -> Option<(usize, usize)> {
        let (mut p, mut q) = (0, 0);
        for c in &self.channels {
            if c.neighbor == k {
                return Some((p, q));
            }
            p += c.np;
            q += c.nq;
        }
        None
    }
}

/// Closed loop `F_u(F_l(G_d, P), ...)` kept in interconnected form.
#[derive(Clone, Debug)]
pub struct ClosedLoopSS {
    pub topology: Topology,
    pub subs: Vec<ClosedLoopSub>,
    pub links: BTreeMap<Edge, Mat>,
}

/// Global block-diagonal matrices of a closed loop together with its interconnection matrix.
#[derive(Clone, Debug)]
pub struct GlobalClosedLoop {
    pub a: Mat,
    pub b1: Mat,
    pub b2: Mat,
    pub c1: Mat,
    pub c2: Mat,
    pub d11: Mat,
    pub d12: Mat,
    pub d21: Mat,
    pub d22: Mat,
    pub p: Mat,
}

impl ClosedLoopSS {
    pub fn sub(&self, i: usize) -> &ClosedLoopSub {
        &self.subs[i - 1]
    }

    pub fn channels(&self) -> Vec<EdgeChannel> {
        self.subs
            .iter()
            .enumerate()
            .flat_map(|(idx, s)| {
                s.channels.iter().map(move |c| EdgeChannel {
                    edge: (idx + 1, c.neighbor),
                    dim_in: c.np,
                    dim_out: c.nq,
                })
            })
            .collect()
    }

    pub fn interconnection(&self) -> Result<InterconnectionMatrix> {
        assemble_interconnection(&self.channels(), &self.links)
    }

    pub fn global(&self) -> Result<GlobalClosedLoop> {
        let pick = |f: &dyn Fn(&ClosedLoopSub) -> &Mat| -> Mat {
            let v: Vec<&Mat> = self.subs.iter().map(f).collect();
            blkdiag(&v)
        };
        Ok(GlobalClosedLoop {
            a: pick(&|s| &s.a),
            b1: pick(&|s| &s.b1),
            b2: pick(&|s| &s.b2),
            c1: pick(&|s| &s.c1),
            c2: pick(&|s| &s.c2),
            d11: pick(&|s| &s.d11),
            d12: pick(&|s| &s.d12),
            d21: pick(&|s| &s.d21),
            d22: pick(&|s| &s.d22),
            p: self.interconnection()?.matrix,
        })
    }
}

impl ClosedLoopSS {
    /// Dual (transposed) loop: `p'_ki = P_ik' q'_ik`, with the roles of the
    /// `p` and `q` channels swapped. Its flattened form is the transpose of
    /// the flattened original, so both share every induced norm.
    pub fn transpose(&self) -> ClosedLoopSS {
        let subs = self
            .subs
            .iter()
            .map(|s| ClosedLoopSub {
                a: s.a.transpose(),
                b1: s.c1.transpose(),
                b2: s.c2.transpose(),
                c1: s.b1.transpose(),
                c2: s.b2.transpose(),
                d11: s.d11.transpose(),
                d12: s.d21.transpose(),
                d21: s.d12.transpose(),
                d22: s.d22.transpose(),
                channels: s
                    .channels
                    .iter()
                    .map(|c| ClChannel {
                        neighbor: c.neighbor,
                        np: c.nq,
                        nq: c.np,
                    })
                    .collect(),
            })
            .collect();
        let links = self
            .links
            .iter()
            .map(|(&(i, k), p)| ((k, i), p.transpose()))
            .collect();
        ClosedLoopSS {
            topology: self.topology.clone(),
            subs,
            links,
        }
    }
}

/// Column permutation turning `[g_1 .. g_m, h_1 .. h_m]` into `[g_1, h_1, .., g_m, h_m]`.
fn interleave(g: &[usize], h: &[usize]) -> Vec<usize> {
    let total_g: usize = g.iter().sum();
    let (mut og, mut oh) = (0, total_g);
    let mut idx = Vec::new();
    for (a, b) in g.iter().zip(h) {
        idx.extend(og..og + a);
        idx.extend(oh..oh + b);
        og += a;
        oh += b;
    }
    idx
}

fn select_cols(m: &Mat, idx: &[usize]) -> Mat {
    Mat::from_fn(m.nrows(), idx.len(), |r, c| m[(r, idx[c])])
}

fn select_rows(m: &Mat, idx: &[usize]) -> Mat {
    Mat::from_fn(idx.len(), m.ncols(), |r, c| m[(idx[r], c)])
}

/// Closes the plant with the controller while keeping the interconnected form.
/// Channels are formed over `E = E^G ∪ E^K` completed by its mirror.
pub fn close_loop(
    sys: &InterconnectedSystem,
    ctrl: &InterconnectedController,
) -> Result<ClosedLoopSS> {
    let n = sys.n();
    if ctrl.controllers.len() != n {
        return Err(Error::Structure(format!(
            "{} controllers for {} subsystems",
            ctrl.controllers.len(),
            n
        )));
    }
    if ctrl.topology.n_nodes() != n {
        return dim_err("controller topology has the wrong node count");
    }
    let comm = symmetrize(&sys.topology.union(&ctrl.topology)?);
    let mut subs = Vec::with_capacity(n);
    for i in 1..=n {
        let g = sys.sub(i);
        let k = ctrl.ctrl(i);
        let (nx, nu, ny, nw, nz, nxk) = (g.nx(), g.nu(), g.ny(), g.nw(), g.nz(), k.nxk());
        if k.dk.shape() != (nu, ny) || k.bk.shape() != (nxk, ny) || k.ck.shape() != (nu, nxk) {
            return dim_err(format!(
                "controller {i} does not match subsystem dimensions"
            ));
        }
        let nbrs = neighbors(&comm, i)?;
        let mut pg = Vec::new();
        let mut pk = Vec::new();
        let mut qg = Vec::new();
        let mut qk = Vec::new();
        let mut bp = Vec::new();
        let mut dyp = Vec::new();
        let mut dzp = Vec::new();
        let mut cq = Vec::new();
        let mut dqw = Vec::new();
        let mut bpk = Vec::new();
        let mut dpk = Vec::new();
        let mut cqk = Vec::new();
        let mut dqk = Vec::new();
        for &nb in &nbrs {
            match g.input(nb) {
                Some(c) => {
                    pg.push(c.dim());
                    bp.push(c.bp.clone());
                    dyp.push(c.dyp.clone());
                    dzp.push(c.dzp.clone());
                }
                None => pg.push(0),
            }
            match g.output(nb) {
                Some(c) => {
                    qg.push(c.dim());
                    cq.push(c.cq.clone());
                    dqw.push(c.dqw.clone());
                }
                None => qg.push(0),
            }
            match k.input(nb) {
                Some(c) => {
                    if c.bp.nrows() != nxk || c.dp.nrows() != nu || c.bp.ncols() != c.dp.ncols() {
                        return dim_err(format!("controller {i}: input from {nb} inconsistent"));
                    }
                    pk.push(c.dp.ncols());
                    bpk.push(c.bp.clone());
                    dpk.push(c.dp.clone());
                }
                None => pk.push(0),
            }
            match k.output(nb) {
                Some(c) => {
                    if c.cq.ncols() != nxk || c.dq.ncols() != ny || c.cq.nrows() != c.dq.nrows() {
                        return dim_err(format!("controller {i}: output to {nb} inconsistent"));
                    }
                    qk.push(c.dq.nrows());
                    cqk.push(c.cq.clone());
                    dqk.push(c.dq.clone());
                }
                None => qk.push(0),
            }
        }
        fn r(v: &[Mat]) -> Vec<&Mat> {
            v.iter().collect()
        }
        let npg: usize = pg.iter().sum();
        let npk: usize = pk.iter().sum();
        let nqg: usize = qg.iter().sum();
        let nqk: usize = qk.iter().sum();
        let bp = hcat(nx, &r(&bp));
        let dyp = hcat(ny, &r(&dyp));
        let dzp = hcat(nz, &r(&dzp));
        let cq = vcat(nx, &r(&cq));
        let dqw = vcat(nw, &r(&dqw));
        let bpk = hcat(nxk, &r(&bpk));
        let dpk = hcat(nu, &r(&dpk));
        let cqk = vcat(nxk, &r(&cqk));
        let dqk = vcat(ny, &r(&dqk));

        let bu = &g.bu;
        let dzu = &g.dzu;
        let a = vcat(
            nx + nxk,
            &[
                &hcat(nx, &[&(&g.a + bu * &k.dk * &g.cy), &(bu * &k.ck)]),
                &hcat(nxk, &[&(&k.bk * &g.cy), &k.ak]),
            ],
        );
        let b1 = vcat(nw, &[&(&g.bw + bu * &k.dk * &g.dyw), &(&k.bk * &g.dyw)]);
        let b2_sep = vcat(
            npg + npk,
            &[
                &hcat(nx, &[&(&bp + bu * &k.dk * &dyp), &(bu * &dpk)]),
                &hcat(nxk, &[&(&k.bk * &dyp), &bpk]),
            ],
        );
        let c1 = hcat(nz, &[&(&g.cz + dzu * &k.dk * &g.cy), &(dzu * &k.ck)]);
        let d11 = &g.dzw + dzu * &k.dk * &g.dyw;
        let d12_sep = hcat(nz, &[&(&dzp + dzu * &k.dk * &dyp), &(dzu * &dpk)]);
        let c2_sep = vcat(
            nx + nxk,
            &[
                &hcat(nqg, &[&cq, &zeros(nqg, nxk)]),
                &hcat(nqk, &[&(&dqk * &g.cy), &cqk]),
            ],
        );
        let d21_sep = vcat(nw, &[&dqw, &(&dqk * &g.dyw)]);
        let d22_sep = vcat(
            npg + npk,
            &[
                &zeros(nqg, npg + npk),
                &hcat(nqk, &[&(&dqk * &dyp), &zeros(nqk, npk)]),
            ],
        );
        let pidx = interleave(&pg, &pk);
        let qidx = interleave(&qg, &qk);
        let channels = nbrs
            .iter()
            .enumerate()
            .map(|(j, &nb)| ClChannel {
                neighbor: nb,
                np: pg[j] + pk[j],
                nq: qg[j] + qk[j],
            })
            .collect();
        subs.push(ClosedLoopSub {
            a,
            b1,
            b2: select_cols(&b2_sep, &pidx),
            c1,
            c2: select_rows(&c2_sep, &qidx),
            d11,
            d12: select_cols(&d12_sep, &pidx),
            d21: select_rows(&d21_sep, &qidx),
            d22: select_cols(&select_rows(&d22_sep, &qidx), &pidx),
            channels,
        });
    }
    let mut links = BTreeMap::new();
    for (i, k) in comm.edges() {
        let pg = match sys.links.get(&(i, k)) {
            Some(p) => p.clone(),
            None => {
                let np = sys.sub(i).input(k).map_or(0, |c| c.dim());
                let nq = sys.sub(k).output(i).map_or(0, |c| c.dim());
                zeros(np, nq)
            }
        };
        let pk = match ctrl.links.get(&(i, k)) {
            Some(p) => p.clone(),
            None => {
                let np = ctrl.ctrl(i).input(k).map_or(0, |c| c.dp.ncols());
                let nq = ctrl.ctrl(k).output(i).map_or(0, |c| c.dq.nrows());
                zeros(np, nq)
            }
        };
        let block = blkdiag(&[&pg, &pk]);
        if block.nrows() > 0 || block.ncols() > 0 {
            links.insert((i, k), block);
        }
    }
    let clp = ClosedLoopSS {
        topology: comm,
        subs,
        links,
    };
    clp.interconnection()?;
    Ok(clp)
}

/// Eliminates the interconnection channel and returns the `w -> z` system.
pub fn flatten(clp: &ClosedLoopSS) -> Result<StateSpace> {
    let g = clp.global()?;
    let np = g.p.nrows();
    let loop_m = eye(np) - &g.p * &g.d22;
    let m = loop_m
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular interconnection loop".into()))?;
    let mp = &m * &g.p;
    Ok(StateSpace {
        a: &g.a + &g.b2 * &mp * &g.c2,
        b: &g.b1 + &g.b2 * &mp * &g.d21,
        c: &g.c1 + &g.d12 * &mp * &g.c2,
        d: &g.d11 + &g.d12 * &mp * &g.d21,
    })
}

/// Monolithic plant obtained by eliminating the plant interconnection.
#[derive(Clone, Debug)]
pub struct MonolithicPlant {
    pub a: Mat,
    pub bw: Mat,
    pub bu: Mat,
    pub cz: Mat,
    pub cy: Mat,
    pub dzw: Mat,
    pub dzu: Mat,
    pub dyw: Mat,
}

/// Eliminates `p = P q` from the plant with plain (non-mirrored) channel stacking.
pub fn monolithic_plant(sys: &InterconnectedSystem) -> Result<MonolithicPlant> {
    let subs = &sys.subsystems;
    let cat = |f: &dyn Fn(&SubsystemSS) -> &Mat| -> Mat {
        let v: Vec<&Mat> = subs.iter().map(f).collect();
        blkdiag(&v)
    };
    let (a, bw, bu, cz, cy, dzw, dzu, dyw) = (
        cat(&|s| &s.a),
        cat(&|s| &s.bw),
        cat(&|s| &s.bu),
        cat(&|s| &s.cz),
        cat(&|s| &s.cy),
        cat(&|s| &s.dzw),
        cat(&|s| &s.dzu),
        cat(&|s| &s.dyw),
    );
    let mut channels = Vec::new();
    let (mut bp, mut dyp, mut dzp, mut cq, mut dqw) = (vec![], vec![], vec![], vec![], vec![]);
    for (idx, s) in subs.iter().enumerate() {
        let i = idx + 1;
        let edges: BTreeSet<usize> = s
            .inputs
            .iter()
            .map(|c| c.from)
            .chain(s.outputs.iter().map(|c| c.to))
            .collect();
        let ins: Vec<&Mat> = edges
            .iter()
            .filter_map(|&k| s.input(k).map(|c| &c.bp))
            .collect();
        let dys: Vec<&Mat> = edges
            .iter()
            .filter_map(|&k| s.input(k).map(|c| &c.dyp))
            .collect();
        let dzs: Vec<&Mat> = edges
            .iter()
            .filter_map(|&k| s.input(k).map(|c| &c.dzp))
            .collect();
        let outs: Vec<&Mat> = edges
            .iter()
            .filter_map(|&k| s.output(k).map(|c| &c.cq))
            .collect();
        let dqs: Vec<&Mat> = edges
            .iter()
            .filter_map(|&k| s.output(k).map(|c| &c.dqw))
            .collect();
        for &k in &edges {
            channels.push(EdgeChannel {
                edge: (i, k),
                dim_in: s.input(k).map_or(0, |c| c.dim()),
                dim_out: s.output(k).map_or(0, |c| c.dim()),
            });
        }
        bp.push(hcat(s.nx(), &ins));
        dyp.push(hcat(s.ny(), &dys));
        dzp.push(hcat(s.nz(), &dzs));
        cq.push(vcat(s.nx(), &outs));
        dqw.push(vcat(s.nw(), &dqs));
    }
    let r = |v: &Vec<Mat>| -> Mat { blkdiag(&v.iter().collect::<Vec<_>>()) };
    let (bp, dyp, dzp, cq, dqw) = (r(&bp), r(&dyp), r(&dzp), r(&cq), r(&dqw));
    let p = assemble_interconnection(&channels, &sys.links)?.matrix;
    Ok(MonolithicPlant {
        a: &a + &bp * &p * &cq,
        bw: &bw + &bp * &p * &dqw,
        bu,
        cz: &cz + &dzp * &p * &cq,
        cy: &cy + &dyp * &p * &cq,
        dzw: &dzw + &dzp * &p * &dqw,
        dzu,
        dyw: &dyw + &dyp * &p * &dqw,
    })
}

/// Monolithic controller `(A_K, B_K, C_K, D_K)` obtained by eliminating its interconnection.
pub fn monolithic_controller(ctrl: &InterconnectedController) -> Result<StateSpace> {
    let cs = &ctrl.controllers;
    let cat = |f: &dyn Fn(&ControllerSS) -> &Mat| -> Mat {
        let v: Vec<&Mat> = cs.iter().map(f).collect();
        blkdiag(&v)
    };
    let (ak, bk, ck, dk) = (
        cat(&|c| &c.ak),
        cat(&|c| &c.bk),
        cat(&|c| &c.ck),
        cat(&|c| &c.dk),
    );
    let mut channels = Vec::new();
    let (mut bp, mut dp, mut cq, mut dq) = (vec![], vec![], vec![], vec![]);
    for (idx, c) in cs.iter().enumerate() {
        let i = idx + 1;
        let edges: BTreeSet<usize> = c
            .inputs
            .iter()
            .map(|x| x.from)
            .chain(c.outputs.iter().map(|x| x.to))
            .collect();
        for &k in &edges {
            channels.push(EdgeChannel {
                edge: (i, k),
                dim_in: c.input(k).map_or(0, |x| x.dp.ncols()),
                dim_out: c.output(k).map_or(0, |x| x.dq.nrows()),
            });
        }
        bp.push(hcat(
            c.nxk(),
            &edges
                .iter()
                .filter_map(|&k| c.input(k).map(|x| &x.bp))
                .collect::<Vec<_>>(),
        ));
        dp.push(hcat(
            c.dk.nrows(),
            &edges
                .iter()
                .filter_map(|&k| c.input(k).map(|x| &x.dp))
                .collect::<Vec<_>>(),
        ));
        cq.push(vcat(
            c.nxk(),
            &edges
                .iter()
                .filter_map(|&k| c.output(k).map(|x| &x.cq))
                .collect::<Vec<_>>(),
        ));
        dq.push(vcat(
            c.dk.ncols(),
            &edges
                .iter()
                .filter_map(|&k| c.output(k).map(|x| &x.dq))
                .collect::<Vec<_>>(),
        ));
    }
    let r = |v: &Vec<Mat>| -> Mat { blkdiag(&v.iter().collect::<Vec<_>>()) };
    let (bp, dp, cq, dq) = (r(&bp), r(&dp), r(&cq), r(&dq));
    let p = assemble_interconnection(&channels, &ctrl.links)?.matrix;
    Ok(StateSpace {
        a: &ak + &bp * &p * &cq,
        b: &bk + &bp * &p * &dq,
        c: &ck + &dp * &p * &cq,
        d: &dk + &dp * &p * &dq,
    })
}

/// Closes a monolithic plant with a monolithic controller (`D_yu = 0`).
pub fn close_monolithic(g: &MonolithicPlant, k: &StateSpace) -> StateSpace {
    let nx = g.a.nrows();
    let nk = k.a.nrows();
    let nw = g.bw.ncols();
    let nz = g.cz.nrows();
    StateSpace {
        a: vcat(
            nx + nk,
            &[
                &hcat(nx, &[&(&g.a + &g.bu * &k.d * &g.cy), &(&g.bu * &k.c)]),
                &hcat(nk, &[&(&k.b * &g.cy), &k.a]),
            ],
        ),
        b: vcat(nw, &[&(&g.bw + &g.bu * &k.d * &g.dyw), &(&k.b * &g.dyw)]),
        c: hcat(nz, &[&(&g.cz + &g.dzu * &k.d * &g.cy), &(&g.dzu * &k.c)]),
        d: &g.dzw + &g.dzu * &k.d * &g.dyw,
    }
}

/// Closed loop computed by eliminating plant and controller interconnections
/// first and closing the `u`-`y` loop afterwards.
pub fn monolithic_closed_loop(
    sys: &InterconnectedSystem,
    ctrl: &InterconnectedController,
) -> Result<StateSpace> {
    Ok(close_monolithic(
        &monolithic_plant(sys)?,
        &monolithic_controller(ctrl)?,
    ))
}

/// Distributed plant whose performance channel `w̄ -> z̄` is global.
#[derive(Clone, Debug)]
pub struct GlobalPerformanceSystem {
    /// Interconnected dynamics; local performance blocks of the subsystems are ignored.
    pub plant: InterconnectedSystem,
    pub c_zbar: Mat,
    pub d_zbar_u: Mat,
    pub d_zbar_wbar: Mat,
    pub b_wbar: Mat,
    pub d_y_wbar: Mat,
}

impl GlobalPerformanceSystem {
    /// Monolithic plant with the global performance channel.
    pub fn monolithic(&self) -> Result<MonolithicPlant> {
        let mut m = monolithic_plant(&self.plant)?;
        m.cz = self.c_zbar.clone();
        m.dzu = self.d_zbar_u.clone();
        m.dzw = self.d_zbar_wbar.clone();
        m.bw = self.b_wbar.clone();
        m.dyw = self.d_y_wbar.clone();
        Ok(m)
    }
}

/// User-supplied augmentation data; `z_dims`/`w_dims` give the per-subsystem
/// split of the rows of `S` and `T`.
#[derive(Clone, Debug)]
pub struct AugmentationSpec {
    pub s: Mat,
    pub t: Mat,
    pub m_q: Mat,
    pub m_r: Mat,
    pub z_dims: Vec<usize>,
    pub w_dims: Vec<usize>,
}

impl AugmentationSpec {
    /// Balanced isometry `S = [I; ..; I] / sqrt(N)` with `M_Q = I - S S^T`, and
    /// the same construction for `T`.
    pub fn balanced(n_zbar: usize, n_wbar: usize, n: usize) -> Self {
        let iso = |m: usize| -> Mat { vcat(m, &vec![&eye(m); n]) / (n as f64).sqrt() };
        let s = iso(n_zbar);
        let t = iso(n_wbar);
        let m_q = eye(s.nrows()) - &s * s.transpose();
        let m_r = eye(t.nrows()) - &t * t.transpose();
        Self {
            s,
            t,
            m_q,
            m_r,
            z_dims: vec![n_zbar; n],
            w_dims: vec![n_wbar; n],
        }
    }
}

/// Derived weights and the semi-orthogonal maps of the augmentation.
#[derive(Clone, Debug)]
pub struct PerformanceAugmentation {
    pub spec: AugmentationSpec,
    pub q_bar: Mat,
    pub r_bar: Mat,
    pub t_l: Mat,
    pub t_r: Mat,
    pub residual_l: f64,
    pub residual_r: f64,
}

/// Augments a global performance channel so that each subsystem owns a slice
/// of `z` and `w`, and returns the localized interconnected system.
pub fn augment_performance(
    g: &GlobalPerformanceSystem,
    spec: &AugmentationSpec,
) -> Result<(InterconnectedSystem, PerformanceAugmentation)> {
    let sys = &g.plant;
    let n = sys.n();
    let (s, t) = (&spec.s, &spec.t);
    let nzbar = g.c_zbar.nrows();
    let nwbar = g.b_wbar.ncols();
    if s.ncols() != nzbar || t.ncols() != nwbar {
        return dim_err("S or T does not match the global performance dimensions");
    }
    if spec.z_dims.len() != n || spec.w_dims.len() != n {
        return dim_err("per-subsystem split needs one entry per subsystem");
    }
    if spec.z_dims.iter().sum::<usize>() != s.nrows()
        || spec.w_dims.iter().sum::<usize>() != t.nrows()
    {
        return dim_err("per-subsystem split does not add up to the rows of S or T");
    }
    if spec.m_q.shape() != (s.nrows(), s.nrows()) || spec.m_r.shape() != (t.nrows(), t.nrows()) {
        return dim_err("M_Q or M_R has the wrong size");
    }
    if rank(s, 1e-12) < s.ncols() || rank(t, 1e-12) < t.ncols() {
        return Err(Error::Precondition(
            "S and T must have full column rank".into(),
        ));
    }
    let tol = 1e-9;
    let s_pinv = pinv(s, 1e-12);
    let t_pinv = pinv(t, 1e-12);
    let scale_q = 1.0 + spec.m_q.norm() * s.norm() * s.norm();
    if (s.transpose() * &spec.m_q * s).norm() > tol * scale_q {
        return Err(Error::Precondition("S^T M_Q S must vanish".into()));
    }
    let scale_r = 1.0 + spec.m_r.norm() * t_pinv.norm() * t_pinv.norm();
    if (&t_pinv * &spec.m_r * t_pinv.transpose()).norm() > tol * scale_r {
        return Err(Error::Precondition("T^+ M_R T^+^T must vanish".into()));
    }
    let q_bar = s_pinv.transpose() * &s_pinv + &spec.m_q;
    let r_bar = t * t.transpose() + &spec.m_r;
    if min_eig(&q_bar) <= 1e-12 || min_eig(&r_bar) <= 1e-12 {
        return Err(Error::Precondition(
            "Q̄ and R̄ must be positive definite".into(),
        ));
    }
    let q_half = sqrtm_psd(&q_bar, 1e-12);
    let r_half = sqrtm_psd(&r_bar, 1e-12);
    let t_l = &q_half * s;
    let t_r = inv_sqrtm_pd(&r_bar, 1e-12) * t;
    let residual_l = (t_l.transpose() * &t_l - eye(nzbar)).norm();
    let residual_r = (t_r.transpose() * &t_r - eye(nwbar)).norm();
    if residual_l > tol || residual_r > tol {
        return Err(Error::Numerical(format!(
            "semi-orthogonality residuals {residual_l:.2e}, {residual_r:.2e}"
        )));
    }
    let w_map = &t_pinv * &r_half;
    let cz = &t_l * &g.c_zbar;
    let dzu = &t_l * &g.d_zbar_u;
    let dzw = &t_l * &g.d_zbar_wbar * &w_map;
    let bw = &g.b_wbar * &w_map;
    let dyw = &g.d_y_wbar * &w_map;

    let offsets = |dims: Vec<usize>| -> Vec<usize> {
        let mut o = vec![0];
        for d in dims {
            o.push(o.last().unwrap() + d);
        }
        o
    };
    let xo = offsets(sys.subsystems.iter().map(|s| s.nx()).collect());
    let uo = offsets(sys.subsystems.iter().map(|s| s.nu()).collect());
    let yo = offsets(sys.subsystems.iter().map(|s| s.ny()).collect());
    let zo = offsets(spec.z_dims.clone());
    let wo = offsets(spec.w_dims.clone());
    let local_tol = 1e-10 * (1.0 + cz.norm() + dzu.norm() + dzw.norm() + bw.norm() + dyw.norm());
    let check_local = |m: &Mat, ro: &[usize], co: &[usize], name: &str| -> Result<()> {
        for i in 0..n {
            for j in 0..n {
                if i != j
                    && m.view((ro[i], co[j]), (ro[i + 1] - ro[i], co[j + 1] - co[j]))
                        .norm()
                        > local_tol
                {
                    return Err(Error::Structure(format!(
                        "augmented {name} couples subsystems {} and {}",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(())
    };
    check_local(&cz, &zo, &xo, "C_z")?;
    check_local(&dzu, &zo, &uo, "D_zu")?;
    check_local(&dzw, &zo, &wo, "D_zw")?;
    check_local(&bw, &xo, &wo, "B_w")?;
    check_local(&dyw, &yo, &wo, "D_yw")?;

    let block = |m: &Mat, ro: &[usize], co: &[usize], i: usize| -> Mat {
        m.view((ro[i], co[i]), (ro[i + 1] - ro[i], co[i + 1] - co[i]))
            .into_owned()
    };
    let mut subsystems = sys.subsystems.clone();
    for (i, sub) in subsystems.iter_mut().enumerate() {
        sub.cz = block(&cz, &zo, &xo, i);
        sub.dzu = block(&dzu, &zo, &uo, i);
        sub.dzw = block(&dzw, &zo, &wo, i);
        sub.bw = block(&bw, &xo, &wo, i);
        sub.dyw = block(&dyw, &yo, &wo, i);
        let (nz, nw) = (spec.z_dims[i], spec.w_dims[i]);
        for c in sub.inputs.iter_mut() {
            c.dzp = zeros(nz, c.dim());
        }
        for c in sub.outputs.iter_mut() {
            c.dqw = zeros(c.dim(), nw);
        }
    }
    let out = InterconnectedSystem::new(sys.topology.clone(), subsystems, sys.links.clone())?;
    Ok((
        out,
        PerformanceAugmentation {
            spec: spec.clone(),
            q_bar,
            r_bar,
            t_l,
            t_r,
            residual_l,
            residual_r,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::from_rows;

    fn scalar(v: f64) -> Mat {
        from_rows(&[&[v]])
    }

    #[test]
    fn example_one_layout() {
        let edges = [(1, 2), (2, 1), (2, 3), (2, 4), (3, 2), (4, 2)];
        let channels: Vec<EdgeChannel> = edges
            .iter()
            .map(|&e| EdgeChannel {
                edge: e,
                dim_in: 1,
                dim_out: 1,
            })
            .collect();
        let blocks = edges.iter().map(|&e| (e, eye(1))).collect();
        let p = assemble_interconnection(&channels, &blocks).unwrap().matrix;
        let mut expect = zeros(6, 6);
        for (r, c) in [(0, 1), (1, 0), (2, 4), (3, 5), (4, 2), (5, 3)] {
            expect[(r, c)] = 1.0;
        }
        assert_eq!(p, expect);
    }

    #[test]
    fn scalar_pairs() {
        let ch = vec![
            EdgeChannel {
                edge: (1, 2),
                dim_in: 1,
                dim_out: 1,
            },
            EdgeChannel {
                edge: (2, 1),
                dim_in: 1,
                dim_out: 1,
            },
        ];
        let mut blocks = BTreeMap::new();
        blocks.insert((1, 2), scalar(1.0));
        blocks.insert((2, 1), scalar(1.0));
        assert_eq!(
            assemble_interconnection(&ch, &blocks).unwrap().matrix,
            from_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
        );
        blocks.insert((1, 2), scalar(0.5));
        assert_eq!(
            assemble_interconnection(&ch, &blocks).unwrap().matrix,
            from_rows(&[&[0.0, 0.5], &[1.0, 0.0]])
        );
        blocks.insert((1, 2), zeros(1, 2));
        assert!(matches!(
            assemble_interconnection(&ch, &blocks),
            Err(Error::Dimension(_))
        ));
    }

    fn one_state_pair() -> InterconnectedSystem {
        let mk = |nb: usize| SubsystemSS {
            a: scalar(-1.0),
            bu: scalar(1.0),
            bw: scalar(1.0),
            cy: scalar(1.0),
            cz: scalar(1.0),
            dyw: scalar(0.0),
            dzu: scalar(0.0),
            dzw: scalar(0.0),
            inputs: vec![InChannel {
                from: nb,
                bp: scalar(1.0),
                dyp: scalar(0.0),
                dzp: scalar(0.0),
            }],
            outputs: vec![OutChannel {
                to: nb,
                cq: scalar(1.0),
                dqw: scalar(0.0),
            }],
        };
        let topo = Topology::ring(2).unwrap();
        let links = [((1, 2), scalar(1.0)), ((2, 1), scalar(1.0))]
            .into_iter()
            .collect();
        InterconnectedSystem::new(topo, vec![mk(2), mk(1)], links).unwrap()
    }

    #[test]
    fn zero_controller_and_hand_elimination() {
        let sys = one_state_pair();
        let ctrl = InterconnectedController::decentralized(
            2,
            vec![ControllerSS::static_gain(scalar(0.0)); 2],
        )
        .unwrap();
        let clp = close_loop(&sys, &ctrl).unwrap();
        assert_eq!(clp.sub(1).a, scalar(-1.0));
        assert_eq!(clp.sub(1).d11, scalar(0.0));
        let flat = flatten(&clp).unwrap();
        assert_eq!(flat.a, from_rows(&[&[-1.0, 1.0], &[1.0, -1.0]]));
    }

    #[test]
    fn static_feedback_top_left() {
        let sys = one_state_pair();
        let gains = StaticGains {
            local: vec![scalar(-2.0), scalar(-3.0)],
            edges: BTreeMap::new(),
        };
        let topo_k = Topology::edge_set(2, []).unwrap();
        let clp = close_loop(&sys, &gains.to_controller(&sys, &topo_k).unwrap()).unwrap();
        assert_eq!(clp.sub(1).a, scalar(-3.0));
        assert_eq!(clp.sub(2).a, scalar(-4.0));
    }

    #[test]
    fn decoupled_is_independent_of_links() {
        let mut sys = one_state_pair();
        for s in sys.subsystems.iter_mut() {
            s.inputs[0].bp = scalar(0.0);
        }
        let ctrl = InterconnectedController::decentralized(
            2,
            vec![ControllerSS::static_gain(scalar(0.0)); 2],
        )
        .unwrap();
        let f1 = flatten(&close_loop(&sys, &ctrl).unwrap()).unwrap();
        sys.links.insert((1, 2), scalar(7.0));
        let f2 = flatten(&close_loop(&sys, &ctrl).unwrap()).unwrap();
        assert_eq!(f1, f2);
    }

    #[test]
    fn transposed_loop_flattens_to_transpose() {
        let sys = one_state_pair();
        let gains = StaticGains {
            local: vec![scalar(-2.0), scalar(-3.0)],
            edges: BTreeMap::new(),
        };
        let topo_k = Topology::edge_set(2, []).unwrap();
        let clp = close_loop(&sys, &gains.to_controller(&sys, &topo_k).unwrap()).unwrap();
        let (f, ft) = (flatten(&clp).unwrap(), flatten(&clp.transpose()).unwrap());
        assert_eq!(ft.a, f.a.transpose());
        assert_eq!(ft.b, f.c.transpose());
    }

    #[test]
    fn balanced_augmentation_is_semi_orthogonal() {
        let spec = AugmentationSpec::balanced(2, 1, 3);
        let s = &spec.s;
        let q = pinv(s, 1e-12).transpose() * pinv(s, 1e-12) + &spec.m_q;
        let tl = sqrtm_psd(&q, 1e-12) * s;
        assert!((tl.transpose() * &tl - eye(2)).norm() < 1e-10);
    }
}
