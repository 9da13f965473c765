//! Benchmark and test instance generators.
//!
//! Mass-spring-damper networks follow a fixed stream discipline: the generator
//! is ChaCha8 seeded with the user seed, subsystem `i` draws from stream `i`
//! and edge `(i, k)` from stream `2^32 + i * (N + 1) + k`, so instances do not
//! depend on iteration order and can be reproduced in other languages.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decomposed::ClassDescriptor;
use crate::error::{Error, Result};
use crate::graph::{Edge, Topology};
use crate::linalg::{blkdiag, eye, from_rows, hcat, inv_sqrtm_pd, sqrtm_psd, zeros, Mat};
use crate::sysmodel::{
    AugmentationSpec, ControllerIn, ControllerOut, ControllerSS, GlobalPerformanceSystem,
    InChannel, InterconnectedController, InterconnectedSystem, OutChannel, SubsystemSS,
};

/// Uniform sampling intervals of the mass-spring-damper parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MsdBounds {
    pub m: (f64, f64),
    pub k: (f64, f64),
    pub d: (f64, f64),
    pub k_edge: (f64, f64),
    pub d_edge: (f64, f64),
    pub bu: (f64, f64),
    pub dzu: (f64, f64),
    pub bw: (f64, f64),
}

impl Default for MsdBounds {
    fn default() -> Self {
        Self {
            m: (5.0, 10.0),
            k: (0.8, 1.2),
            d: (0.8, 1.2),
            k_edge: (0.2, 0.4),
            d_edge: (0.2, 0.4),
            bu: (1.0, 1.3),
            dzu: (1.0, 1.3),
            bw: (1.0, 1.2),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MsdConfig {
    pub seed: u64,
    pub topology: Topology,
    pub bounds: MsdBounds,
}

impl MsdConfig {
    pub fn new(topology: Topology, seed: u64) -> Self {
        Self {
            seed,
            topology,
            bounds: MsdBounds::default(),
        }
    }
}

/// Sampled physical parameters of one subsystem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MsdNode {
    pub m: f64,
    pub k: f64,
    pub d: f64,
    pub bu: f64,
    pub dzu: f64,
    pub bw: f64,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Builds an MSD network from explicit node and edge parameters.
pub fn msd_from_parameters(
    topology: &Topology,
    nodes: &[MsdNode],
    edges: &BTreeMap<Edge, (f64, f64)>,
) -> Result<InterconnectedSystem> {
    let n = topology.n_nodes();
    if nodes.len() != n {
        return Err(Error::Dimension(format!(
            "{} node parameter sets for {n} nodes",
            nodes.len()
        )));
    }
    let mut subsystems = Vec::with_capacity(n);
    for i in 1..=n {
        let p = nodes[i - 1];
        let (mut ks, mut ds) = (0.0, 0.0);
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        for (a, b) in topology.edges() {
            if a == i {
                let (k_ik, d_ik) = edges[&(a, b)];
                ks += k_ik;
                ds += d_ik;
                let mk = nodes[b - 1].m;
                inputs.push(InChannel {
                    from: b,
                    bp: from_rows(&[&[0.0, 0.0], &[k_ik / mk, d_ik / mk]]),
                    dyp: zeros(2, 2),
                    dzp: zeros(3, 2),
                });
            }
            if b == i {
                outputs.push(OutChannel {
                    to: a,
                    cq: eye(2),
                    dqw: zeros(2, 1),
                });
            }
        }
        subsystems.push(SubsystemSS {
            a: from_rows(&[&[0.0, 1.0], &[-ks / p.m, -ds / p.m]]),
            bu: from_rows(&[&[0.0], &[p.bu]]),
            bw: from_rows(&[&[0.0], &[p.bw]]),
            cy: eye(2),
            cz: from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]),
            dyw: zeros(2, 1),
            dzu: from_rows(&[&[0.0], &[0.0], &[p.dzu]]),
            dzw: zeros(3, 1),
            inputs,
            outputs,
        });
    }
    let links = topology.edges().map(|e| (e, eye(2))).collect();
    InterconnectedSystem::new(topology.clone(), subsystems, links)
}

/// Samples the node and edge parameters of an MSD network.
pub fn sample_msd_parameters(cfg: &MsdConfig) -> (Vec<MsdNode>, BTreeMap<Edge, (f64, f64)>) {
    let n = cfg.topology.n_nodes() as u64;
    let b = &cfg.bounds;
    let nodes = (1..=n)
        .map(|i| {
            let mut rng = stream_rng(cfg.seed, i);
            MsdNode {
                m: draw(&mut rng, b.m),
                k: draw(&mut rng, b.k),
                d: draw(&mut rng, b.d),
                bu: draw(&mut rng, b.bu),
                dzu: draw(&mut rng, b.dzu),
                bw: draw(&mut rng, b.bw),
            }
        })
        .collect();
    let edges = cfg
        .topology
        .edges()
        .map(|(i, k)| {
            let mut rng = stream_rng(cfg.seed, (1u64 << 32) + i as u64 * (n + 1) + k as u64);
            ((i, k), (draw(&mut rng, b.k_edge), draw(&mut rng, b.d_edge)))
        })
        .collect();
    (nodes, edges)
}

/// Random mass-spring-damper network on the configured topology.
pub fn generate_msd(cfg: &MsdConfig) -> Result<InterconnectedSystem> {
    let (nodes, edges) = sample_msd_parameters(cfg);
    msd_from_parameters(&cfg.topology, &nodes, &edges)
}

pub const FIG4_SEED: u64 = 42;

/// Plant edges of the eight-subsystem benchmark.
pub const FIG4_EDGES: [Edge; 9] = [
    (1, 5),
    (2, 1),
    (3, 4),
    (4, 2),
    (4, 7),
    (5, 6),
    (6, 3),
    (7, 8),
    (8, 5),
];

pub fn fig4_topology() -> Topology {
    Topology::new(8, FIG4_EDGES).expect("benchmark graph is valid")
}

/// Eight-subsystem benchmark: seeded MSD matrices with `E^K = E^G`.
pub fn fig4_fixture() -> (InterconnectedSystem, Topology) {
    let topo = fig4_topology();
    let sys = generate_msd(&MsdConfig::new(topo.clone(), FIG4_SEED))
        .expect("benchmark instance is valid");
    (sys, topo)
}

/// MSD network with identical parameters everywhere; on graphs with constant
/// in-degree all subsystems coincide.
pub fn uniform_msd(topology: &Topology) -> Result<InterconnectedSystem> {
    let node = MsdNode {
        m: 7.5,
        k: 1.0,
        d: 1.0,
        bu: 1.15,
        dzu: 1.15,
        bw: 1.1,
    };
    let nodes = vec![node; topology.n_nodes()];
    let edges = topology.edges().map(|e| (e, (0.3, 0.3))).collect();
    msd_from_parameters(topology, &nodes, &edges)
}

/// Dimensions of randomly generated subsystems.
#[derive(Clone, Copy, Debug)]
pub struct RandomDims {
    pub nx: (usize, usize),
    pub nu: (usize, usize),
    pub nw: (usize, usize),
    pub nz: (usize, usize),
    pub ns: (usize, usize),
}

impl Default for RandomDims {
    fn default() -> Self {
        Self {
            nx: (1, 3),
            nu: (1, 2),
            nw: (1, 2),
            nz: (1, 2),
            ns: (1, 2),
        }
    }
}

fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Mat {
    Mat::from_fn(r, c, |_, _| scale * rng.random_range(-1.0..1.0))
}

fn rand_dim(rng: &mut ChaCha8Rng, (lo, hi): (usize, usize)) -> usize {
    rng.random_range(lo..=hi)
}

fn stable_shift(a: Mat, margin: f64) -> Mat {
    let n = a.nrows();
    let abscissa = crate::linalg::spectral_abscissa(&a);
    a - eye(n) * (abscissa + margin).max(0.0)
}

/// Random interconnected plant. With `state_feedback` the measurement is the
/// full state and all measurement feedthroughs vanish; otherwise every block
/// is dense. Subsystem matrices are shifted so each `A_i` is Hurwitz.
pub fn random_system(
    topology: &Topology,
    seed: u64,
    dims: RandomDims,
    state_feedback: bool,
) -> Result<InterconnectedSystem> {
    let n = topology.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    struct D {
        nx: usize,
        nu: usize,
        ny: usize,
        nw: usize,
        nz: usize,
    }
    let d: Vec<D> = (0..n)
        .map(|_| {
            let nx = rand_dim(&mut rng, dims.nx);
            let ny = if state_feedback {
                nx
            } else {
                rand_dim(&mut rng, (1, nx))
            };
            D {
                nx,
                nu: rand_dim(&mut rng, dims.nu),
                ny,
                nw: rand_dim(&mut rng, dims.nw),
                nz: rand_dim(&mut rng, dims.nz),
            }
        })
        .collect();
    let ns: BTreeMap<Edge, (usize, usize)> = topology
        .edges()
        .map(|e| {
            (
                e,
                (rand_dim(&mut rng, dims.ns), rand_dim(&mut rng, dims.ns)),
            )
        })
        .collect();
    let feed = if state_feedback { 0.0 } else { 0.5 };
    let mut subsystems = Vec::with_capacity(n);
    for i in 1..=n {
        let di = &d[i - 1];
        let inputs = topology
            .edges()
            .filter(|e| e.0 == i)
            .map(|(_, k)| {
                let np = ns[&(i, k)].0;
                InChannel {
                    from: k,
                    bp: rand_mat(&mut rng, di.nx, np, 0.5),
                    dyp: rand_mat(&mut rng, di.ny, np, feed),
                    dzp: rand_mat(&mut rng, di.nz, np, 0.3),
                }
            })
            .collect();
        let outputs = topology
            .edges()
            .filter(|e| e.1 == i)
            .map(|(a, _)| {
                let nq = ns[&(a, i)].1;
                OutChannel {
                    to: a,
                    cq: rand_mat(&mut rng, nq, di.nx, 0.5),
                    dqw: rand_mat(&mut rng, nq, di.nw, 0.3),
                }
            })
            .collect();
        let a = stable_shift(rand_mat(&mut rng, di.nx, di.nx, 1.0), 0.5);
        let cy = if state_feedback {
            eye(di.nx)
        } else {
            rand_mat(&mut rng, di.ny, di.nx, 1.0)
        };
        subsystems.push(SubsystemSS {
            a,
            bu: rand_mat(&mut rng, di.nx, di.nu, 1.0),
            bw: rand_mat(&mut rng, di.nx, di.nw, 1.0),
            cy,
            cz: rand_mat(&mut rng, di.nz, di.nx, 1.0),
            dyw: rand_mat(&mut rng, di.ny, di.nw, feed),
            dzu: rand_mat(&mut rng, di.nz, di.nu, 1.0),
            dzw: rand_mat(&mut rng, di.nz, di.nw, 0.3),
            inputs,
            outputs,
        });
    }
    // Link (i, k) maps the output of k towards i; both sizes are drawn with edge (i, k).
    let links = topology
        .edges()
        .map(|e| {
            let (np, nq) = ns[&e];
            (e, rand_mat(&mut rng, np, nq, 0.5))
        })
        .collect();
    InterconnectedSystem::new(topology.clone(), subsystems, links)
}

/// Random plant with the grouped structure of `cls`: subsystems of one group
/// share their matrices, every (group, class) pair has its own coupling
/// matrices, links are identities and the state is measured. Class channel
/// sizes are drawn from `dims.ns`; all subsystems share one input size.
pub fn grouped_system(
    topology: &Topology,
    cls: &ClassDescriptor,
    seed: u64,
    dims: RandomDims,
) -> Result<InterconnectedSystem> {
    cls.validate(topology)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nu = rand_dim(&mut rng, dims.nu);
    struct G {
        a: Mat,
        bu: Mat,
        bw: Mat,
        cz: Mat,
        dzu: Mat,
        dzw: Mat,
        bp: Vec<Mat>,
        dzp: Vec<Mat>,
        cq: Vec<Mat>,
        dqw: Vec<Mat>,
    }
    let ns: Vec<usize> = cls
        .classes
        .iter()
        .map(|_| rand_dim(&mut rng, dims.ns))
        .collect();
    let groups: Vec<G> = (0..cls.alpha())
        .map(|_| {
            let (nx, nw, nz) = (
                rand_dim(&mut rng, dims.nx),
                rand_dim(&mut rng, dims.nw),
                rand_dim(&mut rng, dims.nz),
            );
            G {
                a: stable_shift(rand_mat(&mut rng, nx, nx, 1.0), 0.5),
                bu: rand_mat(&mut rng, nx, nu, 1.0),
                bw: rand_mat(&mut rng, nx, nw, 1.0),
                cz: rand_mat(&mut rng, nz, nx, 1.0),
                dzu: rand_mat(&mut rng, nz, nu, 1.0),
                dzw: rand_mat(&mut rng, nz, nw, 0.3),
                bp: ns.iter().map(|&d| rand_mat(&mut rng, nx, d, 0.4)).collect(),
                dzp: ns.iter().map(|&d| rand_mat(&mut rng, nz, d, 0.2)).collect(),
                cq: ns.iter().map(|&d| rand_mat(&mut rng, d, nx, 0.4)).collect(),
                dqw: ns.iter().map(|&d| rand_mat(&mut rng, d, nw, 0.2)).collect(),
            }
        })
        .collect();
    let n = topology.n_nodes();
    let mut subsystems = Vec::with_capacity(n);
    for i in 1..=n {
        let g = &groups[cls.group_of(i)];
        let nx = g.a.nrows();
        let inputs = topology
            .edges()
            .filter(|e| e.0 == i)
            .map(|(_, k)| {
                let j = cls.class_of((i, k)).expect("validated classes");
                InChannel {
                    from: k,
                    bp: g.bp[j].clone(),
                    dyp: zeros(nx, ns[j]),
                    dzp: g.dzp[j].clone(),
                }
            })
            .collect();
        let outputs = topology
            .edges()
            .filter(|e| e.1 == i)
            .map(|(a, _)| {
                let j = cls.class_of((a, i)).expect("validated classes");
                OutChannel {
                    to: a,
                    cq: g.cq[j].clone(),
                    dqw: g.dqw[j].clone(),
                }
            })
            .collect();
        subsystems.push(SubsystemSS {
            a: g.a.clone(),
            bu: g.bu.clone(),
            bw: g.bw.clone(),
            cy: eye(nx),
            cz: g.cz.clone(),
            dyw: zeros(nx, g.bw.ncols()),
            dzu: g.dzu.clone(),
            dzw: g.dzw.clone(),
            inputs,
            outputs,
        });
    }
    let links = topology
        .edges()
        .map(|e| (e, eye(ns[cls.class_of(e).expect("validated classes")])))
        .collect();
    InterconnectedSystem::new(topology.clone(), subsystems, links)
}

/// Random dynamic controller over `topo_k` matching the plant dimensions.
pub fn random_controller(
    sys: &InterconnectedSystem,
    topo_k: &Topology,
    seed: u64,
    nxk: usize,
) -> Result<InterconnectedController> {
    let n = sys.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let dims: BTreeMap<Edge, usize> = topo_k
        .edges()
        .map(|e| (e, rng.random_range(1..=2usize)))
        .collect();
    let mut controllers = Vec::with_capacity(n);
    for i in 1..=n {
        let s = sys.sub(i);
        let inputs = topo_k
            .edges()
            .filter(|e| e.0 == i)
            .map(|(_, k)| {
                let m = dims[&(i, k)];
                ControllerIn {
                    from: k,
                    bp: rand_mat(&mut rng, nxk, m, 0.5),
                    dp: rand_mat(&mut rng, s.nu(), m, 0.5),
                }
            })
            .collect();
        let outputs = topo_k
            .edges()
            .filter(|e| e.1 == i)
            .map(|(a, _)| {
                let m = dims[&(a, i)];
                ControllerOut {
                    to: a,
                    cq: rand_mat(&mut rng, m, nxk, 0.5),
                    dq: rand_mat(&mut rng, m, s.ny(), 0.5),
                }
            })
            .collect();
        controllers.push(ControllerSS {
            ak: stable_shift(rand_mat(&mut rng, nxk, nxk, 1.0), 0.5),
            bk: rand_mat(&mut rng, nxk, s.ny(), 0.5),
            ck: rand_mat(&mut rng, s.nu(), nxk, 0.5),
            dk: rand_mat(&mut rng, s.nu(), s.ny(), 0.3),
            inputs,
            outputs,
        });
    }
    let links = topo_k
        .edges()
        .map(|e| (e, rand_mat(&mut rng, dims[&e], dims[&e], 0.7)))
        .collect();
    Ok(InterconnectedController {
        topology: topo_k.clone(),
        controllers,
        links,
    })
}

/// Random plant whose performance channel couples every subsystem, together
/// with a valid augmentation that localizes it. `S = V G` and `T = V' H` with
/// `V`, `V'` orthonormal bases that are one column larger than the signals
/// they must carry, so `M_Q = I - V V^T` and `M_R = I - V' V'^T` are nonzero.
/// The measurement never sees `w`; without `feedthrough` the performance
/// feedthrough from `w` vanishes too, which keeps the H2 norm finite.
pub fn random_global_performance(
    topology: &Topology,
    seed: u64,
    feedthrough: bool,
) -> Result<(GlobalPerformanceSystem, AugmentationSpec)> {
    let dims = RandomDims {
        nx: (2, 2),
        nu: (1, 1),
        nw: (1, 1),
        nz: (1, 1),
        ns: (1, 2),
    };
    let plant = random_system(topology, seed, dims, true)?;
    let n = plant.n();
    let (nz, nw) = (4, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a06e);
    let ft = if feedthrough { 1.0 } else { 0.0 };
    let (mut l, mut lu, mut k, mut ldw) = (vec![], vec![], vec![], vec![]);
    for _ in 0..n {
        let li = rand_mat(&mut rng, nz, 2, 1.0);
        let ki = rand_mat(&mut rng, 2, nw, 1.0);
        lu.push(rand_mat(&mut rng, nz, 1, 1.0));
        ldw.push(&li * rand_mat(&mut rng, 2, 2, ft) * &ki);
        l.push(li);
        k.push(ki);
    }
    let bd = |v: &[Mat]| blkdiag(&v.iter().collect::<Vec<_>>());
    let (l, lu, k, ldw) = (bd(&l), bd(&lu), bd(&k), bd(&ldw));
    let basis = |m: &Mat, rng: &mut ChaCha8Rng| -> Mat {
        let extra = rand_mat(rng, m.nrows(), 1, 1.0);
        hcat(m.nrows(), &[m, &extra]).qr().q()
    };
    let v = basis(&hcat(l.nrows(), &[&l, &lu]), &mut rng);
    let vp = basis(&k.transpose(), &mut rng);
    let (nzbar, nwbar) = (v.ncols(), vp.ncols());
    let g = rand_mat(&mut rng, nzbar, nzbar, 0.5) + eye(nzbar) * 2.0;
    let h = rand_mat(&mut rng, nwbar, nwbar, 0.5) + eye(nwbar) * 2.0;
    let w = inv_sqrtm_pd(&(&g * g.transpose()), 1e-14) * &g;
    let hinv = h
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular H".into()))?;
    let wp = hinv * sqrtm_psd(&(&h * h.transpose()), 1e-14);
    let (m, mp) = (w.transpose() * v.transpose(), &vp * wp.transpose());
    let global = GlobalPerformanceSystem {
        c_zbar: &m * &l,
        d_zbar_u: &m * &lu,
        d_zbar_wbar: &m * &ldw * &mp,
        b_wbar: &k * &mp,
        d_y_wbar: zeros(k.nrows(), nwbar),
        plant,
    };
    let spec = AugmentationSpec {
        s: &v * &g,
        t: &vp * &h,
        m_q: eye(v.nrows()) - &v * v.transpose(),
        m_r: eye(vp.nrows()) - &vp * vp.transpose(),
        z_dims: vec![nz; n],
        w_dims: vec![nw; n],
    };
    Ok((global, spec))
}

/// Two-subsystem plant with unstable uncontrollable modes.
pub fn unstabilizable_fixture() -> (InterconnectedSystem, Topology) {
    let topo = Topology::new(2, [(1, 2), (2, 1)]).expect("valid pair");
    let sub = |nb: usize| SubsystemSS {
        a: from_rows(&[&[1.0]]),
        bu: from_rows(&[&[0.0]]),
        bw: from_rows(&[&[1.0]]),
        cy: eye(1),
        cz: from_rows(&[&[1.0]]),
        dyw: zeros(1, 1),
        dzu: zeros(1, 1),
        dzw: zeros(1, 1),
        inputs: vec![InChannel {
            from: nb,
            bp: from_rows(&[&[0.1]]),
            dyp: zeros(1, 1),
            dzp: zeros(1, 1),
        }],
        outputs: vec![OutChannel {
            to: nb,
            cq: eye(1),
            dqw: zeros(1, 1),
        }],
    };
    let links = [((1, 2), eye(1)), ((2, 1), eye(1))].into_iter().collect();
    let sys = InterconnectedSystem::new(topo.clone(), vec![sub(2), sub(1)], links)
        .expect("valid fixture");
    (sys, topo)
}
