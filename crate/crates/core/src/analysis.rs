//! Centralized certificates: H∞ and H2 norm oracles, full-block S-procedure
//! analysis of a closed loop, and centralized static state-feedback synthesis
//! with mandatory a-posteriori re-certification.

use std::collections::BTreeMap;
use std::time::Instant;

use num_complex::Complex64;

use crate::conditions::{
    alloc_multipliers, closed_loop_link, declare_nominal_vars, dual_nominal, dual_pair_condition,
    recover_gain, subsystem_problems, MultVars, NominalVars, Perf, SubsystemProblem,
};
use crate::error::{Error, Result};
use crate::graph::{Edge, Topology};
use crate::linalg::{
    blkdiag, eigenvalues, eye, hcat, kron, rank, sigma_max, spectral_abscissa, vcat, zeros, Mat,
};
use crate::sdp::{check_feasible, solve, ConicProgram, Lmi, SolverOptions, Var, DEFAULT_MARGIN};
use crate::sysmodel::{
    close_loop, flatten, monolithic_plant, ClosedLoopSS, InterconnectedSystem, StateSpace,
    StaticGains,
};

/// H∞ norm by Hamiltonian bisection with level-set refinement. Returns
/// `f64::INFINITY` for systems whose `A` is not Hurwitz.
pub fn hinf_norm(sys: &StateSpace, rel_tol: f64) -> f64 {
    let n = sys.a.nrows();
    let sigma_at = |w: f64| sigma_max(&sys.eval(Complex64::new(0.0, w)));
    let sigma_d = sigma_max(&crate::linalg::to_complex(&sys.d));
    if n == 0 {
        return sigma_d;
    }
    if spectral_abscissa(&sys.a) >= 0.0 {
        return f64::INFINITY;
    }
    if sys.b.norm() == 0.0 || sys.c.norm() == 0.0 {
        return sigma_d;
    }
    let mut best_w = 0.0;
    let mut lb = sigma_d.max(sigma_at(0.0));
    for z in eigenvalues(&sys.a).iter() {
        for w in [z.im.abs(), z.norm()] {
            let s = sigma_at(w);
            if s > lb {
                lb = s;
                best_w = w;
            }
        }
    }
    if lb == 0.0 {
        lb = f64::MIN_POSITIVE.sqrt();
    }
    for _ in 0..100 {
        let gamma = (1.0 + 2.0 * rel_tol) * lb;
        let h = hamiltonian(sys, gamma);
        let hn = h.norm();
        let mut ws: Vec<f64> = eigenvalues(&h)
            .iter()
            .filter(|z| z.re.abs() <= 1e-7 * (1.0 + z.norm()) + 1e-12 * hn && z.im >= 0.0)
            .map(|z| z.im)
            .collect();
        if ws.is_empty() {
            break;
        }
        ws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut cands = ws.clone();
        cands.extend(ws.windows(2).map(|p| 0.5 * (p[0] + p[1])));
        let mut improved = false;
        for w in cands {
            let s = sigma_at(w);
            if s > lb * (1.0 + 0.1 * rel_tol) {
                improved = true;
            }
            if s > lb {
                lb = s;
                best_w = w;
            }
        }
        if !improved {
            break;
        }
    }
    // Golden-section polish around the best frequency found.
    let (mut a, mut b) = (0.8 * best_w, 1.25 * best_w + 1e-9);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        let (fc, fd) = (sigma_at(c), sigma_at(d));
        lb = lb.max(fc).max(fd);
        if fc > fd {
            b = d;
        } else {
            a = c;
        }
    }
    lb
}

fn hamiltonian(sys: &StateSpace, gamma: f64) -> Mat {
    let (a, b, c, d) = (&sys.a, &sys.b, &sys.c, &sys.d);
    let m = d.ncols();
    let r = eye(m) * (gamma * gamma) - d.transpose() * d;
    let rinv = r.try_inverse().unwrap_or_else(|| zeros(m, m));
    let a_h = a + b * &rinv * d.transpose() * c;
    let g = b * &rinv * b.transpose() * gamma;
    let q = c.transpose() * (eye(d.nrows()) + d * &rinv * d.transpose()) * c * (-1.0 / gamma);
    let n = a.nrows();
    let mut h = zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&a_h);
    h.view_mut((0, n), (n, n)).copy_from(&g);
    h.view_mut((n, 0), (n, n)).copy_from(&q);
    h.view_mut((n, n), (n, n)).copy_from(&(-a_h.transpose()));
    h
}

/// H2 norm from the controllability Gramian; infinite for unstable systems or
/// a nonzero feedthrough.
pub fn h2_norm(sys: &StateSpace) -> f64 {
    let n = sys.a.nrows();
    if sys.d.norm() != 0.0 || (n > 0 && spectral_abscissa(&sys.a) >= 0.0) {
        return f64::INFINITY;
    }
    if n == 0 {
        return 0.0;
    }
    let lyap = kron(&eye(n), &sys.a) + kron(&sys.a, &eye(n));
    let rhs = -(&sys.b * sys.b.transpose());
    let vec = nalgebra::DVector::from_column_slice(rhs.as_slice());
    let sol = lyap
        .lu()
        .solve(&vec)
        .expect("Hurwitz A gives a regular Lyapunov operator");
    let p = Mat::from_column_slice(n, n, sol.as_slice());
    (&sys.c * p * sys.c.transpose()).trace().max(0.0).sqrt()
}

/// Maximum singular value over `points` log-spaced frequencies in
/// `[1e-4, 1e4]` scaled by the spectral radius of `A`, plus `ω = 0`.
pub fn hinf_grid(sys: &StateSpace, points: usize) -> f64 {
    if sys.a.nrows() > 0 && spectral_abscissa(&sys.a) >= 0.0 {
        return f64::INFINITY;
    }
    let scale = eigenvalues(&sys.a)
        .iter()
        .map(|z| z.norm())
        .fold(1.0, f64::max);
    let mut best = sigma_max(&sys.eval(Complex64::new(0.0, 0.0)));
    for j in 0..points {
        let t = j as f64 / (points.max(2) - 1) as f64;
        let w = scale * 10f64.powf(-4.0 + 8.0 * t);
        best = best.max(sigma_max(&sys.eval(Complex64::new(0.0, w))));
    }
    best
}

/// Admissible structure of the multiplier blocks.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum MultiplierStructure {
    /// Independent full blocks per channel.
    #[default]
    FullPerEdge,
    /// One block shared by every channel (all channel dims must agree).
    IdenticalAcrossEdges,
    /// Blocks shared within user-supplied classes keyed by channel `(i, k)`.
    PerClass(BTreeMap<Edge, usize>),
    /// Diagonal `Q`, `R` and vanishing `S` (D-G style scalings).
    Diagonal,
}

impl MultiplierStructure {
    pub fn tag(&self) -> &'static str {
        match self {
            Self::FullPerEdge => "full-per-edge",
            Self::IdenticalAcrossEdges => "identical-across-edges",
            Self::PerClass(_) => "per-interconnection-class",
            Self::Diagonal => "diagonal",
        }
    }
}

/// Multiplier blocks of one channel.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeMultiplier {
    pub q: Mat,
    pub s: Mat,
    pub r: Mat,
}

/// Channel multipliers in canonical channel order. `dual` marks the inverse
/// multipliers `(Q̃, S̃, R̃)` used by the synthesis routines.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiplierSet {
    pub structure: MultiplierStructure,
    pub dual: bool,
    pub blocks: BTreeMap<Edge, EdgeMultiplier>,
    pub order: Vec<Edge>,
    /// Per-class blocks of the compressed (homogeneous or grouped) programs.
    pub classes: Vec<EdgeMultiplier>,
}

impl MultiplierSet {
    /// Block-diagonal `(Q, S, R)` in channel order.
    pub fn assembled(&self) -> (Mat, Mat, Mat) {
        let get = |f: fn(&EdgeMultiplier) -> &Mat| -> Mat {
            blkdiag(
                &self
                    .order
                    .iter()
                    .map(|e| f(&self.blocks[e]))
                    .collect::<Vec<_>>(),
            )
        };
        (get(|m| &m.q), get(|m| &m.s), get(|m| &m.r))
    }
}

/// Block-diagonal Lyapunov certificate.
#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovCertificate {
    pub blocks: Vec<Mat>,
}

impl LyapunovCertificate {
    pub fn assembled(&self) -> Mat {
        blkdiag(&self.blocks.iter().collect::<Vec<_>>())
    }

    pub fn min_eig(&self) -> f64 {
        self.blocks
            .iter()
            .map(crate::linalg::min_eig)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Sizes of the assembled conditions of one conic program.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProgramStats {
    pub nominal_dims: Vec<usize>,
    pub multiplier_dims: Vec<usize>,
    pub n_vars: usize,
    pub solve_seconds: f64,
}

impl ProgramStats {
    pub fn from_program(p: &ConicProgram) -> Self {
        let dims = |prefix: &str| -> Vec<usize> {
            p.lmis()
                .iter()
                .filter(|l| l.label.starts_with(prefix))
                .map(|l| l.dim())
                .collect()
        };
        Self {
            nominal_dims: dims("nominal"),
            multiplier_dims: dims("multiplier"),
            n_vars: p.n_vars(),
            solve_seconds: 0.0,
        }
    }

    pub fn n_nominal(&self) -> usize {
        self.nominal_dims.len()
    }

    pub fn n_multiplier(&self) -> usize {
        self.multiplier_dims.len()
    }
}

/// Outcome of [`fbsp_analysis`].
#[derive(Clone, Debug)]
pub struct AnalysisResult {
    pub gamma: f64,
    pub certificate: LyapunovCertificate,
    pub multipliers: MultiplierSet,
    pub program: ConicProgram,
    pub x: Vec<f64>,
    pub stats: ProgramStats,
}

impl AnalysisResult {
    /// Re-checks the solved point against every assembled condition.
    pub fn recheck(&self, tol: f64) -> (bool, f64) {
        check_feasible(&self.program, &self.x, tol)
    }
}

struct AnalysisProgram {
    program: ConicProgram,
    gamma: Var,
    xs: Vec<Var>,
    mults: BTreeMap<Edge, MultVars>,
    order: Vec<Edge>,
}

/// Nominal and multiplier conditions of the full-block S-procedure on a
/// closed loop, with block-diagonal Lyapunov matrix and structured multipliers.
fn analysis_program(
    clp: &ClosedLoopSS,
    structure: &MultiplierStructure,
    fixed_gamma: Option<f64>,
) -> Result<AnalysisProgram> {
    let g = clp.global()?;
    let (nx, np, nw, nz) = (g.a.nrows(), g.b2.ncols(), g.b1.ncols(), g.c1.nrows());
    let nq = g.c2.nrows();
    if g.p.shape() != (np, nq) {
        return Err(Error::Dimension(
            "interconnection does not match the channel sizes".into(),
        ));
    }
    let dim_xi = nx + np + nw;
    let mut p = ConicProgram::with_margin(DEFAULT_MARGIN);
    let gamma = p.scalar("gamma");
    if let Some(v) = fixed_gamma {
        p.add_eq(vec![(gamma.offset, 1.0)], v);
    }

    let mut channels = Vec::new();
    let mut offsets = Vec::new();
    let (mut op, mut oq) = (0, 0);
    for (idx, s) in clp.subs.iter().enumerate() {
        for c in &s.channels {
            if c.np + c.nq > 0 {
                channels.push(((idx + 1, c.neighbor), c.np, c.nq));
                offsets.push((op, oq));
            }
            op += c.np;
            oq += c.nq;
        }
    }
    let mults = alloc_multipliers(&mut p, &channels, structure, "M")?;
    let xs: Vec<Var> = clp
        .subs
        .iter()
        .enumerate()
        .map(|(i, s)| p.sym(&format!("X{}", i + 1), s.a.nrows()))
        .collect();

    let f = crate::linalg::hcat(nx, &[&g.a, &g.b2, &g.b1]);
    let eq_all = crate::linalg::hcat(nq, &[&g.c2, &g.d22, &g.d21]);
    let ez = crate::linalg::hcat(nz, &[&g.c1, &g.d12, &g.d11]);
    let mut nom = Lmi::new(dim_xi + nz, "nominal");
    let mut ox = 0;
    for (i, s) in clp.subs.iter().enumerate() {
        let n = s.a.nrows();
        let mut sel = zeros(n, dim_xi);
        sel.view_mut((0, ox), (n, n)).copy_from(&eye(n));
        let rows = f.rows(ox, n).into_owned();
        nom.add_he(0, &sel.transpose(), xs[i], &rows, 1.0);
        ox += n;
    }
    let mut mult = Lmi::new(nq, "multiplier");
    for (&((i, k), cnp, cnq), &(o_p, o_q)) in channels.iter().zip(&offsets) {
        let m = mults[&(i, k)];
        let mut ep = zeros(cnp, dim_xi);
        ep.view_mut((0, nx + o_p), (cnp, cnp)).copy_from(&eye(cnp));
        let eq = eq_all.rows(o_q, cnq).into_owned();
        nom.add(0, 0, &ep.transpose(), m.q, &ep, 1.0);
        if cnp > 0 && cnq > 0 {
            nom.add_he(0, &ep.transpose(), m.s, &eq, 1.0);
        }
        nom.add(0, 0, &eq.transpose(), m.r, &eq, 1.0);

        let prow = g.p.rows(o_p, cnp).into_owned();
        let mut qsel = zeros(cnq, nq);
        qsel.view_mut((0, o_q), (cnq, cnq)).copy_from(&eye(cnq));
        mult.add(0, 0, &prow.transpose(), m.q, &prow, 1.0);
        if cnp > 0 && cnq > 0 {
            mult.add_he(0, &prow.transpose(), m.s, &qsel, 1.0);
        }
        mult.add(0, 0, &qsel.transpose(), m.r, &qsel, 1.0);
    }
    nom.add_scalar(nx + np, nx + np, gamma, &eye(nw), -1.0);
    nom.add_const(dim_xi, 0, &ez);
    nom.add_scalar(dim_xi, dim_xi, gamma, &eye(nz), -1.0);
    p.add_nsd(nom);
    p.add_psd(mult);
    for (i, &x) in xs.iter().enumerate() {
        let mut l = Lmi::new(x.shape().0, format!("lyapunov{}", i + 1));
        l.add_var(0, 0, x, 1.0);
        p.add_psd(l);
    }
    p.add_objective(gamma.offset, 1.0);
    let order = channels.iter().map(|c| c.0).collect();
    Ok(AnalysisProgram {
        program: p,
        gamma,
        xs,
        mults,
        order,
    })
}

/// Minimizes the L2-gain bound `γ` certified by the full-block S-procedure
/// with a block-diagonal Lyapunov matrix and multipliers of the given structure.
pub fn fbsp_analysis(
    clp: &ClosedLoopSS,
    structure: &MultiplierStructure,
) -> Result<AnalysisResult> {
    let ap = analysis_program(clp, structure, None)?;
    let t0 = Instant::now();
    let sol = solve(&ap.program, &SolverOptions::default()).require_optimal()?;
    let mut stats = ProgramStats::from_program(&ap.program);
    stats.solve_seconds = t0.elapsed().as_secs_f64();
    let x = sol.x;
    let blocks = ap
        .order
        .iter()
        .map(|e| {
            let (q, s, r) = ap.mults[e].values(&x);
            (*e, EdgeMultiplier { q, s, r })
        })
        .collect();
    Ok(AnalysisResult {
        gamma: ap.gamma.scalar_value(&x),
        certificate: LyapunovCertificate {
            blocks: ap.xs.iter().map(|v| v.value(&x)).collect(),
        },
        multipliers: MultiplierSet {
            structure: structure.clone(),
            dual: false,
            blocks,
            order: ap.order,
            classes: vec![],
        },
        program: ap.program,
        x,
        stats,
    })
}

/// Feasibility of the analysis conditions at a fixed `γ`.
pub fn fbsp_feasible(
    clp: &ClosedLoopSS,
    structure: &MultiplierStructure,
    gamma: f64,
) -> Result<bool> {
    let mut ap = analysis_program(clp, structure, Some(gamma))?;
    ap.program.add_objective(ap.gamma.offset, -1.0);
    match solve(&ap.program, &SolverOptions::default()).require_optimal() {
        Ok(_) => Ok(true),
        Err(Error::Infeasible) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Synthesis routine that produced a result.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Central,
    Decomposed,
    Homogeneous,
    AlphaBeta,
    Admm,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Central => "central",
            Self::Decomposed => "decomposed",
            Self::Homogeneous => "homogeneous",
            Self::AlphaBeta => "alphabeta",
            Self::Admm => "admm",
        }
    }
}

/// Options shared by the synthesis routines.
#[derive(Clone, Debug)]
pub struct SynthesisOptions {
    pub solver: SolverOptions,
    pub margin: f64,
    pub structure: MultiplierStructure,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            margin: DEFAULT_MARGIN,
            structure: MultiplierStructure::FullPerEdge,
        }
    }
}

/// A-posteriori evidence for a synthesized controller.
#[derive(Clone, Debug)]
pub struct Certification {
    /// `γ` certified by [`fbsp_analysis`] on the transposed closed loop, whose
    /// conditions have the block structure of the synthesis conditions.
    pub analysis_gamma: f64,
    /// Worst violation of the analysis conditions at the solver's point.
    pub analysis_violation: f64,
    /// H∞ norm of the flattened closed loop.
    pub hinf: f64,
    pub spectral_abscissa: f64,
}

/// Result of any synthesis routine.
#[derive(Clone, Debug)]
pub struct SynthesisResult {
    pub method: Method,
    /// Optimal bound of the synthesis program.
    pub gamma: f64,
    pub gains: StaticGains,
    pub controller_topology: Topology,
    /// Dual Lyapunov blocks `W_i = X_i^{-1}`.
    pub lyapunov: LyapunovCertificate,
    pub multipliers: MultiplierSet,
    pub stats: ProgramStats,
    pub certification: Certification,
}

impl SynthesisResult {
    /// Largest of the synthesized and re-certified bounds.
    pub fn certified_gamma(&self) -> f64 {
        self.gamma.max(self.certification.analysis_gamma)
    }
}

/// PBH test on the monolithic plant: every eigenvalue of `A` with
/// nonnegative real part must leave `[A - λI, B_u]` with full row rank.
/// Fails with [`Error::Infeasible`] otherwise, since then no controller of
/// any structure stabilizes the network.
pub fn ensure_stabilizable(sys: &InterconnectedSystem) -> Result<()> {
    let g = monolithic_plant(sys)?;
    let n = g.a.nrows();
    for lam in eigenvalues(&g.a).iter().filter(|l| l.re >= -1e-9) {
        // Realified [A - λI, B_u]; its rank is twice the complex rank.
        let re = hcat(n, &[&(&g.a - eye(n) * lam.re), &g.bu]);
        let im = hcat(n, &[&(eye(n) * -lam.im), &zeros(n, g.bu.ncols())]);
        let real = vcat(
            2 * re.ncols(),
            &[&hcat(n, &[&re, &(-&im)]), &hcat(n, &[&im, &re])],
        );
        if rank(&real, 1e-10) < 2 * n {
            return Err(Error::Infeasible);
        }
    }
    Ok(())
}

/// Relative slack allowed between the a-posteriori H∞ norm and a bound.
pub const CERT_REL_TOL: f64 = 1e-6;

/// Closes the loop with static gains, re-runs the analysis and the H∞ oracle,
/// and fails unless both confirm the bound `gamma`.
pub fn certify(
    sys: &InterconnectedSystem,
    gains: &StaticGains,
    topo_k: &Topology,
    gamma: f64,
) -> Result<Certification> {
    let ctrl = gains.to_controller(sys, topo_k)?;
    let clp = close_loop(sys, &ctrl)?;
    let flat = flatten(&clp)?;
    let abscissa = flat.spectral_abscissa();
    let hinf = hinf_norm(&flat, 1e-9);
    if !hinf.is_finite() {
        return Err(Error::Certification(format!(
            "closed loop is unstable (abscissa {abscissa:.3e})"
        )));
    }
    let dual = clp.transpose();
    let (analysis_gamma, analysis_violation) =
        match fbsp_analysis(&dual, &MultiplierStructure::FullPerEdge) {
            Ok(a) => (a.gamma, a.recheck(0.0).1),
            Err(Error::Infeasible) => {
                return Err(Error::Certification(
                    "analysis conditions infeasible".into(),
                ))
            }
            Err(Error::Numerical(_)) => {
                // Near-singular optima (very large gains) can stall the minimisation
                // while the problem at a fixed level stays well posed.
                let level = gamma * (1.0 + CERT_REL_TOL);
                let ap = analysis_program(&dual, &MultiplierStructure::FullPerEdge, Some(level))?;
                match solve(&ap.program, &SolverOptions::default()).require_optimal() {
                    Ok(sol) => (level, check_feasible(&ap.program, &sol.x, 0.0).1),
                    Err(Error::Infeasible) => {
                        return Err(Error::Certification(
                            "analysis conditions infeasible".into(),
                        ))
                    }
                    Err(e) => return Err(e),
                }
            }
            Err(e) => return Err(e),
        };
    let bound = gamma.max(analysis_gamma);
    if hinf > bound * (1.0 + CERT_REL_TOL) {
        return Err(Error::Certification(format!(
            "H∞ norm {hinf:.9} exceeds the bound {bound:.9}"
        )));
    }
    Ok(Certification {
        analysis_gamma,
        analysis_violation,
        hinf,
        spectral_abscissa: abscissa,
    })
}

/// Whether the conditions are stacked into one nominal and one multiplier
/// LMI, or kept per subsystem and per directed edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Layout {
    Central,
    Decomposed,
}

pub(crate) struct HeteroProgram {
    pub program: ConicProgram,
    pub gamma: Var,
    pub problems: Vec<SubsystemProblem>,
    pub vars: Vec<NominalVars>,
    pub mults: BTreeMap<Edge, MultVars>,
    pub order: Vec<Edge>,
}

/// Assembles the state-feedback program over all subsystems.
pub(crate) fn hetero_program(
    sys: &InterconnectedSystem,
    topo_k: &Topology,
    opts: &SynthesisOptions,
    layout: Layout,
) -> Result<HeteroProgram> {
    let (comm, problems) = subsystem_problems(sys, topo_k)?;
    let mut p = ConicProgram::with_margin(opts.margin);
    let gamma = p.scalar("gamma");
    let mut channels = Vec::new();
    for pr in &problems {
        let nu = pr.spec.nu();
        for (c, &k) in pr.neighbors.iter().enumerate() {
            let ch = &pr.spec.channels[c];
            if !ch.is_empty(nu) {
                channels.push(((pr.index, k), ch.np(nu), ch.nq()));
            }
        }
    }
    let mults = alloc_multipliers(&mut p, &channels, &opts.structure, "M")?;
    let empty = MultVars::declare(&mut p, "empty", 0, 0);

    let mut vars = Vec::with_capacity(problems.len());
    let mut nominals = Vec::new();
    for pr in &problems {
        let (w, y, ye) = declare_nominal_vars(&mut p, &pr.spec, &pr.index.to_string());
        let m = pr
            .neighbors
            .iter()
            .map(|&k| mults.get(&(pr.index, k)).copied())
            .collect();
        let v = NominalVars { w, y, ye, mults: m };
        nominals.push(dual_nominal(
            &pr.spec,
            &v,
            Perf::Gamma(gamma),
            &format!("nominal{}", pr.index),
        ));
        let mut lw = Lmi::new(pr.spec.nx(), format!("lyapunov{}", pr.index));
        lw.add_var(0, 0, w, 1.0);
        p.add_psd(lw);
        vars.push(v);
    }
    let mut pairs = Vec::new();
    for (i, k) in comm.edges() {
        if layout == Layout::Central && i > k {
            continue;
        }
        let m_ik = mults.get(&(i, k)).unwrap_or(&empty);
        let m_ki = mults.get(&(k, i)).unwrap_or(&empty);
        let p_ik = closed_loop_link(sys, topo_k, i, k);
        let p_ki = closed_loop_link(sys, topo_k, k, i);
        if let Some(l) =
            dual_pair_condition(m_ik, m_ki, &p_ik, &p_ki, &format!("multiplier{i}_{k}"))
        {
            pairs.push(l);
        }
    }
    match layout {
        Layout::Central => {
            p.add_nsd(Lmi::block_diag(nominals, "nominal"));
            p.add_nsd(Lmi::block_diag(pairs, "multiplier"));
        }
        Layout::Decomposed => {
            for l in nominals.into_iter().chain(pairs) {
                p.add_nsd(l);
            }
        }
    }
    p.add_objective(gamma.offset, 1.0);
    let order = channels.iter().map(|c| c.0).collect();
    Ok(HeteroProgram {
        program: p,
        gamma,
        problems,
        vars,
        mults,
        order,
    })
}

/// Extracts gains, certificates and multipliers from a solved program.
pub(crate) fn extract_hetero(
    hp: &HeteroProgram,
    x: &[f64],
    n_nodes: usize,
) -> Result<(
    StaticGains,
    LyapunovCertificate,
    BTreeMap<Edge, EdgeMultiplier>,
)> {
    let mut local = Vec::with_capacity(n_nodes);
    let mut edges = BTreeMap::new();
    let mut ws = Vec::with_capacity(n_nodes);
    for (pr, v) in hp.problems.iter().zip(&hp.vars) {
        let w = v.w.value(x);
        local.push(recover_gain(&v.y.value(x), &w)?);
        for (c, &k) in pr.neighbors.iter().enumerate() {
            if let Some(ye) = v.ye[c] {
                edges.insert((k, pr.index), recover_gain(&ye.value(x), &w)?);
            }
        }
        ws.push(w);
    }
    let blocks = hp
        .order
        .iter()
        .map(|e| {
            let (q, s, r) = hp.mults[e].values(x);
            (*e, EdgeMultiplier { q, s, r })
        })
        .collect();
    Ok((
        StaticGains { local, edges },
        LyapunovCertificate { blocks: ws },
        blocks,
    ))
}

pub(crate) fn run_hetero(
    sys: &InterconnectedSystem,
    topo_k: &Topology,
    opts: &SynthesisOptions,
    layout: Layout,
    method: Method,
) -> Result<SynthesisResult> {
    ensure_stabilizable(sys)?;
    let hp = hetero_program(sys, topo_k, opts, layout)?;
    let t0 = Instant::now();
    let sol = solve(&hp.program, &opts.solver).require_optimal()?;
    let mut stats = ProgramStats::from_program(&hp.program);
    stats.solve_seconds = t0.elapsed().as_secs_f64();
    let gamma = hp.gamma.scalar_value(&sol.x);
    let (gains, lyapunov, blocks) = extract_hetero(&hp, &sol.x, sys.n())?;
    let certification = certify(sys, &gains, topo_k, gamma)?;
    Ok(SynthesisResult {
        method,
        gamma,
        gains,
        controller_topology: topo_k.clone(),
        lyapunov,
        multipliers: MultiplierSet {
            structure: opts.structure.clone(),
            dual: true,
            blocks,
            order: hp.order,
            classes: vec![],
        },
        stats,
        certification,
    })
}

/// Centralized static state-feedback synthesis: one nominal condition over all
/// subsystems and one multiplier condition over all channels.
pub fn hinf_state_feedback_central(
    sys: &InterconnectedSystem,
    topo_k: &Topology,
    opts: &SynthesisOptions,
) -> Result<SynthesisResult> {
    run_hetero(sys, topo_k, opts, Layout::Central, Method::Central)
}
