//! Semidefinite program facade.
//!
//! Callers declare scalar, rectangular and symmetric matrix variables, then
//! assemble affine symmetric matrix functions `F(x) = F0 + sum_j x_j F_j`
//! blockwise and require them to be positive (or negative) semidefinite with a
//! margin. The objective is linear plus an optional convex quadratic part.
//! Everything is handed to Clarabel in one conic program.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Once;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, PSDTriangleConeT,
    SolverStatus, SupportedConeT, ZeroConeT,
};

use crate::error::{Error, Result};
use crate::linalg::{min_eig, Mat};

/// Default margin turning strict inequalities into `>= eps I`.
pub const DEFAULT_MARGIN: f64 = 1e-7;

extern "C" {
    fn openblas_set_num_threads(n: std::os::raw::c_int);
}

static BLAS_INIT: Once = Once::new();

fn pin_blas_threads() {
    BLAS_INIT.call_once(|| unsafe { openblas_set_num_threads(1) });
}

/// Shape of a declared variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Scalar,
    Mat(usize, usize),
    Sym(usize),
}

/// Handle to a block of scalar decision variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    pub offset: usize,
    pub kind: VarKind,
}

impl Var {
    pub fn len(&self) -> usize {
        match self.kind {
            VarKind::Scalar => 1,
            VarKind::Mat(r, c) => r * c,
            VarKind::Sym(n) => n * (n + 1) / 2,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> (usize, usize) {
        match self.kind {
            VarKind::Scalar => (1, 1),
            VarKind::Mat(r, c) => (r, c),
            VarKind::Sym(n) => (n, n),
        }
    }

    /// Global scalar index of entry `(i, j)`. Symmetric variables store the
    /// upper triangle column by column.
    pub fn index(&self, i: usize, j: usize) -> usize {
        match self.kind {
            VarKind::Scalar => self.offset,
            VarKind::Mat(r, _) => self.offset + j * r + i,
            VarKind::Sym(_) => {
                let (a, b) = if i <= j { (i, j) } else { (j, i) };
                self.offset + b * (b + 1) / 2 + a
            }
        }
    }

    /// All scalar indices in storage order.
    pub fn indices(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    /// Value of the variable as a dense matrix.
    pub fn value(&self, x: &[f64]) -> Mat {
        let (r, c) = self.shape();
        Mat::from_fn(r, c, |i, j| x[self.index(i, j)])
    }

    pub fn scalar_value(&self, x: &[f64]) -> f64 {
        x[self.offset]
    }

    /// Each scalar of the variable with the unit matrix it multiplies.
    fn units(&self) -> Vec<(usize, Vec<(usize, usize)>)> {
        match self.kind {
            VarKind::Scalar => vec![(self.offset, vec![(0, 0)])],
            VarKind::Mat(r, c) => (0..c)
                .flat_map(|j| (0..r).map(move |i| (self.index(i, j), vec![(i, j)])))
                .collect(),
            VarKind::Sym(n) => (0..n)
                .flat_map(|j| {
                    (0..=j).map(move |i| {
                        let pos = if i == j {
                            vec![(i, i)]
                        } else {
                            vec![(i, j), (j, i)]
                        };
                        (self.index(i, j), pos)
                    })
                })
                .collect(),
        }
    }
}

/// Affine symmetric matrix function `F0 + sum_j x_j F_j`, stored sparsely on
/// the upper triangle.
#[derive(Clone, Debug)]
pub struct Lmi {
    dim: usize,
    f0: Mat,
    coef: BTreeMap<(usize, usize, usize), f64>,
    pub label: String,
}

impl Lmi {
    pub fn new(dim: usize, label: impl Into<String>) -> Self {
        Self {
            dim,
            f0: Mat::zeros(dim, dim),
            coef: BTreeMap::new(),
            label: label.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn put(&mut self, var: usize, a: usize, b: usize, v: f64) {
        if v == 0.0 {
            return;
        }
        let key = if a <= b { (var, a, b) } else { (var, b, a) };
        *self.coef.entry(key).or_insert(0.0) += v;
    }

    fn check_block(&self, r0: usize, c0: usize, rows: usize, cols: usize) {
        assert!(
            r0 + rows <= self.dim && c0 + cols <= self.dim,
            "block outside LMI '{}'",
            self.label
        );
        if r0 != c0 {
            let disjoint = r0 + rows <= c0 || c0 + cols <= r0;
            assert!(
                disjoint || rows == 0 || cols == 0,
                "overlapping off-diagonal block in LMI '{}'",
                self.label
            );
        }
    }

    /// Places constant block `m` at `(r0, c0)`. Off-diagonal placements also
    /// set the mirrored transpose; diagonal placements use the symmetric part.
    pub fn add_const(&mut self, r0: usize, c0: usize, m: &Mat) {
        self.check_block(r0, c0, m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if r0 == c0 {
                    self.f0[(r0 + i, c0 + j)] += 0.5 * v;
                    self.f0[(c0 + j, r0 + i)] += 0.5 * v;
                } else {
                    self.f0[(r0 + i, c0 + j)] += v;
                    self.f0[(c0 + j, r0 + i)] += v;
                }
            }
        }
    }

    /// Places `s * L V R` at `(r0, c0)` with the same mirroring rules as
    /// [`Lmi::add_const`].
    pub fn add(&mut self, r0: usize, c0: usize, l: &Mat, v: Var, r: &Mat, s: f64) {
        let (vr, vc) = v.shape();
        assert_eq!(
            l.ncols(),
            vr,
            "left factor does not match variable in LMI '{}'",
            self.label
        );
        assert_eq!(
            r.nrows(),
            vc,
            "right factor does not match variable in LMI '{}'",
            self.label
        );
        let (rows, cols) = (l.nrows(), r.ncols());
        self.check_block(r0, c0, rows, cols);
        let diag = r0 == c0;
        for (idx, units) in v.units() {
            for &(p, q) in &units {
                for a in 0..rows {
                    let la = l[(a, p)];
                    if la == 0.0 {
                        continue;
                    }
                    for b in 0..cols {
                        let val = s * la * r[(q, b)];
                        if val == 0.0 {
                            continue;
                        }
                        if diag {
                            let (ga, gb) = (r0 + a, c0 + b);
                            if ga == gb {
                                self.put(idx, ga, gb, val);
                            } else {
                                self.put(idx, ga, gb, 0.5 * val);
                            }
                        } else {
                            self.put(idx, r0 + a, c0 + b, val);
                        }
                    }
                }
            }
        }
    }

    /// Adds `s * (L V R + (L V R)^T)` on the diagonal block starting at `r0`.
    pub fn add_he(&mut self, r0: usize, l: &Mat, v: Var, r: &Mat, s: f64) {
        self.add(r0, r0, l, v, r, 2.0 * s);
    }

    /// Places `s * x * M` for a scalar variable `x`.
    pub fn add_scalar(&mut self, r0: usize, c0: usize, x: Var, m: &Mat, s: f64) {
        assert_eq!(x.kind, VarKind::Scalar);
        self.check_block(r0, c0, m.nrows(), m.ncols());
        for a in 0..m.nrows() {
            for b in 0..m.ncols() {
                let val = s * m[(a, b)];
                if r0 == c0 && a != b {
                    self.put(x.offset, r0 + a, c0 + b, 0.5 * val);
                } else {
                    self.put(x.offset, r0 + a, c0 + b, val);
                }
            }
        }
    }

    /// Places `s * V` for a variable whose shape matches the block directly.
    pub fn add_var(&mut self, r0: usize, c0: usize, v: Var, s: f64) {
        let (r, c) = v.shape();
        self.add(r0, c0, &Mat::identity(r, r), v, &Mat::identity(c, c), s);
    }

    /// Adds `s * I_n` on the diagonal starting at `r0`.
    pub fn add_identity(&mut self, r0: usize, n: usize, s: f64) {
        for i in 0..n {
            self.f0[(r0 + i, r0 + i)] += s;
        }
    }

    /// Stacks several affine matrix functions block-diagonally.
    pub fn block_diag(parts: Vec<Lmi>, label: impl Into<String>) -> Lmi {
        let dim = parts.iter().map(|l| l.dim).sum();
        let mut out = Lmi::new(dim, label);
        let mut off = 0;
        for l in parts {
            out.f0.view_mut((off, off), (l.dim, l.dim)).copy_from(&l.f0);
            for ((var, a, b), v) in l.coef {
                out.put(var, a + off, b + off, v);
            }
            off += l.dim;
        }
        out
    }

    /// Evaluates the symmetric matrix at a point.
    pub fn eval(&self, x: &[f64]) -> Mat {
        let mut m = self.f0.clone();
        for (&(var, a, b), &c) in &self.coef {
            m[(a, b)] += c * x[var];
            if a != b {
                m[(b, a)] += c * x[var];
            }
        }
        m
    }

    fn negated(&self) -> Lmi {
        Lmi {
            dim: self.dim,
            f0: -&self.f0,
            coef: self.coef.iter().map(|(k, v)| (*k, -v)).collect(),
            label: self.label.clone(),
        }
    }

    fn shifted(mut self, eps: f64) -> Lmi {
        for i in 0..self.dim {
            self.f0[(i, i)] -= eps;
        }
        self
    }

    /// Index sets of the connected components of the sparsity graph.
    fn components(&self) -> Vec<Vec<usize>> {
        let n = self.dim;
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut Vec<usize>, mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        let join = |p: &mut Vec<usize>, a: usize, b: usize| {
            let (ra, rb) = (find(p, a), find(p, b));
            if ra != rb {
                p[ra.max(rb)] = ra.min(rb);
            }
        };
        for a in 0..n {
            for b in a + 1..n {
                if self.f0[(a, b)] != 0.0 {
                    join(&mut parent, a, b);
                }
            }
        }
        for &(_, a, b) in self.coef.keys() {
            if a != b {
                join(&mut parent, a, b);
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
        groups.into_values().collect()
    }
}

#[derive(Clone, Debug)]
struct LinEq {
    coefs: Vec<(usize, f64)>,
    rhs: f64,
}

/// A conic program: `min 1/2 x'Px + q'x + c0` subject to affine PSD and linear
/// equality constraints.
#[derive(Clone, Debug)]
pub struct ConicProgram {
    n: usize,
    names: Vec<(String, Var)>,
    q: Vec<f64>,
    p: BTreeMap<(usize, usize), f64>,
    obj_const: f64,
    lmis: Vec<Lmi>,
    eqs: Vec<LinEq>,
    margin: f64,
}

impl Default for ConicProgram {
    fn default() -> Self {
        Self::new()
    }
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::with_margin(DEFAULT_MARGIN)
    }

    pub fn with_margin(margin: f64) -> Self {
        Self {
            n: 0,
            names: Vec::new(),
            q: Vec::new(),
            p: BTreeMap::new(),
            obj_const: 0.0,
            lmis: Vec::new(),
            eqs: Vec::new(),
            margin,
        }
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn lmis(&self) -> &[Lmi] {
        &self.lmis
    }

    pub fn variables(&self) -> &[(String, Var)] {
        &self.names
    }

    fn declare(&mut self, name: &str, kind: VarKind) -> Var {
        let v = Var {
            offset: self.n,
            kind,
        };
        self.n += v.len();
        self.q.resize(self.n, 0.0);
        self.names.push((name.to_string(), v));
        v
    }

    pub fn scalar(&mut self, name: &str) -> Var {
        self.declare(name, VarKind::Scalar)
    }

    pub fn mat(&mut self, name: &str, r: usize, c: usize) -> Var {
        self.declare(name, VarKind::Mat(r, c))
    }

    pub fn sym(&mut self, name: &str, n: usize) -> Var {
        self.declare(name, VarKind::Sym(n))
    }

    /// Adds `c * x_idx` to the objective.
    pub fn add_objective(&mut self, idx: usize, c: f64) {
        self.q[idx] += c;
    }

    /// Adds `w * sum_k (x_{idx_k} - center_k)^2` to the objective.
    pub fn add_prox(&mut self, idx: &[usize], center: &[f64], w: f64) {
        assert_eq!(idx.len(), center.len());
        for (&i, &c) in idx.iter().zip(center) {
            *self.p.entry((i, i)).or_insert(0.0) += 2.0 * w;
            self.q[i] -= 2.0 * w * c;
            self.obj_const += w * c * c;
        }
    }

    /// Requires `F(x) >= margin * I`.
    pub fn add_psd(&mut self, lmi: Lmi) {
        let m = self.margin;
        self.add_psd_margin(lmi, m);
    }

    /// Requires `F(x) <= -margin * I`.
    pub fn add_nsd(&mut self, lmi: Lmi) {
        let m = self.margin;
        self.add_psd_margin(lmi.negated(), m);
    }

    /// Requires `F(x) >= eps * I` for an explicit `eps` (zero gives the non-strict form).
    pub fn add_psd_margin(&mut self, lmi: Lmi, eps: f64) {
        if lmi.dim > 0 {
            self.lmis.push(lmi.shifted(eps));
        }
    }

    /// Requires `sum coefs * x = rhs`.
    pub fn add_eq(&mut self, coefs: Vec<(usize, f64)>, rhs: f64) {
        self.eqs.push(LinEq { coefs, rhs });
    }

    /// Requires two equally shaped variables to coincide entrywise.
    pub fn tie(&mut self, a: Var, b: Var) {
        assert_eq!(a.kind, b.kind);
        for (ia, ib) in a.indices().zip(b.indices()) {
            self.add_eq(vec![(ia, 1.0), (ib, -1.0)], 0.0);
        }
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut v = self.obj_const;
        for (i, &q) in self.q.iter().enumerate() {
            v += q * x[i];
        }
        for (&(a, b), &p) in &self.p {
            let f = if a == b { 0.5 } else { 1.0 };
            v += f * p * x[a] * x[b];
        }
        v
    }

    /// Plain-text dump in an SDPA-like sparse layout (linear objective part only,
    /// quadratic terms listed as comments).
    pub fn to_sdpa(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "\"netsynth conic program, margin {}\"", self.margin);
        for (&(a, b), &p) in &self.p {
            let _ = writeln!(s, "* quad {} {} {}", a + 1, b + 1, p);
        }
        let _ = writeln!(s, "{}", self.n);
        let _ = writeln!(s, "{}", self.lmis.len());
        let dims: Vec<String> = self.lmis.iter().map(|l| l.dim.to_string()).collect();
        let _ = writeln!(s, "{}", dims.join(" "));
        let q: Vec<String> = self.q.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", q.join(" "));
        for (blk, l) in self.lmis.iter().enumerate() {
            for a in 0..l.dim {
                for b in a..l.dim {
                    if l.f0[(a, b)] != 0.0 {
                        let _ = writeln!(s, "0 {} {} {} {}", blk + 1, a + 1, b + 1, -l.f0[(a, b)]);
                    }
                }
            }
            for (&(var, a, b), &c) in &l.coef {
                let _ = writeln!(s, "{} {} {} {} {}", var + 1, blk + 1, a + 1, b + 1, c);
            }
        }
        s
    }
}

/// Solver verdict.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub max_violation: f64,
    pub iterations: u32,
    pub detail: String,
}

impl ConicSolution {
    /// Converts non-optimal outcomes into errors.
    pub fn require_optimal(self) -> Result<ConicSolution> {
        match self.status {
            SolveStatus::Optimal => Ok(self),
            SolveStatus::Infeasible => Err(Error::Infeasible),
            SolveStatus::NumericalFailure => Err(Error::Numerical(self.detail)),
        }
    }
}

/// Solver tolerances.
#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: u32,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 400,
        }
    }
}

struct Triplets {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Triplets {
    fn new() -> Self {
        Self {
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    fn push(&mut self, r: usize, c: usize, v: f64) {
        if v != 0.0 {
            self.rows.push(r);
            self.cols.push(c);
            self.vals.push(v);
        }
    }

    fn into_csc(self, m: usize, n: usize) -> CscMatrix<f64> {
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for ((r, c), v) in self.rows.into_iter().zip(self.cols).zip(self.vals) {
            *acc.entry((c, r)).or_insert(0.0) += v;
        }
        let mut colptr = vec![0usize; n + 1];
        let mut rowval = Vec::with_capacity(acc.len());
        let mut nzval = Vec::with_capacity(acc.len());
        for (&(c, r), &v) in &acc {
            colptr[c + 1] += 1;
            rowval.push(r);
            nzval.push(v);
        }
        for c in 0..n {
            colptr[c + 1] += colptr[c];
        }
        CscMatrix::new(m, n, colptr, rowval, nzval)
    }
}

/// Solves the program with Clarabel.
pub fn solve(p: &ConicProgram, opts: &SolverOptions) -> ConicSolution {
    pin_blas_threads();
    let n = p.n;
    let sqrt2 = std::f64::consts::SQRT_2;

    let mut a = Triplets::new();
    let mut b: Vec<f64> = Vec::new();
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

    for eq in &p.eqs {
        let row = b.len();
        for &(j, c) in &eq.coefs {
            a.push(row, j, c);
        }
        b.push(eq.rhs);
    }
    if !p.eqs.is_empty() {
        cones.push(ZeroConeT(p.eqs.len()));
    }

    // Split every LMI into independent diagonal blocks; 1x1 blocks become
    // nonnegativity rows, larger blocks PSD triangle cones.
    let mut scalar_rows: Vec<(usize, usize)> = Vec::new();
    let mut blocks: Vec<(usize, Vec<usize>)> = Vec::new();
    for (li, l) in p.lmis.iter().enumerate() {
        for comp in l.components() {
            if comp.len() == 1 {
                scalar_rows.push((li, comp[0]));
            } else {
                blocks.push((li, comp));
            }
        }
    }
    let mut by_entry: Vec<BTreeMap<(usize, usize), Vec<(usize, f64)>>> =
        vec![BTreeMap::new(); p.lmis.len()];
    for (li, l) in p.lmis.iter().enumerate() {
        for (&(var, r, c), &v) in &l.coef {
            by_entry[li].entry((r, c)).or_default().push((var, v));
        }
    }
    if !scalar_rows.is_empty() {
        for &(li, r) in &scalar_rows {
            let row = b.len();
            if let Some(terms) = by_entry[li].get(&(r, r)) {
                for &(var, v) in terms {
                    a.push(row, var, -v);
                }
            }
            b.push(p.lmis[li].f0[(r, r)]);
        }
        cones.push(NonnegativeConeT(scalar_rows.len()));
    }
    for (li, comp) in &blocks {
        let l = &p.lmis[*li];
        for (jb, &gb) in comp.iter().enumerate() {
            for &ga in comp.iter().take(jb + 1) {
                let scale = if ga == gb { 1.0 } else { sqrt2 };
                let row = b.len();
                if let Some(terms) = by_entry[*li].get(&(ga, gb)) {
                    for &(var, v) in terms {
                        a.push(row, var, -v * scale);
                    }
                }
                b.push(l.f0[(ga, gb)] * scale);
            }
        }
        cones.push(PSDTriangleConeT(comp.len()));
    }

    let m = b.len();
    let amat = a.into_csc(m, n);
    let mut pt = Triplets::new();
    for (&(r, c), &v) in &p.p {
        pt.push(r, c, v);
    }
    let pmat = pt.into_csc(n, n);

    let mut last = None;
    for attempt in 0..RETRY_SETTINGS {
        let sol = run_clarabel(p, opts, attempt, &pmat, &amat, &b, &cones);
        if sol.status != SolveStatus::NumericalFailure {
            return sol;
        }
        last = Some(sol);
    }
    last.expect("at least one attempt")
}

const RETRY_SETTINGS: usize = 3;

#[allow(clippy::too_many_arguments)]
fn run_clarabel(
    p: &ConicProgram,
    opts: &SolverOptions,
    attempt: usize,
    pmat: &CscMatrix<f64>,
    amat: &CscMatrix<f64>,
    b: &[f64],
    cones: &[SupportedConeT<f64>],
) -> ConicSolution {
    let n = p.n;
    let mut builder = DefaultSettingsBuilder::default();
    builder
        .verbose(false)
        .max_iter(opts.max_iter)
        .tol_gap_abs(opts.tol)
        .tol_gap_rel(opts.tol)
        .tol_feas(opts.tol)
        .max_threads(1);
    match attempt {
        0 => {}
        1 => {
            builder
                .equilibrate_enable(false)
                .static_regularization_constant(1e-7);
        }
        _ => {
            builder
                .tol_gap_abs(opts.tol * 10.0)
                .tol_gap_rel(opts.tol * 10.0)
                .tol_feas(opts.tol * 10.0)
                .max_step_fraction(0.95)
                .static_regularization_proportional(1e-12);
        }
    }
    let settings = builder.build().expect("valid solver settings");

    let mut solver = match DefaultSolver::new(pmat, &p.q, amat, b, cones, settings) {
        Ok(s) => s,
        Err(e) => {
            return ConicSolution {
                status: SolveStatus::NumericalFailure,
                x: vec![0.0; n],
                objective: f64::NAN,
                max_violation: f64::INFINITY,
                iterations: 0,
                detail: format!("solver setup failed: {e:?}"),
            }
        }
    };
    solver.solve();
    let sol = &solver.solution;
    let status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        _ => SolveStatus::NumericalFailure,
    };
    let x = sol.x.clone();
    let (_, viol) = check_feasible(p, &x, 0.0);
    ConicSolution {
        status,
        objective: p.objective(&x),
        x,
        max_violation: viol,
        iterations: sol.iterations,
        detail: format!("{:?}", sol.status),
    }
}

/// True iff every PSD constraint has smallest eigenvalue at least `-tol` and every
/// equality holds within `tol`; also returns the worst violation.
pub fn check_feasible(p: &ConicProgram, x: &[f64], tol: f64) -> (bool, f64) {
    assert_eq!(x.len(), p.n, "point has wrong dimension");
    let mut worst: f64 = 0.0;
    for l in &p.lmis {
        worst = worst.max(-min_eig(&l.eval(x)));
    }
    for eq in &p.eqs {
        let r: f64 = eq.coefs.iter().map(|&(j, c)| c * x[j]).sum::<f64>() - eq.rhs;
        worst = worst.max(r.abs());
    }
    (worst <= tol, worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::from_rows;

    #[test]
    fn scalar_lower_bound() {
        let mut p = ConicProgram::with_margin(0.0);
        let x = p.scalar("x");
        p.add_objective(x.offset, 1.0);
        let mut l = Lmi::new(1, "x>=1");
        l.add_scalar(0, 0, x, &from_rows(&[&[1.0]]), 1.0);
        l.add_identity(0, 1, -1.0);
        p.add_psd(l);
        let s = solve(&p, &SolverOptions::default());
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn two_by_two_eigenvalue_condition() {
        let eps = 1e-7;
        let mut p = ConicProgram::with_margin(eps);
        let g = p.scalar("gamma");
        p.add_objective(g.offset, 1.0);
        let mut l = Lmi::new(2, "[[-g,1],[1,-g]]");
        l.add_scalar(0, 0, g, &-Mat::identity(2, 2), 1.0);
        l.add_const(1, 0, &from_rows(&[&[1.0]]));
        p.add_nsd(l);
        let s = solve(&p, &SolverOptions::default());
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.x[0] - (1.0 + eps)).abs() < 1e-6);
    }

    #[test]
    fn projection_with_quadratic_objective() {
        let mut p = ConicProgram::new();
        let x = p.scalar("x");
        p.add_prox(&[x.offset], &[3.0], 1.0);
        let mut l = Lmi::new(1, "x>=5");
        l.add_scalar(0, 0, x, &from_rows(&[&[1.0]]), 1.0);
        l.add_identity(0, 1, -5.0);
        p.add_psd_margin(l, 0.0);
        let s = solve(&p, &SolverOptions::default());
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.x[0] - 5.0).abs() < 1e-6);
        assert!((s.objective - 4.0).abs() < 1e-5);
    }

    #[test]
    fn triangle_ordering_is_consistent() {
        // min trace(X) s.t. X >= M with a full 3x3 M whose off-diagonals differ.
        let m = from_rows(&[&[2.0, 0.3, -0.7], &[0.3, 1.0, 0.5], &[-0.7, 0.5, 3.0]]);
        let mut p = ConicProgram::with_margin(0.0);
        let x = p.sym("X", 3);
        for i in 0..3 {
            p.add_objective(x.index(i, i), 1.0);
        }
        let mut l = Lmi::new(3, "X - M");
        l.add_var(0, 0, x, 1.0);
        l.add_const(0, 0, &-&m);
        p.add_psd(l);
        // Pin the off-diagonal of X so the optimum is unique and equals M.
        for j in 0..3 {
            for i in 0..j {
                p.add_eq(vec![(x.index(i, j), 1.0)], m[(i, j)]);
            }
        }
        let s = solve(&p, &SolverOptions::default());
        assert_eq!(s.status, SolveStatus::Optimal);
        let xv = x.value(&s.x);
        assert!(min_eig(&(&xv - &m)) > -1e-7);

        // A rotated rank-one lower bound catches any svec misordering.
        let v = nalgebra::DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let m2 = &v * v.transpose();
        let mut p = ConicProgram::with_margin(0.0);
        let x = p.sym("X", 3);
        for i in 0..3 {
            p.add_objective(x.index(i, i), 1.0);
        }
        let mut l = Lmi::new(3, "X - vv'");
        l.add_var(0, 0, x, 1.0);
        l.add_const(0, 0, &-&m2);
        p.add_psd(l);
        let s = solve(&p, &SolverOptions::default());
        let xv = x.value(&s.x);
        assert!((xv - &m2).norm() < 1e-5, "optimum should be vv' itself");
    }

    #[test]
    fn infeasible_detected() {
        let mut p = ConicProgram::new();
        let x = p.scalar("x");
        let mut l1 = Lmi::new(1, "x>=1");
        l1.add_scalar(0, 0, x, &from_rows(&[&[1.0]]), 1.0);
        l1.add_identity(0, 1, -1.0);
        p.add_psd(l1);
        let mut l2 = Lmi::new(1, "x<=0");
        l2.add_scalar(0, 0, x, &from_rows(&[&[1.0]]), 1.0);
        p.add_nsd(l2);
        assert_eq!(
            solve(&p, &SolverOptions::default()).status,
            SolveStatus::Infeasible
        );
    }

    #[test]
    fn check_feasible_examples() {
        let mut p = ConicProgram::with_margin(0.0);
        let x = p.sym("X", 2);
        let mut l = Lmi::new(2, "X>=0");
        l.add_var(0, 0, x, 1.0);
        p.add_psd(l);
        let eye = [1.0, 0.0, 1.0];
        assert_eq!(check_feasible(&p, &eye, 1e-9), (true, 0.0));
        let neg = [-1.0, 0.0, -1.0];
        let (ok, v) = check_feasible(&p, &neg, 1e-9);
        assert!(!ok);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lmi_block_placement() {
        let mut p = ConicProgram::new();
        let y = p.mat("Y", 1, 2);
        let mut l = Lmi::new(3, "blocks");
        let a = from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        l.add_he(0, &a, p.sym("W", 2), &Mat::identity(2, 2), 1.0);
        l.add(2, 0, &Mat::identity(1, 1), y, &Mat::identity(2, 2), 1.0);
        let mut x = vec![0.0; p.n_vars()];
        x[0] = 1.0; // Y(0,0)
        x[1] = 2.0; // Y(0,1)
        x[2] = 1.0; // W(0,0)
        x[4] = 1.0; // W(1,1)
        let m = l.eval(&x);
        let expect = from_rows(&[&[2.0, 5.0, 1.0], &[5.0, 8.0, 2.0], &[1.0, 2.0, 0.0]]);
        assert!((m - expect).norm() < 1e-14);
        assert_eq!(l.components().len(), 1);
    }

    #[test]
    fn sdpa_dump_lists_blocks() {
        let mut p = ConicProgram::new();
        let x = p.scalar("x");
        p.add_objective(x.offset, 1.0);
        let mut l = Lmi::new(1, "x>=1");
        l.add_scalar(0, 0, x, &from_rows(&[&[1.0]]), 1.0);
        p.add_psd(l);
        let d = p.to_sdpa();
        assert!(d.lines().count() >= 5);
    }
}
