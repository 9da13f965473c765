//! Small dense helpers on top of nalgebra.

use nalgebra::linalg::Schur;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

pub fn zeros(r: usize, c: usize) -> Mat {
    Mat::zeros(r, c)
}

pub fn eye(n: usize) -> Mat {
    Mat::identity(n, n)
}

/// Block-diagonal concatenation.
pub fn blkdiag(blocks: &[&Mat]) -> Mat {
    let r: usize = blocks.iter().map(|b| b.nrows()).sum();
    let c: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(r, c);
    let (mut i, mut j) = (0, 0);
    for b in blocks {
        out.view_mut((i, j), (b.nrows(), b.ncols())).copy_from(*b);
        i += b.nrows();
        j += b.ncols();
    }
    out
}

/// Horizontal concatenation; all blocks must share the row count `rows`.
pub fn hcat(rows: usize, blocks: &[&Mat]) -> Mat {
    let c: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, c);
    let mut j = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hcat row mismatch");
        out.view_mut((0, j), (rows, b.ncols())).copy_from(*b);
        j += b.ncols();
    }
    out
}

/// Vertical concatenation; all blocks must share the column count `cols`.
pub fn vcat(cols: usize, blocks: &[&Mat]) -> Mat {
    let r: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(r, cols);
    let mut i = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vcat column mismatch");
        out.view_mut((i, 0), (b.nrows(), cols)).copy_from(*b);
        i += b.nrows();
    }
    out
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

pub fn sym(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part of `m`; +inf for an empty matrix.
pub fn min_eig(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(sym(m)).eigenvalues.min()
}

pub fn max_eig(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    SymmetricEigen::new(sym(m)).eigenvalues.max()
}

fn sym_fn(m: &Mat, floor: f64, f: impl Fn(f64) -> f64) -> Mat {
    let e = SymmetricEigen::new(sym(m));
    let d = DVector::from_iterator(
        e.eigenvalues.len(),
        e.eigenvalues.iter().map(|&l| f(l.max(floor))),
    );
    &e.eigenvectors * Mat::from_diagonal(&d) * e.eigenvectors.transpose()
}

/// Principal square root of a PSD matrix, eigenvalues floored at `floor`.
pub fn sqrtm_psd(m: &Mat, floor: f64) -> Mat {
    sym_fn(m, floor, f64::sqrt)
}

/// Inverse principal square root of a PD matrix, eigenvalues floored at `floor`.
pub fn inv_sqrtm_pd(m: &Mat, floor: f64) -> Mat {
    sym_fn(m, floor, |l| 1.0 / l.sqrt())
}

/// Moore-Penrose pseudo-inverse, singular values below `rel_cut * sigma_max` dropped.
pub fn pinv(m: &Mat, rel_cut: f64) -> Mat {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Mat::zeros(m.ncols(), m.nrows());
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cut = rel_cut * smax;
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut out = Mat::zeros(m.ncols(), m.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cut {
            out += vt.row(k).transpose() * u.column(k).transpose() / s;
        }
    }
    out
}

pub fn rank(m: &Mat, rel_cut: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let s = m.clone().svd(false, false).singular_values;
    let cut = rel_cut * s.max();
    s.iter().filter(|&&x| x > cut).count()
}

pub fn to_complex(m: &Mat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

const SCHUR_MAX_ITER: usize = 10_000;

/// Eigenvalues of a real square matrix. Unshifted-stall cases such as cyclic
/// permutations are retried on a fixed orthogonal similarity.
pub fn eigenvalues(m: &Mat) -> Vec<Complex64> {
    if let Some(s) = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER) {
        return s.complex_eigenvalues().iter().copied().collect();
    }
    let n = m.nrows();
    let g = Mat::from_fn(n, n, |i, j| ((7 * i + 3 * j + 1) as f64).sin());
    let q = g.qr().q();
    let rotated = q.transpose() * m * &q;
    Schur::try_new(rotated, f64::EPSILON, SCHUR_MAX_ITER)
        .expect("Schur iteration converges on a generic similarity")
        .complex_eigenvalues()
        .iter()
        .copied()
        .collect()
}

/// Largest real part among the eigenvalues of `a` (-inf when empty).
pub fn spectral_abscissa(a: &Mat) -> f64 {
    if a.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    eigenvalues(a)
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Frequency response `C (sI - A)^{-1} B + D`.
pub fn freq_response(a: &Mat, b: &Mat, c: &Mat, d: &Mat, s: Complex64) -> CMat {
    let n = a.nrows();
    let mut out = to_complex(d);
    if n == 0 {
        return out;
    }
    let lhs = CMat::identity(n, n) * s - to_complex(a);
    let sol = lhs
        .lu()
        .solve(&to_complex(b))
        .unwrap_or_else(|| CMat::from_element(n, b.ncols(), Complex64::new(f64::NAN, f64::NAN)));
    out += to_complex(c) * sol;
    out
}

/// Largest singular value of a complex matrix.
pub fn sigma_max(m: &CMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Relative Frobenius distance `||a - b|| / max(1, ||b||)`.
pub fn rel_diff(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

/// Matrix from row-major nested data.
pub fn from_rows(rows: &[&[f64]]) -> Mat {
    let r = rows.len();
    let c = if r == 0 { 0 } else { rows[0].len() };
    Mat::from_fn(r, c, |i, j| rows[i][j])
}
