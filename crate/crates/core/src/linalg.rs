//! Small complex linear-algebra helpers shared across the crate.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::Error;
use crate::Result;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;
pub type RMatrix = DMatrix<f64>;
pub type RVector = DVector<f64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Frobenius distance to the Hermitian cone: `||M - M^dag||_F`.
pub fn hermiticity_residual(m: &CMatrix) -> f64 {
    (m - m.adjoint()).norm()
}

/// `(M + M^dag) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Partial trace over the second (fast) tensor factor of an `n^2 x n^2` matrix.
///
/// Index convention: row `i` splits as `i = c*n + r` with `c` slow and `r` fast.
pub fn partial_trace_fast(m: &CMatrix, n: usize) -> Result<CMatrix> {
    let dim = n * n;
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: m.nrows(),
        });
    }
    let mut out = CMatrix::zeros(n, n);
    for c in 0..n {
        for cp in 0..n {
            let mut acc = ZERO;
            for r in 0..n {
                acc += m[(c * n + r, cp * n + r)];
            }
            out[(c, cp)] = acc;
        }
    }
    Ok(out)
}

/// Largest entrywise absolute difference.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// `||M^dag M - I||_F`, the column-orthonormality residual.
pub fn orthonormality_residual(m: &CMatrix) -> f64 {
    let p = m.ncols();
    (m.adjoint() * m - CMatrix::identity(p, p)).norm()
}

/// Eigendecomposition of a Hermitian matrix with deterministic ordering.
///
/// Eigenvalues are sorted descending; each eigenvector is normalized so that
/// its first component of modulus above `1e-12` is real and positive.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Eigenvalues, descending.
    pub values: Vec<f64>,
    /// Eigenvectors as columns, matching `values`.
    pub vectors: CMatrix,
}

pub fn hermitian_eigen_desc(m: &CMatrix) -> HermitianEigen {
    let n = m.nrows();
    let sym = nalgebra::SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        sym.eigenvalues[b]
            .partial_cmp(&sym.eigenvalues[a])
            .expect("eigenvalues are finite")
    });
    let mut values = Vec::with_capacity(n);
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(sym.eigenvalues[src]);
        let mut col = sym.eigenvectors.column(src).clone_owned();
        if let Some(pivot) = col.iter().find(|c| c.norm() > 1e-12) {
            let phase = pivot.conj() / pivot.norm();
            col *= phase;
        }
        vectors.set_column(dst, &col);
    }
    HermitianEigen { values, vectors }
}

/// Real symmetric representation of a Hermitian matrix:
/// `[[Re A, -Im A], [Im A, Re A]]`, satisfying `z^dag A z = y^T Q y`
/// for `y = [Re z; Im z]`.
pub fn real_stack_hermitian(a: &CMatrix) -> RMatrix {
    let d = a.nrows();
    let mut q = RMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            let v = a[(i, j)];
            q[(i, j)] = v.re;
            q[(i, j + d)] = -v.im;
            q[(i + d, j)] = v.im;
            q[(i + d, j + d)] = v.re;
        }
    }
    q
}

/// `[Re z; Im z]`.
pub fn real_stack_vector(z: &CVector) -> RVector {
    let d = z.len();
    let mut y = RVector::zeros(2 * d);
    for i in 0..d {
        y[i] = z[i].re;
        y[i + d] = z[i].im;
    }
    y
}

/// Inverse of [`real_stack_vector`].
pub fn complex_from_real_stack(y: &RVector) -> CVector {
    let d = y.len() / 2;
    CVector::from_fn(d, |i, _| Complex64::new(y[i], y[i + d]))
}

/// Orthonormal basis of the orthogonal complement of the given orthonormal columns.
///
/// Built by modified Gram-Schmidt over the standard basis with one
/// reorthogonalization pass; deterministic for a given input.
pub fn orthonormal_complement(cols: &CMatrix) -> Result<CMatrix> {
    let m = cols.nrows();
    let p = cols.ncols();
    let want = m - p;
    let mut collected = CMatrix::zeros(m, want);
    let mut found = 0;
    for i in 0..m {
        if found == want {
            break;
        }
        let mut v = CVector::zeros(m);
        v[i] = ONE;
        for _pass in 0..2 {
            for j in 0..p {
                let col = cols.column(j);
                let overlap = col.dotc(&v);
                v -= col.clone_owned() * overlap;
            }
            for j in 0..found {
                let col = collected.column(j).clone_owned();
                let overlap = col.dotc(&v);
                v -= col * overlap;
            }
        }
        let norm = v.norm();
        if norm > 1e-7 {
            collected.set_column(found, &(v / Complex64::new(norm, 0.0)));
            found += 1;
        }
    }
    if found != want {
        return Err(Error::DegenerateFrame);
    }
    Ok(collected)
}

/// Re-orthonormalize nearly orthonormal columns by thin QR.
///
/// The unitary diagonal gauge is fixed so the triangular factor has a real
/// positive diagonal, keeping the result close to the input.
pub fn reorthonormalize(m: &CMatrix) -> CMatrix {
    let p = m.ncols();
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..p {
        let d = r[(j, j)];
        if d.norm() > 0.0 {
            let phase = d / d.norm();
            let col = q.column(j) * phase;
            q.set_column(j, &col);
        }
    }
    q
}
