//! Representations of quantum channels and conversions among them.
//!
//! A channel on an `N`-dimensional system is stored as one of:
//!
//! * [`ChoiMatrix`] — the `N^2 x N^2` Hermitian PSD matrix `L` with
//!   `Tr_B L = I_N`; the canonical form.
//! * [`StiefelPoint`] — a `kN x N` matrix `xi` with orthonormal columns, `k`
//!   the Kraus rank. Column `c` of `xi` stacks, block by block, the entries
//!   `xi[r*k + a, c] = K_a[r, c]` of the Kraus operators, so the Gram matrix
//!   of the unpacked square-root factor reproduces the Choi matrix and the
//!   vertical Kraus stack is a fixed row permutation of `xi`.
//! * [`KrausSet`] — explicit operators `K_a` with `sum K^dag K = I`.
//! * [`PauliTransferMatrix`] — the real 4x4 affine Bloch representation
//!   (qubits only).
//!
//! Vectorization is column-stacking: entry `M[r, c]` maps to index `c*N + r`,
//! which places the channel *input* index on the slow axis of the Choi matrix
//! and makes the trace-preservation constraint a partial trace over the fast
//! axis.

use num_complex::Complex64;

use crate::error::Error;
use crate::linalg::{
    hermitian_eigen_desc, hermitian_part, hermiticity_residual, max_abs_diff,
    orthonormality_residual, partial_trace_fast, CMatrix, CVector, ONE, ZERO,
};
use crate::Result;

/// Hermiticity / trace validation tolerance.
pub const HERM_TOL: f64 = 1e-8;
/// Eigenvalue floor for positive-semidefiniteness checks.
pub const PSD_TOL: f64 = 1e-10;
/// Maximum eigenvalue mass that may be discarded in a rank-`k` factorization.
pub const RANK_TOL: f64 = 1e-8;
/// Column-orthonormality tolerance for Stiefel points.
pub const ORTHO_TOL: f64 = 1e-7;

/// Density operator: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    dim: usize,
    entries: CMatrix,
}

impl DensityMatrix {
    pub fn new(entries: CMatrix) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::NotSquare {
                rows: entries.nrows(),
                cols: entries.ncols(),
            });
        }
        let herm = hermiticity_residual(&entries);
        if herm > HERM_TOL {
            return Err(Error::NotHermitian {
                residual: herm,
                tol: HERM_TOL,
            });
        }
        let tr = entries.trace();
        if (tr.re - 1.0).abs() > HERM_TOL || tr.im.abs() > HERM_TOL {
            return Err(Error::InvalidArgument(format!(
                "density matrix trace {tr} is not 1"
            )));
        }
        let eig = hermitian_eigen_desc(&entries);
        let min = eig.values.last().copied().unwrap_or(0.0);
        if min < -HERM_TOL {
            return Err(Error::NotPositiveSemidefinite {
                min_eigenvalue: min,
            });
        }
        Ok(Self {
            dim: entries.nrows(),
            entries,
        })
    }

    /// Projector onto a (normalized) pure state.
    pub fn from_pure(state: &CVector) -> Result<Self> {
        let norm = state.norm();
        if norm == 0.0 {
            return Err(Error::InvalidArgument("zero state vector".into()));
        }
        let s = state / Complex64::new(norm, 0.0);
        Self::new(&s * s.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub(crate) fn from_valid(entries: CMatrix) -> Self {
        Self {
            dim: entries.nrows(),
            entries,
        }
    }
}

/// Choi matrix of a CPTP map.
#[derive(Debug, Clone)]
pub struct ChoiMatrix {
    dim: usize,
    entries: CMatrix,
}

impl ChoiMatrix {
    pub fn new(entries: CMatrix) -> Result<Self> {
        Self::new_with_tol(entries, PSD_TOL)
    }

    pub fn new_with_tol(entries: CMatrix, psd_tol: f64) -> Result<Self> {
        let rows = entries.nrows();
        if entries.ncols() != rows {
            return Err(Error::NotSquare {
                rows,
                cols: entries.ncols(),
            });
        }
        let dim = (rows as f64).sqrt().round() as usize;
        if dim * dim != rows {
            return Err(Error::InvalidArgument(format!(
                "Choi matrix side {rows} is not a perfect square"
            )));
        }
        let herm = hermiticity_residual(&entries);
        if herm > HERM_TOL {
            return Err(Error::NotHermitian {
                residual: herm,
                tol: HERM_TOL,
            });
        }
        let eig = hermitian_eigen_desc(&entries);
        let min = eig.values.last().copied().unwrap_or(0.0);
        if min < -psd_tol {
            return Err(Error::NotPositiveSemidefinite {
                min_eigenvalue: min,
            });
        }
        let pt = partial_trace_fast(&entries, dim)?;
        let residual = max_abs_diff(&pt, &CMatrix::identity(dim, dim));
        if residual > HERM_TOL {
            return Err(Error::NotTracePreserving { residual });
        }
        Ok(Self { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub(crate) fn from_valid(dim: usize, entries: CMatrix) -> Self {
        Self { dim, entries }
    }
}

/// Point on the complex Stiefel manifold `V_N(C^{kN})` encoding a channel of
/// Kraus rank at most `k`.
#[derive(Debug, Clone)]
pub struct StiefelPoint {
    dim: usize,
    kraus_rank: usize,
    entries: CMatrix,
}

impl StiefelPoint {
    pub fn new(dim: usize, kraus_rank: usize, entries: CMatrix) -> Result<Self> {
        if kraus_rank == 0 || kraus_rank > dim * dim {
            return Err(Error::InvalidArgument(format!(
                "Kraus rank {kraus_rank} outside 1..={}",
                dim * dim
            )));
        }
        if entries.nrows() != kraus_rank * dim || entries.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: kraus_rank * dim * dim,
                got: entries.nrows() * entries.ncols(),
            });
        }
        let residual = orthonormality_residual(&entries);
        if residual > ORTHO_TOL {
            return Err(Error::NotOrthonormal { residual });
        }
        Ok(Self {
            dim,
            kraus_rank,
            entries,
        })
    }

    /// The identity channel embedded at Kraus rank `k` (first operator `I`,
    /// the rest zero).
    pub fn identity_channel(dim: usize, kraus_rank: usize) -> Self {
        let mut entries = CMatrix::zeros(kraus_rank * dim, dim);
        for r in 0..dim {
            entries[(r * kraus_rank, r)] = ONE;
        }
        Self {
            dim,
            kraus_rank,
            entries,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kraus_rank(&self) -> usize {
        self.kraus_rank
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    /// `||xi^dag xi - I||_F`.
    pub fn feasibility_residual(&self) -> f64 {
        orthonormality_residual(&self.entries)
    }

    /// The `k x N^2` square-root factor `S` with `L = S^dag S` and
    /// `S[a, c*N + r] = conj(xi[r*k + a, c])`, i.e. the inverse of the column
    /// packing.
    pub fn square_root_factor(&self) -> CMatrix {
        let (n, k) = (self.dim, self.kraus_rank);
        let mut s = CMatrix::zeros(k, n * n);
        for c in 0..n {
            for r in 0..n {
                for a in 0..k {
                    s[(a, c * n + r)] = self.entries[(r * k + a, c)].conj();
                }
            }
        }
        s
    }

    pub(crate) fn from_valid(dim: usize, kraus_rank: usize, entries: CMatrix) -> Self {
        Self {
            dim,
            kraus_rank,
            entries,
        }
    }
}

/// A set of Kraus operators with `sum K^dag K = I`.
#[derive(Debug, Clone)]
pub struct KrausSet {
    dim: usize,
    operators: Vec<CMatrix>,
}

impl KrausSet {
    pub fn new(operators: Vec<CMatrix>) -> Result<Self> {
        let dim = operators
            .first()
            .map(|k| k.nrows())
            .ok_or_else(|| Error::EmptyInput("Kraus set".into()))?;
        let mut sum = CMatrix::zeros(dim, dim);
        for op in &operators {
            if op.nrows() != dim || op.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: op.nrows(),
                });
            }
            sum += op.adjoint() * op;
        }
        let residual = max_abs_diff(&sum, &CMatrix::identity(dim, dim));
        if residual > HERM_TOL {
            return Err(Error::NotTracePreserving { residual });
        }
        Ok(Self { dim, operators })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn operators(&self) -> &[CMatrix] {
        &self.operators
    }
}

/// Real 4x4 Bloch-affine representation of a qubit channel.
#[derive(Debug, Clone)]
pub struct PauliTransferMatrix {
    entries: nalgebra::Matrix4<f64>,
}

impl PauliTransferMatrix {
    pub fn new(entries: nalgebra::Matrix4<f64>) -> Result<Self> {
        let first = [entries[(0, 0)], entries[(0, 1)], entries[(0, 2)], entries[(0, 3)]];
        let target = [1.0, 0.0, 0.0, 0.0];
        for (got, want) in first.iter().zip(target.iter()) {
            if (got - want).abs() > 1e-6 {
                return Err(Error::InvalidArgument(format!(
                    "PTM first row {first:?} is not (1, 0, 0, 0)"
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &nalgebra::Matrix4<f64> {
        &self.entries
    }

    /// The 3x3 unital block `A` of the Bloch map `phi -> A phi + tau`.
    pub fn unital_block(&self) -> nalgebra::Matrix3<f64> {
        self.entries.fixed_view::<3, 3>(1, 1).into_owned()
    }

    /// The non-unital shift `tau` of the Bloch map.
    pub fn nonunital_vector(&self) -> nalgebra::Vector3<f64> {
        self.entries.fixed_view::<3, 1>(1, 0).into_owned()
    }
}

/// Column-stacking vectorization: `v[c*N + r] = M[r, c]`.
pub fn vectorize(m: &CMatrix) -> Result<CVector> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(CVector::from_column_slice(m.as_slice()))
}

/// Inverse of [`vectorize`].
pub fn unvectorize(v: &CVector) -> Result<CMatrix> {
    let len = v.len();
    let n = (len as f64).sqrt().round() as usize;
    if n * n != len {
        return Err(Error::InvalidArgument(format!(
            "vector length {len} is not a perfect square"
        )));
    }
    Ok(CMatrix::from_column_slice(n, n, v.as_slice()))
}

/// Choi matrix of the channel encoded by a Stiefel point.
pub fn stiefel_to_choi(xi: &StiefelPoint) -> ChoiMatrix {
    let (n, k) = (xi.dim(), xi.kraus_rank());
    let side = n * n;
    let mut choi = CMatrix::zeros(side, side);
    let mut kvec = CVector::zeros(side);
    for a in 0..k {
        for c in 0..n {
            for r in 0..n {
                kvec[c * n + r] = xi.entries[(r * k + a, c)];
            }
        }
        for i in 0..side {
            for j in 0..side {
                choi[(i, j)] += kvec[i] * kvec[j].conj();
            }
        }
    }
    ChoiMatrix::from_valid(n, choi)
}

/// Factor a Choi matrix into a rank-`k` Stiefel point.
///
/// Fails if the matrix is not CP within `PSD_TOL` or if more than
/// `rank_tol` of eigenvalue mass would be discarded at rank `k`.
pub fn choi_to_stiefel(choi: &ChoiMatrix, kraus_rank: usize) -> Result<StiefelPoint> {
    choi_to_stiefel_with_tol(choi, kraus_rank, RANK_TOL)
}

pub fn choi_to_stiefel_with_tol(
    choi: &ChoiMatrix,
    kraus_rank: usize,
    rank_tol: f64,
) -> Result<StiefelPoint> {
    let kraus = eigen_kraus(choi, kraus_rank, rank_tol)?;
    Ok(stiefel_from_kraus(&kraus))
}

/// Kraus operators from the eigendecomposition of a Choi matrix.
pub fn choi_to_kraus(choi: &ChoiMatrix, kraus_rank: usize) -> Result<KrausSet> {
    eigen_kraus(choi, kraus_rank, RANK_TOL)
}

fn eigen_kraus(choi: &ChoiMatrix, kraus_rank: usize, rank_tol: f64) -> Result<KrausSet> {
    let n = choi.dim();
    if kraus_rank == 0 || kraus_rank > n * n {
        return Err(Error::InvalidArgument(format!(
            "Kraus rank {kraus_rank} outside 1..={}",
            n * n
        )));
    }
    let eig = hermitian_eigen_desc(choi.entries());
    let min = eig.values.last().copied().unwrap_or(0.0);
    if min < -PSD_TOL {
        return Err(Error::NotPositiveSemidefinite {
            min_eigenvalue: min,
        });
    }
    let discarded: f64 = eig.values[kraus_rank..]
        .iter()
        .map(|v| v.max(0.0))
        .sum();
    if discarded > rank_tol {
        return Err(Error::RankDeficient {
            discarded,
            tol: rank_tol,
            rank: kraus_rank,
        });
    }
    let mut operators = Vec::with_capacity(kraus_rank);
    for m in 0..kraus_rank {
        let lam = eig.values[m].max(0.0);
        let scaled = eig.vectors.column(m) * Complex64::new(lam.sqrt(), 0.0);
        operators.push(unvectorize(&scaled.clone_owned())?);
    }
    Ok(KrausSet {
        dim: n,
        operators,
    })
}

/// `L = sum_a |K_a>><<K_a|`.
pub fn kraus_to_choi(kraus: &KrausSet) -> ChoiMatrix {
    let n = kraus.dim();
    let side = n * n;
    let mut choi = CMatrix::zeros(side, side);
    for op in kraus.operators() {
        let v = vectorize(op).expect("Kraus operators are square");
        for i in 0..side {
            for j in 0..side {
                choi[(i, j)] += v[i] * v[j].conj();
            }
        }
    }
    ChoiMatrix::from_valid(n, choi)
}

/// Pack Kraus operators into the Stiefel representation.
pub fn stiefel_from_kraus(kraus: &KrausSet) -> StiefelPoint {
    let n = kraus.dim();
    let k = kraus.operators().len();
    let mut entries = CMatrix::zeros(k * n, n);
    for (a, op) in kraus.operators().iter().enumerate() {
        for r in 0..n {
            for c in 0..n {
                entries[(r * k + a, c)] = op[(r, c)];
            }
        }
    }
    StiefelPoint::from_valid(n, k, entries)
}

/// Row permutation sending `xi` to the vertical stack of its Kraus operators:
/// output row `a*N + r` reads input row `r*k + a`. Depends only on `(N, k)`.
pub fn stack_permutation(dim: usize, kraus_rank: usize) -> Vec<usize> {
    let mut perm = Vec::with_capacity(dim * kraus_rank);
    for a in 0..kraus_rank {
        for r in 0..dim {
            perm.push(r * kraus_rank + a);
        }
    }
    perm
}

/// The `kN x N` vertical stack `[K_1; ...; K_k]`, equal to `P xi` for the
/// fixed permutation [`stack_permutation`].
pub fn stiefel_to_stacked_kraus(xi: &StiefelPoint) -> CMatrix {
    let (n, k) = (xi.dim(), xi.kraus_rank());
    let perm = stack_permutation(n, k);
    let mut out = CMatrix::zeros(k * n, n);
    for (row, &src) in perm.iter().enumerate() {
        for c in 0..n {
            out[(row, c)] = xi.entries[(src, c)];
        }
    }
    out
}

/// Split a vertical Kraus stack back into operators.
pub fn unstack_kraus(stacked: &CMatrix, dim: usize) -> Result<KrausSet> {
    if stacked.ncols() != dim || stacked.nrows() % dim != 0 {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: stacked.ncols(),
        });
    }
    let k = stacked.nrows() / dim;
    let operators = (0..k)
        .map(|a| stacked.view((a * dim, 0), (dim, dim)).into_owned())
        .collect();
    KrausSet::new(operators)
}

/// Linear action of a Choi matrix on an arbitrary operator:
/// `out[r, r'] = sum_{c, c'} M[c, c'] L[c*N + r, c'*N + r']`.
pub fn apply_choi_to_operator(choi: &ChoiMatrix, m: &CMatrix) -> Result<CMatrix> {
    let n = choi.dim();
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: m.nrows(),
        });
    }
    let lam = choi.entries();
    let mut out = CMatrix::zeros(n, n);
    for r in 0..n {
        for rp in 0..n {
            let mut acc = ZERO;
            for c in 0..n {
                for cp in 0..n {
                    acc += m[(c, cp)] * lam[(c * n + r, cp * n + rp)];
                }
            }
            out[(r, rp)] = acc;
        }
    }
    Ok(out)
}

/// Apply the channel to a state.
pub fn apply_channel(choi: &ChoiMatrix, rho: &DensityMatrix) -> Result<DensityMatrix> {
    let raw = apply_choi_to_operator(choi, rho.entries())?;
    // clean eigensolver-scale noise; the contraction is Hermitian and
    // trace preserving up to rounding
    Ok(DensityMatrix::from_valid(hermitian_part(&raw)))
}

/// Process fidelity `<<U| L |U>> / N^2` of a channel against a target unitary.
pub fn process_fidelity(choi: &ChoiMatrix, unitary: &CMatrix) -> Result<f64> {
    let n = choi.dim();
    if unitary.nrows() != n || unitary.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: unitary.nrows(),
        });
    }
    let residual = max_abs_diff(&(unitary.adjoint() * unitary), &CMatrix::identity(n, n));
    if residual > HERM_TOL {
        return Err(Error::NotUnitary { residual });
    }
    let u = vectorize(unitary)?;
    let val = (u.adjoint() * choi.entries() * &u)[(0, 0)];
    if val.im.abs() > 1e-9 {
        return Err(Error::ImaginaryResidue { residue: val.im.abs() });
    }
    Ok(val.re / (n * n) as f64)
}

/// The Pauli matrices `[I, X, Y, Z]`.
pub fn pauli_matrices() -> [CMatrix; 4] {
    let i = Complex64::new(0.0, 1.0);
    [
        CMatrix::identity(2, 2),
        CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        CMatrix::from_row_slice(2, 2, &[ZERO, -i, i, ZERO]),
        CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
    ]
}

/// Pauli transfer matrix `R[i, j] = Tr(P_i L(P_j)) / 2` of a qubit channel.
pub fn choi_to_ptm(choi: &ChoiMatrix) -> Result<PauliTransferMatrix> {
    if choi.dim() != 2 {
        return Err(Error::InvalidArgument(format!(
            "Pauli transfer matrix requires dimension 2, got {}",
            choi.dim()
        )));
    }
    let paulis = pauli_matrices();
    let mut entries = nalgebra::Matrix4::<f64>::zeros();
    for (j, pj) in paulis.iter().enumerate() {
        let mapped = apply_choi_to_operator(choi, pj)?;
        for (i, pi) in paulis.iter().enumerate() {
            entries[(i, j)] = 0.5 * (pi * &mapped).trace().re;
        }
    }
    PauliTransferMatrix::new(entries)
}

/// Choi matrix of the single-qubit uniform depolarizing channel with process
/// fidelity `f`.
pub fn depolarizing_choi(fidelity: f64) -> Result<ChoiMatrix> {
    if !(0.0..=1.0).contains(&fidelity) {
        return Err(Error::InvalidArgument(format!(
            "process fidelity {fidelity} outside [0, 1]"
        )));
    }
    let paulis = pauli_matrices();
    let mut choi = CMatrix::zeros(4, 4);
    for (idx, p) in paulis.iter().enumerate() {
        let weight = if idx == 0 {
            fidelity
        } else {
            (1.0 - fidelity) / 3.0
        };
        let v = vectorize(p)?;
        choi += (&v * v.adjoint()).scale(weight);
    }
    Ok(ChoiMatrix::from_valid(2, choi))
}
