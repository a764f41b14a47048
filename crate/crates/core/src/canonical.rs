//! Right-canonical MPS gauge, global normalization and completion of
//! isometries to unitaries.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, ZERO};
use crate::tensor::MpsCore;

/// Tolerance on `‖V†V − I‖_F` accepted by [`Isometry::new`].
pub const ISOMETRY_TOL: f64 = 1e-8;

/// Column-isometric `m × n` matrix (`V†V = I_n`).
#[derive(Debug, Clone, PartialEq)]
pub struct Isometry(CMat);

impl Isometry {
    pub fn new(v: CMat) -> Result<Self> {
        if v.ncols() > v.nrows() {
            return Err(Error::invalid(format!(
                "isometry cannot have more columns ({}) than rows ({})",
                v.ncols(),
                v.nrows()
            )));
        }
        let res = linalg::unitarity_residual(&v);
        if !(res <= ISOMETRY_TOL) {
            return Err(Error::invalid(format!(
                "matrix is not isometric (residual {res:.3e})"
            )));
        }
        Ok(Isometry(v))
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_inner(self) -> CMat {
        self.0
    }
}

/// Square unitary acting on `log2(dim)` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix(CMat);

impl UnitaryMatrix {
    pub const TOL: f64 = 1e-10;

    pub fn new(u: CMat) -> Result<Self> {
        Self::with_tolerance(u, Self::TOL)
    }

    pub fn with_tolerance(u: CMat, tol: f64) -> Result<Self> {
        let (r, c) = u.shape();
        if r != c || !r.is_power_of_two() {
            return Err(Error::invalid(format!(
                "unitary must be square with power-of-two dimension, got {r}x{c}"
            )));
        }
        let res = linalg::unitarity_residual(&u);
        if !(res <= tol) {
            return Err(Error::invalid(format!(
                "matrix is not unitary (residual {res:.3e})"
            )));
        }
        Ok(UnitaryMatrix(u))
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn arity(&self) -> usize {
        self.0.nrows().trailing_zeros() as usize
    }

    pub fn into_inner(self) -> CMat {
        self.0
    }
}

/// Chain of MPS cores whose cores `k ≥ 2` are right-isometric; the state is
/// `norm × contraction(cores)` with the first core at unit norm.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalMps {
    pub cores: Vec<MpsCore>,
    pub norm: f64,
}

impl CanonicalMps {
    /// Largest `‖A Aᵀ* − I‖_F` over cores `k ≥ 2`.
    pub fn isometry_residual(&self) -> f64 {
        self.cores
            .iter()
            .skip(1)
            .map(|c| linalg::row_isometry_residual(&c.unfold_right()))
            .fold(0.0, f64::max)
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.cores[..self.cores.len() - 1].iter().map(|c| c.right).collect()
    }
}

/// Zero-pads every bond leg to the next power of two.
pub fn pad_bonds_pow2(cores: &[MpsCore]) -> Vec<MpsCore> {
    cores
        .iter()
        .map(|c| {
            let left = linalg::next_pow2(c.left);
            let right = linalg::next_pow2(c.right);
            if left == c.left && right == c.right {
                return c.clone();
            }
            let mut data = vec![ZERO; left * 4 * right];
            for a in 0..c.left {
                for p in 0..4 {
                    for b in 0..c.right {
                        data[(a * 4 + p) * right + b] = c.get(a, p, b);
                    }
                }
            }
            MpsCore { left, right, data }
        })
        .collect()
}

fn check_chain(cores: &[MpsCore]) -> Result<()> {
    if cores.is_empty() {
        return Err(Error::structural("empty MPS"));
    }
    for (k, w) in cores.windows(2).enumerate() {
        if w[0].right != w[1].left {
            return Err(Error::structural(format!(
                "bond mismatch between cores {k} and {}",
                k + 1
            )));
        }
    }
    Ok(())
}

/// Right-to-left SVD sweep. Each core `k ≥ 2` is replaced by the
/// right-singular-vector block of its `(r_{k-1}) × (4·r_k)` unfolding and the
/// remaining `W Σ` factor is multiplied into core `k − 1`. The first core is
/// then scaled to unit norm and the removed norm reported.
pub fn right_canonicalize(cores: &[MpsCore]) -> Result<CanonicalMps> {
    check_chain(cores)?;
    let mut out: Vec<MpsCore> = cores.to_vec();
    for k in (1..out.len()).rev() {
        let a = out[k].unfold_right();
        let dec = linalg::svd(&a);
        let kept = dec.s.len();
        let right = out[k].right;
        out[k] = MpsCore::from_unfold_right(kept, right, &dec.vt);

        let ws = CMat::from_fn(dec.u.nrows(), kept, |i, j| {
            dec.u[(i, j)] * Complex64::new(dec.s[j], 0.0)
        });
        let prev = &out[k - 1];
        let merged = prev.unfold_left() * ws;
        out[k - 1] = MpsCore::from_unfold_left(prev.left, kept, &merged);
    }
    let first = &mut out[0];
    let norm = first.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        let inv = 1.0 / norm;
        for z in &mut first.data {
            *z *= inv;
        }
    } else {
        for z in &mut first.data {
            *z = ZERO;
        }
        first.data[0] = linalg::ONE;
    }
    Ok(CanonicalMps { cores: out, norm })
}

/// Detaches the global norm: returns the unit-norm chain (norm field 1) and
/// the classical scale needed to restore the original state.
pub fn normalize_global(mps: &CanonicalMps) -> Result<(CanonicalMps, f64)> {
    if !(mps.norm > 0.0) || !mps.norm.is_finite() {
        return Err(Error::invalid("cannot normalize a zero-norm state"));
    }
    let mut cores = mps.cores.clone();
    // Renormalize the first core exactly; it may carry rounding drift.
    let n0 = cores[0].data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if n0 > 0.0 {
        for z in &mut cores[0].data {
            *z /= n0;
        }
    }
    Ok((CanonicalMps { cores, norm: 1.0 }, mps.norm * n0))
}

/// Residual norm below which a Gram–Schmidt candidate is skipped.
pub const COMPLETION_SKIP_TOL: f64 = 1e-8;

/// Extends the columns of `v` to an orthonormal basis. Candidates are the
/// standard basis vectors `e_0, e_1, …` in order; each is orthogonalized
/// (twice) against all accepted columns and skipped if its residual norm
/// falls below [`COMPLETION_SKIP_TOL`].
pub fn complete_to_unitary(v: &Isometry) -> Result<UnitaryMatrix> {
    let v = v.matrix();
    let (m, n) = v.shape();
    if !m.is_power_of_two() {
        return Err(Error::invalid(format!(
            "completion target dimension {m} is not a power of two"
        )));
    }
    let mut u = CMat::zeros(m, m);
    for j in 0..n {
        u.set_column(j, &v.column(j));
    }
    let mut filled = n;
    let mut candidate = 0;
    while filled < m && candidate < m {
        let mut w = nalgebra::DVector::<Complex64>::zeros(m);
        w[candidate] = linalg::ONE;
        candidate += 1;
        for _ in 0..2 {
            for j in 0..filled {
                let col = u.column(j);
                let proj: Complex64 = col.iter().zip(w.iter()).map(|(c, x)| c.conj() * x).sum();
                for i in 0..m {
                    w[i] -= proj * col[i];
                }
            }
        }
        let nrm = w.norm();
        if nrm < COMPLETION_SKIP_TOL {
            continue;
        }
        w /= Complex64::new(nrm, 0.0);
        u.set_column(filled, &w);
        filled += 1;
    }
    if filled < m {
        return Err(Error::Numerical("orthonormal completion ran out of candidates".into()));
    }
    UnitaryMatrix::new(u)
}

/// `V = A^T` view of a right-isometric core: maps the incoming bond state
/// `|a⟩` to `Σ A[a, p, b] |p, b⟩`, rows indexed `p · right + b`.
pub fn core_isometry(core: &MpsCore) -> DMatrix<Complex64> {
    core.unfold_right().transpose()
}
