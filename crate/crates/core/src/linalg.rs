//! Dense complex linear-algebra helpers shared by the tensor, canonical and
//! synthesis modules.

use std::f64::consts::{E, FRAC_1_PI, SQRT_2};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Thin singular value decomposition `m = u * diag(s) * vt`.
///
/// Singular values are sorted in descending order. Each right-singular
/// vector (row of `vt`) is rotated so that its largest-magnitude entry is
/// real and positive, with the inverse phase applied to the matching column
/// of `u`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub vt: CMat,
}

pub fn svd(m: &CMat) -> Svd {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Svd {
            u: CMat::zeros(rows, 0),
            s: Vec::new(),
            vt: CMat::zeros(0, cols),
        };
    }
    let fm = faer::Mat::<Complex64>::from_fn(rows, cols, |i, j| m[(i, j)]);
    let dec = fm.thin_svd().expect("svd did not converge");
    let u = CMat::from_fn(rows, k, |i, j| dec.U()[(i, j)]);
    let vt = CMat::from_fn(k, cols, |i, j| dec.V()[(j, i)].conj());
    let sv: Vec<f64> = (0..k).map(|i| dec.S().column_vector()[i].re).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        sv[b]
            .partial_cmp(&sv[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut su = CMat::zeros(rows, k);
    let mut svt = CMat::zeros(k, cols);
    let mut s = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        s.push(sv[src]);
        su.set_column(dst, &u.column(src));
        svt.set_row(dst, &vt.row(src));
    }
    for i in 0..k {
        let mut best = 0;
        let mut best_abs = -1.0;
        for j in 0..cols {
            let a = svt[(i, j)].norm();
            if a > best_abs * (1.0 + 1e-12) {
                best_abs = a;
                best = j;
            }
        }
        if best_abs > 0.0 {
            let phase = svt[(i, best)] / best_abs;
            let inv = phase.conj();
            for j in 0..cols {
                svt[(i, j)] *= inv;
            }
            for r in 0..rows {
                su[(r, i)] *= phase;
            }
        }
    }
    Svd { u: su, s, vt: svt }
}

/// Real thin SVD with the same ordering and sign conventions as [`svd`].
#[derive(Debug, Clone)]
pub struct SvdReal {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub vt: DMatrix<f64>,
}

pub fn svd_real(m: &DMatrix<f64>) -> SvdReal {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return SvdReal {
            u: DMatrix::zeros(rows, 0),
            s: Vec::new(),
            vt: DMatrix::zeros(0, cols),
        };
    }
    let fm = faer::Mat::<f64>::from_fn(rows, cols, |i, j| m[(i, j)]);
    let dec = fm.thin_svd().expect("svd did not converge");
    let u = DMatrix::from_fn(rows, k, |i, j| dec.U()[(i, j)]);
    let vt = DMatrix::from_fn(k, cols, |i, j| dec.V()[(j, i)]);
    let sv: Vec<f64> = (0..k).map(|i| dec.S().column_vector()[i]).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        sv[b]
            .partial_cmp(&sv[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut su = DMatrix::zeros(rows, k);
    let mut svt = DMatrix::zeros(k, cols);
    let mut s = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        s.push(sv[src]);
        su.set_column(dst, &u.column(src));
        svt.set_row(dst, &vt.row(src));
    }
    for i in 0..k {
        let mut best = 0;
        let mut best_abs = -1.0;
        for j in 0..cols {
            let a = svt[(i, j)].abs();
            if a > best_abs * (1.0 + 1e-12) {
                best_abs = a;
                best = j;
            }
        }
        if svt[(i, best)] < 0.0 {
            for j in 0..cols {
                svt[(i, j)] = -svt[(i, j)];
            }
            for r in 0..rows {
                su[(r, i)] = -su[(r, i)];
            }
        }
    }
    SvdReal { u: su, s, vt: svt }
}

/// `‖U†U − I‖_F`.
pub fn unitarity_residual(u: &CMat) -> f64 {
    let n = u.ncols();
    (u.adjoint() * u - CMat::identity(n, n)).norm()
}

/// `‖V V† − I‖_F` for a row-isometric matrix.
pub fn row_isometry_residual(a: &CMat) -> f64 {
    let m = a.nrows();
    (a * a.adjoint() - CMat::identity(m, m)).norm()
}

/// Frobenius distance between `a` and `e^{iφ} b` minimized over the global
/// phase φ.
pub fn phase_aligned_distance(a: &CMat, b: &CMat) -> f64 {
    let overlap: Complex64 = b.iter().zip(a.iter()).map(|(x, y)| x.conj() * y).sum();
    let phase = if overlap.norm() > 0.0 {
        overlap / overlap.norm()
    } else {
        ONE
    };
    (a - b * phase).norm()
}

/// Same as [`phase_aligned_distance`] for vectors.
pub fn phase_aligned_vec_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    let overlap: Complex64 = b.iter().zip(a).map(|(x, y)| x.conj() * y).sum();
    let phase = if overlap.norm() > 0.0 {
        overlap / overlap.norm()
    } else {
        ONE
    };
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y * phase).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// `|⟨a|b⟩|²` for unit vectors.
pub fn fidelity(a: &[Complex64], b: &[Complex64]) -> f64 {
    let overlap: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    overlap.norm_sqr()
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMat::from_fn(ar * br, ac * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

/// Closest unitary in Frobenius norm (polar factor).
pub fn nearest_unitary(m: &CMat) -> CMat {
    let d = svd(m);
    &d.u * &d.vt
}

/// Eigendecomposition `u = V diag(λ) V†` of a unitary matrix.
///
/// `u` is normal, so its Hermitian and anti-Hermitian parts commute and share
/// eigenvectors. They are diagonalized jointly through a generic real
/// combination `H₁ + t·H₂`; the combination is re-drawn if it happens to merge
/// distinct eigenvalues.
pub fn unitary_eigen(u: &CMat) -> Result<(CMat, Vec<Complex64>)> {
    let n = u.nrows();
    if n != u.ncols() {
        return Err(Error::structural("eigendecomposition needs a square matrix"));
    }
    let ua = u.adjoint();
    let h1 = (u + &ua).scale(0.5);
    let h2 = (u - &ua) * Complex64::new(0.0, -0.5);

    let mut best: Option<(f64, CMat)> = None;
    for t in [0.577_215_664_901_532_9, SQRT_2, E, FRAC_1_PI, E * E] {
        let h = &h1 + &h2 * Complex64::new(t, 0.0);
        let h = (&h + h.adjoint()).scale(0.5);
        let fh = faer::Mat::<Complex64>::from_fn(n, n, |i, j| h[(i, j)]);
        let eig = fh
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(|_| Error::Numerical("hermitian eigensolver did not converge".into()))?;
        let v = CMat::from_fn(n, n, |i, j| eig.U()[(i, j)]);
        let d = v.adjoint() * u * &v;
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += d[(i, j)].norm_sqr();
                }
            }
        }
        let off = off.sqrt();
        let better = best.as_ref().is_none_or(|(b, _)| off < *b);
        if better {
            best = Some((off, v));
        }
        if off < 1e-11 {
            break;
        }
    }
    let (off, v) = best.expect("at least one attempt");
    if !off.is_finite() || off > 1e-6 {
        return Err(Error::Numerical(format!(
            "unitary eigendecomposition did not diagonalize (off-diagonal {off:.3e})"
        )));
    }
    let d = v.adjoint() * u * &v;
    let lambdas = (0..n)
        .map(|i| {
            let z = d[(i, i)];
            if z.norm() > 0.0 {
                z / z.norm()
            } else {
                ONE
            }
        })
        .collect();
    Ok((v, lambdas))
}

pub fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

/// `log2` of a power of two.
pub fn log2_exact(n: usize) -> Option<usize> {
    (n.is_power_of_two()).then(|| n.trailing_zeros() as usize)
}

pub fn ceil_log2(n: usize) -> usize {
    next_pow2(n).trailing_zeros() as usize
}


#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn svd_reconstructs_random_64() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = CMat::from_fn(64, 64, |_, _| Complex64::new(gauss(&mut rng), gauss(&mut rng)));
        let d = svd(&m);
        let rec = &d.u * CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            d.s.len(),
            d.s.iter().map(|&x| Complex64::new(x, 0.0)),
        )) * &d.vt;
        assert!((rec - &m).norm() <= 1e-12 * m.norm().max(1.0) * 10.0);
        assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
        for i in 0..d.vt.nrows() {
            let row = d.vt.row(i);
            let (idx, _) = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
                .unwrap();
            assert!(row[idx].im.abs() < 1e-12 && row[idx].re > 0.0);
        }
    }

    #[test]
    fn svd_wide_and_tall_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (r, c) in [(3, 11), (11, 3), (1, 5), (5, 1)] {
            let m = CMat::from_fn(r, c, |_, _| Complex64::new(gauss(&mut rng), gauss(&mut rng)));
            let d = svd(&m);
            assert_eq!(d.u.shape(), (r, r.min(c)));
            assert_eq!(d.vt.shape(), (r.min(c), c));
            let sig = CMat::from_fn(d.s.len(), d.s.len(), |i, j| {
                if i == j { Complex64::new(d.s[i], 0.0) } else { ZERO }
            });
            assert!((&d.u * sig * &d.vt - &m).norm() < 1e-12);
        }
    }

    #[test]
    fn unitary_eigen_handles_degenerate_spectra() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let q = random_unitary(6, &mut rng);
        let phases = [0.3, 0.3, 0.3, -1.2, 2.0, 2.0];
        let d = CMat::from_fn(6, 6, |i, j| {
            if i == j { Complex64::from_polar(1.0, phases[i]) } else { ZERO }
        });
        let u = &q * d * q.adjoint();
        let (v, l) = unitary_eigen(&u).unwrap();
        let dd = CMat::from_fn(6, 6, |i, j| if i == j { l[i] } else { ZERO });
        assert!((&v * dd * v.adjoint() - &u).norm() < 1e-12);

        let id = CMat::identity(4, 4);
        let (v, l) = unitary_eigen(&id).unwrap();
        assert!(unitarity_residual(&v) < 1e-12);
        assert!(l.iter().all(|z| (z - ONE).norm() < 1e-12));
    }

    #[test]
    fn unitary_eigen_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [2, 4, 8, 16] {
            let u = random_unitary(n, &mut rng);
            let (v, l) = unitary_eigen(&u).unwrap();
            let dd = CMat::from_fn(n, n, |i, j| if i == j { l[i] } else { ZERO });
            assert!((&v * dd * v.adjoint() - &u).norm() < 1e-11, "n={n}");
        }
    }

    #[test]
    fn log_helpers() {
        assert_eq!(next_pow2(12), 16);
        assert_eq!(next_pow2(0), 1);
        assert_eq!(log2_exact(64), Some(6));
        assert_eq!(log2_exact(12), None);
        assert_eq!(ceil_log2(36), 6);
        assert_eq!(ceil_log2(1), 0);
    }
}
