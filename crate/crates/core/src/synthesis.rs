//! Exact synthesis into RY/RZ/CNOT: uniformly controlled rotations,
//! amplitude state preparation and the quantum Shannon decomposition.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use crate::canonical::UnitaryMatrix;
use crate::circuit::{simulate, Circuit, Fusion, Gate, GateCounts};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

/// Largest unitary arity accepted by [`decompose_unitary`].
pub const MAX_UNITARY_ARITY: usize = 6;

/// Largest state for which [`prepare_state`] verifies itself by simulation.
pub const STATE_CHECK_QUBITS: usize = 12;

/// Rotation angles at or below this magnitude are not emitted.
const ANGLE_EPS: f64 = 1e-14;

const NORM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Y,
    Z,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesisReport {
    pub arity: usize,
    pub counts: GateCounts,
    /// Phase-aligned Frobenius distance between target and circuit, or
    /// `1 − fidelity` for state preparation. `None` only when the state is
    /// too wide to verify.
    pub residual: Option<f64>,
    pub recursion_depth: usize,
    /// `target = e^{i·global_phase} × circuit`.
    pub global_phase: f64,
}

#[derive(Debug, Clone)]
pub struct Synthesis {
    pub circuit: Circuit,
    pub report: SynthesisReport,
}

fn gray(i: usize) -> usize {
    i ^ (i >> 1)
}

/// In-place fast Walsh–Hadamard transform (unnormalized).
fn walsh_hadamard(v: &mut [f64]) {
    let n = v.len();
    let mut h = 1;
    while h < n {
        for start in (0..n).step_by(2 * h) {
            for i in start..start + h {
                let (a, b) = (v[i], v[i + h]);
                v[i] = a + b;
                v[i + h] = a - b;
            }
        }
        h *= 2;
    }
}

/// Appends a rotation on `target` whose angle is `angles[j]` when the
/// controls read `j` (first control is the most significant bit).
pub(crate) fn push_multiplexed(
    gates: &mut Vec<Gate>,
    axis: Axis,
    target: usize,
    controls: &[usize],
    angles: &[f64],
) {
    let m = controls.len();
    let n = 1usize << m;
    debug_assert_eq!(angles.len(), n);
    let rot = |theta: f64| match axis {
        Axis::Y => Gate::Ry { qubit: target, theta },
        Axis::Z => Gate::Rz { qubit: target, theta },
    };
    if angles.iter().all(|a| a.abs() <= ANGLE_EPS) {
        return;
    }
    if m == 0 {
        gates.push(rot(angles[0]));
        return;
    }
    let mut alpha = angles.to_vec();
    walsh_hadamard(&mut alpha);
    for i in 0..n {
        let a = alpha[gray(i)] / n as f64;
        if a.abs() > ANGLE_EPS {
            gates.push(rot(a));
        }
        let flip = gray(i) ^ gray((i + 1) % n);
        let bit = flip.trailing_zeros() as usize;
        gates.push(Gate::Cx { control: controls[m - 1 - bit], target });
    }
}

/// Uniformly controlled rotation on `angles.len() = 2^m` branches: controls
/// are qubits `0..m`, the target is qubit `m`.
pub fn multiplexed_rotation(axis: Axis, angles: &[f64]) -> Result<Circuit> {
    if angles.is_empty() || !angles.len().is_power_of_two() {
        return Err(Error::invalid("multiplexor needs a power-of-two angle count"));
    }
    if angles.iter().any(|a| !a.is_finite()) {
        return Err(Error::invalid("multiplexor angles must be finite"));
    }
    let m = angles.len().trailing_zeros() as usize;
    let controls: Vec<usize> = (0..m).collect();
    let mut gates = Vec::new();
    push_multiplexed(&mut gates, axis, m, &controls, angles);
    Circuit::from_gates(m + 1, gates)
}

/// Circuit taking `|0…0⟩` to `amps` up to the recorded global phase.
pub fn prepare_state(amps: &[Complex64]) -> Result<Synthesis> {
    let len = amps.len();
    let n = linalg::log2_exact(len)
        .ok_or_else(|| Error::invalid(format!("amplitude count {len} is not a power of two")))?;
    if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::invalid("amplitudes must be finite"));
    }
    let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !((norm - 1.0).abs() <= NORM_TOL) {
        return Err(Error::invalid(format!("amplitudes must have unit norm, got {norm:.12}")));
    }

    // Squared norms of every prefix, level by level; level n is the input.
    let mut mass: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    mass[n] = amps.iter().map(|z| z.norm_sqr()).collect();
    for k in (0..n).rev() {
        mass[k] = mass[k + 1].chunks(2).map(|p| p[0] + p[1]).collect();
    }

    let mut gates = Vec::new();
    for k in 0..n {
        let angles: Vec<f64> = mass[k + 1]
            .chunks(2)
            .map(|p| 2.0 * p[1].sqrt().atan2(p[0].sqrt()))
            .collect();
        let controls: Vec<usize> = (0..k).collect();
        push_multiplexed(&mut gates, Axis::Y, k, &controls, &angles);
    }

    let mut phases: Vec<f64> = amps.iter().map(|z| z.arg()).collect();
    for k in (0..n).rev() {
        let angles: Vec<f64> = phases.chunks(2).map(|p| p[1] - p[0]).collect();
        let controls: Vec<usize> = (0..k).collect();
        push_multiplexed(&mut gates, Axis::Z, k, &controls, &angles);
        phases = phases.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect();
    }
    let global_phase = phases[0];

    let circuit = Circuit::from_gates(n, gates)?;
    let residual = if n <= STATE_CHECK_QUBITS {
        let state = simulate(&circuit)?;
        Some((1.0 - linalg::fidelity(amps, state.amplitudes()) / (norm * norm)).max(0.0))
    } else {
        None
    };
    let counts = circuit.counts(Fusion::Unfused);
    Ok(Synthesis {
        circuit,
        report: SynthesisReport { arity: n, counts, residual, recursion_depth: n, global_phase },
    })
}

/// Recursive quantum Shannon decomposition of a unitary on up to
/// [`MAX_UNITARY_ARITY`] qubits.
pub fn decompose_unitary(u: &UnitaryMatrix) -> Result<Synthesis> {
    let k = u.arity();
    if k > MAX_UNITARY_ARITY {
        return Err(Error::Resource(format!(
            "unitary arity {k} exceeds synthesis limit {MAX_UNITARY_ARITY}"
        )));
    }
    let qubits: Vec<usize> = (0..k).collect();
    let mut gates = Vec::new();
    let (global_phase, recursion_depth) = qsd(u.matrix(), &qubits, &mut gates)?;
    let circuit = Circuit::from_gates(k, gates)?;
    let residual = linalg::phase_aligned_distance(u.matrix(), &circuit.unitary()?);
    if !residual.is_finite() {
        return Err(Error::Numerical("synthesis produced a non-finite circuit".into()));
    }
    let counts = circuit.counts(Fusion::Unfused);
    Ok(Synthesis {
        circuit,
        report: SynthesisReport { arity: k, counts, residual: Some(residual), recursion_depth, global_phase },
    })
}

/// Emits gates for `u` on `qubits` (first = most significant) and returns
/// `(phase, depth)` with `u = e^{i·phase} × emitted`.
fn qsd(u: &CMat, qubits: &[usize], gates: &mut Vec<Gate>) -> Result<(f64, usize)> {
    let dim = u.nrows();
    let d0 = u[(0, 0)];
    if (u - CMat::identity(dim, dim) * d0).norm() <= 1e-13 {
        return Ok((d0.arg(), 0));
    }
    if qubits.len() == 1 {
        return Ok((zyz(u, qubits[0], gates), 0));
    }

    let h = dim / 2;
    let (l0, l1, theta, r0, r1) = cosine_sine(u, h)?;
    let target = qubits[0];
    let lower = &qubits[1..];

    let (p_r, d_r) = demultiplex(&r0, &r1, target, lower, gates)?;
    push_multiplexed(gates, Axis::Y, target, lower, &theta);
    let (p_l, d_l) = demultiplex(&l0, &l1, target, lower, gates)?;
    Ok((p_r + p_l, 1 + d_r.max(d_l)))
}

/// `u = (L0 ⊕ L1)·[[C, −S], [S, C]]·(R0 ⊕ R1)` with `C = cos(θ/2)`,
/// `S = sin(θ/2)`.
#[allow(clippy::type_complexity)]
fn cosine_sine(u: &CMat, h: usize) -> Result<(CMat, CMat, Vec<f64>, CMat, CMat)> {
    let u00 = u.view((0, 0), (h, h)).into_owned();
    let u01 = u.view((0, h), (h, h)).into_owned();
    let u10 = u.view((h, 0), (h, h)).into_owned();
    let u11 = u.view((h, h), (h, h)).into_owned();

    // Ascending cosines put the well-conditioned sines first for the QR.
    let dec = linalg::svd(&u00);
    let mut l0 = CMat::zeros(h, h);
    let mut r0 = CMat::zeros(h, h);
    let mut c = vec![0.0; h];
    for j in 0..h {
        let src = h - 1 - j;
        l0.set_column(j, &dec.u.column(src));
        r0.set_row(j, &dec.vt.row(src));
        c[j] = dec.s[src].min(1.0);
    }

    let m = &u10 * r0.adjoint();
    let qr = m.qr();
    let mut l1 = qr.q();
    let rr = qr.r();
    let mut s = vec![0.0; h];
    for j in 0..h {
        let d = rr[(j, j)];
        s[j] = d.norm();
        if s[j] > 0.0 {
            let ph = d / s[j];
            let col = l1.column(j) * ph;
            l1.set_column(j, &col);
        }
    }

    let a = l1.adjoint() * &u11;
    let b = l0.adjoint() * &u01;
    let mut r1 = CMat::zeros(h, h);
    for j in 0..h {
        let row = if c[j] >= s[j] {
            a.row(j) * Complex64::new(1.0 / c[j], 0.0)
        } else {
            b.row(j) * Complex64::new(-1.0 / s[j], 0.0)
        };
        r1.set_row(j, &row);
    }
    let r1 = linalg::nearest_unitary(&r1);
    let theta = (0..h).map(|j| 2.0 * s[j].atan2(c[j])).collect();
    Ok((l0, l1, theta, r0, r1))
}

/// Emits `a ⊕ b` (selected by `target`) as `(I⊗V)·(D ⊕ D†)·(I⊗W)`.
fn demultiplex(
    a: &CMat,
    b: &CMat,
    target: usize,
    lower: &[usize],
    gates: &mut Vec<Gate>,
) -> Result<(f64, usize)> {
    let (v, lambda) = linalg::unitary_eigen(&(a * b.adjoint()))?;
    let dvec: Vec<Complex64> = lambda.iter().map(|l| Complex64::from_polar(1.0, 0.5 * l.arg())).collect();
    let d = CMat::from_diagonal(&DVector::from_vec(dvec));
    let w = &d * v.adjoint() * b;

    let (p_w, d_w) = qsd(&w, lower, gates)?;
    let angles: Vec<f64> = lambda.iter().map(|l| -l.arg()).collect();
    push_multiplexed(gates, Axis::Z, target, lower, &angles);
    let (p_v, d_v) = qsd(&v, lower, gates)?;
    Ok((p_w + p_v, d_w.max(d_v)))
}

/// `u = e^{iγ}·RZ(a)·RY(b)·RZ(c)`; emits `RZ(c)`, `RY(b)`, `RZ(a)` and
/// returns `γ`.
fn zyz(u: &CMat, qubit: usize, gates: &mut Vec<Gate>) -> f64 {
    let det = u[(0, 0)] * u[(1, 1)] - u[(0, 1)] * u[(1, 0)];
    let gamma = 0.5 * det.arg();
    let inv = Complex64::from_polar(1.0, -gamma);
    let alpha = u[(0, 0)] * inv;
    let beta = u[(1, 0)] * inv;
    let b = 2.0 * beta.norm().atan2(alpha.norm());
    let (pa, pb) = (arg_or_zero(alpha), arg_or_zero(beta));
    let a = pb - pa;
    let c = -pa - pb;
    for (axis, theta) in [(Axis::Z, c), (Axis::Y, b), (Axis::Z, a)] {
        if theta.abs() > ANGLE_EPS {
            gates.push(match axis {
                Axis::Y => Gate::Ry { qubit, theta },
                Axis::Z => Gate::Rz { qubit, theta },
            });
        }
    }
    gamma
}

fn arg_or_zero(z: Complex64) -> f64 {
    if z.norm() > 1e-300 {
        z.arg()
    } else {
        0.0
    }
}
