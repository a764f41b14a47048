//! Gate-level circuit representation, resource accounting and an exact
//! statevector simulator.
//!
//! Qubit 0 is the most significant bit of an amplitude index.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, ONE, ZERO};

/// Default memory guard for [`simulate`].
pub const DEFAULT_QUBIT_LIMIT: usize = 30;

/// States at or above this many qubits are updated in parallel.
const PARALLEL_QUBITS: usize = 14;

#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    Ry { qubit: usize, theta: f64 },
    Rz { qubit: usize, theta: f64 },
    Cx { control: usize, target: usize },
    /// Dense unitary on an ordered qubit list (first listed qubit is the
    /// most significant bit of the matrix index).
    Unitary { qubits: Vec<usize>, matrix: CMat },
}

impl Gate {
    pub fn qubits(&self) -> Vec<usize> {
        match self {
            Gate::Ry { qubit, .. } | Gate::Rz { qubit, .. } => vec![*qubit],
            Gate::Cx { control, target } => vec![*control, *target],
            Gate::Unitary { qubits, .. } => qubits.clone(),
        }
    }

    pub fn is_single_qubit_rotation(&self) -> bool {
        matches!(self, Gate::Ry { .. } | Gate::Rz { .. })
    }

    /// Same gate with qubits renamed through `map`.
    pub fn remapped(&self, map: &[usize]) -> Gate {
        match self {
            Gate::Ry { qubit, theta } => Gate::Ry { qubit: map[*qubit], theta: *theta },
            Gate::Rz { qubit, theta } => Gate::Rz { qubit: map[*qubit], theta: *theta },
            Gate::Cx { control, target } => Gate::Cx { control: map[*control], target: map[*target] },
            Gate::Unitary { qubits, matrix } => Gate::Unitary {
                qubits: qubits.iter().map(|q| map[*q]).collect(),
                matrix: matrix.clone(),
            },
        }
    }

    /// Dense matrix of the gate on its own qubits.
    pub fn matrix(&self) -> CMat {
        match self {
            Gate::Ry { theta, .. } => ry_matrix(*theta),
            Gate::Rz { theta, .. } => rz_matrix(*theta),
            Gate::Cx { .. } => {
                let mut m = CMat::zeros(4, 4);
                m[(0, 0)] = ONE;
                m[(1, 1)] = ONE;
                m[(2, 3)] = ONE;
                m[(3, 2)] = ONE;
                m
            }
            Gate::Unitary { matrix, .. } => matrix.clone(),
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        let qs = self.qubits();
        if let Some(q) = qs.iter().find(|&&q| q >= n) {
            return Err(Error::structural(format!("qubit {q} out of range for {n} qubits")));
        }
        for (i, a) in qs.iter().enumerate() {
            if qs[i + 1..].contains(a) {
                return Err(Error::structural(format!("gate repeats qubit {a}")));
            }
        }
        match self {
            Gate::Ry { theta, .. } | Gate::Rz { theta, .. } if !theta.is_finite() => {
                Err(Error::structural("rotation angle is not finite"))
            }
            Gate::Unitary { qubits, matrix } => {
                let dim = 1usize << qubits.len();
                if matrix.shape() != (dim, dim) {
                    return Err(Error::structural(format!(
                        "opaque gate on {} qubits needs a {dim}x{dim} matrix",
                        qubits.len()
                    )));
                }
                let res = linalg::unitarity_residual(matrix);
                if !(res <= 1e-10) {
                    return Err(Error::structural(format!("opaque gate is not unitary ({res:.3e})")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// `RY(θ) = exp(−iθY/2)`.
pub fn ry_matrix(theta: f64) -> CMat {
    let (s, c) = (theta / 2.0).sin_cos();
    CMat::from_row_slice(
        2,
        2,
        &[Complex64::new(c, 0.0), Complex64::new(-s, 0.0), Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
    )
}

/// `RZ(θ) = exp(−iθZ/2)`.
pub fn rz_matrix(theta: f64) -> CMat {
    CMat::from_row_slice(
        2,
        2,
        &[Complex64::from_polar(1.0, -theta / 2.0), ZERO, ZERO, Complex64::from_polar(1.0, theta / 2.0)],
    )
}

/// `RX(θ) = exp(−iθX/2)`.
pub fn rx_matrix(theta: f64) -> CMat {
    let (s, c) = (theta / 2.0).sin_cos();
    CMat::from_row_slice(
        2,
        2,
        &[Complex64::new(c, 0.0), Complex64::new(0.0, -s), Complex64::new(0.0, -s), Complex64::new(c, 0.0)],
    )
}

/// Named contiguous-or-not qubit group, carried for readability only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Register {
    pub name: String,
    pub qubits: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<Gate>,
    pub registers: Vec<Register>,
}

/// How single-qubit rotations are tallied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fusion {
    /// Every RY/RZ counts separately.
    Unfused,
    /// A maximal run of rotations on one qubit, uninterrupted by a
    /// multi-qubit gate on that qubit, counts as one single-qubit unitary.
    Fused,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GateCounts {
    pub single_qubit: usize,
    pub cnot: usize,
    pub opaque: usize,
    pub total: usize,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Circuit { n_qubits, gates: Vec::new(), registers: Vec::new() }
    }

    pub fn from_gates(n_qubits: usize, gates: Vec<Gate>) -> Result<Self> {
        let c = Circuit { n_qubits, gates, registers: Vec::new() };
        c.validate()?;
        Ok(c)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for g in &self.gates {
            g.validate(self.n_qubits)?;
        }
        Ok(())
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        gate.validate(self.n_qubits)?;
        self.gates.push(gate);
        Ok(())
    }

    pub fn ry(&mut self, qubit: usize, theta: f64) -> &mut Self {
        self.gates.push(Gate::Ry { qubit, theta });
        self
    }

    pub fn rz(&mut self, qubit: usize, theta: f64) -> &mut Self {
        self.gates.push(Gate::Rz { qubit, theta });
        self
    }

    pub fn cx(&mut self, control: usize, target: usize) -> &mut Self {
        self.gates.push(Gate::Cx { control, target });
        self
    }

    /// Appends `other`'s gates with qubit `q` renamed to `map[q]`.
    pub fn append_mapped(&mut self, other: &Circuit, map: &[usize]) -> Result<()> {
        if map.len() < other.n_qubits {
            return Err(Error::structural("qubit map shorter than fragment width"));
        }
        for g in &other.gates {
            self.push(g.remapped(map))?;
        }
        Ok(())
    }

    /// Greedy layering: each gate occupies one layer on every qubit it
    /// touches and is placed right after the latest layer among them.
    pub fn depth(&self) -> usize {
        let mut front = vec![0usize; self.n_qubits];
        let mut depth = 0;
        for g in &self.gates {
            let qs = g.qubits();
            let layer = qs.iter().map(|&q| front[q]).max().unwrap_or(0) + 1;
            for q in qs {
                front[q] = layer;
            }
            depth = depth.max(layer);
        }
        depth
    }

    /// Depth with consecutive single-qubit rotations on the same qubit fused
    /// into one layer.
    pub fn fused_depth(&self) -> usize {
        let mut front = vec![0usize; self.n_qubits];
        let mut open_run = vec![false; self.n_qubits];
        let mut depth = 0;
        for g in &self.gates {
            if g.is_single_qubit_rotation() {
                let q = g.qubits()[0];
                if !open_run[q] {
                    front[q] += 1;
                    open_run[q] = true;
                    depth = depth.max(front[q]);
                }
                continue;
            }
            let qs = g.qubits();
            let layer = qs.iter().map(|&q| front[q]).max().unwrap_or(0) + 1;
            for q in qs {
                front[q] = layer;
                open_run[q] = false;
            }
            depth = depth.max(layer);
        }
        depth
    }

    pub fn counts(&self, fusion: Fusion) -> GateCounts {
        let mut c = GateCounts::default();
        let mut open_run = vec![false; self.n_qubits];
        for g in &self.gates {
            match g {
                Gate::Ry { qubit, .. } | Gate::Rz { qubit, .. } => match fusion {
                    Fusion::Unfused => c.single_qubit += 1,
                    Fusion::Fused => {
                        if !open_run[*qubit] {
                            c.single_qubit += 1;
                            open_run[*qubit] = true;
                        }
                    }
                },
                Gate::Cx { control, target } => {
                    c.cnot += 1;
                    open_run[*control] = false;
                    open_run[*target] = false;
                }
                Gate::Unitary { qubits, .. } => {
                    c.opaque += 1;
                    for q in qubits {
                        open_run[*q] = false;
                    }
                }
            }
        }
        c.total = c.single_qubit + c.cnot + c.opaque;
        c
    }

    /// Dense unitary of the whole circuit (small widths only).
    pub fn unitary(&self) -> Result<CMat> {
        if self.n_qubits > 12 {
            return Err(Error::Resource(format!(
                "dense unitary of {} qubits is too large",
                self.n_qubits
            )));
        }
        let dim = 1usize << self.n_qubits;
        // Row-major batch: row = amplitude index, column = input basis state.
        let mut buf = vec![ZERO; dim * dim];
        for i in 0..dim {
            buf[i * dim + i] = ONE;
        }
        for g in &self.gates {
            apply_gate(&mut buf, self.n_qubits, dim, g);
        }
        Ok(CMat::from_row_slice(dim, dim, &buf))
    }
}

/// Places `b` on fresh qubits after `a`'s.
pub fn tensor_with(a: &Circuit, b: &Circuit) -> Circuit {
    let n = a.n_qubits + b.n_qubits;
    let map: Vec<usize> = (a.n_qubits..n).collect();
    let mut gates = a.gates.clone();
    gates.extend(b.gates.iter().map(|g| g.remapped(&map)));
    let mut registers = a.registers.clone();
    registers.extend(b.registers.iter().map(|r| Register {
        name: r.name.clone(),
        qubits: r.qubits.iter().map(|q| q + a.n_qubits).collect(),
    }));
    Circuit { n_qubits: n, gates, registers }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn zero_state(n_qubits: usize) -> Self {
        let mut amps = vec![ZERO; 1usize << n_qubits];
        amps[0] = ONE;
        StateVector { n_qubits, amps }
    }

    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        if amps.is_empty() || !amps.len().is_power_of_two() {
            return Err(Error::structural(format!(
                "amplitude count {} is not a power of two",
                amps.len()
            )));
        }
        let n_qubits = amps.len().trailing_zeros() as usize;
        Ok(StateVector { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Applies `c` in place; the circuit width must match.
    pub fn apply(&mut self, c: &Circuit) -> Result<()> {
        if c.n_qubits != self.n_qubits {
            return Err(Error::structural(format!(
                "circuit has {} qubits, state has {}",
                c.n_qubits, self.n_qubits
            )));
        }
        c.validate()?;
        for g in &c.gates {
            apply_gate(&mut self.amps, self.n_qubits, 1, g);
        }
        Ok(())
    }
}

/// Simulates `c` from `|0…0⟩` with the default qubit limit.
pub fn simulate(c: &Circuit) -> Result<StateVector> {
    simulate_with_limit(c, DEFAULT_QUBIT_LIMIT)
}

pub fn simulate_with_limit(c: &Circuit, qubit_limit: usize) -> Result<StateVector> {
    if c.n_qubits > qubit_limit {
        return Err(Error::Resource(format!(
            "circuit needs {} qubits, limit is {qubit_limit}",
            c.n_qubits
        )));
    }
    let mut state = StateVector::zero_state(c.n_qubits);
    state.apply(c)?;
    Ok(state)
}

/// Applies a gate to a row-major batch of `cols` states of `n` qubits
/// (`buf[index * cols + column]`).
pub fn apply_gate(buf: &mut [Complex64], n: usize, cols: usize, g: &Gate) {
    match g {
        Gate::Ry { qubit, theta } => {
            let (s, c) = (theta / 2.0).sin_cos();
            let m = [Complex64::new(c, 0.0), Complex64::new(-s, 0.0), Complex64::new(s, 0.0), Complex64::new(c, 0.0)];
            apply_single(buf, n, cols, *qubit, m);
        }
        Gate::Rz { qubit, theta } => {
            let d0 = Complex64::from_polar(1.0, -theta / 2.0);
            let d1 = Complex64::from_polar(1.0, theta / 2.0);
            apply_diag(buf, n, cols, *qubit, d0, d1);
        }
        Gate::Cx { control, target } => apply_cx(buf, n, cols, *control, *target),
        Gate::Unitary { qubits, matrix } => apply_dense(buf, n, cols, qubits, matrix),
    }
}

fn apply_single(buf: &mut [Complex64], n: usize, cols: usize, qubit: usize, m: [Complex64; 4]) {
    let stride = (1usize << (n - 1 - qubit)) * cols;
    let kernel = |chunk: &mut [Complex64]| {
        let (lo, hi) = chunk.split_at_mut(stride);
        for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
            let (x, y) = (*a, *b);
            *a = m[0] * x + m[1] * y;
            *b = m[2] * x + m[3] * y;
        }
    };
    if n >= PARALLEL_QUBITS {
        buf.par_chunks_mut(2 * stride).for_each(kernel);
    } else {
        buf.chunks_mut(2 * stride).for_each(kernel);
    }
}

fn apply_diag(buf: &mut [Complex64], n: usize, cols: usize, qubit: usize, d0: Complex64, d1: Complex64) {
    let stride = (1usize << (n - 1 - qubit)) * cols;
    let kernel = |chunk: &mut [Complex64]| {
        let (lo, hi) = chunk.split_at_mut(stride);
        lo.iter_mut().for_each(|a| *a *= d0);
        hi.iter_mut().for_each(|b| *b *= d1);
    };
    if n >= PARALLEL_QUBITS {
        buf.par_chunks_mut(2 * stride).for_each(kernel);
    } else {
        buf.chunks_mut(2 * stride).for_each(kernel);
    }
}

fn apply_cx(buf: &mut [Complex64], n: usize, cols: usize, control: usize, target: usize) {
    let tbit = n - 1 - target;
    let cbit = n - 1 - control;
    let stride = (1usize << tbit) * cols;
    let kernel = |(block, chunk): (usize, &mut [Complex64])| {
        let base = block * 2 * stride;
        let (lo, hi) = chunk.split_at_mut(stride);
        for (off, (a, b)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
            let idx = (base + off) / cols;
            if (idx >> cbit) & 1 == 1 {
                std::mem::swap(a, b);
            }
        }
    };
    if n >= PARALLEL_QUBITS {
        buf.par_chunks_mut(2 * stride).enumerate().for_each(kernel);
    } else {
        buf.chunks_mut(2 * stride).enumerate().for_each(kernel);
    }
}

fn apply_dense(buf: &mut [Complex64], n: usize, cols: usize, qubits: &[usize], m: &CMat) {
    let k = qubits.len();
    let dim = 1usize << k;
    let bits: Vec<usize> = qubits.iter().map(|q| n - 1 - q).collect();
    let mask: usize = bits.iter().map(|b| 1usize << b).sum();
    let offsets: Vec<usize> = (0..dim)
        .map(|local| {
            (0..k).fold(0, |acc, t| {
                if (local >> (k - 1 - t)) & 1 == 1 {
                    acc | (1 << bits[t])
                } else {
                    acc
                }
            })
        })
        .collect();
    let mut tmp = vec![ZERO; dim];
    for base in 0..(1usize << n) {
        if base & mask != 0 {
            continue;
        }
        for col in 0..cols {
            for (t, &o) in offsets.iter().enumerate() {
                tmp[t] = buf[(base | o) * cols + col];
            }
            for (r, &o) in offsets.iter().enumerate() {
                let mut acc = ZERO;
                for (c, v) in tmp.iter().enumerate() {
                    acc += m[(r, c)] * v;
                }
                buf[(base | o) * cols + col] = acc;
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "g", rename_all = "lowercase")]
enum GateRepr {
    Ry { q: usize, theta: f64 },
    Rz { q: usize, theta: f64 },
    Cx { c: usize, t: usize },
    U { qs: Vec<usize>, m: Vec<[f64; 2]> },
}

#[derive(Serialize, Deserialize)]
struct CircuitRepr {
    qubits: usize,
    gates: Vec<GateRepr>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    registers: Vec<Register>,
}

impl Serialize for Circuit {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let gates = self
            .gates
            .iter()
            .map(|g| match g {
                Gate::Ry { qubit, theta } => GateRepr::Ry { q: *qubit, theta: *theta },
                Gate::Rz { qubit, theta } => GateRepr::Rz { q: *qubit, theta: *theta },
                Gate::Cx { control, target } => GateRepr::Cx { c: *control, t: *target },
                Gate::Unitary { qubits, matrix } => {
                    let dim = matrix.nrows();
                    let mut m = Vec::with_capacity(dim * dim);
                    for r in 0..dim {
                        for c in 0..dim {
                            let z = matrix[(r, c)];
                            m.push([z.re, z.im]);
                        }
                    }
                    GateRepr::U { qs: qubits.clone(), m }
                }
            })
            .collect();
        CircuitRepr { qubits: self.n_qubits, gates, registers: self.registers.clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Circuit {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = CircuitRepr::deserialize(d)?;
        let mut gates = Vec::with_capacity(repr.gates.len());
        for g in repr.gates {
            gates.push(match g {
                GateRepr::Ry { q, theta } => Gate::Ry { qubit: q, theta },
                GateRepr::Rz { q, theta } => Gate::Rz { qubit: q, theta },
                GateRepr::Cx { c, t } => Gate::Cx { control: c, target: t },
                GateRepr::U { qs, m } => {
                    let dim = 1usize << qs.len();
                    if m.len() != dim * dim {
                        return Err(D::Error::custom(format!(
                            "opaque gate on {} qubits needs {} matrix entries",
                            qs.len(),
                            dim * dim
                        )));
                    }
                    let data: Vec<Complex64> = m.iter().map(|[re, im]| Complex64::new(*re, *im)).collect();
                    Gate::Unitary { qubits: qs, matrix: CMat::from_row_slice(dim, dim, &data) }
                }
            });
        }
        let c = Circuit { n_qubits: repr.qubits, gates, registers: repr.registers };
        c.validate().map_err(D::Error::custom)?;
        Ok(c)
    }
}
