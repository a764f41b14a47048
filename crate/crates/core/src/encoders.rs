//! Image encoders: amplitude baseline, sequential full-QTT circuits,
//! core-wise product circuits and the unitary-aware block ansatz, plus
//! decoding of simulated states back to images.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::canonical::{self, complete_to_unitary, Isometry, UnitaryMatrix};
use crate::circuit::{self, tensor_with, Circuit, Register, StateVector};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, ONE, ZERO};
use crate::synthesis::{self, SynthesisReport};
use crate::tensor::{
    self, dequantize, merge_physical, pixel_coords, Image, QttCore, QttCores,
    QuantizedTensor,
};

pub const BIT_ORDER: &str = "qubit0-msb";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Amplitude,
    Full,
    Core,
    Unitary,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Amplitude, Method::Full, Method::Core, Method::Unitary];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Amplitude => "amplitude",
            Method::Full => "full",
            Method::Core => "core",
            Method::Unitary => "unitary",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method '{s}' (amplitude|full|core|unitary)")))
    }
}

/// Classical side information needed to turn a simulated state back into an
/// image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingLayout {
    pub method: Method,
    /// Image side length.
    pub size: usize,
    pub qubits: usize,
    pub bond_qubits: usize,
    pub registers: Vec<Register>,
    /// Global norm (amplitude, full) or per-core norms (core).
    pub norms: Vec<f64>,
    /// Global phases dropped by synthesis: one entry per register for
    /// core-wise layouts, otherwise a single entry.
    pub phases: Vec<f64>,
    /// `(r_in, r_out)` per core.
    pub core_shapes: Vec<(usize, usize)>,
    /// Tensor scale factor multiplying the core-wise contraction.
    pub scale: f64,
    /// Target pixel sum used by the Born decoding of unitary layouts.
    pub mass: f64,
    pub bit_order: String,
    pub version: String,
}

impl EncodingLayout {
    fn new(method: Method, size: usize, qubits: usize) -> Self {
        EncodingLayout {
            method,
            size,
            qubits,
            bond_qubits: 0,
            registers: Vec::new(),
            norms: Vec::new(),
            phases: Vec::new(),
            core_shapes: Vec::new(),
            scale: 1.0,
            mass: 0.0,
            bit_order: BIT_ORDER.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn levels(&self) -> usize {
        self.size.trailing_zeros() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || !self.size.is_power_of_two() {
            return Err(Error::structural(format!("layout size {} is not a power of two", self.size)));
        }
        if self.bit_order != BIT_ORDER {
            return Err(Error::structural(format!("unsupported bit order '{}'", self.bit_order)));
        }
        let total: usize = self.registers.iter().map(|r| r.qubits.len()).sum();
        if total != self.qubits {
            return Err(Error::structural(format!(
                "registers cover {total} qubits, layout declares {}",
                self.qubits
            )));
        }
        if self.norms.iter().any(|n| !(*n >= 0.0) || !n.is_finite()) {
            return Err(Error::structural("layout norms must be finite and non-negative"));
        }
        let levels = self.levels();
        match self.method {
            Method::Amplitude => {
                if self.qubits != 2 * levels || self.norms.len() != 1 || self.phases.len() != 1 {
                    return Err(Error::structural("malformed amplitude layout"));
                }
            }
            Method::Full | Method::Unitary => {
                if self.qubits != 2 * levels + self.bond_qubits {
                    return Err(Error::structural("qubit count does not match levels and bond register"));
                }
                if self.phases.len() != 1 || (self.method == Method::Full && self.norms.len() != 1) {
                    return Err(Error::structural("malformed sequential layout"));
                }
            }
            Method::Core => {
                if self.core_shapes.len() != levels
                    || self.norms.len() != levels
                    || self.phases.len() != levels
                    || self.registers.len() != levels
                {
                    return Err(Error::structural("core-wise layout needs one entry per core"));
                }
                if self.norms.iter().any(|n| *n <= 0.0) {
                    return Err(Error::structural("core-wise norms must be positive"));
                }
                for (k, (&(a, b), reg)) in self.core_shapes.iter().zip(&self.registers).enumerate() {
                    if reg.qubits.len() != core_register_qubits(a, b) {
                        return Err(Error::structural(format!("register {k} does not fit core {a}x4x{b}")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Circuit, layout and the synthesis reports of every prepared piece.
#[derive(Debug, Clone)]
pub struct Encoding {
    pub circuit: Circuit,
    pub layout: EncodingLayout,
    pub synthesis: Vec<SynthesisReport>,
}

fn to_complex(v: &[f64], scale: f64) -> Vec<Complex64> {
    v.iter().map(|x| Complex64::new(x * scale, 0.0)).collect()
}

/// Row-major pixel amplitudes on `2·log2(s)` qubits.
pub fn encode_amplitude(img: &Image) -> Result<Encoding> {
    let norm = img.frobenius_norm();
    if !(norm > 0.0) {
        return Err(Error::invalid("cannot amplitude-encode an all-zero image"));
    }
    let syn = synthesis::prepare_state(&to_complex(img.pixels(), 1.0 / norm))?;
    let n = syn.circuit.n_qubits();
    let mut circuit = syn.circuit;
    circuit.registers = vec![Register { name: "pixels".into(), qubits: (0..n).collect() }];
    let mut layout = EncodingLayout::new(Method::Amplitude, img.size(), n);
    layout.registers = circuit.registers.clone();
    layout.norms = vec![norm];
    layout.phases = vec![syn.report.global_phase];
    layout.mass = img.sum();
    Ok(Encoding { circuit, layout, synthesis: vec![syn.report] })
}

/// Global qubit indices of block `k` in local order
/// `(p_i, p_j, bond_0, …, bond_{N_b−1})`.
fn block_qubits(n_bond: usize, k: usize) -> Vec<usize> {
    let mut q = vec![n_bond + 2 * k, n_bond + 2 * k + 1];
    q.extend(0..n_bond);
    q
}

fn sequential_registers(n_bond: usize, levels: usize) -> Vec<Register> {
    let mut regs = Vec::with_capacity(levels + 1);
    if n_bond > 0 {
        regs.push(Register { name: "bond".into(), qubits: (0..n_bond).collect() });
    }
    for k in 0..levels {
        regs.push(Register { name: format!("level{}", k + 1), qubits: vec![n_bond + 2 * k, n_bond + 2 * k + 1] });
    }
    regs
}

/// Sequential circuit: right-canonical cores completed to unitaries and
/// synthesized on a shared bond register plus one fresh qubit pair per level.
pub fn encode_full(cores: &QttCores) -> Result<Encoding> {
    cores.validate()?;
    if !(cores.scale > 0.0) {
        return Err(Error::invalid("cannot encode a zero-norm tensor"));
    }
    let levels = cores.levels();
    let mps: Vec<_> = cores.cores.iter().map(merge_physical).collect();
    let padded = canonical::pad_bonds_pow2(&mps);
    let canon = canonical::right_canonicalize(&padded)?;
    let (canon, norm) = canonical::normalize_global(&canon)?;
    let max_bond = canon.cores.iter().map(|c| c.left.max(c.right)).max().unwrap_or(1);
    let n_bond = linalg::ceil_log2(max_bond);
    let bond_dim = 1usize << n_bond;
    let n_qubits = n_bond + 2 * levels;

    let mut circuit = Circuit::new(n_qubits);
    let mut reports = Vec::with_capacity(levels);
    let mut phase = 0.0;
    let mut shapes = Vec::with_capacity(levels);
    for (k, core) in canon.cores.iter().enumerate() {
        let v = canonical::core_isometry(core);
        let mut embedded = CMat::zeros(4 * bond_dim, core.left);
        for p in 0..4 {
            for b in 0..core.right {
                for a in 0..core.left {
                    embedded[(p * bond_dim + b, a)] = v[(p * core.right + b, a)];
                }
            }
        }
        let u = complete_to_unitary(&Isometry::new(embedded)?)?;
        let syn = synthesis::decompose_unitary(&u)?;
        circuit.append_mapped(&syn.circuit, &block_qubits(n_bond, k))?;
        phase += syn.report.global_phase;
        reports.push(syn.report);
        shapes.push((core.left, core.right));
    }
    circuit.registers = sequential_registers(n_bond, levels);

    let mut layout = EncodingLayout::new(Method::Full, 1 << levels, n_qubits);
    layout.bond_qubits = n_bond;
    layout.registers = circuit.registers.clone();
    layout.norms = vec![norm * cores.scale];
    layout.phases = vec![phase];
    layout.core_shapes = shapes;
    Ok(Encoding { circuit, layout, synthesis: reports })
}

/// Qubits holding a zero-padded `r_in × 4 × r_out` core.
pub fn core_register_qubits(r_in: usize, r_out: usize) -> usize {
    linalg::ceil_log2(4 * r_in * r_out)
}

/// Each core flattened, normalized and amplitude-encoded on its own
/// register; the registers never interact.
pub fn encode_core(cores: &QttCores) -> Result<Encoding> {
    cores.validate()?;
    if !(cores.scale > 0.0) {
        return Err(Error::invalid("cannot encode a zero-norm tensor"));
    }
    let levels = cores.levels();
    let mut circuit = Circuit::new(0);
    let mut reports = Vec::with_capacity(levels);
    let mut norms = Vec::with_capacity(levels);
    let mut phases = Vec::with_capacity(levels);
    let mut shapes = Vec::with_capacity(levels);
    for (k, core) in cores.cores.iter().enumerate() {
        let norm = core.frobenius_norm();
        if !(norm > 0.0) {
            return Err(Error::invalid(format!("core {} is identically zero", k + 1)));
        }
        let q = core_register_qubits(core.left(), core.right());
        let mut v = vec![ZERO; 1 << q];
        for (dst, src) in v.iter_mut().zip(core.data()) {
            *dst = src / norm;
        }
        let syn = synthesis::prepare_state(&v)?;
        let mut piece = syn.circuit;
        piece.registers = vec![Register { name: format!("core{}", k + 1), qubits: (0..q).collect() }];
        circuit = tensor_with(&circuit, &piece);
        norms.push(norm);
        phases.push(syn.report.global_phase);
        shapes.push((core.left(), core.right()));
        reports.push(syn.report);
    }
    let mut layout = EncodingLayout::new(Method::Core, 1 << levels, circuit.n_qubits());
    layout.registers = circuit.registers.clone();
    layout.norms = norms;
    layout.phases = phases;
    layout.core_shapes = shapes;
    layout.scale = cores.scale;
    Ok(Encoding { circuit, layout, synthesis: reports })
}

/// Per-block rotation angles of the unitary-aware ansatz, stored row-major
/// over `(kind, qubit, layer)` where kind 0 is the RY angle α and kind 1 the
/// RZ angle β. Qubit order is `(p_i, p_j, bond_0, …)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockParams {
    pub bond_qubits: usize,
    pub layers: usize,
    pub angles: Vec<f64>,
}

impl BlockParams {
    pub fn new(bond_qubits: usize, layers: usize, angles: Vec<f64>) -> Result<Self> {
        if layers == 0 {
            return Err(Error::invalid("block needs at least one layer"));
        }
        if angles.len() != Self::len_for(bond_qubits, layers) {
            return Err(Error::structural(format!(
                "block with {bond_qubits} bond qubits and {layers} layers needs {} angles, got {}",
                Self::len_for(bond_qubits, layers),
                angles.len()
            )));
        }
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("block angles must be finite"));
        }
        Ok(BlockParams { bond_qubits, layers, angles })
    }

    pub fn zeros(bond_qubits: usize, layers: usize) -> Self {
        BlockParams { bond_qubits, layers, angles: vec![0.0; Self::len_for(bond_qubits, layers)] }
    }

    pub fn len_for(bond_qubits: usize, layers: usize) -> usize {
        2 * (bond_qubits + 2) * layers
    }

    pub fn arity(&self) -> usize {
        self.bond_qubits + 2
    }

    pub fn index(&self, kind: usize, qubit: usize, layer: usize) -> usize {
        (kind * self.arity() + qubit) * self.layers + layer
    }

    pub fn alpha(&self, layer: usize, qubit: usize) -> f64 {
        self.angles[self.index(0, qubit, layer)]
    }

    pub fn beta(&self, layer: usize, qubit: usize) -> f64 {
        self.angles[self.index(1, qubit, layer)]
    }
}

/// Fixed CNOT pattern of one ansatz layer in local block qubits: each bond
/// qubit drives one physical qubit, the bond register is chained, and the two
/// physical qubits are coupled. Gates are ordered into disjoint rounds so a
/// layer entangles in at most three steps for `N_b ≤ 3`.
pub fn entangler(bond_qubits: usize) -> Vec<(usize, usize)> {
    let mut pattern = Vec::with_capacity(2 * bond_qubits + 1);
    for q in 0..bond_qubits {
        pattern.push((2 + q, q % 2));
    }
    for q in 0..bond_qubits.saturating_sub(1) {
        pattern.push((2 + q, 3 + q));
    }
    pattern.push((0, 1));

    let mut colour = vec![0usize; pattern.len()];
    for i in 0..pattern.len() {
        let (a, b) = pattern[i];
        let mut c = 0;
        while (0..i).any(|j| colour[j] == c && [pattern[j].0, pattern[j].1].iter().any(|&x| x == a || x == b)) {
            c += 1;
        }
        colour[i] = c;
    }
    let mut order: Vec<usize> = (0..pattern.len()).collect();
    order.sort_by_key(|&i| (colour[i], i));
    order.into_iter().map(|i| pattern[i]).collect()
}

/// Gate-level fragment of one block on its `N_b + 2` local qubits.
pub fn block_fragment(params: &BlockParams) -> Circuit {
    let n = params.arity();
    let ent = entangler(params.bond_qubits);
    let mut c = Circuit::new(n);
    for l in 0..params.layers {
        for q in 0..n {
            c.ry(q, params.alpha(l, q)).rz(q, params.beta(l, q));
        }
        for &(ctl, tgt) in &ent {
            c.cx(ctl, tgt);
        }
    }
    c
}

fn cx_matrix(n: usize, control: usize, target: usize) -> CMat {
    let dim = 1usize << n;
    let cbit = 1usize << (n - 1 - control);
    let tbit = 1usize << (n - 1 - target);
    CMat::from_fn(dim, dim, |row, col| {
        let image = if col & cbit != 0 { col ^ tbit } else { col };
        if row == image {
            ONE
        } else {
            ZERO
        }
    })
}

/// Block unitary `∏_ℓ U_e · ⊗_q RZ(β)RY(α)` and its gate-level fragment.
pub fn build_block_unitary(params: &BlockParams) -> Result<(UnitaryMatrix, Circuit)> {
    let n = params.arity();
    let dim = 1usize << n;
    let mut ent = CMat::identity(dim, dim);
    for &(c, t) in &entangler(params.bond_qubits) {
        ent = cx_matrix(n, c, t) * ent;
    }
    let mut u = CMat::identity(dim, dim);
    for l in 0..params.layers {
        let mut layer = CMat::identity(1, 1);
        for q in 0..n {
            let single = circuit::rz_matrix(params.beta(l, q)) * circuit::ry_matrix(params.alpha(l, q));
            layer = linalg::kron(&layer, &single);
        }
        u = &ent * layer * u;
    }
    Ok((UnitaryMatrix::new(u)?, block_fragment(params)))
}

/// Core `A[a, i, j, b] = U[(2i + j)·2^{N_b} + b, a]` read from the first
/// `r_in` columns; bond rows at or beyond `r_out` are discarded.
pub fn extract_core(u: &UnitaryMatrix, r_in: usize, r_out: usize) -> Result<QttCore> {
    let arity = u.arity();
    if arity < 2 {
        return Err(Error::structural("block unitary needs at least the two physical qubits"));
    }
    let bond_dim = 1usize << (arity - 2);
    if r_in == 0 || r_out == 0 || r_in > bond_dim || r_out > bond_dim {
        return Err(Error::invalid(format!(
            "bond dimensions ({r_in}, {r_out}) exceed the {bond_dim}-dimensional bond register"
        )));
    }
    let m = u.matrix();
    let mut core = QttCore::zeros(r_in, r_out);
    for a in 0..r_in {
        for p in 0..4 {
            for b in 0..r_out {
                core.set(a, p / 2, p % 2, b, m[(p * bond_dim + b, a)]);
            }
        }
    }
    Ok(core)
}

/// Bond dimensions `(r_in, r_out)` used by the unitary-aware ansatz for
/// block `k` of `levels`.
pub fn unitary_bonds(bond_qubits: usize, levels: usize, k: usize) -> (usize, usize) {
    let d = 1usize << bond_qubits;
    let r_in = if k == 0 { 1 } else { d };
    let r_out = if k + 1 == levels { 1 } else { d };
    (r_in, r_out)
}

fn check_blocks(params: &[BlockParams]) -> Result<usize> {
    let first = params.first().ok_or_else(|| Error::invalid("need at least one block"))?;
    if params.iter().any(|p| p.bond_qubits != first.bond_qubits || p.layers != first.layers) {
        return Err(Error::structural("all blocks must share arity and layer count"));
    }
    Ok(first.bond_qubits)
}

/// Cores induced by the ansatz blocks (scale 1).
pub fn unitary_cores(params: &[BlockParams]) -> Result<QttCores> {
    let n_bond = check_blocks(params)?;
    let levels = params.len();
    let mut cores = Vec::with_capacity(levels);
    for (k, p) in params.iter().enumerate() {
        let (u, _) = build_block_unitary(p)?;
        let (r_in, r_out) = unitary_bonds(n_bond, levels, k);
        cores.push(extract_core(&u, r_in, r_out)?);
    }
    QttCores::new(cores, 1.0)
}

/// Image with Born distribution `|x|² / Σ|x|²` scaled to total `mass`;
/// `amps` are in quantized order.
pub fn born_image(levels: usize, amps: &[Complex64], mass: f64) -> Result<Image> {
    let total: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
    let data = if total > 0.0 {
        amps.iter().map(|z| mass * z.norm_sqr() / total).collect()
    } else {
        vec![0.0; amps.len()]
    };
    Ok(dequantize(&QuantizedTensor::new(levels, data)?))
}

/// Classical reconstruction of an ansatz: Born image of the contraction.
pub fn unitary_reconstruction(params: &[BlockParams], mass: f64) -> Result<Image> {
    let cores = unitary_cores(params)?;
    born_image(cores.levels(), &tensor::contract_amplitudes(&cores)?, mass)
}

/// Sequential circuit of native ansatz blocks. `mass` is the pixel sum the
/// Born decoding restores.
pub fn encode_unitary(params: &[BlockParams], mass: f64) -> Result<Encoding> {
    let n_bond = check_blocks(params)?;
    if !(mass >= 0.0) || !mass.is_finite() {
        return Err(Error::invalid("target mass must be finite and non-negative"));
    }
    let levels = params.len();
    let n_qubits = n_bond + 2 * levels;
    let mut circuit = Circuit::new(n_qubits);
    for (k, p) in params.iter().enumerate() {
        BlockParams::new(p.bond_qubits, p.layers, p.angles.clone())?;
        circuit.append_mapped(&block_fragment(p), &block_qubits(n_bond, k))?;
    }
    circuit.registers = sequential_registers(n_bond, levels);
    let mut layout = EncodingLayout::new(Method::Unitary, 1 << levels, n_qubits);
    layout.bond_qubits = n_bond;
    layout.registers = circuit.registers.clone();
    layout.norms = vec![mass];
    layout.phases = vec![0.0];
    layout.core_shapes = (0..levels).map(|k| unitary_bonds(n_bond, levels, k)).collect();
    layout.mass = mass;
    Ok(Encoding { circuit, layout, synthesis: Vec::new() })
}

fn signed_magnitude(z: Complex64) -> f64 {
    if z.re < 0.0 {
        -z.norm()
    } else {
        z.norm()
    }
}

/// Inverse of the encoding map for a simulated state.
pub fn decode(state: &StateVector, layout: &EncodingLayout) -> Result<Image> {
    layout.validate()?;
    if state.n_qubits() != layout.qubits {
        return Err(Error::structural(format!(
            "state has {} qubits, layout expects {}",
            state.n_qubits(),
            layout.qubits
        )));
    }
    let amps = state.amplitudes();
    let levels = layout.levels();
    let size = layout.size;
    match layout.method {
        Method::Amplitude => {
            let w = Complex64::from_polar(layout.norms[0], layout.phases[0]);
            Image::new(size, amps.iter().map(|z| signed_magnitude(z * w)).collect())
        }
        Method::Full => {
            let w = Complex64::from_polar(layout.norms[0], layout.phases[0]);
            let slice = &amps[..1usize << (2 * levels)];
            let data = slice.iter().map(|z| signed_magnitude(z * w)).collect();
            Ok(dequantize(&QuantizedTensor::new(levels, data)?))
        }
        Method::Unitary => born_image(levels, &amps[..1usize << (2 * levels)], layout.mass),
        Method::Core => decode_core(amps, layout),
    }
}

fn decode_core(amps: &[Complex64], layout: &EncodingLayout) -> Result<Image> {
    let levels = layout.levels();
    let widths: Vec<usize> = layout.registers.iter().map(|r| r.qubits.len()).collect();
    let total: usize = widths.iter().sum();
    let (pivot, pivot_amp) = amps
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
        .map(|(i, z)| (i, *z))
        .ok_or_else(|| Error::structural("empty state"))?;
    if pivot_amp.norm() == 0.0 {
        return Err(Error::Numerical("state has no support".into()));
    }

    let mut cores = Vec::with_capacity(levels);
    let mut shift = total;
    for (k, &w) in widths.iter().enumerate() {
        shift -= w;
        let mask = ((1usize << w) - 1) << shift;
        let (r_in, r_out) = layout.core_shapes[k];
        let w_k = Complex64::from_polar(layout.norms[k], layout.phases[k]);
        let data: Vec<Complex64> = (0..4 * r_in * r_out)
            .map(|i| amps[(pivot & !mask) | (i << shift)] * w_k)
            .collect();
        cores.push(QttCore::new(r_in, r_out, data)?);
    }
    // Each slice carries the other registers' pivot amplitudes; together
    // that is pivot_amp^(L-1).
    let overlap = pivot_amp.powi(levels as i32 - 1);
    let mut values = tensor::contract_amplitudes(&QttCores::new(cores, layout.scale)?)?;
    for v in &mut values {
        *v /= overlap;
    }
    let mut pixels = vec![0.0; values.len()];
    for (q, v) in values.iter().enumerate() {
        let (x, y) = pixel_coords(levels, q);
        pixels[x * layout.size + y] = signed_magnitude(*v);
    }
    Image::new(layout.size, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{simulate, Fusion};
    use crate::linalg::testing::random_unitary;
    use crate::tensor::{contract, quantize_image, tt_svd};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(size: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(size, |_, _| rng.gen::<f64>()).unwrap()
    }

    fn max_abs(a: &Image, b: &Image) -> f64 {
        a.pixels().iter().zip(b.pixels()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn random_params(rng: &mut ChaCha8Rng, n_bond: usize, layers: usize) -> BlockParams {
        let n = BlockParams::len_for(n_bond, layers);
        BlockParams::new(n_bond, layers, (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap()
    }

    #[test]
    fn full_round_trip_matches_contraction() {
        for (size, rank, seed) in [(4, 4, 1), (8, 4, 2), (8, 2, 3), (8, 1, 4), (16, 3, 5)] {
            let img = random_image(size, seed);
            let cores = tt_svd(&quantize_image(&img), rank, 0.0).unwrap();
            let enc = encode_full(&cores).unwrap();
            let state = simulate(&enc.circuit).unwrap();
            let got = decode(&state, &enc.layout).unwrap();
            let want = contract(&cores).unwrap();
            assert!(max_abs(&got, &want) <= 1e-8, "size {size} rank {rank}");
            assert!(enc.synthesis.iter().all(|r| r.residual.unwrap() <= 1e-8));
        }
    }

    #[test]
    fn full_bond_register_is_disentangled() {
        let img = random_image(8, 6);
        let cores = tt_svd(&quantize_image(&img), 4, 0.0).unwrap();
        let enc = encode_full(&cores).unwrap();
        let state = simulate(&enc.circuit).unwrap();
        let slice = 1usize << 6;
        let leaked: f64 = state.amplitudes()[slice..].iter().map(|z| z.norm_sqr()).sum();
        assert!(leaked <= 1e-8);
    }

    #[test]
    fn full_qubit_counts() {
        let img = random_image(32, 7);
        let q = quantize_image(&img);
        let enc = encode_full(&tt_svd(&q, 4, 0.0).unwrap()).unwrap();
        assert_eq!(enc.circuit.n_qubits(), 12);
        assert_eq!(enc.layout.bond_qubits, 2);
        let enc = encode_full(&tt_svd(&q, 8, 0.0).unwrap()).unwrap();
        assert_eq!(enc.circuit.n_qubits(), 13);
    }

    #[test]
    fn full_rejects_zero_image() {
        let cores = tt_svd(&quantize_image(&Image::zeros(4).unwrap()), 2, 0.0).unwrap();
        assert_eq!(encode_full(&cores).unwrap_err().kind(), "invalid-input");
    }

    #[test]
    fn core_round_trip_matches_contraction() {
        for (size, rank, seed) in [(4, 4, 8), (8, 4, 9), (8, 3, 10), (16, 2, 11)] {
            let img = random_image(size, seed);
            let cores = tt_svd(&quantize_image(&img), rank, 0.0).unwrap();
            let enc = encode_core(&cores).unwrap();
            let state = simulate(&enc.circuit).unwrap();
            let got = decode(&state, &enc.layout).unwrap();
            assert!(max_abs(&got, &contract(&cores).unwrap()) <= 1e-8, "size {size} rank {rank}");
        }
    }

    #[test]
    fn core_round_trip_with_complex_cores() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let shapes = [(1, 2), (2, 2), (2, 1)];
        let cores: Vec<QttCore> = shapes
            .iter()
            .map(|&(a, b)| {
                let data = (0..4 * a * b).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
                QttCore::new(a, b, data).unwrap()
            })
            .collect();
        let cores = QttCores::new(cores, 1.5).unwrap();
        let enc = encode_core(&cores).unwrap();
        let state = simulate(&enc.circuit).unwrap();
        let got = decode(&state, &enc.layout).unwrap();
        let want = tensor::contract_complex(&cores).unwrap();
        for (g, w) in got.pixels().iter().zip(&want.values) {
            assert!((g - signed_magnitude(*w)).abs() <= 1e-8);
        }
    }

    #[test]
    fn core_registers_and_disjointness() {
        let img = random_image(32, 13);
        let q = quantize_image(&img);
        let enc = encode_core(&tt_svd(&q, 4, 0.0).unwrap()).unwrap();
        let widths: Vec<usize> = enc.layout.registers.iter().map(|r| r.qubits.len()).collect();
        assert_eq!(widths, vec![4, 6, 6, 6, 4]);
        assert_eq!(enc.circuit.n_qubits(), 26);
        for g in enc.circuit.gates() {
            let qs = g.qubits();
            let reg = |q: usize| enc.layout.registers.iter().position(|r| r.qubits.contains(&q)).unwrap();
            assert!(qs.iter().all(|&q| reg(q) == reg(qs[0])));
        }
        let enc = encode_core(&tt_svd(&q, 1, 0.0).unwrap()).unwrap();
        assert_eq!(enc.circuit.n_qubits(), 10);
        let enc = encode_core(&tt_svd(&q, 3, 0.0).unwrap()).unwrap();
        let widths: Vec<usize> = enc.layout.registers.iter().map(|r| r.qubits.len()).collect();
        assert_eq!(widths, vec![4, 6, 6, 6, 4]);
    }

    #[test]
    fn core_state_is_product_of_registers() {
        let img = random_image(8, 14);
        let cores = tt_svd(&quantize_image(&img), 2, 0.0).unwrap();
        let enc = encode_core(&cores).unwrap();
        let full = simulate(&enc.circuit).unwrap();
        let mut product = vec![ONE];
        for core in &cores.cores {
            let q = core_register_qubits(core.left(), core.right());
            let mut v = vec![ZERO; 1 << q];
            let n = core.frobenius_norm();
            for (d, s) in v.iter_mut().zip(core.data()) {
                *d = s / n;
            }
            let reg = simulate(&synthesis::prepare_state(&v).unwrap().circuit).unwrap();
            product = product
                .iter()
                .flat_map(|a| reg.amplitudes().iter().map(move |b| a * b))
                .collect();
        }
        for (a, b) in full.amplitudes().iter().zip(&product) {
            assert!((a - b).norm() <= 1e-12);
        }
    }

    #[test]
    fn core_rejects_zero_core() {
        let mut z = QttCore::zeros(1, 1);
        let mut one = QttCore::zeros(1, 1);
        one.set(0, 0, 0, 0, ONE);
        z.set(0, 0, 0, 0, ZERO);
        let cores = QttCores::new(vec![one, z], 1.0).unwrap();
        assert_eq!(encode_core(&cores).unwrap_err().kind(), "invalid-input");
    }

    #[test]
    fn amplitude_round_trip() {
        for size in [2, 4, 8, 16] {
            let img = random_image(size, size as u64);
            let enc = encode_amplitude(&img).unwrap();
            assert_eq!(enc.circuit.n_qubits(), 2 * size.trailing_zeros() as usize);
            let got = decode(&simulate(&enc.circuit).unwrap(), &enc.layout).unwrap();
            assert!(max_abs(&got, &img) <= 1e-10);
        }
    }

    #[test]
    fn entangler_pattern() {
        for n_bond in 1..=4 {
            let e = entangler(n_bond);
            assert_eq!(e.len(), 2 * n_bond);
            assert!(e.contains(&(0, 1)));
            for q in 0..n_bond {
                assert!(e.contains(&(2 + q, q % 2)));
            }
            for q in 0..n_bond - 1 {
                assert!(e.contains(&(2 + q, 3 + q)));
            }
        }
        assert_eq!(entangler(0), vec![(0, 1)]);
        let mut c = Circuit::new(5);
        for (a, b) in entangler(3) {
            c.cx(a, b);
        }
        assert_eq!(c.depth(), 3);
    }

    #[test]
    fn zero_angle_block_is_entangler_power() {
        for n_bond in 0..=3 {
            for layers in 1..=3 {
                let p = BlockParams::zeros(n_bond, layers);
                let (u, frag) = build_block_unitary(&p).unwrap();
                let n = n_bond + 2;
                let mut e = CMat::identity(1 << n, 1 << n);
                for (a, b) in entangler(n_bond) {
                    e = cx_matrix(n, a, b) * e;
                }
                let mut want = CMat::identity(1 << n, 1 << n);
                for _ in 0..layers {
                    want = &e * want;
                }
                assert!((u.matrix() - want).norm() < 1e-14);
                assert!((frag.unitary().unwrap() - u.matrix()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn block_matrix_matches_fragment() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for n_bond in [0, 1, 2, 3] {
            let p = random_params(&mut rng, n_bond, 3);
            let (u, frag) = build_block_unitary(&p).unwrap();
            assert!(linalg::unitarity_residual(u.matrix()) <= 1e-12);
            assert!((frag.unitary().unwrap() - u.matrix()).norm() <= 1e-12);
            let counts = frag.counts(Fusion::Fused);
            assert_eq!(counts.cnot, 3 * entangler(n_bond).len());
        }
    }

    #[test]
    fn extract_identity_core() {
        for n_bond in 0..=2 {
            let d = 1usize << n_bond;
            let u = UnitaryMatrix::new(CMat::identity(4 * d, 4 * d)).unwrap();
            let core = extract_core(&u, d, d).unwrap();
            for a in 0..d {
                for p in 0..4 {
                    for b in 0..d {
                        let want = if p == 0 && a == b { ONE } else { ZERO };
                        assert_eq!(core.get(a, p / 2, p % 2, b), want);
                    }
                }
            }
        }
    }

    #[test]
    fn extracted_columns_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let u = UnitaryMatrix::new(random_unitary(16, &mut rng)).unwrap();
        let core = extract_core(&u, 4, 4).unwrap();
        let v = CMat::from_fn(16, 4, |row, a| core.get(a, row / 8, (row / 4) % 2, row % 4));
        assert!((v.adjoint() * v - CMat::identity(4, 4)).norm() <= 1e-12);
        assert!(extract_core(&u, 5, 4).is_err());
        assert!(extract_core(&u, 4, 0).is_err());
    }

    #[test]
    fn extracted_chain_matches_column_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let params: Vec<BlockParams> = (0..3).map(|_| random_params(&mut rng, 1, 2)).collect();
        let cores = unitary_cores(&params).unwrap();
        let got = tensor::contract_amplitudes(&cores).unwrap();
        let us: Vec<CMat> = params.iter().map(|p| build_block_unitary(p).unwrap().0.into_inner()).collect();
        for idx in 0..64usize {
            let ps = [idx >> 4, (idx >> 2) & 3, idx & 3];
            // Row vector over the bond, starting from bond state 0.
            let mut row = vec![ONE, ZERO];
            for (k, u) in us.iter().enumerate() {
                let mut next = vec![ZERO; 2];
                for (b, nb) in next.iter_mut().enumerate() {
                    for (a, ra) in row.iter().enumerate() {
                        *nb += ra * u[(ps[k] * 2 + b, a)];
                    }
                }
                row = next;
            }
            assert!((got[idx] - row[0]).norm() <= 1e-12);
        }
    }

    #[test]
    fn unitary_counts_and_qubits() {
        let params: Vec<BlockParams> = (0..5).map(|_| BlockParams::zeros(3, 4)).collect();
        let enc = encode_unitary(&params, 1.0).unwrap();
        assert_eq!(enc.circuit.n_qubits(), 13);
        let c = enc.circuit.counts(Fusion::Fused);
        assert_eq!((c.single_qubit, c.cnot, c.total), (100, 120, 220));
        for (levels, layers, n_bond) in [(3, 2, 1), (4, 3, 2), (2, 5, 4)] {
            let params: Vec<BlockParams> = (0..levels).map(|_| BlockParams::zeros(n_bond, layers)).collect();
            let enc = encode_unitary(&params, 1.0).unwrap();
            assert_eq!(enc.circuit.counts(Fusion::Fused).cnot, levels * layers * 2 * n_bond);
            assert_eq!(enc.circuit.n_qubits(), 2 * levels + n_bond);
        }
    }

    #[test]
    fn unitary_depth_is_affine_in_layers() {
        let depth = |layers| {
            let params: Vec<BlockParams> = (0..5).map(|_| BlockParams::zeros(3, layers)).collect();
            encode_unitary(&params, 1.0).unwrap().circuit.fused_depth()
        };
        let d: Vec<usize> = (1..=20).map(depth).collect();
        let slope = d[1] - d[0];
        for (i, w) in d.windows(2).enumerate() {
            assert_eq!(w[1] - w[0], slope, "at N_l = {}", i + 2);
        }
        assert!((17..=25).contains(&d[0]), "depth {}", d[0]);
    }

    #[test]
    fn unitary_decode_matches_classical_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        for (levels, n_bond, layers) in [(2, 1, 2), (3, 2, 2), (3, 0, 1)] {
            let params: Vec<BlockParams> = (0..levels).map(|_| random_params(&mut rng, n_bond, layers)).collect();
            let enc = encode_unitary(&params, 3.0).unwrap();
            let got = decode(&simulate(&enc.circuit).unwrap(), &enc.layout).unwrap();
            let want = unitary_reconstruction(&params, 3.0).unwrap();
            assert!(max_abs(&got, &want) <= 1e-12);
            assert!((got.sum() - 3.0).abs() <= 1e-12);
        }
        // Pure CNOT blocks: every block maps |0…0⟩ to itself, so all mass
        // lands on pixel (0, 0).
        let params: Vec<BlockParams> = (0..3).map(|_| BlockParams::zeros(2, 2)).collect();
        let enc = encode_unitary(&params, 1.0).unwrap();
        let got = decode(&simulate(&enc.circuit).unwrap(), &enc.layout).unwrap();
        let mut want = vec![0.0; 64];
        want[0] = 1.0;
        assert_eq!(got.pixels(), &want[..]);
    }

    #[test]
    fn decode_rejects_mismatched_state() {
        let img = random_image(4, 19);
        let enc = encode_amplitude(&img).unwrap();
        let state = StateVector::zero_state(3);
        assert_eq!(decode(&state, &enc.layout).unwrap_err().kind(), "structural");
    }

    #[test]
    fn layout_json_round_trip() {
        let img = random_image(8, 20);
        let enc = encode_core(&tt_svd(&quantize_image(&img), 2, 0.0).unwrap()).unwrap();
        let text = serde_json::to_string(&enc.layout).unwrap();
        let back: EncodingLayout = serde_json::from_str(&text).unwrap();
        assert_eq!(back, enc.layout);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["method"], "core");
        assert_eq!(v["bit_order"], BIT_ORDER);
    }

    #[test]
    fn qubit_count_formulas() {
        for size in [8usize, 16, 32, 64] {
            let levels = size.trailing_zeros() as usize;
            let img = random_image(size, size as u64 + 100);
            let q = quantize_image(&img);
            for r in [1usize, 2, 4, 8] {
                let cores = tt_svd(&q, r, 0.0).unwrap();
                let ranks = cores.ranks();
                let mut bonds = vec![1];
                bonds.extend(&ranks);
                bonds.push(1);
                let core_q: usize = bonds.windows(2).map(|w| linalg::ceil_log2(4 * w[0] * w[1])).sum();
                assert_eq!(encode_core(&cores).unwrap().circuit.n_qubits(), core_q);
                let params: Vec<BlockParams> = (0..levels).map(|_| BlockParams::zeros(r.trailing_zeros() as usize, 1)).collect();
                assert_eq!(encode_unitary(&params, 1.0).unwrap().circuit.n_qubits(), 2 * levels + r.trailing_zeros() as usize);
                if size <= 16 {
                    let full = encode_full(&cores).unwrap();
                    let max_rank = ranks.iter().copied().max().unwrap_or(1);
                    assert_eq!(full.circuit.n_qubits(), 2 * levels + linalg::ceil_log2(max_rank));
                }
            }
        }
    }

    #[test]
    fn method_parsing() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("mps".parse::<Method>().is_err());
    }
}
