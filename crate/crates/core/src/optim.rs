//! Losses, gradients, Adam/AdamW and the two training loops (QTT cores by
//! MSE, unitary-aware ansatz angles by Born KL).

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{apply_gate, Gate};
use crate::encoders::{self, block_fragment, unitary_bonds, BlockParams};
use crate::error::{Error, Result};
use crate::linalg::{ceil_log2, ZERO};
use crate::tensor::{quantize_image, tt_svd, ComplexImage, Image, QttCore, QttCores};

/// Recorded gates of one block, each tagged with its parameter index.
type Tape = Vec<(Gate, Option<usize>)>;
/// Cores, tapes and per-block output batches of one forward pass.
type Forward = (Vec<QttCore>, Vec<Tape>, Vec<Vec<Complex64>>);

/// Additive floor inside both logarithms of the KL loss.
pub const KL_EPS: f64 = 1e-12;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
/// Fraction of steps spent warming up in the one-cycle schedule.
pub const WARMUP_FRACTION: f64 = 0.3;
/// Ratio between peak and floor rate in the one-cycle schedule.
pub const ONE_CYCLE_DIV: f64 = 25.0;
pub const GRADIENT_CHECK_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    AdamW,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Schedule {
    Constant,
    OneCycle { max_rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Kl,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    pub optimizer: OptimizerKind,
    /// Rate for the constant schedule; ignored by one-cycle.
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub schedule: Schedule,
    pub loss: LossKind,
    pub seed: u64,
}

impl OptConfig {
    /// Adam at 0.01 for 2000 epochs on MSE.
    pub fn qtt_default() -> Self {
        OptConfig {
            optimizer: OptimizerKind::Adam,
            learning_rate: 0.01,
            weight_decay: 0.0,
            epochs: 2000,
            schedule: Schedule::Constant,
            loss: LossKind::Mse,
            seed: 0,
        }
    }

    /// AdamW, one-cycle peaking at 0.03, weight decay 1e-4, 1000 epochs on KL.
    pub fn unitary_default() -> Self {
        OptConfig {
            optimizer: OptimizerKind::AdamW,
            learning_rate: 0.03,
            weight_decay: 1e-4,
            epochs: 1000,
            schedule: Schedule::OneCycle { max_rate: 0.03 },
            loss: LossKind::Kl,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::invalid("weight decay must be nonnegative"));
        }
        if let Schedule::OneCycle { max_rate } = self.schedule {
            if !(max_rate > 0.0) || !max_rate.is_finite() {
                return Err(Error::invalid("one-cycle max rate must be positive"));
            }
        }
        Ok(())
    }

    pub fn rate(&self, step: usize) -> f64 {
        match self.schedule {
            Schedule::Constant => self.learning_rate,
            Schedule::OneCycle { max_rate } => one_cycle_rate(step, self.epochs, max_rate),
        }
    }
}

/// Loss value with its gradient in parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub gradient: Vec<f64>,
}

fn same_size(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::structural(format!("shape mismatch: {a} vs {b} pixels")));
    }
    Ok(())
}

fn target_distribution(target: &[f64]) -> Result<Vec<f64>> {
    if target.iter().any(|&y| !(y >= 0.0) || !y.is_finite()) {
        return Err(Error::invalid("KL target must be finite and nonnegative"));
    }
    let total: f64 = target.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("KL target is all zero"));
    }
    Ok(target.iter().map(|y| y / total).collect())
}

fn kl_from(p_y: &[f64], amps: &[Complex64]) -> f64 {
    let z: f64 = amps.iter().map(|x| x.norm_sqr()).sum();
    p_y.iter()
        .zip(amps)
        .map(|(&py, x)| {
            let px = if z > 0.0 { x.norm_sqr() / z } else { 0.0 };
            py * ((py + KL_EPS).ln() - (px + KL_EPS).ln())
        })
        .sum()
}

/// `Σ p_Y (ln(p_Y + ε) − ln(p_X + ε))` with `p_X = |X|²/Σ|X|²`.
pub fn kl_loss(recon: &ComplexImage, target: &Image) -> Result<f64> {
    same_size(recon.values.len(), target.pixels().len())?;
    let p_y = target_distribution(target.pixels())?;
    Ok(kl_from(&p_y, &recon.values))
}

pub fn mse_loss(recon: &ComplexImage, target: &Image) -> Result<f64> {
    same_size(recon.values.len(), target.pixels().len())?;
    let n = target.pixels().len() as f64;
    Ok(recon.values.iter().zip(target.pixels()).map(|(x, &y)| (x - y).norm_sqr()).sum::<f64>() / n)
}

/// A differentiable scalar function of a real parameter vector.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&self, params: &[f64]) -> Result<f64>;
    fn value_and_gradient(&self, params: &[f64]) -> Result<LossValue>;
}

fn check_dim(obj: &dyn Objective, params: &[f64]) -> Result<()> {
    if params.len() != obj.dim() {
        return Err(Error::structural(format!(
            "objective expects {} parameters, got {}",
            obj.dim(),
            params.len()
        )));
    }
    Ok(())
}

/// Gradient of `obj` at `params`, rejecting non-finite results.
pub fn gradient(obj: &dyn Objective, params: &[f64]) -> Result<Vec<f64>> {
    check_dim(obj, params)?;
    let lv = obj.value_and_gradient(params)?;
    if !lv.value.is_finite() || lv.gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical("objective or gradient is not finite".into()));
    }
    if lv.gradient.len() != params.len() {
        return Err(Error::structural("gradient length differs from parameter count"));
    }
    Ok(lv.gradient)
}

/// Central differences with step `h` on the given coordinates.
pub fn finite_difference(obj: &dyn Objective, params: &[f64], coords: &[usize], h: f64) -> Result<Vec<f64>> {
    check_dim(obj, params)?;
    let mut p = params.to_vec();
    coords
        .iter()
        .map(|&i| {
            if i >= p.len() {
                return Err(Error::invalid(format!("coordinate {i} out of range")));
            }
            let x = p[i];
            p[i] = x + h;
            let up = obj.value(&p)?;
            p[i] = x - h;
            let down = obj.value(&p)?;
            p[i] = x;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::Numerical("objective is not finite".into()));
            }
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

/// Largest relative deviation between the gradient and central differences
/// on `coords`. The denominator is floored at [`GRADIENT_CHECK_FLOOR`], above
/// the round-off of a central difference, so that coordinates with an exact
/// zero gradient are not scored on noise.
pub fn gradient_check(obj: &dyn Objective, params: &[f64], coords: &[usize], h: f64) -> Result<f64> {
    let g = gradient(obj, params)?;
    let fd = finite_difference(obj, params, coords, h)?;
    Ok(coords
        .iter()
        .zip(&fd)
        .map(|(&i, &f)| (g[i] - f).abs() / g[i].abs().max(f.abs()).max(GRADIENT_CHECK_FLOOR))
        .fold(0.0, f64::max))
}

/// Linear warm-up from `max_rate/25` to `max_rate` over the first 30% of the
/// steps, then cosine decay back to `max_rate/25` at the last step.
pub fn one_cycle_rate(step: usize, total_steps: usize, max_rate: f64) -> f64 {
    let floor = max_rate / ONE_CYCLE_DIV;
    if total_steps <= 1 {
        return max_rate;
    }
    let last = total_steps - 1;
    let step = step.min(last);
    let peak = ((last as f64) * WARMUP_FRACTION).round() as usize;
    if step <= peak {
        if peak == 0 {
            return max_rate;
        }
        return floor + (max_rate - floor) * step as f64 / peak as f64;
    }
    let t = (step - peak) as f64 / (last - peak) as f64;
    floor + (max_rate - floor) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Adam with optional decoupled weight decay (AdamW).
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub decoupled: bool,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(dim: usize) -> Self {
        Adam {
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            weight_decay: 0.0,
            decoupled: false,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn adamw(dim: usize, weight_decay: f64) -> Self {
        Adam { weight_decay, decoupled: true, ..Adam::new(dim) }
    }

    pub fn from_config(dim: usize, cfg: &OptConfig) -> Self {
        match cfg.optimizer {
            OptimizerKind::Adam => Adam { weight_decay: cfg.weight_decay, ..Adam::new(dim) },
            OptimizerKind::AdamW => Adam::adamw(dim, cfg.weight_decay),
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let mut g = grad[i];
            if self.decoupled {
                params[i] -= lr * self.weight_decay * params[i];
            } else {
                g += self.weight_decay * params[i];
            }
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Loss on quantized-order amplitudes, returning the value and
/// `∂L/∂Re X + i ∂L/∂Im X`.
#[derive(Debug, Clone)]
enum Head {
    /// `mean |X − Y|²`.
    Mse { target: Vec<f64> },
    /// KL between Born probabilities of `X` and the normalized target.
    Kl { p_y: Vec<f64> },
    /// `mean (mass·p_X − Y)²`.
    BornMse { target: Vec<f64>, mass: f64 },
}

impl Head {
    fn value(&self, x: &[Complex64]) -> f64 {
        match self {
            Head::Mse { target } => {
                x.iter().zip(target).map(|(x, &y)| (x - y).norm_sqr()).sum::<f64>() / target.len() as f64
            }
            Head::Kl { p_y } => kl_from(p_y, x),
            Head::BornMse { target, mass } => {
                let z: f64 = x.iter().map(|v| v.norm_sqr()).sum();
                x.iter()
                    .zip(target)
                    .map(|(v, &y)| {
                        let p = if z > 0.0 { v.norm_sqr() / z } else { 0.0 };
                        (mass * p - y).powi(2)
                    })
                    .sum::<f64>()
                    / target.len() as f64
            }
        }
    }

    fn gradient(&self, x: &[Complex64]) -> Vec<Complex64> {
        match self {
            Head::Mse { target } => {
                let n = target.len() as f64;
                x.iter().zip(target).map(|(x, &y)| (x - y) * (2.0 / n)).collect()
            }
            Head::Kl { p_y } => born_chain(x, |i, p| -p_y[i] / (p + KL_EPS)),
            Head::BornMse { target, mass } => {
                let n = target.len() as f64;
                born_chain(x, |i, p| 2.0 * mass * (mass * p - target[i]) / n)
            }
        }
    }
}

/// Chain rule through `p = |X|²/Z` given `dL/dp_i = w(i, p_i)`.
fn born_chain(x: &[Complex64], w: impl Fn(usize, f64) -> f64) -> Vec<Complex64> {
    let z: f64 = x.iter().map(|v| v.norm_sqr()).sum();
    if !(z > 0.0) {
        return vec![ZERO; x.len()];
    }
    let p: Vec<f64> = x.iter().map(|v| v.norm_sqr() / z).collect();
    let ws: Vec<f64> = p.iter().enumerate().map(|(i, &pi)| w(i, pi)).collect();
    let mean: f64 = ws.iter().zip(&p).map(|(a, b)| a * b).sum();
    x.iter().zip(&ws).map(|(v, &wi)| v * (2.0 * (wi - mean) / z)).collect()
}

/// Amplitudes of the core chain plus the conjugate gradient of `head` with
/// respect to every core entry.
fn contract_backprop(cores: &[QttCore], scale: f64, head: &Head) -> (f64, Vec<Vec<Complex64>>) {
    let levels = cores.len();
    // lefts[k]: (prefix of k digits, bond r_k) row-major.
    let mut lefts = vec![vec![Complex64::new(scale, 0.0)]];
    for (k, core) in cores.iter().enumerate() {
        let (l, r) = (core.left(), core.right());
        let prev = &lefts[k];
        let prefixes = prev.len() / l;
        let mut next = vec![ZERO; prefixes * 4 * r];
        for u in 0..prefixes {
            for p in 0..4 {
                let out = &mut next[(u * 4 + p) * r..(u * 4 + p + 1) * r];
                for a in 0..l {
                    let w = prev[u * l + a];
                    if w == ZERO {
                        continue;
                    }
                    let src = &core.data()[(a * 4 + p) * r..(a * 4 + p + 1) * r];
                    for (o, s) in out.iter_mut().zip(src) {
                        *o += w * s;
                    }
                }
            }
        }
        lefts.push(next);
    }
    let x = &lefts[levels];
    let value = head.value(x);
    let gx = head.gradient(x);

    // rights[k]: (suffix of levels−k digits, bond r_{k−1}) for core k onward.
    let mut rights = vec![Vec::new(); levels + 1];
    rights[levels] = vec![Complex64::new(1.0, 0.0)];
    for k in (0..levels).rev() {
        let core = &cores[k];
        let (l, r) = (core.left(), core.right());
        let tail = &rights[k + 1];
        let suffixes = tail.len() / r;
        let mut next = vec![ZERO; 4 * suffixes * l];
        for p in 0..4 {
            for s in 0..suffixes {
                let v = &tail[s * r..(s + 1) * r];
                let out = &mut next[(p * suffixes + s) * l..(p * suffixes + s + 1) * l];
                for (a, o) in out.iter_mut().enumerate() {
                    let src = &core.data()[(a * 4 + p) * r..(a * 4 + p + 1) * r];
                    *o = src.iter().zip(v).map(|(c, w)| c * w).sum();
                }
            }
        }
        rights[k] = next;
    }

    let mut grads = Vec::with_capacity(levels);
    for (k, core) in cores.iter().enumerate() {
        let (l, r) = (core.left(), core.right());
        let left = &lefts[k];
        let right = &rights[k + 1];
        let prefixes = left.len() / l;
        let suffixes = right.len() / r;
        let mut g = vec![ZERO; l * 4 * r];
        let mut t = vec![ZERO; r];
        for u in 0..prefixes {
            for p in 0..4 {
                t.iter_mut().for_each(|v| *v = ZERO);
                let base = (u * 4 + p) * suffixes;
                for s in 0..suffixes {
                    let gv = gx[base + s];
                    if gv == ZERO {
                        continue;
                    }
                    for (tb, rb) in t.iter_mut().zip(&right[s * r..(s + 1) * r]) {
                        *tb += gv * rb.conj();
                    }
                }
                for a in 0..l {
                    let la = left[u * l + a].conj();
                    if la == ZERO {
                        continue;
                    }
                    let dst = &mut g[(a * 4 + p) * r..(a * 4 + p + 1) * r];
                    for (d, tb) in dst.iter_mut().zip(&t) {
                        *d += la * tb;
                    }
                }
            }
        }
        grads.push(g);
    }
    (value, grads)
}

fn contract_value(cores: &[QttCore], scale: f64, head: &Head) -> Result<f64> {
    let amps = crate::tensor::contract_amplitudes(&QttCores::new(cores.to_vec(), scale)?)?;
    Ok(head.value(&amps))
}

/// MSE (or Born KL) of a QTT against an image; parameters are the
/// interleaved real and imaginary parts of every core entry.
#[derive(Debug, Clone)]
pub struct QttObjective {
    shapes: Vec<(usize, usize)>,
    scale: f64,
    head: Head,
}

impl QttObjective {
    pub fn new(template: &QttCores, target: &Image, loss: LossKind) -> Result<Self> {
        template.validate()?;
        let q = quantize_image(target);
        same_size(q.data().len(), 1 << (2 * template.levels()))?;
        let head = match loss {
            LossKind::Mse => Head::Mse { target: q.data().to_vec() },
            LossKind::Kl => Head::Kl { p_y: target_distribution(q.data())? },
        };
        Ok(QttObjective {
            shapes: template.cores.iter().map(|c| (c.left(), c.right())).collect(),
            scale: template.scale,
            head,
        })
    }

    pub fn pack(cores: &QttCores) -> Vec<f64> {
        cores.cores.iter().flat_map(|c| c.data().iter().flat_map(|z| [z.re, z.im])).collect()
    }

    pub fn unpack(&self, params: &[f64]) -> Result<QttCores> {
        QttCores::new(self.cores(params)?, self.scale)
    }

    fn cores(&self, params: &[f64]) -> Result<Vec<QttCore>> {
        check_dim(self, params)?;
        let mut off = 0;
        self.shapes
            .iter()
            .map(|&(l, r)| {
                let n = 4 * l * r;
                let data = params[off..off + 2 * n].chunks(2).map(|c| Complex64::new(c[0], c[1])).collect();
                off += 2 * n;
                QttCore::new(l, r, data)
            })
            .collect()
    }
}

impl Objective for QttObjective {
    fn dim(&self) -> usize {
        self.shapes.iter().map(|&(l, r)| 8 * l * r).sum()
    }

    fn value(&self, params: &[f64]) -> Result<f64> {
        contract_value(&self.cores(params)?, self.scale, &self.head)
    }

    fn value_and_gradient(&self, params: &[f64]) -> Result<LossValue> {
        let cores = self.cores(params)?;
        let (value, grads) = contract_backprop(&cores, self.scale, &self.head);
        let gradient = grads.iter().flat_map(|g| g.iter().flat_map(|z| [z.re, z.im])).collect();
        Ok(LossValue { value, gradient })
    }
}

/// Loss of the unitary-aware ansatz as a function of all block angles,
/// concatenated block by block in [`BlockParams`] order.
#[derive(Debug, Clone)]
pub struct UnitaryObjective {
    levels: usize,
    bond_qubits: usize,
    layers: usize,
    head: Head,
}

impl UnitaryObjective {
    pub fn new(target: &Image, bond_qubits: usize, layers: usize, loss: LossKind) -> Result<Self> {
        if layers == 0 {
            return Err(Error::invalid("ansatz needs at least one layer"));
        }
        let q = quantize_image(target);
        let head = match loss {
            LossKind::Kl => Head::Kl { p_y: target_distribution(q.data())? },
            LossKind::Mse => {
                target_distribution(q.data())?;
                Head::BornMse { target: q.data().to_vec(), mass: target.sum() }
            }
        };
        Ok(UnitaryObjective { levels: target.levels(), bond_qubits, layers, head })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn block_len(&self) -> usize {
        BlockParams::len_for(self.bond_qubits, self.layers)
    }

    pub fn blocks(&self, params: &[f64]) -> Result<Vec<BlockParams>> {
        check_dim(self, params)?;
        params
            .chunks(self.block_len())
            .map(|c| BlockParams::new(self.bond_qubits, self.layers, c.to_vec()))
            .collect()
    }

    pub fn pack(blocks: &[BlockParams]) -> Vec<f64> {
        blocks.iter().flat_map(|b| b.angles.iter().copied()).collect()
    }

    /// Block gates paired with the parameter index each rotation reads.
    fn tape(&self, block: &BlockParams) -> Vec<(Gate, Option<usize>)> {
        let n = block.arity();
        let mut rot = (0..block.layers).flat_map(|l| {
            (0..n).flat_map(move |q| [block.index(0, q, l), block.index(1, q, l)])
        });
        block_fragment(block)
            .gates()
            .iter()
            .map(|g| {
                let idx = if g.is_single_qubit_rotation() { rot.next() } else { None };
                (g.clone(), idx)
            })
            .collect()
    }

    /// The first `r_in` columns of the block unitary, row-major `D × r_in`.
    fn forward(&self, tape: &[(Gate, Option<usize>)], r_in: usize) -> Vec<Complex64> {
        let n = self.bond_qubits + 2;
        let mut buf = vec![ZERO; (1 << n) * r_in];
        for a in 0..r_in {
            buf[a * r_in + a] = Complex64::new(1.0, 0.0);
        }
        for (g, _) in tape {
            apply_gate(&mut buf, n, r_in, g);
        }
        buf
    }

    fn core_from(&self, m: &[Complex64], r_in: usize, r_out: usize) -> Result<QttCore> {
        let d = 1usize << self.bond_qubits;
        let mut core = QttCore::zeros(r_in, r_out);
        for a in 0..r_in {
            for p in 0..4 {
                for b in 0..r_out {
                    core.set(a, p / 2, p % 2, b, m[(p * d + b) * r_in + a]);
                }
            }
        }
        Ok(core)
    }

    fn cores_and_tapes(&self, params: &[f64]) -> Result<Forward> {
        let blocks = self.blocks(params)?;
        let mut cores = Vec::with_capacity(self.levels);
        let mut tapes = Vec::with_capacity(self.levels);
        let mut outs = Vec::with_capacity(self.levels);
        for (k, b) in blocks.iter().enumerate() {
            let (r_in, r_out) = unitary_bonds(self.bond_qubits, self.levels, k);
            let tape = self.tape(b);
            let m = self.forward(&tape, r_in);
            cores.push(self.core_from(&m, r_in, r_out)?);
            tapes.push(tape);
            outs.push(m);
        }
        Ok((cores, tapes, outs))
    }
}

impl Objective for UnitaryObjective {
    fn dim(&self) -> usize {
        self.levels * self.block_len()
    }

    fn value(&self, params: &[f64]) -> Result<f64> {
        let (cores, _, _) = self.cores_and_tapes(params)?;
        contract_value(&cores, 1.0, &self.head)
    }

    fn value_and_gradient(&self, params: &[f64]) -> Result<LossValue> {
        let (cores, tapes, outs) = self.cores_and_tapes(params)?;
        let (value, core_grads) = contract_backprop(&cores, 1.0, &self.head);
        let n = self.bond_qubits + 2;
        let d = 1usize << self.bond_qubits;
        let block_len = self.block_len();
        let mut gradient = vec![0.0; params.len()];
        for k in 0..self.levels {
            let (r_in, r_out) = unitary_bonds(self.bond_qubits, self.levels, k);
            let mut bar = vec![ZERO; (1 << n) * r_in];
            for a in 0..r_in {
                for p in 0..4 {
                    for b in 0..r_out {
                        bar[(p * d + b) * r_in + a] = core_grads[k][(a * 4 + p) * r_out + b];
                    }
                }
            }
            let mut state = outs[k].clone();
            let grad = &mut gradient[k * block_len..(k + 1) * block_len];
            for (g, idx) in tapes[k].iter().rev() {
                let inv = inverse(g);
                apply_gate(&mut state, n, r_in, &inv);
                if let Some(i) = idx {
                    // dR(θ)/dθ = R(θ + π)/2 for both rotation axes.
                    let mut d_state = state.clone();
                    apply_gate(&mut d_state, n, r_in, &shifted(g));
                    let dot: f64 = bar.iter().zip(&d_state).map(|(b, s)| (b.conj() * s).re).sum();
                    grad[*i] += 0.5 * dot;
                }
                apply_gate(&mut bar, n, r_in, &inv);
            }
        }
        Ok(LossValue { value, gradient })
    }
}

fn inverse(g: &Gate) -> Gate {
    match g {
        Gate::Ry { qubit, theta } => Gate::Ry { qubit: *qubit, theta: -theta },
        Gate::Rz { qubit, theta } => Gate::Rz { qubit: *qubit, theta: -theta },
        other => other.clone(),
    }
}

fn shifted(g: &Gate) -> Gate {
    match g {
        Gate::Ry { qubit, theta } => Gate::Ry { qubit: *qubit, theta: theta + std::f64::consts::PI },
        Gate::Rz { qubit, theta } => Gate::Rz { qubit: *qubit, theta: theta + std::f64::consts::PI },
        other => other.clone(),
    }
}

/// Outcome of a training loop.
#[derive(Debug, Clone, Serialize)]
pub struct Trace {
    /// Loss before each step, followed by the loss after the last step.
    pub losses: Vec<f64>,
    pub initial_loss: f64,
    pub best_loss: f64,
    pub best_epoch: usize,
}

/// Runs the configured optimizer and returns the best parameters seen.
pub fn minimize(obj: &dyn Objective, init: Vec<f64>, cfg: &OptConfig) -> Result<(Vec<f64>, Trace)> {
    cfg.validate()?;
    check_dim(obj, &init)?;
    let mut params = init;
    let mut opt = Adam::from_config(params.len(), cfg);
    let mut losses = Vec::with_capacity(cfg.epochs + 1);
    let mut best = (f64::INFINITY, 0usize, params.clone());
    for epoch in 0..cfg.epochs {
        let lv = obj.value_and_gradient(&params)?;
        if !lv.value.is_finite() || lv.gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!("loss diverged at epoch {epoch}")));
        }
        losses.push(lv.value);
        if lv.value < best.0 {
            best = (lv.value, epoch, params.clone());
        }
        opt.step(&mut params, &lv.gradient, cfg.rate(epoch));
        log::trace!("epoch {epoch} loss {:.6e}", lv.value);
    }
    let last = obj.value(&params)?;
    losses.push(last);
    if last < best.0 {
        best = (last, cfg.epochs, params);
    }
    log::debug!("training finished: initial {:.6e}, best {:.6e} at epoch {}", losses[0], best.0, best.1);
    let trace = Trace { initial_loss: losses[0], best_loss: best.0, best_epoch: best.1, losses };
    Ok((best.2, trace))
}

#[derive(Debug, Clone)]
pub struct QttFit {
    pub cores: QttCores,
    pub trace: Trace,
}

/// TT-SVD at rank `r`, then gradient refinement of the cores.
pub fn fit_qtt(img: &Image, r: usize, cfg: &OptConfig) -> Result<QttFit> {
    let init = tt_svd(&quantize_image(img), r, 0.0)?;
    let obj = QttObjective::new(&init, img, cfg.loss)?;
    let (best, trace) = minimize(&obj, QttObjective::pack(&init), cfg)?;
    Ok(QttFit { cores: obj.unpack(&best)?, trace })
}

#[derive(Debug, Clone)]
pub struct UnitaryFit {
    pub blocks: Vec<BlockParams>,
    /// Pixel sum of the target; scales the Born reconstruction.
    pub mass: f64,
    pub trace: Trace,
}

impl UnitaryFit {
    pub fn reconstruction(&self) -> Result<Image> {
        encoders::unitary_reconstruction(&self.blocks, self.mass)
    }
}

/// Initial angles, uniform in `[-0.1, 0.1]`.
pub fn initial_angles(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-0.1..=0.1)).collect()
}

/// Trains the unitary-aware ansatz with bond dimension `r` (rounded up to a
/// power of two) and `layers` layers per block.
pub fn fit_unitary(img: &Image, r: usize, layers: usize, cfg: &OptConfig) -> Result<UnitaryFit> {
    if r == 0 {
        return Err(Error::invalid("rank must be at least 1"));
    }
    let obj = UnitaryObjective::new(img, ceil_log2(r), layers, cfg.loss)?;
    let init = initial_angles(obj.dim(), cfg.seed);
    let (best, trace) = minimize(&obj, init, cfg)?;
    Ok(UnitaryFit { blocks: obj.blocks(&best)?, mass: img.sum(), trace })
}
