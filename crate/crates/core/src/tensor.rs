//! Images, quantized (level-grouped) tensors and tensor-train cores.
//!
//! Pixel `(x, y)` of an `s × s` image, `s = 2^L`, maps to the multi-index
//! `(p_1, …, p_L)` with `p_k = 2·x_k + y_k`, where `x_k` / `y_k` are the k-th
//! most significant bits of the row / column coordinate. Flattened quantized
//! tensors store `p_1` as the most significant base-4 digit, so the flat index
//! interleaves the coordinate bits as `x_1 y_1 x_2 y_2 …`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ZERO};

/// Real-valued `s × s` grid, row-major, `s` a power of two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    size: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(size: usize, pixels: Vec<f64>) -> Result<Self> {
        if size == 0 || !size.is_power_of_two() {
            return Err(Error::invalid(format!(
                "image size {size} is not a power of two"
            )));
        }
        if pixels.len() != size * size {
            return Err(Error::invalid(format!(
                "expected {} pixels for a {size}x{size} image, got {}",
                size * size,
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("pixel {i} is not finite")));
        }
        Ok(Image { size, pixels })
    }

    pub fn zeros(size: usize) -> Result<Self> {
        Self::new(size, vec![0.0; size * size])
    }

    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(size * size);
        for x in 0..size {
            for y in 0..size {
                pixels.push(f(x, y));
            }
        }
        Self::new(size, pixels)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// `L = log2(s)`.
    pub fn levels(&self) -> usize {
        self.size.trailing_zeros() as usize
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[x * self.size + y]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.pixels.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sum(&self) -> f64 {
        self.pixels.iter().sum()
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }
}

/// Complex-valued reconstruction grid (row-major), as produced by contracting
/// complex cores.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexImage {
    pub size: usize,
    pub values: Vec<Complex64>,
}

impl ComplexImage {
    pub fn real(&self) -> Image {
        Image {
            size: self.size,
            pixels: self.values.iter().map(|z| z.re).collect(),
        }
    }

    pub fn magnitude(&self) -> Image {
        Image {
            size: self.size,
            pixels: self.values.iter().map(|z| z.norm()).collect(),
        }
    }
}

/// Maps pixel coordinates to the flat quantized index.
pub fn quantized_index(levels: usize, x: usize, y: usize) -> usize {
    let mut q = 0;
    for k in 0..levels {
        let shift = levels - 1 - k;
        let xb = (x >> shift) & 1;
        let yb = (y >> shift) & 1;
        q = (q << 2) | (xb << 1) | yb;
    }
    q
}

/// Inverse of [`quantized_index`].
pub fn pixel_coords(levels: usize, q: usize) -> (usize, usize) {
    let (mut x, mut y) = (0, 0);
    for k in 0..levels {
        let digit = (q >> (2 * (levels - 1 - k))) & 3;
        x = (x << 1) | (digit >> 1);
        y = (y << 1) | (digit & 1);
    }
    (x, y)
}

/// Order-`L` tensor with every mode of dimension 4, stored flat with `p_1`
/// most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    levels: usize,
    data: Vec<f64>,
}

impl QuantizedTensor {
    pub fn new(levels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != 1usize << (2 * levels) {
            return Err(Error::structural(format!(
                "quantized tensor of order {levels} needs {} entries, got {}",
                1usize << (2 * levels),
                data.len()
            )));
        }
        Ok(QuantizedTensor { levels, data })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn shape(&self) -> Vec<usize> {
        vec![4; self.levels]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Entry at multi-index `(p_1, …, p_L)`.
    pub fn get(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.levels);
        let flat = index.iter().fold(0, |acc, &p| {
            assert!(p < 4);
            acc * 4 + p
        });
        self.data[flat]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn quantize_image(img: &Image) -> QuantizedTensor {
    let levels = img.levels();
    let s = img.size();
    let mut data = vec![0.0; s * s];
    for x in 0..s {
        for y in 0..s {
            data[quantized_index(levels, x, y)] = img.get(x, y);
        }
    }
    QuantizedTensor { levels, data }
}

pub fn dequantize(t: &QuantizedTensor) -> Image {
    let s = 1usize << t.levels;
    let mut pixels = vec![0.0; s * s];
    for (q, v) in t.data.iter().enumerate() {
        let (x, y) = pixel_coords(t.levels, q);
        pixels[x * s + y] = *v;
    }
    Image { size: s, pixels }
}

/// Reorders a complex vector in quantized order into a row-major grid.
pub fn dequantize_complex(levels: usize, values: &[Complex64]) -> ComplexImage {
    let s = 1usize << levels;
    let mut out = vec![ZERO; s * s];
    for (q, v) in values.iter().enumerate() {
        let (x, y) = pixel_coords(levels, q);
        out[x * s + y] = *v;
    }
    ComplexImage { size: s, values: out }
}

/// One QTT core with shape `(left, 2, 2, right)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct QttCore {
    left: usize,
    right: usize,
    data: Vec<Complex64>,
}

impl QttCore {
    pub fn new(left: usize, right: usize, data: Vec<Complex64>) -> Result<Self> {
        if left == 0 || right == 0 || data.len() != left * 4 * right {
            return Err(Error::structural(format!(
                "core ({left},2,2,{right}) needs {} entries, got {}",
                left * 4 * right,
                data.len()
            )));
        }
        Ok(QttCore { left, right, data })
    }

    pub fn zeros(left: usize, right: usize) -> Self {
        QttCore { left, right, data: vec![ZERO; left * 4 * right] }
    }

    pub fn left(&self) -> usize {
        self.left
    }

    pub fn right(&self) -> usize {
        self.right
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.left, 2, 2, self.right)
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    #[inline]
    pub fn offset(&self, a: usize, i: usize, j: usize, b: usize) -> usize {
        ((a * 2 + i) * 2 + j) * self.right + b
    }

    pub fn get(&self, a: usize, i: usize, j: usize, b: usize) -> Complex64 {
        self.data[self.offset(a, i, j, b)]
    }

    pub fn set(&mut self, a: usize, i: usize, j: usize, b: usize, v: Complex64) {
        let o = self.offset(a, i, j, b);
        self.data[o] = v;
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Matrix slice `A[p]` of shape `(left, right)` for merged physical
    /// index `p = 2i + j`.
    pub fn slice(&self, p: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.left, self.right, |a, b| {
            self.data[(a * 4 + p) * self.right + b]
        })
    }
}

/// Tensor-train chain `scale × A^(1) ⋯ A^(L)` with boundary ranks 1.
#[derive(Debug, Clone, PartialEq)]
pub struct QttCores {
    pub cores: Vec<QttCore>,
    pub scale: f64,
}

impl QttCores {
    pub fn new(cores: Vec<QttCore>, scale: f64) -> Result<Self> {
        let q = QttCores { cores, scale };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cores.is_empty() {
            return Err(Error::structural("core chain is empty"));
        }
        if !(self.scale.is_finite() && self.scale >= 0.0) {
            return Err(Error::structural(format!("invalid scale {}", self.scale)));
        }
        if self.cores[0].left != 1 || self.cores.last().map(|c| c.right) != Some(1) {
            return Err(Error::structural("boundary bond dimensions must be 1"));
        }
        for (k, w) in self.cores.windows(2).enumerate() {
            if w[0].right != w[1].left {
                return Err(Error::structural(format!(
                    "bond mismatch between cores {k} and {}: {} vs {}",
                    k + 1,
                    w[0].right,
                    w[1].left
                )));
            }
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.cores.len()
    }

    /// Internal bond dimensions `r_1 … r_{L-1}`.
    pub fn ranks(&self) -> Vec<usize> {
        self.cores[..self.cores.len() - 1].iter().map(|c| c.right).collect()
    }

    pub fn max_rank(&self) -> usize {
        self.ranks().into_iter().max().unwrap_or(1)
    }

    /// Number of scalar entries across all cores.
    pub fn parameter_count(&self) -> usize {
        self.cores.iter().map(|c| c.data.len()).sum()
    }
}

/// Left-to-right sequential-SVD decomposition.
///
/// Singular values at or below `rel_tol × σ_max` (per split) are dropped and
/// at most `max_rank` are kept. The cores carry the normalized tensor and
/// `scale` holds its Frobenius norm. Returns the per-split truncation errors
/// (l2 norm of discarded singular values, in the units of `t`).
pub fn tt_svd_with_errors(
    t: &QuantizedTensor,
    max_rank: usize,
    rel_tol: f64,
) -> Result<(QttCores, Vec<f64>)> {
    if max_rank == 0 {
        return Err(Error::invalid("max_rank must be at least 1"));
    }
    if !(rel_tol >= 0.0) {
        return Err(Error::invalid("rel_tol must be non-negative"));
    }
    let levels = t.levels();
    let norm = t.frobenius_norm();
    if norm == 0.0 {
        let mut cores = Vec::with_capacity(levels);
        for _ in 0..levels {
            let mut c = QttCore::zeros(1, 1);
            c.set(0, 0, 0, 0, linalg::ONE);
            cores.push(c);
        }
        return Ok((QttCores { cores, scale: 0.0 }, vec![0.0; levels.saturating_sub(1)]));
    }

    let mut cores = Vec::with_capacity(levels);
    let mut errors = Vec::with_capacity(levels.saturating_sub(1));
    let mut left = 1usize;
    // Remaining tensor, row-major over (left, p_k, rest).
    let mut rest: Vec<f64> = t.data().iter().map(|v| v / norm).collect();
    for _ in 0..levels.saturating_sub(1) {
        let rows = left * 4;
        let cols = rest.len() / rows;
        let m = DMatrix::from_row_slice(rows, cols, &rest);
        let dec = linalg::svd_real(&m);
        let smax = dec.s.first().copied().unwrap_or(0.0);
        let mut keep = dec
            .s
            .iter()
            .take_while(|&&s| s > rel_tol * smax && s > 0.0)
            .count()
            .min(max_rank);
        keep = keep.max(1);
        let discarded: f64 = dec.s[keep..].iter().map(|s| s * s).sum::<f64>().sqrt();
        errors.push(discarded * norm);

        let mut core = QttCore::zeros(left, keep);
        for r in 0..rows {
            for b in 0..keep {
                core.data[r * keep + b] = Complex64::new(dec.u[(r, b)], 0.0);
            }
        }
        cores.push(core);

        let mut next = vec![0.0; keep * cols];
        for b in 0..keep {
            for c in 0..cols {
                next[b * cols + c] = dec.s[b] * dec.vt[(b, c)];
            }
        }
        rest = next;
        left = keep;
    }
    let mut last = QttCore::zeros(left, 1);
    for (dst, v) in last.data.iter_mut().zip(&rest) {
        *dst = Complex64::new(*v, 0.0);
    }
    cores.push(last);
    Ok((QttCores { cores, scale: norm }, errors))
}

pub fn tt_svd(t: &QuantizedTensor, max_rank: usize, rel_tol: f64) -> Result<QttCores> {
    tt_svd_with_errors(t, max_rank, rel_tol).map(|(c, _)| c)
}

/// Contracts the chain into the flat quantized-order amplitude vector
/// (scale applied).
pub fn contract_amplitudes(cores: &QttCores) -> Result<Vec<Complex64>> {
    cores.validate()?;
    // Row-major (prefix, bond) partial contraction.
    let mut partial = vec![Complex64::new(cores.scale, 0.0)];
    let mut prefixes = 1usize;
    let mut bond = 1usize;
    for core in &cores.cores {
        let right = core.right;
        let mut next = vec![ZERO; prefixes * 4 * right];
        for u in 0..prefixes {
            let row = &partial[u * bond..(u + 1) * bond];
            for p in 0..4 {
                let out = &mut next[(u * 4 + p) * right..(u * 4 + p + 1) * right];
                for (a, &w) in row.iter().enumerate() {
                    if w == ZERO {
                        continue;
                    }
                    let src = &core.data[(a * 4 + p) * right..(a * 4 + p + 1) * right];
                    for (o, s) in out.iter_mut().zip(src) {
                        *o += w * s;
                    }
                }
            }
        }
        partial = next;
        prefixes *= 4;
        bond = right;
    }
    Ok(partial)
}

/// Complex reconstruction on the pixel grid.
pub fn contract_complex(cores: &QttCores) -> Result<ComplexImage> {
    let amps = contract_amplitudes(cores)?;
    Ok(dequantize_complex(cores.levels(), &amps))
}

/// Real part of the reconstruction on the pixel grid.
pub fn contract(cores: &QttCores) -> Result<Image> {
    Ok(contract_complex(cores)?.real())
}

/// Three-way MPS core `(left, 4, right)` with merged physical index.
#[derive(Debug, Clone, PartialEq)]
pub struct MpsCore {
    pub left: usize,
    pub right: usize,
    /// Row-major over `(a, p, b)`.
    pub data: Vec<Complex64>,
}

impl MpsCore {
    pub fn new(left: usize, right: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != left * 4 * right {
            return Err(Error::structural("MPS core data length mismatch"));
        }
        Ok(MpsCore { left, right, data })
    }

    pub fn get(&self, a: usize, p: usize, b: usize) -> Complex64 {
        self.data[(a * 4 + p) * self.right + b]
    }

    /// `(left) × (4·right)` unfolding grouping `(p, b)`.
    pub fn unfold_right(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.left, 4 * self.right, &self.data)
    }

    /// `(left·4) × right` unfolding grouping `(a, p)`.
    pub fn unfold_left(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.left * 4, self.right, &self.data)
    }

    pub fn from_unfold_right(left: usize, right: usize, m: &DMatrix<Complex64>) -> Self {
        let mut data = Vec::with_capacity(left * 4 * right);
        for a in 0..left {
            for c in 0..4 * right {
                data.push(m[(a, c)]);
            }
        }
        MpsCore { left, right, data }
    }

    pub fn from_unfold_left(left: usize, right: usize, m: &DMatrix<Complex64>) -> Self {
        let mut data = Vec::with_capacity(left * 4 * right);
        for r in 0..left * 4 {
            for b in 0..right {
                data.push(m[(r, b)]);
            }
        }
        MpsCore { left, right, data }
    }
}

/// Fuses the two binary physical legs into `p = 2i + j`.
pub fn merge_physical(core: &QttCore) -> MpsCore {
    // (a, i, j, b) row-major coincides with (a, 2i+j, b) row-major.
    MpsCore { left: core.left, right: core.right, data: core.data.clone() }
}

/// Inverse of [`merge_physical`].
pub fn split_physical(core: &MpsCore) -> QttCore {
    QttCore { left: core.left, right: core.right, data: core.data.clone() }
}

/// Contracts a chain of MPS cores (with boundary ranks 1) into the quantized
/// amplitude vector.
pub fn contract_mps(cores: &[MpsCore]) -> Result<Vec<Complex64>> {
    let qtt: Vec<QttCore> = cores.iter().map(split_physical).collect();
    contract_amplitudes(&QttCores::new(qtt, 1.0)?)
}
