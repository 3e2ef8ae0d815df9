//! Minimal dense-tensor arithmetic shared by every other module.
//!
//! Tensors are row-major, channels-first for images, and carry 64-bit data
//! so that the quantized executor and the spiking simulator accumulate the
//! same terms with negligible rounding skew between their two summation
//! orders. All operations are pure and deterministic.

use crate::error::{Error, Result};

/// Dense row-major tensor of 64-bit reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Dense row-major tensor of integer codes (quantization codes, spike tracers).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codes {
    shape: Vec<usize>,
    data: Vec<i32>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if numel(&shape) != data.len() {
            return Err(Error::Dimension(format!(
                "shape {:?} holds {} elements but {} were supplied",
                shape,
                numel(&shape),
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = numel(&shape);
        Tensor { shape, data: vec![0.0; n] }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let n = numel(&shape);
        Tensor { shape, data: vec![value; n] }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![1], data: vec![value] }
    }

    /// Identity matrix of size `n`.
    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(vec![n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged row list".into()));
        }
        Tensor::new(vec![r, c], rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Same data, new shape with identical element count.
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Tensor> {
        Tensor::new(shape, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn scaled(&self, factor: f64) -> Tensor {
        self.map(|v| v * factor)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "elementwise add of {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "elementwise add of {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "elementwise sub of {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

impl Codes {
    pub fn new(shape: Vec<usize>, data: Vec<i32>) -> Result<Self> {
        if numel(&shape) != data.len() {
            return Err(Error::Dimension(format!(
                "shape {:?} holds {} elements but {} were supplied",
                shape,
                numel(&shape),
                data.len()
            )));
        }
        Ok(Codes { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = numel(&shape);
        Codes { shape, data: vec![0; n] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[i32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [i32] {
        &mut self.data
    }

    /// Real-valued view: each code times `scale` (exact products of small
    /// integers, so both execution routes see identical bit patterns).
    pub fn to_values(&self, scale: f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&c| c as f64 * scale).collect(),
        }
    }
}

/// `c[i][j] = sum_p a[i][p] * b[p][j]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (&[m, ka], &[kb, n]) = (&a.shape[..], &b.shape[..]) else {
        return Err(Error::Dimension(format!(
            "matmul needs two matrices, got {:?} and {:?}",
            a.shape, b.shape
        )));
    };
    if ka != kb {
        return Err(Error::Dimension(format!(
            "matmul inner dimensions disagree: {:?} x {:?}",
            a.shape, b.shape
        )));
    }
    let mut out = Tensor::zeros(vec![m, n]);
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0f64;
            for p in 0..ka {
                acc += a.data[i * ka + p] * b.data[p * n + j];
            }
            out.data[i * n + j] = acc;
        }
    }
    Ok(out)
}

/// Matrix times flattened vector: `w` is `[m, k]`, `x` any tensor with `k`
/// elements (row-major flatten). Returns a length-`m` vector.
pub fn matvec(w: &Tensor, x: &Tensor) -> Result<Tensor> {
    let &[m, k] = &w.shape[..] else {
        return Err(Error::Dimension(format!("matvec weight must be 2-d, got {:?}", w.shape)));
    };
    if x.len() != k {
        return Err(Error::Dimension(format!(
            "matvec: weight {:?} against input of {} elements",
            w.shape,
            x.len()
        )));
    }
    let mut out = Tensor::zeros(vec![m]);
    for i in 0..m {
        let row = &w.data[i * k..(i + 1) * k];
        let mut acc = 0.0f64;
        for (wv, xv) in row.iter().zip(&x.data) {
            acc += wv * xv;
        }
        out.data[i] = acc;
    }
    Ok(out)
}

/// Transposed matvec: returns `w^T * g`, a length-`k` vector.
pub fn matvec_t(w: &Tensor, g: &Tensor) -> Result<Tensor> {
    let &[m, k] = &w.shape[..] else {
        return Err(Error::Dimension(format!("matvec_t weight must be 2-d, got {:?}", w.shape)));
    };
    if g.len() != m {
        return Err(Error::Dimension(format!(
            "matvec_t: weight {:?} against gradient of {} elements",
            w.shape,
            g.len()
        )));
    }
    let mut out = Tensor::zeros(vec![k]);
    for i in 0..m {
        let gi = g.data[i];
        if gi == 0.0 {
            continue;
        }
        let row = &w.data[i * k..(i + 1) * k];
        for (o, wv) in out.data.iter_mut().zip(row) {
            *o += wv * gi;
        }
    }
    Ok(out)
}

fn conv_input_chw(input: &Tensor) -> Result<(usize, usize, usize)> {
    match input.shape[..] {
        [h, w] => Ok((1, h, w)),
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::Dimension(format!(
            "conv/pool input must be [H,W] or [C,H,W], got {:?}",
            input.shape
        ))),
    }
}

/// Cross-correlation of a channels-first image with a kernel bank.
///
/// `input` is `[C,H,W]` (or `[H,W]` with an implicit single channel),
/// `kernels` is `[F,C,kh,kw]`; output is `[F,H',W']` with
/// `H' = (H + 2*padding - kh)/stride + 1`.
pub fn conv2d(input: &Tensor, kernels: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let (c, h, w) = conv_input_chw(input)?;
    let &[f, kc, kh, kw] = &kernels.shape[..] else {
        return Err(Error::Dimension(format!(
            "conv2d kernels must be [F,C,kh,kw], got {:?}",
            kernels.shape
        )));
    };
    if kc != c {
        return Err(Error::Dimension(format!(
            "conv2d: input has {c} channels, kernels expect {kc}"
        )));
    }
    if stride == 0 {
        return Err(Error::Dimension("conv2d stride must be >= 1".into()));
    }
    let h_pad = h + 2 * padding;
    let w_pad = w + 2 * padding;
    if h_pad < kh || w_pad < kw {
        return Err(Error::Dimension(format!(
            "conv2d output dims non-positive: input {h}x{w}, kernel {kh}x{kw}, padding {padding}"
        )));
    }
    let ho = (h_pad - kh) / stride + 1;
    let wo = (w_pad - kw) / stride + 1;
    let mut out = Tensor::zeros(vec![f, ho, wo]);
    for of in 0..f {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = 0.0f64;
                for ic in 0..c {
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let iv = input.data[(ic * h + iy as usize) * w + ix as usize];
                            let kv = kernels.data[((of * c + ic) * kh + ky) * kw + kx];
                            acc += iv * kv;
                        }
                    }
                }
                out.data[(of * ho + oy) * wo + ox] = acc;
            }
        }
    }
    Ok(out)
}

/// Non-overlapping k x k average pooling per channel.
pub fn avg_pool2d(input: &Tensor, k: usize) -> Result<Tensor> {
    if k == 0 {
        return Err(Error::Dimension("avg_pool2d window must be >= 1".into()));
    }
    if k == 1 {
        return Ok(input.clone());
    }
    let (c, h, w) = conv_input_chw(input)?;
    if h % k != 0 || w % k != 0 {
        return Err(Error::Dimension(format!(
            "avg_pool2d: spatial dims {h}x{w} not divisible by window {k}"
        )));
    }
    let ho = h / k;
    let wo = w / k;
    let out_shape = if input.shape.len() == 2 { vec![ho, wo] } else { vec![c, ho, wo] };
    let mut out = Tensor::zeros(out_shape);
    let norm = 1.0 / (k * k) as f64;
    for ic in 0..c {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = 0.0f64;
                for dy in 0..k {
                    for dx in 0..k {
                        acc += input.data[(ic * h + oy * k + dy) * w + ox * k + dx];
                    }
                }
                out.data[(ic * ho + oy) * wo + ox] = acc * norm;
            }
        }
    }
    Ok(out)
}

/// Max pooling, present only so source networks can carry it before
/// operator substitution replaces it.
pub fn max_pool2d(input: &Tensor, k: usize) -> Result<Tensor> {
    if k == 0 {
        return Err(Error::Dimension("max_pool2d window must be >= 1".into()));
    }
    if k == 1 {
        return Ok(input.clone());
    }
    let (c, h, w) = conv_input_chw(input)?;
    if h % k != 0 || w % k != 0 {
        return Err(Error::Dimension(format!(
            "max_pool2d: spatial dims {h}x{w} not divisible by window {k}"
        )));
    }
    let ho = h / k;
    let wo = w / k;
    let out_shape = if input.shape.len() == 2 { vec![ho, wo] } else { vec![c, ho, wo] };
    let mut out = Tensor::zeros(out_shape);
    for ic in 0..c {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = f64::NEG_INFINITY;
                for dy in 0..k {
                    for dx in 0..k {
                        best = best.max(input.data[(ic * h + oy * k + dy) * w + ox * k + dx]);
                    }
                }
                out.data[(ic * ho + oy) * wo + ox] = best;
            }
        }
    }
    Ok(out)
}

/// Stack `parts` along `axis`, order preserved. All non-axis dims must agree.
pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
    let Some(first) = parts.first() else {
        return Err(Error::Dimension("concat of an empty part list".into()));
    };
    let rank = first.shape.len();
    if axis >= rank {
        return Err(Error::Dimension(format!(
            "concat axis {axis} out of range for rank {rank}"
        )));
    }
    let mut axis_total = 0;
    for p in parts {
        if p.shape.len() != rank {
            return Err(Error::Dimension("concat parts have differing ranks".into()));
        }
        for (d, (&a, &b)) in first.shape.iter().zip(&p.shape).enumerate() {
            if d != axis && a != b {
                return Err(Error::Dimension(format!(
                    "concat parts disagree on non-axis dim {d}: {a} vs {b}"
                )));
            }
        }
        axis_total += p.shape[axis];
    }
    let mut out_shape = first.shape.clone();
    out_shape[axis] = axis_total;

    // Row-major copy: outer = dims before axis, inner = dims after axis.
    let outer: usize = first.shape[..axis].iter().product();
    let inner: usize = first.shape[axis + 1..].iter().product();
    let mut data = Vec::with_capacity(numel(&out_shape));
    for o in 0..outer {
        for p in parts {
            let span = p.shape[axis] * inner;
            let start = o * span;
            data.extend_from_slice(&p.data[start..start + span]);
        }
    }
    Tensor::new(out_shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity_passthrough() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let i = Tensor::identity(2);
        assert_eq!(matmul(&i, &a).unwrap(), a);
        assert_eq!(matmul(&a, &i).unwrap(), a);
    }

    #[test]
    fn matmul_hand_case() {
        let a = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::new(vec![2, 1], vec![3.0, 4.0]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.shape(), &[1, 1]);
        assert_eq!(c.data(), &[11.0]);
    }

    #[test]
    fn matmul_zero_annihilates() {
        let z = Tensor::zeros(vec![2, 3]);
        let b = Tensor::filled(vec![3, 4], 7.5);
        let c = matmul(&z, &b).unwrap();
        assert_eq!(c, Tensor::zeros(vec![2, 4]));
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Tensor::zeros(vec![2, 3]);
        let b = Tensor::zeros(vec![4, 2]);
        assert!(matches!(matmul(&a, &b), Err(Error::Dimension(_))));
    }

    #[test]
    fn conv2d_scalar_kernel() {
        let input = Tensor::filled(vec![3, 3], 1.0);
        let kernel = Tensor::new(vec![1, 1, 1, 1], vec![2.0]).unwrap();
        let out = conv2d(&input, &kernel, 1, 0).unwrap();
        assert_eq!(out.shape(), &[1, 3, 3]);
        assert!(out.data().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn conv2d_hand_case() {
        let input = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let kernel = Tensor::new(vec![1, 1, 2, 2], vec![1.0; 4]).unwrap();
        let out = conv2d(&input, &kernel, 1, 0).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert_eq!(out.data(), &[10.0]);
    }

    #[test]
    fn conv2d_zero_kernel_annihilates() {
        let input = Tensor::filled(vec![2, 4, 4], 3.25);
        let kernel = Tensor::zeros(vec![3, 2, 3, 3]);
        let out = conv2d(&input, &kernel, 1, 1).unwrap();
        assert_eq!(out.shape(), &[3, 4, 4]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv2d_one_by_one_unit_kernel_is_identity_per_channel() {
        let input = Tensor::new(vec![1, 2, 2], vec![0.5, -1.0, 2.0, 3.5]).unwrap();
        let kernel = Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap();
        let out = conv2d(&input, &kernel, 1, 0).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn conv2d_rejects_empty_output() {
        let input = Tensor::zeros(vec![1, 2, 2]);
        let kernel = Tensor::zeros(vec![1, 1, 5, 5]);
        assert!(matches!(conv2d(&input, &kernel, 1, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn avg_pool_constant_field() {
        let input = Tensor::filled(vec![4, 4], 7.0);
        let out = avg_pool2d(&input, 2).unwrap();
        assert_eq!(out.shape(), &[2, 2]);
        assert!(out.data().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn avg_pool_hand_case() {
        let input = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let out = avg_pool2d(&input, 2).unwrap();
        assert_eq!(out.data(), &[2.5]);
    }

    #[test]
    fn avg_pool_k1_identity() {
        let input = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(avg_pool2d(&input, 1).unwrap(), input);
    }

    #[test]
    fn avg_pool_indivisible_dims() {
        let input = Tensor::zeros(vec![3, 3]);
        assert!(matches!(avg_pool2d(&input, 2), Err(Error::Dimension(_))));
    }

    #[test]
    fn concat_vectors_in_order() {
        let a = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::new(vec![3], vec![3.0, 4.0, 5.0]).unwrap();
        let c = concat(&[&a, &b], 0).unwrap();
        assert_eq!(c.shape(), &[5]);
        assert_eq!(c.data(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn concat_single_part_is_identity() {
        let a = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(concat(&[&a], 0).unwrap(), a);
    }

    #[test]
    fn concat_rows() {
        let a = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::new(vec![1, 2], vec![3.0, 4.0]).unwrap();
        let c = concat(&[&a, &b], 0).unwrap();
        assert_eq!(c.shape(), &[2, 2]);
        assert_eq!(c.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn concat_mismatched_dims() {
        let a = Tensor::zeros(vec![1, 2]);
        let b = Tensor::zeros(vec![1, 3]);
        assert!(matches!(concat(&[&a, &b], 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn max_pool_hand_case() {
        let input = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let out = max_pool2d(&input, 2).unwrap();
        assert_eq!(out.data(), &[4.0]);
    }
}
