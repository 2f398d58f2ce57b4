//! Scalar reference kernels.
//!
//! Every accumulation runs in `f32` in a fixed order with plain multiply and
//! add (never `mul_add`), so results are bit-reproducible across builds.

use crate::tensor::{Tensor, TensorError};

fn mismatch(a: &[usize], b: &[usize]) -> TensorError {
    TensorError::ShapeMismatch {
        left: a.to_vec(),
        right: b.to_vec(),
    }
}

/// `[m,k] × [k,n] → [m,n]`, accumulating over `k` in ascending order.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
    a.expect_rank(2)?;
    b.expect_rank(2)?;
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let (k2, n) = (b.shape()[0], b.shape()[1]);
    if k != k2 {
        return Err(mismatch(a.shape(), b.shape()));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0f32;
            for t in 0..k {
                acc += ad[i * k + t] * bd[t * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    Tensor::new(&[m, n], out)
}

/// Fully connected layer on a vector: `y = x·W + bias` with `W` stored `[in, out]`.
pub fn dense(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor, TensorError> {
    x.expect_rank(1)?;
    weight.expect_rank(2)?;
    bias.expect_rank(1)?;
    let out_dim = weight.shape()[1];
    if bias.shape()[0] != out_dim {
        return Err(mismatch(weight.shape(), bias.shape()));
    }
    let row = x.clone().reshape(&[1, x.numel()])?;
    let mut y = matmul(&row, weight)?.reshape(&[out_dim])?;
    for (v, b) in y.data_mut().iter_mut().zip(bias.data()) {
        *v += *b;
    }
    Ok(y)
}

/// 3×3 cross-correlation, stride 1, zero padding 1.
///
/// `x: [N,C,H,W]`, `kernel: [F,C,3,3]`, `bias: [F]` → `[N,F,H,W]`. Each output
/// accumulates channels in ascending order, then kernel rows, then columns;
/// the bias is added last.
pub fn conv2d_same(x: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<Tensor, TensorError> {
    x.expect_rank(4)?;
    kernel.expect_rank(4)?;
    bias.expect_rank(1)?;
    let [n, c, h, w] = dims4(x);
    let [f, kc, kh, kw] = dims4(kernel);
    if kc != c || kh != 3 || kw != 3 || bias.shape()[0] != f {
        return Err(mismatch(x.shape(), kernel.shape()));
    }
    let (xd, kd, bd) = (x.data(), kernel.data(), bias.data());
    let mut out = vec![0.0f32; n * f * h * w];
    for ni in 0..n {
        for fi in 0..f {
            for oy in 0..h {
                for ox in 0..w {
                    let mut acc = 0.0f32;
                    for ci in 0..c {
                        let plane = (ni * c + ci) * h * w;
                        let kbase = (fi * c + ci) * 9;
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = oy as isize + ky as isize - 1;
                                let ix = ox as isize + kx as isize - 1;
                                let v = if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize
                                {
                                    xd[plane + iy as usize * w + ix as usize]
                                } else {
                                    0.0
                                };
                                acc += v * kd[kbase + ky * 3 + kx];
                            }
                        }
                    }
                    out[((ni * f + fi) * h + oy) * w + ox] = acc + bd[fi];
                }
            }
        }
    }
    Tensor::new(&[n, f, h, w], out)
}

/// Per-pixel channel projection (a 1×1 convolution). `weight: [F,C]`, `bias: [F]`.
pub fn pointwise_conv(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor, TensorError> {
    x.expect_rank(4)?;
    weight.expect_rank(2)?;
    bias.expect_rank(1)?;
    let [n, c, h, w] = dims4(x);
    let (f, wc) = (weight.shape()[0], weight.shape()[1]);
    if wc != c || bias.shape()[0] != f {
        return Err(mismatch(x.shape(), weight.shape()));
    }
    let hw = h * w;
    let mut out = Vec::with_capacity(n * f * hw);
    for ni in 0..n {
        let sample = x.data()[ni * c * hw..(ni + 1) * c * hw].to_vec();
        let features = Tensor::new(&[c, hw], sample)?;
        let projected = matmul(weight, &features)?;
        for (fi, row) in projected.data().chunks_exact(hw).enumerate() {
            out.extend(row.iter().map(|v| v + bias.data()[fi]));
        }
    }
    Tensor::new(&[n, f, h, w], out)
}

/// Nearest-neighbour 2× upsampling: every pixel becomes a 2×2 block.
pub fn upsample2x_nearest(x: &Tensor) -> Result<Tensor, TensorError> {
    x.expect_rank(4)?;
    let [n, c, h, w] = dims4(x);
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = vec![0.0f32; n * c * h2 * w2];
    for (plane_idx, plane) in x.data().chunks_exact(h * w).enumerate() {
        let dst = &mut out[plane_idx * h2 * w2..(plane_idx + 1) * h2 * w2];
        for y in 0..h2 {
            for xx in 0..w2 {
                dst[y * w2 + xx] = plane[(y / 2) * w + xx / 2];
            }
        }
    }
    Tensor::new(&[n, c, h2, w2], out)
}

/// 2×2 block average; the left inverse of [`upsample2x_nearest`].
pub fn downsample2x_mean(x: &Tensor) -> Result<Tensor, TensorError> {
    x.expect_rank(4)?;
    let [n, c, h, w] = dims4(x);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(TensorError::InvalidShape(x.shape().to_vec()));
    }
    let (h2, w2) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * c * h2 * w2);
    for plane in x.data().chunks_exact(h * w) {
        for y in 0..h2 {
            for xx in 0..w2 {
                let at = |dy: usize, dx: usize| plane[(2 * y + dy) * w + 2 * xx + dx];
                out.push((at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1)) * 0.25);
            }
        }
    }
    Tensor::new(&[n, c, h2, w2], out)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
    if a.shape() != b.shape() {
        return Err(mismatch(a.shape(), b.shape()));
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Tensor::new(a.shape(), data)
}

pub fn scale(a: &Tensor, s: f32) -> Tensor {
    a.map(|v| v * s)
}

/// Adds `per_channel[c]` to every pixel of channel `c` of an `[N,C,H,W]` tensor.
pub fn add_channel_bias(x: &Tensor, per_channel: &Tensor) -> Result<Tensor, TensorError> {
    x.expect_rank(4)?;
    per_channel.expect_rank(1)?;
    let [_, c, h, w] = dims4(x);
    if per_channel.shape()[0] != c {
        return Err(mismatch(x.shape(), per_channel.shape()));
    }
    let mut out = x.clone();
    for (plane_idx, plane) in out.data_mut().chunks_exact_mut(h * w).enumerate() {
        let b = per_channel.data()[plane_idx % c];
        plane.iter_mut().for_each(|v| *v += b);
    }
    Ok(out)
}

pub(crate) fn dims4(t: &Tensor) -> [usize; 4] {
    let s = t.shape();
    [s[0], s[1], s[2], s[3]]
}
