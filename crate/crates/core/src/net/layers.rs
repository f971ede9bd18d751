//! Layer kernels. Convolutions go through an im2col matrix so that every
//! inner loop runs over a contiguous row.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    pub d: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(d: usize, h: usize, w: usize) -> Tensor3 {
        Tensor3 {
            d,
            h,
            w,
            data: vec![0.0; d * h * w],
        }
    }

    pub fn from_vec(d: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Tensor3> {
        if data.len() != d * h * w {
            return Err(Error::Shape(format!(
                "{} values for a {d}x{h}x{w} tensor",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("non-finite tensor value".into()));
        }
        Ok(Tensor3 { d, h, w, data })
    }

    pub fn at(&self, z: usize, x: usize, y: usize) -> f64 {
        self.data[(z * self.h + x) * self.w + y]
    }
}

/// Convolution kernel bank `W[z, m, i, j]` with one bias per output map.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvWeights {
    pub d_out: usize,
    pub d_in: usize,
    pub k: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Dense layer `W·a + b` with `W` stored row-major as `n_out`×`n_in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub n_out: usize,
    pub n_in: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

pub fn leaky_relu(x: f64, alpha: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        alpha * x
    }
}

/// Derivative of [`leaky_relu`], taking 1 at the kink.
pub fn leaky_relu_grad(x: f64, alpha: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        alpha
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

#[inline]
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Dot product with eight independent accumulators, so the loop vectorizes
/// while the summation order stays fixed.
#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    let (x, y) = (&x[..n], &y[..n]);
    let mut acc = [0.0f64; 8];
    let xc = x.chunks_exact(8);
    let yc = y.chunks_exact(8);
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (a, b) in xc.zip(yc) {
        for l in 0..8 {
            acc[l] += a[l] * b[l];
        }
    }
    let mut tail = 0.0;
    for (a, b) in xr.iter().zip(yr) {
        tail += a * b;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `col[(m·k + i)·k + j][x·w + y] = A[m, x + i − l, y + j − l]`, zero outside.
pub(crate) fn im2col(a: &[f64], d: usize, h: usize, w: usize, k: usize, col: &mut Vec<f64>) {
    let l = (k / 2) as isize;
    let plane = h * w;
    col.clear();
    col.resize(d * k * k * plane, 0.0);
    for m in 0..d {
        let src = &a[m * plane..(m + 1) * plane];
        for i in 0..k {
            let di = i as isize - l;
            for j in 0..k {
                let dj = j as isize - l;
                let r = (m * k + i) * k + j;
                let dst = &mut col[r * plane..(r + 1) * plane];
                let y0 = (-dj).max(0) as usize;
                let y1 = (w as isize - dj).min(w as isize).max(0) as usize;
                for x in 0..h {
                    let sx = x as isize + di;
                    if sx < 0 || sx >= h as isize || y0 >= y1 {
                        continue;
                    }
                    let s_row = &src[sx as usize * w..(sx as usize + 1) * w];
                    let d_row = &mut dst[x * w..(x + 1) * w];
                    let off = (y0 as isize + dj) as usize;
                    d_row[y0..y1].copy_from_slice(&s_row[off..off + (y1 - y0)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the input.
pub(crate) fn col2im(col: &[f64], d: usize, h: usize, w: usize, k: usize, out: &mut [f64]) {
    let l = (k / 2) as isize;
    let plane = h * w;
    out.iter_mut().for_each(|v| *v = 0.0);
    for m in 0..d {
        for i in 0..k {
            let di = i as isize - l;
            for j in 0..k {
                let dj = j as isize - l;
                let r = (m * k + i) * k + j;
                let src = &col[r * plane..(r + 1) * plane];
                let y0 = (-dj).max(0) as usize;
                let y1 = (w as isize - dj).min(w as isize).max(0) as usize;
                if y0 >= y1 {
                    continue;
                }
                for x in 0..h {
                    let sx = x as isize + di;
                    if sx < 0 || sx >= h as isize {
                        continue;
                    }
                    let off = (y0 as isize + dj) as usize;
                    let dst = &mut out[m * plane + sx as usize * w..][off..off + (y1 - y0)];
                    for (o, s) in dst.iter_mut().zip(&src[x * w + y0..x * w + y1]) {
                        *o += s;
                    }
                }
            }
        }
    }
}

impl ConvWeights {
    pub fn zeros(d_out: usize, d_in: usize, k: usize) -> ConvWeights {
        ConvWeights {
            d_out,
            d_in,
            k,
            w: vec![0.0; d_out * d_in * k * k],
            b: vec![0.0; d_out],
        }
    }

    fn rows(&self) -> usize {
        self.d_in * self.k * self.k
    }

    /// Pre-activation from an im2col matrix of `plane` columns.
    pub(crate) fn forward_col(&self, col: &[f64], plane: usize, out: &mut [f64]) {
        let rows = self.rows();
        for z in 0..self.d_out {
            let dst = &mut out[z * plane..(z + 1) * plane];
            dst.iter_mut().for_each(|v| *v = self.b[z]);
            let wz = &self.w[z * rows..(z + 1) * rows];
            for (r, &wv) in wz.iter().enumerate() {
                if wv != 0.0 {
                    axpy(wv, &col[r * plane..(r + 1) * plane], dst);
                }
            }
        }
    }

    /// Adds this sample's weight and bias gradients; returns the column
    /// gradient when `want_input` is set.
    pub(crate) fn backward_col(
        &self,
        col: &[f64],
        plane: usize,
        dz: &[f64],
        grad: &mut ConvWeights,
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let rows = self.rows();
        for z in 0..self.d_out {
            let dzz = &dz[z * plane..(z + 1) * plane];
            grad.b[z] += dzz.iter().sum::<f64>();
            let gw = &mut grad.w[z * rows..(z + 1) * rows];
            for (r, g) in gw.iter_mut().enumerate() {
                *g += dot(dzz, &col[r * plane..(r + 1) * plane]);
            }
        }
        if !want_input {
            return None;
        }
        let mut dcol = vec![0.0; rows * plane];
        for z in 0..self.d_out {
            let dzz = &dz[z * plane..(z + 1) * plane];
            for r in 0..rows {
                let wv = self.w[z * rows + r];
                if wv != 0.0 {
                    axpy(wv, dzz, &mut dcol[r * plane..(r + 1) * plane]);
                }
            }
        }
        Some(dcol)
    }
}

impl Dense {
    pub fn zeros(n_out: usize, n_in: usize) -> Dense {
        Dense {
            n_out,
            n_in,
            w: vec![0.0; n_out * n_in],
            b: vec![0.0; n_out],
        }
    }

    pub(crate) fn forward_raw(&self, a: &[f64]) -> Vec<f64> {
        (0..self.n_out)
            .map(|r| self.b[r] + dot(&self.w[r * self.n_in..(r + 1) * self.n_in], a))
            .collect()
    }

    pub(crate) fn backward_raw(&self, a: &[f64], dz: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut da = vec![0.0; self.n_in];
        for r in 0..self.n_out {
            grad.b[r] += dz[r];
            if dz[r] != 0.0 {
                axpy(dz[r], a, &mut grad.w[r * self.n_in..(r + 1) * self.n_in]);
                axpy(dz[r], &self.w[r * self.n_in..(r + 1) * self.n_in], &mut da);
            }
        }
        da
    }
}

/// Same-size zero-padded convolution, pre-activation.
pub fn conv_forward(a: &Tensor3, cw: &ConvWeights) -> Result<Tensor3> {
    if a.d != cw.d_in || cw.k % 2 == 0 || cw.w.len() != cw.d_out * cw.rows() || cw.b.len() != cw.d_out
    {
        return Err(Error::Shape(format!(
            "conv {}x{}x{k}x{k} on a {}-map input",
            cw.d_out,
            cw.d_in,
            a.d,
            k = cw.k
        )));
    }
    let plane = a.h * a.w;
    let mut col = Vec::new();
    im2col(&a.data, a.d, a.h, a.w, cw.k, &mut col);
    let mut out = Tensor3::zeros(cw.d_out, a.h, a.w);
    cw.forward_col(&col, plane, &mut out.data);
    Ok(out)
}

/// Max over non-overlapping 2×2 blocks. Also yields, per output cell, the
/// position (0..4, row-major) of the first maximal element in its block.
pub fn maxpool_forward(a: &Tensor3) -> Result<(Tensor3, Vec<u8>)> {
    if a.h % 2 != 0 || a.w % 2 != 0 {
        return Err(Error::Shape(format!("cannot pool a {}x{} map", a.h, a.w)));
    }
    let (out, routes) = maxpool_raw(&a.data, a.d, a.h, a.w);
    let plane = a.h * a.w;
    let local = routes
        .iter()
        .map(|&src| {
            let rel = src as usize % plane;
            ((rel / a.w % 2) * 2 + rel % a.w % 2) as u8
        })
        .collect();
    Ok((Tensor3::from_vec(a.d, a.h / 2, a.w / 2, out)?, local))
}

/// Pooled values and the flat input index each one came from.
pub(crate) fn maxpool_raw(a: &[f64], d: usize, h: usize, w: usize) -> (Vec<f64>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(d * oh * ow);
    let mut routes = Vec::with_capacity(d * oh * ow);
    for z in 0..d {
        let base = z * h * w;
        for x in 0..oh {
            for y in 0..ow {
                let mut best = base + 2 * x * w + 2 * y;
                for (dx, dy) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * x + dx) * w + 2 * y + dy;
                    if a[idx] > a[best] {
                        best = idx;
                    }
                }
                out.push(a[best]);
                routes.push(best as u32);
            }
        }
    }
    (out, routes)
}

/// `W·a + b`, pre-activation.
pub fn fc_forward(a: &[f64], dense: &Dense) -> Result<Vec<f64>> {
    if a.len() != dense.n_in || dense.w.len() != dense.n_out * dense.n_in || dense.b.len() != dense.n_out
    {
        return Err(Error::Shape(format!(
            "dense {}x{} applied to {} inputs",
            dense.n_out,
            dense.n_in,
            a.len()
        )));
    }
    Ok(dense.forward_raw(a))
}
