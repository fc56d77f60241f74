//! Dense and convolutional building blocks on the tape.

use super::{Graph, Tensor, Var};

/// Plain 2-D matrix product used by forward and backward passes.
fn matmul_raw(a: &Tensor, b: &Tensor, transpose_a: bool, transpose_b: bool) -> Tensor {
    let (am, ak) = (a.shape[0], a.shape[1]);
    let (bm, bk) = (b.shape[0], b.shape[1]);
    let (m, k1) = if transpose_a { (ak, am) } else { (am, ak) };
    let (k2, n) = if transpose_b { (bk, bm) } else { (bm, bk) };
    assert_eq!(k1, k2, "matmul inner dims {k1} vs {k2}");
    let mut out = Tensor::zeros(&[m, n]);
    for i in 0..m {
        for kk in 0..k1 {
            let av = if transpose_a {
                a.data[kk * ak + i]
            } else {
                a.data[i * ak + kk]
            };
            let row_out = &mut out.data[i * n..(i + 1) * n];
            if transpose_b {
                for (j, o) in row_out.iter_mut().enumerate() {
                    *o += av * b.data[j * bk + kk];
                }
            } else {
                let row_b = &b.data[kk * n..(kk + 1) * n];
                for (o, &bv) in row_out.iter_mut().zip(row_b) {
                    *o += av * bv;
                }
            }
        }
    }
    out
}

impl Graph {
    /// `a [m,k] x b [k,n] -> [m,n]`.
    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let value = self.with_values(&[a, b], |v| matmul_raw(v[0], v[1], false, false));
        self.push(
            value,
            vec![a, b],
            Some(Box::new(|g, parents, _| {
                let (av, bv) = (parents[0], parents[1]);
                // da = g b^T, db = a^T g
                let da = matmul_raw(g, bv, false, true);
                let db = matmul_raw(av, g, true, false);
                vec![da, db]
            })),
        )
    }

    /// 2-D convolution over `[Cin, H, W]` with weights `[Cout, Cin, k, k]`,
    /// bias `[Cout]`, zero padding `pad`, and stride `stride`.
    pub fn conv2d(&self, x: Var, weight: Var, bias: Var, stride: usize, pad: usize) -> Var {
        let value = self.with_values(&[x, weight, bias], |v| {
            conv2d_forward(v[0], v[1], v[2], stride, pad)
        });
        self.push(
            value,
            vec![x, weight, bias],
            Some(Box::new(move |g, parents, _| {
                conv2d_backward(g, parents[0], parents[1], stride, pad)
            })),
        )
    }

    /// Depthwise 1-D convolution over `[D, L]` with per-channel kernels
    /// `[D, k]`, bias `[D]`, zero padding `k/2` (same-length output).
    pub fn dwconv1d(&self, x: Var, weight: Var, bias: Var) -> Var {
        let value = self.with_values(&[x, weight, bias], |v| dwconv1d_forward(v[0], v[1], v[2]));
        self.push(
            value,
            vec![x, weight, bias],
            Some(Box::new(|g, parents, _| {
                dwconv1d_backward(g, parents[0], parents[1])
            })),
        )
    }

    /// Layer normalization over axis 0 (channels), independently per
    /// trailing position, with learned gain and shift of shape `[D]`.
    pub fn layer_norm(&self, x: Var, gamma: Var, beta: Var) -> Var {
        const EPS: f64 = 1e-5;
        let value = self.with_values(&[x, gamma, beta], |v| {
            let (x, gamma, beta) = (v[0], v[1], v[2]);
            let d = x.shape[0];
            let cols = x.numel() / d;
            let mut out = Tensor::zeros(&x.shape);
            for j in 0..cols {
                let (mean, inv_std) = column_stats(x, j, d, cols, EPS);
                for i in 0..d {
                    let xv = x.data[i * cols + j];
                    out.data[i * cols + j] = gamma.data[i] * (xv - mean) * inv_std + beta.data[i];
                }
            }
            out
        });
        self.push(
            value,
            vec![x, gamma, beta],
            Some(Box::new(|g, parents, _| {
                let (x, gamma) = (parents[0], parents[1]);
                let d = x.shape[0];
                let cols = x.numel() / d;
                let mut dx = Tensor::zeros(&x.shape);
                let mut dgamma = Tensor::zeros(&parents[1].shape);
                let mut dbeta = Tensor::zeros(&parents[2].shape);
                for j in 0..cols {
                    let (mean, inv_std) = column_stats(x, j, d, cols, EPS);
                    // dxhat_i = g_i * gamma_i; dx from the standard LN adjoint
                    let mut sum_dxhat = 0.0;
                    let mut sum_dxhat_xhat = 0.0;
                    for i in 0..d {
                        let xhat = (x.data[i * cols + j] - mean) * inv_std;
                        let gi = g.data[i * cols + j];
                        let dxhat = gi * gamma.data[i];
                        sum_dxhat += dxhat;
                        sum_dxhat_xhat += dxhat * xhat;
                        dgamma.data[i] += gi * xhat;
                        dbeta.data[i] += gi;
                    }
                    let inv_d = 1.0 / d as f64;
                    for i in 0..d {
                        let xhat = (x.data[i * cols + j] - mean) * inv_std;
                        let dxhat = g.data[i * cols + j] * gamma.data[i];
                        dx.data[i * cols + j] = inv_std
                            * (dxhat - inv_d * sum_dxhat - xhat * inv_d * sum_dxhat_xhat);
                    }
                }
                vec![dx, dgamma, dbeta]
            })),
        )
    }

    /// Nearest-neighbor 2x upsampling of `[C, H, W]`.
    pub fn upsample2x(&self, x: Var) -> Var {
        let value = self.with_values(&[x], |v| {
            let x = v[0];
            let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
            let mut out = Tensor::zeros(&[c, 2 * h, 2 * w]);
            for cc in 0..c {
                for i in 0..h {
                    for j in 0..w {
                        let v = x.data[(cc * h + i) * w + j];
                        for di in 0..2 {
                            for dj in 0..2 {
                                out.data[(cc * 2 * h + 2 * i + di) * 2 * w + 2 * j + dj] = v;
                            }
                        }
                    }
                }
            }
            out
        });
        self.push(
            value,
            vec![x],
            Some(Box::new(|g, parents, _| {
                let x = parents[0];
                let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
                let mut dx = Tensor::zeros(&x.shape);
                for cc in 0..c {
                    for i in 0..h {
                        for j in 0..w {
                            let mut acc = 0.0;
                            for di in 0..2 {
                                for dj in 0..2 {
                                    acc += g.data[(cc * 2 * h + 2 * i + di) * 2 * w + 2 * j + dj];
                                }
                            }
                            dx.data[(cc * h + i) * w + j] = acc;
                        }
                    }
                }
                vec![dx]
            })),
        )
    }

    /// Concatenation along axis 0; trailing dims must match.
    pub fn concat_dim0(&self, a: Var, b: Var) -> Var {
        let value = self.with_values(&[a, b], |v| {
            let (a, b) = (v[0], v[1]);
            assert_eq!(a.shape[1..], b.shape[1..], "concat trailing dims differ");
            let mut shape = a.shape.clone();
            shape[0] += b.shape[0];
            let mut data = Vec::with_capacity(a.numel() + b.numel());
            data.extend_from_slice(&a.data);
            data.extend_from_slice(&b.data);
            Tensor::new(&shape, data)
        });
        self.push(
            value,
            vec![a, b],
            Some(Box::new(|g, parents, _| {
                let na = parents[0].numel();
                let da = Tensor::new(&parents[0].shape, g.data[..na].to_vec());
                let db = Tensor::new(&parents[1].shape, g.data[na..].to_vec());
                vec![da, db]
            })),
        )
    }
}

fn column_stats(x: &Tensor, j: usize, d: usize, cols: usize, eps: f64) -> (f64, f64) {
    let mut mean = 0.0;
    for i in 0..d {
        mean += x.data[i * cols + j];
    }
    mean /= d as f64;
    let mut var = 0.0;
    for i in 0..d {
        let dv = x.data[i * cols + j] - mean;
        var += dv * dv;
    }
    var /= d as f64;
    (mean, 1.0 / (var + eps).sqrt())
}

fn conv2d_forward(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Tensor {
    let (cin, h, wid) = (x.shape[0], x.shape[1], x.shape[2]);
    let (cout, cin_w, kh, kw) = (w.shape[0], w.shape[1], w.shape[2], w.shape[3]);
    assert_eq!(cin, cin_w, "conv2d channel mismatch");
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (wid + 2 * pad - kw) / stride + 1;
    let mut out = Tensor::zeros(&[cout, ho, wo]);
    for co in 0..cout {
        let out_plane = &mut out.data[co * ho * wo..(co + 1) * ho * wo];
        for v in out_plane.iter_mut() {
            *v = b.data[co];
        }
        for ci in 0..cin {
            let x_plane = &x.data[ci * h * wid..(ci + 1) * h * wid];
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = w.data[((co * cin + ci) * kh + ky) * kw + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    for oy in 0..ho {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = &x_plane[iy as usize * wid..(iy as usize + 1) * wid];
                        let out_row = &mut out_plane[oy * wo..(oy + 1) * wo];
                        for ox in 0..wo {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= wid as isize {
                                continue;
                            }
                            out_row[ox] += wv * row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv2d_backward(
    g: &Tensor,
    x: &Tensor,
    w: &Tensor,
    stride: usize,
    pad: usize,
) -> Vec<Tensor> {
    let (cin, h, wid) = (x.shape[0], x.shape[1], x.shape[2]);
    let (cout, _, kh, kw) = (w.shape[0], w.shape[1], w.shape[2], w.shape[3]);
    let (ho, wo) = (g.shape[1], g.shape[2]);
    let mut dx = Tensor::zeros(&x.shape);
    let mut dw = Tensor::zeros(&w.shape);
    let mut db = Tensor::zeros(&[cout]);
    for co in 0..cout {
        let g_plane = &g.data[co * ho * wo..(co + 1) * ho * wo];
        db.data[co] += g_plane.iter().sum::<f64>();
        for ci in 0..cin {
            let x_plane = &x.data[ci * h * wid..(ci + 1) * h * wid];
            let dx_plane = &mut dx.data[ci * h * wid..(ci + 1) * h * wid];
            for ky in 0..kh {
                for kx in 0..kw {
                    let widx = ((co * cin + ci) * kh + ky) * kw + kx;
                    let wv = w.data[widx];
                    let mut wacc = 0.0;
                    for oy in 0..ho {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let base = iy as usize * wid;
                        let g_row = &g_plane[oy * wo..(oy + 1) * wo];
                        for ox in 0..wo {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= wid as isize {
                                continue;
                            }
                            let gi = g_row[ox];
                            wacc += gi * x_plane[base + ix as usize];
                            dx_plane[base + ix as usize] += gi * wv;
                        }
                    }
                    dw.data[widx] += wacc;
                }
            }
        }
    }
    vec![dx, dw, db]
}

fn dwconv1d_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let (d, l) = (x.shape[0], x.shape[1]);
    let k = w.shape[1];
    let pad = k / 2;
    let mut out = Tensor::zeros(&[d, l]);
    for dd in 0..d {
        let xrow = &x.data[dd * l..(dd + 1) * l];
        let orow = &mut out.data[dd * l..(dd + 1) * l];
        for t in 0..l {
            let mut acc = b.data[dd];
            for kk in 0..k {
                let idx = t as isize + kk as isize - pad as isize;
                if idx >= 0 && (idx as usize) < l {
                    acc += w.data[dd * k + kk] * xrow[idx as usize];
                }
            }
            orow[t] = acc;
        }
    }
    out
}

fn dwconv1d_backward(g: &Tensor, x: &Tensor, w: &Tensor) -> Vec<Tensor> {
    let (d, l) = (x.shape[0], x.shape[1]);
    let k = w.shape[1];
    let pad = k / 2;
    let mut dx = Tensor::zeros(&x.shape);
    let mut dw = Tensor::zeros(&w.shape);
    let mut db = Tensor::zeros(&[d]);
    for dd in 0..d {
        let xrow = &x.data[dd * l..(dd + 1) * l];
        let grow = &g.data[dd * l..(dd + 1) * l];
        let dxrow = &mut dx.data[dd * l..(dd + 1) * l];
        db.data[dd] += grow.iter().sum::<f64>();
        for t in 0..l {
            let gi = grow[t];
            for kk in 0..k {
                let idx = t as isize + kk as isize - pad as isize;
                if idx >= 0 && (idx as usize) < l {
                    dw.data[dd * k + kk] += gi * xrow[idx as usize];
                    dxrow[idx as usize] += gi * w.data[dd * k + kk];
                }
            }
        }
    }
    vec![dx, dw, db]
}
