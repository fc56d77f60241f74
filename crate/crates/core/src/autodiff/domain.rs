//! Task-specific tape operators: cross-modal token gather/scatter, ZOH
//! discretization, the state-space scan, band-integrated Planck synthesis,
//! and the two measurement branches.

use std::sync::Arc;

use super::{Graph, Tensor, Var};
use crate::cube::CodedAperture;
use crate::physics::{planck_and_dt, RADIANCE_UNIT_SCALE};
use crate::scan_order::{ScanOrder, Source};
use crate::ssm::{phi1, phi1_prime, scan_backward, scan_sequential, DiscreteParams};

impl Graph {
    /// Builds the mixed token sequence: token `t` of the output takes
    /// `backbone[d, pos_t]` or `pan[d, pos_t]` according to the order.
    /// Inputs are `[D, ...]` with `H*W` trailing elements; output is `[D, L]`.
    pub fn cross_gather(&self, backbone: Var, pan: Var, order: &Arc<ScanOrder>) -> Var {
        let order_fw = Arc::clone(order);
        let order_bw = Arc::clone(order);
        let value = self.with_values(&[backbone, pan], |v| {
            let (a, b) = (v[0], v[1]);
            assert_eq!(a.shape, b.shape, "cross_gather inputs differ in shape");
            let d = a.shape[0];
            let hw = a.numel() / d;
            assert_eq!(hw, order_fw.len(), "order does not cover the feature map");
            let l = order_fw.len();
            let mut out = Tensor::zeros(&[d, l]);
            for (t, &(src, p)) in order_fw.tokens().iter().enumerate() {
                let from = match src {
                    Source::Backbone => &a.data,
                    Source::Pan => &b.data,
                };
                for dd in 0..d {
                    out.data[dd * l + t] = from[dd * hw + p];
                }
            }
            out
        });
        self.push(
            value,
            vec![backbone, pan],
            Some(Box::new(move |g, parents, _| {
                let d = parents[0].shape[0];
                let hw = parents[0].numel() / d;
                let l = order_bw.len();
                let mut da = Tensor::zeros(&parents[0].shape);
                let mut db = Tensor::zeros(&parents[1].shape);
                for (t, &(src, p)) in order_bw.tokens().iter().enumerate() {
                    let sink = match src {
                        Source::Backbone => &mut da.data,
                        Source::Pan => &mut db.data,
                    };
                    for dd in 0..d {
                        sink[dd * hw + p] += g.data[dd * l + t];
                    }
                }
                vec![da, db]
            })),
        )
    }

    /// Returns tokens to their spatial positions: output position `pos_t`
    /// receives sequence element `t`. `[D, L] -> [D, H, W]`.
    pub fn scatter_positions(&self, seq: Var, order: &Arc<ScanOrder>) -> Var {
        let order_fw = Arc::clone(order);
        let order_bw = Arc::clone(order);
        let value = self.with_values(&[seq], |v| {
            let s = v[0];
            let d = s.shape[0];
            let l = s.shape[1];
            assert_eq!(l, order_fw.len());
            let mut out = Tensor::zeros(&[d, order_fw.height(), order_fw.width()]);
            for (t, &(_, p)) in order_fw.tokens().iter().enumerate() {
                for dd in 0..d {
                    out.data[dd * l + p] = s.data[dd * l + t];
                }
            }
            out
        });
        self.push(
            value,
            vec![seq],
            Some(Box::new(move |g, parents, _| {
                let d = parents[0].shape[0];
                let l = parents[0].shape[1];
                let mut ds = Tensor::zeros(&parents[0].shape);
                for (t, &(_, p)) in order_bw.tokens().iter().enumerate() {
                    for dd in 0..d {
                        ds.data[dd * l + t] = g.data[dd * l + p];
                    }
                }
                vec![ds]
            })),
        )
    }

    /// `abar[d, t, n] = exp(delta[d, t] * a[d, n])`.
    pub fn zoh_abar(&self, delta: Var, a: Var) -> Var {
        let value = self.with_values(&[delta, a], |v| {
            let (dt, av) = (v[0], v[1]);
            let (d, l) = (dt.shape[0], dt.shape[1]);
            let n = av.shape[1];
            let mut out = Tensor::zeros(&[d, l, n]);
            for dd in 0..d {
                for t in 0..l {
                    let dv = dt.data[dd * l + t];
                    for i in 0..n {
                        out.data[(dd * l + t) * n + i] = (dv * av.data[dd * n + i]).exp();
                    }
                }
            }
            out
        });
        self.push(
            value,
            vec![delta, a],
            Some(Box::new(|g, parents, out| {
                let (dt, av) = (parents[0], parents[1]);
                let (d, l) = (dt.shape[0], dt.shape[1]);
                let n = av.shape[1];
                let mut ddelta = Tensor::zeros(&dt.shape);
                let mut da = Tensor::zeros(&av.shape);
                for dd in 0..d {
                    for t in 0..l {
                        let dv = dt.data[dd * l + t];
                        let mut acc_dt = 0.0;
                        for i in 0..n {
                            let idx = (dd * l + t) * n + i;
                            let e = out.data[idx];
                            let gi = g.data[idx];
                            acc_dt += gi * av.data[dd * n + i] * e;
                            da.data[dd * n + i] += gi * dv * e;
                        }
                        ddelta.data[dd * l + t] += acc_dt;
                    }
                }
                vec![ddelta, da]
            })),
        )
    }

    /// `bbar[d, t, n] = phi1(delta a) * delta * b[n, t]` where
    /// `phi1(u) = expm1(u)/u`, the ZOH input coefficient.
    pub fn zoh_bbar(&self, delta: Var, a: Var, b: Var) -> Var {
        let value = self.with_values(&[delta, a, b], |v| {
            let (dt, av, bv) = (v[0], v[1], v[2]);
            let (d, l) = (dt.shape[0], dt.shape[1]);
            let n = av.shape[1];
            assert_eq!(bv.shape, vec![n, l], "b must be [N, L]");
            let mut out = Tensor::zeros(&[d, l, n]);
            for dd in 0..d {
                for t in 0..l {
                    let dv = dt.data[dd * l + t];
                    for i in 0..n {
                        let u = dv * av.data[dd * n + i];
                        out.data[(dd * l + t) * n + i] = phi1(u) * dv * bv.data[i * l + t];
                    }
                }
            }
            out
        });
        self.push(
            value,
            vec![delta, a, b],
            Some(Box::new(|g, parents, _| {
                let (dt, av, bv) = (parents[0], parents[1], parents[2]);
                let (d, l) = (dt.shape[0], dt.shape[1]);
                let n = av.shape[1];
                let mut ddelta = Tensor::zeros(&dt.shape);
                let mut da = Tensor::zeros(&av.shape);
                let mut db = Tensor::zeros(&bv.shape);
                for dd in 0..d {
                    for t in 0..l {
                        let dv = dt.data[dd * l + t];
                        let mut acc_dt = 0.0;
                        for i in 0..n {
                            let idx = (dd * l + t) * n + i;
                            let gi = g.data[idx];
                            if gi == 0.0 {
                                continue;
                            }
                            let ai = av.data[dd * n + i];
                            let bval = bv.data[i * l + t];
                            let u = dv * ai;
                            let f = phi1(u);
                            let fp = phi1_prime(u);
                            // w = phi1(u) dv; dw/ddv = f + dv fp a; dw/da = dv^2 fp
                            acc_dt += gi * bval * (f + dv * fp * ai);
                            da.data[dd * n + i] += gi * bval * dv * dv * fp;
                            db.data[i * l + t] += gi * f * dv;
                        }
                        ddelta.data[dd * l + t] += acc_dt;
                    }
                }
                vec![ddelta, da, db]
            })),
        )
    }

    /// Selective scan over all channels. `abar`, `bbar` are `[D, L, N]`;
    /// `c` is `[N, L]` (shared across channels); `d_skip` is `[D]`;
    /// `x` is `[D, L]`. Output `[D, L]`, initial state zero.
    pub fn scan(&self, abar: Var, bbar: Var, c: Var, d_skip: Var, x: Var) -> Var {
        let value = self.with_values(&[abar, bbar, c, d_skip, x], |v| {
            let (ab, bb, cv, dv, xv) = (v[0], v[1], v[2], v[3], v[4]);
            let (d, l, n) = (ab.shape[0], ab.shape[1], ab.shape[2]);
            let c_ln = transpose_nl_to_ln(cv, n, l);
            let h0 = vec![0.0; n];
            let mut out = Tensor::zeros(&[d, l]);
            for dd in 0..d {
                let disc = DiscreteParams {
                    state_dim: n,
                    seq_len: l,
                    abar: ab.data[dd * l * n..(dd + 1) * l * n].to_vec(),
                    bbar: bb.data[dd * l * n..(dd + 1) * l * n].to_vec(),
                };
                let y = scan_sequential(
                    &disc,
                    &c_ln,
                    dv.data[dd],
                    &xv.data[dd * l..(dd + 1) * l],
                    &h0,
                )
                .expect("scan shapes checked by construction");
                out.data[dd * l..(dd + 1) * l].copy_from_slice(&y);
            }
            out
        });
        self.push(
            value,
            vec![abar, bbar, c, d_skip, x],
            Some(Box::new(|g, parents, _| {
                let (ab, bb, cv, dv, xv) =
                    (parents[0], parents[1], parents[2], parents[3], parents[4]);
                let (d, l, n) = (ab.shape[0], ab.shape[1], ab.shape[2]);
                let c_ln = transpose_nl_to_ln(cv, n, l);
                let h0 = vec![0.0; n];
                let mut dab = Tensor::zeros(&ab.shape);
                let mut dbb = Tensor::zeros(&bb.shape);
                let mut dc = Tensor::zeros(&cv.shape);
                let mut dd_skip = Tensor::zeros(&dv.shape);
                let mut dx = Tensor::zeros(&xv.shape);
                for dd in 0..d {
                    let disc = DiscreteParams {
                        state_dim: n,
                        seq_len: l,
                        abar: ab.data[dd * l * n..(dd + 1) * l * n].to_vec(),
                        bbar: bb.data[dd * l * n..(dd + 1) * l * n].to_vec(),
                    };
                    let grads = scan_backward(
                        &disc,
                        &c_ln,
                        dv.data[dd],
                        &xv.data[dd * l..(dd + 1) * l],
                        &h0,
                        &g.data[dd * l..(dd + 1) * l],
                    )
                    .expect("scan shapes checked by construction");
                    dab.data[dd * l * n..(dd + 1) * l * n].copy_from_slice(&grads.dabar);
                    dbb.data[dd * l * n..(dd + 1) * l * n].copy_from_slice(&grads.dbbar);
                    dx.data[dd * l..(dd + 1) * l].copy_from_slice(&grads.dx);
                    dd_skip.data[dd] = grads.dd;
                    // c is shared across channels: accumulate [L,N] -> [N,L]
                    for t in 0..l {
                        for i in 0..n {
                            dc.data[i * l + t] += grads.dc[t * n + i];
                        }
                    }
                }
                vec![dab, dbb, dc, dd_skip, dx]
            })),
        )
    }

    /// Band-integrated Planck emission of a temperature map, in cube units:
    /// input `[.., H, W]` Kelvin (treated flat), output `[C, H, W]` where
    /// band `k` integrates Planck's law over `(edges[k], edges[k+1])` by
    /// fixed Gauss-Legendre quadrature on precomputed nodes.
    pub fn planck_bands(&self, t_map: Var, edges_nm: &[f64], height: usize, width: usize) -> Var {
        let bands = edges_nm.len() - 1;
        // Per band: (lambda_m, weight_m) nodes scaled into meters.
        let nodes: Arc<Vec<Vec<(f64, f64)>>> = Arc::new(
            (0..bands)
                .map(|k| gauss_nodes_m(edges_nm[k], edges_nm[k + 1]))
                .collect(),
        );
        let nodes_bw = Arc::clone(&nodes);
        let value = self.with_values(&[t_map], |v| {
            let t = v[0];
            let hw = t.numel();
            assert_eq!(hw, height * width, "temperature map size mismatch");
            let mut out = Tensor::zeros(&[bands, height, width]);
            for p in 0..hw {
                let tv = t.data[p];
                for (k, band_nodes) in nodes.iter().enumerate() {
                    let mut acc = 0.0;
                    if tv > 0.0 {
                        for &(lam, wgt) in band_nodes {
                            acc += wgt * planck_and_dt(lam, tv).0;
                        }
                    }
                    out.data[k * hw + p] = RADIANCE_UNIT_SCALE * acc;
                }
            }
            out
        });
        self.push(
            value,
            vec![t_map],
            Some(Box::new(move |g, parents, _| {
                let t = parents[0];
                let hw = t.numel();
                let mut dt = Tensor::zeros(&t.shape);
                for p in 0..hw {
                    let tv = t.data[p];
                    if tv <= 0.0 {
                        continue;
                    }
                    let mut acc = 0.0;
                    for (k, band_nodes) in nodes_bw.iter().enumerate() {
                        let gi = g.data[k * hw + p];
                        if gi == 0.0 {
                            continue;
                        }
                        let mut dband = 0.0;
                        for &(lam, wgt) in band_nodes {
                            dband += wgt * planck_and_dt(lam, tv).1;
                        }
                        acc += gi * RADIANCE_UNIT_SCALE * dband;
                    }
                    dt.data[p] = acc;
                }
                vec![dt]
            })),
        )
    }

    /// CASSI branch applied to a cube on the tape: mask, shear by
    /// `step` per band, sum. `[C, H, W] -> [H, W + step*(C-1)]`.
    pub fn cassi_apply(&self, cube: Var, mask: &Arc<CodedAperture>, step: usize) -> Var {
        let mask_fw = Arc::clone(mask);
        let mask_bw = Arc::clone(mask);
        let value = self.with_values(&[cube], |v| {
            let x = v[0];
            let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
            assert_eq!((mask_fw.height(), mask_fw.width()), (h, w), "mask dims");
            let wo = w + step * (c - 1);
            let mut out = Tensor::zeros(&[h, wo]);
            for k in 0..c {
                let shift = k * step;
                for i in 0..h {
                    for j in 0..w {
                        out.data[i * wo + j + shift] +=
                            mask_fw.at(i, j) as f64 * x.data[(k * h + i) * w + j];
                    }
                }
            }
            out
        });
        self.push(
            value,
            vec![cube],
            Some(Box::new(move |g, parents, _| {
                let x = parents[0];
                let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
                let wo = w + step * (c - 1);
                let mut dx = Tensor::zeros(&x.shape);
                for k in 0..c {
                    let shift = k * step;
                    for i in 0..h {
                        for j in 0..w {
                            dx.data[(k * h + i) * w + j] =
                                mask_bw.at(i, j) as f64 * g.data[i * wo + j + shift];
                        }
                    }
                }
                vec![dx]
            })),
        )
    }

    /// PAN branch applied to a cube on the tape: per-pixel spectral dot
    /// product with fixed response weights. `[C, H, W] -> [H, W]`.
    pub fn pan_apply(&self, cube: Var, response: &Arc<Vec<f64>>) -> Var {
        let resp_fw = Arc::clone(response);
        let resp_bw = Arc::clone(response);
        let value = self.with_values(&[cube], |v| {
            let x = v[0];
            let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
            assert_eq!(c, resp_fw.len(), "response length");
            let mut out = Tensor::zeros(&[h, w]);
            for k in 0..c {
                let r = resp_fw[k];
                for p in 0..h * w {
                    out.data[p] += r * x.data[k * h * w + p];
                }
            }
            out
        });
        self.push(
            value,
            vec![cube],
            Some(Box::new(move |g, parents, _| {
                let x = parents[0];
                let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
                let mut dx = Tensor::zeros(&x.shape);
                for k in 0..c {
                    let r = resp_bw[k];
                    for p in 0..h * w {
                        dx.data[k * h * w + p] = r * g.data[p];
                    }
                }
                vec![dx]
            })),
        )
    }
}

fn transpose_nl_to_ln(c: &Tensor, n: usize, l: usize) -> Vec<f64> {
    let mut out = vec![0.0; l * n];
    for i in 0..n {
        for t in 0..l {
            out[t * n + i] = c.data[i * l + t];
        }
    }
    out
}

/// Gauss-Legendre order-10 nodes over `(lo_nm, hi_nm)`, scaled to meters,
/// subdivided into enough panels that narrow and moderately wide bands are
/// integrated to near machine precision.
fn gauss_nodes_m(lo_nm: f64, hi_nm: f64) -> Vec<(f64, f64)> {
    const GL10: [(f64, f64); 10] = [
        (-0.973_906_528_517_171_7, 0.066_671_344_308_688_14),
        (-0.865_063_366_688_984_5, 0.149_451_349_150_580_59),
        (-0.679_409_568_299_024_4, 0.219_086_362_515_982_04),
        (-0.433_395_394_129_247_2, 0.269_266_719_309_996_36),
        (-0.148_874_338_981_631_21, 0.295_524_224_714_752_87),
        (0.148_874_338_981_631_21, 0.295_524_224_714_752_87),
        (0.433_395_394_129_247_2, 0.269_266_719_309_996_36),
        (0.679_409_568_299_024_4, 0.219_086_362_515_982_04),
        (0.865_063_366_688_984_5, 0.149_451_349_150_580_59),
        (0.973_906_528_517_171_7, 0.066_671_344_308_688_14),
    ];
    let panels = 4;
    let mut out = Vec::with_capacity(panels * GL10.len());
    let step = (hi_nm - lo_nm) / panels as f64;
    for p in 0..panels {
        let a = lo_nm + p as f64 * step;
        let b = a + step;
        let half = 0.5 * (b - a) * 1e-9;
        let mid = 0.5 * (a + b) * 1e-9;
        for (x, w) in GL10 {
            out.push((mid + half * x, w * half));
        }
    }
    out
}
