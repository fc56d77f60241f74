//! The toy reconstruction network: shift-back initialized backbone, shallow
//! multi-scale PAN encoder, a U-net of cross-modal scanning blocks, and
//! either three physical decoders (temperature, emissivity, texture) feeding
//! the Planck synthesis head or a direct spectral head.

use std::sync::Arc;

use crate::autodiff::{Graph, Tensor, Var};
use crate::cube::{CodedAperture, PanImage, SpectralCube, WavelengthGrid};
use crate::error::{Error, Result};
use crate::forward::{cassi_adjoint, MeasurementPair};
use crate::rng::CounterRng;
use crate::scan_order::{build_scan_order, ScanOrder, ScanPattern};

use super::params::ParamStore;

/// Temperature head bias initialization, Kelvin. Softplus is the identity to
/// machine precision at this magnitude, so decoding starts in the training
/// temperature range.
const T_HEAD_BIAS_INIT: f64 = 300.0;

/// Network, optimizer, and run-shape configuration.
#[derive(Debug, Clone)]
pub struct NetworkConfig {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    /// Feature channels at full resolution (doubled per scale).
    pub base_channels: usize,
    /// Number of resolution scales in the U-net.
    pub depth: usize,
    /// Cross-modal blocks per scale.
    pub blocks_per_scale: usize,
    /// SSM state dimension per channel.
    pub state_dim: usize,
    /// Backbone feature ratio of the interleaved scan.
    pub bfr: f64,
    /// Three physical decoders plus Planck synthesis (true) or a direct
    /// spectral head (false).
    pub tex_head: bool,
    pub lr_init: f64,
    pub lr_min: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Include the measurement-consistency term in the training loss.
    pub use_loss_measure: bool,
    /// Worker threads for batch-parallel gradient accumulation.
    pub threads: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            height: 32,
            width: 32,
            bands: 8,
            base_channels: 16,
            depth: 2,
            blocks_per_scale: 1,
            state_dim: 16,
            bfr: 0.7,
            tex_head: true,
            lr_init: 4e-4,
            lr_min: 1e-6,
            batch_size: 1,
            iterations: 2000,
            seed: 7,
            use_loss_measure: true,
            threads: 1,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.depth < 1 {
            problems.push("depth must be >= 1".to_string());
        }
        if self.base_channels < 4 {
            problems.push("base_channels must be >= 4".to_string());
        }
        if !(self.bfr > 0.0 && self.bfr < 1.0) {
            problems.push(format!("bfr {} must lie in (0, 1)", self.bfr));
        }
        if self.state_dim == 0 {
            problems.push("state_dim must be >= 1".to_string());
        }
        if self.blocks_per_scale == 0 {
            problems.push("blocks_per_scale must be >= 1".to_string());
        }
        if self.bands < 2 {
            problems.push("bands must be >= 2".to_string());
        }
        let div = 1usize << (self.depth - 1);
        if self.height % div != 0 || self.width % div != 0 {
            problems.push(format!(
                "{}x{} not divisible by 2^(depth-1) = {div}",
                self.height, self.width
            ));
        }
        if self.batch_size == 0 || self.iterations == 0 {
            problems.push("batch_size and iterations must be >= 1".to_string());
        }
        if !(self.lr_init >= 0.0 && self.lr_min >= 0.0 && self.lr_min <= self.lr_init.max(self.lr_min)) {
            problems.push("learning rates must be non-negative".to_string());
        }
        if self.threads == 0 {
            problems.push("threads must be >= 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(problems.join("; ")))
        }
    }

    fn channels_at(&self, scale: usize) -> usize {
        self.base_channels << scale
    }
}

/// A spatial feature tensor `[channels, H, W]` at the network API boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    tensor: Tensor,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::DimensionMismatch(format!(
                "feature data has {} values, expected {channels}x{height}x{width}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature map"));
        }
        Ok(FeatureMap {
            tensor: Tensor::new(&[channels, height, width], data),
        })
    }

    pub fn from_tensor(tensor: Tensor) -> Self {
        assert_eq!(tensor.shape().len(), 3);
        FeatureMap { tensor }
    }

    pub fn channels(&self) -> usize {
        self.tensor.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.tensor.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.tensor.shape()[2]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }
}

/// Decoded physical factors, range-constrained by the head activations.
#[derive(Debug, Clone)]
pub struct TexPrediction {
    /// H*W Kelvin map (softplus keeps it positive).
    pub temperature: Vec<f64>,
    /// H*W emissivity in (0, 1) (sigmoid).
    pub emissivity: Vec<f64>,
    /// Band-major H*W*C texture (softplus keeps it non-negative).
    pub texture: Vec<f64>,
}

/// Standalone cross-modal block parameters, outside any store.
#[derive(Debug, Clone)]
pub struct CsmbParams {
    pub ln_in_gamma: Tensor,
    pub ln_in_beta: Tensor,
    pub dw_weight: Tensor,
    pub dw_bias: Tensor,
    pub dt_weight: Tensor,
    pub dt_bias: Tensor,
    pub b_weight: Tensor,
    pub c_weight: Tensor,
    pub a_log: Tensor,
    pub d_skip: Tensor,
    pub ln_out_gamma: Tensor,
    pub ln_out_beta: Tensor,
}

impl CsmbParams {
    /// Random initialization for `channels` features and `state_dim` states.
    pub fn init(channels: usize, state_dim: usize, rng: &mut CounterRng) -> CsmbParams {
        let d = channels;
        let n = state_dim;
        let uniform = |rng: &mut CounterRng, count: usize, s: f64| -> Vec<f64> {
            (0..count).map(|_| rng.uniform_in(-s, s)).collect()
        };
        // S4D-real style decay spectrum: a = -(n+1)
        let a_log: Vec<f64> = (0..d * n).map(|i| (((i % n) + 1) as f64).ln()).collect();
        // softplus(dt_bias) spans about [1e-3, 1e-1] log-uniformly
        let dt_bias: Vec<f64> = (0..d)
            .map(|_| {
                let dt = (-3.0 + 2.0 * rng.uniform()) * std::f64::consts::LN_10;
                (dt.exp().exp_m1()).ln() // inverse softplus
            })
            .collect();
        CsmbParams {
            ln_in_gamma: Tensor::full(&[d], 1.0),
            ln_in_beta: Tensor::zeros(&[d]),
            dw_weight: Tensor::new(&[d, 3], uniform(rng, d * 3, (1.0f64 / 3.0).sqrt())),
            dw_bias: Tensor::zeros(&[d]),
            dt_weight: Tensor::new(&[d, d], uniform(rng, d * d, (1.0 / d as f64).sqrt())),
            dt_bias: Tensor::new(&[d, 1], dt_bias),
            b_weight: Tensor::new(&[n, d], uniform(rng, n * d, (1.0 / d as f64).sqrt())),
            c_weight: Tensor::new(&[n, d], uniform(rng, n * d, (1.0 / d as f64).sqrt())),
            a_log: Tensor::new(&[d, n], a_log),
            d_skip: Tensor::full(&[d], 1.0),
            ln_out_gamma: Tensor::full(&[d], 1.0),
            ln_out_beta: Tensor::zeros(&[d]),
        }
    }

    fn names_and_tensors(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("ln_in.gamma", &self.ln_in_gamma),
            ("ln_in.beta", &self.ln_in_beta),
            ("dw.weight", &self.dw_weight),
            ("dw.bias", &self.dw_bias),
            ("dt.weight", &self.dt_weight),
            ("dt.bias", &self.dt_bias),
            ("b_proj.weight", &self.b_weight),
            ("c_proj.weight", &self.c_weight),
            ("a_log", &self.a_log),
            ("d_skip", &self.d_skip),
            ("ln_out.gamma", &self.ln_out_gamma),
            ("ln_out.beta", &self.ln_out_beta),
        ]
    }
}

/// Bound parameter leaves of one cross-modal block.
struct CsmbVars {
    ln_in_gamma: Var,
    ln_in_beta: Var,
    dw_weight: Var,
    dw_bias: Var,
    dt_weight: Var,
    dt_bias: Var,
    b_weight: Var,
    c_weight: Var,
    a_log: Var,
    d_skip: Var,
    ln_out_gamma: Var,
    ln_out_beta: Var,
}

/// Binds store parameters into a graph, remembering every leaf so gradients
/// can be gathered back into a flat buffer afterwards.
pub struct ParamBinder<'a> {
    graph: &'a Graph,
    store: &'a ParamStore,
    bound: Vec<(String, Var)>,
}

impl<'a> ParamBinder<'a> {
    pub fn new(graph: &'a Graph, store: &'a ParamStore) -> Self {
        ParamBinder {
            graph,
            store,
            bound: Vec::new(),
        }
    }

    pub fn bind(&mut self, name: &str) -> Var {
        let v = self.graph.input(self.store.get(name));
        self.bound.push((name.to_string(), v));
        v
    }

    /// Flat gradient buffer aligned with the store layout; parameters that
    /// did not participate get zeros.
    pub fn gather_gradients(&self, grads: &crate::autodiff::Gradients) -> Vec<f64> {
        let mut flat = vec![0.0; self.store.len()];
        for (name, var) in &self.bound {
            if let Some(g) = grads.get(*var) {
                let (offset, len) = self.store.span(name);
                debug_assert_eq!(len, g.numel());
                flat[offset..offset + len].copy_from_slice(g.data());
            }
        }
        flat
    }

    fn bind_csmb(&mut self, prefix: &str) -> CsmbVars {
        let b = |binder: &mut Self, field: &str| binder.bind(&format!("{prefix}.{field}"));
        CsmbVars {
            ln_in_gamma: b(self, "ln_in.gamma"),
            ln_in_beta: b(self, "ln_in.beta"),
            dw_weight: b(self, "dw.weight"),
            dw_bias: b(self, "dw.bias"),
            dt_weight: b(self, "dt.weight"),
            dt_bias: b(self, "dt.bias"),
            b_weight: b(self, "b_proj.weight"),
            c_weight: b(self, "c_proj.weight"),
            a_log: b(self, "a_log"),
            d_skip: b(self, "d_skip"),
            ln_out_gamma: b(self, "ln_out.gamma"),
            ln_out_beta: b(self, "ln_out.beta"),
        }
    }
}

/// The cross-modal scanning block on the tape.
///
/// Both streams pass through the same input layer norm, are interleaved by
/// the scan order into a single H*W-token sequence, processed by depthwise
/// conv, SiLU, the selective scan, and an output layer norm, then scattered
/// back to their positions; the result gates `silu(ln(feat_b))` and adds to
/// the backbone residual.
fn csmb_graph(
    g: &Graph,
    p: &CsmbVars,
    feat_b: Var,
    feat_p: Var,
    order: &Arc<ScanOrder>,
) -> Var {
    let shape = g.shape_of(feat_b);
    let (d, h, w) = (shape[0], shape[1], shape[2]);
    let lnb = g.layer_norm(feat_b, p.ln_in_gamma, p.ln_in_beta);
    let lnp = g.layer_norm(feat_p, p.ln_in_gamma, p.ln_in_beta);
    let seq = g.cross_gather(lnb, lnp, order); // [d, L]
    let u = g.silu(g.dwconv1d(seq, p.dw_weight, p.dw_bias));
    let delta = g.softplus(g.add(g.matmul(p.dt_weight, u), p.dt_bias)); // [d, L]
    let b_proj = g.matmul(p.b_weight, u); // [n, L]
    let c_proj = g.matmul(p.c_weight, u); // [n, L]
    let a = g.neg(g.exp(p.a_log)); // [d, n], strictly negative
    let abar = g.zoh_abar(delta, a);
    let bbar = g.zoh_bbar(delta, a, b_proj);
    let y = g.scan(abar, bbar, c_proj, p.d_skip, u); // [d, L]
    let y = g.layer_norm(y, p.ln_out_gamma, p.ln_out_beta);
    let scat = g.scatter_positions(y, order); // [d, h, w]
    debug_assert_eq!(g.shape_of(scat), vec![d, h, w]);
    let gate = g.silu(lnb);
    g.add(feat_b, g.mul(scat, gate))
}

fn conv_init(
    rng: &mut CounterRng,
    cout: usize,
    cin: usize,
    k: usize,
) -> (Tensor, Tensor) {
    let s = (1.0 / (cin * k * k) as f64).sqrt();
    let w: Vec<f64> = (0..cout * cin * k * k)
        .map(|_| rng.uniform_in(-s, s))
        .collect();
    (Tensor::new(&[cout, cin, k, k], w), Tensor::zeros(&[cout]))
}

/// The reconstruction model: configuration plus the per-scale scan orders.
pub struct Model {
    config: NetworkConfig,
    orders: Vec<Arc<ScanOrder>>,
    grid: WavelengthGrid,
}

/// Graph handles produced by one forward construction.
pub struct ForwardGraph {
    pub cube_hat: Var,
    pub temperature: Option<Var>,
    pub emissivity: Option<Var>,
    pub texture: Option<Var>,
}

impl Model {
    pub fn new(config: NetworkConfig, grid: WavelengthGrid) -> Result<Model> {
        config.validate()?;
        if grid.bands() != config.bands {
            return Err(Error::DimensionMismatch(format!(
                "grid has {} bands, config says {}",
                grid.bands(),
                config.bands
            )));
        }
        let mut orders = Vec::with_capacity(config.depth);
        for scale in 0..config.depth {
            let div = 1usize << scale;
            orders.push(Arc::new(build_scan_order(
                config.height / div,
                config.width / div,
                config.bfr,
                ScanPattern::Bayer,
            )?));
        }
        Ok(Model {
            config,
            orders,
            grid,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    pub fn order_at(&self, scale: usize) -> &Arc<ScanOrder> {
        &self.orders[scale]
    }

    /// Initializes every parameter, seeded by the config.
    pub fn init_params(&self) -> ParamStore {
        let cfg = &self.config;
        let mut rng = CounterRng::new(cfg.seed).substream(0x1a17);
        let mut store = ParamStore::new();
        let mut add_conv = |store: &mut ParamStore,
                            rng: &mut CounterRng,
                            name: &str,
                            cout: usize,
                            cin: usize,
                            k: usize| {
            let (w, b) = conv_init(rng, cout, cin, k);
            store.add(&format!("{name}.weight"), w);
            store.add(&format!("{name}.bias"), b);
        };

        // Shallow PAN encoder, one conv per scale.
        add_conv(&mut store, &mut rng, "se.0", cfg.channels_at(0), 1, 3);
        for k in 1..cfg.depth {
            add_conv(
                &mut store,
                &mut rng,
                &format!("se.{k}"),
                cfg.channels_at(k),
                cfg.channels_at(k - 1),
                3,
            );
        }

        // Backbone stem over shift-back cube + broadcast PAN.
        add_conv(
            &mut store,
            &mut rng,
            "stem",
            cfg.channels_at(0),
            cfg.bands + 1,
            3,
        );

        let mut add_stack = |store: &mut ParamStore, rng: &mut CounterRng, prefix: &str, ch: usize| {
            for blk in 0..cfg.blocks_per_scale {
                let params = CsmbParams::init(ch, cfg.state_dim, rng);
                for (field, tensor) in params.names_and_tensors() {
                    store.add(&format!("{prefix}.{blk}.{field}"), tensor.clone());
                }
            }
        };

        for k in 0..cfg.depth - 1 {
            add_stack(&mut store, &mut rng, &format!("enc{k}"), cfg.channels_at(k));
            add_conv(
                &mut store,
                &mut rng,
                &format!("down{k}"),
                cfg.channels_at(k + 1),
                cfg.channels_at(k),
                3,
            );
        }
        add_stack(&mut store, &mut rng, "mid", cfg.channels_at(cfg.depth - 1));
        for k in (0..cfg.depth - 1).rev() {
            add_conv(
                &mut store,
                &mut rng,
                &format!("up{k}"),
                cfg.channels_at(k),
                cfg.channels_at(k + 1),
                3,
            );
            add_conv(
                &mut store,
                &mut rng,
                &format!("fuse{k}"),
                cfg.channels_at(k),
                2 * cfg.channels_at(k),
                3,
            );
            add_stack(&mut store, &mut rng, &format!("dec{k}"), cfg.channels_at(k));
        }

        let df = cfg.channels_at(0);
        if cfg.tex_head {
            // T and X heads see the full-resolution PAN feature as well.
            add_conv(&mut store, &mut rng, "head_t.0", df, 2 * df, 3);
            add_conv(&mut store, &mut rng, "head_t.1", 1, df, 3);
            let (o, _len) = store.span("head_t.1.bias");
            store.data_mut()[o] = T_HEAD_BIAS_INIT;
            add_conv(&mut store, &mut rng, "head_e.0", df, df, 3);
            add_conv(&mut store, &mut rng, "head_e.1", 1, df, 3);
            add_conv(&mut store, &mut rng, "head_x.0", df, 2 * df, 3);
            add_conv(&mut store, &mut rng, "head_x.1", cfg.bands, df, 3);
        } else {
            add_conv(&mut store, &mut rng, "head_direct.0", df, df, 3);
            add_conv(&mut store, &mut rng, "head_direct.1", cfg.bands, df, 3);
        }
        store
    }

    fn conv_block(
        &self,
        g: &Graph,
        binder: &mut ParamBinder,
        name: &str,
        x: Var,
        stride: usize,
    ) -> Var {
        let w = binder.bind(&format!("{name}.weight"));
        let b = binder.bind(&format!("{name}.bias"));
        g.conv2d(x, w, b, stride, 1)
    }

    fn pan_encoder_graph(&self, g: &Graph, binder: &mut ParamBinder, pan: Var) -> Vec<Var> {
        let mut feats = Vec::with_capacity(self.config.depth);
        let mut x = g.silu(self.conv_block(g, binder, "se.0", pan, 1));
        feats.push(x);
        for k in 1..self.config.depth {
            x = g.silu(self.conv_block(g, binder, &format!("se.{k}"), x, 2));
            feats.push(x);
        }
        feats
    }

    fn stack_graph(
        &self,
        g: &Graph,
        binder: &mut ParamBinder,
        prefix: &str,
        mut x: Var,
        pan_feat: Var,
        scale: usize,
    ) -> Var {
        for blk in 0..self.config.blocks_per_scale {
            let vars = binder.bind_csmb(&format!("{prefix}.{blk}"));
            x = csmb_graph(g, &vars, x, pan_feat, &self.orders[scale]);
        }
        x
    }

    /// Builds the full forward pass on the tape. `cube_input` is the
    /// shift-back lift concatenated with the broadcast PAN measurement,
    /// shape `[bands + 1, H, W]`; `pan_input` is `[1, H, W]`.
    pub fn forward_graph(
        &self,
        g: &Graph,
        binder: &mut ParamBinder,
        cube_input: Var,
        pan_input: Var,
    ) -> ForwardGraph {
        let cfg = &self.config;
        let pan_feats = self.pan_encoder_graph(g, binder, pan_input);

        let mut x = g.silu(self.conv_block(g, binder, "stem", cube_input, 1));
        let mut skips = Vec::new();
        for k in 0..cfg.depth - 1 {
            x = self.stack_graph(g, binder, &format!("enc{k}"), x, pan_feats[k], k);
            skips.push(x);
            x = g.silu(self.conv_block(g, binder, &format!("down{k}"), x, 2));
        }
        x = self.stack_graph(g, binder, "mid", x, pan_feats[cfg.depth - 1], cfg.depth - 1);
        for k in (0..cfg.depth - 1).rev() {
            let up = g.silu(self.conv_block(g, binder, &format!("up{k}"), g.upsample2x(x), 1));
            let cat = g.concat_dim0(up, skips[k]);
            x = g.silu(self.conv_block(g, binder, &format!("fuse{k}"), cat, 1));
            x = self.stack_graph(g, binder, &format!("dec{k}"), x, pan_feats[k], k);
        }

        if cfg.tex_head {
            let with_pan = g.concat_dim0(x, pan_feats[0]);
            let t_hidden = g.silu(self.conv_block(g, binder, "head_t.0", with_pan, 1));
            let t_raw = self.conv_block(g, binder, "head_t.1", t_hidden, 1);
            let temperature = g.softplus(t_raw); // [1, H, W], positive

            let e_hidden = g.silu(self.conv_block(g, binder, "head_e.0", x, 1));
            let e_raw = self.conv_block(g, binder, "head_e.1", e_hidden, 1);
            let emissivity = g.sigmoid(e_raw); // [1, H, W], in (0, 1)

            let x_hidden = g.silu(self.conv_block(g, binder, "head_x.0", with_pan, 1));
            let x_raw = self.conv_block(g, binder, "head_x.1", x_hidden, 1);
            let texture = g.softplus(x_raw); // [C, H, W], non-negative

            let edges = self.grid.band_edges().expect("validated grid");
            let planck = g.planck_bands(temperature, &edges, cfg.height, cfg.width);
            let one_minus_e = g.affine(emissivity, -1.0, 1.0);
            let cube_hat = g.add(g.mul(emissivity, planck), g.mul(one_minus_e, texture));
            ForwardGraph {
                cube_hat,
                temperature: Some(temperature),
                emissivity: Some(emissivity),
                texture: Some(texture),
            }
        } else {
            let hidden = g.silu(self.conv_block(g, binder, "head_direct.0", x, 1));
            let raw = self.conv_block(g, binder, "head_direct.1", hidden, 1);
            ForwardGraph {
                cube_hat: g.softplus(raw),
                temperature: None,
                emissivity: None,
                texture: None,
            }
        }
    }

    /// Network input tensors from a measurement: shift-back adjoint of the
    /// CASSI branch concatenated with the broadcast PAN image, plus the raw
    /// PAN plane for the encoder.
    pub fn prepare_inputs(&self, pair: &MeasurementPair) -> Result<(Tensor, Tensor)> {
        let cfg = &self.config;
        let lifted = cassi_adjoint(&pair.y_cassi, &pair.mask, pair.disp, &self.grid)?;
        if lifted.height() != cfg.height || lifted.width() != cfg.width {
            return Err(Error::DimensionMismatch(format!(
                "measurement implies {}x{}, config wants {}x{}",
                lifted.height(),
                lifted.width(),
                cfg.height,
                cfg.width
            )));
        }
        if pair.y_pan.height() != cfg.height || pair.y_pan.width() != cfg.width {
            return Err(Error::DimensionMismatch(
                "PAN measurement does not match configured dimensions".into(),
            ));
        }
        let hw = cfg.height * cfg.width;
        let mut cube_in = Vec::with_capacity((cfg.bands + 1) * hw);
        cube_in.extend(lifted.data().iter().map(|&v| v as f64));
        cube_in.extend(pair.y_pan.data().iter().map(|&v| v as f64));
        let pan_in: Vec<f64> = pair.y_pan.data().iter().map(|&v| v as f64).collect();
        Ok((
            Tensor::new(&[cfg.bands + 1, cfg.height, cfg.width], cube_in),
            Tensor::new(&[1, cfg.height, cfg.width], pan_in),
        ))
    }

    /// Runs the network on a measurement with the given weights, returning
    /// the decoded factors and the synthesized cube.
    pub fn predict(
        &self,
        store: &ParamStore,
        pair: &MeasurementPair,
    ) -> Result<(Option<TexPrediction>, SpectralCube)> {
        let (cube_in, pan_in) = self.prepare_inputs(pair)?;
        let g = Graph::new();
        let mut binder = ParamBinder::new(&g, store);
        let ci = g.input(cube_in);
        let pi = g.input(pan_in);
        let out = self.forward_graph(&g, &mut binder, ci, pi);
        let cube_val = g.value(out.cube_hat);
        let data: Vec<f32> = cube_val.data().iter().map(|&v| v as f32).collect();
        let cube = SpectralCube::new_allow_negative(
            self.config.height,
            self.config.width,
            self.grid.clone(),
            data,
        )?;
        let tex = match (out.temperature, out.emissivity, out.texture) {
            (Some(t), Some(e), Some(x)) => Some(TexPrediction {
                temperature: g.value(t).data().to_vec(),
                emissivity: g.value(e).data().to_vec(),
                texture: g.value(x).data().to_vec(),
            }),
            _ => None,
        };
        Ok((tex, cube))
    }
}

/// Multi-scale shallow PAN encoding with the stored weights: feature maps at
/// strides 1, 2, ..., 2^(M-1).
pub fn pan_encode(
    pan: &PanImage,
    store: &ParamStore,
    config: &NetworkConfig,
) -> Result<Vec<FeatureMap>> {
    config.validate()?;
    let div = 1usize << (config.depth - 1);
    if pan.height() % div != 0 || pan.width() % div != 0 {
        return Err(Error::DimensionMismatch(format!(
            "PAN {}x{} not divisible by 2^(depth-1) = {div}",
            pan.height(),
            pan.width()
        )));
    }
    let g = Graph::new();
    let mut binder = ParamBinder::new(&g, store);
    let pan_in = Tensor::new(
        &[1, pan.height(), pan.width()],
        pan.data().iter().map(|&v| v as f64).collect(),
    );
    let pv = g.input(pan_in);
    let mut feats = Vec::with_capacity(config.depth);
    let mut x = g.silu({
        let w = binder.bind("se.0.weight");
        let b = binder.bind("se.0.bias");
        g.conv2d(pv, w, b, 1, 1)
    });
    feats.push(FeatureMap::from_tensor(g.value(x)));
    for k in 1..config.depth {
        x = g.silu({
            let w = binder.bind(&format!("se.{k}.weight"));
            let b = binder.bind(&format!("se.{k}.bias"));
            g.conv2d(x, w, b, 2, 1)
        });
        feats.push(FeatureMap::from_tensor(g.value(x)));
    }
    Ok(feats)
}

/// Standalone cross-modal block evaluation on concrete feature maps.
pub fn csmb_forward(
    feat_b: &FeatureMap,
    feat_p: &FeatureMap,
    order: &ScanOrder,
    params: &CsmbParams,
) -> Result<FeatureMap> {
    if feat_b.tensor().shape() != feat_p.tensor().shape() {
        return Err(Error::DimensionMismatch(format!(
            "backbone {:?} vs PAN {:?}",
            feat_b.tensor().shape(),
            feat_p.tensor().shape()
        )));
    }
    if feat_b.height() != order.height() || feat_b.width() != order.width() {
        return Err(Error::DimensionMismatch(
            "scan order does not match feature dimensions".into(),
        ));
    }
    if params.ln_in_gamma.shape() != [feat_b.channels()] {
        return Err(Error::DimensionMismatch(
            "block parameters sized for different channel count".into(),
        ));
    }
    let g = Graph::new();
    let fb = g.input(feat_b.tensor().clone());
    let fp = g.input(feat_p.tensor().clone());
    let vars = CsmbVars {
        ln_in_gamma: g.input(params.ln_in_gamma.clone()),
        ln_in_beta: g.input(params.ln_in_beta.clone()),
        dw_weight: g.input(params.dw_weight.clone()),
        dw_bias: g.input(params.dw_bias.clone()),
        dt_weight: g.input(params.dt_weight.clone()),
        dt_bias: g.input(params.dt_bias.clone()),
        b_weight: g.input(params.b_weight.clone()),
        c_weight: g.input(params.c_weight.clone()),
        a_log: g.input(params.a_log.clone()),
        d_skip: g.input(params.d_skip.clone()),
        ln_out_gamma: g.input(params.ln_out_gamma.clone()),
        ln_out_beta: g.input(params.ln_out_beta.clone()),
    };
    let order = Arc::new(order.clone());
    let out = csmb_graph(&g, &vars, fb, fp, &order);
    Ok(FeatureMap::from_tensor(g.value(out)))
}

/// Graph-side CSMB entry point for gradient tests: binds the supplied params
/// as inputs and returns every Var involved.
pub fn csmb_graph_with_inputs(
    g: &Graph,
    feat_b: Tensor,
    feat_p: Tensor,
    order: &Arc<ScanOrder>,
    params: &CsmbParams,
) -> (Var, Vec<(&'static str, Var)>) {
    let fb = g.input(feat_b);
    let fp = g.input(feat_p);
    let mut named = vec![("feat_b", fb), ("feat_p", fp)];
    let mut bind = |name: &'static str, t: &Tensor| {
        let v = g.input(t.clone());
        named.push((name, v));
        v
    };
    let vars = CsmbVars {
        ln_in_gamma: bind("ln_in.gamma", &params.ln_in_gamma),
        ln_in_beta: bind("ln_in.beta", &params.ln_in_beta),
        dw_weight: bind("dw.weight", &params.dw_weight),
        dw_bias: bind("dw.bias", &params.dw_bias),
        dt_weight: bind("dt.weight", &params.dt_weight),
        dt_bias: bind("dt.bias", &params.dt_bias),
        b_weight: bind("b_proj.weight", &params.b_weight),
        c_weight: bind("c_proj.weight", &params.c_weight),
        a_log: bind("a_log", &params.a_log),
        d_skip: bind("d_skip", &params.d_skip),
        ln_out_gamma: bind("ln_out.gamma", &params.ln_out_gamma),
        ln_out_beta: bind("ln_out.beta", &params.ln_out_beta),
    };
    let out = csmb_graph(g, &vars, fb, fp, order);
    (out, named)
}
