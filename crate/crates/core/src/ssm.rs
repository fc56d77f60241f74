//! Linear-time state-space scan kernel.
//!
//! A single channel carries the recurrence `h_t = abar_t * h_{t-1} +
//! bbar_t * x_t`, `y_t = <c_t, h_t> + d * x_t` over a diagonal state of
//! dimension N. Continuous parameters `(A, B, Delta)` are turned into
//! per-step discrete `(abar, bbar)` by zero-order-hold discretization.
//! Parameters may vary per step (selective form, the default used by the
//! network) or stay constant across the sequence.
//!
//! Two evaluation paths are provided: a left-to-right sequential scan and a
//! work-efficient parallel prefix scan over the affine-map monoid
//! `(a, g) . (a', g') = (a a', a g' + g)`. Both are O(L) work; the parallel
//! form has O(log L) dependency depth and returns results independent of
//! worker count because the combination tree is fixed by L alone.

use crate::error::{Error, Result};
use rayon::prelude::*;

/// Continuous selective-SSM parameters for one channel.
///
/// `a` has one negative entry per state dimension; `delta` has one positive
/// entry per step; `b` is per-step by state (`seq_len * state_dim`).
#[derive(Debug, Clone)]
pub struct SsmParams {
    state_dim: usize,
    seq_len: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    delta: Vec<f64>,
}

impl SsmParams {
    /// Per-step (selective) parameters.
    pub fn selective(a: Vec<f64>, b: Vec<f64>, delta: Vec<f64>) -> Result<Self> {
        let state_dim = a.len();
        let seq_len = delta.len();
        if state_dim == 0 || seq_len == 0 {
            return Err(Error::InvalidArgument("empty state or sequence".into()));
        }
        if b.len() != seq_len * state_dim {
            return Err(Error::DimensionMismatch(format!(
                "b has {} entries, expected L*N = {}",
                b.len(),
                seq_len * state_dim
            )));
        }
        if a.iter().any(|&v| !v.is_finite() || v >= 0.0) {
            return Err(Error::InvalidArgument(
                "state matrix entries must be finite and < 0".into(),
            ));
        }
        if delta.iter().any(|&v| !v.is_finite() || v <= 0.0) {
            return Err(Error::InvalidArgument(
                "time scales must be finite and > 0".into(),
            ));
        }
        Ok(SsmParams {
            state_dim,
            seq_len,
            a,
            b,
            delta,
        })
    }

    /// Step-constant parameters broadcast over a sequence of length `seq_len`.
    pub fn constant(a: Vec<f64>, b: Vec<f64>, delta: f64, seq_len: usize) -> Result<Self> {
        let n = a.len();
        if b.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "b has {} entries, expected N = {n}",
                b.len()
            )));
        }
        let b_steps = (0..seq_len).flat_map(|_| b.iter().copied()).collect();
        SsmParams::selective(a, b_steps, vec![delta; seq_len])
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }
}

/// Per-step discrete scan coefficients, `seq_len * state_dim` each.
#[derive(Debug, Clone)]
pub struct DiscreteParams {
    pub state_dim: usize,
    pub seq_len: usize,
    pub abar: Vec<f64>,
    pub bbar: Vec<f64>,
}

/// `expm1(u) / u`, exact limit 1 at u = 0; no cancellation for small u.
#[inline]
pub(crate) fn phi1(u: f64) -> f64 {
    if u == 0.0 {
        1.0
    } else {
        u.exp_m1() / u
    }
}

/// Derivative of [`phi1`]: `(u e^u - expm1(u)) / u^2`, with a series fallback
/// near zero where the direct form cancels catastrophically.
#[inline]
pub(crate) fn phi1_prime(u: f64) -> f64 {
    if u.abs() < 1e-3 {
        // u e^u - expm1(u) = u^2/2 + u^3/3 + u^4/8 + O(u^5)
        0.5 + u / 3.0 + u * u / 8.0
    } else {
        (u * u.exp() - u.exp_m1()) / (u * u)
    }
}

/// Zero-order-hold discretization: `abar = exp(delta a)` and
/// `bbar = (expm1(delta a) / a) b`, evaluated in the expm1 form so that
/// `bbar -> delta b` smoothly as `delta a -> 0`.
pub fn discretize_zoh(params: &SsmParams) -> DiscreteParams {
    let n = params.state_dim;
    let l = params.seq_len;
    let mut abar = vec![0.0; l * n];
    let mut bbar = vec![0.0; l * n];
    for t in 0..l {
        let dt = params.delta[t];
        for i in 0..n {
            let a = params.a[i];
            let da = dt * a;
            abar[t * n + i] = da.exp();
            bbar[t * n + i] = phi1(da) * dt * params.b[t * n + i];
        }
    }
    DiscreteParams {
        state_dim: n,
        seq_len: l,
        abar,
        bbar,
    }
}

fn check_scan_shapes(
    disc: &DiscreteParams,
    c: &[f64],
    x: &[f64],
    h0: &[f64],
) -> Result<(usize, usize)> {
    let (l, n) = (disc.seq_len, disc.state_dim);
    if disc.abar.len() != l * n || disc.bbar.len() != l * n {
        return Err(Error::DimensionMismatch(
            "discrete parameter buffers do not match L*N".into(),
        ));
    }
    if c.len() != l * n {
        return Err(Error::DimensionMismatch(format!(
            "c has {} entries, expected L*N = {}",
            c.len(),
            l * n
        )));
    }
    if x.len() != l {
        return Err(Error::DimensionMismatch(format!(
            "x has {} entries, expected L = {l}",
            x.len()
        )));
    }
    if h0.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "h0 has {} entries, expected N = {n}",
            h0.len()
        )));
    }
    Ok((l, n))
}

/// Left-to-right evaluation of the recurrence. O(L N) time, O(N) state.
pub fn scan_sequential(
    disc: &DiscreteParams,
    c: &[f64],
    d: f64,
    x: &[f64],
    h0: &[f64],
) -> Result<Vec<f64>> {
    let (l, n) = check_scan_shapes(disc, c, x, h0)?;
    let mut h = h0.to_vec();
    let mut y = Vec::with_capacity(l);
    for t in 0..l {
        let xt = x[t];
        let row = t * n;
        let mut out = d * xt;
        for i in 0..n {
            h[i] = disc.abar[row + i] * h[i] + disc.bbar[row + i] * xt;
            out += c[row + i] * h[i];
        }
        y.push(out);
    }
    Ok(y)
}

/// One affine element `(a, g)` per step, meaning `h -> a h + g` elementwise.
/// Stored interleaved: `[a_0.. a_{n-1}, g_0.. g_{n-1}]`.
#[inline]
fn combine_into(left: &[f64], right: &mut [f64], n: usize) {
    // (left then right): a = ra * la, g = ra * lg + rg
    for i in 0..n {
        let la = left[i];
        let lg = left[n + i];
        let ra = right[i];
        right[i] = ra * la;
        right[n + i] = ra * lg + right[n + i];
    }
}

/// Work-efficient parallel prefix scan (Blelloch up/down sweeps) over the
/// affine monoid. Matches [`scan_sequential`] up to float reassociation; the
/// combination tree depends only on L, so results do not vary with the
/// number of worker threads.
pub fn scan_parallel(
    disc: &DiscreteParams,
    c: &[f64],
    d: f64,
    x: &[f64],
    h0: &[f64],
) -> Result<Vec<f64>> {
    let (l, n) = check_scan_shapes(disc, c, x, h0)?;
    let len2 = l.next_power_of_two();
    let elem = 2 * n;

    // Build padded elements (a_t, bbar_t x_t); identity = (1, 0).
    let mut buf = vec![0.0f64; len2 * elem];
    buf.par_chunks_mut(elem).enumerate().for_each(|(t, e)| {
        if t < l {
            let row = t * n;
            for i in 0..n {
                e[i] = disc.abar[row + i];
                e[n + i] = disc.bbar[row + i] * x[t];
            }
        } else {
            for i in 0..n {
                e[i] = 1.0;
            }
        }
    });

    // Upsweep: pairwise combine with doubling stride.
    let mut dstride = 1;
    while dstride < len2 {
        let span = 2 * dstride * elem;
        buf.par_chunks_mut(span).for_each(|chunk| {
            let (l_half, r_half) = chunk.split_at_mut(dstride * elem);
            let left = &l_half[(dstride - 1) * elem..dstride * elem];
            let right = &mut r_half[(dstride - 1) * elem..dstride * elem];
            combine_into(left, right, n);
        });
        dstride *= 2;
    }

    // Clear the root, then downsweep to exclusive prefixes.
    for i in 0..n {
        buf[(len2 - 1) * elem + i] = 1.0;
        buf[(len2 - 1) * elem + n + i] = 0.0;
    }
    let mut dstride = len2 / 2;
    while dstride >= 1 {
        let span = 2 * dstride * elem;
        buf.par_chunks_mut(span).for_each(|chunk| {
            let (l_half, r_half) = chunk.split_at_mut(dstride * elem);
            let left = &mut l_half[(dstride - 1) * elem..dstride * elem];
            let right = &mut r_half[(dstride - 1) * elem..dstride * elem];
            // left child inherits the parent prefix; right child becomes
            // (parent prefix, then the old left-subtree aggregate)
            let left_agg = left.to_vec();
            left.copy_from_slice(right);
            right.copy_from_slice(&left_agg);
            combine_into(left, right, n);
        });
        dstride /= 2;
    }

    // Emit outputs: h_{t-1} from the exclusive prefix, then one local step.
    let mut y = vec![0.0; l];
    y.par_iter_mut().enumerate().for_each(|(t, out)| {
        let e = &buf[t * elem..(t + 1) * elem];
        let row = t * n;
        let xt = x[t];
        let mut acc = d * xt;
        for i in 0..n {
            let h_prev = e[i] * h0[i] + e[n + i];
            let h_t = disc.abar[row + i] * h_prev + disc.bbar[row + i] * xt;
            acc += c[row + i] * h_t;
        }
        *out = acc;
    });
    Ok(y)
}

/// Cotangents of a scan with respect to every input, given the output
/// cotangent `dy`.
#[derive(Debug, Clone)]
pub struct ScanGrads {
    pub dx: Vec<f64>,
    pub dc: Vec<f64>,
    pub dd: f64,
    pub dabar: Vec<f64>,
    pub dbbar: Vec<f64>,
    pub dh0: Vec<f64>,
}

/// Reverse-mode pass of the scan recurrence. Recomputes the hidden states
/// forward, then runs the adjoint recurrence
/// `lambda_t = c_t dy_t + abar_{t+1} lambda_{t+1}` right-to-left.
pub fn scan_backward(
    disc: &DiscreteParams,
    c: &[f64],
    d: f64,
    x: &[f64],
    h0: &[f64],
    dy: &[f64],
) -> Result<ScanGrads> {
    let (l, n) = check_scan_shapes(disc, c, x, h0)?;
    if dy.len() != l {
        return Err(Error::DimensionMismatch(format!(
            "dy has {} entries, expected L = {l}",
            dy.len()
        )));
    }

    // Forward states h_t, t = 0..L-1.
    let mut h = vec![0.0; l * n];
    {
        let mut prev = h0.to_vec();
        for t in 0..l {
            let row = t * n;
            for i in 0..n {
                let v = disc.abar[row + i] * prev[i] + disc.bbar[row + i] * x[t];
                h[row + i] = v;
                prev[i] = v;
            }
        }
    }

    let mut grads = ScanGrads {
        dx: vec![0.0; l],
        dc: vec![0.0; l * n],
        dd: 0.0,
        dabar: vec![0.0; l * n],
        dbbar: vec![0.0; l * n],
        dh0: vec![0.0; n],
    };

    let mut lambda = vec![0.0; n];
    for t in (0..l).rev() {
        let row = t * n;
        let xt = x[t];
        let dyt = dy[t];
        grads.dd += dyt * xt;
        let mut dxt = d * dyt;
        for i in 0..n {
            // lambda_t = c_t dy_t + abar_{t+1} lambda_{t+1} (already folded in)
            let lam = c[row + i] * dyt + lambda[i];
            let h_prev = if t == 0 { h0[i] } else { h[row - n + i] };
            grads.dc[row + i] = dyt * h[row + i];
            grads.dabar[row + i] = lam * h_prev;
            grads.dbbar[row + i] = lam * xt;
            dxt += disc.bbar[row + i] * lam;
            lambda[i] = disc.abar[row + i] * lam;
        }
        grads.dx[t] = dxt;
    }
    grads.dh0.copy_from_slice(&lambda);
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Reference (a, delta, b, abar, bbar) tuples computed with mpmath at 50
    /// significant digits: abar = exp(delta*a), bbar = expm1(delta*a)/a * b.
    const ZOH_REFERENCE: [(f64, f64, f64, f64, f64); 10] = [
        (-1.0, 0.5, 1.0, 0.6065306597126334236, 0.3934693402873665764),
        (-2.5, 1.25, -0.7, 0.043936933623407417327, -0.26769765858544592315),
        (-0.001, 0.01, 3.0, 0.99999000004999983333, 0.02999985000049999875),
        (-0.0001, 0.0001, 1.0, 0.99999999000000005, 0.000099999999500000001667),
        (-1.0, 1.0e-8, 2.0, 0.99999999000000005, 1.9999999900000000333e-8),
        (-1.0e-6, 0.01, -5.0, 0.99999999000000005, -0.049999999750000000833),
        (-4.2, 2.0, 0.3, 0.0002248673241788482728, 0.071412509476844367981),
        (-0.37, 3.7, 1.9, 0.25436119360819462966, 3.8289560328227843342),
        (-1.0e-8, 1.0, 1.0, 0.99999999000000005, 0.99999999500000001667),
        (-50.0, 0.1, 0.25, 0.0067379469990854670966, 0.0049663102650045726645),
    ];

    #[test]
    fn zoh_matches_extended_precision_reference() {
        for &(a, delta, b, abar_ref, bbar_ref) in &ZOH_REFERENCE {
            let params = SsmParams::constant(vec![a], vec![b], delta, 1).unwrap();
            let disc = discretize_zoh(&params);
            let rel_a = (disc.abar[0] - abar_ref).abs() / abar_ref.abs();
            let rel_b = (disc.bbar[0] - bbar_ref).abs() / bbar_ref.abs();
            assert!(rel_a <= 1e-12, "abar for (a={a}, d={delta}): rel {rel_a}");
            assert!(rel_b <= 1e-12, "bbar for (a={a}, d={delta}): rel {rel_b}");
        }
    }

    #[test]
    fn zoh_halving_example() {
        // A = -1, delta = ln 2, B = 1 -> abar = 0.5, bbar = 0.5
        let params =
            SsmParams::constant(vec![-1.0], vec![1.0], std::f64::consts::LN_2, 1).unwrap();
        let disc = discretize_zoh(&params);
        assert!((disc.abar[0] - 0.5).abs() < 1e-15);
        assert!((disc.bbar[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zoh_small_da_limit() {
        // bbar -> delta*b as delta*a -> 0
        let params = SsmParams::constant(vec![-1e-8], vec![3.0], 1.0, 1).unwrap();
        let disc = discretize_zoh(&params);
        let expect = 1.0 * 3.0;
        assert!((disc.bbar[0] - expect).abs() <= 1e-6 * expect);
    }

    #[test]
    fn params_validation() {
        assert!(SsmParams::constant(vec![1.0], vec![1.0], 0.5, 4).is_err()); // a >= 0
        assert!(SsmParams::constant(vec![0.0], vec![1.0], 0.5, 4).is_err()); // a == 0
        assert!(SsmParams::constant(vec![-1.0], vec![1.0], 0.0, 4).is_err()); // delta <= 0
        assert!(SsmParams::selective(vec![-1.0], vec![1.0; 3], vec![0.5; 4]).is_err());
    }

    fn halving_disc(l: usize) -> DiscreteParams {
        let params =
            SsmParams::constant(vec![-1.0], vec![1.0], std::f64::consts::LN_2, l).unwrap();
        discretize_zoh(&params)
    }

    #[test]
    fn sequential_hand_recurrence() {
        let disc = halving_disc(3);
        let y = scan_sequential(&disc, &[1.0, 1.0, 1.0], 0.0, &[1.0, 1.0, 1.0], &[0.0]).unwrap();
        assert_eq!(y, vec![0.5, 0.75, 0.875]);
    }

    #[test]
    fn sequential_zero_input_zero_output() {
        let disc = halving_disc(5);
        let y = scan_sequential(&disc, &[1.0; 5], 0.0, &[0.0; 5], &[0.0]).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sequential_pure_skip() {
        let disc = halving_disc(4);
        let x = [0.3, -0.2, 0.9, 1.4];
        let y = scan_sequential(&disc, &[0.0; 4], 1.0, &x, &[0.0]).unwrap();
        assert_eq!(y, x.to_vec());
    }

    #[test]
    fn parallel_hand_case() {
        let disc = halving_disc(3);
        let y = scan_parallel(&disc, &[1.0, 1.0, 1.0], 0.0, &[1.0, 1.0, 1.0], &[0.0]).unwrap();
        for (got, want) in y.iter().zip([0.5, 0.75, 0.875]) {
            assert!((got - want).abs() < 1e-14, "{got} vs {want}");
        }
    }

    #[test]
    fn parallel_single_step() {
        // L = 1: y = c*(abar*h0 + bbar*x) + d*x
        let disc = halving_disc(1);
        let y = scan_parallel(&disc, &[2.0], 3.0, &[1.5], &[4.0]).unwrap();
        let expect = 2.0 * (0.5 * 4.0 + 0.5 * 1.5) + 3.0 * 1.5;
        assert!((y[0] - expect).abs() < 1e-14);
    }

    fn random_instance(
        seed: u64,
        l: usize,
        n: usize,
    ) -> (DiscreteParams, Vec<f64>, f64, Vec<f64>, Vec<f64>) {
        let mut rng = crate::rng::CounterRng::new(seed);
        let a: Vec<f64> = (0..n).map(|_| -rng.uniform_in(0.05, 3.0)).collect();
        let b: Vec<f64> = (0..l * n).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let delta: Vec<f64> = (0..l).map(|_| rng.uniform_in(0.01, 1.5)).collect();
        let params = SsmParams::selective(a, b, delta).unwrap();
        let disc = discretize_zoh(&params);
        let c: Vec<f64> = (0..l * n).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let d = rng.uniform_in(-1.0, 1.0);
        let x: Vec<f64> = (0..l).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
        let h0: Vec<f64> = (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        (disc, c, d, x, h0)
    }

    #[test]
    fn parallel_equals_sequential_on_random_instances() {
        for seed in 0..40 {
            let mut rng = crate::rng::CounterRng::new(seed + 1000);
            let l = 1 + rng.below(200);
            let n = 1 + rng.below(8);
            let (disc, c, d, x, h0) = random_instance(seed, l, n);
            let ys = scan_sequential(&disc, &c, d, &x, &h0).unwrap();
            let yp = scan_parallel(&disc, &c, d, &x, &h0).unwrap();
            for (s, p) in ys.iter().zip(&yp) {
                let denom = s.abs().max(1e-9);
                assert!(
                    (s - p).abs() / denom <= 1e-12,
                    "L={l} N={n}: {s} vs {p}"
                );
            }
        }
    }

    #[test]
    fn backward_zero_cotangent_gives_zero_grads() {
        let (disc, c, d, x, h0) = random_instance(7, 16, 4);
        let g = scan_backward(&disc, &c, d, &x, &h0, &vec![0.0; 16]).unwrap();
        assert!(g.dx.iter().all(|&v| v == 0.0));
        assert!(g.dc.iter().all(|&v| v == 0.0));
        assert_eq!(g.dd, 0.0);
        assert!(g.dabar.iter().all(|&v| v == 0.0));
        assert!(g.dbbar.iter().all(|&v| v == 0.0));
        assert!(g.dh0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_skip_gradient_closed_form() {
        let (disc, c, d, x, h0) = random_instance(9, 12, 3);
        let mut rng = crate::rng::CounterRng::new(99);
        let dy: Vec<f64> = (0..12).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let g = scan_backward(&disc, &c, d, &x, &h0, &dy).unwrap();
        let expect: f64 = dy.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert_eq!(g.dd, expect);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let l = 16;
        let n = 4;
        let (disc, c, d, x, h0) = random_instance(21, l, n);
        let mut rng = crate::rng::CounterRng::new(77);
        let dy: Vec<f64> = (0..l).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let g = scan_backward(&disc, &c, d, &x, &h0, &dy).unwrap();

        let loss = |disc: &DiscreteParams, c: &[f64], d: f64, x: &[f64], h0: &[f64]| -> f64 {
            scan_sequential(disc, c, d, x, h0)
                .unwrap()
                .iter()
                .zip(&dy)
                .map(|(y, w)| y * w)
                .sum()
        };
        let eps = 1e-5;
        let check = |analytic: f64, numeric: f64, what: &str| {
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            assert!(
                (analytic - numeric).abs() / denom <= 1e-5,
                "{what}: analytic {analytic} vs numeric {numeric}"
            );
        };

        for t in 0..l {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[t] += eps;
            xm[t] -= eps;
            let fd = (loss(&disc, &c, d, &xp, &h0) - loss(&disc, &c, d, &xm, &h0)) / (2.0 * eps);
            check(g.dx[t], fd, &format!("dx[{t}]"));
        }
        for i in 0..l * n {
            let mut cp = c.clone();
            let mut cm = c.clone();
            cp[i] += eps;
            cm[i] -= eps;
            let fd = (loss(&disc, &cp, d, &x, &h0) - loss(&disc, &cm, d, &x, &h0)) / (2.0 * eps);
            check(g.dc[i], fd, &format!("dc[{i}]"));

            let mut dp = disc.clone();
            let mut dm = disc.clone();
            dp.abar[i] += eps;
            dm.abar[i] -= eps;
            let fd = (loss(&dp, &c, d, &x, &h0) - loss(&dm, &c, d, &x, &h0)) / (2.0 * eps);
            check(g.dabar[i], fd, &format!("dabar[{i}]"));

            let mut dp = disc.clone();
            let mut dm = disc.clone();
            dp.bbar[i] += eps;
            dm.bbar[i] -= eps;
            let fd = (loss(&dp, &c, d, &x, &h0) - loss(&dm, &c, d, &x, &h0)) / (2.0 * eps);
            check(g.dbbar[i], fd, &format!("dbbar[{i}]"));
        }
        for i in 0..n {
            let mut hp = h0.clone();
            let mut hm = h0.clone();
            hp[i] += eps;
            hm[i] -= eps;
            let fd = (loss(&disc, &c, d, &x, &hp) - loss(&disc, &c, d, &x, &hm)) / (2.0 * eps);
            check(g.dh0[i], fd, &format!("dh0[{i}]"));
        }
        let fd = (loss(&disc, &c, d + eps, &x, &h0) - loss(&disc, &c, d - eps, &x, &h0))
            / (2.0 * eps);
        check(g.dd, fd, "dd");
    }

    #[test]
    fn bounded_input_bounded_state() {
        // With a < 0, |h_t| <= |h0| + max|bbar x| / (1 - max abar).
        let (disc, _c, _d, x, h0) = random_instance(33, 64, 3);
        let n = disc.state_dim;
        let mut h = h0.clone();
        let max_abar = disc.abar.iter().cloned().fold(0.0f64, f64::max);
        let max_bx = disc
            .bbar
            .iter()
            .enumerate()
            .map(|(i, b)| (b * x[i / n]).abs())
            .fold(0.0f64, f64::max);
        let h0_max = h0.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let bound = h0_max + max_bx / (1.0 - max_abar);
        for t in 0..disc.seq_len {
            for i in 0..n {
                h[i] = disc.abar[t * n + i] * h[i] + disc.bbar[t * n + i] * x[t];
                assert!(h[i].abs() <= bound + 1e-12, "state escaped bound");
            }
        }
    }

    #[test]
    fn phi1_series_consistency() {
        for &u in &[-1e-2, -1e-5, -1e-9, 1e-9, 1e-4, 0.5, -0.5] {
            let direct = if u == 0.0 { 1.0 } else { u.exp_m1() / u };
            assert!((phi1(u) - direct).abs() <= 1e-15 * direct.abs().max(1.0));
        }
        // derivative cross-check against central differences at benign points
        for &u in &[-0.5, -0.01, 0.3, 0.02] {
            let eps = 1e-6;
            let fd = (phi1(u + eps) - phi1(u - eps)) / (2.0 * eps);
            assert!(
                (phi1_prime(u) - fd).abs() <= 1e-7,
                "phi1'({u}): {} vs {fd}",
                phi1_prime(u)
            );
        }
    }
}
