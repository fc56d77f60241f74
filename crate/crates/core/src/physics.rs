//! Thermal radiation physics: Planck radiance, band integration, direct and
//! environmental emission, inter-object signal mixing, atmospheric transfer,
//! and the temperature/emissivity/texture synthesis of radiance cubes.
//!
//! Wavelengths are nanometers at every public boundary and converted to
//! meters internally. Physical radiance (W m^-3 spectral, W m^-2 band
//! integrated) is mapped to cube units by [`RADIANCE_UNIT_SCALE`] only inside
//! [`tex_synthesize`]; every other routine returns physical units.

use crate::cube::{SceneTeX, SpectralCube, WavelengthGrid};
use crate::error::{Error, Result};

/// Planck constant, J s (exact SI).
pub const PLANCK_H: f64 = 6.626_070_15e-34;
/// Boltzmann constant, J/K (exact SI).
pub const BOLTZMANN_K: f64 = 1.380_649e-23;
/// Speed of light, m/s (exact SI).
pub const LIGHT_SPEED_C: f64 = 299_792_458.0;
/// Stefan-Boltzmann constant, W m^-2 K^-4, = 2 pi^5 k^4 / (15 h^3 c^2).
pub const STEFAN_BOLTZMANN: f64 = 5.670_374_419_184_43e-8;

/// First radiation constant 2 pi h c^2 (W m^2) for the exitance form.
const C1: f64 = 2.0 * std::f64::consts::PI * PLANCK_H * LIGHT_SPEED_C * LIGHT_SPEED_C;
/// Second radiation constant h c / k (m K).
const C2: f64 = PLANCK_H * LIGHT_SPEED_C / BOLTZMANN_K;

/// Cube units per W m^-2 of band-integrated radiance. Chosen so that
/// band-integrated thermal emission near room temperature over the default
/// 8-14 um working range lands in [0, 1]-ish values suitable for float32
/// cubes and network training. HSC1 files carry no unit metadata; this
/// constant is the single global unit convention and experiment manifests
/// record it.
pub const RADIANCE_UNIT_SCALE: f64 = 0.02;

/// Atmospheric transmissivity and per-band path radiance.
#[derive(Debug, Clone)]
pub struct AtmosphereSpec {
    gamma: f64,
    lambda: Vec<f64>,
}

impl AtmosphereSpec {
    pub fn new(gamma: f64, lambda: Vec<f64>) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) || !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "transmissivity gamma = {gamma} must lie in [0, 1]"
            )));
        }
        if lambda.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::InvalidArgument(
                "atmospheric radiance must be finite and >= 0".into(),
            ));
        }
        Ok(AtmosphereSpec { gamma, lambda })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }
}

/// Row-stochastic non-negative mixing weights with a zero diagonal: row
/// `alpha` weights the signals of the other objects contributing to alpha's
/// environmental texture.
#[derive(Debug, Clone)]
pub struct MixingMatrix {
    n: usize,
    weights: Vec<f64>,
}

impl MixingMatrix {
    pub fn new(n: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "mixing matrix has {} entries, expected {n}x{n}",
                weights.len()
            )));
        }
        for r in 0..n {
            let mut sum = 0.0;
            for c in 0..n {
                let v = weights[r * n + c];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "mixing weight [{r},{c}] = {v} must be finite and >= 0"
                    )));
                }
                if r == c && v != 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "mixing matrix diagonal [{r},{r}] must be zero"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "mixing matrix row {r} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(MixingMatrix { n, weights })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.n + col]
    }
}

/// Spectral radiant exitance of a blackbody, W m^-3:
/// `B(lambda, T) = (2 pi h c^2 / lambda^5) / (exp(h c / (lambda k T)) - 1)`.
///
/// Underflows to exactly 0 when the exponent exceeds ~700 instead of
/// producing NaN or Inf.
pub fn planck_radiance(lambda_nm: f64, t_kelvin: f64) -> Result<f64> {
    if !(lambda_nm.is_finite() && lambda_nm > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "wavelength {lambda_nm} nm must be finite and > 0"
        )));
    }
    if !(t_kelvin.is_finite() && t_kelvin > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "temperature {t_kelvin} K must be finite and > 0"
        )));
    }
    Ok(planck_unchecked(lambda_nm * 1e-9, t_kelvin))
}

/// Planck exitance with wavelength already in meters; arguments assumed valid.
#[inline]
fn planck_unchecked(lambda_m: f64, t: f64) -> f64 {
    let x = C2 / (lambda_m * t);
    if x > 700.0 {
        return 0.0; // exp would overflow; the radiance itself underflows
    }
    C1 / lambda_m.powi(5) / x.exp_m1()
}

/// Planck exitance and its temperature derivative, both W m^-3 (per K for
/// the derivative). Shares the underflow cutoff with [`planck_unchecked`].
#[inline]
pub(crate) fn planck_and_dt(lambda_m: f64, t: f64) -> (f64, f64) {
    let x = C2 / (lambda_m * t);
    if x > 700.0 {
        return (0.0, 0.0);
    }
    let em1 = x.exp_m1();
    let b = C1 / lambda_m.powi(5) / em1;
    // dB/dT = B * (x/T) * e^x / (e^x - 1)
    let db = b * (x / t) * (em1 + 1.0) / em1;
    (b, db)
}

/// Gauss-Legendre nodes and weights on [-1, 1], order 10.
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

fn gl10_panel<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> f64 {
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let mut sum = 0.0;
    for (node, w) in GL10 {
        sum += w * f(mid + half * node);
    }
    sum * half
}

/// Adaptive Gauss-Legendre quadrature: a panel is accepted when splitting it
/// changes the estimate by less than its share of the tolerance.
fn adaptive_gl<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, tol: f64, depth: u32) -> f64 {
    let whole = gl10_panel(f, lo, hi);
    let mid = 0.5 * (lo + hi);
    let left = gl10_panel(f, lo, mid);
    let right = gl10_panel(f, mid, hi);
    let split = left + right;
    if depth >= 48 || (split - whole).abs() <= tol * split.abs().max(1e-300) {
        return split;
    }
    adaptive_gl(f, lo, mid, tol, depth + 1) + adaptive_gl(f, mid, hi, tol, depth + 1)
}

fn integrate_band<F: Fn(f64) -> f64>(f: &F, lo_m: f64, hi_m: f64) -> f64 {
    // Wide intervals (Stefan-Boltzmann style sweeps) are pre-split
    // geometrically so the adaptive pass cannot step over the Planck peak.
    let mut total = 0.0;
    let mut panels = Vec::new();
    if hi_m / lo_m > 4.0 {
        let mut a = lo_m;
        while a * 2.0 < hi_m {
            panels.push((a, a * 2.0));
            a *= 2.0;
        }
        panels.push((a, hi_m));
    } else {
        panels.push((lo_m, hi_m));
    }
    for (a, b) in panels {
        total += adaptive_gl(f, a, b, 1e-10, 0);
    }
    total
}

/// Band-integrated blackbody exitance `int_{lo}^{hi} B(lambda, T) dlambda`
/// in W m^-2, by adaptive Gauss-Legendre quadrature (relative error target
/// 1e-8 or better).
pub fn band_planck(lambda_lo_nm: f64, lambda_hi_nm: f64, t_kelvin: f64) -> Result<f64> {
    if !(lambda_lo_nm.is_finite() && lambda_hi_nm.is_finite() && lambda_lo_nm > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "band [{lambda_lo_nm}, {lambda_hi_nm}] nm must be finite with lo > 0"
        )));
    }
    if lambda_lo_nm > lambda_hi_nm {
        return Err(Error::InvalidArgument(format!(
            "band lower edge {lambda_lo_nm} nm exceeds upper edge {lambda_hi_nm} nm"
        )));
    }
    if !(t_kelvin.is_finite() && t_kelvin > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "temperature {t_kelvin} K must be finite and > 0"
        )));
    }
    if lambda_lo_nm == lambda_hi_nm {
        return Ok(0.0);
    }
    let f = |lam_m: f64| planck_unchecked(lam_m, t_kelvin);
    Ok(integrate_band(&f, lambda_lo_nm * 1e-9, lambda_hi_nm * 1e-9))
}

/// Direct thermal emission over a band: `e * band_planck(band, T)`.
pub fn direct_emission(e: f64, t_kelvin: f64, band_nm: (f64, f64)) -> Result<f64> {
    check_emissivity(e)?;
    Ok(e * band_planck(band_nm.0, band_nm.1, t_kelvin)?)
}

/// Environmental emission: the fraction of surrounding texture the surface
/// reflects, `(1 - e) * X`. A perfect emitter (e = 1) shows no texture.
pub fn environmental_emission(e: f64, x_band: f64) -> Result<f64> {
    check_emissivity(e)?;
    if !(x_band.is_finite() && x_band >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "texture radiance {x_band} must be finite and >= 0"
        )));
    }
    Ok((1.0 - e) * x_band)
}

fn check_emissivity(e: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&e) || !e.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "emissivity {e} must lie in [0, 1]"
        )));
    }
    Ok(())
}

/// Per-object band signals under mutual illumination: solves the fixed point
/// `S = E b + (I - E) V S` where `E = diag(e)`, `b` holds each object's
/// band-integrated blackbody emission, and `V` mixes the other objects'
/// signals into each object's texture.
///
/// Solved by contraction iteration; fails when the spectral radius of
/// `(I - E) V` reaches 1 (possible only when some connected group of objects
/// all have zero emissivity).
pub fn scene_signal_fixed_point(
    objects: &[(f64, f64)],
    mixing: &MixingMatrix,
    band_nm: (f64, f64),
) -> Result<Vec<f64>> {
    let n = objects.len();
    if mixing.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} objects but mixing matrix is {}x{}",
            mixing.n(),
            mixing.n()
        )));
    }
    let mut b = Vec::with_capacity(n);
    for &(e, t) in objects {
        check_emissivity(e)?;
        b.push(e * band_planck(band_nm.0, band_nm.1, t)?);
    }

    // Power-iteration estimate of the spectral radius of (I - E) V.
    let apply = |s: &[f64], out: &mut [f64]| {
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (c, &sv) in s.iter().enumerate() {
                acc += mixing.at(r, c) * sv;
            }
            *o = (1.0 - objects[r].0) * acc;
        }
    };
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut w = vec![0.0; n];
    let mut rho = 0.0;
    for _ in 0..200 {
        apply(&v, &mut w);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            rho = 0.0;
            break;
        }
        rho = norm;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
    }
    if rho >= 1.0 - 1e-12 {
        return Err(Error::Numerical(format!(
            "inter-object mixing is non-contractive (spectral radius estimate {rho:.6})"
        )));
    }

    let mut s = b.clone();
    let mut next = vec![0.0; n];
    for _ in 0..10_000 {
        apply(&s, &mut next);
        for i in 0..n {
            next[i] += b[i];
        }
        let scale = next.iter().fold(0.0f64, |m, &x| m.max(x.abs())).max(1e-300);
        let delta = s
            .iter()
            .zip(&next)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        std::mem::swap(&mut s, &mut next);
        if delta <= 1e-12 * scale {
            break;
        }
    }
    Ok(s)
}

/// Atmospheric transfer per band: `gamma * S + (1 - gamma) * Lambda`.
pub fn atmospheric_transfer(signal: &[f64], atmo: &AtmosphereSpec) -> Result<Vec<f64>> {
    if signal.len() != atmo.lambda().len() {
        return Err(Error::DimensionMismatch(format!(
            "signal has {} bands but atmosphere has {}",
            signal.len(),
            atmo.lambda().len()
        )));
    }
    let g = atmo.gamma();
    Ok(signal
        .iter()
        .zip(atmo.lambda())
        .map(|(&s, &l)| g * s + (1.0 - g) * l)
        .collect())
}

/// Band-integrated emission terms for every band of `grid` at temperature
/// `t`, in cube units (physical W m^-2 times [`RADIANCE_UNIT_SCALE`]).
pub fn band_planck_on_grid(grid: &WavelengthGrid, t_kelvin: f64) -> Result<Vec<f64>> {
    let edges = grid.band_edges()?;
    let mut out = Vec::with_capacity(grid.bands());
    for k in 0..grid.bands() {
        out.push(RADIANCE_UNIT_SCALE * band_planck(edges[k], edges[k + 1], t_kelvin)?);
    }
    Ok(out)
}

/// Synthesizes a radiance cube from a temperature/emissivity/texture scene:
/// per pixel and band, `e * B_band(T) + (1 - e) * X`, with band edges at the
/// grid midpoints and Planck terms scaled into cube units. This is the
/// direct-path (gamma = 1) synthesis; apply [`atmospheric_transfer`] for
/// non-unit transmissivity.
pub fn tex_synthesize(scene: &SceneTeX, grid: &WavelengthGrid) -> Result<SpectralCube> {
    if scene.texture().bands() != grid.bands()
        || scene.texture().grid().values() != grid.values()
    {
        return Err(Error::DimensionMismatch(
            "scene texture grid differs from synthesis grid".into(),
        ));
    }
    let (h, w, c) = (scene.height(), scene.width(), grid.bands());
    let edges = grid.band_edges()?;

    let hw = h * w;
    let mut data = vec![0.0f32; hw * c];
    use rayon::prelude::*;
    let rows: Vec<Vec<f32>> = (0..h)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0f32; w * c];
            for j in 0..w {
                let p = i * w + j;
                let e = scene.emissivity()[p] as f64;
                let t = scene.temperature()[p] as f64;
                for k in 0..c {
                    let planck_term = RADIANCE_UNIT_SCALE
                        * integrate_band(
                            &|lam_m| planck_unchecked(lam_m, t),
                            edges[k] * 1e-9,
                            edges[k + 1] * 1e-9,
                        );
                    let x = scene.texture().at(i, j, k) as f64;
                    row[k * w + j] = (e * planck_term + (1.0 - e) * x) as f32;
                }
            }
            row
        })
        .collect();
    for (i, row) in rows.iter().enumerate() {
        for k in 0..c {
            for j in 0..w {
                data[(k * h + i) * w + j] = row[k * w + j];
            }
        }
    }
    SpectralCube::new(h, w, grid.clone(), data)
}

/// Recovers temperature from a band-integrated direct emission value by
/// bisection on [`band_planck`] over `[1, 1e5]` K. Planck radiance is
/// strictly increasing in temperature, so the root is unique.
pub fn invert_temperature(radiance: f64, e: f64, band_nm: (f64, f64)) -> Result<f64> {
    if !(radiance.is_finite() && radiance > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "radiance {radiance} must be finite and > 0"
        )));
    }
    if !(e > 0.0 && e <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "emissivity {e} must lie in (0, 1] for inversion"
        )));
    }
    let target = radiance / e;
    let (mut lo, mut hi) = (1.0f64, 1e5f64);
    let f_lo = band_planck(band_nm.0, band_nm.1, lo)?;
    let f_hi = band_planck(band_nm.0, band_nm.1, hi)?;
    if target < f_lo || target > f_hi {
        return Err(Error::Numerical(format!(
            "radiance {target} outside bracket [{f_lo}, {f_hi}] for band {band_nm:?}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let val = band_planck(band_nm.0, band_nm.1, mid)?;
        if val < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (val - target).abs() <= 1e-9 * target {
            return Ok(mid);
        }
        if hi - lo <= 1e-12 {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    let val = band_planck(band_nm.0, band_nm.1, t)?;
    if (val - target).abs() > 1e-6 * target {
        // the interval collapsed without meeting the target; the radiance
        // sits in the underflow gap near the T = 1 K end of the bracket
        return Err(Error::Numerical(format!(
            "bisection stalled at T = {t} K with residual {}",
            (val - target).abs() / target
        )));
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::SceneTeX;

    #[test]
    fn planck_rejects_bad_inputs() {
        assert!(planck_radiance(-1.0, 300.0).is_err());
        assert!(planck_radiance(500.0, 0.0).is_err());
        assert!(planck_radiance(0.0, 300.0).is_err());
    }

    #[test]
    fn planck_underflow_is_zero_not_nan() {
        let b = planck_radiance(500.0, 1.0).unwrap();
        assert_eq!(b, 0.0);
    }

    #[test]
    fn planck_monotone_in_temperature() {
        let lo = planck_radiance(500.0, 5000.0).unwrap();
        let hi = planck_radiance(500.0, 6000.0).unwrap();
        assert!(hi > lo);
    }

    #[test]
    fn band_degenerate_interval_is_zero() {
        assert_eq!(band_planck(600.0, 600.0, 5000.0).unwrap(), 0.0);
    }

    #[test]
    fn band_additivity() {
        let t = 4500.0;
        let whole = band_planck(400.0, 700.0, t).unwrap();
        let a = band_planck(400.0, 530.0, t).unwrap();
        let b = band_planck(530.0, 700.0, t).unwrap();
        assert!(((a + b) - whole).abs() <= 1e-8 * whole);
    }

    #[test]
    fn band_rejects_inverted_interval() {
        assert!(band_planck(700.0, 400.0, 5000.0).is_err());
    }

    #[test]
    fn direct_emission_limits() {
        let band = (9000.0, 10000.0);
        let full = band_planck(band.0, band.1, 300.0).unwrap();
        assert_eq!(direct_emission(0.0, 300.0, band).unwrap(), 0.0);
        assert_eq!(direct_emission(1.0, 300.0, band).unwrap(), full);
        let half = direct_emission(0.5, 300.0, band).unwrap();
        assert!((half - 0.5 * full).abs() <= f64::EPSILON * full);
    }

    #[test]
    fn environmental_emission_limits() {
        assert_eq!(environmental_emission(1.0, 123.0).unwrap(), 0.0);
        assert_eq!(environmental_emission(0.0, 123.0).unwrap(), 123.0);
        assert!((environmental_emission(0.3, 10.0).unwrap() - 7.0).abs() < 1e-12);
    }

    #[test]
    fn transfer_limits() {
        let atmo1 = AtmosphereSpec::new(1.0, vec![2.0, 2.0]).unwrap();
        let s = vec![10.0, 20.0];
        assert_eq!(atmospheric_transfer(&s, &atmo1).unwrap(), s);
        let atmo0 = AtmosphereSpec::new(0.0, vec![2.0, 3.0]).unwrap();
        assert_eq!(atmospheric_transfer(&s, &atmo0).unwrap(), vec![2.0, 3.0]);
        let atmo = AtmosphereSpec::new(0.9, vec![2.0]).unwrap();
        let out = atmospheric_transfer(&[10.0], &atmo).unwrap();
        assert!((out[0] - 9.2).abs() < 1e-12);
    }

    #[test]
    fn fixed_point_pure_emitters_ignore_mixing() {
        let band = (9000.0, 11000.0);
        let v = MixingMatrix::new(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let s = scene_signal_fixed_point(&[(1.0, 300.0), (1.0, 320.0)], &v, band).unwrap();
        let b0 = band_planck(band.0, band.1, 300.0).unwrap();
        let b1 = band_planck(band.0, band.1, 320.0).unwrap();
        assert!((s[0] - b0).abs() <= 1e-12 * b0);
        assert!((s[1] - b1).abs() <= 1e-12 * b1);
    }

    #[test]
    fn fixed_point_two_object_hand_solution() {
        // e = (1, 0.5), V swaps objects. S1 = B(T1); S2 solves
        // S2 = 0.5 B(T2) + 0.5 S1 -> S2 = 0.5 B(T2) + 0.5 B(T1).
        let band = (9000.0, 11000.0);
        let v = MixingMatrix::new(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let s = scene_signal_fixed_point(&[(1.0, 310.0), (0.5, 290.0)], &v, band).unwrap();
        let b1 = band_planck(band.0, band.1, 310.0).unwrap();
        let b2 = band_planck(band.0, band.1, 290.0).unwrap();
        assert!((s[0] - b1).abs() <= 1e-10 * b1);
        let expect = 0.5 * b2 + 0.5 * b1;
        assert!((s[1] - expect).abs() <= 1e-10 * expect, "{} vs {expect}", s[1]);
    }

    #[test]
    fn fixed_point_rejects_all_zero_emissivity() {
        let band = (9000.0, 11000.0);
        let v = MixingMatrix::new(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let err = scene_signal_fixed_point(&[(0.0, 300.0), (0.0, 300.0)], &v, band);
        assert!(matches!(err, Err(Error::Numerical(_))));
    }

    #[test]
    fn synthesize_emissivity_limits() {
        let grid = WavelengthGrid::linspace(8000.0, 14000.0, 4).unwrap();
        let tex_data: Vec<f32> = (0..2 * 2 * 4).map(|i| 0.1 + i as f32 * 0.01).collect();
        let tex = SpectralCube::new(2, 2, grid.clone(), tex_data).unwrap();

        // e = 0 everywhere: output equals the texture exactly.
        let scene0 = SceneTeX::new(vec![300.0; 4], vec![0.0; 4], tex.clone()).unwrap();
        let out0 = tex_synthesize(&scene0, &grid).unwrap();
        assert_eq!(out0.data(), tex.data());

        // e = 1 everywhere: output is the pure Planck cube, texture ignored.
        let scene1 = SceneTeX::new(vec![300.0; 4], vec![1.0; 4], tex.clone()).unwrap();
        let out1 = tex_synthesize(&scene1, &grid).unwrap();
        let planck = band_planck_on_grid(&grid, 300.0).unwrap();
        for k in 0..4 {
            for p in 0..4 {
                let got = out1.band(k)[p] as f64;
                assert!(
                    (got - planck[k]).abs() <= 1e-6 * planck[k],
                    "band {k}: {got} vs {}",
                    planck[k]
                );
            }
        }
    }

    #[test]
    fn synthesize_matches_scalar_composition() {
        let grid = WavelengthGrid::linspace(8000.0, 14000.0, 3).unwrap();
        let edges = grid.band_edges().unwrap();
        let mut rng = crate::rng::CounterRng::new(31);
        let h = 3;
        let w = 2;
        let tex_data: Vec<f32> = (0..h * w * 3).map(|_| rng.uniform() as f32).collect();
        let tex = SpectralCube::new(h, w, grid.clone(), tex_data).unwrap();
        let temps: Vec<f32> = (0..h * w).map(|_| rng.uniform_in(280.0, 330.0) as f32).collect();
        let emis: Vec<f32> = (0..h * w).map(|_| rng.uniform() as f32).collect();
        let scene = SceneTeX::new(temps.clone(), emis.clone(), tex.clone()).unwrap();

        let out = tex_synthesize(&scene, &grid).unwrap();
        for i in 0..h {
            for j in 0..w {
                let p = i * w + j;
                for k in 0..3 {
                    let direct = RADIANCE_UNIT_SCALE
                        * direct_emission(emis[p] as f64, temps[p] as f64, (edges[k], edges[k + 1]))
                            .unwrap();
                    let env =
                        environmental_emission(emis[p] as f64, tex.at(i, j, k) as f64).unwrap();
                    let expect = direct + env;
                    let got = out.at(i, j, k) as f64;
                    assert!((got - expect).abs() <= 1e-6 * expect.max(1e-9), "{got} vs {expect}");
                }
            }
        }
    }

    #[test]
    fn invert_temperature_roundtrips() {
        let band = (9000.0, 11000.0);
        let r = direct_emission(1.0, 5000.0, band).unwrap();
        let t = invert_temperature(r, 1.0, band).unwrap();
        assert!((t - 5000.0).abs() < 1e-4, "t = {t}");

        let r = direct_emission(0.7, 300.0, band).unwrap();
        let t = invert_temperature(r, 0.7, band).unwrap();
        assert!((t - 300.0).abs() < 1e-3, "t = {t}");
    }

    #[test]
    fn invert_temperature_bracket_error() {
        let band = (9000.0, 11000.0);
        assert!(matches!(
            invert_temperature(1e-300, 1.0, band),
            Err(Error::Numerical(_))
        ));
        assert!(invert_temperature(-1.0, 1.0, band).is_err());
    }
}
