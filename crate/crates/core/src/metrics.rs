//! Reconstruction quality metrics: PSNR, windowed SSIM, and per-pixel
//! residual maps.

use crate::cube::SpectralCube;
use crate::error::{Error, Result};

/// Per-band and aggregate quality of a reconstruction against ground truth.
#[derive(Debug, Clone)]
pub struct QualityReport {
    pub psnr_per_band: Vec<f64>,
    pub psnr_mean: f64,
    pub ssim_per_band: Vec<f64>,
    pub ssim_mean: f64,
    /// H*W band-mean squared error map.
    pub residual: Vec<f64>,
}

fn check_same_shape(pred: &SpectralCube, truth: &SpectralCube) -> Result<()> {
    if pred.height() != truth.height()
        || pred.width() != truth.width()
        || pred.bands() != truth.bands()
    {
        return Err(Error::DimensionMismatch(format!(
            "prediction {}x{}x{} vs truth {}x{}x{}",
            pred.height(),
            pred.width(),
            pred.bands(),
            truth.height(),
            truth.width(),
            truth.bands()
        )));
    }
    Ok(())
}

fn mse(pred: &[f32], truth: &[f32]) -> f64 {
    let n = pred.len() as f64;
    pred.iter()
        .zip(truth)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum::<f64>()
        / n
}

/// Peak signal-to-noise ratio in dB: `10 log10(peak^2 / MSE)`. A perfect
/// match (MSE = 0) returns `f64::INFINITY`.
pub fn psnr(pred: &[f32], truth: &[f32], peak: f64) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "psnr inputs have {} vs {} samples",
            pred.len(),
            truth.len()
        )));
    }
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::InvalidArgument(format!("peak {peak} must be > 0")));
    }
    let m = mse(pred, truth);
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / m).log10())
}

/// PSNR over a whole cube.
pub fn psnr_cube(pred: &SpectralCube, truth: &SpectralCube, peak: f64) -> Result<f64> {
    check_same_shape(pred, truth)?;
    psnr(pred.data(), truth.data(), peak)
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let center = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - center;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in w.iter_mut() {
        *v /= sum;
    }
    w
}

/// Structural similarity over one band: 11x11 Gaussian window (sigma 1.5),
/// `C1 = (K1 peak)^2`, `C2 = (K2 peak)^2`, averaged over all valid window
/// positions. Separable filtering keeps it O(H W k).
pub fn ssim(pred: &[f32], truth: &[f32], height: usize, width: usize, peak: f64) -> Result<f64> {
    if pred.len() != height * width || truth.len() != height * width {
        return Err(Error::DimensionMismatch(
            "ssim inputs do not match the stated dimensions".into(),
        ));
    }
    if height < SSIM_WINDOW || width < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "image {height}x{width} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::InvalidArgument(format!("peak {peak} must be > 0")));
    }
    let window = gaussian_window();
    let c1 = (SSIM_K1 * peak) * (SSIM_K1 * peak);
    let c2 = (SSIM_K2 * peak) * (SSIM_K2 * peak);

    // Five filtered moment images: x, y, x^2, y^2, xy.
    let to_f64 = |s: &[f32]| -> Vec<f64> { s.iter().map(|&v| v as f64).collect() };
    let x = to_f64(pred);
    let y = to_f64(truth);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();

    let filt = |img: &[f64]| separable_filter(img, height, width, &window);
    let mu_x = filt(&x);
    let mu_y = filt(&y);
    let m_xx = filt(&xx);
    let m_yy = filt(&yy);
    let m_xy = filt(&xy);

    let mut total = 0.0;
    for i in 0..mu_x.len() {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let var_x = m_xx[i] - mx * mx;
        let var_y = m_yy[i] - my * my;
        let cov = m_xy[i] - mx * my;
        let s = ((2.0 * mx * my + c1) * (2.0 * cov + c2))
            / ((mx * mx + my * my + c1) * (var_x + var_y + c2));
        total += s;
    }
    Ok(total / mu_x.len() as f64)
}

/// Valid-region separable Gaussian filter: output is
/// `(H - k + 1) x (W - k + 1)`.
fn separable_filter(img: &[f64], height: usize, width: usize, window: &[f64]) -> Vec<f64> {
    let k = window.len();
    let wo = width - k + 1;
    let ho = height - k + 1;
    // horizontal pass
    let mut tmp = vec![0.0; height * wo];
    for i in 0..height {
        for j in 0..wo {
            let mut acc = 0.0;
            for (t, &wv) in window.iter().enumerate() {
                acc += wv * img[i * width + j + t];
            }
            tmp[i * wo + j] = acc;
        }
    }
    // vertical pass
    let mut out = vec![0.0; ho * wo];
    for i in 0..ho {
        for j in 0..wo {
            let mut acc = 0.0;
            for (t, &wv) in window.iter().enumerate() {
                acc += wv * tmp[(i + t) * wo + j];
            }
            out[i * wo + j] = acc;
        }
    }
    out
}

/// Band-averaged SSIM over a cube.
pub fn ssim_cube(pred: &SpectralCube, truth: &SpectralCube, peak: f64) -> Result<f64> {
    check_same_shape(pred, truth)?;
    let mut total = 0.0;
    for k in 0..pred.bands() {
        total += ssim(
            pred.band(k),
            truth.band(k),
            pred.height(),
            pred.width(),
            peak,
        )?;
    }
    Ok(total / pred.bands() as f64)
}

/// Per-pixel band-mean squared error, an H*W row-major map.
pub fn residual_map(pred: &SpectralCube, truth: &SpectralCube) -> Result<Vec<f64>> {
    check_same_shape(pred, truth)?;
    let hw = pred.height() * pred.width();
    let mut out = vec![0.0; hw];
    for k in 0..pred.bands() {
        let (pb, tb) = (pred.band(k), truth.band(k));
        for p in 0..hw {
            let d = pb[p] as f64 - tb[p] as f64;
            out[p] += d * d;
        }
    }
    let c = pred.bands() as f64;
    for v in out.iter_mut() {
        *v /= c;
    }
    Ok(out)
}

/// Full per-band report. `peak` defaults to the truth cube's maximum when
/// `None`.
pub fn quality_report(
    pred: &SpectralCube,
    truth: &SpectralCube,
    peak: Option<f64>,
) -> Result<QualityReport> {
    check_same_shape(pred, truth)?;
    let peak = match peak {
        Some(p) => p,
        None => truth.max_value() as f64,
    };
    let mut psnr_per_band = Vec::with_capacity(pred.bands());
    let mut ssim_per_band = Vec::with_capacity(pred.bands());
    for k in 0..pred.bands() {
        psnr_per_band.push(psnr(pred.band(k), truth.band(k), peak)?);
        ssim_per_band.push(ssim(
            pred.band(k),
            truth.band(k),
            pred.height(),
            pred.width(),
            peak,
        )?);
    }
    let psnr_mean = psnr_per_band.iter().sum::<f64>() / psnr_per_band.len() as f64;
    let ssim_mean = ssim_per_band.iter().sum::<f64>() / ssim_per_band.len() as f64;
    Ok(QualityReport {
        psnr_per_band,
        psnr_mean,
        ssim_per_band,
        ssim_mean,
        residual: residual_map(pred, truth)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::WavelengthGrid;
    use crate::rng::CounterRng;

    #[test]
    fn psnr_hand_case() {
        // peak = 1, MSE = 0.01 -> 20 dB: alternate +/-0.1 errors
        let truth = vec![0.5f32; 100];
        let pred: Vec<f32> = (0..100)
            .map(|i| if i % 2 == 0 { 0.6 } else { 0.4 })
            .collect();
        let db = psnr(&pred, &truth, 1.0).unwrap();
        assert!((db - 20.0).abs() < 1e-9, "psnr {db}");
    }

    #[test]
    fn psnr_identical_is_infinite() {
        let v = vec![0.25f32; 64];
        assert!(psnr(&v, &v, 1.0).unwrap().is_infinite());
    }

    #[test]
    fn psnr_shift_detection() {
        // pred = truth + c has MSE exactly c^2
        let truth = vec![0.5f32; 256];
        let pred: Vec<f32> = truth.iter().map(|v| v + 0.25).collect();
        let db = psnr(&pred, &truth, 1.0).unwrap();
        let expect = 10.0 * (1.0 / (0.25f64 * 0.25)).log10();
        assert!((db - expect).abs() < 1e-6);
    }

    #[test]
    fn ssim_identity_is_one() {
        let mut rng = CounterRng::new(5);
        let img: Vec<f32> = (0..32 * 32).map(|_| rng.uniform() as f32).collect();
        let s = ssim(&img, &img, 32, 32, 1.0).unwrap();
        assert!((s - 1.0).abs() < 1e-12, "ssim {s}");
    }

    #[test]
    fn ssim_symmetry() {
        let mut rng = CounterRng::new(9);
        let a: Vec<f32> = (0..24 * 20).map(|_| rng.uniform() as f32).collect();
        let b: Vec<f32> = (0..24 * 20).map(|_| rng.uniform() as f32).collect();
        let s1 = ssim(&a, &b, 24, 20, 1.0).unwrap();
        let s2 = ssim(&b, &a, 24, 20, 1.0).unwrap();
        assert!((s1 - s2).abs() < 1e-12);
    }

    #[test]
    fn ssim_constant_images_closed_form() {
        // zero variances: SSIM = (2 mx my + C1) / (mx^2 + my^2 + C1)
        let a = vec![0.3f32; 16 * 16];
        let b = vec![0.7f32; 16 * 16];
        let got = ssim(&a, &b, 16, 16, 1.0).unwrap();
        let c1 = 0.01f64 * 0.01;
        let expect = (2.0 * 0.3 * 0.7 + c1) / (0.3f64 * 0.3 + 0.7 * 0.7 + c1);
        assert!((got - expect).abs() < 1e-9, "{got} vs {expect}");
    }

    #[test]
    fn ssim_too_small_image_rejected() {
        let a = vec![0.0f32; 100];
        assert!(ssim(&a, &a, 10, 10, 1.0).is_err());
    }

    #[test]
    fn residual_map_localizes_errors() {
        let grid = WavelengthGrid::linspace(8000.0, 14000.0, 3).unwrap();
        let truth = SpectralCube::zeros(4, 4, grid.clone());
        let mut data = vec![0.0f32; 48];
        data[(1 * 4 + 2) * 4 + 3] = 0.6; // band 1, row 2, col 3
        let pred = SpectralCube::new(4, 4, grid, data).unwrap();
        let map = residual_map(&pred, &truth).unwrap();
        for (p, &v) in map.iter().enumerate() {
            if p == 2 * 4 + 3 {
                assert!((v - 0.36 / 3.0).abs() < 1e-6);
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn report_uses_truth_peak_by_default() {
        let grid = WavelengthGrid::linspace(8000.0, 14000.0, 2).unwrap();
        let mut rng = CounterRng::new(3);
        let truth_data: Vec<f32> = (0..2 * 16 * 16).map(|_| rng.uniform() as f32).collect();
        let pred_data: Vec<f32> = truth_data
            .iter()
            .map(|v| (v + 0.01 * rng.uniform() as f32).min(1.0))
            .collect();
        let truth = SpectralCube::new(16, 16, grid.clone(), truth_data).unwrap();
        let pred = SpectralCube::new(16, 16, grid, pred_data).unwrap();
        let report = quality_report(&pred, &truth, None).unwrap();
        assert_eq!(report.psnr_per_band.len(), 2);
        assert!(report.psnr_mean > 20.0);
        assert!(report.ssim_mean > 0.8 && report.ssim_mean <= 1.0);
    }
}
