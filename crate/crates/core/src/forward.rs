//! The dual-camera measurement operator.
//!
//! The CASSI branch modulates each band with the coded aperture, shears band
//! `k` horizontally by `k * step` pixels, and sums over bands onto a single
//! sensor of width `W + step * (C - 1)`. The PAN branch integrates the cube
//! spectrally with per-band response weights. Both are linear in the cube;
//! Gaussian sensor noise is added on top when requested.
//!
//! Summation order is fixed (band-ascending per output pixel), so the
//! noiseless operator is deterministic regardless of caller-side parallelism.

use crate::cube::{CodedAperture, Image2D, PanImage, SpectralCube, WavelengthGrid};
use crate::error::{Error, Result};
use crate::rng::CounterRng;

/// Horizontal shear applied by the dispersive element: band `k` is shifted by
/// `k * step` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DispersionSpec {
    pub step: usize,
}

impl DispersionSpec {
    pub fn new(step: usize) -> Self {
        DispersionSpec { step }
    }

    /// Sensor width for a scene of width `w` with `c` bands.
    pub fn sensor_width(&self, w: usize, c: usize) -> usize {
        w + self.step * c.saturating_sub(1)
    }
}

/// The pair of simultaneous measurements together with the operator
/// parameters that produced them.
#[derive(Debug, Clone)]
pub struct MeasurementPair {
    pub y_cassi: Image2D,
    pub y_pan: Image2D,
    pub mask: CodedAperture,
    pub disp: DispersionSpec,
    pub response: Vec<f64>,
}

/// Flat spectral response (each band weighted `1/C`), the grayscale-camera
/// default.
pub fn flat_response(bands: usize) -> Vec<f64> {
    vec![1.0 / bands as f64; bands]
}

fn check_mask_dims(cube: &SpectralCube, mask: &CodedAperture) -> Result<()> {
    if mask.height() != cube.height() || mask.width() != cube.width() {
        return Err(Error::DimensionMismatch(format!(
            "mask is {}x{} but cube is {}x{}",
            mask.height(),
            mask.width(),
            cube.height(),
            cube.width()
        )));
    }
    Ok(())
}

/// CASSI branch: mask, then shear, then sum over bands. Output pixel
/// `(i, j)` accumulates `mask[i, j - k*step] * cube[i, j - k*step, k]` over
/// every band `k` whose shifted column lands on `j`. Noiseless.
pub fn cassi_measure(
    cube: &SpectralCube,
    mask: &CodedAperture,
    disp: DispersionSpec,
) -> Result<Image2D> {
    check_mask_dims(cube, mask)?;
    let (h, w, c) = (cube.height(), cube.width(), cube.bands());
    let w_out = disp.sensor_width(w, c);
    let mut out = vec![0.0f32; h * w_out];
    for k in 0..c {
        let shift = k * disp.step;
        let band = cube.band(k);
        for i in 0..h {
            let row_in = &band[i * w..(i + 1) * w];
            let row_out = &mut out[i * w_out + shift..i * w_out + shift + w];
            for j in 0..w {
                row_out[j] += mask.at(i, j) * row_in[j];
            }
        }
    }
    Image2D::new(h, w_out, out)
}

/// PAN branch: per-pixel dot product of the spectrum with `response`.
/// Noiseless; weights must be non-negative and match the band count.
pub fn pan_measure(cube: &SpectralCube, response: &[f64]) -> Result<PanImage> {
    if response.len() != cube.bands() {
        return Err(Error::DimensionMismatch(format!(
            "response has {} weights but cube has {} bands",
            response.len(),
            cube.bands()
        )));
    }
    if response.iter().any(|&r| !r.is_finite() || r < 0.0) {
        return Err(Error::InvalidArgument(
            "response weights must be finite and >= 0".into(),
        ));
    }
    let (h, w, c) = (cube.height(), cube.width(), cube.bands());
    let mut out = vec![0.0f64; h * w];
    for k in 0..c {
        let band = cube.band(k);
        let r = response[k];
        for (o, &v) in out.iter_mut().zip(band) {
            *o += r * v as f64;
        }
    }
    PanImage::new(h, w, out.into_iter().map(|v| v as f32).collect())
}

/// Full dual-camera acquisition: both branches plus i.i.d. Gaussian noise of
/// standard deviation `noise_sigma`, drawn from the counter-based stream of
/// `seed` (CASSI pixels first, then PAN). Reproducible per seed.
pub fn dcchi_measure(
    cube: &SpectralCube,
    mask: &CodedAperture,
    disp: DispersionSpec,
    response: &[f64],
    noise_sigma: f64,
    seed: u64,
) -> Result<MeasurementPair> {
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise_sigma = {noise_sigma} must be finite and >= 0"
        )));
    }
    let clean_cassi = cassi_measure(cube, mask, disp)?;
    let clean_pan = pan_measure(cube, response)?;

    let (y_cassi, y_pan) = if noise_sigma == 0.0 {
        (clean_cassi, clean_pan.into_image())
    } else {
        let mut rng = CounterRng::new(seed);
        let mut noisy = |img: &Image2D| -> Result<Image2D> {
            let data = img
                .data()
                .iter()
                .map(|&v| v + (noise_sigma * rng.gaussian()) as f32)
                .collect();
            Image2D::new(img.height(), img.width(), data)
        };
        let yc = noisy(&clean_cassi)?;
        let yp = noisy(clean_pan.as_image())?;
        (yc, yp)
    };

    Ok(MeasurementPair {
        y_cassi,
        y_pan,
        mask: mask.clone(),
        disp,
        response: response.to_vec(),
    })
}

/// Transpose of [`cassi_measure`]: shift-back initialization
/// `cube[i, j, k] = mask[i, j] * y[i, j + k*step]`.
pub fn cassi_adjoint(
    y: &Image2D,
    mask: &CodedAperture,
    disp: DispersionSpec,
    grid: &WavelengthGrid,
) -> Result<SpectralCube> {
    let (h, w, c) = (mask.height(), mask.width(), grid.bands());
    if y.height() != h || y.width() != disp.sensor_width(w, c) {
        return Err(Error::DimensionMismatch(format!(
            "measurement is {}x{} but mask/dispersion imply {}x{}",
            y.height(),
            y.width(),
            h,
            disp.sensor_width(w, c)
        )));
    }
    let mut data = vec![0.0f32; h * w * c];
    for k in 0..c {
        let shift = k * disp.step;
        for i in 0..h {
            for j in 0..w {
                data[(k * h + i) * w + j] = mask.at(i, j) * y.at(i, j + shift);
            }
        }
    }
    SpectralCube::new_allow_negative(h, w, grid.clone(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::make_random_mask;

    fn ones_mask(h: usize, w: usize) -> CodedAperture {
        CodedAperture::new(h, w, vec![1.0; h * w]).unwrap()
    }

    fn random_cube(h: usize, w: usize, c: usize, seed: u64) -> SpectralCube {
        let grid = WavelengthGrid::linspace(8000.0, 14000.0, c).unwrap();
        let mut rng = CounterRng::new(seed);
        let data = (0..h * w * c).map(|_| rng.uniform() as f32).collect();
        SpectralCube::new(h, w, grid, data).unwrap()
    }

    #[test]
    fn single_band_identity() {
        let grid = WavelengthGrid::new(vec![10000.0]).unwrap();
        let data: Vec<f32> = (0..12).map(|i| i as f32).collect();
        let cube = SpectralCube::new(3, 4, grid, data.clone()).unwrap();
        let y = cassi_measure(&cube, &ones_mask(3, 4), DispersionSpec::new(0)).unwrap();
        assert_eq!(y.data(), &data[..]);
    }

    #[test]
    fn zero_mask_zero_measurement() {
        let cube = random_cube(4, 4, 3, 5);
        let mask = CodedAperture::new(4, 4, vec![0.0; 16]).unwrap();
        let y = cassi_measure(&cube, &mask, DispersionSpec::new(1)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cassi_output_width() {
        let cube = random_cube(4, 6, 3, 7);
        let y = cassi_measure(&cube, &ones_mask(4, 6), DispersionSpec::new(2)).unwrap();
        assert_eq!(y.width(), 6 + 2 * 2);
        assert_eq!(y.height(), 4);
    }

    #[test]
    fn cassi_mask_dim_mismatch() {
        let cube = random_cube(4, 4, 2, 1);
        let mask = ones_mask(3, 4);
        assert!(cassi_measure(&cube, &mask, DispersionSpec::new(1)).is_err());
    }

    #[test]
    fn pan_uniform_response_is_band_mean() {
        let cube = random_cube(5, 5, 4, 9);
        let y = pan_measure(&cube, &flat_response(4)).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let mean: f32 =
                    (0..4).map(|k| cube.at(i, j, k)).sum::<f32>() / 4.0;
                assert!((y.at(i, j) - mean).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn pan_one_hot_selects_band() {
        let cube = random_cube(4, 4, 3, 11);
        let mut resp = vec![0.0; 3];
        resp[2] = 1.0;
        let y = pan_measure(&cube, &resp).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((y.at(i, j) - cube.at(i, j, 2)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn pan_rejects_wrong_length() {
        let cube = random_cube(4, 4, 3, 2);
        assert!(pan_measure(&cube, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn noiseless_pair_equals_branches() {
        let cube = random_cube(6, 6, 4, 13);
        let mask = make_random_mask(6, 6, 0.5, 3).unwrap();
        let disp = DispersionSpec::new(1);
        let resp = flat_response(4);
        let pair = dcchi_measure(&cube, &mask, disp, &resp, 0.0, 77).unwrap();
        assert_eq!(pair.y_cassi, cassi_measure(&cube, &mask, disp).unwrap());
        assert_eq!(&pair.y_pan, pan_measure(&cube, &resp).unwrap().as_image());
    }

    #[test]
    fn noisy_pair_is_seed_reproducible() {
        let cube = random_cube(6, 6, 4, 13);
        let mask = make_random_mask(6, 6, 0.5, 3).unwrap();
        let disp = DispersionSpec::new(1);
        let resp = flat_response(4);
        let a = dcchi_measure(&cube, &mask, disp, &resp, 0.1, 42).unwrap();
        let b = dcchi_measure(&cube, &mask, disp, &resp, 0.1, 42).unwrap();
        assert_eq!(a.y_cassi, b.y_cassi);
        assert_eq!(a.y_pan, b.y_pan);
        let c = dcchi_measure(&cube, &mask, disp, &resp, 0.1, 43).unwrap();
        assert_ne!(a.y_cassi, c.y_cassi);
    }

    #[test]
    fn empirical_noise_std_matches_sigma() {
        let cube = random_cube(64, 64, 2, 21);
        let mask = make_random_mask(64, 64, 0.5, 4).unwrap();
        let disp = DispersionSpec::new(1);
        let resp = flat_response(2);
        let clean_c = cassi_measure(&cube, &mask, disp).unwrap();
        let clean_p = pan_measure(&cube, &resp).unwrap();
        let noisy = dcchi_measure(&cube, &mask, disp, &resp, 0.1, 7).unwrap();

        let mut diffs: Vec<f64> = Vec::new();
        for (n, c) in noisy.y_cassi.data().iter().zip(clean_c.data()) {
            diffs.push((*n - *c) as f64);
        }
        for (n, c) in noisy.y_pan.data().iter().zip(clean_p.data()) {
            diffs.push((*n - *c) as f64);
        }
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>()
            / diffs.len() as f64;
        let std = var.sqrt();
        assert!((std - 0.1).abs() < 0.01, "empirical std {std}");
    }

    #[test]
    fn adjoint_zero_mask_gives_zero_cube() {
        let grid = WavelengthGrid::linspace(8000.0, 14000.0, 3).unwrap();
        let y = Image2D::new(4, 6, vec![1.0; 24]).unwrap();
        let mask = CodedAperture::new(4, 4, vec![0.0; 16]).unwrap();
        let cube = cassi_adjoint(&y, &mask, DispersionSpec::new(1), &grid).unwrap();
        assert!(cube.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_single_band_identity() {
        let grid = WavelengthGrid::new(vec![10000.0]).unwrap();
        let y = Image2D::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mask = ones_mask(2, 3);
        let cube = cassi_adjoint(&y, &mask, DispersionSpec::new(0), &grid).unwrap();
        assert_eq!(cube.data(), y.data());
    }

    #[test]
    fn adjoint_dim_mismatch() {
        let grid = WavelengthGrid::linspace(8000.0, 14000.0, 3).unwrap();
        let y = Image2D::new(4, 5, vec![0.0; 20]).unwrap();
        let mask = ones_mask(4, 4);
        assert!(cassi_adjoint(&y, &mask, DispersionSpec::new(1), &grid).is_err());
    }
}
