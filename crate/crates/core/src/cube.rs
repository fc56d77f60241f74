//! Core spectral data types: wavelength grids, radiance cubes, grayscale
//! images, coded apertures, and temperature/emissivity/texture scenes.
//!
//! All types validate their invariants at construction and are immutable
//! afterwards, so they can be shared freely across threads.

use crate::error::{Error, Result};
use crate::rng::CounterRng;

/// Ordered wavelength samples in nanometers. One entry per spectral band.
#[derive(Debug, Clone, PartialEq)]
pub struct WavelengthGrid {
    values: Vec<f64>,
}

impl WavelengthGrid {
    /// Builds a grid from strictly increasing, positive wavelengths.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("wavelength grid is empty".into()));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "wavelength[{i}] = {v} must be finite and > 0"
                )));
            }
            if i > 0 && values[i - 1] >= v {
                return Err(Error::InvalidArgument(format!(
                    "wavelengths must be strictly increasing; values[{}]={} >= values[{}]={}",
                    i - 1,
                    values[i - 1],
                    i,
                    v
                )));
            }
        }
        Ok(WavelengthGrid { values })
    }

    /// Evenly spaced grid of `bands` centers covering `[lo_nm, hi_nm]`.
    pub fn linspace(lo_nm: f64, hi_nm: f64, bands: usize) -> Result<Self> {
        if bands == 0 {
            return Err(Error::InvalidArgument("bands must be > 0".into()));
        }
        if bands == 1 {
            return WavelengthGrid::new(vec![0.5 * (lo_nm + hi_nm)]);
        }
        let step = (hi_nm - lo_nm) / (bands - 1) as f64;
        WavelengthGrid::new((0..bands).map(|k| lo_nm + k as f64 * step).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of bands C.
    pub fn bands(&self) -> usize {
        self.values.len()
    }

    /// Band edges in nanometers: midpoints between consecutive centers, with
    /// the two outer edges mirrored symmetrically. Needs at least two bands.
    pub fn band_edges(&self) -> Result<Vec<f64>> {
        let v = &self.values;
        if v.len() < 2 {
            return Err(Error::InvalidArgument(
                "band edges need at least two wavelengths".into(),
            ));
        }
        let mut edges = Vec::with_capacity(v.len() + 1);
        edges.push(v[0] - 0.5 * (v[1] - v[0]));
        for i in 1..v.len() {
            edges.push(0.5 * (v[i - 1] + v[i]));
        }
        edges.push(v[v.len() - 1] + 0.5 * (v[v.len() - 1] - v[v.len() - 2]));
        if edges[0] <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "lowest band edge {} nm is not positive",
                edges[0]
            )));
        }
        Ok(edges)
    }
}

/// H x W x C radiance cube. Data is stored band-major (band varies slowest):
/// `data[(k*H + i)*W + j]` is row `i`, column `j`, band `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCube {
    height: usize,
    width: usize,
    data: Vec<f32>,
    grid: WavelengthGrid,
}

impl SpectralCube {
    /// Builds a cube from band-major samples. All values must be finite and
    /// non-negative, and `data.len()` must equal `H * W * C`.
    pub fn new(height: usize, width: usize, grid: WavelengthGrid, data: Vec<f32>) -> Result<Self> {
        let expect = height * width * grid.bands();
        if data.len() != expect {
            return Err(Error::DimensionMismatch(format!(
                "cube data has {} samples, expected {}x{}x{} = {}",
                data.len(),
                height,
                width,
                grid.bands(),
                expect
            )));
        }
        for &v in &data {
            if !v.is_finite() {
                return Err(Error::NonFinite("spectral cube"));
            }
            if v < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "cube radiance {v} is negative"
                )));
            }
        }
        Ok(SpectralCube {
            height,
            width,
            data,
            grid,
        })
    }

    /// All-zero cube.
    pub fn zeros(height: usize, width: usize, grid: WavelengthGrid) -> Self {
        let n = height * width * grid.bands();
        SpectralCube {
            height,
            width,
            data: vec![0.0; n],
            grid,
        }
    }

    /// Like [`SpectralCube::new`] but permits negative samples. Adjoint lifts
    /// of noisy measurements can legitimately dip below zero; finiteness is
    /// still enforced.
    pub fn new_allow_negative(
        height: usize,
        width: usize,
        grid: WavelengthGrid,
        data: Vec<f32>,
    ) -> Result<Self> {
        let expect = height * width * grid.bands();
        if data.len() != expect {
            return Err(Error::DimensionMismatch(format!(
                "cube data has {} samples, expected {expect}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spectral cube"));
        }
        Ok(SpectralCube {
            height,
            width,
            data,
            grid,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.grid.bands()
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    /// Band-major raw samples.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize, band: usize) -> f32 {
        self.data[(band * self.height + row) * self.width + col]
    }

    /// One full band as an H*W slice (row-major).
    pub fn band(&self, band: usize) -> &[f32] {
        let hw = self.height * self.width;
        &self.data[band * hw..(band + 1) * hw]
    }

    pub fn max_value(&self) -> f32 {
        self.data.iter().copied().fold(0.0, f32::max)
    }
}

/// Plain 2-D grayscale image with finite samples. Used for raw measurements,
/// which may be negative once noise is added.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2D {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image2D {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "image data has {} samples, expected {}x{}",
                data.len(),
                height,
                width
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image"));
        }
        Ok(Image2D {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Image2D {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }
}

/// Panchromatic (grayscale) image: finite and non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct PanImage {
    inner: Image2D,
}

impl PanImage {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        let inner = Image2D::new(height, width, data)?;
        if inner.data.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidArgument(
                "PAN image contains negative samples".into(),
            ));
        }
        Ok(PanImage { inner })
    }

    pub fn height(&self) -> usize {
        self.inner.height
    }

    pub fn width(&self) -> usize {
        self.inner.width
    }

    pub fn data(&self) -> &[f32] {
        &self.inner.data
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.inner.at(row, col)
    }

    pub fn as_image(&self) -> &Image2D {
        &self.inner
    }

    pub fn into_image(self) -> Image2D {
        self.inner
    }
}

/// Coded aperture mask with transmittance values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedAperture {
    height: usize,
    width: usize,
    mask: Vec<f32>,
}

impl CodedAperture {
    pub fn new(height: usize, width: usize, mask: Vec<f32>) -> Result<Self> {
        if mask.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "mask has {} cells, expected {}x{}",
                mask.len(),
                height,
                width
            )));
        }
        for &v in &mask {
            if !v.is_finite() {
                return Err(Error::NonFinite("coded aperture"));
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!(
                    "mask value {v} outside [0, 1]"
                )));
            }
        }
        Ok(CodedAperture {
            height,
            width,
            mask,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn mask(&self) -> &[f32] {
        &self.mask
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.mask[row * self.width + col]
    }

    /// True when every cell is exactly 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.mask.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Fraction of fully transmissive cells.
    pub fn fill_fraction(&self) -> f64 {
        self.mask.iter().map(|&v| v as f64).sum::<f64>() / self.mask.len() as f64
    }
}

/// Random binary coded aperture: each cell is an independent Bernoulli(p)
/// draw from the counter-based stream of `seed`. Pure in (H, W, p, seed).
pub fn make_random_mask(
    height: usize,
    width: usize,
    transmittance: f64,
    seed: u64,
) -> Result<CodedAperture> {
    if !(transmittance > 0.0 && transmittance < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "transmittance p = {transmittance} must lie in (0, 1)"
        )));
    }
    let mut rng = CounterRng::new(seed);
    let mask = (0..height * width)
        .map(|_| if rng.uniform() < transmittance { 1.0 } else { 0.0 })
        .collect();
    CodedAperture::new(height, width, mask)
}

/// Per-pixel temperature (Kelvin), wavelength-constant emissivity in `[0, 1]`,
/// and an environmental-texture cube in the same units as [`SpectralCube`].
#[derive(Debug, Clone)]
pub struct SceneTeX {
    temperature: Vec<f32>,
    emissivity: Vec<f32>,
    texture: SpectralCube,
}

impl SceneTeX {
    pub fn new(temperature: Vec<f32>, emissivity: Vec<f32>, texture: SpectralCube) -> Result<Self> {
        let hw = texture.height() * texture.width();
        if temperature.len() != hw || emissivity.len() != hw {
            return Err(Error::DimensionMismatch(format!(
                "temperature ({}) and emissivity ({}) maps must both have {} pixels",
                temperature.len(),
                emissivity.len(),
                hw
            )));
        }
        for &t in &temperature {
            if !t.is_finite() || t <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "temperature {t} K must be finite and > 0"
                )));
            }
        }
        for &e in &emissivity {
            if !e.is_finite() || !(0.0..=1.0).contains(&e) {
                return Err(Error::InvalidArgument(format!(
                    "emissivity {e} outside [0, 1]"
                )));
            }
        }
        Ok(SceneTeX {
            temperature,
            emissivity,
            texture,
        })
    }

    pub fn height(&self) -> usize {
        self.texture.height()
    }

    pub fn width(&self) -> usize {
        self.texture.width()
    }

    pub fn temperature(&self) -> &[f32] {
        &self.temperature
    }

    pub fn emissivity(&self) -> &[f32] {
        &self.emissivity
    }

    pub fn texture(&self) -> &SpectralCube {
        &self.texture
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid3() -> WavelengthGrid {
        WavelengthGrid::new(vec![450.0, 550.0, 650.0]).unwrap()
    }

    #[test]
    fn grid_rejects_non_increasing() {
        assert!(WavelengthGrid::new(vec![500.0, 500.0]).is_err());
        assert!(WavelengthGrid::new(vec![500.0, 450.0]).is_err());
        assert!(WavelengthGrid::new(vec![-1.0, 450.0]).is_err());
        assert!(WavelengthGrid::new(vec![]).is_err());
    }

    #[test]
    fn band_edges_are_midpoints_with_mirrored_ends() {
        let edges = grid3().band_edges().unwrap();
        assert_eq!(edges, vec![400.0, 500.0, 600.0, 700.0]);
    }

    #[test]
    fn cube_rejects_nan_and_negative() {
        let g = grid3();
        assert!(SpectralCube::new(1, 1, g.clone(), vec![0.0, f32::NAN, 0.0]).is_err());
        assert!(SpectralCube::new(1, 1, g.clone(), vec![0.0, -1.0, 0.0]).is_err());
        assert!(SpectralCube::new(1, 1, g, vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn cube_indexing_is_band_major() {
        let g = WavelengthGrid::new(vec![500.0, 600.0]).unwrap();
        // band 0: [[1,2],[3,4]]  band 1: [[5,6],[7,8]]
        let c = SpectralCube::new(2, 2, g, vec![1., 2., 3., 4., 5., 6., 7., 8.]).unwrap();
        assert_eq!(c.at(0, 1, 0), 2.0);
        assert_eq!(c.at(1, 0, 1), 7.0);
        assert_eq!(c.band(1), &[5., 6., 7., 8.]);
    }

    #[test]
    fn mask_is_deterministic_per_seed() {
        let a = make_random_mask(16, 16, 0.5, 99).unwrap();
        let b = make_random_mask(16, 16, 0.5, 99).unwrap();
        assert_eq!(a, b);
        let c = make_random_mask(16, 16, 0.5, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn mask_fill_fraction_tracks_p() {
        let m = make_random_mask(256, 256, 0.5, 1).unwrap();
        assert!(m.is_binary());
        let f = m.fill_fraction();
        assert!((f - 0.5).abs() < 0.02, "fill fraction {f}");
    }

    #[test]
    fn mask_near_one_transmittance() {
        let m = make_random_mask(64, 64, 0.999, 2).unwrap();
        assert!(m.fill_fraction() >= 0.98);
    }

    #[test]
    fn mask_rejects_bad_p() {
        assert!(make_random_mask(4, 4, 0.0, 0).is_err());
        assert!(make_random_mask(4, 4, 1.0, 0).is_err());
        assert!(make_random_mask(4, 4, -0.5, 0).is_err());
    }

    #[test]
    fn pan_rejects_negative() {
        assert!(PanImage::new(1, 2, vec![0.0, -0.5]).is_err());
        assert!(PanImage::new(1, 2, vec![0.0, 0.5]).is_ok());
    }

    #[test]
    fn scene_invariants() {
        let g = grid3();
        let tex = SpectralCube::zeros(2, 2, g);
        assert!(SceneTeX::new(vec![300.0; 4], vec![0.5; 4], tex.clone()).is_ok());
        assert!(SceneTeX::new(vec![0.0, 300.0, 300.0, 300.0], vec![0.5; 4], tex.clone()).is_err());
        assert!(SceneTeX::new(vec![300.0; 4], vec![1.5, 0.5, 0.5, 0.5], tex).is_err());
    }
}
