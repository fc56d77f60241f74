//! Synthetic training scenes: smooth random temperature fields, piecewise
//! constant emissivity, and procedural texture cubes, synthesized into
//! radiance cubes so ground-truth temperature/emissivity/texture factors are
//! available for diagnostics.

use crate::cube::{SceneTeX, SpectralCube, WavelengthGrid};
use crate::error::Result;
use crate::physics::tex_synthesize;
use crate::rng::CounterRng;

/// Default working range: 8 bands across the 8-14 um long-wave window, where
/// emission near room temperature dominates.
pub fn default_grid(bands: usize) -> WavelengthGrid {
    WavelengthGrid::linspace(8000.0, 14000.0, bands).expect("valid default grid")
}

/// Bilinear upsampling of a coarse node grid to `h x w`.
fn smooth_field(
    h: usize,
    w: usize,
    coarse: usize,
    lo: f64,
    hi: f64,
    rng: &mut CounterRng,
) -> Vec<f32> {
    let nodes: Vec<f64> = (0..coarse * coarse)
        .map(|_| rng.uniform_in(lo, hi))
        .collect();
    let mut out = vec![0.0f32; h * w];
    for i in 0..h {
        let fy = if h > 1 {
            i as f64 / (h - 1) as f64 * (coarse - 1) as f64
        } else {
            0.0
        };
        let y0 = (fy as usize).min(coarse - 2);
        let ty = fy - y0 as f64;
        for j in 0..w {
            let fx = if w > 1 {
                j as f64 / (w - 1) as f64 * (coarse - 1) as f64
            } else {
                0.0
            };
            let x0 = (fx as usize).min(coarse - 2);
            let tx = fx - x0 as f64;
            let v00 = nodes[y0 * coarse + x0];
            let v01 = nodes[y0 * coarse + x0 + 1];
            let v10 = nodes[(y0 + 1) * coarse + x0];
            let v11 = nodes[(y0 + 1) * coarse + x0 + 1];
            let v = v00 * (1.0 - ty) * (1.0 - tx)
                + v01 * (1.0 - ty) * tx
                + v10 * ty * (1.0 - tx)
                + v11 * ty * tx;
            out[i * w + j] = v as f32;
        }
    }
    out
}

/// Generates one scene and its synthesized radiance cube. Pure in
/// `(h, w, grid, seed)`.
pub fn make_toy_scene(
    h: usize,
    w: usize,
    grid: &WavelengthGrid,
    seed: u64,
) -> Result<(SceneTeX, SpectralCube)> {
    let mut rng = CounterRng::new(seed).substream(0x7359);

    // Smooth temperature field in the room-temperature range.
    let temperature = smooth_field(h, w, 4, 280.0, 330.0, &mut rng);

    // Piecewise-constant emissivity: a base level plus random rectangles.
    let base_e = rng.uniform_in(0.55, 0.85) as f32;
    let mut emissivity = vec![base_e; h * w];
    for _ in 0..4 {
        let e = rng.uniform_in(0.3, 0.95) as f32;
        let ri = rng.below(h);
        let rj = rng.below(w);
        let rh = 1 + rng.below((h / 2).max(1));
        let rw = 1 + rng.below((w / 2).max(1));
        for i in ri..(ri + rh).min(h) {
            for j in rj..(rj + rw).min(w) {
                emissivity[i * w + j] = e;
            }
        }
    }

    // Texture: smooth per-band field modulated by an oriented grating so the
    // environmental term carries structure, scaled to cube-unit magnitudes.
    let c = grid.bands();
    let mut texture = vec![0.0f32; h * w * c];
    let fx = rng.uniform_in(0.5, 2.0);
    let fy = rng.uniform_in(0.5, 2.0);
    let phase0 = rng.uniform_in(0.0, std::f64::consts::TAU);
    for k in 0..c {
        let band_level = rng.uniform_in(0.25, 0.7);
        let smooth = smooth_field(h, w, 3, 0.6, 1.4, &mut rng);
        let phase = phase0 + 0.35 * k as f64;
        for i in 0..h {
            for j in 0..w {
                let s = (std::f64::consts::TAU
                    * (fx * j as f64 / w as f64 + fy * i as f64 / h as f64)
                    + phase)
                    .sin();
                let v = band_level * smooth[i * w + j] as f64 * (1.0 + 0.4 * s);
                texture[(k * h + i) * w + j] = v.max(0.0) as f32;
            }
        }
    }

    let scene = SceneTeX::new(
        temperature,
        emissivity,
        SpectralCube::new(h, w, grid.clone(), texture)?,
    )?;
    let cube = tex_synthesize(&scene, grid)?;
    Ok((scene, cube))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_are_seed_deterministic() {
        let grid = default_grid(4);
        let (_, a) = make_toy_scene(16, 16, &grid, 3).unwrap();
        let (_, b) = make_toy_scene(16, 16, &grid, 3).unwrap();
        assert_eq!(a, b);
        let (_, c) = make_toy_scene(16, 16, &grid, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn scene_values_are_in_training_range() {
        let grid = default_grid(8);
        let (scene, cube) = make_toy_scene(32, 32, &grid, 11).unwrap();
        for &t in scene.temperature() {
            assert!((280.0..=330.0).contains(&t));
        }
        for &e in scene.emissivity() {
            assert!((0.3..=0.95).contains(&e));
        }
        let max = cube.max_value();
        assert!(max > 0.1 && max < 2.0, "cube max {max}");
    }
}
