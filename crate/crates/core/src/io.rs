//! Bit-exact file formats.
//!
//! Cubes use the HSC1 container: magic `HSC1`, little-endian `u32` H, W, C,
//! then C `f64` wavelengths in nanometers, then `H*W*C` `f32` samples in
//! band-major order (band varies slowest). Grayscale images use binary PGM
//! (P5, maxval 65535, big-endian samples) plus a `<path>.scale` sidecar text
//! file recording the float quantization: `scale=<f64>` and, only when the
//! image has negative samples, `offset=<f64>`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::cube::{Image2D, PanImage, SpectralCube, WavelengthGrid};
use crate::error::{Error, Result};

const HSC1_MAGIC: &[u8; 4] = b"HSC1";
const PGM_MAXVAL: u32 = 65535;

/// Writes `cube` in the HSC1 layout. Deterministic: equal cubes produce
/// byte-identical files.
pub fn save_cube(cube: &SpectralCube, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);

    w.write_all(HSC1_MAGIC).map_err(io_err)?;
    for dim in [cube.height(), cube.width(), cube.bands()] {
        w.write_all(&(dim as u32).to_le_bytes()).map_err(io_err)?;
    }
    for &nm in cube.grid().values() {
        w.write_all(&nm.to_le_bytes()).map_err(io_err)?;
    }
    for &v in cube.data() {
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Reads an HSC1 cube, reporting the byte offset of any malformed field.
pub fn load_cube(path: impl AsRef<Path>) -> Result<SpectralCube> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Tracked::new(BufReader::new(file));

    let mut magic = [0u8; 4];
    r.read_at(path, &mut magic, "magic")?;
    if &magic != HSC1_MAGIC {
        return Err(Error::format(path, format!("bad magic {magic:?}"), 0));
    }

    let h = r.read_u32(path, "height")? as usize;
    let w = r.read_u32(path, "width")? as usize;
    let c = r.read_u32(path, "bands")? as usize;

    let grid_offset = r.offset;
    let mut wavelengths = Vec::with_capacity(c);
    for i in 0..c {
        let nm = r.read_f64(path, "wavelength")?;
        if i > 0 && wavelengths[i - 1] >= nm {
            return Err(Error::format(
                path,
                format!("wavelength grid not strictly increasing at band {i}"),
                grid_offset + 8 * i as u64,
            ));
        }
        wavelengths.push(nm);
    }
    let grid = WavelengthGrid::new(wavelengths)
        .map_err(|e| Error::format(path, e.to_string(), grid_offset))?;

    let n = h * w * c;
    let data_offset = r.offset;
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(r.read_f32(path, "sample")?);
    }
    SpectralCube::new(h, w, grid, data).map_err(|e| Error::format(path, e.to_string(), data_offset))
}

/// Writes a grayscale image as 16-bit PGM plus a quantization sidecar.
///
/// Samples are quantized as `round((v - offset) / scale * 65535)` where
/// `offset = min(v, 0)` and `scale = max(v) - offset`; the absolute round-trip
/// error is at most `scale / 65535`.
pub fn save_image(img: &Image2D, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let min = img.data().iter().copied().fold(f32::INFINITY, f32::min) as f64;
    let max = img.data().iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let (min, max) = if img.data().is_empty() { (0.0, 0.0) } else { (min, max) };
    let offset = if min < 0.0 { min } else { 0.0 };
    let scale = (max - offset).max(0.0);

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    write!(w, "P5\n{} {}\n{}\n", img.width(), img.height(), PGM_MAXVAL).map_err(io_err)?;
    for &v in img.data() {
        let q = if scale > 0.0 {
            (((v as f64 - offset) / scale) * PGM_MAXVAL as f64).round() as u16
        } else {
            0
        };
        w.write_all(&q.to_be_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;

    let sidecar = sidecar_path(path);
    let mut s = File::create(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    if offset != 0.0 {
        write!(s, "scale={scale}\noffset={offset}\n").map_err(|e| Error::io(&sidecar, e))
    } else {
        write!(s, "scale={scale}\n").map_err(|e| Error::io(&sidecar, e))
    }
}

/// Reads a 16-bit PGM written by [`save_image`], restoring float samples via
/// the sidecar scale/offset.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image2D> {
    let path = path.as_ref();
    let (w, h, raw) = read_pgm(path)?;
    let (scale, offset) = read_sidecar(path)?;
    let data = raw
        .iter()
        .map(|&q| (offset + q as f64 / PGM_MAXVAL as f64 * scale) as f32)
        .collect();
    Image2D::new(h, w, data)
}

/// Writes a PAN image (non-negative, so the sidecar carries only a scale).
pub fn save_pan(pan: &PanImage, path: impl AsRef<Path>) -> Result<()> {
    save_image(pan.as_image(), path)
}

/// Reads a PAN image, enforcing non-negativity.
pub fn load_pan(path: impl AsRef<Path>) -> Result<PanImage> {
    let path = path.as_ref();
    let img = load_image(path)?;
    PanImage::new(img.height(), img.width(), img.data().to_vec())
        .map_err(|e| Error::format(path, e.to_string(), 0))
}

/// Raw 16-bit PGM samples, for tests and mask export.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u16>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Tracked::new(BufReader::new(file));

    let mut magic = [0u8; 2];
    r.read_at(path, &mut magic, "magic")?;
    if &magic != b"P5" {
        return Err(Error::format(path, "not a P5 PGM".to_string(), 0));
    }
    let w = r.read_pgm_int(path)? as usize;
    let h = r.read_pgm_int(path)? as usize;
    let maxval = r.read_pgm_int(path)?;
    if maxval != PGM_MAXVAL {
        return Err(Error::format(
            path,
            format!("unsupported maxval {maxval}, expected {PGM_MAXVAL}"),
            r.offset,
        ));
    }
    // read_pgm_int consumed exactly one whitespace byte after the maxval
    let mut data = Vec::with_capacity(w * h);
    for _ in 0..w * h {
        let mut b = [0u8; 2];
        r.read_at(path, &mut b, "sample")?;
        data.push(u16::from_be_bytes(b));
    }
    Ok((w, h, data))
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".scale");
    os.into()
}

fn read_sidecar(image_path: &Path) -> Result<(f64, f64)> {
    let sidecar = sidecar_path(image_path);
    let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let mut scale = None;
    let mut offset = 0.0;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once('=') {
            Some(("scale", v)) => {
                scale = Some(v.trim().parse::<f64>().map_err(|_| {
                    Error::format(&sidecar, format!("bad scale value {v:?}"), 0)
                })?);
            }
            Some(("offset", v)) => {
                offset = v.trim().parse::<f64>().map_err(|_| {
                    Error::format(&sidecar, format!("bad offset value {v:?}"), 0)
                })?;
            }
            _ => {
                return Err(Error::format(
                    &sidecar,
                    format!("unrecognized sidecar line {line:?}"),
                    0,
                ));
            }
        }
    }
    let scale =
        scale.ok_or_else(|| Error::format(&sidecar, "missing scale line".to_string(), 0))?;
    Ok((scale, offset))
}

/// Byte-counting reader so format errors can report exact offsets.
struct Tracked<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Tracked<R> {
    fn new(inner: R) -> Self {
        Tracked { inner, offset: 0 }
    }

    fn read_at(&mut self, path: &Path, buf: &mut [u8], what: &str) -> Result<()> {
        let start = self.offset;
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Err(Error::format(
                path,
                format!("truncated while reading {what}"),
                start,
            )),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    fn read_u32(&mut self, path: &Path, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_at(path, &mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    fn read_f32(&mut self, path: &Path, what: &str) -> Result<f32> {
        let mut b = [0u8; 4];
        self.read_at(path, &mut b, what)?;
        Ok(f32::from_le_bytes(b))
    }

    fn read_f64(&mut self, path: &Path, what: &str) -> Result<f64> {
        let mut b = [0u8; 8];
        self.read_at(path, &mut b, what)?;
        Ok(f64::from_le_bytes(b))
    }

    /// ASCII integer in a PGM header: skips whitespace and `#` comments, then
    /// reads digits up to (and consuming) one trailing whitespace byte.
    fn read_pgm_int(&mut self, path: &Path) -> Result<u32> {
        let mut b = [0u8; 1];
        // skip whitespace and comments
        loop {
            self.read_at(path, &mut b, "header")?;
            if b[0] == b'#' {
                while b[0] != b'\n' {
                    self.read_at(path, &mut b, "header comment")?;
                }
            } else if !b[0].is_ascii_whitespace() {
                break;
            }
        }
        let start = self.offset - 1;
        let mut value: u64 = 0;
        let mut digits = 0;
        loop {
            if b[0].is_ascii_digit() {
                value = value * 10 + (b[0] - b'0') as u64;
                digits += 1;
                if value > u32::MAX as u64 {
                    return Err(Error::format(path, "header number overflow".into(), start));
                }
            } else if b[0].is_ascii_whitespace() && digits > 0 {
                return Ok(value as u32);
            } else {
                return Err(Error::format(
                    path,
                    format!("unexpected byte {:#04x} in header", b[0]),
                    self.offset - 1,
                ));
            }
            self.read_at(path, &mut b, "header")?;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::{SpectralCube, WavelengthGrid};

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("dcchi-io-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn sample_cube() -> SpectralCube {
        let grid = WavelengthGrid::new(vec![8000.0, 10000.0, 12000.0]).unwrap();
        let data: Vec<f32> = (0..2 * 2 * 3).map(|i| i as f32 * 0.25).collect();
        SpectralCube::new(2, 2, grid, data).unwrap()
    }

    #[test]
    fn cube_roundtrip_is_bit_exact() {
        let cube = sample_cube();
        let p = tmp("roundtrip.hsc");
        save_cube(&cube, &p).unwrap();
        let back = load_cube(&p).unwrap();
        assert_eq!(cube, back);
    }

    #[test]
    fn cube_save_is_deterministic() {
        let cube = sample_cube();
        let p1 = tmp("det1.hsc");
        let p2 = tmp("det2.hsc");
        save_cube(&cube, &p1).unwrap();
        save_cube(&cube, &p2).unwrap();
        assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    }

    #[test]
    fn cube_header_dims_read_back() {
        let grid = WavelengthGrid::linspace(8000.0, 14000.0, 6).unwrap();
        let cube = SpectralCube::zeros(4, 5, grid);
        let p = tmp("dims.hsc");
        save_cube(&cube, &p).unwrap();
        let back = load_cube(&p).unwrap();
        assert_eq!((back.height(), back.width(), back.bands()), (4, 5, 6));
    }

    #[test]
    fn bad_magic_is_a_format_error() {
        let p = tmp("badmagic.hsc");
        std::fs::write(&p, b"XXXX\x01\x00\x00\x00").unwrap();
        match load_cube(&p) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let cube = sample_cube();
        let p = tmp("trunc.hsc");
        save_cube(&cube, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 5]).unwrap();
        match load_cube(&p) {
            Err(Error::Format { offset, .. }) => assert!(offset > 0),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn non_increasing_grid_rejected() {
        // hand-built header: 1x1x2 cube with equal wavelengths
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"HSC1");
        for d in [1u32, 1, 2] {
            bytes.extend_from_slice(&d.to_le_bytes());
        }
        bytes.extend_from_slice(&500.0f64.to_le_bytes());
        bytes.extend_from_slice(&500.0f64.to_le_bytes());
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        let p = tmp("flatgrid.hsc");
        std::fs::write(&p, bytes).unwrap();
        match load_cube(&p) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 16 + 8),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn independent_byte_emitter_loads_identically() {
        // 2x2x3 cube emitted field by field, independent of save_cube.
        let h = 2u32;
        let w = 2u32;
        let c = 3u32;
        let wavelengths = [450.0f64, 550.0, 650.0];
        let samples: Vec<f32> = (0..12).map(|i| (i as f32) * 0.5 + 0.25).collect();

        let mut bytes = Vec::new();
        bytes.extend_from_slice(&[0x48, 0x53, 0x43, 0x31]); // "HSC1"
        bytes.extend_from_slice(&h.to_le_bytes());
        bytes.extend_from_slice(&w.to_le_bytes());
        bytes.extend_from_slice(&c.to_le_bytes());
        for nm in wavelengths {
            bytes.extend_from_slice(&nm.to_le_bytes());
        }
        for s in &samples {
            bytes.extend_from_slice(&s.to_le_bytes());
        }
        let p = tmp("independent.hsc");
        std::fs::write(&p, bytes).unwrap();

        let cube = load_cube(&p).unwrap();
        assert_eq!((cube.height(), cube.width(), cube.bands()), (2, 2, 3));
        assert_eq!(cube.grid().values(), &wavelengths);
        assert_eq!(cube.data(), &samples[..]);
    }

    #[test]
    fn pan_ramp_roundtrip_error_bound() {
        let n = 64usize;
        let data: Vec<f32> = (0..n * n).map(|i| i as f32 / 10.0).collect();
        let max = data.last().copied().unwrap();
        let pan = PanImage::new(n, n, data.clone()).unwrap();
        let p = tmp("ramp.pgm");
        save_pan(&pan, &p).unwrap();
        let back = load_pan(&p).unwrap();
        let bound = max / 65535.0;
        for (a, b) in data.iter().zip(back.data()) {
            assert!((a - b).abs() <= bound, "{a} vs {b}");
        }
    }

    #[test]
    fn all_zero_image_roundtrips_exactly() {
        let pan = PanImage::new(3, 4, vec![0.0; 12]).unwrap();
        let p = tmp("zero.pgm");
        save_pan(&pan, &p).unwrap();
        let back = load_pan(&p).unwrap();
        assert_eq!(pan, back);
    }

    #[test]
    fn negative_images_roundtrip_via_offset() {
        let img = Image2D::new(2, 2, vec![-1.0, 0.0, 0.5, 1.0]).unwrap();
        let p = tmp("neg.pgm");
        save_image(&img, &p).unwrap();
        let back = load_image(&p).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 2.0 / 65535.0, "{a} vs {b}");
        }
    }

    #[test]
    fn malformed_pgm_header_rejected() {
        let p = tmp("bad.pgm");
        std::fs::write(&p, b"P6\n2 2\n65535\n").unwrap();
        assert!(matches!(read_pgm(&p), Err(Error::Format { .. })));
        std::fs::write(&p, b"P5\n2 x\n65535\n").unwrap();
        assert!(matches!(read_pgm(&p), Err(Error::Format { .. })));
    }
}
