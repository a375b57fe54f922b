//! PFM and PPM files, image comparison.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use pstf_core::math::Rgb;

use crate::error::{Error, IoContext};

/// Linear RGB image in top-down row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<Rgb>,
}

impl Image {
    pub fn new(width: u32, height: u32, pixels: Vec<Rgb>) -> Self {
        assert_eq!(pixels.len(), width as usize * height as usize, "pixel count");
        Image { width, height, pixels }
    }

    /// Encodes as a three-channel little-endian PFM (scale -1, bottom row
    /// first). Values are stored as `f32`.
    pub fn to_pfm(&self) -> Vec<u8> {
        let mut out = format!("PF\n{} {}\n-1.0\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 12);
        let w = self.width as usize;
        for row in self.pixels.chunks(w.max(1)).rev() {
            for p in row {
                for c in p.channels() {
                    out.extend_from_slice(&(c as f32).to_le_bytes());
                }
            }
        }
        out
    }

    /// Decodes `PF` (RGB) or `Pf` (grey) data of either byte order.
    pub fn from_pfm(bytes: &[u8]) -> Result<Image, String> {
        let mut pos = 0;
        let mut token = || -> Result<String, String> {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err("truncated header".into());
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        let channels = match token()?.as_str() {
            "PF" => 3,
            "Pf" => 1,
            m => return Err(format!("bad magic `{m}`")),
        };
        let width: u32 = token()?.parse().map_err(|_| "bad width")?;
        let height: u32 = token()?.parse().map_err(|_| "bad height")?;
        let scale: f64 = token()?.parse().map_err(|_| "bad scale")?;
        if scale == 0.0 || !scale.is_finite() {
            return Err("scale must be non-zero".into());
        }
        // Exactly one whitespace byte separates the header from the data.
        let data = bytes.get(pos + 1..).ok_or("missing data")?;
        let n = width as usize * height as usize;
        if data.len() != n * channels * 4 {
            return Err(format!("expected {} data bytes, found {}", n * channels * 4, data.len()));
        }
        let little = scale < 0.0;
        let floats: Vec<f64> = data
            .chunks_exact(4)
            .map(|b| {
                let b = [b[0], b[1], b[2], b[3]];
                (if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) }) as f64
            })
            .collect();
        let mut pixels = vec![Rgb::BLACK; n];
        let w = width as usize;
        for (i, px) in floats.chunks_exact(channels).enumerate() {
            let (x, row) = (i % w, i / w);
            let y = height as usize - 1 - row;
            pixels[y * w + x] = match px {
                [v] => Rgb::splat(*v),
                [r, g, b] => Rgb::new(*r, *g, *b),
                _ => unreachable!(),
            };
        }
        Ok(Image { width, height, pixels })
    }

    /// Binary PPM after clamping to `[0, 1]` and a 1/2.2 gamma.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for p in &self.pixels {
            for c in p.channels() {
                out.push(tone_map(c));
            }
        }
        out
    }

    pub fn read_pfm(path: &Path) -> Result<Image, Error> {
        let bytes = fs::read(path).io_context(path)?;
        Image::from_pfm(&bytes).map_err(|reason| Error::Format { path: path.to_path_buf(), reason })
    }

    pub fn write_pfm(&self, path: &Path) -> Result<(), Error> {
        write_file(path, &self.to_pfm())
    }

    pub fn write_ppm(&self, path: &Path) -> Result<(), Error> {
        write_file(path, &self.to_ppm())
    }

    pub fn average(&self) -> Rgb {
        let s = self.pixels.iter().fold(Rgb::BLACK, |a, &b| a + b);
        s / self.pixels.len().max(1) as f64
    }
}

pub fn tone_map(c: f64) -> u8 {
    let v = if c.is_nan() { 0.0 } else { c.clamp(0.0, 1.0) };
    (v.powf(1.0 / 2.2) * 255.0 + 0.5) as u8
}

/// Writes through a sibling temporary file so readers never see a partial
/// file.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).io_context(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = Path::new(&tmp);
    let write = || -> io::Result<()> {
        let mut f = fs::File::create(tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(tmp, path)
    };
    write().io_context(path)
}

/// Pooled RMSE over all channels, and optionally the signed difference
/// `a - b`.
pub fn compare(a: &Image, b: &Image) -> Result<(f64, Image), Error> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::DimensionMismatch { a: (a.width, a.height), b: (b.width, b.height) });
    }
    let rmse = pstf_core::render::rmse(&a.pixels, &b.pixels).unwrap_or(0.0);
    let diff = a.pixels.iter().zip(&b.pixels).map(|(x, y)| *x - *y).collect();
    Ok((rmse, Image::new(a.width, a.height, diff)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Image {
        let px = (0..6).map(|i| Rgb::new(i as f64, 0.5 * i as f64, -0.25)).collect();
        Image::new(3, 2, px)
    }

    #[test]
    fn pfm_header_and_order() {
        let bytes = sample().to_pfm();
        assert!(bytes.starts_with(b"PF\n3 2\n-1.0\n"));
        let data = &bytes[b"PF\n3 2\n-1.0\n".len()..];
        // First stored pixel is the bottom-left one, index 3.
        assert_eq!(f32::from_le_bytes(data[..4].try_into().unwrap()), 3.0);
        assert_eq!(Image::from_pfm(&bytes).unwrap(), sample());
    }

    #[test]
    fn big_endian_and_grey() {
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&1.5f32.to_be_bytes());
        bytes.extend_from_slice(&2.0f32.to_be_bytes());
        let img = Image::from_pfm(&bytes).unwrap();
        assert_eq!(img.pixels, vec![Rgb::splat(1.5), Rgb::splat(2.0)]);
        assert!(Image::from_pfm(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn tone_map_clamps() {
        assert_eq!(tone_map(-1.0), 0);
        assert_eq!(tone_map(7.0), 255);
        assert_eq!(tone_map(f64::NAN), 0);
        assert_eq!(tone_map(0.5), 186);
    }

    #[test]
    fn compare_examples() {
        let a = sample();
        assert_eq!(compare(&a, &a).unwrap().0, 0.0);
        let b = Image::new(3, 2, a.pixels.iter().map(|p| *p + Rgb::WHITE).collect());
        assert!((compare(&b, &a).unwrap().0 - 1.0).abs() < 1e-15);
        let c = Image::new(2, 3, a.pixels.clone());
        assert!(matches!(compare(&a, &c), Err(Error::DimensionMismatch { .. })));
    }
}
