use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// 8-bit RGB raster, row-major, interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::Data(format!(
                "{width}x{height} RGB image needs {} bytes, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = Self::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                out.put(self.width - 1 - x, y, self.get(x, y));
            }
        }
        out
    }

    /// Bilinear resampling with pixel-centre alignment.
    pub fn resize(&self, width: usize, height: usize) -> Self {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let mut out = Self::new(width, height);
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        for y in 0..height {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let ty = fy - y0 as f64;
            for x in 0..width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let tx = fx - x0 as f64;
                let mut px = [0u8; 3];
                for (c, v) in px.iter_mut().enumerate() {
                    let at = |xx: usize, yy: usize| self.get(xx, yy)[c] as f64;
                    let top = at(x0, y0) * (1.0 - tx) + at(x1, y0) * tx;
                    let bottom = at(x0, y1) * (1.0 - tx) + at(x1, y1) * tx;
                    *v = (top * (1.0 - ty) + bottom * ty).round() as u8;
                }
                out.put(x, y, px);
            }
        }
        out
    }

    /// `3×H×W` tensor with values mapped from `[0, 255]` to `[-1, 1]`.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let plane = self.width * self.height;
        let mut data = vec![T::zero(); 3 * plane];
        for (p, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * plane + p] = T::of(px[c] as f64 / 127.5 - 1.0);
            }
        }
        Tensor::from_vec(&[3, self.height, self.width], data).expect("sized above")
    }

    pub fn encode_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    /// Binary PPM with maxval 255. Comments in the header are skipped.
    pub fn decode_ppm(bytes: &[u8]) -> Result<Self> {
        let mut r = BufReader::new(bytes);
        let mut fields = Vec::new();
        let mut token = Vec::new();
        while fields.len() < 4 {
            let buf = r.fill_buf().map_err(|e| Error::Format(e.to_string()))?;
            let Some(&b) = buf.first() else {
                return Err(Error::Format("truncated PPM header".into()));
            };
            r.consume(1);
            if b == b'#' && token.is_empty() {
                let mut skip = Vec::new();
                r.read_until(b'\n', &mut skip)
                    .map_err(|e| Error::Format(e.to_string()))?;
            } else if b.is_ascii_whitespace() {
                if !token.is_empty() {
                    fields.push(String::from_utf8_lossy(&token).into_owned());
                    token.clear();
                }
            } else {
                token.push(b);
            }
        }
        if fields[0] != "P6" {
            return Err(Error::Format(format!(
                "not a binary PPM (magic {})",
                fields[0]
            )));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Format(format!("bad PPM header field `{s}`")))
        };
        let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
        if maxval != 255 {
            return Err(Error::Format(format!("unsupported PPM maxval {maxval}")));
        }
        let mut data = Vec::with_capacity(width * height * 3);
        r.read_to_end(&mut data)
            .map_err(|e| Error::Format(e.to_string()))?;
        if data.len() != width * height * 3 {
            return Err(Error::Format(format!(
                "PPM body has {} bytes, expected {}",
                data.len(),
                width * height * 3
            )));
        }
        Self::from_raw(width, height, data)
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc
                .write_header()
                .map_err(|e| Error::Format(format!("png: {e}")))?;
            w.write_image_data(&self.data)
                .map_err(|e| Error::Format(format!("png: {e}")))?;
        }
        Ok(out)
    }

    /// 8-bit RGB or RGBA PNG (alpha dropped).
    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let fail = |e: png::DecodingError| Error::Format(format!("png: {e}"));
        let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
        let mut reader = decoder.read_info().map_err(fail)?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| Error::Format("png: image too large".into()))?;
        let mut buf = vec![0; size];
        let info = reader.next_frame(&mut buf).map_err(fail)?;
        if info.bit_depth != png::BitDepth::Eight {
            return Err(Error::Format("png: only 8-bit images are supported".into()));
        }
        let (w, h) = (info.width as usize, info.height as usize);
        let buf = &buf[..info.buffer_size()];
        let data = match info.color_type {
            png::ColorType::Rgb => buf.to_vec(),
            png::ColorType::Rgba => buf
                .chunks_exact(4)
                .flat_map(|p| [p[0], p[1], p[2]])
                .collect(),
            png::ColorType::Grayscale => buf.iter().flat_map(|&g| [g, g, g]).collect(),
            other => {
                return Err(Error::Format(format!(
                    "png: unsupported colour type {other:?}"
                )))
            }
        };
        Self::from_raw(w, h, data)
    }

    /// Reads a `.ppm` or `.png` file, chosen by extension.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        match extension(path).as_deref() {
            Some("ppm") => Self::decode_ppm(&bytes),
            Some("png") => Self::decode_png(&bytes),
            _ => Err(Error::Format(format!(
                "{}: unsupported image extension",
                path.display()
            ))),
        }
    }

    /// Writes a `.ppm` or `.png` file, chosen by extension.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = match extension(path).as_deref() {
            Some("ppm") => self.encode_ppm(),
            Some("png") => self.encode_png()?,
            _ => {
                return Err(Error::Format(format!(
                    "{}: unsupported image extension",
                    path.display()
                )))
            }
        };
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn extension(path: &Path) -> Option<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RgbImage {
        let data = (0..4 * 3 * 3).map(|i| (i * 7 % 256) as u8).collect();
        RgbImage::from_raw(4, 3, data).unwrap()
    }

    #[test]
    fn ppm_round_trip() {
        let img = sample();
        let bytes = img.encode_ppm();
        assert!(bytes.starts_with(b"P6\n4 3\n255\n"));
        assert_eq!(RgbImage::decode_ppm(&bytes).unwrap(), img);
    }

    #[test]
    fn ppm_header_comments_are_skipped() {
        let img = sample();
        let mut bytes = b"P6 # made by hand\n4 3\n# another\n255\n".to_vec();
        bytes.extend_from_slice(img.as_raw());
        assert_eq!(RgbImage::decode_ppm(&bytes).unwrap(), img);
    }

    #[test]
    fn bad_ppm_is_rejected() {
        let img = sample();
        let mut short = img.encode_ppm();
        short.pop();
        assert!(RgbImage::decode_ppm(&short).is_err());
        assert!(RgbImage::decode_ppm(b"P3\n1 1\n255\n0 0 0").is_err());
        assert!(RgbImage::decode_ppm(b"P6\n1").is_err());
    }

    #[test]
    fn png_round_trip() {
        let img = sample();
        let back = RgbImage::decode_png(&img.encode_png().unwrap()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn flip_twice_is_identity() {
        let img = sample();
        let f = img.flip_horizontal();
        assert_eq!(f.get(0, 1), img.get(3, 1));
        assert_eq!(f.flip_horizontal(), img);
    }

    #[test]
    fn tensor_layout_and_range() {
        let mut img = RgbImage::new(2, 1);
        img.put(1, 0, [255, 0, 128]);
        let t = img.to_tensor::<f64>();
        assert_eq!(t.shape(), &[3, 1, 2]);
        assert_eq!(
            t.data(),
            &[-1.0, 1.0, -1.0, -1.0, -1.0, 128.0 / 127.5 - 1.0]
        );
    }

    #[test]
    fn resize_to_same_size_is_identity_and_constant_stays_constant() {
        let img = sample();
        assert_eq!(img.resize(4, 3), img);
        let mut flat = RgbImage::new(5, 7);
        for y in 0..7 {
            for x in 0..5 {
                flat.put(x, y, [10, 20, 30]);
            }
        }
        let r = flat.resize(3, 11);
        assert!(r.as_raw().chunks(3).all(|p| p == [10, 20, 30]));
    }
}
