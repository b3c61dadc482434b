//! Raster types and binary PGM (P5) / PPM (P6) I/O.

use std::fs;
use std::path::Path;

use thiserror::Error;

pub type Rgb = [u8; 3];

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("malformed PNM: {0}")]
    Format(String),
    #[error("data length {got} does not match {width}x{height}")]
    Size { width: u32, height: u32, got: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

macro_rules! raster {
    ($name:ident, $px:ty) => {
        #[derive(Debug, Clone, PartialEq, Eq)]
        pub struct $name {
            width: u32,
            height: u32,
            data: Vec<$px>,
        }

        impl $name {
            pub fn new(width: u32, height: u32, data: Vec<$px>) -> Result<Self, ImageError> {
                if data.len() != width as usize * height as usize {
                    return Err(ImageError::Size { width, height, got: data.len() });
                }
                Ok(Self { width, height, data })
            }

            pub fn filled(width: u32, height: u32, value: $px) -> Self {
                Self { width, height, data: vec![value; width as usize * height as usize] }
            }

            pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> $px) -> Self {
                let mut data = Vec::with_capacity(width as usize * height as usize);
                for y in 0..height {
                    for x in 0..width {
                        data.push(f(x, y));
                    }
                }
                Self { width, height, data }
            }

            pub fn width(&self) -> u32 {
                self.width
            }

            pub fn height(&self) -> u32 {
                self.height
            }

            pub fn data(&self) -> &[$px] {
                &self.data
            }

            pub fn data_mut(&mut self) -> &mut [$px] {
                &mut self.data
            }

            pub fn into_data(self) -> Vec<$px> {
                self.data
            }

            #[inline]
            pub fn index(&self, x: u32, y: u32) -> usize {
                y as usize * self.width as usize + x as usize
            }

            #[inline]
            pub fn get(&self, x: u32, y: u32) -> $px {
                self.data[self.index(x, y)]
            }

            #[inline]
            pub fn set(&mut self, x: u32, y: u32, v: $px) {
                let i = self.index(x, y);
                self.data[i] = v;
            }
        }
    };
}

raster!(GrayImage, u8);
raster!(BinaryMask, bool);
raster!(RgbImage, Rgb);

impl BinaryMask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty_mask(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Foreground lookup with out-of-bounds treated as background.
    #[inline]
    pub fn get_or_false(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as u64) < self.width as u64 && (y as u64) < self.height as u64 && self.get(x as u32, y as u32)
    }

    /// `true` iff every foreground pixel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    /// 0/255 grayscale rendering of the mask.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        }
    }
}

impl GrayImage {
    /// Nonzero pixels become foreground.
    pub fn to_mask(&self) -> BinaryMask {
        BinaryMask { width: self.width, height: self.height, data: self.data.iter().map(|&v| v != 0).collect() }
    }
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.reserve(img.data.len() * 3);
    for px in &img.data {
        out.extend_from_slice(px);
    }
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    let (w, h, body) = parse_header(bytes, b"P5")?;
    let n = w as usize * h as usize;
    if body.len() < n {
        return Err(ImageError::Format(format!("raster truncated: {} of {n} bytes", body.len())));
    }
    GrayImage::new(w, h, body[..n].to_vec())
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage, ImageError> {
    let (w, h, body) = parse_header(bytes, b"P6")?;
    let n = w as usize * h as usize;
    if body.len() < 3 * n {
        return Err(ImageError::Format(format!("raster truncated: {} of {} bytes", body.len(), 3 * n)));
    }
    let data = body[..3 * n].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    RgbImage::new(w, h, data)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage, ImageError> {
    decode_pgm(&fs::read(path)?)
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<RgbImage, ImageError> {
    decode_ppm(&fs::read(path)?)
}

pub fn write_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    fs::write(path, encode_pgm(img))?;
    Ok(())
}

pub fn write_ppm(img: &RgbImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    fs::write(path, encode_ppm(img))?;
    Ok(())
}

/// Reads a PPM as color, or a PGM promoted to gray RGB.
pub fn read_color(path: impl AsRef<Path>) -> Result<RgbImage, ImageError> {
    let bytes = fs::read(path)?;
    match bytes.get(..2) {
        Some(b"P6") => decode_ppm(&bytes),
        Some(b"P5") => {
            let g = decode_pgm(&bytes)?;
            let data = g.data.iter().map(|&v| [v, v, v]).collect();
            RgbImage::new(g.width, g.height, data)
        }
        _ => Err(ImageError::Format("expected P5 or P6 magic".into())),
    }
}

/// Parses `magic w h maxval` and returns the raster that follows the single
/// whitespace byte after maxval. Only 8-bit rasters (maxval 255) are accepted.
fn parse_header<'a>(bytes: &'a [u8], magic: &[u8]) -> Result<(u32, u32, &'a [u8]), ImageError> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(ImageError::Format(format!("expected magic {}", String::from_utf8_lossy(magic))));
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(ImageError::Format("expected a decimal header field".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::Format("header field out of range".into()))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(ImageError::Format("missing whitespace after maxval".into()));
    }
    pos += 1;
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(ImageError::Format(format!("unsupported maxval {maxval}, only 255 is accepted")));
    }
    if w == 0 || h == 0 {
        return Err(ImageError::Format("zero image dimension".into()));
    }
    Ok((w, h, &bytes[pos..]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_roundtrip_is_bit_exact() {
        let img = GrayImage::from_fn(7, 3, |x, y| (x * 31 + y * 7) as u8);
        let bytes = encode_pgm(&img);
        assert!(bytes.starts_with(b"P5\n7 3\n255\n"));
        assert_eq!(decode_pgm(&bytes).unwrap(), img);
        assert_eq!(encode_pgm(&decode_pgm(&bytes).unwrap()), bytes);
    }

    #[test]
    fn ppm_roundtrip_is_bit_exact() {
        let img = RgbImage::from_fn(4, 5, |x, y| [x as u8, y as u8, (x * y) as u8 ^ 0xA5]);
        let bytes = encode_ppm(&img);
        assert_eq!(decode_ppm(&bytes).unwrap(), img);
    }

    #[test]
    fn header_comments_and_whitespace() {
        let mut bytes = b"P5 # made by hand\n2\t1\n# max\n255 ".to_vec();
        bytes.extend_from_slice(&[10, 32]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!(img.data(), &[10, 32]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(decode_pgm(b"P6\n1 1\n255\n\0\0\0").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\0").is_err());
        assert!(decode_pgm(b"P5\n1 1\n65535\n\0\0").is_err());
        assert!(GrayImage::new(2, 2, vec![0; 3]).is_err());
    }
}
