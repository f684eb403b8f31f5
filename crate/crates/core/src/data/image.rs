//! 8-bit binary PGM (`P5`) images.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// Parses a `P5` image into a `1x1xHxW` tensor with samples in `[0, 1]`.
pub fn decode_pgm(bytes: &[u8]) -> Result<Tensor4> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(Error::UnsupportedImage("not a PNM file".into()));
    }
    match bytes[1] {
        b'5' => {}
        b'3' | b'6' => return Err(Error::GrayscaleRequired("color PPM input; convert to luminance first".into())),
        other => return Err(Error::UnsupportedImage(format!("PNM variant P{}", other as char))),
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::Truncated("PGM header".into())),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        let text = std::str::from_utf8(&bytes[start..pos]).unwrap_or("");
        *field = text.parse().map_err(|_| Error::UnsupportedImage(format!("bad PGM header field {text:?}")))?;
    }
    let [w, h, maxval] = fields;
    if w == 0 || h == 0 {
        return Err(Error::UnsupportedImage("zero-sized PGM".into()));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::UnsupportedImage(format!("PGM maxval {maxval}; only 8-bit samples are supported")));
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(|c| c.is_ascii_whitespace()) {
        return Err(Error::Truncated("PGM header".into()));
    }
    pos += 1;
    let raster = &bytes[pos..];
    if raster.len() < w * h {
        return Err(Error::Truncated(format!("PGM raster has {} of {} bytes", raster.len(), w * h)));
    }
    let scale = maxval as f32;
    let data = raster[..w * h].iter().map(|&b| b as f32 / scale).collect();
    Tensor4::image(h, w, data)
}

pub fn encode_pgm(img: &Tensor4) -> Result<Vec<u8>> {
    if img.n() != 1 || img.c() != 1 {
        return Err(Error::GrayscaleRequired(format!("cannot write {}x{} channels as PGM", img.n(), img.c())));
    }
    let mut out = format!("P5\n{} {}\n255\n", img.w(), img.h()).into_bytes();
    out.extend(img.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

pub fn load_image(path: &Path) -> Result<Tensor4> {
    let bytes = fs::read(path).map_err(Error::at(path))?;
    decode_pgm(&bytes)
}

pub fn save_image(img: &Tensor4, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(Error::at(dir))?;
    }
    fs::write(path, encode_pgm(img)?).map_err(Error::at(path))
}
