use std::path::Path;

use image::{GrayImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Min-max rescales an HWC image to 8-bit RGB; single-channel images are
/// replicated. A constant image maps to mid-gray.
pub fn to_display_bytes(img: &Tensor) -> Result<Vec<u8>> {
    if img.rank() != 3 || !(img.shape()[2] == 1 || img.shape()[2] == 3) {
        return Err(Error::geometry(format!("cannot display shape {:?}", img.shape())));
    }
    img.ensure_finite("display image")?;
    let lo = img.data().iter().cloned().fold(f32::INFINITY, f32::min) as f64;
    let hi = img.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
    let to_byte = |v: f32| -> u8 {
        if hi > lo {
            ((v as f64 - lo) / (hi - lo) * 255.0).round() as u8
        } else {
            128
        }
    };
    let ch = img.shape()[2];
    Ok(img
        .data()
        .chunks(ch)
        .flat_map(|px| {
            if ch == 1 {
                [to_byte(px[0]); 3]
            } else {
                [to_byte(px[0]), to_byte(px[1]), to_byte(px[2])]
            }
        })
        .collect())
}

/// Writes a binary portable pixmap.
pub fn write_ppm(path: &Path, img: &Tensor) -> Result<()> {
    let bytes = to_display_bytes(img)?;
    let (h, w) = (img.shape()[0] as u32, img.shape()[1] as u32);
    let rgb = RgbImage::from_raw(w, h, bytes).ok_or_else(|| Error::geometry("pixel buffer size"))?;
    rgb.save_with_format(path, ImageFormat::Pnm)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

/// Writes `[0,1]` values as 8-bit PGM (one channel) or PPM (three
/// channels) without rescaling; out-of-range values are clamped.
pub fn write_pnm(path: &Path, img: &Tensor) -> Result<()> {
    if img.rank() != 3 || !(img.shape()[2] == 1 || img.shape()[2] == 3) {
        return Err(Error::geometry(format!("cannot store shape {:?}", img.shape())));
    }
    img.ensure_finite("stored image")?;
    let (h, w) = (img.shape()[0] as u32, img.shape()[1] as u32);
    let bytes: Vec<u8> = img.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let saved = if img.shape()[2] == 1 {
        GrayImage::from_raw(w, h, bytes).map(|g| g.save_with_format(path, ImageFormat::Pnm))
    } else {
        RgbImage::from_raw(w, h, bytes).map(|g| g.save_with_format(path, ImageFormat::Pnm))
    };
    saved
        .ok_or_else(|| Error::geometry("pixel buffer size"))?
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))
}
