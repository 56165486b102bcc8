use std::path::Path;

use super::{BinaryMask, GrayImage, Image};
use crate::{Error, Result};

/// Decodes any supported format into RGB `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory(&bytes)?;
    Ok(Image::from_rgb32f(&img.to_rgb32f()))
}

pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let buf = image::RgbImage::from_raw(
        img.width() as u32,
        img.height() as u32,
        img.to_rgb8_bytes(),
    )
    .expect("buffer length matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn save_gray(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let bytes = img.data().iter().map(|&v| (v * 255.0).round() as u8).collect();
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, bytes)
        .expect("buffer length matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Single-channel PNG, 255 for true and 0 for false.
pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    mask_to_luma(mask).save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Reads a mask written by [`save_mask`]; any value above 127 is true.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory(&bytes)?.to_luma8();
    let bits = img.pixels().map(|p| p.0[0] > 127).collect();
    BinaryMask::from_bits(img.width() as usize, img.height() as usize, bits)
}

pub(crate) fn mask_to_luma(mask: &BinaryMask) -> image::GrayImage {
    let bytes = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    image::GrayImage::from_raw(mask.width() as u32, mask.height() as u32, bytes)
        .expect("buffer length matches dimensions")
}

/// Encodes an image as PNG bytes.
pub fn encode_png(img: &Image) -> Vec<u8> {
    let buf = image::RgbImage::from_raw(
        img.width() as u32,
        img.height() as u32,
        img.to_rgb8_bytes(),
    )
    .expect("buffer length matches dimensions");
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)
        .expect("in-memory png encoding");
    out.into_inner()
}

/// Encodes a mask as a 0/255 single-channel PNG.
pub fn encode_mask_png(mask: &BinaryMask) -> Vec<u8> {
    let mut out = std::io::Cursor::new(Vec::new());
    mask_to_luma(mask)
        .write_to(&mut out, image::ImageFormat::Png)
        .expect("in-memory png encoding");
    out.into_inner()
}

/// Decodes an image from encoded bytes.
pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    let img = image::load_from_memory(bytes)?;
    Ok(Image::from_rgb32f(&img.to_rgb32f()))
}
