//! PGM (binary P5) input/output and conversions to the `image` crate.

use std::path::Path;

use image::{ImageBuffer, Luma};

use crate::error::{Error, Result};
use crate::types::GrayImage;

pub(crate) type FloatBuffer = ImageBuffer<Luma<f32>, Vec<f32>>;

pub(crate) fn to_buffer(img: &GrayImage) -> FloatBuffer {
    ImageBuffer::from_raw(
        img.width() as u32,
        img.height() as u32,
        img.pixels().to_vec(),
    )
    .expect("pixel count matches dimensions")
}

pub(crate) fn from_buffer(buf: FloatBuffer, ppi: u32) -> GrayImage {
    let (w, h) = buf.dimensions();
    let mut pixels = buf.into_raw();
    for v in &mut pixels {
        *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    }
    GrayImage::new(w as usize, h as usize, ppi, pixels).expect("clamped buffer is a valid image")
}

/// Quantizes to 8 bits per pixel.
pub fn to_luma8(img: &GrayImage) -> image::GrayImage {
    let raw = img
        .pixels()
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    ImageBuffer::from_raw(img.width() as u32, img.height() as u32, raw)
        .expect("pixel count matches dimensions")
}

pub fn from_luma8(buf: &image::GrayImage, ppi: u32) -> Result<GrayImage> {
    let pixels = buf.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
    GrayImage::new(buf.width() as usize, buf.height() as usize, ppi, pixels)
}

/// Encodes as binary PGM (P5, maxval 255).
pub fn encode_pgm(img: &GrayImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let encoder = image::codecs::pnm::PnmEncoder::new(&mut out).with_subtype(
        image::codecs::pnm::PnmSubtype::Graymap(image::codecs::pnm::SampleEncoding::Binary),
    );
    let buf = to_luma8(img);
    image::ImageEncoder::write_image(
        encoder,
        buf.as_raw(),
        buf.width(),
        buf.height(),
        image::ExtendedColorType::L8,
    )?;
    Ok(out)
}

pub fn write_pgm(img: &GrayImage, path: &Path) -> Result<()> {
    std::fs::write(path, encode_pgm(img)?)?;
    Ok(())
}

/// Reads an 8-bit grayscale PGM; resolution is not stored in the file and must be supplied.
pub fn read_pgm(path: &Path, ppi: u32) -> Result<GrayImage> {
    let bytes = std::fs::read(path)?;
    decode_pgm(&bytes, ppi)
}

pub fn decode_pgm(bytes: &[u8], ppi: u32) -> Result<GrayImage> {
    if ppi == 0 {
        return Err(Error::invalid("image", "ppi must be positive"));
    }
    let dynamic = image::load_from_memory_with_format(bytes, image::ImageFormat::Pnm)?;
    from_luma8(&dynamic.into_luma8(), ppi)
}
