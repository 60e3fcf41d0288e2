//! 8-bit grayscale PGM (P5) images.

use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageError};

pub fn encode(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>, ImageError> {
    assert_eq!(pixels.len(), width * height);
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(pixels, width as u32, height as u32, ExtendedColorType::L8)?;
    Ok(out)
}

pub fn write(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<(), ImageError> {
    std::fs::write(path, encode(width, height, pixels)?).map_err(ImageError::IoError)
}

/// `(width, height, pixels)`; color images are converted to luma.
pub fn read(path: &Path) -> Result<(usize, usize, Vec<u8>), ImageError> {
    let img = image::open(path)?.into_luma8();
    Ok((img.width() as usize, img.height() as usize, img.into_raw()))
}
