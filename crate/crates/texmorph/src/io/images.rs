//! 8-bit PNG I/O. Values map linearly between `[0, 1]` and `0..=255`.

use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use texmorph_core::{Image, Mask};

use crate::error::{Error, Result};

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn open(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> Error + '_ {
    move |source| Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads any PNG as RGB.
pub fn load_image(path: &Path) -> Result<Image> {
    let rgb = open(path)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(|b| b as f64 / 255.0).collect();
    Ok(Image::from_data(w as usize, h as usize, 3, data)?)
}

/// Saves 3-channel images as RGB and 1-channel images as grayscale.
pub fn save_image(img: &Image, path: &Path) -> Result<()> {
    let (w, h) = (img.width as u32, img.height as u32);
    let bytes: Vec<u8> = img.data.iter().map(|&v| quantize(v)).collect();
    match img.channels {
        3 => RgbImage::from_raw(w, h, bytes).map(|b: ImageBuffer<Rgb<u8>, _>| b.save(path)),
        1 => GrayImage::from_raw(w, h, bytes).map(|b: ImageBuffer<Luma<u8>, _>| b.save(path)),
        c => return Err(Error::Usage(format!("cannot save a {c}-channel image"))),
    }
    .expect("buffer sized from the image")
    .map_err(image_err(path))
}

/// Pixels above mid-gray are set.
pub fn load_mask(path: &Path) -> Result<Mask> {
    let g = open(path)?.to_luma8();
    let (w, h) = g.dimensions();
    Ok(Mask {
        width: w as usize,
        height: h as usize,
        data: g.into_raw().into_iter().map(|b| b >= 128).collect(),
    })
}

pub fn save_mask(mask: &Mask, path: &Path) -> Result<()> {
    let bytes = mask.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
    GrayImage::from_raw(mask.width as u32, mask.height as u32, bytes)
        .expect("buffer sized from the mask")
        .save(path)
        .map_err(image_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(5, 3, 3, |x, y, c| ((x * 3 + y * 7 + c * 11) % 256) as f64 / 255.0);
        let p = dir.path().join("a.png");
        save_image(&img, &p).unwrap();
        assert_eq!(load_image(&p).unwrap(), img);

        let mask = Mask::from_fn(4, 4, |x, y| (x + y) % 3 == 0);
        let p = dir.path().join("m.png");
        save_mask(&mask, &p).unwrap();
        assert_eq!(load_mask(&p).unwrap(), mask);
        assert!(load_image(&dir.path().join("missing.png")).is_err());
    }
}
