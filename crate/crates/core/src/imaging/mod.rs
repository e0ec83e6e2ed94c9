//! Grayscale raster, PNM I/O, and the enhancement filters applied before
//! region segmentation.

mod bilateral;
mod clahe;
mod pnm;
pub(crate) mod warp;

pub use bilateral::bilateral;
pub use clahe::clahe;
pub use pnm::{decode_pnm, encode_pgm, read_pnm, write_pgm};
pub use warp::{gaussian_kernel, warp_affine, Affine2};

use crate::error::{Error, Result};

/// 8-bit single-channel image stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "pixel buffer has {} values, expected {}",
                data.len(),
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// # Panics
    /// Panics when either dimension is zero.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// # Panics
    /// Panics when either dimension is zero.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn inverted(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| 255 - v).collect(),
        }
    }

    pub(crate) fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }
}

/// Parameters of the CLAHE + bilateral enhancement stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnhanceParams {
    pub tile_rows: usize,
    pub tile_cols: usize,
    /// Maximum pixel count per histogram bin within one tile.
    pub clip_limit: u32,
    /// Odd side length of the bilateral window.
    pub bilateral_window: usize,
    pub delta_d: f64,
    pub delta_r: f64,
}

impl EnhanceParams {
    /// Defaults for an image of the given size: 8x8 tiles, a clip limit of
    /// four times the mean bin occupancy, a 9-pixel bilateral window with
    /// spatial sigma 3 and range sigma 25.
    pub fn for_image(width: usize, height: usize) -> Self {
        let tile_pixels = (width / 8).max(1) * (height / 8).max(1);
        Self {
            tile_rows: 8,
            tile_cols: 8,
            clip_limit: ((4 * tile_pixels) / 256).max(1) as u32,
            bilateral_window: 9,
            delta_d: 3.0,
            delta_r: 25.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tile_rows == 0 || self.tile_cols == 0 {
            return Err(Error::invalid("tile grid must have at least one tile"));
        }
        if self.clip_limit < 1 {
            return Err(Error::invalid("clip_limit must be at least 1"));
        }
        if self.bilateral_window < 3 || self.bilateral_window % 2 == 0 {
            return Err(Error::invalid(format!(
                "bilateral window must be odd and >= 3, got {}",
                self.bilateral_window
            )));
        }
        if !(self.delta_d > 0.0) || !(self.delta_r > 0.0) {
            return Err(Error::invalid("bilateral sigmas must be positive"));
        }
        Ok(())
    }
}

/// CLAHE followed by the bilateral filter.
pub fn enhance(img: &GrayImage, params: &EnhanceParams) -> Result<GrayImage> {
    params.validate()?;
    let equalized = clahe(img, params.tile_rows, params.tile_cols, params.clip_limit)?;
    bilateral(
        &equalized,
        params.bilateral_window,
        params.delta_d,
        params.delta_r,
    )
}
