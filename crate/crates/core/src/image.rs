//! Minimal owned 8-bit RGB raster.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("degenerate image {width}x{height}")]
    DegenerateImage { width: usize, height: usize },
    #[error("pixel buffer has {actual} bytes, expected {expected}")]
    BufferLength { expected: usize, actual: usize },
}

/// Row-major interleaved RGB, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::DegenerateImage { width, height });
        }
        let expected = width * height * 3;
        if data.len() != expected {
            return Err(ImageError::BufferLength {
                expected,
                actual: data.len(),
            });
        }
        Ok(RgbImage {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self, ImageError> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self, ImageError> {
        Self::from_fn(width, height, |_, _| rgb)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    /// Nearest-neighbour resample (pixel centres mapped back to the source grid).
    pub fn resize_nearest(&self, width: usize, height: usize) -> Result<Self, ImageError> {
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        Self::from_fn(width, height, |x, y| {
            let sx = ((x * self.width) + self.width / 2) / width;
            let sy = ((y * self.height) + self.height / 2) / height;
            self.pixel(sx.min(self.width - 1), sy.min(self.height - 1))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert_eq!(
            RgbImage::new(0, 3, vec![]),
            Err(ImageError::DegenerateImage { width: 0, height: 3 })
        );
        assert_eq!(
            RgbImage::new(2, 2, vec![0; 11]),
            Err(ImageError::BufferLength { expected: 12, actual: 11 })
        );
    }

    #[test]
    fn resize_keeps_constant_and_identity() {
        let img = RgbImage::filled(5, 3, [9, 8, 7]).unwrap();
        let r = img.resize_nearest(17, 11).unwrap();
        assert!(r.pixels().all(|p| p == [9, 8, 7]));
        let g = RgbImage::from_fn(4, 4, |x, y| [(x * 10) as u8, (y * 10) as u8, 0]).unwrap();
        assert_eq!(g.resize_nearest(4, 4).unwrap(), g);
        let up = g.resize_nearest(8, 8).unwrap();
        assert_eq!(up.pixel(0, 0), g.pixel(0, 0));
        assert_eq!(up.pixel(7, 7), g.pixel(3, 3));
    }
}
