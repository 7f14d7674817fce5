use super::ValidationError;

pub type Rgba = [u8; 4];

/// Decoded lossless image, 8-bit RGBA, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for Raster {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Raster")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl Raster {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ValidationError> {
        if width == 0 || height == 0 {
            return Err(ValidationError::InvalidRaster);
        }
        let expected = (width as usize)
            .checked_mul(height as usize)
            .and_then(|n| n.checked_mul(4))
            .ok_or(ValidationError::InvalidRaster)?;
        if pixels.len() != expected {
            return Err(ValidationError::InvalidRaster);
        }
        Ok(Raster {
            width,
            height,
            pixels,
        })
    }

    /// Raster of one uniform color. Panics on zero dimensions.
    pub fn filled(width: u32, height: u32, color: Rgba) -> Self {
        assert!(width > 0 && height > 0, "raster dimensions must be positive");
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(n * 4);
        for _ in 0..n {
            pixels.extend_from_slice(&color);
        }
        Raster {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        debug_assert!(x < self.width && y < self.height);
        (y as usize * self.width as usize + x as usize) * 4
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> Rgba {
        let o = self.offset(x, y);
        [
            self.pixels[o],
            self.pixels[o + 1],
            self.pixels[o + 2],
            self.pixels[o + 3],
        ]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, color: Rgba) {
        let o = self.offset(x, y);
        self.pixels[o..o + 4].copy_from_slice(&color);
    }

    /// Pixel at linear index `i` (row-major).
    #[inline]
    pub fn pixel_at(&self, i: usize) -> &[u8] {
        &self.pixels[i * 4..i * 4 + 4]
    }

    /// Fill the rectangle `[left, right) × [top, bottom)`, clipped to bounds.
    pub fn fill_rect(&mut self, left: u32, top: u32, right: u32, bottom: u32, color: Rgba) {
        for y in top.min(self.height)..bottom.min(self.height) {
            for x in left.min(self.width)..right.min(self.width) {
                self.set_pixel(x, y, color);
            }
        }
    }

    /// Top `rows` rows of the raster (the whole raster when it is shorter).
    pub fn crop_height(&self, rows: u32) -> Raster {
        let rows = rows.clamp(1, self.height);
        let len = rows as usize * self.width as usize * 4;
        Raster {
            width: self.width,
            height: rows,
            pixels: self.pixels[..len].to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_dimensions() {
        assert_eq!(Raster::new(0, 1, vec![]), Err(ValidationError::InvalidRaster));
        assert_eq!(Raster::new(2, 2, vec![0; 15]), Err(ValidationError::InvalidRaster));
        assert!(Raster::new(2, 2, vec![0; 16]).is_ok());
    }

    #[test]
    fn fill_rect_clips() {
        let mut r = Raster::filled(4, 4, [0, 0, 0, 255]);
        r.fill_rect(2, 2, 10, 10, [9, 9, 9, 255]);
        assert_eq!(r.pixel(1, 1), [0, 0, 0, 255]);
        assert_eq!(r.pixel(3, 3), [9, 9, 9, 255]);
        let crop = r.crop_height(2);
        assert_eq!(crop.dimensions(), (4, 2));
        assert_eq!(r.crop_height(99).dimensions(), (4, 4));
    }
}
