use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// What the pixel values of a [`RasterImage`] mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterKind {
    /// 8-bit intensities, 0 = black. Ridges are dark.
    Grayscale,
    /// 0 = valley/background, 1 = ridge.
    Binary,
    /// Binary image thinned to one-pixel-wide ridges.
    Skeleton,
}

/// Row-major 8-bit raster. Binary and skeleton rasters store only 0/1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    kind: RasterKind,
    pixels: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, kind: RasterKind, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel buffer size mismatch");
        if kind != RasterKind::Grayscale {
            debug_assert!(pixels.iter().all(|&p| p <= 1), "binary raster with value > 1");
        }
        RasterImage {
            width,
            height,
            kind,
            pixels,
        }
    }

    pub fn filled(width: usize, height: usize, kind: RasterKind, value: u8) -> Self {
        Self::new(width, height, kind, vec![value; width * height])
    }

    /// Build a binary/skeleton raster from ASCII art: `#` is ridge, anything
    /// else is background. Common leading indentation is stripped so raw
    /// string fixtures can be indented with the code.
    pub fn from_art(kind: RasterKind, art: &str) -> Self {
        let rows: Vec<&str> = art.lines().filter(|l| !l.trim().is_empty()).collect();
        let indent = rows
            .iter()
            .map(|r| r.len() - r.trim_start().len())
            .min()
            .unwrap_or(0);
        let rows: Vec<&str> = rows.iter().map(|r| &r[indent..]).collect();
        let height = rows.len();
        let width = rows.iter().map(|r| r.len()).max().unwrap_or(0);
        let mut pixels = vec![0u8; width * height];
        for (y, row) in rows.iter().enumerate() {
            for (x, ch) in row.chars().enumerate() {
                if ch == '#' {
                    pixels[y * width + x] = 1;
                }
            }
        }
        Self::new(width, height, kind, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn kind(&self) -> RasterKind {
        self.kind
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[y * self.width + x] = value;
    }

    /// 1 if (x, y) is a ridge pixel, 0 otherwise; out-of-bounds reads as 0.
    #[inline]
    pub fn ridge_at(&self, x: i64, y: i64) -> u8 {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            0
        } else {
            self.pixels[y as usize * self.width + x as usize]
        }
    }

    #[inline]
    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64
    }

    /// True when (x, y) has a full 8-neighborhood inside the raster.
    #[inline]
    pub fn is_interior(&self, x: usize, y: usize) -> bool {
        x >= 1 && y >= 1 && x + 1 < self.width && y + 1 < self.height
    }

    pub fn count_ridge(&self) -> usize {
        self.pixels.iter().filter(|&&p| p != 0).count()
    }

    /// Copy out the w x h window with top-left corner (x0, y0).
    pub fn window(&self, x0: usize, y0: usize, w: usize, h: usize) -> RasterImage {
        assert!(x0 + w <= self.width && y0 + h <= self.height, "window out of range");
        let mut pixels = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            pixels.extend_from_slice(&self.pixels[y * self.width + x0..y * self.width + x0 + w]);
        }
        RasterImage::new(w, h, self.kind, pixels)
    }

    /// Rotate a quarter turn so the direction vector (dx, dy) maps to
    /// (-dy, dx); point (x, y) lands on (height-1-y, x).
    pub fn rotated90(&self) -> RasterImage {
        let (w, h) = (self.height, self.width);
        let mut pixels = vec![0u8; w * h];
        for y in 0..self.height {
            for x in 0..self.width {
                let nx = self.height - 1 - y;
                let ny = x;
                pixels[ny * w + nx] = self.pixels[y * self.width + x];
            }
        }
        RasterImage::new(w, h, self.kind, pixels)
    }

    /// Decode an image file (PGM, PNG, TIFF, ...) to a grayscale raster.
    pub fn read_grayscale(path: &Path) -> Result<RasterImage> {
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?
            .into_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        Ok(RasterImage::new(w, h, RasterKind::Grayscale, img.into_raw()))
    }

    /// Write a binary P5 PGM. Binary/skeleton rasters are emitted with ridge
    /// pixels dark (0) on a white (255) ground; grayscale is written as-is.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(self.pixels.len() + 32);
        write!(buf, "P5\n{} {}\n255\n", self.width, self.height)
            .expect("in-memory write cannot fail");
        match self.kind {
            RasterKind::Grayscale => buf.extend_from_slice(&self.pixels),
            _ => buf.extend(self.pixels.iter().map(|&p| if p != 0 { 0u8 } else { 255u8 })),
        }
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Eight-neighborhood offsets in circular order N, NE, E, SE, S, SW, W, NW
/// (y grows downward). Shared by thinning, crossing numbers, and tracing so
/// every stage agrees on what "adjacent" means.
pub(crate) const NBR8: [(i64, i64); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];

impl RasterImage {
    /// Ridge values of the eight neighbors of (x, y) in [`NBR8`] order;
    /// out-of-raster cells read as background.
    #[inline]
    pub(crate) fn neighborhood8(&self, x: i64, y: i64) -> [u8; 8] {
        let mut v = [0u8; 8];
        for (i, (dx, dy)) in NBR8.iter().enumerate() {
            v[i] = self.ridge_at(x + dx, y + dy);
        }
        v
    }
}

/// Per-pixel foreground mask produced by ROI segmentation. The mask is
/// constant within each `block_size` x `block_size` cell of the grid it was
/// computed on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoiMask {
    width: usize,
    height: usize,
    block_size: usize,
    mask: Vec<bool>,
}

impl RoiMask {
    pub fn new(width: usize, height: usize, block_size: usize, mask: Vec<bool>) -> Self {
        assert_eq!(mask.len(), width * height, "mask buffer size mismatch");
        RoiMask {
            width,
            height,
            block_size,
            mask,
        }
    }

    /// Mask accepting the whole raster; used where no segmentation ran.
    pub fn all_foreground(width: usize, height: usize) -> Self {
        RoiMask {
            width,
            height,
            block_size: width.max(height).max(1),
            mask: vec![true; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    #[inline]
    pub fn is_foreground(&self, x: usize, y: usize) -> bool {
        debug_assert!(x < self.width && y < self.height);
        self.mask[y * self.width + x]
    }

    /// Foreground test with out-of-bounds reading as background.
    #[inline]
    pub fn foreground_at(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            false
        } else {
            self.mask[y as usize * self.width + x as usize]
        }
    }

    pub fn count_foreground(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Quarter-turn companion of [`RasterImage::rotated90`].
    pub fn rotated90(&self) -> RoiMask {
        let (w, h) = (self.height, self.width);
        let mut mask = vec![false; w * h];
        for y in 0..self.height {
            for x in 0..self.width {
                let nx = self.height - 1 - y;
                let ny = x;
                mask[ny * w + nx] = self.mask[y * self.width + x];
            }
        }
        RoiMask {
            width: w,
            height: h,
            block_size: self.block_size,
            mask,
        }
    }
}
