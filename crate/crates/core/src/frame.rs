//! RGB24 raster primitives used by every pipeline stage.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bytes per pixel of the internal RGB24 format.
pub const BYTES_PER_PIXEL: usize = 3;

pub type Rgb = [u8; 3];

pub const BLACK: Rgb = [0, 0, 0];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("invalid resolution {width}x{height}")]
    InvalidResolution { width: u32, height: u32 },
    #[error("rect {rect:?} does not fit in a {width}x{height} frame")]
    OutOfBounds { rect: Rect, width: u32, height: u32 },
    #[error("pixel buffer has {actual} bytes, expected {expected}")]
    BufferLength { expected: usize, actual: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawResolution")]
pub struct Resolution {
    width: u32,
    height: u32,
}

#[derive(Deserialize)]
struct RawResolution {
    width: u32,
    height: u32,
}

impl TryFrom<RawResolution> for Resolution {
    type Error = FrameError;

    fn try_from(raw: RawResolution) -> Result<Self, Self::Error> {
        Resolution::new(raw.width, raw.height)
    }
}

impl Resolution {
    pub fn new(width: u32, height: u32) -> Result<Self, FrameError> {
        if width == 0 || height == 0 {
            return Err(FrameError::InvalidResolution { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn byte_len(&self) -> usize {
        self.pixel_count() * BYTES_PER_PIXEL
    }

    /// Largest resolution with this aspect ratio that fits inside `bounds`.
    ///
    /// Both dimensions are floored and clamped to at least one pixel.
    pub fn fit_within(&self, bounds: Resolution) -> Resolution {
        let (sw, sh) = (self.width as u64, self.height as u64);
        let (bw, bh) = (bounds.width as u64, bounds.height as u64);
        // width-limited when bw/sw <= bh/sh
        let (w, h) = if bw * sh <= bh * sw {
            (bw, sh * bw / sw)
        } else {
            (sw * bh / sh, bh)
        };
        Resolution {
            width: w.max(1) as u32,
            height: h.max(1) as u32,
        }
    }

    pub fn fits_in(&self, bounds: Resolution) -> bool {
        self.width <= bounds.width && self.height <= bounds.height
    }
}

impl std::fmt::Display for Resolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl Rect {
    pub fn new(x: u32, y: u32, width: u32, height: u32) -> Self {
        Self { x, y, width, height }
    }

    pub fn right(&self) -> u64 {
        self.x as u64 + self.width as u64
    }

    pub fn bottom(&self) -> u64 {
        self.y as u64 + self.height as u64
    }

    pub fn center(&self) -> (u32, u32) {
        (self.x + self.width / 2, self.y + self.height / 2)
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && (x as u64) < self.right() && y >= self.y && (y as u64) < self.bottom()
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        (self.x as u64) < other.right()
            && (other.x as u64) < self.right()
            && (self.y as u64) < other.bottom()
            && (other.y as u64) < self.bottom()
    }

    pub fn fits_in(&self, res: Resolution) -> bool {
        self.right() <= res.width as u64 && self.bottom() <= res.height as u64
    }

    /// Rect of size `inner` centered within `self`; offsets are floored.
    pub fn centered(&self, inner: Resolution) -> Rect {
        Rect {
            x: self.x + self.width.saturating_sub(inner.width) / 2,
            y: self.y + self.height.saturating_sub(inner.height) / 2,
            width: inner.width,
            height: inner.height,
        }
    }
}

/// An owned RGB24 raster plus the bookkeeping that travels with it.
///
/// `source_ordinal` is the camera ordinal for captured frames and 0 for
/// compositor output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    resolution: Resolution,
    pixels: Vec<u8>,
    pub source_ordinal: u32,
    pub seq: u64,
    pub timestamp_us: u64,
}

impl Frame {
    /// Frame filled with a single color; `seq` and `source_ordinal` are zero.
    pub fn blank(res: Resolution, color: Rgb) -> Frame {
        let pixels = if color == BLACK {
            vec![0; res.byte_len()]
        } else {
            color.repeat(res.pixel_count())
        };
        Frame {
            resolution: res,
            pixels,
            source_ordinal: 0,
            seq: 0,
            timestamp_us: 0,
        }
    }

    pub fn from_pixels(res: Resolution, pixels: Vec<u8>) -> Result<Frame, FrameError> {
        if pixels.len() != res.byte_len() {
            return Err(FrameError::BufferLength {
                expected: res.byte_len(),
                actual: pixels.len(),
            });
        }
        Ok(Frame {
            resolution: res,
            pixels,
            source_ordinal: 0,
            seq: 0,
            timestamp_us: 0,
        })
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    pub fn width(&self) -> u32 {
        self.resolution.width
    }

    pub fn height(&self) -> u32 {
        self.resolution.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.resolution.width as usize + x as usize) * BYTES_PER_PIXEL
    }

    /// Panics if (x, y) lies outside the frame.
    pub fn pixel(&self, x: u32, y: u32) -> Rgb {
        assert!(
            x < self.width() && y < self.height(),
            "pixel ({x},{y}) outside {}",
            self.resolution
        );
        let o = self.offset(x, y);
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, color: Rgb) {
        assert!(
            x < self.width() && y < self.height(),
            "pixel ({x},{y}) outside {}",
            self.resolution
        );
        let o = self.offset(x, y);
        self.pixels[o..o + 3].copy_from_slice(&color);
    }

    pub fn fill_rect(&mut self, rect: Rect, color: Rgb) -> Result<(), FrameError> {
        self.check_rect(rect)?;
        let row = color.repeat(rect.width as usize);
        for y in rect.y..rect.y + rect.height {
            let o = self.offset(rect.x, y);
            self.pixels[o..o + row.len()].copy_from_slice(&row);
        }
        Ok(())
    }

    fn check_rect(&self, rect: Rect) -> Result<(), FrameError> {
        if rect.fits_in(self.resolution) {
            Ok(())
        } else {
            Err(FrameError::OutOfBounds {
                rect,
                width: self.width(),
                height: self.height(),
            })
        }
    }

    /// Copies `src` into `self` with its top-left corner at `(x, y)`.
    pub fn blit(&mut self, src: &Frame, x: u32, y: u32) -> Result<(), FrameError> {
        let rect = Rect::new(x, y, src.width(), src.height());
        self.check_rect(rect)?;
        let row_len = src.width() as usize * BYTES_PER_PIXEL;
        for (row, src_row) in src.pixels.chunks_exact(row_len).enumerate() {
            let o = self.offset(x, y + row as u32);
            self.pixels[o..o + row_len].copy_from_slice(src_row);
        }
        Ok(())
    }

    /// Nearest-neighbor resample: output (x, y) takes source
    /// (⌊x·sw/tw⌋, ⌊y·sh/th⌋).
    pub fn scale_nearest(&self, target: Resolution) -> Frame {
        let mut out = Frame {
            resolution: target,
            pixels: vec![0; target.byte_len()],
            source_ordinal: self.source_ordinal,
            seq: self.seq,
            timestamp_us: self.timestamp_us,
        };
        if target == self.resolution {
            out.pixels.copy_from_slice(&self.pixels);
            return out;
        }
        let (sw, sh) = (self.width() as u64, self.height() as u64);
        let (tw, th) = (target.width as u64, target.height as u64);
        let col_src: Vec<usize> = (0..tw).map(|x| (x * sw / tw) as usize * BYTES_PER_PIXEL).collect();
        let src_row_len = sw as usize * BYTES_PER_PIXEL;
        let out_row_len = tw as usize * BYTES_PER_PIXEL;
        let mut prev_src_row = None;
        for y in 0..th as usize {
            let sy = (y as u64 * sh / th) as usize;
            let (done, rest) = out.pixels.split_at_mut(y * out_row_len);
            let out_row = &mut rest[..out_row_len];
            if prev_src_row == Some(sy) {
                out_row.copy_from_slice(&done[(y - 1) * out_row_len..]);
                continue;
            }
            let src_row = &self.pixels[sy * src_row_len..(sy + 1) * src_row_len];
            for (dst, &sx) in out_row.chunks_exact_mut(BYTES_PER_PIXEL).zip(&col_src) {
                dst.copy_from_slice(&src_row[sx..sx + BYTES_PER_PIXEL]);
            }
            prev_src_row = Some(sy);
        }
        out
    }

    /// FNV-1a over the pixel bytes; used to compare frames across runs.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self
            .resolution
            .width
            .to_le_bytes()
            .iter()
            .chain(&self.resolution.height.to_le_bytes())
            .chain(&self.pixels)
        {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h
    }
}
