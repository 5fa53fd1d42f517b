//! Builds the virtual camera's output frame in tiled or primary mode.
//!
//! Output pixel (0,0) always carries a provenance stamp so that anything
//! downstream (benchmarks, stream clients) can tell which view a frame shows
//! without knowing the layout:
//!
//! * primary mode: `(primary ordinal, primary seq mod 256, 255)`, the
//!   primary camera's own marker;
//! * tiled mode: `(0, tile count, 255)`.

use thiserror::Error;

use crate::frame::{Frame, FrameError, Rect, Resolution, BLACK};

/// Margin between thumbnails and the canvas edges, and between thumbnails.
pub const THUMBNAIL_MARGIN: u32 = 8;

/// Thumbnails are `canvas height / THUMBNAIL_DIVISOR` pixels tall.
pub const THUMBNAIL_DIVISOR: u32 = 5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CompositorError {
    #[error("primary camera {0} has no frame")]
    UnknownPrimary(u32),
    #[error("nothing to compose")]
    NoFrames,
    #[error("canvas {canvas} too small for {tiles} tiles")]
    CanvasTooSmall { canvas: Resolution, tiles: usize },
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// 4:3 canvas for a target height: `2·round(2h/3) × h`, 854×640 for h = 640.
pub fn canvas_for_height(height: u32) -> Resolution {
    let half_width = (2 * height as u64 + 1) / 3;
    Resolution::new((2 * half_width) as u32, height).expect("height >= 1")
}

/// Grid of `⌈√n⌉` columns filled row-major; remainder pixels go to the last
/// row and column.
pub fn tile_layout(n: usize, canvas: Resolution) -> Result<Vec<Rect>, CompositorError> {
    if n == 0 {
        return Err(CompositorError::NoFrames);
    }
    let mut cols = 1usize;
    while cols * cols < n {
        cols += 1;
    }
    let rows = n.div_ceil(cols);
    let (w, h) = (canvas.width(), canvas.height());
    if (w as usize) < cols || (h as usize) < rows {
        return Err(CompositorError::CanvasTooSmall { canvas, tiles: n });
    }
    let cell_w = w / cols as u32;
    let cell_h = h / rows as u32;
    let rects = (0..n)
        .map(|i| {
            let (c, r) = ((i % cols) as u32, (i / cols) as u32);
            let width = if c as usize == cols - 1 { w - cell_w * c } else { cell_w };
            let height = if r as usize == rows - 1 { h - cell_h * r } else { cell_h };
            Rect::new(c * cell_w, r * cell_h, width, height)
        })
        .collect();
    Ok(rects)
}

/// Provenance decoded from an output frame's stamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Primary { ordinal: u32, seq_byte: u8 },
    Tiled { tiles: u8 },
}

impl Provenance {
    /// The view a frame shows, ignoring the per-frame sequence byte.
    pub fn view_key(&self) -> (u32, u8) {
        match *self {
            Provenance::Primary { ordinal, .. } => (ordinal, 0),
            Provenance::Tiled { tiles } => (0, tiles),
        }
    }
}

pub fn decode_provenance(frame: &Frame) -> Option<Provenance> {
    let [a, b, c] = frame.pixel(0, 0);
    if c != 255 {
        return None;
    }
    Some(if a == 0 {
        Provenance::Tiled { tiles: b }
    } else {
        Provenance::Primary {
            ordinal: a as u32,
            seq_byte: b,
        }
    })
}

fn stamp(out: &mut Frame, prov: Provenance) {
    let px = match prov {
        Provenance::Primary { ordinal, seq_byte } => [ordinal as u8, seq_byte, 255],
        Provenance::Tiled { tiles } => [0, tiles, 255],
    };
    out.set_pixel(0, 0, px);
}

/// Scales `frame` to fit `cell` preserving aspect ratio and draws it
/// centered in the cell.
fn draw_fitted(out: &mut Frame, frame: &Frame, cell: Rect) -> Result<(), FrameError> {
    let bounds = Resolution::new(cell.width, cell.height)?;
    let fitted = frame.resolution().fit_within(bounds);
    let target = cell.centered(fitted);
    if fitted == frame.resolution() {
        out.blit(frame, target.x, target.y)
    } else {
        out.blit(&frame.scale_nearest(fitted), target.x, target.y)
    }
}

/// Tiled composition over `(ordinal, frame)` pairs in ordinal order.
pub fn compose_tiled(frames: &[(u32, &Frame)], canvas: Resolution) -> Result<Frame, CompositorError> {
    let slots: Vec<Option<&Frame>> = frames.iter().map(|(_, f)| Some(*f)).collect();
    compose_tiled_slots(&slots, canvas)
}

/// Like [`compose_tiled`] but cells whose camera has not delivered a frame
/// yet stay black.
pub(crate) fn compose_tiled_slots(slots: &[Option<&Frame>], canvas: Resolution) -> Result<Frame, CompositorError> {
    let cells = tile_layout(slots.len(), canvas)?;
    let mut out = Frame::blank(canvas, BLACK);
    for (cell, frame) in cells.iter().zip(slots) {
        if let Some(frame) = frame {
            draw_fitted(&mut out, frame, *cell)?;
        }
    }
    stamp(
        &mut out,
        Provenance::Tiled {
            tiles: slots.len() as u8,
        },
    );
    Ok(out)
}

/// Rects where thumbnails of the given resolutions are drawn, left to right
/// from the bottom-left corner. Thumbnails that would cross the right edge
/// are dropped (`None`).
pub fn thumbnail_layout(sizes: &[Resolution], canvas: Resolution) -> Vec<Option<Rect>> {
    let th = canvas.height() / THUMBNAIL_DIVISOR;
    let fits_vertically = th >= 1 && canvas.height() >= th + THUMBNAIL_MARGIN;
    let y = canvas.height().saturating_sub(th + THUMBNAIL_MARGIN);
    let mut x = THUMBNAIL_MARGIN as u64;
    sizes
        .iter()
        .map(|res| {
            if !fits_vertically {
                return None;
            }
            let tw = (res.width() as u64 * th as u64 / res.height() as u64).max(1);
            if x + tw > canvas.width() as u64 {
                return None;
            }
            let rect = Rect::new(x as u32, y, tw as u32, th);
            x += tw + THUMBNAIL_MARGIN as u64;
            Some(rect)
        })
        .collect()
}

/// Primary composition: the primary frame centered on a black canvas
/// (scaled down only when larger than the canvas), optionally overlaid with
/// thumbnails of the other cameras.
pub fn compose_primary(
    frames: &[(u32, &Frame)],
    primary: u32,
    canvas: Resolution,
    thumbnails: bool,
) -> Result<Frame, CompositorError> {
    let slots: Vec<(u32, Option<&Frame>)> = frames.iter().map(|(o, f)| (*o, Some(*f))).collect();
    compose_primary_slots(&slots, primary, canvas, thumbnails)
}

pub(crate) fn compose_primary_slots(
    slots: &[(u32, Option<&Frame>)],
    primary: u32,
    canvas: Resolution,
    thumbnails: bool,
) -> Result<Frame, CompositorError> {
    let primary_frame = slots
        .iter()
        .find(|(o, _)| *o == primary)
        .and_then(|(_, f)| *f)
        .ok_or(CompositorError::UnknownPrimary(primary))?;

    let mut out = Frame::blank(canvas, BLACK);
    let whole = Rect::new(0, 0, canvas.width(), canvas.height());
    if primary_frame.resolution().fits_in(canvas) {
        let at = whole.centered(primary_frame.resolution());
        out.blit(primary_frame, at.x, at.y)?;
    } else {
        draw_fitted(&mut out, primary_frame, whole)?;
    }

    if thumbnails {
        let others: Vec<&Frame> = slots
            .iter()
            .filter(|(o, _)| *o != primary)
            .filter_map(|(_, f)| *f)
            .collect();
        let sizes: Vec<Resolution> = others.iter().map(|f| f.resolution()).collect();
        for (frame, rect) in others.iter().zip(thumbnail_layout(&sizes, canvas)) {
            if let Some(rect) = rect {
                let res = Resolution::new(rect.width, rect.height)?;
                out.blit(&frame.scale_nearest(res), rect.x, rect.y)?;
            }
        }
    }

    stamp(
        &mut out,
        Provenance::Primary {
            ordinal: primary,
            seq_byte: (primary_frame.seq % 256) as u8,
        },
    );
    Ok(out)
}
