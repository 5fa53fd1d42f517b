//! Synthetic camera sources, capability selection and the ordered camera
//! registry.
//!
//! Every synthetic camera paints a solid background whose color identifies
//! its ordinal, and stamps `(ordinal, seq mod 256, 255)` at pixel (0,0).
//! Compositor and benchmark tests decode both to check where an output
//! pixel came from.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{Frame, FrameError, Resolution, Rgb};

/// Target image height used when nothing else is configured.
pub const DEFAULT_TARGET_HEIGHT: u32 = 640;

/// Frame rate requested from every camera when available.
pub const PREFERRED_FPS: f64 = 30.0;

/// Hue step between consecutive ordinals; odd, so ordinals 1..=255 map to
/// distinct hues.
const HUE_STEP: u32 = 75;

/// Highest ordinal whose background color decodes unambiguously.
pub const MAX_ORDINAL: u32 = 255;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SourceError {
    #[error("camera `{0}` declares no capabilities")]
    NoCapabilities(String),
    #[error("camera `{name}` has non-positive frame rate {fps}")]
    BadFrameRate { name: String, fps: f64 },
    #[error("no usable cameras after excluding virtual devices")]
    NoUsableCameras,
    #[error("too many cameras: {0} (max {MAX_ORDINAL})")]
    TooManyCameras(usize),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PixelFormat {
    Rgb24,
    /// Anything else the camera offers. Content is still produced as RGB24;
    /// the conversion stage shows up only as extra latency.
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCapability", into = "RawCapability")]
pub struct Capability {
    pub resolution: Resolution,
    pub format: PixelFormat,
    pub fps: f64,
}

#[derive(Serialize, Deserialize)]
struct RawCapability {
    width: u32,
    height: u32,
    #[serde(default = "default_format")]
    format: PixelFormat,
    fps: f64,
}

fn default_format() -> PixelFormat {
    PixelFormat::Rgb24
}

impl TryFrom<RawCapability> for Capability {
    type Error = SourceError;

    fn try_from(raw: RawCapability) -> Result<Self, Self::Error> {
        Capability::new(Resolution::new(raw.width, raw.height)?, raw.format, raw.fps)
    }
}

impl From<Capability> for RawCapability {
    fn from(c: Capability) -> Self {
        RawCapability {
            width: c.resolution.width(),
            height: c.resolution.height(),
            format: c.format,
            fps: c.fps,
        }
    }
}

impl Capability {
    pub fn new(resolution: Resolution, format: PixelFormat, fps: f64) -> Result<Self, SourceError> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(SourceError::BadFrameRate {
                name: String::new(),
                fps,
            });
        }
        Ok(Self {
            resolution,
            format,
            fps,
        })
    }

    /// Shorthand for an RGB24 capability; panics on invalid input.
    pub fn rgb(width: u32, height: u32, fps: f64) -> Self {
        Self::new(
            Resolution::new(width, height).expect("valid resolution"),
            PixelFormat::Rgb24,
            fps,
        )
        .expect("valid fps")
    }

    pub fn height(&self) -> u32 {
        self.resolution.height()
    }

    pub fn is_preferred_format(&self) -> bool {
        self.format == PixelFormat::Rgb24 && is_preferred_fps(self.fps)
    }

    /// Microseconds between frame `k` and frame 0 at this capability's rate.
    pub fn frame_offset_us(&self, k: u64) -> u64 {
        frame_offset_us(k, self.fps)
    }
}

fn is_preferred_fps(fps: f64) -> bool {
    (fps - PREFERRED_FPS).abs() < 1e-9
}

/// ⌊k·10⁶/fps⌋, exact for integral rates.
pub fn frame_offset_us(k: u64, fps: f64) -> u64 {
    if fps.fract() == 0.0 && fps <= u32::MAX as f64 {
        (k as u128 * 1_000_000 / fps as u128) as u64
    } else {
        (k as f64 * 1e6 / fps + 1e-6).floor() as u64
    }
}

/// Number of whole frames at `fps` that fit in `elapsed_us`, i.e. the largest
/// `k` with `frame_offset_us(k) <= elapsed_us`.
pub fn frames_elapsed(elapsed_us: u64, fps: f64) -> u64 {
    let mut k = (elapsed_us as f64 * fps / 1e6).floor() as u64;
    while k > 0 && frame_offset_us(k, fps) > elapsed_us {
        k -= 1;
    }
    while frame_offset_us(k + 1, fps) <= elapsed_us {
        k += 1;
    }
    k
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCameraSpec", into = "RawCameraSpec")]
pub struct CameraSpec {
    pub name: String,
    capabilities: Vec<Capability>,
    pub warm_up_ms: u64,
    pub latency_ms: u64,
    pub is_virtual: bool,
    /// Extra delivery latency when the selected capability is not RGB24.
    pub conversion_latency_ms: u64,
}

#[derive(Serialize, Deserialize)]
struct RawCameraSpec {
    name: String,
    capabilities: Vec<Capability>,
    #[serde(default)]
    warm_up_ms: u64,
    #[serde(default)]
    latency_ms: u64,
    #[serde(default)]
    is_virtual: bool,
    #[serde(default)]
    conversion_latency_ms: u64,
}

impl TryFrom<RawCameraSpec> for CameraSpec {
    type Error = SourceError;

    fn try_from(raw: RawCameraSpec) -> Result<Self, Self::Error> {
        let mut spec = CameraSpec::new(raw.name, raw.capabilities)?;
        spec.warm_up_ms = raw.warm_up_ms;
        spec.latency_ms = raw.latency_ms;
        spec.is_virtual = raw.is_virtual;
        spec.conversion_latency_ms = raw.conversion_latency_ms;
        Ok(spec)
    }
}

impl From<CameraSpec> for RawCameraSpec {
    fn from(s: CameraSpec) -> Self {
        RawCameraSpec {
            name: s.name,
            capabilities: s.capabilities,
            warm_up_ms: s.warm_up_ms,
            latency_ms: s.latency_ms,
            is_virtual: s.is_virtual,
            conversion_latency_ms: s.conversion_latency_ms,
        }
    }
}

impl CameraSpec {
    pub fn new(name: impl Into<String>, capabilities: Vec<Capability>) -> Result<Self, SourceError> {
        let name = name.into();
        if capabilities.is_empty() {
            return Err(SourceError::NoCapabilities(name));
        }
        if let Some(bad) = capabilities.iter().find(|c| c.fps.is_nan() || c.fps <= 0.0) {
            return Err(SourceError::BadFrameRate { name, fps: bad.fps });
        }
        Ok(Self {
            name,
            capabilities,
            warm_up_ms: 0,
            latency_ms: 0,
            is_virtual: false,
            conversion_latency_ms: 0,
        })
    }

    pub fn with_warm_up_ms(mut self, ms: u64) -> Self {
        self.warm_up_ms = ms;
        self
    }

    pub fn with_latency_ms(mut self, ms: u64) -> Self {
        self.latency_ms = ms;
        self
    }

    pub fn virtual_device(mut self) -> Self {
        self.is_virtual = true;
        self
    }

    pub fn capabilities(&self) -> &[Capability] {
        &self.capabilities
    }

    /// Capture-to-delivery latency for the given selected capability.
    pub fn delivery_latency_ms(&self, selected: &Capability) -> u64 {
        match selected.format {
            PixelFormat::Rgb24 => self.latency_ms,
            PixelFormat::Other => self.latency_ms + self.conversion_latency_ms,
        }
    }
}

pub fn enumerate_capabilities(spec: &CameraSpec) -> Vec<Capability> {
    spec.capabilities.to_vec()
}

/// Picks the capability with the largest height not exceeding
/// `target_height`, falling back to the smallest height when nothing fits.
///
/// Among equal heights the ranking is: RGB24 at 30 fps, then RGB24, then
/// 30 fps, then higher fps. Identical keys keep declared order.
pub fn select_capability(caps: &[Capability], target_height: u32) -> Capability {
    assert!(!caps.is_empty(), "select_capability needs at least one capability");
    let chosen_height = caps
        .iter()
        .map(Capability::height)
        .filter(|&h| h <= target_height)
        .max()
        .unwrap_or_else(|| caps.iter().map(Capability::height).min().unwrap());

    let rank = |c: &Capability| {
        (
            c.is_preferred_format(),
            c.format == PixelFormat::Rgb24,
            is_preferred_fps(c.fps),
            c.fps,
        )
    };
    let mut best: Option<&Capability> = None;
    for cap in caps.iter().filter(|c| c.height() == chosen_height) {
        match best {
            Some(b) if rank(cap).partial_cmp(&rank(b)) != Some(std::cmp::Ordering::Greater) => {}
            _ => best = Some(cap),
        }
    }
    *best.expect("at least one capability at chosen height")
}

/// Background color for a hue byte: fully saturated, full value.
pub fn palette_color(hue: u8) -> Rgb {
    let pos = hue as u32 * 6;
    let frac = (pos % 256) as u8;
    let (rise, fall) = (frac, 255 - frac);
    match pos / 256 {
        0 => [255, rise, 0],
        1 => [fall, 255, 0],
        2 => [0, 255, rise],
        3 => [0, fall, 255],
        4 => [rise, 0, 255],
        _ => [255, 0, fall],
    }
}

pub fn ordinal_hue(ordinal: u32) -> u8 {
    ((ordinal * HUE_STEP) % 256) as u8
}

pub fn ordinal_color(ordinal: u32) -> Rgb {
    palette_color(ordinal_hue(ordinal))
}

/// Inverse of [`ordinal_color`] over 1..=[`MAX_ORDINAL`].
pub fn decode_ordinal(color: Rgb) -> Option<u32> {
    (1..=MAX_ORDINAL).find(|&o| ordinal_color(o) == color)
}

/// The provenance marker a synthetic camera writes at pixel (0,0).
pub fn marker(ordinal: u32, seq: u64) -> Rgb {
    [ordinal as u8, (seq % 256) as u8, 255]
}

/// Deterministic test-pattern frame for camera `ordinal`.
pub fn synth_frame(ordinal: u32, cap: &Capability, seq: u64) -> Frame {
    let mut frame = Frame::blank(cap.resolution, ordinal_color(ordinal));
    stamp_synth(&mut frame, ordinal, cap, seq);
    frame
}

/// Rewrites the per-frame fields of a frame produced by [`synth_frame`] so
/// the background does not have to be repainted.
pub(crate) fn stamp_synth(frame: &mut Frame, ordinal: u32, cap: &Capability, seq: u64) {
    frame.set_pixel(0, 0, marker(ordinal, seq));
    frame.source_ordinal = ordinal;
    frame.seq = seq;
    frame.timestamp_us = cap.frame_offset_us(seq);
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegistryEntry {
    pub ordinal: u32,
    pub spec: CameraSpec,
    pub selected: Capability,
}

/// Cameras in enumeration order, numbered 1..=N.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Registry {
    entries: Vec<RegistryEntry>,
}

impl Registry {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[RegistryEntry] {
        &self.entries
    }

    pub fn get(&self, ordinal: u32) -> Option<&RegistryEntry> {
        (ordinal as usize).checked_sub(1).and_then(|i| self.entries.get(i))
    }

    /// Registry restricted to the given ordinals, renumbered 1..=k in the
    /// order given.
    pub fn subset(&self, ordinals: &[u32]) -> Option<Registry> {
        let entries = ordinals
            .iter()
            .enumerate()
            .map(|(i, &o)| {
                self.get(o).map(|e| RegistryEntry {
                    ordinal: i as u32 + 1,
                    ..e.clone()
                })
            })
            .collect::<Option<Vec<_>>>()?;
        (!entries.is_empty()).then_some(Registry { entries })
    }
}

/// Drops virtual cameras (unless whitelisted by name), numbers survivors in
/// input order and selects a capability for each.
pub fn build_registry(specs: &[CameraSpec], target_height: u32, whitelist: &[String]) -> Result<Registry, SourceError> {
    let entries: Vec<RegistryEntry> = specs
        .iter()
        .filter(|s| !s.is_virtual || whitelist.iter().any(|w| w == &s.name))
        .enumerate()
        .map(|(i, spec)| RegistryEntry {
            ordinal: i as u32 + 1,
            selected: select_capability(&spec.capabilities, target_height),
            spec: spec.clone(),
        })
        .collect();
    if entries.is_empty() {
        return Err(SourceError::NoUsableCameras);
    }
    if entries.len() > MAX_ORDINAL as usize {
        return Err(SourceError::TooManyCameras(entries.len()));
    }
    Ok(Registry { entries })
}
