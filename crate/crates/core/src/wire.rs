//! Messages exposed to viewers: binary frame messages and JSON state.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{Frame, Resolution};
use crate::session::{PeerId, Session};
use crate::switching::{SwitchStrategy, ViewState};

pub const FRAME_MAGIC: [u8; 4] = *b"MCAM";
pub const FRAME_VERSION: u8 = 1;
pub const FRAME_HEADER_LEN: usize = 22;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("message shorter than the {FRAME_HEADER_LEN}-byte header")]
    Truncated,
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown peer byte {0:#04x}")]
    BadPeer(u8),
    #[error("zero-sized frame")]
    BadResolution,
    #[error("body is {actual} bytes, header says {expected}")]
    BodyLength { expected: usize, actual: usize },
}

/// One composed frame of one peer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameMessage {
    pub peer: PeerId,
    pub frame: Frame,
}

impl FrameMessage {
    pub fn encode(&self) -> Vec<u8> {
        encode_frame(self.peer, &self.frame)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        decode_frame(bytes)
    }
}

/// Header (magic, version, peer, width, height, seq, timestamp; integers
/// big-endian) followed by the RGB24 rows.
pub fn encode_frame(peer: PeerId, frame: &Frame) -> Vec<u8> {
    let mut out = Vec::with_capacity(FRAME_HEADER_LEN + frame.pixels().len());
    out.extend_from_slice(&FRAME_MAGIC);
    out.push(FRAME_VERSION);
    out.push(peer.as_byte());
    out.extend_from_slice(&(frame.width() as u16).to_be_bytes());
    out.extend_from_slice(&(frame.height() as u16).to_be_bytes());
    out.extend_from_slice(&(frame.seq as u32).to_be_bytes());
    out.extend_from_slice(&frame.timestamp_us.to_be_bytes());
    out.extend_from_slice(frame.pixels());
    out
}

pub fn decode_frame(bytes: &[u8]) -> Result<FrameMessage, WireError> {
    if bytes.len() < FRAME_HEADER_LEN {
        return Err(WireError::Truncated);
    }
    let (h, body) = bytes.split_at(FRAME_HEADER_LEN);
    let magic: [u8; 4] = h[0..4].try_into().expect("4 bytes");
    if magic != FRAME_MAGIC {
        return Err(WireError::BadMagic(magic));
    }
    if h[4] != FRAME_VERSION {
        return Err(WireError::BadVersion(h[4]));
    }
    let peer = PeerId::from_byte(h[5]).ok_or(WireError::BadPeer(h[5]))?;
    let width = u16::from_be_bytes([h[6], h[7]]);
    let height = u16::from_be_bytes([h[8], h[9]]);
    let seq = u32::from_be_bytes(h[10..14].try_into().expect("4 bytes"));
    let timestamp_us = u64::from_be_bytes(h[14..22].try_into().expect("8 bytes"));
    let res = Resolution::new(width.into(), height.into()).map_err(|_| WireError::BadResolution)?;
    if body.len() != res.byte_len() {
        return Err(WireError::BodyLength {
            expected: res.byte_len(),
            actual: body.len(),
        });
    }
    let mut frame = Frame::from_pixels(res, body.to_vec()).expect("length checked");
    frame.seq = seq.into();
    frame.timestamp_us = timestamp_us;
    Ok(FrameMessage { peer, frame })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Tiled,
    Primary,
}

/// A peer's switching state as reported to viewers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateMessage {
    pub peer: PeerId,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primary_ordinal: Option<u32>,
    pub num_cams: u32,
    pub strategy: SwitchStrategy,
}

impl StateMessage {
    pub fn new(peer: PeerId, state: ViewState, num_cams: u32, strategy: SwitchStrategy) -> Self {
        let (mode, primary_ordinal) = match state {
            ViewState::Tiled => (Mode::Tiled, None),
            ViewState::Primary(p) => (Mode::Primary, Some(p)),
        };
        Self {
            peer,
            mode,
            primary_ordinal,
            num_cams,
            strategy,
        }
    }

    pub fn of(session: &Session, peer: PeerId) -> Self {
        let pipeline = session.peer(peer).pipeline();
        Self::new(peer, pipeline.state(), pipeline.num_cams(), pipeline.strategy())
    }

    pub fn view_state(&self) -> Option<ViewState> {
        match (self.mode, self.primary_ordinal) {
            (Mode::Tiled, None) => Some(ViewState::Tiled),
            (Mode::Primary, Some(p)) if (1..=self.num_cams).contains(&p) => Some(ViewState::Primary(p)),
            _ => None,
        }
    }
}

/// One registry entry as listed to viewers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraInfo {
    pub ordinal: u32,
    pub name: String,
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    pub format: crate::sources::PixelFormat,
    pub warm_up_ms: u64,
    pub latency_ms: u64,
}

pub fn camera_listing(session: &Session, peer: PeerId) -> Vec<CameraInfo> {
    session
        .peer(peer)
        .pipeline()
        .registry()
        .entries()
        .iter()
        .map(|e| CameraInfo {
            ordinal: e.ordinal,
            name: e.spec.name.clone(),
            width: e.selected.resolution.width(),
            height: e.selected.resolution.height(),
            fps: e.selected.fps,
            format: e.selected.format,
            warm_up_ms: e.spec.warm_up_ms,
            latency_ms: e.spec.latency_ms,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let mut f = Frame::blank(Resolution::new(2, 1).unwrap(), [1, 2, 3]);
        f.seq = 0x0102_0304;
        f.timestamp_us = 0x1122_3344_5566_7788;
        let bytes = encode_frame(PeerId::B, &f);
        assert_eq!(
            &bytes[..FRAME_HEADER_LEN],
            &[b'M', b'C', b'A', b'M', 1, b'B', 0, 2, 0, 1, 1, 2, 3, 4, 0x11, 0x22, 0x33, 0x44, 0x55, 0x66, 0x77, 0x88]
        );
        assert_eq!(&bytes[FRAME_HEADER_LEN..], &[1, 2, 3, 1, 2, 3]);
    }

    #[test]
    fn decode_errors() {
        let f = Frame::blank(Resolution::new(2, 2).unwrap(), [0, 0, 0]);
        let good = encode_frame(PeerId::A, &f);
        assert_eq!(decode_frame(&good[..21]), Err(WireError::Truncated));
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_frame(&bad), Err(WireError::BadMagic(_))));
        let mut bad = good.clone();
        bad[4] = 2;
        assert_eq!(decode_frame(&bad), Err(WireError::BadVersion(2)));
        let mut bad = good.clone();
        bad[5] = b'C';
        assert_eq!(decode_frame(&bad), Err(WireError::BadPeer(b'C')));
        assert_eq!(
            decode_frame(&good[..good.len() - 1]),
            Err(WireError::BodyLength {
                expected: 12,
                actual: 11
            })
        );
        let mut bad = good.clone();
        bad[6..8].copy_from_slice(&[0, 0]);
        assert_eq!(decode_frame(&bad), Err(WireError::BadResolution));
    }

    #[test]
    fn state_json() {
        let tiled = StateMessage::new(PeerId::A, ViewState::Tiled, 2, SwitchStrategy::AllAtOnce);
        assert_eq!(
            serde_json::to_string(&tiled).unwrap(),
            r#"{"peer":"A","mode":"tiled","num_cams":2,"strategy":"all_at_once"}"#
        );
        let primary = StateMessage::new(PeerId::B, ViewState::Primary(3), 3, SwitchStrategy::OneAtATime);
        assert_eq!(
            serde_json::to_string(&primary).unwrap(),
            r#"{"peer":"B","mode":"primary","primary_ordinal":3,"num_cams":3,"strategy":"one_at_a_time"}"#
        );
        assert_eq!(primary.view_state(), Some(ViewState::Primary(3)));
        let back: StateMessage =
            serde_json::from_str(r#"{"peer":"A","mode":"tiled","num_cams":2,"strategy":"all_at_once"}"#).unwrap();
        assert_eq!(back, tiled);
    }

    proptest! {
        #[test]
        fn frame_round_trip(w in 1u32..16, h in 1u32..16, seq in any::<u32>(), ts in any::<u64>(), seed in any::<u8>(), b in any::<bool>()) {
            let res = Resolution::new(w, h).unwrap();
            let pixels: Vec<u8> = (0..res.byte_len()).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)).collect();
            let mut f = Frame::from_pixels(res, pixels).unwrap();
            f.seq = seq.into();
            f.timestamp_us = ts;
            let peer = if b { PeerId::A } else { PeerId::B };
            let bytes = encode_frame(peer, &f);
            prop_assert_eq!(bytes.len(), FRAME_HEADER_LEN + res.byte_len());
            let msg = decode_frame(&bytes).unwrap();
            prop_assert_eq!(msg.peer, peer);
            prop_assert_eq!(msg.frame.pixels(), f.pixels());
            prop_assert_eq!(msg.frame.seq, f.seq);
            prop_assert_eq!(msg.frame.timestamp_us, ts);
            prop_assert_eq!(msg.encode(), bytes);
        }
    }
}
