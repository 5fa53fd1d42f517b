use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::protocol::ImSettings;
use crate::sources::{CameraSpec, Capability, DEFAULT_TARGET_HEIGHT};
use crate::switching::PipelineConfig;

use super::{PeerId, SessionError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    /// Virtual clock advanced only by `step`.
    #[default]
    Deterministic,
    /// Virtual clock follows elapsed wall time.
    Wall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkConfig {
    pub a_to_b_ms: u64,
    pub b_to_a_ms: u64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            a_to_b_ms: 25,
            b_to_a_ms: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeerConfig {
    /// Chat user name; the application stream is `<user>:1`.
    pub user: Option<String>,
    pub has_app: bool,
    pub target_height: u32,
    /// Virtual cameras to keep despite the exclusion rule.
    pub whitelist: Vec<String>,
    pub pipeline: PipelineConfig,
    pub im: ImSettings,
    pub cameras: Vec<CameraSpec>,
}

impl Default for PeerConfig {
    fn default() -> Self {
        Self {
            user: None,
            has_app: true,
            target_height: DEFAULT_TARGET_HEIGHT,
            whitelist: Vec::new(),
            pipeline: PipelineConfig::default(),
            im: ImSettings::default(),
            cameras: Vec::new(),
        }
    }
}

impl PeerConfig {
    /// `n` identical 640×480 RGB24 cameras at 30 fps.
    pub fn with_cameras(n: usize) -> Self {
        let cameras = (1..=n)
            .map(|i| {
                CameraSpec::new(format!("cam{i}"), vec![Capability::rgb(640, 480, 30.0)]).expect("static capability")
            })
            .collect();
        Self {
            cameras,
            ..Self::default()
        }
    }

    pub fn user_name(&self, id: PeerId) -> String {
        self.user.clone().unwrap_or_else(|| format!("user{id}"))
    }
}

/// An omitted peer section takes that peer's default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peers {
    #[serde(rename = "A", default = "default_peer_a")]
    pub a: PeerConfig,
    #[serde(rename = "B", default = "default_peer_b")]
    pub b: PeerConfig,
}

fn default_peer_a() -> PeerConfig {
    PeerConfig::with_cameras(2)
}

fn default_peer_b() -> PeerConfig {
    PeerConfig::with_cameras(3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub seed: u64,
    pub clock: ClockMode,
    pub link: LinkConfig,
    /// Oldest events are dropped beyond this many; unbounded when absent.
    pub log_limit: Option<usize>,
    pub peers: Peers,
}

impl Default for SessionConfig {
    /// Peer A with two cameras, peer B with three, 25 ms each way.
    fn default() -> Self {
        Self {
            seed: 0,
            clock: ClockMode::Deterministic,
            link: LinkConfig::default(),
            log_limit: None,
            peers: Peers {
                a: default_peer_a(),
                b: default_peer_b(),
            },
        }
    }
}

impl SessionConfig {
    pub fn peer(&self, id: PeerId) -> &PeerConfig {
        match id {
            PeerId::A => &self.peers.a,
            PeerId::B => &self.peers.b,
        }
    }

    pub fn peer_mut(&mut self, id: PeerId) -> &mut PeerConfig {
        match id {
            PeerId::A => &mut self.peers.a,
            PeerId::B => &mut self.peers.b,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, SessionError> {
        toml::from_str(s).map_err(|e| SessionError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SessionError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| SessionError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("session config serializes")
    }
}
