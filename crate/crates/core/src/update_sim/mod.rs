//! Sandboxed model of the Android and Windows update flows and of a
//! man-in-the-middle on the update channel.
//!
//! Everything runs in-process: the "server" is a struct, the "network" is a
//! trait object, the "disk" is a temporary directory, and "executing" a
//! download only records an [`UpdateOutcome`].

mod artifact;
mod fs;
mod proxy;
mod scenario;
mod server;
mod victim;

pub use artifact::{ApkManifest, ArtifactSpec, MockCa, Program, SignedBlob, VENDOR_SIGNER};
pub use fs::{normalize, FsError, FsWrite, VirtualFs};
pub use proxy::{ForgeScript, KeySource, MetadataForgery, MitmProxy};
pub use scenario::{acceptance_scenarios, builtin_scenarios, run_scenario, Expectation, Scenario, ScenarioResult, VictimSpec};
pub use server::{MockUpdateServer, ANDROID_PACKAGE, INSTALL_PATH, WINDOWS_TEMP_DIR};
pub use victim::{victim_update_android, victim_update_windows, AndroidVictim, InstalledApp, WindowsVictim};

use std::cmp::Ordering;

use md5::Md5;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::wup::{MessageKind, WupMessage};

pub fn md5_digest(bytes: &[u8]) -> [u8; 16] {
    Md5::digest(bytes).into()
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Compare dotted numeric versions; missing or non-numeric parts count as 0.
pub fn compare_versions(a: &str, b: &str) -> Ordering {
    let parse = |s: &str| -> Vec<u64> { s.split('.').map(|p| p.trim().parse().unwrap_or(0)).collect() };
    let (mut x, mut y) = (parse(a), parse(b));
    let len = x.len().max(y.len());
    x.resize(len, 0);
    y.resize(len, 0);
    x.cmp(&y)
}

/// How the Android client decrypts update responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CryptoMode {
    /// Responses under the hard-coded TEA key.
    V63,
    /// Responses under the per-request AES session key.
    V65,
}

impl CryptoMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CryptoMode::V63 => "v63",
            CryptoMode::V65 => "v65",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    AndroidWup,
    WindowsJson,
}

/// What the update server tells the client to fetch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateMetadata {
    pub variant: Variant,
    pub url: String,
    pub md5: [u8; 16],
    pub save_as: Option<String>,
    pub version: String,
}

impl UpdateMetadata {
    pub fn to_wup(&self) -> WupMessage {
        debug_assert!(self.save_as.is_none());
        WupMessage::new(MessageKind::UpdateInfo)
            .with_field("update", "1")
            .with_field("url", self.url.as_str())
            .with_field("md5", hex::encode(self.md5))
            .with_field("version", self.version.as_str())
    }

    /// `Ok(None)` when the server says there is no update.
    pub fn from_wup(msg: &WupMessage) -> Result<Option<Self>, &'static str> {
        if msg.kind != MessageKind::UpdateInfo {
            return Err("not an update response");
        }
        match msg.field_str("update") {
            Some("0") => return Ok(None),
            Some("1") => {}
            _ => return Err("missing update flag"),
        }
        Ok(Some(UpdateMetadata {
            variant: Variant::AndroidWup,
            url: msg.field_str("url").ok_or("missing url")?.to_string(),
            md5: parse_md5(msg.field_str("md5").ok_or("missing md5")?)?,
            save_as: None,
            version: msg.field_str("version").ok_or("missing version")?.to_string(),
        }))
    }

    pub fn no_update_wup() -> WupMessage {
        WupMessage::new(MessageKind::UpdateInfo).with_field("update", "0")
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "update": true,
            "version": self.version,
            "url": self.url,
            "md5": hex::encode(self.md5),
            "save_as": self.save_as,
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Option<Self>, &'static str> {
        match v.get("update").and_then(|u| u.as_bool()) {
            Some(false) => return Ok(None),
            Some(true) => {}
            None => return Err("missing update flag"),
        }
        let s = |k: &str| v.get(k).and_then(|x| x.as_str());
        Ok(Some(UpdateMetadata {
            variant: Variant::WindowsJson,
            url: s("url").ok_or("missing url")?.to_string(),
            md5: parse_md5(s("md5").ok_or("missing md5")?)?,
            save_as: Some(s("save_as").ok_or("missing save_as")?.to_string()),
            version: s("version").ok_or("missing version")?.to_string(),
        }))
    }
}

fn parse_md5(s: &str) -> Result<[u8; 16], &'static str> {
    let bytes = hex::decode(s).map_err(|_| "md5 is not hex")?;
    bytes.try_into().map_err(|_| "md5 must be 16 bytes")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstallPrompt {
    /// The system offers to upgrade the installed app.
    Upgrade,
    /// The package is not installed; the system offers a fresh install.
    NewPackage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    NoResponse,
    NoUpdate,
    DecryptFailure,
    MalformedMetadata,
    Downgrade,
    DownloadFailed,
    HashMismatch,
    FsRefused,
    SignatureInvalid,
    SignerMismatch,
    InvalidPackage,
    TransportAuthFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecondStage {
    pub program: String,
    pub url: String,
    pub digest: String,
    pub signed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum UpdateOutcome {
    /// The OS install prompt was shown for this package.
    Install {
        prompt: InstallPrompt,
        package: String,
        version: String,
        digest: String,
    },
    /// The downloaded program was launched.
    Execute {
        signer: String,
        program: String,
        digest: String,
        second_stage: Option<SecondStage>,
    },
    Halt {
        reason: HaltReason,
    },
}

impl UpdateOutcome {
    pub fn halt(reason: HaltReason) -> Self {
        UpdateOutcome::Halt { reason }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            UpdateOutcome::Install { .. } => "install",
            UpdateOutcome::Execute { .. } => "execute",
            UpdateOutcome::Halt { .. } => "halt",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UpdateReport {
    #[serde(flatten)]
    pub outcome: UpdateOutcome,
    /// Step-by-step log of what the client did.
    pub trace: Vec<String>,
}

/// One hop of the update conversation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UpdateRequest {
    /// Session-wrapped WUP update query.
    AndroidQuery(Vec<u8>),
    /// Plain JSON update query.
    WindowsQuery(Vec<u8>),
    Download(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChannelError {
    #[error("no response")]
    NoResponse,
    #[error("not found: {0}")]
    NotFound(String),
    /// The forge script could not do what it was asked.
    #[error("attack script failed: {0}")]
    Script(String),
}

/// Anything that carries update traffic: the server itself, or a proxy in
/// front of it.
pub trait UpdateChannel {
    fn send(&mut self, req: &UpdateRequest) -> Result<Vec<u8>, ChannelError>;
}

impl<C: UpdateChannel + ?Sized> UpdateChannel for &mut C {
    fn send(&mut self, req: &UpdateRequest) -> Result<Vec<u8>, ChannelError> {
        (**self).send(req)
    }
}

impl<C: UpdateChannel + ?Sized> UpdateChannel for Box<C> {
    fn send(&mut self, req: &UpdateRequest) -> Result<Vec<u8>, ChannelError> {
        (**self).send(req)
    }
}

/// Whether replies carry an integrity tag only the real server can make,
/// the way a pinned TLS connection would.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    #[default]
    Plain,
    Authenticated,
}

const TRANSPORT_KEY: &[u8] = b"pinned transport key (server and client only)";

impl Transport {
    pub(crate) fn wrap(self, body: Vec<u8>) -> Vec<u8> {
        match self {
            Transport::Plain => body,
            Transport::Authenticated => {
                let mut out = transport_tag(&body).to_vec();
                out.extend_from_slice(&body);
                out
            }
        }
    }

    /// `None` when the tag does not verify.
    pub(crate) fn unwrap(self, bytes: Vec<u8>) -> Option<Vec<u8>> {
        match self {
            Transport::Plain => Some(bytes),
            Transport::Authenticated => {
                if bytes.len() < 32 {
                    return None;
                }
                let (tag, body) = bytes.split_at(32);
                (tag == transport_tag(body)).then(|| body.to_vec())
            }
        }
    }
}

fn transport_tag(body: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(TRANSPORT_KEY);
    h.update(body);
    h.finalize().into()
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Fs(#[from] FsError),
    #[error("scenario: {0}")]
    Scenario(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn md5_reference_vectors() {
        assert_eq!(hex::encode(md5_digest(b"")), "d41d8cd98f00b204e9800998ecf8427e");
        assert_eq!(hex::encode(md5_digest(b"abc")), "900150983cd24fb0d6963f7d28e17f72");
        assert_eq!(md5_digest(b"same"), md5_digest(b"same"));
    }

    #[test]
    fn version_ordering() {
        assert_eq!(compare_versions("6.3.0.1920", "6.5.0.2170"), Ordering::Less);
        assert_eq!(compare_versions("10.0", "9.9.9"), Ordering::Greater);
        assert_eq!(compare_versions("1.0", "1.0.0"), Ordering::Equal);
    }

    #[test]
    fn metadata_roundtrips() {
        let m = UpdateMetadata {
            variant: Variant::AndroidWup,
            url: "http://x/a.apk".into(),
            md5: md5_digest(b"a"),
            save_as: None,
            version: "7.0".into(),
        };
        assert_eq!(UpdateMetadata::from_wup(&m.to_wup()).unwrap(), Some(m.clone()));
        assert_eq!(UpdateMetadata::from_wup(&UpdateMetadata::no_update_wup()).unwrap(), None);
        let w = UpdateMetadata {
            variant: Variant::WindowsJson,
            save_as: Some("setup.exe".into()),
            ..m
        };
        assert_eq!(UpdateMetadata::from_json(&w.to_json()).unwrap(), Some(w));
        assert!(UpdateMetadata::from_json(&serde_json::json!({"update": true, "url": "u"})).is_err());
    }

    #[test]
    fn transport_tag_detects_changes() {
        let wrapped = Transport::Authenticated.wrap(b"body".to_vec());
        assert_eq!(Transport::Authenticated.unwrap(wrapped.clone()), Some(b"body".to_vec()));
        let mut bad = wrapped;
        *bad.last_mut().unwrap() ^= 1;
        assert_eq!(Transport::Authenticated.unwrap(bad), None);
        assert_eq!(Transport::Authenticated.unwrap(b"body".to_vec()), None);
        assert_eq!(Transport::Plain.unwrap(b"x".to_vec()), Some(b"x".to_vec()));
    }

    #[test]
    fn outcome_json_shape() {
        let v = serde_json::to_value(UpdateOutcome::halt(HaltReason::HashMismatch)).unwrap();
        assert_eq!(v, serde_json::json!({"outcome": "halt", "reason": "hash_mismatch"}));
    }
}
