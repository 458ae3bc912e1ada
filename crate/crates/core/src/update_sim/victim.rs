use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::fs::FsError;
use super::{
    compare_versions, md5_digest, sha256_hex, ApkManifest, CryptoMode, HaltReason, InstallPrompt, MockCa, Program,
    SecondStage, SignedBlob, SimError, Transport, UpdateChannel, UpdateMetadata, UpdateOutcome, UpdateReport,
    UpdateRequest, VirtualFs, VENDOR_SIGNER, WINDOWS_TEMP_DIR,
};
use crate::rsa::RsaPublicKey;
use crate::victim_prng::{keygen_v63_with_clock, keygen_v65, SessionKey};
use crate::wup::{decrypt_response, seal_session, tea_cbc_decrypt, HardcodedKeys, MessageKind, WupMessage};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstalledApp {
    pub package: String,
    pub version: String,
    pub signer: String,
}

/// An Android phone running the browser.
#[derive(Debug, Clone)]
pub struct AndroidVictim {
    pub version: String,
    pub crypto: CryptoMode,
    /// Wall clock when the update check starts; seeds the session key.
    pub clock_ms: u64,
    pub server_public: RsaPublicKey,
    pub transport: Transport,
    /// The browser itself plus anything else on the device.
    pub installed: Vec<InstalledApp>,
}

impl AndroidVictim {
    pub fn session_key(&self) -> SessionKey {
        match self.crypto {
            CryptoMode::V63 => {
                let mut t = self.clock_ms;
                keygen_v63_with_clock(|| {
                    let now = t;
                    t += 1;
                    now
                })
            }
            CryptoMode::V65 => keygen_v65(self.clock_ms),
        }
    }
}

/// A Windows desktop running the browser.
#[derive(Debug, Clone)]
pub struct WindowsVictim {
    pub version: String,
    pub transport: Transport,
}

struct Trace(Vec<String>);

impl Trace {
    fn log(&mut self, s: impl Into<String>) {
        self.0.push(s.into());
    }

    fn halt(mut self, reason: HaltReason) -> Result<UpdateReport, SimError> {
        self.log(format!("halt: {reason:?}"));
        Ok(UpdateReport {
            outcome: UpdateOutcome::halt(reason),
            trace: self.0,
        })
    }

    fn done(self, outcome: UpdateOutcome) -> Result<UpdateReport, SimError> {
        Ok(UpdateReport { outcome, trace: self.0 })
    }
}

enum Fetch {
    Body(Vec<u8>),
    Halt(HaltReason),
}

fn fetch(channel: &mut dyn UpdateChannel, transport: Transport, req: &UpdateRequest, on_missing: HaltReason) -> Result<Fetch, SimError> {
    match channel.send(req) {
        Ok(bytes) => Ok(match transport.unwrap(bytes) {
            Some(body) => Fetch::Body(body),
            None => Fetch::Halt(HaltReason::TransportAuthFailure),
        }),
        Err(e @ super::ChannelError::Script(_)) => Err(e.into()),
        Err(_) => Ok(Fetch::Halt(on_missing)),
    }
}

/// Query, read metadata, download, check MD5, hand the APK to the OS.
pub fn victim_update_android(victim: &AndroidVictim, channel: &mut dyn UpdateChannel) -> Result<UpdateReport, SimError> {
    let mut trace = Trace(Vec::new());
    let key = victim.session_key();
    let query = WupMessage::new(MessageKind::UpdateQuery)
        .with_field("package", super::ANDROID_PACKAGE)
        .with_field("version", victim.version.as_str())
        .with_field("crypto", victim.crypto.as_str());
    let sess = seal_session(&victim.server_public, &key, &query).map_err(|e| SimError::Scenario(e.to_string()))?;
    trace.log(format!("query: version {} ({})", victim.version, victim.crypto.as_str()));

    let reply = match fetch(channel, victim.transport, &UpdateRequest::AndroidQuery(sess.to_wire()), HaltReason::NoResponse)? {
        Fetch::Body(b) => b,
        Fetch::Halt(r) => return trace.halt(r),
    };
    let decoded = match victim.crypto {
        CryptoMode::V63 => tea_cbc_decrypt(&HardcodedKeys::TEA_RESPONSE_KEY, &reply).and_then(|p| WupMessage::decode(&p)),
        CryptoMode::V65 => decrypt_response(&key, &reply),
    };
    let Ok(msg) = decoded else {
        return trace.halt(HaltReason::DecryptFailure);
    };
    let meta = match UpdateMetadata::from_wup(&msg) {
        Ok(Some(m)) => m,
        Ok(None) => return trace.halt(HaltReason::NoUpdate),
        Err(_) => return trace.halt(HaltReason::MalformedMetadata),
    };
    trace.log(format!("metadata: {} md5 {}", meta.url, hex::encode(meta.md5)));
    if compare_versions(&meta.version, &victim.version) == Ordering::Less {
        return trace.halt(HaltReason::Downgrade);
    }

    let apk = match fetch(channel, victim.transport, &UpdateRequest::Download(meta.url.clone()), HaltReason::DownloadFailed)? {
        Fetch::Body(b) => b,
        Fetch::Halt(r) => return trace.halt(r),
    };
    trace.log(format!("downloaded {} bytes", apk.len()));
    if md5_digest(&apk) != meta.md5 {
        return trace.halt(HaltReason::HashMismatch);
    }
    trace.log("md5 ok; ACTION_VIEW");

    // the OS package installer from here on
    let Some(blob) = SignedBlob::decode(&apk).filter(MockCa::verify) else {
        return trace.halt(HaltReason::InvalidPackage);
    };
    let Some(manifest) = ApkManifest::decode(&blob.payload) else {
        return trace.halt(HaltReason::InvalidPackage);
    };
    let prompt = match victim.installed.iter().find(|a| a.package == manifest.package) {
        Some(app) if app.signer != blob.signer => return trace.halt(HaltReason::SignerMismatch),
        Some(app) if compare_versions(&manifest.version, &app.version) == Ordering::Less => {
            return trace.halt(HaltReason::Downgrade);
        }
        Some(_) => InstallPrompt::Upgrade,
        None => InstallPrompt::NewPackage,
    };
    trace.log(format!("prompt {prompt:?} for {}", manifest.package));
    trace.done(UpdateOutcome::Install {
        prompt,
        package: manifest.package,
        version: manifest.version,
        digest: sha256_hex(&apk),
    })
}

fn save(fs: &mut VirtualFs, name: &str, bytes: &[u8], trace: &mut Trace) -> Result<Option<String>, SimError> {
    match fs.write(WINDOWS_TEMP_DIR, name, bytes) {
        Ok(w) => {
            trace.log(format!("saved {:?} -> {}{}", w.requested, w.resolved, if w.escaped_root { " (outside temp dir)" } else { "" }));
            Ok(Some(w.resolved))
        }
        Err(FsError::Refused(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Query, read metadata, download and save under the server-chosen name,
/// check MD5, check the signer, run.
pub fn victim_update_windows(victim: &WindowsVictim, channel: &mut dyn UpdateChannel, fs: &mut VirtualFs) -> Result<UpdateReport, SimError> {
    let mut trace = Trace(Vec::new());
    let query = serde_json::json!({ "product": "qqbrowser", "version": victim.version });
    trace.log(format!("query: version {}", victim.version));
    let req = UpdateRequest::WindowsQuery(serde_json::to_vec(&query).expect("json"));
    let reply = match fetch(channel, victim.transport, &req, HaltReason::NoResponse)? {
        Fetch::Body(b) => b,
        Fetch::Halt(r) => return trace.halt(r),
    };
    let meta = match serde_json::from_slice(&reply).map_err(|_| "not json").and_then(|v| UpdateMetadata::from_json(&v)) {
        Ok(Some(m)) => m,
        Ok(None) => return trace.halt(HaltReason::NoUpdate),
        Err(_) => return trace.halt(HaltReason::MalformedMetadata),
    };
    let save_as = meta.save_as.clone().unwrap_or_default();
    trace.log(format!("metadata: {} save as {:?}", meta.url, save_as));

    let exe = match fetch(channel, victim.transport, &UpdateRequest::Download(meta.url.clone()), HaltReason::DownloadFailed)? {
        Fetch::Body(b) => b,
        Fetch::Halt(r) => return trace.halt(r),
    };
    // saved before any check
    if save(fs, &save_as, &exe, &mut trace)?.is_none() {
        return trace.halt(HaltReason::FsRefused);
    }
    if md5_digest(&exe) != meta.md5 {
        return trace.halt(HaltReason::HashMismatch);
    }
    let Some(blob) = SignedBlob::decode(&exe).filter(|b| MockCa::verify(b) && b.signer == VENDOR_SIGNER) else {
        return trace.halt(HaltReason::SignatureInvalid);
    };
    let program = Program::decode(&blob.payload).unwrap_or(Program {
        name: "<opaque>".into(),
        download: None,
    });
    trace.log(format!("signature ok ({}); executing {}", blob.signer, program.name));

    let second_stage = match &program.download {
        None => None,
        Some(url) => run_second_stage(url, victim.transport, channel, fs, &mut trace)?,
    };
    trace.done(UpdateOutcome::Execute {
        signer: blob.signer,
        program: program.name,
        digest: sha256_hex(&exe),
        second_stage,
    })
}

/// The launched program is an installer: it fetches another binary over
/// the same channel and runs it without any check.
fn run_second_stage(
    url: &str,
    transport: Transport,
    channel: &mut dyn UpdateChannel,
    fs: &mut VirtualFs,
    trace: &mut Trace,
) -> Result<Option<SecondStage>, SimError> {
    let bytes = match fetch(channel, transport, &UpdateRequest::Download(url.to_string()), HaltReason::DownloadFailed)? {
        Fetch::Body(b) => b,
        Fetch::Halt(r) => {
            trace.log(format!("installer download failed: {r:?}"));
            return Ok(None);
        }
    };
    let name = url.rsplit('/').next().filter(|s| !s.is_empty()).unwrap_or("download.exe");
    if save(fs, name, &bytes, trace)?.is_none() {
        return Ok(None);
    }
    let blob = SignedBlob::decode(&bytes);
    let signed = blob.as_ref().is_some_and(|b| MockCa::verify(b) && b.signer == VENDOR_SIGNER);
    let body = blob.map(|b| b.payload).unwrap_or_else(|| bytes.clone());
    let program = Program::decode(&body).map(|p| p.name).unwrap_or_else(|| "<opaque>".into());
    trace.log(format!("installer executing {program} (signed: {signed})"));
    Ok(Some(SecondStage {
        program,
        url: url.to_string(),
        digest: sha256_hex(&bytes),
        signed,
    }))
}
