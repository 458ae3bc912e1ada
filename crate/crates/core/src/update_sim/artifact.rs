//! Stand-ins for signed installers and packages.
//!
//! A signature here is SHA-256 over a per-signer secret and the payload.
//! Only the mock CA knows the secrets, which is all the update flow cares
//! about: who signed, not what the program does.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const VENDOR_SIGNER: &str = "Tencent-mock";

const BLOB_MAGIC: &[u8; 6] = b"SBLOB1";

/// Issues and checks the stand-in signatures.
pub struct MockCa;

impl MockCa {
    fn signer_key(signer: &str) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"mock-ca signer key\0");
        h.update(signer.as_bytes());
        h.finalize().into()
    }

    fn tag(signer: &str, payload: &[u8]) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(Self::signer_key(signer));
        h.update(payload);
        h.finalize().into()
    }

    pub fn sign(signer: &str, payload: &[u8]) -> SignedBlob {
        SignedBlob {
            payload: payload.to_vec(),
            signer: signer.to_string(),
            signature: Self::tag(signer, payload),
        }
    }

    pub fn verify(blob: &SignedBlob) -> bool {
        Self::tag(&blob.signer, &blob.payload) == blob.signature
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedBlob {
    pub payload: Vec<u8>,
    pub signer: String,
    pub signature: [u8; 32],
}

impl SignedBlob {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(BLOB_MAGIC.len() + 2 + self.signer.len() + 32 + self.payload.len());
        out.extend_from_slice(BLOB_MAGIC);
        out.extend_from_slice(&(self.signer.len() as u16).to_be_bytes());
        out.extend_from_slice(self.signer.as_bytes());
        out.extend_from_slice(&self.signature);
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(bytes: &[u8]) -> Option<Self> {
        let rest = bytes.strip_prefix(BLOB_MAGIC.as_slice())?;
        let (len, rest) = rest.split_first_chunk::<2>()?;
        let len = u16::from_be_bytes(*len) as usize;
        if rest.len() < len + 32 {
            return None;
        }
        let signer = std::str::from_utf8(&rest[..len]).ok()?.to_string();
        let signature: [u8; 32] = rest[len..len + 32].try_into().ok()?;
        Some(SignedBlob {
            payload: rest[len + 32..].to_vec(),
            signer,
            signature,
        })
    }
}

/// What an executable does when "run". Nothing is ever run; the victim
/// only reads these fields to record the event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub name: String,
    /// Installers fetch and launch this URL without checking it.
    pub download: Option<String>,
}

impl Program {
    pub fn encode(&self) -> Vec<u8> {
        let mut s = format!("PROGRAM\nname={}\n", self.name);
        if let Some(url) = &self.download {
            s.push_str(&format!("download={url}\n"));
        }
        s.into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Option<Self> {
        let fields = parse_manifest(bytes, "PROGRAM")?;
        Some(Program {
            name: field(&fields, "name")?,
            download: field(&fields, "download"),
        })
    }
}

/// Manifest of an Android package.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApkManifest {
    pub package: String,
    pub version: String,
}

impl ApkManifest {
    pub fn encode(&self) -> Vec<u8> {
        format!("APK\npackage={}\nversion={}\n", self.package, self.version).into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Option<Self> {
        let fields = parse_manifest(bytes, "APK")?;
        Some(ApkManifest {
            package: field(&fields, "package")?,
            version: field(&fields, "version")?,
        })
    }
}

fn parse_manifest(bytes: &[u8], header: &str) -> Option<Vec<(String, String)>> {
    let text = std::str::from_utf8(bytes).ok()?;
    let mut lines = text.lines();
    if lines.next()? != header {
        return None;
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect()
}

fn field(fields: &[(String, String)], name: &str) -> Option<String> {
    fields.iter().find(|(k, _)| k == name).map(|(_, v)| v.clone())
}

/// Scenario-file description of a file the attacker serves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArtifactSpec {
    Apk {
        package: String,
        version: String,
        signer: String,
    },
    Exe {
        program: String,
        /// Omit for an unsigned binary.
        #[serde(default)]
        signer: Option<String>,
        #[serde(default)]
        download: Option<String>,
    },
    Raw {
        text: String,
    },
}

impl ArtifactSpec {
    pub fn build(&self) -> Vec<u8> {
        match self {
            ArtifactSpec::Apk { package, version, signer } => {
                let manifest = ApkManifest {
                    package: package.clone(),
                    version: version.clone(),
                };
                MockCa::sign(signer, &manifest.encode()).encode()
            }
            ArtifactSpec::Exe { program, signer, download } => {
                let body = Program {
                    name: program.clone(),
                    download: download.clone(),
                }
                .encode();
                match signer {
                    Some(s) => MockCa::sign(s, &body).encode(),
                    None => body,
                }
            }
            ArtifactSpec::Raw { text } => text.clone().into_bytes(),
        }
    }
}
