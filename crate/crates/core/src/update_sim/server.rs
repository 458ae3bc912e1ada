use std::collections::BTreeMap;

use super::{
    md5_digest, ArtifactSpec, ChannelError, Transport, UpdateChannel, UpdateMetadata, UpdateRequest, Variant,
    VENDOR_SIGNER,
};
use crate::rsa::RsaKeyPair;
use crate::wup::{encrypt_response, open_session, tea_cbc_encrypt, EncryptedSession, HardcodedKeys};

pub const ANDROID_PACKAGE: &str = "com.tencent.mtt";
pub const ANDROID_LATEST: &str = "7.0.0.3000";
pub const ANDROID_APK_URL: &str = "http://dl.qq.mock/android/qqbrowser_7.0.0.3000.apk";

pub const WINDOWS_LATEST: &str = "9.1.0.4000";
pub const WINDOWS_UPDATE_URL: &str = "http://dl.qq.mock/win/qqbrowser_9.1.0_update.exe";
/// An old vendor-signed installer that fetches `WINDOWS_FULL_URL` unchecked.
pub const WEB_INSTALLER_URL: &str = "http://dl.qq.mock/win/qqbrowser_webinstaller.exe";
pub const WINDOWS_FULL_URL: &str = "http://dl.qq.mock/win/qqbrowser_full.exe";

/// Where downloads are saved before they are checked.
pub const WINDOWS_TEMP_DIR: &str = "users/victim/appdata/local/temp/qqbrowser";
pub const INSTALL_PATH: &str = "programfiles/tencent/qqbrowser/qqbrowser.exe";

/// The vendor's update service and download host.
pub struct MockUpdateServer {
    key_pair: RsaKeyPair,
    has_update: bool,
    transport: Transport,
    files: BTreeMap<String, Vec<u8>>,
}

impl MockUpdateServer {
    /// The standard catalogue: one Android release, one Windows release, and
    /// the legacy web installer still hosted.
    pub fn new(key_pair: RsaKeyPair, has_update: bool, transport: Transport) -> Self {
        let mut files = BTreeMap::new();
        let apk = ArtifactSpec::Apk {
            package: ANDROID_PACKAGE.into(),
            version: ANDROID_LATEST.into(),
            signer: VENDOR_SIGNER.into(),
        };
        let update = ArtifactSpec::Exe {
            program: "qqbrowser-update".into(),
            signer: Some(VENDOR_SIGNER.into()),
            download: None,
        };
        let web = ArtifactSpec::Exe {
            program: "qqbrowser-web-installer".into(),
            signer: Some(VENDOR_SIGNER.into()),
            download: Some(WINDOWS_FULL_URL.into()),
        };
        let full = ArtifactSpec::Exe {
            program: "qqbrowser-full-install".into(),
            signer: Some(VENDOR_SIGNER.into()),
            download: None,
        };
        files.insert(ANDROID_APK_URL.to_string(), apk.build());
        files.insert(WINDOWS_UPDATE_URL.to_string(), update.build());
        files.insert(WEB_INSTALLER_URL.to_string(), web.build());
        files.insert(WINDOWS_FULL_URL.to_string(), full.build());
        MockUpdateServer {
            key_pair,
            has_update,
            transport,
            files,
        }
    }

    pub fn public_key(&self) -> &crate::rsa::RsaPublicKey {
        &self.key_pair.public
    }

    pub fn file(&self, url: &str) -> Option<&[u8]> {
        self.files.get(url).map(Vec::as_slice)
    }

    fn android_reply(&self, body: &[u8]) -> Result<Vec<u8>, ChannelError> {
        let sess = EncryptedSession::from_wire(body, self.key_pair.public.byte_len()).map_err(|_| ChannelError::NoResponse)?;
        let (key, query) = open_session(&self.key_pair, &sess).map_err(|_| ChannelError::NoResponse)?;
        let msg = if self.has_update {
            UpdateMetadata {
                variant: Variant::AndroidWup,
                url: ANDROID_APK_URL.into(),
                md5: md5_digest(&self.files[ANDROID_APK_URL]),
                save_as: None,
                version: ANDROID_LATEST.into(),
            }
            .to_wup()
        } else {
            UpdateMetadata::no_update_wup()
        };
        let encoded = msg.encode().map_err(|_| ChannelError::NoResponse)?;
        Ok(match query.field_str("crypto") {
            Some("v63") => tea_cbc_encrypt(&HardcodedKeys::TEA_RESPONSE_KEY, &encoded),
            _ => encrypt_response(&key, &msg).map_err(|_| ChannelError::NoResponse)?,
        })
    }

    fn windows_reply(&self, body: &[u8]) -> Result<Vec<u8>, ChannelError> {
        let _query: serde_json::Value = serde_json::from_slice(body).map_err(|_| ChannelError::NoResponse)?;
        let v = if self.has_update {
            UpdateMetadata {
                variant: Variant::WindowsJson,
                url: WINDOWS_UPDATE_URL.into(),
                md5: md5_digest(&self.files[WINDOWS_UPDATE_URL]),
                save_as: Some("qqbrowser_update.exe".into()),
                version: WINDOWS_LATEST.into(),
            }
            .to_json()
        } else {
            serde_json::json!({ "update": false })
        };
        Ok(serde_json::to_vec(&v).expect("json"))
    }
}

impl UpdateChannel for MockUpdateServer {
    fn send(&mut self, req: &UpdateRequest) -> Result<Vec<u8>, ChannelError> {
        let body = match req {
            UpdateRequest::AndroidQuery(b) => self.android_reply(b)?,
            UpdateRequest::WindowsQuery(b) => self.windows_reply(b)?,
            UpdateRequest::Download(url) => self.files.get(url).cloned().ok_or_else(|| ChannelError::NotFound(url.clone()))?,
        };
        Ok(self.transport.wrap(body))
    }
}
