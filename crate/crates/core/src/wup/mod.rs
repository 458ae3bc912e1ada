//! The WUP request protocol: the client picks a session key, wraps it with
//! textbook RSA, and AES-ECB-encrypts the request under it. The server
//! unwraps, keeps only the low 128 bits of the RSA plaintext, and answers
//! only when the request decrypts and parses.
//!
//! Wire layout of a session body is `rsa_blob ‖ payload`, where `rsa_blob`
//! is exactly modulus-length big-endian bytes.

pub mod cipher;
pub mod frame;
pub mod message;

use num_bigint::BigUint;
use num_traits::One;
use rand::RngCore;
use thiserror::Error;

use crate::numtheory::to_be_bytes_padded;
use crate::rsa::{self, decrypt_raw, encrypt_raw, RsaKeyPair, RsaPublicKey};
use crate::victim_prng::SessionKey;

pub use cipher::{aes_ecb_decrypt, aes_ecb_encrypt, tea_cbc_decrypt, tea_cbc_encrypt};
pub use frame::{frame_read, frame_write, FrameError, MAX_FRAME};
pub use message::{MessageKind, WupMessage};

/// Symmetric keys baked into the 6.3 client.
pub struct HardcodedKeys;

impl HardcodedKeys {
    /// DES key for the Wi-Fi MAC address field. Stored for reference only.
    pub const DES_MAC_KEY: [u8; 8] = [0x25, 0x92, 0x3C, 0x7F, 0x2A, 0xE5, 0xEF, 0x92];
    /// Key for server responses to 6.3 clients.
    pub const TEA_RESPONSE_KEY: [u8; 16] = *b"sDf434ol*123+-KD";
}

/// Session keys are the low 128 bits of the unwrapped RSA plaintext.
pub const SESSION_KEY_BITS: u32 = 128;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WupError {
    #[error("ciphertext length is not a positive multiple of the block size")]
    BadLength,
    #[error("bad block padding")]
    BadPadding,
    #[error("bad message checksum")]
    BadChecksum,
    #[error("bad message magic")]
    BadMagic,
    #[error("malformed message: {0}")]
    Malformed(&'static str),
    #[error("invalid request")]
    InvalidRequest,
    #[error("session key does not fit below the RSA modulus")]
    KeyTooLarge,
    #[error("malformed session: {0}")]
    MalformedSession(&'static str),
}

/// RSA-wrapped session key plus AES-ECB payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedSession {
    pub rsa_blob: Vec<u8>,
    pub payload: Vec<u8>,
}

impl EncryptedSession {
    pub fn blob_value(&self) -> BigUint {
        BigUint::from_bytes_be(&self.rsa_blob)
    }

    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.rsa_blob.len() + self.payload.len());
        out.extend_from_slice(&self.rsa_blob);
        out.extend_from_slice(&self.payload);
        out
    }

    /// Split a session body; the blob length is fixed by the server's modulus.
    pub fn from_wire(bytes: &[u8], modulus_len: usize) -> Result<Self, WupError> {
        if bytes.len() < modulus_len + cipher::AES_BLOCK {
            return Err(WupError::MalformedSession("body shorter than blob plus one block"));
        }
        let (blob, payload) = bytes.split_at(modulus_len);
        let sess = EncryptedSession {
            rsa_blob: blob.to_vec(),
            payload: payload.to_vec(),
        };
        sess.check_lengths(modulus_len)?;
        Ok(sess)
    }

    fn check_lengths(&self, modulus_len: usize) -> Result<(), WupError> {
        if self.rsa_blob.len() != modulus_len {
            return Err(WupError::MalformedSession("blob length differs from modulus length"));
        }
        if self.payload.len() < cipher::AES_BLOCK || !self.payload.len().is_multiple_of(cipher::AES_BLOCK) {
            return Err(WupError::MalformedSession("payload is not whole AES blocks"));
        }
        Ok(())
    }
}

/// Build a session around an arbitrary RSA blob value. Honest clients pass
/// an encryption of `key`; the bitwise attack passes a shifted ciphertext.
pub fn seal_with_blob(public: &RsaPublicKey, blob: &BigUint, key: &SessionKey, msg: &WupMessage) -> Result<EncryptedSession, WupError> {
    let rsa_blob = to_be_bytes_padded(blob, public.byte_len()).ok_or(WupError::KeyTooLarge)?;
    let plaintext = msg.encode()?;
    Ok(EncryptedSession {
        rsa_blob,
        payload: aes_ecb_encrypt(key.bytes(), &plaintext),
    })
}

/// Client side: wrap `key` with textbook RSA and encrypt `msg` under it.
///
/// Deterministic: the same key and message always give the same bytes.
pub fn seal_session(public: &RsaPublicKey, key: &SessionKey, msg: &WupMessage) -> Result<EncryptedSession, WupError> {
    let k = BigUint::from_bytes_be(key.bytes());
    let blob = encrypt_raw(public, &k).map_err(|_| WupError::KeyTooLarge)?;
    seal_with_blob(public, &blob, key, msg)
}

/// Server side with the standard 128-bit truncation.
pub fn open_session(key_pair: &RsaKeyPair, sess: &EncryptedSession) -> Result<(SessionKey, WupMessage), WupError> {
    open_session_with_width(key_pair, sess, SESSION_KEY_BITS)
}

/// Server side, keeping only the low `key_bits` bits of the RSA plaintext.
/// Every failure collapses into [`WupError::InvalidRequest`].
pub fn open_session_with_width(key_pair: &RsaKeyPair, sess: &EncryptedSession, key_bits: u32) -> Result<(SessionKey, WupMessage), WupError> {
    assert!((1..=SESSION_KEY_BITS).contains(&key_bits), "key width must be 1..=128 bits");
    sess.check_lengths(key_pair.public.byte_len()).map_err(|_| WupError::InvalidRequest)?;
    let plain = decrypt_raw(key_pair, &sess.blob_value()).map_err(|_| WupError::InvalidRequest)?;
    let truncated = plain % (BigUint::one() << key_bits);
    let key = SessionKey::from_u128(crate::numtheory::to_u128(&truncated).expect("below 2^128"));
    let msg = decrypt_payload(&key, &sess.payload).map_err(|_| WupError::InvalidRequest)?;
    Ok((key, msg))
}

/// AES-ECB decrypt and parse. Shared by the server and by offline key checks.
pub fn decrypt_payload(key: &SessionKey, payload: &[u8]) -> Result<WupMessage, WupError> {
    let plain = aes_ecb_decrypt(key.bytes(), payload)?;
    WupMessage::decode(&plain)
}

/// Padded-key variant of [`seal_session`]: the key is OAEP-wrapped.
pub fn seal_session_oaep<R: RngCore + ?Sized>(public: &RsaPublicKey, key: &SessionKey, msg: &WupMessage, rng: &mut R) -> Result<EncryptedSession, WupError> {
    let blob = rsa::encrypt_padded(public, key.bytes(), rng).map_err(|_| WupError::KeyTooLarge)?;
    seal_with_blob(public, &blob, key, msg)
}

pub fn open_session_oaep(key_pair: &RsaKeyPair, sess: &EncryptedSession) -> Result<(SessionKey, WupMessage), WupError> {
    sess.check_lengths(key_pair.public.byte_len()).map_err(|_| WupError::InvalidRequest)?;
    let raw = rsa::decrypt_padded(key_pair, &sess.blob_value()).map_err(|_| WupError::InvalidRequest)?;
    let bytes: [u8; 16] = raw.try_into().map_err(|_| WupError::InvalidRequest)?;
    let key = SessionKey::external(bytes);
    let msg = decrypt_payload(&key, &sess.payload).map_err(|_| WupError::InvalidRequest)?;
    Ok((key, msg))
}

pub fn encrypt_response(key: &SessionKey, msg: &WupMessage) -> Result<Vec<u8>, WupError> {
    Ok(aes_ecb_encrypt(key.bytes(), &msg.encode()?))
}

pub fn decrypt_response(key: &SessionKey, bytes: &[u8]) -> Result<WupMessage, WupError> {
    decrypt_payload(key, bytes)
}
