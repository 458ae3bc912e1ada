//! Block-cipher modes used by the client: AES-128-ECB for WUP requests and
//! (6.5) responses, and the TEA-CBC stand-in for 6.3 responses.
//!
//! Both pad with PKCS#7 to their block size.

use aes::cipher::generic_array::GenericArray;
use aes::cipher::{BlockDecrypt, BlockEncrypt, KeyInit};
use aes::Aes128;

use super::WupError;

pub const AES_BLOCK: usize = 16;
pub const TEA_BLOCK: usize = 8;

fn pkcs7_pad(data: &[u8], block: usize) -> Vec<u8> {
    let pad = block - data.len() % block;
    let mut out = Vec::with_capacity(data.len() + pad);
    out.extend_from_slice(data);
    out.resize(data.len() + pad, pad as u8);
    out
}

fn pkcs7_unpad(mut data: Vec<u8>, block: usize) -> Result<Vec<u8>, WupError> {
    let pad = *data.last().ok_or(WupError::BadPadding)? as usize;
    if pad == 0 || pad > block || pad > data.len() {
        return Err(WupError::BadPadding);
    }
    if !data[data.len() - pad..].iter().all(|&b| b as usize == pad) {
        return Err(WupError::BadPadding);
    }
    data.truncate(data.len() - pad);
    Ok(data)
}

/// One raw AES-128 block encryption, no mode, no padding.
pub fn aes_encrypt_block(key: &[u8; 16], block: &[u8; 16]) -> [u8; 16] {
    let cipher = Aes128::new(GenericArray::from_slice(key));
    let mut b = GenericArray::clone_from_slice(block);
    cipher.encrypt_block(&mut b);
    b.into()
}

pub fn aes_ecb_encrypt(key: &[u8; 16], plaintext: &[u8]) -> Vec<u8> {
    let cipher = Aes128::new(GenericArray::from_slice(key));
    let mut data = pkcs7_pad(plaintext, AES_BLOCK);
    for chunk in data.chunks_exact_mut(AES_BLOCK) {
        cipher.encrypt_block(GenericArray::from_mut_slice(chunk));
    }
    data
}

pub fn aes_ecb_decrypt(key: &[u8; 16], ciphertext: &[u8]) -> Result<Vec<u8>, WupError> {
    if ciphertext.is_empty() || !ciphertext.len().is_multiple_of(AES_BLOCK) {
        return Err(WupError::BadLength);
    }
    let cipher = Aes128::new(GenericArray::from_slice(key));
    let mut data = ciphertext.to_vec();
    for chunk in data.chunks_exact_mut(AES_BLOCK) {
        cipher.decrypt_block(GenericArray::from_mut_slice(chunk));
    }
    pkcs7_unpad(data, AES_BLOCK)
}

const TEA_DELTA: u32 = 0x9E37_79B9;
const TEA_ROUNDS: u32 = 32;

fn tea_key(key: &[u8; 16]) -> [u32; 4] {
    let mut k = [0u32; 4];
    for (i, w) in k.iter_mut().enumerate() {
        *w = u32::from_be_bytes(key[4 * i..4 * i + 4].try_into().expect("4 bytes"));
    }
    k
}

pub fn tea_encrypt_block(key: &[u8; 16], block: [u32; 2]) -> [u32; 2] {
    let k = tea_key(key);
    let [mut v0, mut v1] = block;
    let mut sum = 0u32;
    for _ in 0..TEA_ROUNDS {
        sum = sum.wrapping_add(TEA_DELTA);
        v0 = v0.wrapping_add((v1 << 4).wrapping_add(k[0]) ^ v1.wrapping_add(sum) ^ (v1 >> 5).wrapping_add(k[1]));
        v1 = v1.wrapping_add((v0 << 4).wrapping_add(k[2]) ^ v0.wrapping_add(sum) ^ (v0 >> 5).wrapping_add(k[3]));
    }
    [v0, v1]
}

pub fn tea_decrypt_block(key: &[u8; 16], block: [u32; 2]) -> [u32; 2] {
    let k = tea_key(key);
    let [mut v0, mut v1] = block;
    let mut sum = TEA_DELTA.wrapping_mul(TEA_ROUNDS);
    for _ in 0..TEA_ROUNDS {
        v1 = v1.wrapping_sub((v0 << 4).wrapping_add(k[2]) ^ v0.wrapping_add(sum) ^ (v0 >> 5).wrapping_add(k[3]));
        v0 = v0.wrapping_sub((v1 << 4).wrapping_add(k[0]) ^ v1.wrapping_add(sum) ^ (v1 >> 5).wrapping_add(k[1]));
        sum = sum.wrapping_sub(TEA_DELTA);
    }
    [v0, v1]
}

fn split_block(b: &[u8]) -> [u32; 2] {
    [
        u32::from_be_bytes(b[..4].try_into().expect("4 bytes")),
        u32::from_be_bytes(b[4..8].try_into().expect("4 bytes")),
    ]
}

fn join_block(v: [u32; 2], out: &mut [u8]) {
    out[..4].copy_from_slice(&v[0].to_be_bytes());
    out[4..8].copy_from_slice(&v[1].to_be_bytes());
}

/// Standard TEA in standard CBC with an all-zero IV. The real client uses
/// undisclosed modifications of both; this stands in for them.
pub fn tea_cbc_encrypt(key: &[u8; 16], plaintext: &[u8]) -> Vec<u8> {
    let mut data = pkcs7_pad(plaintext, TEA_BLOCK);
    let mut prev = [0u8; TEA_BLOCK];
    for chunk in data.chunks_exact_mut(TEA_BLOCK) {
        for (c, p) in chunk.iter_mut().zip(prev) {
            *c ^= p;
        }
        join_block(tea_encrypt_block(key, split_block(chunk)), chunk);
        prev.copy_from_slice(chunk);
    }
    data
}

pub fn tea_cbc_decrypt(key: &[u8; 16], ciphertext: &[u8]) -> Result<Vec<u8>, WupError> {
    if ciphertext.is_empty() || !ciphertext.len().is_multiple_of(TEA_BLOCK) {
        return Err(WupError::BadLength);
    }
    let mut out = vec![0u8; ciphertext.len()];
    let mut prev = [0u8; TEA_BLOCK];
    for (chunk, dst) in ciphertext.chunks_exact(TEA_BLOCK).zip(out.chunks_exact_mut(TEA_BLOCK)) {
        join_block(tea_decrypt_block(key, split_block(chunk)), dst);
        for (d, p) in dst.iter_mut().zip(prev) {
            *d ^= p;
        }
        prev.copy_from_slice(chunk);
    }
    pkcs7_unpad(out, TEA_BLOCK)
}
