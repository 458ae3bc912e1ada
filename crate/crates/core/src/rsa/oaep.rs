//! RSAES-OAEP with SHA-256 and MGF1-SHA-256 (RFC 8017, section 7.1).
//!
//! Only here so the bitwise attack can be run against a padded server and
//! shown to fail. Not constant time.

use num_bigint::BigUint;
use rand::RngCore;
use sha2::{Digest, Sha256};

use super::{decrypt_raw, encrypt_raw, RsaError, RsaKeyPair, RsaPublicKey};
use crate::numtheory::to_be_bytes_padded;

pub const OAEP_LABEL: &[u8] = b"rsa-oaep-demo";

const HASH_LEN: usize = 32;

fn mgf1(seed: &[u8], len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len + HASH_LEN);
    let mut counter = 0u32;
    while out.len() < len {
        let mut h = Sha256::new();
        h.update(seed);
        h.update(counter.to_be_bytes());
        out.extend_from_slice(&h.finalize());
        counter += 1;
    }
    out.truncate(len);
    out
}

fn xor_in_place(dst: &mut [u8], mask: &[u8]) {
    for (d, m) in dst.iter_mut().zip(mask) {
        *d ^= m;
    }
}

/// Largest message that fits one OAEP block under `key`.
pub fn max_message_len(key: &RsaPublicKey) -> usize {
    key.byte_len().saturating_sub(2 * HASH_LEN + 2)
}

pub fn encrypt_padded<R: RngCore + ?Sized>(key: &RsaPublicKey, msg: &[u8], rng: &mut R) -> Result<BigUint, RsaError> {
    let k = key.byte_len();
    if k < 2 * HASH_LEN + 2 || msg.len() > max_message_len(key) {
        return Err(RsaError::MessageTooLong);
    }
    let l_hash = Sha256::digest(OAEP_LABEL);
    let db_len = k - HASH_LEN - 1;
    let mut db = Vec::with_capacity(db_len);
    db.extend_from_slice(&l_hash);
    db.resize(db_len - msg.len() - 1, 0);
    db.push(0x01);
    db.extend_from_slice(msg);

    let mut seed = [0u8; HASH_LEN];
    rng.fill_bytes(&mut seed);
    xor_in_place(&mut db, &mgf1(&seed, db_len));
    xor_in_place(&mut seed, &mgf1(&db, HASH_LEN));

    let mut em = Vec::with_capacity(k);
    em.push(0);
    em.extend_from_slice(&seed);
    em.extend_from_slice(&db);
    encrypt_raw(key, &BigUint::from_bytes_be(&em))
}

/// Every malformed block yields the same [`RsaError::Padding`].
pub fn decrypt_padded(key: &RsaKeyPair, c: &BigUint) -> Result<Vec<u8>, RsaError> {
    let k = key.public.byte_len();
    if k < 2 * HASH_LEN + 2 {
        return Err(RsaError::Padding);
    }
    let m = decrypt_raw(key, c).map_err(|_| RsaError::Padding)?;
    let em = to_be_bytes_padded(&m, k).ok_or(RsaError::Padding)?;

    let (y, rest) = em.split_at(1);
    let (masked_seed, masked_db) = rest.split_at(HASH_LEN);
    let mut seed = masked_seed.to_vec();
    xor_in_place(&mut seed, &mgf1(masked_db, HASH_LEN));
    let mut db = masked_db.to_vec();
    let db_mask = mgf1(&seed, db.len());
    xor_in_place(&mut db, &db_mask);

    let l_hash = Sha256::digest(OAEP_LABEL);
    let mut bad = y[0] != 0;
    bad |= db[..HASH_LEN] != l_hash[..];
    let sep = db[HASH_LEN..].iter().position(|&b| b != 0);
    let msg_start = match sep {
        Some(i) if db[HASH_LEN + i] == 0x01 => HASH_LEN + i + 1,
        _ => {
            bad = true;
            db.len()
        }
    };
    if bad {
        return Err(RsaError::Padding);
    }
    Ok(db[msg_start..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rsa::{keygen, shift_ciphertext};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn key() -> RsaKeyPair {
        keygen(1024, &BigUint::from(65537u32), &mut ChaCha20Rng::seed_from_u64(77)).unwrap()
    }

    #[test]
    fn roundtrip_random_messages() {
        let kp = key();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..20 {
            let msg: [u8; 16] = rng.gen();
            let c = encrypt_padded(&kp.public, &msg, &mut rng).unwrap();
            assert_eq!(decrypt_padded(&kp, &c).unwrap(), msg);
        }
        let c = encrypt_padded(&kp.public, b"", &mut rng).unwrap();
        assert_eq!(decrypt_padded(&kp, &c).unwrap(), b"");
    }

    #[test]
    fn encryption_is_randomized() {
        let kp = key();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let a = encrypt_padded(&kp.public, b"same message", &mut rng).unwrap();
        let b = encrypt_padded(&kp.public, b"same message", &mut rng).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn capacity_limit() {
        let kp = key();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        assert_eq!(max_message_len(&kp.public), 62);
        assert!(encrypt_padded(&kp.public, &[7u8; 62], &mut rng).is_ok());
        assert_eq!(encrypt_padded(&kp.public, &[7u8; 63], &mut rng), Err(RsaError::MessageTooLong));
    }

    #[test]
    fn shifted_ciphertexts_are_rejected() {
        let kp = key();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let msg: [u8; 16] = rng.gen();
        let c = encrypt_padded(&kp.public, &msg, &mut rng).unwrap();
        for b in 1..=127 {
            let shifted = shift_ciphertext(&kp.public, &c, b);
            assert_eq!(decrypt_padded(&kp, &shifted), Err(RsaError::Padding), "b = {b}");
        }
    }
}
