//! Textbook RSA: no padding, deterministic, multiplicatively homomorphic.
//!
//! [`shift_ciphertext`] turns an encryption of `k` into an encryption of
//! `2^b·k` using only the public key; that is the whole malleability the
//! bitwise key-recovery attack needs. The [`oaep`] submodule provides a
//! padded variant used as the repaired comparison target.

pub mod oaep;

use std::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::One;
use rand::RngCore;
use thiserror::Error;

use crate::numtheory::{self, gen_prime, mod_inv, mod_pow, parse_decimal, NumTheoryError};

pub use oaep::{decrypt_padded, encrypt_padded, OAEP_LABEL};

/// The usual public exponent, F4.
pub const DEFAULT_EXPONENT: u32 = 65537;

pub const SUPPORTED_KEY_BITS: [u64; 5] = [128, 256, 512, 1024, 2048];

const KEYGEN_ATTEMPTS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RsaError {
    #[error("message is not smaller than the modulus")]
    MessageOutOfRange,
    #[error("ciphertext is not smaller than the modulus")]
    CiphertextOutOfRange,
    #[error("unsupported key size {0} bits (expected one of 128, 256, 512, 1024, 2048)")]
    UnsupportedKeySize(u64),
    #[error("public exponent must be odd and at least 3")]
    InvalidExponent,
    #[error("could not find primes coprime to the public exponent after {0} attempts")]
    KeygenFailed(usize),
    #[error("inconsistent key material: {0}")]
    InconsistentKey(String),
    #[error("message too long for OAEP with this modulus")]
    MessageTooLong,
    #[error("decryption error")]
    Padding,
    #[error("malformed key file: {0}")]
    KeyFile(String),
    #[error(transparent)]
    Arithmetic(#[from] NumTheoryError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RsaPublicKey {
    pub n: BigUint,
    pub e: BigUint,
}

impl RsaPublicKey {
    pub fn bits(&self) -> u64 {
        self.n.bits()
    }

    /// Length in bytes of a big-endian block for this modulus.
    pub fn byte_len(&self) -> usize {
        self.n.bits().div_ceil(8) as usize
    }

    /// `n` and `e` lines only.
    pub fn to_key_file(&self) -> String {
        format!("n: {}\ne: {}\n", self.n, self.e)
    }

    /// Read `n` and `e` from a public or full key file.
    pub fn from_key_file(text: &str) -> Result<Self, RsaError> {
        let fields = parse_key_fields(text)?;
        let n = fields[0].clone().ok_or_else(|| RsaError::KeyFile("missing field \"n\"".into()))?;
        let e = fields[1].clone().ok_or_else(|| RsaError::KeyFile("missing field \"e\"".into()))?;
        check_exponent(&e)?;
        if n < BigUint::from(3u8) {
            return Err(RsaError::KeyFile("modulus too small".into()));
        }
        Ok(RsaPublicKey { n, e })
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct RsaKeyPair {
    pub public: RsaPublicKey,
    pub d: BigUint,
    pub p: BigUint,
    pub q: BigUint,
}

impl fmt::Debug for RsaKeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RsaKeyPair")
            .field("bits", &self.public.bits())
            .field("n", &self.public.n)
            .field("e", &self.public.e)
            .finish_non_exhaustive()
    }
}

impl RsaKeyPair {
    /// Assemble a key pair from known primes. `d` is `e^-1 mod lcm(p-1, q-1)`.
    pub fn from_primes(p: BigUint, q: BigUint, e: BigUint) -> Result<Self, RsaError> {
        check_exponent(&e)?;
        if p == q {
            return Err(RsaError::InconsistentKey("p and q are equal".into()));
        }
        let one = BigUint::one();
        let lambda = (&p - &one).lcm(&(&q - &one));
        let d = mod_inv(&e, &lambda)?;
        let n = &p * &q;
        Ok(RsaKeyPair {
            public: RsaPublicKey { n, e },
            d,
            p,
            q,
        })
    }

    /// The 3233 = 61·53, e = 17 toy key used throughout the tests and examples.
    pub fn toy() -> Self {
        Self::from_primes(BigUint::from(61u8), BigUint::from(53u8), BigUint::from(17u8))
            .expect("toy key is valid")
    }

    /// Textual key file: one `name: decimal` line per field.
    pub fn to_key_file(&self) -> String {
        format!(
            "n: {}\ne: {}\nd: {}\np: {}\nq: {}\n",
            self.public.n, self.public.e, self.d, self.p, self.q
        )
    }

    pub fn from_key_file(text: &str) -> Result<Self, RsaError> {
        let fields = parse_key_fields(text)?;
        let take = |i: usize| fields[i].clone().ok_or_else(|| RsaError::KeyFile(format!("missing field {:?}", KEY_FIELDS[i])));
        let (n, e, d, p, q) = (take(0)?, take(1)?, take(2)?, take(3)?, take(4)?);
        let kp = RsaKeyPair {
            public: RsaPublicKey { n, e },
            d,
            p,
            q,
        };
        kp.validate()?;
        Ok(kp)
    }

    /// Checks n = p·q, primality of the factors, and e·d ≡ 1 mod lcm(p−1, q−1).
    pub fn validate(&self) -> Result<(), RsaError> {
        check_exponent(&self.public.e)?;
        if &self.p * &self.q != self.public.n {
            return Err(RsaError::InconsistentKey("n != p*q".into()));
        }
        if !numtheory::is_probable_prime(&self.p, 20) || !numtheory::is_probable_prime(&self.q, 20) {
            return Err(RsaError::InconsistentKey("p or q is not prime".into()));
        }
        let one = BigUint::one();
        let lambda = (&self.p - &one).lcm(&(&self.q - &one));
        if (&self.public.e * &self.d) % &lambda != one {
            return Err(RsaError::InconsistentKey("e*d != 1 mod lcm(p-1, q-1)".into()));
        }
        Ok(())
    }
}

const KEY_FIELDS: [&str; 5] = ["n", "e", "d", "p", "q"];

fn parse_key_fields(text: &str) -> Result<[Option<BigUint>; 5], RsaError> {
    let mut fields: [Option<BigUint>; 5] = Default::default();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, value) = line
            .split_once(':')
            .ok_or_else(|| RsaError::KeyFile(format!("line {}: expected `name: value`", lineno + 1)))?;
        let idx = KEY_FIELDS
            .iter()
            .position(|n| *n == name.trim())
            .ok_or_else(|| RsaError::KeyFile(format!("line {}: unknown field {:?}", lineno + 1, name.trim())))?;
        let v = parse_decimal(value).map_err(|e| RsaError::KeyFile(format!("line {}: {e}", lineno + 1)))?;
        if fields[idx].replace(v).is_some() {
            return Err(RsaError::KeyFile(format!("duplicate field {:?}", KEY_FIELDS[idx])));
        }
    }
    Ok(fields)
}

fn check_exponent(e: &BigUint) -> Result<(), RsaError> {
    if e < &BigUint::from(3u8) || e.is_even() {
        return Err(RsaError::InvalidExponent);
    }
    Ok(())
}

/// Generate a key pair whose modulus has exactly `bits` bits.
///
/// Both primes get `bits/2` bits with their top two bits set. 128-bit keys
/// are accepted on purpose: they reproduce the factorable legacy key.
pub fn keygen<R: RngCore + ?Sized>(bits: u64, e: &BigUint, rng: &mut R) -> Result<RsaKeyPair, RsaError> {
    if !SUPPORTED_KEY_BITS.contains(&bits) {
        return Err(RsaError::UnsupportedKeySize(bits));
    }
    check_exponent(e)?;
    let one = BigUint::one();
    let half = bits / 2;
    let draw = |rng: &mut R| -> Option<BigUint> {
        for _ in 0..KEYGEN_ATTEMPTS {
            let p = gen_prime(half, rng);
            if (&p - &one).gcd(e) == one {
                return Some(p);
            }
        }
        None
    };
    let p = draw(rng).ok_or(RsaError::KeygenFailed(KEYGEN_ATTEMPTS))?;
    let mut q = draw(rng).ok_or(RsaError::KeygenFailed(KEYGEN_ATTEMPTS))?;
    let mut attempts = 0;
    while q == p {
        attempts += 1;
        if attempts > KEYGEN_ATTEMPTS {
            return Err(RsaError::KeygenFailed(KEYGEN_ATTEMPTS));
        }
        q = draw(rng).ok_or(RsaError::KeygenFailed(KEYGEN_ATTEMPTS))?;
    }
    let (p, q) = if p > q { (p, q) } else { (q, p) };
    let kp = RsaKeyPair::from_primes(p, q, e.clone())?;
    debug_assert_eq!(kp.public.n.bits(), bits);
    Ok(kp)
}

/// `m^e mod n`, nothing else.
pub fn encrypt_raw(key: &RsaPublicKey, m: &BigUint) -> Result<BigUint, RsaError> {
    if m >= &key.n {
        return Err(RsaError::MessageOutOfRange);
    }
    Ok(mod_pow(m, &key.e, &key.n)?)
}

pub fn decrypt_raw(key: &RsaKeyPair, c: &BigUint) -> Result<BigUint, RsaError> {
    if c >= &key.public.n {
        return Err(RsaError::CiphertextOutOfRange);
    }
    Ok(mod_pow(c, &key.d, &key.public.n)?)
}

/// `c · (2^(b·e) mod n) mod n`: an encryption of `2^b·k` given an
/// encryption `c` of `k`.
///
/// ```text
/// c·2^(be) ≡ k^e · (2^b)^e ≡ (2^b·k)^e   (mod n)
/// ```
pub fn shift_ciphertext(key: &RsaPublicKey, c: &BigUint, b: u32) -> BigUint {
    let factor = (BigUint::one() << b) % &key.n;
    let factor = factor.modpow(&key.e, &key.n);
    (c * factor) % &key.n
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::RandBigInt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    fn toy_pub() -> RsaPublicKey {
        RsaKeyPair::toy().public
    }

    #[test]
    fn toy_key_examples() {
        let kp = RsaKeyPair::toy();
        assert_eq!(kp.public.n, big(3233));
        assert_eq!(encrypt_raw(&kp.public, &big(65)).unwrap(), big(2790));
        assert_eq!(decrypt_raw(&kp, &big(2790)).unwrap(), big(65));
        assert_eq!(encrypt_raw(&kp.public, &big(1)).unwrap(), big(1));
        assert_eq!(encrypt_raw(&kp.public, &big(0)).unwrap(), big(0));
        assert_eq!(decrypt_raw(&kp, &big(0)).unwrap(), big(0));
        // lcm(60, 52) = 780 and 17·413 = 7021 = 9·780 + 1
        assert_eq!(kp.d, big(413));
    }

    #[test]
    fn range_checks() {
        let kp = RsaKeyPair::toy();
        assert_eq!(encrypt_raw(&kp.public, &big(3233)), Err(RsaError::MessageOutOfRange));
        assert_eq!(decrypt_raw(&kp, &big(4000)), Err(RsaError::CiphertextOutOfRange));
    }

    #[test]
    fn shift_examples() {
        let kp = RsaKeyPair::toy();
        let c = encrypt_raw(&kp.public, &big(5)).unwrap();
        assert_eq!(shift_ciphertext(&kp.public, &c, 0), c);
        let shifted = shift_ciphertext(&kp.public, &c, 3);
        assert_eq!(decrypt_raw(&kp, &shifted).unwrap(), big(40));
    }

    #[test]
    fn shift_composes() {
        let pk = toy_pub();
        for c in [0u64, 1, 2, 1234, 3232] {
            for b1 in 0..12 {
                for b2 in 0..12 {
                    let direct = shift_ciphertext(&pk, &big(c), b1 + b2);
                    let stepwise = shift_ciphertext(&pk, &shift_ciphertext(&pk, &big(c), b1), b2);
                    assert_eq!(direct, stepwise);
                }
            }
        }
    }

    #[test]
    fn keygen_rejects_bad_parameters() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        assert_eq!(keygen(100, &big(65537), &mut rng).unwrap_err(), RsaError::UnsupportedKeySize(100));
        assert_eq!(keygen(512, &big(4), &mut rng).unwrap_err(), RsaError::InvalidExponent);
        assert_eq!(keygen(512, &big(1), &mut rng).unwrap_err(), RsaError::InvalidExponent);
    }

    #[test]
    fn keygen_sizes_and_determinism() {
        for bits in [128u64, 256, 512] {
            let a = keygen(bits, &big(65537), &mut ChaCha20Rng::seed_from_u64(bits)).unwrap();
            let b = keygen(bits, &big(65537), &mut ChaCha20Rng::seed_from_u64(bits)).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.public.n.bits(), bits);
            a.validate().unwrap();
        }
    }

    #[test]
    fn homomorphism_and_roundtrip() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let kp = keygen(512, &big(65537), &mut rng).unwrap();
        let n = &kp.public.n;
        for _ in 0..500 {
            let a = rng.gen_biguint_below(n);
            let b = rng.gen_biguint_below(n);
            let ca = encrypt_raw(&kp.public, &a).unwrap();
            let cb = encrypt_raw(&kp.public, &b).unwrap();
            let prod = encrypt_raw(&kp.public, &((&a * &b) % n)).unwrap();
            assert_eq!((ca * cb) % n, prod);
            assert_eq!(decrypt_raw(&kp, &encrypt_raw(&kp.public, &a).unwrap()).unwrap(), a);
        }
    }

    #[test]
    fn public_key_file_reads_either_form() {
        let kp = RsaKeyPair::toy();
        assert_eq!(RsaPublicKey::from_key_file(&kp.to_key_file()).unwrap(), kp.public);
        assert_eq!(RsaPublicKey::from_key_file(&kp.public.to_key_file()).unwrap(), kp.public);
        assert!(RsaPublicKey::from_key_file("n: 3233\n").is_err());
        assert!(RsaKeyPair::from_key_file(&kp.public.to_key_file()).is_err());
    }

    #[test]
    fn key_file_roundtrip_and_errors() {
        let kp = keygen(256, &big(65537), &mut ChaCha20Rng::seed_from_u64(9)).unwrap();
        let text = kp.to_key_file();
        assert!(text.starts_with("n: "));
        assert_eq!(RsaKeyPair::from_key_file(&text).unwrap(), kp);

        let missing: String = text.lines().filter(|l| !l.starts_with("d:")).map(|l| format!("{l}\n")).collect();
        assert!(matches!(RsaKeyPair::from_key_file(&missing), Err(RsaError::KeyFile(_))));
        let tampered = text.replacen("e: 65537", "e: 3", 1);
        assert!(RsaKeyPair::from_key_file(&tampered).is_err());
        assert!(matches!(RsaKeyPair::from_key_file("x: 1"), Err(RsaError::KeyFile(_))));
    }
}
