//! Arbitrary-precision number theory: modular arithmetic, primality,
//! prime generation and small-factor factoring.
//!
//! Values are [`BigUint`]s from `num-bigint`. Big-endian bytes and decimal
//! strings are the external encodings; see [`to_be_bytes_padded`] for the
//! fixed-width form used by RSA blocks.

mod factor;
pub(crate) mod montgomery;
mod prime;

pub use factor::{factor_semiprime, factor_semiprime_with_budget, factorize, Factorization, DEFAULT_FACTOR_BUDGET};
pub use num_bigint::BigUint;
pub use prime::{gen_prime, is_probable_prime};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NumTheoryError {
    #[error("modulus must be at least 2")]
    ModulusTooSmall,
    #[error("{value} is not invertible modulo {modulus}: not coprime")]
    NotCoprime { value: BigUint, modulus: BigUint },
    #[error("factoring budget exhausted after {iterations} iterations")]
    BudgetExhausted { iterations: u64 },
    #[error("{0} is not composite")]
    NotComposite(BigUint),
    #[error("invalid decimal integer {0:?}")]
    Parse(String),
}

/// `base^exp mod modulus` by square-and-multiply.
pub fn mod_pow(base: &BigUint, exp: &BigUint, modulus: &BigUint) -> Result<BigUint, NumTheoryError> {
    if modulus < &BigUint::from(2u8) {
        return Err(NumTheoryError::ModulusTooSmall);
    }
    Ok(base.modpow(exp, modulus))
}

/// Inverse of `a` modulo `modulus` via the extended Euclidean algorithm.
///
/// The result lies in `[0, modulus)`.
pub fn mod_inv(a: &BigUint, modulus: &BigUint) -> Result<BigUint, NumTheoryError> {
    if modulus < &BigUint::from(2u8) {
        return Err(NumTheoryError::ModulusTooSmall);
    }
    let m = BigInt::from(modulus.clone());
    let (mut old_r, mut r) = (BigInt::from(a % modulus), m.clone());
    let (mut old_s, mut s) = (BigInt::one(), BigInt::zero());
    while !r.is_zero() {
        let q = &old_r / &r;
        let next_r = &old_r - &q * &r;
        old_r = std::mem::replace(&mut r, next_r);
        let next_s = &old_s - &q * &s;
        old_s = std::mem::replace(&mut s, next_s);
    }
    if !old_r.is_one() {
        return Err(NumTheoryError::NotCoprime {
            value: a.clone(),
            modulus: modulus.clone(),
        });
    }
    let inv = old_s.mod_floor(&m);
    debug_assert!(!inv.is_negative());
    Ok(inv.to_biguint().expect("mod_floor yields a non-negative value"))
}

pub fn parse_decimal(s: &str) -> Result<BigUint, NumTheoryError> {
    let t = s.trim();
    if t.is_empty() || !t.bytes().all(|b| b.is_ascii_digit()) {
        return Err(NumTheoryError::Parse(s.to_string()));
    }
    BigUint::parse_bytes(t.as_bytes(), 10).ok_or_else(|| NumTheoryError::Parse(s.to_string()))
}

/// Big-endian bytes left-padded with zeros to exactly `len` bytes.
///
/// Returns `None` if the value needs more than `len` bytes.
pub fn to_be_bytes_padded(x: &BigUint, len: usize) -> Option<Vec<u8>> {
    let raw = if x.is_zero() { Vec::new() } else { x.to_bytes_be() };
    if raw.len() > len {
        return None;
    }
    let mut out = vec![0u8; len - raw.len()];
    out.extend_from_slice(&raw);
    Some(out)
}

pub(crate) fn to_u128(x: &BigUint) -> Option<u128> {
    x.to_u128()
}
