use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, ToPrimitive, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use super::montgomery::{Mont128, Mont64};

pub(crate) const SMALL_PRIMES: [u64; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193,
    197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

// Deterministic for every n < 2^64.
const BASES_64: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Miller-Rabin primality test.
///
/// Below 2^64 a fixed base set makes the answer exact. Above, `rounds`
/// witnesses are drawn from a generator seeded by the value itself, so the
/// answer is reproducible; a composite survives with probability at most
/// `4^-rounds`.
pub fn is_probable_prime(n: &BigUint, rounds: u32) -> bool {
    assert!(rounds >= 1, "at least one Miller-Rabin round is required");
    if let Some(small) = n.to_u64() {
        return is_prime_u64(small);
    }
    for &p in &SMALL_PRIMES {
        if (n % p).is_zero() {
            return false;
        }
    }
    if let Some(v) = n.to_u128() {
        return is_probable_prime_u128(v, rounds);
    }

    let one = BigUint::one();
    let n_minus_1 = n - &one;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    let mut rng = witness_rng(&n.to_bytes_be());
    let two = BigUint::from(2u8);
    'witness: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &n_minus_1);
        let mut x = a.modpow(&d, n);
        if x == one || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = (&x * &x) % n;
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn witness_rng(seed_material: &[u8]) -> ChaCha20Rng {
    let digest = Sha256::digest(seed_material);
    ChaCha20Rng::from_seed(digest.into())
}

pub(crate) fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for &p in &SMALL_PRIMES {
        if n == p {
            return true;
        }
        if n.is_multiple_of(p) {
            return false;
        }
    }
    let ctx = Mont64::new(n);
    let one = ctx.one();
    let minus_one = ctx.enter(n - 1);
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &a in &BASES_64 {
        let mut x = ctx.pow(ctx.enter(a), d);
        if x == one || x == minus_one {
            continue;
        }
        for _ in 1..s {
            x = ctx.mul(x, x);
            if x == minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

pub(crate) fn is_probable_prime_u128(n: u128, rounds: u32) -> bool {
    if let Ok(small) = u64::try_from(n) {
        return is_prime_u64(small);
    }
    if n.is_multiple_of(2) {
        return false;
    }
    let ctx = Mont128::new(n);
    let one = ctx.one();
    let minus_one = ctx.enter(n - 1);
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    let mut rng = witness_rng(&n.to_be_bytes());
    'witness: for _ in 0..rounds {
        let a = loop {
            let lo = rng.next_u64() as u128;
            let hi = rng.next_u64() as u128;
            let a = ((hi << 64) | lo) % n;
            if a >= 2 && a <= n - 2 {
                break a;
            }
        };
        let mut x = ctx.pow(ctx.enter(a), d);
        if x == one || x == minus_one {
            continue;
        }
        for _ in 1..s {
            x = ctx.mul(x, x);
            if x == minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Random probable prime with exactly `bits` bits.
///
/// The two most significant bits are both set, so the product of two such
/// primes has exactly `2·bits` bits. Output is a pure function of the
/// generator state.
///
/// # Panics
///
/// Panics if `bits < 16`.
pub fn gen_prime<R: RngCore + ?Sized>(bits: u64, rng: &mut R) -> BigUint {
    assert!(bits >= 16, "gen_prime needs at least 16 bits, got {bits}");
    let top = (BigUint::one() << (bits - 1)) | (BigUint::one() << (bits - 2));
    loop {
        let mut candidate = rng.gen_biguint(bits) | &top | BigUint::one();
        // step through odd values until the next sieve survivor
        for _ in 0..256 {
            if candidate.bits() != bits {
                break;
            }
            if SMALL_PRIMES[1..].iter().all(|&p| !(&candidate % p).is_zero())
                && is_probable_prime(&candidate, 40)
            {
                return candidate;
            }
            candidate += 2u8;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sieve(limit: usize) -> Vec<bool> {
        let mut is = vec![true; limit];
        is[0] = false;
        is[1] = false;
        let mut i = 2;
        while i * i < limit {
            if is[i] {
                let mut j = i * i;
                while j < limit {
                    is[j] = false;
                    j += i;
                }
            }
            i += 1;
        }
        is
    }

    #[test]
    fn agrees_with_sieve_below_one_million() {
        let table = sieve(1_000_000);
        for (n, &prime) in table.iter().enumerate() {
            assert_eq!(is_probable_prime(&BigUint::from(n), 1), prime, "n = {n}");
        }
    }

    #[test]
    fn known_values() {
        let p = BigUint::from(17381019776996486069u64);
        let q = BigUint::from(14119218591450688427u64);
        assert!(is_probable_prime(&p, 20));
        assert!(is_probable_prime(&q, 20));
        assert!(!is_probable_prime(&BigUint::from(4u8), 20));
        assert!(!is_probable_prime(&(&p * &q), 20));
        // Carmichael numbers and a strong pseudoprime to base 2
        for c in [561u64, 1105, 1729, 2047, 3215031751, 3825123056546413051] {
            assert!(!is_probable_prime(&BigUint::from(c), 1), "{c}");
        }
        // 2^127 - 1 and 2^521 - 1 are Mersenne primes
        assert!(is_probable_prime(&((BigUint::one() << 127u32) - 1u8), 20));
        assert!(is_probable_prime(&((BigUint::one() << 521u32) - 1u8), 20));
        assert!(!is_probable_prime(&((BigUint::one() << 523u32) - 1u8), 20));
    }

    #[test]
    fn gen_prime_range_and_determinism() {
        let mut a = ChaCha20Rng::seed_from_u64(5);
        let mut b = ChaCha20Rng::seed_from_u64(5);
        let p = gen_prime(512, &mut a);
        assert_eq!(p, gen_prime(512, &mut b));
        assert_eq!(p.bits(), 512);
        assert!(p >= BigUint::one() << 511u32);
        assert!(is_probable_prime(&p, 40));
        let small = gen_prime(16, &mut a);
        assert_eq!(small.bits(), 16);
        assert!(is_prime_u64(small.to_u64().unwrap()));
    }
}
