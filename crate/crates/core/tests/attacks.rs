use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use wuplab::attacks::{can_split, cca2_attack, mitm_build_table, Cca2Config, MitmSolver};
use wuplab::numtheory::{factorize, is_probable_prime, DEFAULT_FACTOR_BUDGET};
use wuplab::oracle::{InProcessOracle, OracleConfig, OracleServer};
use wuplab::rsa::{encrypt_raw, keygen};
use wuplab::victim_prng::SessionKey;
use wuplab::wup::{seal_session, WupMessage};

#[test]
fn cca2_recovers_fifty_keys_with_128_queries_each() {
    let mut rng = ChaCha20Rng::seed_from_u64(50);
    let kp = keygen(1024, &BigUint::from(65537u32), &mut rng).unwrap();
    for _ in 0..50 {
        let server = Arc::new(OracleServer::new(OracleConfig::new(kp.clone())));
        let victim = SessionKey::from_u128(rng.gen());
        let captured = seal_session(&kp.public, &victim, &WupMessage::sample_request("v")).unwrap();
        let mut oracle = InProcessOracle::new(Arc::clone(&server), "a");
        let res = cca2_attack(&captured, &mut oracle, &kp.public, &Cca2Config::default()).unwrap();
        assert_eq!(res.recovered_key.bytes(), victim.bytes());
        assert_eq!(res.queries, 128);
        assert_eq!(server.transcript().len(), 128);
        // a response means the probed bit was zero
        let zeros = (0..128).filter(|i| victim.to_u128() >> i & 1 == 0).count();
        assert_eq!(server.transcript().accepted(), zeros);
    }
}

#[test]
fn mitm_finds_every_split_key_exhaustively() {
    let kp = keygen(128, &BigUint::from(65537u32), &mut ChaCha20Rng::seed_from_u64(8)).unwrap();
    let m = 6;
    let table = mitm_build_table(&kp.public, m).unwrap();
    let solver = MitmSolver::new(&table, m).unwrap();
    for a in 1..=1u64 << m {
        for b in a..=1u64 << m {
            let k = BigUint::from(a * b);
            let c = encrypt_raw(&kp.public, &k).unwrap();
            assert_eq!(solver.solve(&c), Some(k), "{a} * {b}");
        }
    }
}

#[test]
fn mitm_at_eight_bits_matches_brute_force_membership() {
    let kp = keygen(128, &BigUint::from(65537u32), &mut ChaCha20Rng::seed_from_u64(9)).unwrap();
    let table = mitm_build_table(&kp.public, 8).unwrap();
    let solver = MitmSolver::new(&table, 8).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    for _ in 0..400 {
        let k: u64 = rng.gen_range(1..=1 << 16);
        let splits = (1..=256u64).any(|d| k.is_multiple_of(d) && k / d <= 256);
        let c = encrypt_raw(&kp.public, &BigUint::from(k)).unwrap();
        let found = solver.solve(&c);
        assert_eq!(found.is_some(), splits, "k = {k}");
        if let Some(f) = found {
            assert_eq!(f, BigUint::from(k));
        }
    }
}

/// Every divisor of m from its prime factorization, by counting through the
/// exponents like digits of a mixed-radix number.
fn all_divisors(factors: &[(u128, u32)]) -> Vec<u128> {
    let mut digits = vec![0u32; factors.len()];
    let mut out = Vec::new();
    loop {
        out.push(factors.iter().zip(&digits).map(|(&(p, _), &e)| p.pow(e)).product());
        let mut i = 0;
        loop {
            if i == digits.len() {
                return out;
            }
            if digits[i] < factors[i].1 {
                digits[i] += 1;
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

#[test]
fn split_decision_matches_divisor_enumeration() {
    let mut rng = ChaCha20Rng::seed_from_u64(64);
    let (m1, m2) = (32u32, 32u32);
    let mut positives = 0;
    for _ in 0..100 {
        let m: u64 = rng.gen_range(1..u64::MAX);
        let f = factorize(&BigUint::from(m), DEFAULT_FACTOR_BUDGET).unwrap();
        assert_eq!(f.product(), BigUint::from(m));
        let factors: Vec<(u128, u32)> = f
            .factors()
            .iter()
            .map(|(p, e)| {
                assert!(p.is_one() || is_probable_prime(p, 32));
                (p.to_u128().unwrap(), *e)
            })
            .collect();
        let m = m as u128;
        let expected = all_divisors(&factors).into_iter().any(|d| d <= 1 << m1 && m / d <= 1 << m2);
        positives += expected as u32;
        assert_eq!(can_split(m, &factors, m1, m2), expected, "m = {m}, factors {factors:?}");
    }
    assert!(positives > 0 && positives < 100);
}
