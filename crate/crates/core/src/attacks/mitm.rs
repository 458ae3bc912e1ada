use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde_json::{json, Value};

use super::AttackError;
use crate::numtheory::mod_inv;
use crate::rsa::{encrypt_raw, RsaPublicKey};

/// Largest `m1` built without an explicit override.
pub const MITM_TABLE_LIMIT: u32 = 28;

type Inverses = Arc<Vec<(u64, BigUint)>>;

/// Sorted `(M1^e mod n, M1)` for every `1 <= M1 <= 2^m1`.
///
/// Also remembers the `M2` side computed for each `m2` it has been used
/// with, so repeated one-shot attacks pay for it once.
#[derive(Debug, Clone)]
pub struct MitmTable {
    m1: u32,
    entries: Vec<(BigUint, u64)>,
    public: RsaPublicKey,
    inverses: Arc<Mutex<HashMap<u32, Inverses>>>,
}

impl MitmTable {
    pub fn m1(&self) -> u32 {
        self.m1
    }

    pub fn entries(&self) -> &[(BigUint, u64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn public_key(&self) -> &RsaPublicKey {
        &self.public
    }

    /// All `M1` whose encryption equals `value`.
    pub fn lookup<'a>(&'a self, value: &'a BigUint) -> impl Iterator<Item = u64> + 'a {
        let start = self.entries.partition_point(|(v, _)| v < value);
        self.entries[start..].iter().take_while(move |(v, _)| v == value).map(|&(_, m)| m)
    }
}

pub fn mitm_build_table(public: &RsaPublicKey, m1: u32) -> Result<MitmTable, AttackError> {
    mitm_build_table_with_limit(public, m1, MITM_TABLE_LIMIT)
}

/// Build with a caller-chosen size guard in place of [`MITM_TABLE_LIMIT`].
pub fn mitm_build_table_with_limit(public: &RsaPublicKey, m1: u32, limit: u32) -> Result<MitmTable, AttackError> {
    if m1 > limit || m1 > 40 {
        let cost = mitm_cost(m1, m1, 2 * m1);
        return Err(AttackError::TableTooLarge {
            m1,
            limit: limit.min(40),
            estimate: format!("{} of table", cost.human),
        });
    }
    let mut entries: Vec<(BigUint, u64)> = (1..=1u64 << m1)
        .map(|m| (BigUint::from(m).modpow(&public.e, &public.n), m))
        .collect();
    entries.sort_unstable();
    Ok(MitmTable {
        m1,
        entries,
        public: public.clone(),
        inverses: Arc::default(),
    })
}

/// A table plus the inverses `(M2^e)^-1 mod n` for every `M2 <= 2^m2`, so
/// that many ciphertexts can be attacked for one multiplication per `M2`.
pub struct MitmSolver<'a> {
    table: &'a MitmTable,
    m2: u32,
    inverses: Inverses,
}

impl<'a> MitmSolver<'a> {
    pub fn new(table: &'a MitmTable, m2: u32) -> Result<Self, AttackError> {
        if m2 > 40 {
            return Err(AttackError::InvalidParameter(format!("m2 = {m2} is too large to enumerate")));
        }
        let mut cache = table.inverses.lock().expect("inverse cache");
        let inverses = Arc::clone(cache.entry(m2).or_insert_with(|| {
            let n = &table.public.n;
            let e = &table.public.e;
            let side: Vec<(u64, BigUint)> = (1..=1u64 << m2).map(|m| (m, BigUint::from(m).modpow(e, n))).collect();
            Arc::new(batch_invert(side, n))
        }));
        Ok(MitmSolver { table, m2, inverses })
    }

    pub fn m2(&self) -> u32 {
        self.m2
    }

    /// Find `M = M1 * M2` with `M^e = c (mod n)`, checked before returning.
    pub fn solve(&self, c: &BigUint) -> Option<BigUint> {
        let public = &self.table.public;
        if c >= &public.n {
            return None;
        }
        for (m2, inv) in self.inverses.iter() {
            let target = c * inv % &public.n;
            for m1 in self.table.lookup(&target) {
                let m = BigUint::from(m1) * *m2;
                if m < public.n && encrypt_raw(public, &m).ok().as_ref() == Some(c) {
                    return Some(m);
                }
            }
        }
        None
    }
}

/// Invert every value mod `n` with one modular inversion (Montgomery's
/// trick). Values sharing a factor with `n` are dropped.
fn batch_invert(values: Vec<(u64, BigUint)>, n: &BigUint) -> Vec<(u64, BigUint)> {
    let mut prefix = Vec::with_capacity(values.len());
    let mut acc = BigUint::one();
    for (_, v) in &values {
        acc = acc * v % n;
        prefix.push(acc.clone());
    }
    let Ok(mut inv) = mod_inv(&acc, n) else {
        return values
            .into_iter()
            .filter_map(|(m, v)| mod_inv(&v, n).ok().map(|i| (m, i)))
            .collect();
    };
    let mut out = vec![(0u64, BigUint::zero()); values.len()];
    for i in (0..values.len()).rev() {
        let before = if i == 0 { BigUint::one() } else { prefix[i - 1].clone() };
        out[i] = (values[i].0, &inv * before % n);
        inv = inv * &values[i].1 % n;
    }
    out
}

/// One-shot attack on a single ciphertext.
pub fn mitm_attack(table: &MitmTable, c: &BigUint, m2: u32) -> Option<BigUint> {
    MitmSolver::new(table, m2).ok()?.solve(c)
}

/// Resources for a table over `M1 <= 2^m1` and a scan over `M2 <= 2^m2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MitmCost {
    pub m1: u32,
    pub m2: u32,
    pub key_bits: u32,
    pub table_bits: BigUint,
    pub table_bytes: BigUint,
    pub exponentiations: BigUint,
    /// Table size in SI petabytes (10^15 bytes).
    pub petabytes: f64,
    pub human: String,
}

impl MitmCost {
    /// Whether the bounds reach every key of `key_bits` bits.
    pub fn covers_key_space(&self) -> bool {
        self.m1 + self.m2 >= self.key_bits
    }

    pub fn to_json(&self) -> Value {
        json!({
            "m1": self.m1,
            "m2": self.m2,
            "key_bits": self.key_bits,
            "table_bits": self.table_bits.to_string(),
            "table_bytes": self.table_bytes.to_string(),
            "petabytes": self.petabytes.round() as u64,
            "petabytes_exact": self.petabytes,
            "table_human": self.human,
            "exponentiations": self.exponentiations.to_string(),
            "exponentiations_log2": self.m2,
        })
    }
}

impl fmt::Display for MitmCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "m1={} m2={}: table of {} ({} bits), 2^{} modular exponentiations",
            self.m1, self.m2, self.human, self.table_bits, self.m2
        )
    }
}

/// Table size `2^(m1+1) * max(m1, m2)` bits and `2^m2` exponentiations.
pub fn mitm_cost(m1: u32, m2: u32, key_bits: u32) -> MitmCost {
    let table_bits = (BigUint::one() << (m1 + 1)) * m1.max(m2);
    let table_bytes = (&table_bits + 7u32) / 8u32;
    let petabytes = table_bytes.to_f64().unwrap_or(f64::INFINITY) / 1e15;
    MitmCost {
        m1,
        m2,
        key_bits,
        exponentiations: BigUint::one() << m2,
        human: human_petabytes(petabytes),
        table_bits,
        table_bytes,
        petabytes,
    }
}

fn human_petabytes(pb: f64) -> String {
    if (1.0..1e18).contains(&pb) {
        format!("{} petabytes", group_thousands(pb.round() as u64))
    } else {
        format!("{pb:.3e} petabytes")
    }
}

fn group_thousands(v: u64) -> String {
    let digits = v.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numtheory::is_probable_prime;
    use crate::rsa::{keygen, RsaKeyPair};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn toy() -> RsaKeyPair {
        RsaKeyPair::toy()
    }

    #[test]
    fn small_table_is_exhaustively_correct() {
        let kp = toy();
        let t = mitm_build_table(&kp.public, 4).unwrap();
        assert_eq!(t.len(), 16);
        let mut seen: Vec<u64> = t.entries().iter().map(|&(_, m)| m).collect();
        seen.sort();
        assert_eq!(seen, (1..=16).collect::<Vec<_>>());
        for (v, m) in t.entries() {
            // independent check by repeated multiplication
            let mut acc = 1u64;
            for _ in 0..17 {
                acc = acc * m % 3233;
            }
            assert_eq!(v, &BigUint::from(acc));
        }
        assert!(t.entries().windows(2).all(|w| w[0].0 <= w[1].0));
    }

    #[test]
    fn guard_refuses_large_tables_with_estimate() {
        let kp = toy();
        match mitm_build_table(&kp.public, 29) {
            Err(AttackError::TableTooLarge { m1: 29, limit: 28, estimate }) => assert!(estimate.contains("petabytes")),
            other => panic!("{other:?}"),
        }
        assert!(mitm_build_table_with_limit(&kp.public, 6, 5).unwrap_err().to_string().contains("m1 = 6"));
    }

    #[test]
    fn recovers_products_of_small_factors() {
        let kp = keygen(1024, &BigUint::from(65537u32), &mut ChaCha20Rng::seed_from_u64(3)).unwrap();
        let t = mitm_build_table(&kp.public, 10).unwrap();
        let solver = MitmSolver::new(&t, 10).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        for _ in 0..20 {
            let k = BigUint::from(rng.gen_range(1..=1024u64) * rng.gen_range(1..=1024u64));
            let c = encrypt_raw(&kp.public, &k).unwrap();
            assert_eq!(solver.solve(&c), Some(k));
        }
    }

    #[test]
    fn large_prime_key_does_not_split() {
        let kp = keygen(256, &BigUint::from(65537u32), &mut ChaCha20Rng::seed_from_u64(9)).unwrap();
        let t = mitm_build_table(&kp.public, 8).unwrap();
        let k = BigUint::from(1_000_003u64);
        assert!(is_probable_prime(&k, 20));
        let c = encrypt_raw(&kp.public, &k).unwrap();
        assert_eq!(mitm_attack(&t, &c, 8), None);
    }

    #[test]
    fn batch_inversion_matches_individual_and_skips_shared_factors() {
        let n = BigUint::from(3233u32);
        let vals: Vec<(u64, BigUint)> = (1..=100u64).map(|m| (m, BigUint::from(m))).collect();
        let got = batch_invert(vals, &n);
        assert_eq!(got.len(), 100 - 1 - 1); // 53 and 61 share a factor
        for (m, inv) in got {
            assert_eq!(BigUint::from(m) * inv % &n, BigUint::one());
        }
    }

    #[test]
    fn cost_matches_direct_formula() {
        assert_eq!(mitm_cost(4, 4, 8).table_bits, BigUint::from(128u32));
        assert_eq!(mitm_cost(30, 36, 64).table_bits, (BigUint::one() << 31u32) * 36u32);
        let big = mitm_cost(64, 64, 128);
        assert_eq!(big.table_bits, BigUint::one() << 71u32);
        assert_eq!(big.table_bytes.to_string(), "295147905179352825856");
        assert_eq!(big.human, "295,148 petabytes");
        assert_eq!(big.exponentiations, BigUint::one() << 64u32);
        assert_eq!(big.to_json()["petabytes"], 295148);
        assert!(big.covers_key_space());
        assert!(!mitm_cost(30, 36, 128).covers_key_space());
    }

    #[test]
    fn thousands_grouping() {
        assert_eq!(group_thousands(0), "0");
        assert_eq!(group_thousands(999), "999");
        assert_eq!(group_thousands(1000), "1,000");
        assert_eq!(group_thousands(1234567), "1,234,567");
    }
}
