use std::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};

use super::montgomery::{gcd_u128, gcd_u64, Mont128, Mont64};
use super::prime::{is_prime_u64, is_probable_prime, is_probable_prime_u128};
use super::NumTheoryError;

/// Default number of Pollard-Brent iterations (polynomial evaluations)
/// a factoring call may spend.
pub const DEFAULT_FACTOR_BUDGET: u64 = 1 << 34;

const TRIAL_DIVISION_LIMIT: u64 = 10_000;
const GCD_BATCH: u64 = 128;
const PRIMALITY_ROUNDS: u32 = 40;

/// Prime factorization as `(prime, exponent)` pairs in increasing prime order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factorization {
    factors: Vec<(BigUint, u32)>,
}

impl Factorization {
    fn from_primes(mut primes: Vec<BigUint>) -> Self {
        primes.sort();
        let mut factors: Vec<(BigUint, u32)> = Vec::new();
        for p in primes {
            match factors.last_mut() {
                Some((last, e)) if *last == p => *e += 1,
                _ => factors.push((p, 1)),
            }
        }
        Factorization { factors }
    }

    pub fn factors(&self) -> &[(BigUint, u32)] {
        &self.factors
    }

    /// Every prime repeated according to its exponent, ascending.
    pub fn primes_with_multiplicity(&self) -> Vec<BigUint> {
        self.factors
            .iter()
            .flat_map(|(p, e)| std::iter::repeat_n(p.clone(), *e as usize))
            .collect()
    }

    pub fn product(&self) -> BigUint {
        self.factors
            .iter()
            .fold(BigUint::one(), |acc, (p, e)| acc * p.pow(*e))
    }

    pub fn is_semiprime(&self) -> bool {
        self.factors.iter().map(|(_, e)| *e).sum::<u32>() == 2
    }
}

impl fmt::Display for Factorization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .factors
            .iter()
            .map(|(p, e)| if *e == 1 { p.to_string() } else { format!("{p}^{e}") })
            .collect();
        write!(f, "{}", parts.join(" * "))
    }
}

/// Iteration accounting shared by every split of one factoring call.
struct Budget {
    limit: u64,
    used: u64,
}

impl Budget {
    fn remaining(&self) -> u64 {
        self.limit.saturating_sub(self.used)
    }
}

/// Factor a composite whose prime factors are at most about 2^64, with the
/// default iteration budget.
///
/// Trial division up to 10^4 runs first, then Pollard's rho with Brent's
/// cycle detection on whatever is left.
pub fn factor_semiprime(n: &BigUint) -> Result<Factorization, NumTheoryError> {
    factor_semiprime_with_budget(n, DEFAULT_FACTOR_BUDGET)
}

pub fn factor_semiprime_with_budget(n: &BigUint, budget: u64) -> Result<Factorization, NumTheoryError> {
    if n < &BigUint::from(4u8) || is_probable_prime(n, PRIMALITY_ROUNDS) {
        return Err(NumTheoryError::NotComposite(n.clone()));
    }
    factorize(n, budget)
}

/// Complete factorization of any `n ≥ 1` (1 factors as the empty product).
pub fn factorize(n: &BigUint, budget: u64) -> Result<Factorization, NumTheoryError> {
    if n.is_zero() {
        return Err(NumTheoryError::NotComposite(n.clone()));
    }
    let mut primes = Vec::new();
    let mut rest = n.clone();
    for p in 2..=TRIAL_DIVISION_LIMIT {
        if rest.is_one() {
            break;
        }
        // cheap skip of even candidates past 2
        if p > 2 && p % 2 == 0 {
            continue;
        }
        while (&rest % p).is_zero() {
            rest /= p;
            primes.push(BigUint::from(p));
        }
    }

    let mut budget = Budget { limit: budget, used: 0 };
    let mut stack = vec![rest];
    while let Some(m) = stack.pop() {
        if m.is_one() {
            continue;
        }
        if is_probable_prime(&m, PRIMALITY_ROUNDS) {
            primes.push(m);
            continue;
        }
        if let Some(root) = perfect_square_root(&m) {
            stack.push(root.clone());
            stack.push(root);
            continue;
        }
        let d = find_divisor(&m, &mut budget)?;
        let other = &m / &d;
        stack.push(d);
        stack.push(other);
    }
    Ok(Factorization::from_primes(primes))
}

fn perfect_square_root(m: &BigUint) -> Option<BigUint> {
    let r = m.sqrt();
    (&r * &r == *m).then_some(r)
}

/// Nontrivial divisor of an odd composite with no factor below 10^4.
fn find_divisor(m: &BigUint, budget: &mut Budget) -> Result<BigUint, NumTheoryError> {
    if let Some(v) = m.to_u64() {
        return brent_u64(v, budget).map(BigUint::from);
    }
    if let Some(v) = m.to_u128() {
        return brent_u128(v, budget).map(BigUint::from);
    }
    brent_big(m, budget)
}

fn exhausted(budget: &Budget) -> NumTheoryError {
    NumTheoryError::BudgetExhausted { iterations: budget.used }
}

// Each variant below is the same algorithm: iterate y <- y^2 + c, batch
// |x - y| products GCD_BATCH at a time, double the cycle length r, and
// backtrack one step at a time when a batch collapses to n. A failed
// polynomial restarts with c + 1.

fn brent_u64(n: u64, budget: &mut Budget) -> Result<u64, NumTheoryError> {
    debug_assert!(n % 2 == 1 && !is_prime_u64(n));
    let ctx = Mont64::new(n);
    let mut c_plain = 1u64;
    loop {
        if budget.remaining() == 0 {
            return Err(exhausted(budget));
        }
        let c = ctx.enter(c_plain);
        let f = |v: u64| ctx.add(ctx.mul(v, v), c);
        let mut y = ctx.enter(2);
        let mut x = y;
        let mut ys = y;
        let mut q = ctx.one();
        let mut g = 1u64;
        let mut r = 1u64;
        while g == 1 {
            x = y;
            for _ in 0..r {
                y = f(y);
            }
            budget.used += r;
            let mut k = 0;
            while k < r && g == 1 {
                ys = y;
                let steps = GCD_BATCH.min(r - k);
                for _ in 0..steps {
                    y = f(y);
                    q = ctx.mul(q, x.abs_diff(y));
                }
                budget.used += steps;
                g = gcd_u64(ctx.leave(q), n);
                k += steps;
            }
            r *= 2;
            if g == 1 && budget.used >= budget.limit {
                return Err(exhausted(budget));
            }
        }
        if g == n {
            g = 1;
            while g == 1 {
                ys = f(ys);
                budget.used += 1;
                g = gcd_u64(ctx.leave(x.abs_diff(ys)), n);
            }
        }
        if g != n {
            return Ok(g);
        }
        c_plain += 1;
    }
}

fn brent_u128(n: u128, budget: &mut Budget) -> Result<u128, NumTheoryError> {
    debug_assert!(n % 2 == 1 && !is_probable_prime_u128(n, 8));
    let ctx = Mont128::new(n);
    let mut c_plain = 1u128;
    loop {
        if budget.remaining() == 0 {
            return Err(exhausted(budget));
        }
        let c = ctx.enter(c_plain);
        let f = |v: u128| ctx.add(ctx.mul(v, v), c);
        let mut y = ctx.enter(2);
        let mut x = y;
        let mut ys = y;
        let mut q = ctx.one();
        let mut g = 1u128;
        let mut r = 1u64;
        while g == 1 {
            x = y;
            for _ in 0..r {
                y = f(y);
            }
            budget.used += r;
            let mut k = 0;
            while k < r && g == 1 {
                ys = y;
                let steps = GCD_BATCH.min(r - k);
                for _ in 0..steps {
                    y = f(y);
                    q = ctx.mul(q, x.abs_diff(y));
                }
                budget.used += steps;
                g = gcd_u128(q, n);
                k += steps;
            }
            r *= 2;
            if g == 1 && budget.used >= budget.limit {
                return Err(exhausted(budget));
            }
        }
        if g == n {
            g = 1;
            while g == 1 {
                ys = f(ys);
                budget.used += 1;
                g = gcd_u128(x.abs_diff(ys), n);
            }
        }
        if g != n {
            return Ok(g);
        }
        c_plain += 1;
    }
}

fn brent_big(n: &BigUint, budget: &mut Budget) -> Result<BigUint, NumTheoryError> {
    let one = BigUint::one();
    let mut c = BigUint::one();
    loop {
        if budget.remaining() == 0 {
            return Err(exhausted(budget));
        }
        let f = |v: &BigUint| (v * v + &c) % n;
        let mut y = BigUint::from(2u8);
        let mut x = y.clone();
        let mut ys = y.clone();
        let mut q = BigUint::one();
        let mut g = BigUint::one();
        let mut r = 1u64;
        while g == one {
            x = y.clone();
            for _ in 0..r {
                y = f(&y);
            }
            budget.used += r;
            let mut k = 0;
            while k < r && g == one {
                ys = y.clone();
                let steps = GCD_BATCH.min(r - k);
                for _ in 0..steps {
                    y = f(&y);
                    let diff = if x > y { &x - &y } else { &y - &x };
                    q = (q * diff) % n;
                }
                budget.used += steps;
                g = q.gcd(n);
                k += steps;
            }
            r *= 2;
            if g == one && budget.used >= budget.limit {
                return Err(exhausted(budget));
            }
        }
        if &g == n {
            g = BigUint::one();
            while g == one {
                ys = f(&ys);
                budget.used += 1;
                let diff = if x > ys { &x - &ys } else { &ys - &x };
                g = diff.gcd(n);
            }
        }
        if &g != n {
            return Ok(g);
        }
        c += 1u8;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(v: u128) -> BigUint {
        BigUint::from(v)
    }

    fn trial_division(mut n: u64) -> Vec<u64> {
        let mut out = Vec::new();
        let mut p = 2;
        while p * p <= n {
            while n.is_multiple_of(p) {
                out.push(p);
                n /= p;
            }
            p += 1;
        }
        if n > 1 {
            out.push(n);
        }
        out
    }

    #[test]
    fn small_semiprimes() {
        let f = factor_semiprime(&big(3233)).unwrap();
        assert_eq!(f.primes_with_multiplicity(), vec![big(53), big(61)]);
        assert_eq!(trial_division(3233), vec![53, 61]);
        let f = factor_semiprime(&big(15)).unwrap();
        assert_eq!(f.primes_with_multiplicity(), vec![big(3), big(5)]);
        assert!(f.is_semiprime());
    }

    #[test]
    fn primes_and_tiny_values_are_not_composite() {
        for v in [0u128, 1, 2, 3, 17381019776996486069] {
            assert!(matches!(factor_semiprime(&big(v)), Err(NumTheoryError::NotComposite(_))));
        }
    }

    #[test]
    fn full_factorization_matches_trial_division() {
        let samples = [
            360u64,
            1 << 40,
            999_999_000_001 * 3,
            4_294_967_291 * 4_294_967_279, // two 32-bit primes
            600_851_475_143,
            10_007 * 10_007 * 10_009,
        ];
        for &n in &samples {
            let f = factorize(&BigUint::from(n), DEFAULT_FACTOR_BUDGET).unwrap();
            assert_eq!(f.product(), BigUint::from(n));
            if n < 1 << 50 {
                let want: Vec<BigUint> = trial_division(n).into_iter().map(BigUint::from).collect();
                assert_eq!(f.primes_with_multiplicity(), want);
            }
        }
    }

    #[test]
    fn factors_above_64_bits() {
        // 40-bit × 60-bit, and a value beyond u128 with small factors
        let p = 1_099_511_627_791u128;
        let q = 1_152_921_504_606_847_009u128;
        let f = factorize(&big(p * q), DEFAULT_FACTOR_BUDGET).unwrap();
        assert_eq!(f.primes_with_multiplicity(), vec![big(p), big(q)]);

        let wide = BigUint::from(1_000_003u64) * BigUint::from(1_000_033u64) * (BigUint::one() << 130u32);
        let f = factorize(&wide, DEFAULT_FACTOR_BUDGET).unwrap();
        assert_eq!(f.product(), wide);
    }

    #[test]
    fn big_path_splits_wide_semiprime() {
        // > 128 bits: p ~ 2^30, q ~ 2^110 exercises brent_big
        let p = BigUint::from(1_073_741_827u64);
        let q = BigUint::parse_bytes(b"1298074214633706907132624082317379", 10).unwrap();
        assert!(is_probable_prime(&q, 20));
        let n = &p * &q;
        assert!(n.bits() > 128);
        let f = factorize(&n, DEFAULT_FACTOR_BUDGET).unwrap();
        assert_eq!(f.primes_with_multiplicity(), vec![p, q]);
    }

    #[test]
    fn budget_exhaustion_reports_iterations() {
        // two ~40-bit primes need far more than 1000 iterations
        let n = big(1_099_511_627_791 * 1_099_511_628_401);
        match factorize(&n, 1000) {
            Err(NumTheoryError::BudgetExhausted { iterations }) => assert!(iterations >= 1000),
            other => panic!("expected budget exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn display_groups_exponents() {
        let f = factorize(&big(360), 10).unwrap();
        assert_eq!(f.to_string(), "2^3 * 3^2 * 5");
    }
}
