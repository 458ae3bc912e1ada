//! Montgomery arithmetic over odd moduli that fit in a machine word (`u64`)
//! or a double word (`u128`).
//!
//! Both contexts keep residues in Montgomery form `a·R mod n` with
//! `R = 2^64` (resp. `2^128`). Results are always fully reduced.

/// Full 128×128 → 256-bit product as `(hi, lo)`.
#[inline(always)]
pub(crate) fn mul_wide_u128(a: u128, b: u128) -> (u128, u128) {
    let mask = u64::MAX as u128;
    let (a0, a1) = (a & mask, a >> 64);
    let (b0, b1) = (b & mask, b >> 64);

    let p00 = a0 * b0;
    let p01 = a0 * b1;
    let p10 = a1 * b0;
    let p11 = a1 * b1;

    let mid = (p00 >> 64) + (p01 & mask) + (p10 & mask);
    let lo = (p00 & mask) | (mid << 64);
    let hi = p11 + (p01 >> 64) + (p10 >> 64) + (mid >> 64);
    (hi, lo)
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Mont64 {
    n: u64,
    /// -n^{-1} mod 2^64
    neg_inv: u64,
    /// R^2 mod n
    r2: u64,
}

impl Mont64 {
    pub(crate) fn new(n: u64) -> Self {
        debug_assert!(n % 2 == 1 && n > 1);
        let mut inv: u64 = n; // correct to 3 bits for odd n
        for _ in 0..5 {
            inv = inv.wrapping_mul(2u64.wrapping_sub(n.wrapping_mul(inv)));
        }
        let r_mod = ((1u128 << 64) % n as u128) as u64;
        let r2 = ((r_mod as u128 * r_mod as u128) % n as u128) as u64;
        Mont64 {
            n,
            neg_inv: inv.wrapping_neg(),
            r2,
        }
    }

    #[inline(always)]
    fn redc(&self, t: u128) -> u64 {
        let m = (t as u64).wrapping_mul(self.neg_inv);
        let mn = m as u128 * self.n as u128;
        let (sum, overflow) = t.overflowing_add(mn);
        let mut r = (sum >> 64) as u64;
        if overflow {
            // sum exceeded 2^128; the dropped bit is worth 2^64 after the shift
            r = r.wrapping_sub(self.n);
        } else if r >= self.n {
            r -= self.n;
        }
        r
    }

    #[inline(always)]
    pub(crate) fn mul(&self, a: u64, b: u64) -> u64 {
        self.redc(a as u128 * b as u128)
    }

    #[inline(always)]
    pub(crate) fn add(&self, a: u64, b: u64) -> u64 {
        let (s, o) = a.overflowing_add(b);
        if o || s >= self.n {
            s.wrapping_sub(self.n)
        } else {
            s
        }
    }

    pub(crate) fn enter(&self, a: u64) -> u64 {
        self.mul(a % self.n, self.r2)
    }

    pub(crate) fn leave(&self, a: u64) -> u64 {
        self.redc(a as u128)
    }

    pub(crate) fn one(&self) -> u64 {
        self.enter(1)
    }

    pub(crate) fn pow(&self, base: u64, mut exp: u64) -> u64 {
        let mut result = self.one();
        let mut b = base;
        while exp > 0 {
            if exp & 1 == 1 {
                result = self.mul(result, b);
            }
            b = self.mul(b, b);
            exp >>= 1;
        }
        result
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Mont128 {
    n: u128,
    neg_inv: u128,
    r2: u128,
}

impl Mont128 {
    pub(crate) fn new(n: u128) -> Self {
        debug_assert!(n % 2 == 1 && n > 1);
        let mut inv: u128 = n;
        for _ in 0..6 {
            inv = inv.wrapping_mul(2u128.wrapping_sub(n.wrapping_mul(inv)));
        }
        // R mod n, then R^2 mod n by repeated doubling (no 256-bit division needed)
        let r_mod = (u128::MAX % n + 1) % n;
        let mut r2 = r_mod;
        for _ in 0..128 {
            r2 = add_mod_u128(r2, r2, n);
        }
        Mont128 {
            n,
            neg_inv: inv.wrapping_neg(),
            r2,
        }
    }

    #[inline(always)]
    pub(crate) fn mul(&self, a: u128, b: u128) -> u128 {
        let (hi, lo) = mul_wide_u128(a, b);
        let m = lo.wrapping_mul(self.neg_inv);
        let (mh, _) = mul_wide_u128(m, self.n);
        // lo + ml ≡ 0 (mod 2^128); carry out iff lo != 0
        let carry = (lo != 0) as u128;
        let (s1, o1) = hi.overflowing_add(mh);
        let (s2, o2) = s1.overflowing_add(carry);
        if o1 || o2 || s2 >= self.n {
            s2.wrapping_sub(self.n)
        } else {
            s2
        }
    }

    #[inline(always)]
    pub(crate) fn add(&self, a: u128, b: u128) -> u128 {
        add_mod_u128(a, b, self.n)
    }

    pub(crate) fn enter(&self, a: u128) -> u128 {
        self.mul(a % self.n, self.r2)
    }

    #[cfg(test)]
    pub(crate) fn leave(&self, a: u128) -> u128 {
        self.mul(a, 1)
    }

    pub(crate) fn one(&self) -> u128 {
        self.enter(1)
    }

    pub(crate) fn pow(&self, base: u128, mut exp: u128) -> u128 {
        let mut result = self.one();
        let mut b = base;
        while exp > 0 {
            if exp & 1 == 1 {
                result = self.mul(result, b);
            }
            b = self.mul(b, b);
            exp >>= 1;
        }
        result
    }
}

#[inline(always)]
fn add_mod_u128(a: u128, b: u128, n: u128) -> u128 {
    let (s, o) = a.overflowing_add(b);
    if o || s >= n {
        s.wrapping_sub(n)
    } else {
        s
    }
}

pub(crate) fn gcd_u64(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

pub(crate) fn gcd_u128(mut a: u128, mut b: u128) -> u128 {
    if a == 0 {
        return b;
    }
    if b == 0 {
        return a;
    }
    // binary gcd; u128 division is slow
    let shift = (a | b).trailing_zeros();
    a >>= a.trailing_zeros();
    loop {
        b >>= b.trailing_zeros();
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        b -= a;
        if b == 0 {
            return a << shift;
        }
    }
}
