use std::sync::OnceLock;

use num_bigint::BigUint;
use num_traits::One;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use wuplab::numtheory::{factor_semiprime, is_probable_prime};
use wuplab::rsa::{decrypt_raw, encrypt_raw, keygen, shift_ciphertext, RsaKeyPair};

fn server_key() -> &'static RsaKeyPair {
    static KEY: OnceLock<RsaKeyPair> = OnceLock::new();
    KEY.get_or_init(|| keygen(1024, &BigUint::from(65537u32), &mut ChaCha20Rng::seed_from_u64(99)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // Shifting a 128-bit key by up to 127 bits never wraps a 1024-bit modulus,
    // so the server sees exactly 2^b * k.
    #[test]
    fn shifted_key_decrypts_without_wraparound(k in any::<u128>(), b in 0u32..128) {
        let kp = server_key();
        let k = BigUint::from(k);
        let expected = &k << b;
        prop_assert!(expected < kp.public.n);
        let c = encrypt_raw(&kp.public, &k).unwrap();
        let shifted = shift_ciphertext(&kp.public, &c, b);
        prop_assert_eq!(decrypt_raw(kp, &shifted).unwrap(), expected);
    }

    #[test]
    fn ciphertext_multiplication_is_plaintext_multiplication(a in 1u64.., b in 1u64..) {
        let kp = server_key();
        let (a, b) = (BigUint::from(a), BigUint::from(b));
        let ca = encrypt_raw(&kp.public, &a).unwrap();
        let cb = encrypt_raw(&kp.public, &b).unwrap();
        let product = (ca * cb) % &kp.public.n;
        prop_assert_eq!(decrypt_raw(kp, &product).unwrap(), a * b);
    }
}

#[test]
fn generated_128_bit_key_factors_back_to_its_primes() {
    // one key: a balanced 128-bit modulus takes a couple of minutes
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    {
        let kp = keygen(128, &BigUint::from(65537u32), &mut rng).unwrap();
        assert_eq!(kp.public.n.bits(), 128);
        let f = factor_semiprime(&kp.public.n).unwrap();
        let mut want = vec![kp.p.clone(), kp.q.clone()];
        want.sort();
        assert_eq!(f.primes_with_multiplicity(), want);
        for p in &want {
            assert!(is_probable_prime(p, 32));
        }
        // the rebuilt key decrypts what the public key encrypts
        let rebuilt = RsaKeyPair::from_primes(want[0].clone(), want[1].clone(), kp.public.e.clone()).unwrap();
        let m = BigUint::from(0xC0FFEEu32);
        assert_eq!(decrypt_raw(&rebuilt, &encrypt_raw(&kp.public, &m).unwrap()).unwrap(), m);
        assert!(kp.d == rebuilt.d || (&kp.d - &rebuilt.d) % (&kp.p - BigUint::one()) == BigUint::from(0u32));
    }
}
