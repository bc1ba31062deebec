use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::*;
use crate::group::Ristretto;
use crate::pre::{delegate, keygen, reencrypt_delegated, KeyPair};

type R = Ristretto;

fn setup(seed: u64) -> (ChaCha20Rng, KeyPair<R>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let kp = keygen(&mut rng);
    (rng, kp)
}

fn random_bytes(rng: &mut ChaCha20Rng, len: usize) -> Vec<u8> {
    let mut v = vec![0u8; len];
    rng.fill_bytes(&mut v);
    v
}

#[test]
fn round_trip_sizes_and_flags() {
    let (mut rng, kp) = setup(1);
    let signer = SigningIdentity::generate(&mut rng);
    for len in [1usize, 31, 4096, 100_000, 1 << 20] {
        let data = random_bytes(&mut rng, len);
        for aont in [false, true] {
            for signed in [false, true] {
                let opts = EncryptOptions { aont, signer: signed.then_some(&signer) };
                let env = encrypt_data(&kp.public, &data, &mut rng, opts).unwrap();
                let parsed = Envelope::<R>::from_bytes(&env.to_bytes()).unwrap();
                assert_eq!(parsed, env);
                let opened = decrypt_data(&kp.secret, &parsed).unwrap();
                assert_eq!(opened.data, data);
                assert_eq!(opened.signer, signed.then(|| signer.verifying_key()));
            }
        }
    }
}

#[test]
fn empty_data_is_refused() {
    let (mut rng, kp) = setup(2);
    assert_eq!(encrypt_data(&kp.public, b"", &mut rng, EncryptOptions::default()), Err(EnvelopeError::EmptyData));
}

#[test]
fn encryption_is_probabilistic() {
    let (mut rng, kp) = setup(3);
    let a = encrypt_data(&kp.public, b"same", &mut rng, EncryptOptions::default()).unwrap();
    let b = encrypt_data(&kp.public, b"same", &mut rng, EncryptOptions::default()).unwrap();
    assert_ne!(a.edek, b.edek);
    assert_ne!(a.body, b.body);
}

#[test]
fn any_body_flip_fails_authentication() {
    let (mut rng, kp) = setup(4);
    let env = encrypt_data(&kp.public, b"integrity matters", &mut rng, EncryptOptions::default()).unwrap();
    for i in sym::NONCE_LEN + 8..env.body.len() {
        let mut bad = env.clone();
        bad.body[i] ^= 0x01;
        assert_eq!(decrypt_data(&kp.secret, &bad), Err(EnvelopeError::BadAuth), "byte {i}");
    }
    let mut flag_flip = env.clone();
    flag_flip.flags = FLAG_AONT;
    assert_eq!(decrypt_data(&kp.secret, &flag_flip), Err(EnvelopeError::BadAuth));
}

#[test]
fn wrong_signer_is_bad_signature() {
    let (mut rng, kp) = setup(5);
    let alice = SigningIdentity::generate(&mut rng);
    let mallory = SigningIdentity::generate(&mut rng);
    let env =
        encrypt_data(&kp.public, b"signed", &mut rng, EncryptOptions { aont: false, signer: Some(&alice) }).unwrap();
    assert_eq!(decrypt_data_from(&kp.secret, &env, &alice.verifying_key()).unwrap(), b"signed");
    assert_eq!(decrypt_data_from(&kp.secret, &env, &mallory.verifying_key()), Err(EnvelopeError::BadSignature));

    let unsigned = encrypt_data(&kp.public, b"plain", &mut rng, EncryptOptions::default()).unwrap();
    assert_eq!(decrypt_data_from(&kp.secret, &unsigned, &alice.verifying_key()), Err(EnvelopeError::BadSignature));
}

#[test]
fn forged_signature_inside_plaintext_is_rejected() {
    let (mut rng, kp) = setup(6);
    let alice = SigningIdentity::generate(&mut rng);
    let mut payload = SignedPayload::sign(&alice, b"original");
    payload.data = b"tampered".to_vec();
    let (dek, edek) = generate_dek(&kp.public, &mut rng);
    let body = seal_body(&dek, SUITE_CHACHA20_POLY1305, FLAG_SIGNED, &payload.to_bytes(), &mut rng);
    let env = Envelope { suite: SUITE_CHACHA20_POLY1305, flags: FLAG_SIGNED, edek, body };
    assert_eq!(decrypt_data(&kp.secret, &env), Err(EnvelopeError::BadSignature));
}

#[test]
fn delegated_pipeline() {
    let (mut rng, alice) = setup(7);
    let bob: KeyPair<R> = keygen(&mut rng);
    let data = random_bytes(&mut rng, 50_000);
    let env = encrypt_data(&alice.public, &data, &mut rng, EncryptOptions { aont: true, signer: None }).unwrap();
    let bundle = delegate(&alice.secret, &bob.public, &mut rng);
    let (edek, body) = split_edek::<R>(&env.to_bytes()).unwrap();
    let msg = reencrypt_delegated(&bundle, &edek.0);
    assert_eq!(decrypt_delegated_data(&bob.secret, &msg, &body).unwrap().data, data);
    assert!(decrypt_data(&bob.secret, &env).is_err());
}

#[test]
fn split_and_join() {
    let (mut rng, kp) = setup(8);
    let env = encrypt_data(&kp.public, b"split me", &mut rng, EncryptOptions::default()).unwrap();
    let bytes = env.to_bytes();
    let (edek, body) = split_edek::<R>(&bytes).unwrap();
    assert_eq!(edek, env.edek);
    assert_eq!(join_edek(&edek, &body), bytes);

    let header_only = &bytes[..FIXED_HEADER_LEN + PreCiphertext::<R>::encoded_len()];
    let (e2, b2) = split_edek::<R>(header_only).unwrap();
    assert_eq!(e2, env.edek);
    assert!(b2.bytes.is_empty());
    assert_eq!(join_edek(&e2, &b2), header_only);

    for cut in [0, 3, 8, FIXED_HEADER_LEN + 10] {
        assert!(matches!(split_edek::<R>(&bytes[..cut]), Err(EnvelopeError::MalformedHeader(_))), "cut {cut}");
    }
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(matches!(split_edek::<R>(&bad_magic), Err(EnvelopeError::MalformedHeader(_))));
}

#[test]
fn dek_never_appears_in_serialized_envelope() {
    let (mut rng, kp) = setup(9);
    let mut hits = 0;
    for _ in 0..10_000 {
        let data = random_bytes(&mut rng, 64);
        let env = encrypt_data(&kp.public, &data, &mut rng, EncryptOptions::default()).unwrap();
        let dek = env.edek.open(&kp.secret);
        let bytes = env.to_bytes();
        if bytes.windows(sym::KEY_LEN).any(|w| w == dek.as_bytes()) {
            hits += 1;
        }
    }
    assert_eq!(hits, 0);
}

#[test]
fn unsupported_suite() {
    let (mut rng, kp) = setup(10);
    let mut env = encrypt_data(&kp.public, b"x", &mut rng, EncryptOptions::default()).unwrap();
    env.suite = 9;
    assert_eq!(decrypt_data(&kp.secret, &env), Err(EnvelopeError::UnsupportedSuite(9)));
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn round_trip(data in proptest::collection::vec(any::<u8>(), 1..3000), seed in any::<u64>(), aont in any::<bool>()) {
            let (mut rng, kp) = setup(seed);
            let env = encrypt_data(&kp.public, &data, &mut rng, EncryptOptions { aont, signer: None }).unwrap();
            let bytes = env.to_bytes();
            let (edek, body) = split_edek::<R>(&bytes).unwrap();
            prop_assert_eq!(join_edek(&edek, &body), bytes.clone());
            prop_assert_eq!(decrypt_data(&kp.secret, &Envelope::from_bytes(&bytes).unwrap()).unwrap().data, data);
        }
    }
}
