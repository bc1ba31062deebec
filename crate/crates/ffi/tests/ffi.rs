use std::ptr;

use prekms_ffi::*;

struct Buf(*mut PrekmsBuffer);

impl Buf {
    fn bytes(&self) -> Vec<u8> {
        unsafe { std::slice::from_raw_parts(prekms_buffer_data(self.0), prekms_buffer_len(self.0)).to_vec() }
    }
}

impl Drop for Buf {
    fn drop(&mut self) {
        unsafe { prekms_buffer_free(self.0) }
    }
}

fn keypair() -> *mut PrekmsKeyPair {
    let mut kp = ptr::null_mut();
    assert_eq!(unsafe { prekms_keypair_generate(&mut kp) }, PrekmsStatus::Ok);
    kp
}

fn public(kp: *const PrekmsKeyPair) -> [u8; PREKMS_PUBLIC_KEY_LEN] {
    let mut pk = [0u8; PREKMS_PUBLIC_KEY_LEN];
    assert_eq!(unsafe { prekms_keypair_public_key(kp, pk.as_mut_ptr()) }, PrekmsStatus::Ok);
    pk
}

fn encrypt(pk: &[u8], data: &[u8], aont: bool) -> Buf {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { prekms_encrypt(pk.as_ptr(), data.as_ptr(), data.len(), aont, &mut out) }, PrekmsStatus::Ok);
    Buf(out)
}

fn decrypt(kp: *const PrekmsKeyPair, env: &[u8]) -> Result<Vec<u8>, PrekmsStatus> {
    let mut out = ptr::null_mut();
    match unsafe { prekms_decrypt(kp, env.as_ptr(), env.len(), &mut out) } {
        PrekmsStatus::Ok => Ok(Buf(out).bytes()),
        s => Err(s),
    }
}

fn rekey(a: *const PrekmsKeyPair, b: *const PrekmsKeyPair) -> *mut PrekmsReKey {
    let mut rk = ptr::null_mut();
    assert_eq!(unsafe { prekms_rekey_new(a, b, &mut rk) }, PrekmsStatus::Ok);
    rk
}

fn reencrypt(rk: *const PrekmsReKey, env: &[u8]) -> Vec<u8> {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { prekms_reencrypt_envelope(rk, env.as_ptr(), env.len(), &mut out) }, PrekmsStatus::Ok);
    Buf(out).bytes()
}

#[test]
fn share_through_a_proxy() {
    let (alice, bob, carol) = (keypair(), keypair(), keypair());
    for aont in [false, true] {
        let msg = b"quarterly numbers".repeat(100);
        let env = encrypt(&public(alice), &msg, aont).bytes();
        assert_eq!(decrypt(alice, &env).unwrap(), msg);
        assert!(decrypt(bob, &env).is_err());

        let ab = rekey(alice, bob);
        let for_bob = reencrypt(ab, &env);
        assert_eq!(decrypt(bob, &for_bob).unwrap(), msg);
        assert!(decrypt(alice, &for_bob).is_err());

        let bc = rekey(bob, carol);
        let mut ac = ptr::null_mut();
        assert_eq!(unsafe { prekms_rekey_compose(ab, bc, &mut ac) }, PrekmsStatus::Ok);
        assert_eq!(decrypt(carol, &reencrypt(ac, &env)).unwrap(), msg);

        let mut ba = ptr::null_mut();
        assert_eq!(unsafe { prekms_rekey_invert(ab, &mut ba) }, PrekmsStatus::Ok);
        assert_eq!(decrypt(alice, &reencrypt(ba, &for_bob)).unwrap(), msg);

        unsafe {
            for rk in [ab, bc, ac, ba] {
                prekms_rekey_free(rk);
            }
        }
    }
    unsafe {
        for kp in [alice, bob, carol] {
            prekms_keypair_free(kp);
        }
    }
}

#[test]
fn keys_round_trip_through_bytes() {
    let kp = keypair();
    let mut sk = [0u8; PREKMS_SECRET_KEY_LEN];
    assert_eq!(unsafe { prekms_keypair_secret_key(kp, sk.as_mut_ptr()) }, PrekmsStatus::Ok);
    let mut again = ptr::null_mut();
    assert_eq!(unsafe { prekms_keypair_from_secret(sk.as_ptr(), sk.len(), &mut again) }, PrekmsStatus::Ok);
    assert_eq!(public(kp), public(again));

    let other = keypair();
    let rk = rekey(kp, other);
    let mut bytes = [0u8; PREKMS_REKEY_LEN];
    assert_eq!(unsafe { prekms_rekey_to_bytes(rk, bytes.as_mut_ptr()) }, PrekmsStatus::Ok);
    let mut parsed = ptr::null_mut();
    assert_eq!(unsafe { prekms_rekey_from_bytes(bytes.as_ptr(), bytes.len(), &mut parsed) }, PrekmsStatus::Ok);
    let env = encrypt(&public(kp), b"x", false).bytes();
    assert_eq!(decrypt(other, &reencrypt(parsed, &env)).unwrap(), b"x");

    assert_eq!(unsafe { prekms_keypair_from_secret(sk.as_ptr(), 5, &mut again) }, PrekmsStatus::InvalidArgument);
    unsafe {
        prekms_rekey_free(rk);
        prekms_rekey_free(parsed);
        prekms_keypair_free(kp);
        prekms_keypair_free(again);
        prekms_keypair_free(other);
    }
}

#[test]
fn tampering_is_an_integrity_error() {
    let kp = keypair();
    let mut env = encrypt(&public(kp), b"payload", false).bytes();
    let last = env.len() - 1;
    env[last] ^= 1;
    assert_eq!(decrypt(kp, &env).unwrap_err(), PrekmsStatus::Integrity);
    let mut buf = [0 as std::ffi::c_char; 256];
    let n = unsafe { prekms_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 0);
    assert_eq!(decrypt(kp, &env[..3]).unwrap_err(), PrekmsStatus::Integrity);
    unsafe { prekms_keypair_free(kp) };
}

#[test]
fn settlement() {
    let mut r = PrekmsRevocationPayout::default();
    assert_eq!(unsafe { prekms_revocation_payout(100, 200, 50, 80, &mut r) }, PrekmsStatus::Ok);
    assert_eq!(r, PrekmsRevocationPayout { owner: 60, miner: 90, seized: 0 });
    let mut l = PrekmsLeakPayout::default();
    assert_eq!(unsafe { prekms_leak_payout(100, 200, 50, 80, 1, 4, &mut l) }, PrekmsStatus::Ok);
    assert_eq!(l, PrekmsLeakPayout { challenger: 10, owner: 60, seized: 80 });
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/prekms.h")).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() > 15);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
}
