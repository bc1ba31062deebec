//! C ABI over the envelope layer, the re-encryption primitives and the
//! settlement formulas.
//!
//! Objects are opaque handles created by `prekms_*_new`-style functions and
//! released with the matching `_free`. Every fallible call returns a
//! [`PrekmsStatus`]; the message of the last failure on the calling thread
//! is available through [`prekms_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use prekms::client::ClientError;
use prekms::envelope::{
    decrypt_data, encrypt_data, join_edek, split_edek, Edek, EncryptOptions, Envelope, EnvelopeError,
};
use prekms::group::Ristretto;
use prekms::ledger::{leak_payout, revocation_payout, Fraction};
use prekms::pre::{compose_rekeys, invert_rekey, keygen, reencrypt, rekey, KeyPair, PublicKey, ReKey, SecretKey};

/// Status codes; the non-zero values match the command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrekmsStatus {
    Ok = 0,
    Internal = 1,
    InvalidArgument = 2,
    AccessDenied = 3,
    Integrity = 5,
}

pub const PREKMS_PUBLIC_KEY_LEN: usize = 32;
pub const PREKMS_SECRET_KEY_LEN: usize = 32;
/// Group id byte followed by the 32-byte factor.
pub const PREKMS_REKEY_LEN: usize = 33;

pub struct PrekmsKeyPair(KeyPair<Ristretto>);

pub struct PrekmsReKey(ReKey<Ristretto>);

/// Bytes owned by the library.
pub struct PrekmsBuffer(Vec<u8>);

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PrekmsRevocationPayout {
    pub owner: u64,
    pub miner: u64,
    pub seized: u64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PrekmsLeakPayout {
    pub challenger: u64,
    pub owner: u64,
    pub seized: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut e = e.borrow_mut();
        e.clear();
        e.extend(msg.bytes().filter(|b| *b != 0));
    });
}

struct Fail(PrekmsStatus, String);

impl From<EnvelopeError> for Fail {
    fn from(e: EnvelopeError) -> Self {
        let msg = e.to_string();
        let status = match ClientError::from(e).exit_code() {
            3 => PrekmsStatus::AccessDenied,
            2 => PrekmsStatus::InvalidArgument,
            _ => PrekmsStatus::Integrity,
        };
        Fail(status, msg)
    }
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(PrekmsStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PrekmsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PrekmsStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal error");
            PrekmsStatus::Internal
        }
    }
}

unsafe fn slice<'a>(data: *const u8, len: usize) -> Result<&'a [u8], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(invalid("null data pointer"));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| invalid(format!("null {what}")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(invalid("null output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn out_ref<'a, T>(out: *mut T) -> Result<&'a mut T, Fail> {
    out.as_mut().ok_or_else(|| invalid("null output pointer"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn prekms_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `cap`) and returns its full length without the NUL.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn prekms_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = e.len().min(cap - 1);
            ptr::copy_nonoverlapping(e.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// New key pair from the OS random source.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn prekms_keypair_generate(out: *mut *mut PrekmsKeyPair) -> PrekmsStatus {
    guard(|| put(out, PrekmsKeyPair(keygen(&mut rand::rngs::OsRng))))
}

/// Key pair from a 32-byte secret key encoding.
///
/// # Safety
/// `secret` must be valid for `len` bytes and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn prekms_keypair_from_secret(
    secret: *const u8,
    len: usize,
    out: *mut *mut PrekmsKeyPair,
) -> PrekmsStatus {
    guard(|| {
        let sk = SecretKey::<Ristretto>::from_bytes(slice(secret, len)?).map_err(|e| invalid(e.to_string()))?;
        put(out, PrekmsKeyPair(KeyPair::from_secret(sk)))
    })
}

/// Writes the 32-byte public key to `out`.
///
/// # Safety
/// `kp` must be a live handle and `out` valid for 32 bytes.
#[no_mangle]
pub unsafe extern "C" fn prekms_keypair_public_key(kp: *const PrekmsKeyPair, out: *mut u8) -> PrekmsStatus {
    guard(|| {
        let kp = handle(kp, "key pair")?;
        if out.is_null() {
            return Err(invalid("null output pointer"));
        }
        let pk = kp.0.public.to_bytes();
        ptr::copy_nonoverlapping(pk.as_ptr(), out, PREKMS_PUBLIC_KEY_LEN);
        Ok(())
    })
}

/// Writes the 32-byte secret key to `out`.
///
/// # Safety
/// `kp` must be a live handle and `out` valid for 32 bytes.
#[no_mangle]
pub unsafe extern "C" fn prekms_keypair_secret_key(kp: *const PrekmsKeyPair, out: *mut u8) -> PrekmsStatus {
    guard(|| {
        let kp = handle(kp, "key pair")?;
        if out.is_null() {
            return Err(invalid("null output pointer"));
        }
        let sk = kp.0.secret.to_bytes();
        ptr::copy_nonoverlapping(sk.as_ptr(), out, PREKMS_SECRET_KEY_LEN);
        Ok(())
    })
}

/// # Safety
/// `kp` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn prekms_keypair_free(kp: *mut PrekmsKeyPair) {
    if !kp.is_null() {
        drop(Box::from_raw(kp));
    }
}

/// Encrypts `data` to the 32-byte public key `pk`; the envelope goes to `out`.
///
/// # Safety
/// `pk` must be valid for 32 bytes, `data` for `len` bytes, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn prekms_encrypt(
    pk: *const u8,
    data: *const u8,
    len: usize,
    aont: bool,
    out: *mut *mut PrekmsBuffer,
) -> PrekmsStatus {
    guard(|| {
        let pk = PublicKey::<Ristretto>::from_bytes(slice(pk, PREKMS_PUBLIC_KEY_LEN)?)
            .map_err(|e| invalid(e.to_string()))?;
        let opts = EncryptOptions { aont, signer: None };
        let env = encrypt_data(&pk, slice(data, len)?, &mut rand::rngs::OsRng, opts)?;
        put(out, PrekmsBuffer(env.to_bytes()))
    })
}

/// Opens an envelope with the key pair's secret key.
///
/// # Safety
/// `kp` must be a live handle, `env` valid for `len` bytes, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn prekms_decrypt(
    kp: *const PrekmsKeyPair,
    env: *const u8,
    len: usize,
    out: *mut *mut PrekmsBuffer,
) -> PrekmsStatus {
    guard(|| {
        let kp = handle(kp, "key pair")?;
        let env = Envelope::<Ristretto>::from_bytes(slice(env, len)?)?;
        put(out, PrekmsBuffer(decrypt_data(&kp.0.secret, &env)?.data))
    })
}

/// Re-encryption key from `from`'s secret to `to`'s secret.
///
/// # Safety
/// Both key pairs must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn prekms_rekey_new(
    from: *const PrekmsKeyPair,
    to: *const PrekmsKeyPair,
    out: *mut *mut PrekmsReKey,
) -> PrekmsStatus {
    guard(|| {
        let (a, b) = (handle(from, "source key pair")?, handle(to, "target key pair")?);
        put(out, PrekmsReKey(rekey(&a.0.secret, &b.0.secret)))
    })
}

/// Re-encryption key from its encoding.
///
/// # Safety
/// `bytes` must be valid for `len` bytes and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn prekms_rekey_from_bytes(
    bytes: *const u8,
    len: usize,
    out: *mut *mut PrekmsReKey,
) -> PrekmsStatus {
    guard(|| {
        let rk = ReKey::<Ristretto>::from_bytes(slice(bytes, len)?).map_err(|e| invalid(e.to_string()))?;
        put(out, PrekmsReKey(rk))
    })
}

/// Writes the `PREKMS_REKEY_LEN`-byte encoding of `rk` to `out`.
///
/// # Safety
/// `rk` must be a live handle and `out` valid for `PREKMS_REKEY_LEN` bytes.
#[no_mangle]
pub unsafe extern "C" fn prekms_rekey_to_bytes(rk: *const PrekmsReKey, out: *mut u8) -> PrekmsStatus {
    guard(|| {
        let rk = handle(rk, "rekey")?;
        if out.is_null() {
            return Err(invalid("null output pointer"));
        }
        let b = rk.0.to_bytes();
        ptr::copy_nonoverlapping(b.as_ptr(), out, PREKMS_REKEY_LEN);
        Ok(())
    })
}

/// `a→c` from `a→b` and `b→c`.
///
/// # Safety
/// Both rekeys must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn prekms_rekey_compose(
    ab: *const PrekmsReKey,
    bc: *const PrekmsReKey,
    out: *mut *mut PrekmsReKey,
) -> PrekmsStatus {
    guard(|| put(out, PrekmsReKey(compose_rekeys(&handle(ab, "rekey")?.0, &handle(bc, "rekey")?.0))))
}

/// `b→a` from `a→b`.
///
/// # Safety
/// `rk` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn prekms_rekey_invert(rk: *const PrekmsReKey, out: *mut *mut PrekmsReKey) -> PrekmsStatus {
    guard(|| put(out, PrekmsReKey(invert_rekey(&handle(rk, "rekey")?.0))))
}

/// # Safety
/// `rk` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn prekms_rekey_free(rk: *mut PrekmsReKey) {
    if !rk.is_null() {
        drop(Box::from_raw(rk));
    }
}

/// Re-encrypts the EDEK of an envelope; the body is carried over untouched.
///
/// # Safety
/// `rk` must be a live handle, `env` valid for `len` bytes, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn prekms_reencrypt_envelope(
    rk: *const PrekmsReKey,
    env: *const u8,
    len: usize,
    out: *mut *mut PrekmsBuffer,
) -> PrekmsStatus {
    guard(|| {
        let rk = handle(rk, "rekey")?;
        let (edek, body) = split_edek::<Ristretto>(slice(env, len)?)?;
        let moved = Edek(reencrypt(&rk.0, &edek.0));
        put(out, PrekmsBuffer(join_edek(&moved, &body)))
    })
}

/// # Safety
/// `buf` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn prekms_buffer_data(buf: *const PrekmsBuffer) -> *const u8 {
    buf.as_ref().map_or(ptr::null(), |b| b.0.as_ptr())
}

/// # Safety
/// `buf` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn prekms_buffer_len(buf: *const PrekmsBuffer) -> usize {
    buf.as_ref().map_or(0, |b| b.0.len())
}

/// # Safety
/// `buf` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn prekms_buffer_free(buf: *mut PrekmsBuffer) {
    if !buf.is_null() {
        drop(Box::from_raw(buf));
    }
}

/// Revocation settlement of fee `f` over `duration` blocks with collateral
/// `c`, revoked after `t` blocks.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn prekms_revocation_payout(
    f: u64,
    duration: u64,
    c: u64,
    t: u64,
    out: *mut PrekmsRevocationPayout,
) -> PrekmsStatus {
    guard(|| {
        let p = revocation_payout(f, duration, c, t).map_err(|e| invalid(e.to_string()))?;
        *out_ref(out)? = PrekmsRevocationPayout { owner: p.owner, miner: p.miner, seized: p.seized };
        Ok(())
    })
}

/// Settlement of a proven leak with challenger share `alpha_num / alpha_den`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn prekms_leak_payout(
    f: u64,
    duration: u64,
    c: u64,
    t: u64,
    alpha_num: u64,
    alpha_den: u64,
    out: *mut PrekmsLeakPayout,
) -> PrekmsStatus {
    guard(|| {
        if alpha_den == 0 || alpha_num > alpha_den {
            return Err(invalid("alpha must lie in [0, 1]"));
        }
        let p =
            leak_payout(f, duration, c, t, Fraction::new(alpha_num, alpha_den)).map_err(|e| invalid(e.to_string()))?;
        *out_ref(out)? = PrekmsLeakPayout { challenger: p.challenger, owner: p.owner, seized: p.seized };
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_error() -> String {
        let mut buf = [0 as c_char; 128];
        let n = unsafe { prekms_last_error(buf.as_mut_ptr(), buf.len()) };
        let s = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned();
        assert_eq!(s.len(), n.min(127));
        s
    }

    #[test]
    fn null_arguments_are_rejected() {
        unsafe {
            assert_eq!(prekms_keypair_generate(ptr::null_mut()), PrekmsStatus::InvalidArgument);
            assert!(last_error().contains("null"));
            let mut out = ptr::null_mut();
            assert_eq!(prekms_decrypt(ptr::null(), ptr::null(), 0, &mut out), PrekmsStatus::InvalidArgument);
            assert!(out.is_null());
            assert_eq!(prekms_buffer_len(ptr::null()), 0);
            prekms_buffer_free(ptr::null_mut());
        }
    }

    #[test]
    fn payout_bad_alpha() {
        let mut p = PrekmsLeakPayout::default();
        assert_eq!(unsafe { prekms_leak_payout(100, 200, 50, 80, 1, 0, &mut p) }, PrekmsStatus::InvalidArgument);
        assert_eq!(
            unsafe { prekms_revocation_payout(100, 200, 50, 201, ptr::null_mut()) },
            PrekmsStatus::InvalidArgument
        );
    }

    #[test]
    fn version_is_c_string() {
        let v = unsafe { CStr::from_ptr(prekms_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
