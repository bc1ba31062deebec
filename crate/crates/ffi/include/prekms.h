#ifndef PREKMS_H
#define PREKMS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define PREKMS_PUBLIC_KEY_LEN 32

#define PREKMS_SECRET_KEY_LEN 32

/**
 * Group id byte followed by the 32-byte factor.
 */
#define PREKMS_REKEY_LEN 33

/**
 * Status codes; the non-zero values match the command-line exit codes.
 */
typedef enum {
  PREKMS_STATUS_OK = 0,
  PREKMS_STATUS_INTERNAL = 1,
  PREKMS_STATUS_INVALID_ARGUMENT = 2,
  PREKMS_STATUS_ACCESS_DENIED = 3,
  PREKMS_STATUS_INTEGRITY = 5,
} PrekmsStatus;

/**
 * Bytes owned by the library.
 */
typedef struct PrekmsBuffer PrekmsBuffer;

typedef struct PrekmsKeyPair PrekmsKeyPair;

typedef struct PrekmsReKey PrekmsReKey;

typedef struct {
  uint64_t owner;
  uint64_t miner;
  uint64_t seized;
} PrekmsRevocationPayout;

typedef struct {
  uint64_t challenger;
  uint64_t owner;
  uint64_t seized;
} PrekmsLeakPayout;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *prekms_version(void);

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `cap`) and returns its full length without the NUL.
 *
 * # Safety
 * `buf` must be null or valid for `cap` bytes.
 */
size_t prekms_last_error(char *buf, size_t cap);

/**
 * New key pair from the OS random source.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
PrekmsStatus prekms_keypair_generate(PrekmsKeyPair **out);

/**
 * Key pair from a 32-byte secret key encoding.
 *
 * # Safety
 * `secret` must be valid for `len` bytes and `out` a valid pointer.
 */
PrekmsStatus prekms_keypair_from_secret(const uint8_t *secret, size_t len, PrekmsKeyPair **out);

/**
 * Writes the 32-byte public key to `out`.
 *
 * # Safety
 * `kp` must be a live handle and `out` valid for 32 bytes.
 */
PrekmsStatus prekms_keypair_public_key(const PrekmsKeyPair *kp, uint8_t *out);

/**
 * Writes the 32-byte secret key to `out`.
 *
 * # Safety
 * `kp` must be a live handle and `out` valid for 32 bytes.
 */
PrekmsStatus prekms_keypair_secret_key(const PrekmsKeyPair *kp, uint8_t *out);

/**
 * # Safety
 * `kp` must be null or a handle not freed before.
 */
void prekms_keypair_free(PrekmsKeyPair *kp);

/**
 * Encrypts `data` to the 32-byte public key `pk`; the envelope goes to `out`.
 *
 * # Safety
 * `pk` must be valid for 32 bytes, `data` for `len` bytes, `out` a valid pointer.
 */
PrekmsStatus prekms_encrypt(const uint8_t *pk,
                            const uint8_t *data,
                            size_t len,
                            bool aont,
                            PrekmsBuffer **out);

/**
 * Opens an envelope with the key pair's secret key.
 *
 * # Safety
 * `kp` must be a live handle, `env` valid for `len` bytes, `out` a valid pointer.
 */
PrekmsStatus prekms_decrypt(const PrekmsKeyPair *kp,
                            const uint8_t *env,
                            size_t len,
                            PrekmsBuffer **out);

/**
 * Re-encryption key from `from`'s secret to `to`'s secret.
 *
 * # Safety
 * Both key pairs must be live handles and `out` a valid pointer.
 */
PrekmsStatus prekms_rekey_new(const PrekmsKeyPair *from,
                              const PrekmsKeyPair *to,
                              PrekmsReKey **out);

/**
 * Re-encryption key from its encoding.
 *
 * # Safety
 * `bytes` must be valid for `len` bytes and `out` a valid pointer.
 */
PrekmsStatus prekms_rekey_from_bytes(const uint8_t *bytes, size_t len, PrekmsReKey **out);

/**
 * Writes the `PREKMS_REKEY_LEN`-byte encoding of `rk` to `out`.
 *
 * # Safety
 * `rk` must be a live handle and `out` valid for `PREKMS_REKEY_LEN` bytes.
 */
PrekmsStatus prekms_rekey_to_bytes(const PrekmsReKey *rk, uint8_t *out);

/**
 * `a→c` from `a→b` and `b→c`.
 *
 * # Safety
 * Both rekeys must be live handles and `out` a valid pointer.
 */
PrekmsStatus prekms_rekey_compose(const PrekmsReKey *ab, const PrekmsReKey *bc, PrekmsReKey **out);

/**
 * `b→a` from `a→b`.
 *
 * # Safety
 * `rk` must be a live handle and `out` a valid pointer.
 */
PrekmsStatus prekms_rekey_invert(const PrekmsReKey *rk, PrekmsReKey **out);

/**
 * # Safety
 * `rk` must be null or a handle not freed before.
 */
void prekms_rekey_free(PrekmsReKey *rk);

/**
 * Re-encrypts the EDEK of an envelope; the body is carried over untouched.
 *
 * # Safety
 * `rk` must be a live handle, `env` valid for `len` bytes, `out` a valid pointer.
 */
PrekmsStatus prekms_reencrypt_envelope(const PrekmsReKey *rk,
                                       const uint8_t *env,
                                       size_t len,
                                       PrekmsBuffer **out);

/**
 * # Safety
 * `buf` must be a live handle.
 */
const uint8_t *prekms_buffer_data(const PrekmsBuffer *buf);

/**
 * # Safety
 * `buf` must be a live handle.
 */
size_t prekms_buffer_len(const PrekmsBuffer *buf);

/**
 * # Safety
 * `buf` must be null or a handle not freed before.
 */
void prekms_buffer_free(PrekmsBuffer *buf);

/**
 * Revocation settlement of fee `f` over `duration` blocks with collateral
 * `c`, revoked after `t` blocks.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
PrekmsStatus prekms_revocation_payout(uint64_t f,
                                      uint64_t duration,
                                      uint64_t c,
                                      uint64_t t,
                                      PrekmsRevocationPayout *out);

/**
 * Settlement of a proven leak with challenger share `alpha_num / alpha_den`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
PrekmsStatus prekms_leak_payout(uint64_t f,
                                uint64_t duration,
                                uint64_t c,
                                uint64_t t,
                                uint64_t alpha_num,
                                uint64_t alpha_den,
                                PrekmsLeakPayout *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PREKMS_H */
