//! Client identities: an encryption key pair, an ed25519 signing key and a
//! ledger account. At rest the secrets are sealed under a passphrase.

use std::collections::BTreeMap;

use rand::{CryptoRng, Rng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use zeroize::Zeroizing;

use super::ClientError;
use crate::envelope::SigningIdentity;
use crate::group::Ristretto;
use crate::ledger::AccountId;
use crate::pre::{keygen, KeyPair, PublicKey, SecretKey};
use crate::sym::{self, sha256};
use crate::util::{b64, hex32};

pub const KDF_ITERATIONS: u32 = 100_000;

pub struct Identity {
    pub name: String,
    pub account: AccountId,
    pub enc: KeyPair<Ristretto>,
    pub sign: SigningIdentity,
}

/// The public half of an identity, as exchanged between users.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactCard {
    pub name: String,
    pub account: AccountId,
    #[serde(with = "hex32")]
    pub enc_pk: [u8; 32],
    #[serde(with = "hex32")]
    pub sign_pk: [u8; 32],
}

impl ContactCard {
    /// `0x` and the first 20 bytes of `H(enc_pk)`.
    pub fn address(&self) -> String {
        address_of(&self.enc_pk)
    }

    pub fn public_key(&self) -> Result<PublicKey<Ristretto>, ClientError> {
        PublicKey::from_bytes(&self.enc_pk).map_err(|e| ClientError::Usage(format!("contact {}: {e}", self.name)))
    }
}

pub fn address_of(enc_pk: &[u8]) -> String {
    format!("0x{}", hex::encode(&sha256(&[enc_pk])[..20]))
}

#[derive(Serialize, Deserialize)]
struct Secrets {
    name: String,
    account: AccountId,
    #[serde(with = "hex32")]
    enc_sk: [u8; 32],
    #[serde(with = "hex32")]
    sign_sk: [u8; 32],
}

#[derive(Serialize, Deserialize)]
struct SealedIdentity {
    version: u8,
    kdf: String,
    iterations: u32,
    #[serde(with = "b64")]
    salt: Vec<u8>,
    #[serde(with = "b64")]
    nonce: Vec<u8>,
    #[serde(with = "b64")]
    ciphertext: Vec<u8>,
    card: ContactCard,
}

fn passphrase_key(passphrase: &str, salt: &[u8], iterations: u32) -> Zeroizing<[u8; sym::KEY_LEN]> {
    let mut key = Zeroizing::new([0u8; sym::KEY_LEN]);
    pbkdf2::pbkdf2_hmac::<Sha256>(passphrase.as_bytes(), salt, iterations, key.as_mut());
    key
}

impl Identity {
    pub fn generate<R: RngCore + CryptoRng>(name: &str, rng: &mut R) -> Self {
        Identity {
            name: name.to_string(),
            account: name.to_string(),
            enc: keygen(rng),
            sign: SigningIdentity::generate(rng),
        }
    }

    pub fn card(&self) -> ContactCard {
        ContactCard {
            name: self.name.clone(),
            account: self.account.clone(),
            enc_pk: self.enc.public.to_bytes().try_into().expect("32-byte ristretto points"),
            sign_pk: self.sign.verifying_key().to_bytes(),
        }
    }

    pub fn seal<R: RngCore + CryptoRng>(&self, passphrase: &str, iterations: u32, rng: &mut R) -> String {
        let secrets = Secrets {
            name: self.name.clone(),
            account: self.account.clone(),
            enc_sk: self.enc.secret.to_bytes().try_into().expect("32-byte scalars"),
            sign_sk: self.sign.to_bytes(),
        };
        let plain = Zeroizing::new(serde_json::to_vec(&secrets).expect("serializable"));
        let salt: [u8; 16] = rng.gen();
        let nonce = sym::random_nonce(rng);
        let key = passphrase_key(passphrase, &salt, iterations);
        let sealed = SealedIdentity {
            version: 1,
            kdf: "pbkdf2-hmac-sha256".into(),
            iterations,
            salt: salt.to_vec(),
            nonce: nonce.to_vec(),
            ciphertext: sym::seal(&key, &nonce, b"prekms/identity/v1", &plain),
            card: self.card(),
        };
        serde_json::to_string_pretty(&sealed).expect("serializable")
    }

    pub fn unseal(json: &str, passphrase: &str) -> Result<Self, ClientError> {
        let bad = |m: &str| ClientError::Usage(format!("identity file: {m}"));
        let sealed: SealedIdentity = serde_json::from_str(json).map_err(|e| bad(&e.to_string()))?;
        if sealed.version != 1 || sealed.kdf != "pbkdf2-hmac-sha256" {
            return Err(bad("unsupported format"));
        }
        let nonce: [u8; sym::NONCE_LEN] = sealed.nonce.as_slice().try_into().map_err(|_| bad("bad nonce"))?;
        let key = passphrase_key(passphrase, &sealed.salt, sealed.iterations);
        let plain = Zeroizing::new(
            sym::open(&key, &nonce, b"prekms/identity/v1", &sealed.ciphertext)
                .map_err(|_| ClientError::NoAccess("wrong passphrase or corrupt identity file".into()))?,
        );
        let s: Secrets = serde_json::from_slice(&plain).map_err(|e| bad(&e.to_string()))?;
        let secret = SecretKey::from_bytes(&s.enc_sk).map_err(|e| bad(&e.to_string()))?;
        Ok(Identity {
            name: s.name,
            account: s.account,
            enc: KeyPair::from_secret(secret),
            sign: SigningIdentity::from_bytes(&s.sign_sk),
        })
    }

    /// The public card stored next to the sealed secrets, readable without
    /// the passphrase.
    pub fn card_of_sealed(json: &str) -> Result<ContactCard, ClientError> {
        let sealed: SealedIdentity =
            serde_json::from_str(json).map_err(|e| ClientError::Usage(format!("identity file: {e}")))?;
        Ok(sealed.card)
    }
}

/// Known users, by name.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ContactBook {
    pub contacts: BTreeMap<String, ContactCard>,
}

impl ContactBook {
    pub fn add(&mut self, card: ContactCard) {
        self.contacts.insert(card.name.clone(), card);
    }

    /// Accepts a contact name, an `0x…` address or a hex public key.
    pub fn resolve(&self, who: &str) -> Result<PublicKey<Ristretto>, ClientError> {
        if let Some(card) = self.contacts.get(who) {
            return card.public_key();
        }
        if who.starts_with("0x") {
            let who = who.to_ascii_lowercase();
            return self
                .contacts
                .values()
                .find(|c| c.address() == who)
                .ok_or_else(|| ClientError::Usage(format!("no contact with address {who}")))?
                .public_key();
        }
        let raw = hex::decode(who).map_err(|_| ClientError::Usage(format!("unknown recipient {who:?}")))?;
        PublicKey::from_bytes(&raw).map_err(|e| ClientError::Usage(format!("recipient key: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn sealed_identity_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let id = Identity::generate("alice", &mut rng);
        let json = id.seal("correct horse", 1000, &mut rng);
        assert!(!json.contains(&hex::encode(id.sign.to_bytes())));
        assert!(!json.contains(&hex::encode(id.enc.secret.to_bytes())));
        let back = Identity::unseal(&json, "correct horse").unwrap();
        assert_eq!(back.card(), id.card());
        assert_eq!(back.enc.secret, id.enc.secret);
        assert!(matches!(Identity::unseal(&json, "wrong"), Err(ClientError::NoAccess(_))));
        assert_eq!(Identity::card_of_sealed(&json).unwrap(), id.card());
    }

    #[test]
    fn recipients_resolve_by_name_address_or_key() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let bob = Identity::generate("bob", &mut rng);
        let mut book = ContactBook::default();
        book.add(bob.card());
        let pk = bob.enc.public;
        assert_eq!(book.resolve("bob").unwrap(), pk);
        assert_eq!(book.resolve(&bob.card().address()).unwrap(), pk);
        assert_eq!(book.resolve(&bob.card().address().to_uppercase().replacen("0X", "0x", 1)).unwrap(), pk);
        assert_eq!(book.resolve(&hex::encode(pk.to_bytes())).unwrap(), pk);
        assert!(book.resolve("carol").is_err());
        assert!(book.resolve("0x0000").is_err());
    }
}
