use rand::{CryptoRng, RngCore};

use super::{encrypt_elem, reencrypt, PreCiphertext, PreError, PublicKey, ReKey};
use crate::group::{Element, PrimeGroup};

/// Re-encryption inputs over non-sensitive random plaintexts together with
/// the outputs an honest node must produce.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChallengePack<G: PrimeGroup> {
    pub entries: Vec<ChallengeEntry<G>>,
    pub owner_pk: PublicKey<G>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChallengeEntry<G: PrimeGroup> {
    pub input: PreCiphertext<G>,
    pub expected_output: PreCiphertext<G>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChallengeVerdict {
    Pass,
    Fail,
}

pub fn make_challenge_pack<G: PrimeGroup, R: RngCore + CryptoRng>(
    rk: &ReKey<G>,
    owner_pk: &PublicKey<G>,
    n: usize,
    rng: &mut R,
) -> Result<ChallengePack<G>, PreError> {
    if n == 0 {
        return Err(PreError::EmptyChallengePack);
    }
    let entries = (0..n)
        .map(|_| {
            let input = encrypt_elem(owner_pk, &Element::random(rng), rng);
            ChallengeEntry { input, expected_output: reencrypt(rk, &input) }
        })
        .collect();
    Ok(ChallengePack { entries, owner_pk: *owner_pk })
}

pub fn verify_challenge_entry<G: PrimeGroup>(
    entry: &ChallengeEntry<G>,
    observed: &PreCiphertext<G>,
) -> ChallengeVerdict {
    if *observed == entry.expected_output {
        ChallengeVerdict::Pass
    } else {
        ChallengeVerdict::Fail
    }
}
