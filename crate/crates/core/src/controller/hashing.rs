//! Salted hashing of LLDP identity fields.

use sha2::{Digest, Sha256};

/// SHA-256 over `salt || field`. The salt is per scenario, so the same MAC
/// hashes differently across scenarios and a plain dictionary of MAC
/// digests is useless.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdentityHasher {
    salt: Vec<u8>,
}

impl IdentityHasher {
    pub fn new(salt: impl Into<Vec<u8>>) -> Self {
        IdentityHasher { salt: salt.into() }
    }

    pub fn from_seed(seed: u32) -> Self {
        let mut h = Sha256::new();
        h.update(b"lldp-identity-salt");
        h.update(seed.to_be_bytes());
        IdentityHasher { salt: h.finalize().to_vec() }
    }

    pub fn hash(&self, field: &[u8]) -> Vec<u8> {
        let mut h = Sha256::new();
        h.update(&self.salt);
        h.update(field);
        h.finalize().to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dpid;

    fn contains(hay: &[u8], needle: &[u8]) -> bool {
        hay.windows(needle.len()).any(|w| w == needle)
    }

    #[test]
    fn digest_hides_input() {
        let h = IdentityHasher::from_seed(7);
        for d in 1..=64u64 {
            let mac = Dpid(d).default_mac().0;
            let out = h.hash(&mac);
            assert_eq!(out.len(), 32);
            assert_ne!(out, mac.to_vec());
            assert!(!contains(&out, &mac));
        }
        let desc = b"alpha-sdn-controller 2.1";
        assert!(!contains(&h.hash(desc), desc));
    }

    #[test]
    fn deterministic_and_salted() {
        let mac = Dpid(1).default_mac().0;
        assert_eq!(IdentityHasher::from_seed(1).hash(&mac), IdentityHasher::from_seed(1).hash(&mac));
        assert_ne!(IdentityHasher::from_seed(1).hash(&mac), IdentityHasher::from_seed(2).hash(&mac));
    }
}
