//! Keyed message digests over routing messages.
//!
//! Every originated or forwarded routing message carries a digest computed
//! as `h(canonical_body_bytes || secret_key)` where `h` is the hash
//! function named by the envelope's registry id. "Add the secret key to
//! the values of all the fields" is read as suffix concatenation; the
//! canonical bytes cover every body field (mutable fields like hop count
//! included) and exclude the extension itself, so a forwarder must re-sign
//! after changing anything.
//!
//! Keys enter via scenario configuration only; distribution is assumed to
//! have happened out of band.

mod md5;
mod sha1;

use std::fmt;

use thiserror::Error;

pub use self::md5::md5;
pub use self::sha1::sha1;

use crate::wire::{
    digest_input, MessageBody, SecureEnvelope, SecurityExtension, WireError, HASH_ID_MD5,
    HASH_ID_SHA1,
};

/// Usable hash-function registry entries. Wire ids 0 and 3..=127 are
/// reserved, 128..=255 implementation-dependent and unused here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HashFunctionId {
    Md5,
    Sha1,
}

impl HashFunctionId {
    pub fn from_wire(id: u8) -> Option<Self> {
        match id {
            HASH_ID_MD5 => Some(HashFunctionId::Md5),
            HASH_ID_SHA1 => Some(HashFunctionId::Sha1),
            _ => None,
        }
    }

    pub fn wire_id(self) -> u8 {
        match self {
            HashFunctionId::Md5 => HASH_ID_MD5,
            HashFunctionId::Sha1 => HASH_ID_SHA1,
        }
    }

    pub fn digest_len(self) -> usize {
        match self {
            HashFunctionId::Md5 => 16,
            HashFunctionId::Sha1 => 20,
        }
    }
}

impl fmt::Display for HashFunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HashFunctionId::Md5 => write!(f, "md5"),
            HashFunctionId::Sha1 => write!(f, "sha1"),
        }
    }
}

/// Shared group key. Never serialized into messages, traces or reports;
/// the Debug form is redacted.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey(Vec<u8>);

impl SecretKey {
    pub fn new(bytes: Vec<u8>) -> Result<Self, KeyError> {
        if bytes.is_empty() || bytes.len() > 64 {
            return Err(KeyError::BadLength(bytes.len()));
        }
        Ok(SecretKey(bytes))
    }

    fn bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretKey(<{} bytes>)", self.0.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyError {
    #[error("secret key must be 1..=64 bytes, got {0}")]
    BadLength(usize),
}

/// Why a received envelope was not accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    MissingExtension,
    ReservedHashFunctionId(u8),
    DigestMismatch,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::MissingExtension => write!(f, "missing-extension"),
            RejectReason::ReservedHashFunctionId(id) => write!(f, "reserved-hash-id-{}", id),
            RejectReason::DigestMismatch => write!(f, "digest-mismatch"),
        }
    }
}

/// Applies the registry hash to arbitrary bytes.
pub fn hash(id: HashFunctionId, data: &[u8]) -> Vec<u8> {
    match id {
        HashFunctionId::Md5 => md5(data).to_vec(),
        HashFunctionId::Sha1 => sha1(data).to_vec(),
    }
}

fn keyed_digest(id: HashFunctionId, body: &MessageBody, key: &SecretKey) -> Result<Vec<u8>, WireError> {
    let mut input = digest_input(body)?;
    input.extend_from_slice(key.bytes());
    Ok(hash(id, &input))
}

/// Builds the extension for a body about to be transmitted.
pub fn sign(
    body: &MessageBody,
    key: &SecretKey,
    id: HashFunctionId,
) -> Result<SecurityExtension, WireError> {
    Ok(SecurityExtension {
        hash_function_id: id.wire_id(),
        digest: keyed_digest(id, body, key)?,
    })
}

/// Recomputes the digest of a received envelope under `key` and compares
/// it byte-for-byte against the carried digest.
pub fn verify(env: &SecureEnvelope, key: &SecretKey) -> Result<(), RejectReason> {
    let ext = env.ext.as_ref().ok_or(RejectReason::MissingExtension)?;
    let id = HashFunctionId::from_wire(ext.hash_function_id)
        .ok_or(RejectReason::ReservedHashFunctionId(ext.hash_function_id))?;
    let expected = keyed_digest(id, &env.body, key).map_err(|_| RejectReason::DigestMismatch)?;
    if expected == ext.digest {
        Ok(())
    } else {
        Err(RejectReason::DigestMismatch)
    }
}

/// Replaces the extension with a fresh signature before forwarding. The
/// body must already reflect the forwarded form (hop count incremented);
/// the forwarder may pick a different hash function than the sender did.
pub fn resign_for_forward(
    mut env: SecureEnvelope,
    key: &SecretKey,
    id: HashFunctionId,
) -> Result<SecureEnvelope, WireError> {
    env.ext = Some(sign(&env.body, key, id)?);
    Ok(env)
}

/// Per-run hash selection policy for originated and re-signed messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HashPolicy {
    Fixed(HashFunctionId),
    RoundRobin,
}

/// Deterministic per-node chooser. Round-robin alternates MD5/SHA-1 with
/// a phase derived from the run seed and node address, so traces stay
/// reproducible while hash ids still vary along a forwarding chain.
#[derive(Debug, Clone)]
pub struct IdSelector {
    policy: HashPolicy,
    use_sha1_next: bool,
}

impl IdSelector {
    pub fn new(policy: HashPolicy, seed: u64, addr: u32) -> Self {
        IdSelector {
            policy,
            use_sha1_next: (seed ^ u64::from(addr)) & 1 == 1,
        }
    }

    pub fn next(&mut self) -> HashFunctionId {
        match self.policy {
            HashPolicy::Fixed(id) => id,
            HashPolicy::RoundRobin => {
                let id = if self.use_sha1_next {
                    HashFunctionId::Sha1
                } else {
                    HashFunctionId::Md5
                };
                self.use_sha1_next = !self.use_sha1_next;
                id
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::{NodeAddress, RreqMessage, SequenceNumber};
    use proptest::prelude::*;

    fn body() -> MessageBody {
        MessageBody::Rreq(RreqMessage {
            flag_j: false,
            flag_r: false,
            flag_g: false,
            hop_count: 0,
            rreq_id: 1,
            dest_addr: NodeAddress(2),
            dest_seq: SequenceNumber(0),
            orig_addr: NodeAddress(1),
            orig_seq: SequenceNumber(1),
        })
    }

    fn key(bytes: &[u8]) -> SecretKey {
        SecretKey::new(bytes.to_vec()).unwrap()
    }

    #[test]
    fn hash_dispatches_by_registry_id() {
        assert_eq!(hash(HashFunctionId::Md5, b"").len(), 16);
        assert_eq!(hash(HashFunctionId::Sha1, b"").len(), 20);
        assert_eq!(
            hash(HashFunctionId::Md5, b"abc"),
            md5(b"abc").to_vec()
        );
    }

    #[test]
    fn sign_then_verify_accepts() {
        let k = key(b"group-key");
        for id in [HashFunctionId::Md5, HashFunctionId::Sha1] {
            let ext = sign(&body(), &k, id).unwrap();
            assert_eq!(ext.digest.len(), id.digest_len());
            let env = SecureEnvelope {
                body: body(),
                ext: Some(ext),
            };
            assert_eq!(verify(&env, &k), Ok(()));
        }
    }

    #[test]
    fn wrong_key_rejects() {
        let env = SecureEnvelope {
            body: body(),
            ext: Some(sign(&body(), &key(b"right"), HashFunctionId::Sha1).unwrap()),
        };
        assert_eq!(
            verify(&env, &key(b"wrong")),
            Err(RejectReason::DigestMismatch)
        );
    }

    #[test]
    fn mutated_hop_count_rejects_until_resigned() {
        let k = key(b"group-key");
        let mut env = SecureEnvelope {
            body: body(),
            ext: Some(sign(&body(), &k, HashFunctionId::Md5).unwrap()),
        };
        if let MessageBody::Rreq(ref mut m) = env.body {
            m.hop_count += 1;
        }
        assert_eq!(verify(&env, &k), Err(RejectReason::DigestMismatch));

        let resigned = resign_for_forward(env, &k, HashFunctionId::Sha1).unwrap();
        assert_eq!(verify(&resigned, &k), Ok(()));
    }

    #[test]
    fn forwarding_chain_verifies_with_alternating_ids() {
        let k = key(b"chain");
        let mut env = SecureEnvelope {
            body: body(),
            ext: Some(sign(&body(), &k, HashFunctionId::Md5).unwrap()),
        };
        let mut selector = IdSelector::new(HashPolicy::RoundRobin, 0, 3);
        for _ in 0..3 {
            assert_eq!(verify(&env, &k), Ok(()));
            if let MessageBody::Rreq(ref mut m) = env.body {
                m.hop_count += 1;
            }
            env = resign_for_forward(env, &k, selector.next()).unwrap();
        }
        assert_eq!(verify(&env, &k), Ok(()));
    }

    #[test]
    fn resign_is_deterministic_for_same_body_and_id() {
        let k = key(b"det");
        let a = sign(&body(), &k, HashFunctionId::Sha1).unwrap();
        let b = sign(&body(), &k, HashFunctionId::Sha1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_extension_is_rejected() {
        let env = SecureEnvelope {
            body: body(),
            ext: None,
        };
        assert_eq!(
            verify(&env, &key(b"k")),
            Err(RejectReason::MissingExtension)
        );
    }

    #[test]
    fn reserved_id_in_extension_is_rejected() {
        let k = key(b"k");
        let mut env = SecureEnvelope {
            body: body(),
            ext: Some(sign(&body(), &k, HashFunctionId::Md5).unwrap()),
        };
        env.ext.as_mut().unwrap().hash_function_id = 0;
        assert_eq!(
            verify(&env, &k),
            Err(RejectReason::ReservedHashFunctionId(0))
        );
    }

    #[test]
    fn flipping_hash_id_alone_is_rejected() {
        let k = key(b"k");
        let mut env = SecureEnvelope {
            body: body(),
            ext: Some(sign(&body(), &k, HashFunctionId::Md5).unwrap()),
        };
        env.ext.as_mut().unwrap().hash_function_id = HASH_ID_SHA1;
        assert_eq!(verify(&env, &k), Err(RejectReason::DigestMismatch));
    }

    #[test]
    fn key_length_bounds_enforced() {
        assert!(SecretKey::new(vec![]).is_err());
        assert!(SecretKey::new(vec![0; 65]).is_err());
        assert!(SecretKey::new(vec![0; 64]).is_ok());
    }

    #[test]
    fn secret_key_debug_is_redacted() {
        let k = key(b"topsecret");
        assert_eq!(format!("{:?}", k), "SecretKey(<9 bytes>)");
    }

    #[test]
    fn round_robin_selector_alternates_with_seeded_phase() {
        let mut even = IdSelector::new(HashPolicy::RoundRobin, 0, 2);
        assert_eq!(even.next(), HashFunctionId::Md5);
        assert_eq!(even.next(), HashFunctionId::Sha1);
        assert_eq!(even.next(), HashFunctionId::Md5);

        let mut odd = IdSelector::new(HashPolicy::RoundRobin, 0, 3);
        assert_eq!(odd.next(), HashFunctionId::Sha1);
        assert_eq!(odd.next(), HashFunctionId::Md5);

        let mut fixed = IdSelector::new(HashPolicy::Fixed(HashFunctionId::Md5), 9, 3);
        assert_eq!(fixed.next(), HashFunctionId::Md5);
        assert_eq!(fixed.next(), HashFunctionId::Md5);
    }

    proptest! {
        #[test]
        fn single_bit_flip_in_orig_seq_changes_digest(seq in any::<u32>(), bit in 0u32..32) {
            let k = key(b"prop");
            let mut a = body();
            if let MessageBody::Rreq(ref mut m) = a {
                m.orig_seq = SequenceNumber(seq);
            }
            let mut b = a.clone();
            if let MessageBody::Rreq(ref mut m) = b {
                m.orig_seq = SequenceNumber(seq ^ (1 << bit));
            }
            let da = sign(&a, &k, HashFunctionId::Md5).unwrap().digest;
            let db = sign(&b, &k, HashFunctionId::Md5).unwrap().digest;
            prop_assert_ne!(da, db);
        }
    }
}
