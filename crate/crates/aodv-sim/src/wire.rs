//! AODV control messages and their byte-exact wire layout.
//!
//! All messages pack big-endian into 32-bit rows. The secured variant
//! appends an extension of two fields, a hash-function id and a message
//! digest, after the standard body. Explicit widths for the extension
//! header make parsing unambiguous:
//!
//! ```text
//! RREQ body (24 octets):
//!  0                   1                   2                   3
//!  0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1
//! +---------------+-+-+-+-------------------------+---------------+
//! |   Type = 1    |J|R|G|        Reserved         |   Hop Count   |
//! +---------------+-+-+-+-------------------------+---------------+
//! |                            RREQ ID                            |
//! +---------------------------------------------------------------+
//! |                    Destination IP Address                     |
//! +---------------------------------------------------------------+
//! |                  Destination Sequence Number                  |
//! +---------------------------------------------------------------+
//! |                     Originator IP Address                     |
//! +---------------------------------------------------------------+
//! |                   Originator Sequence Number                  |
//! +---------------------------------------------------------------+
//!
//! RREP body (20 octets):
//! +---------------+-+-+-----------------+---------+---------------+
//! |   Type = 2    |R|A|    Reserved     |Prefix Sz|   Hop Count   |
//! +---------------+-+-+-----------------+---------+---------------+
//! |                    Destination IP Address                     |
//! |                  Destination Sequence Number                  |
//! |                     Originator IP Address                     |
//! |                            Lifetime                           |
//! +---------------------------------------------------------------+
//!
//! RERR body (4 + 8 * DestCount octets):
//! +---------------+-+-----------------------------+---------------+
//! |   Type = 3    |N|          Reserved           |   DestCount   |
//! +---------------+-+-----------------------------+---------------+
//! |            Unreachable Destination IP Address (1)             |
//! |          Unreachable Destination Sequence Number (1)          |
//! |                              ...                              |
//! +---------------------------------------------------------------+
//!
//! Security extension (4 + DigestLen octets, appended last):
//! +---------------+---------------+-------------------------------+
//! | Hash Function |  Digest Len   |           Reserved            |
//! +---------------+---------------+-------------------------------+
//! |                     Message Digest ...                        |
//! +---------------------------------------------------------------+
//! ```
//!
//! Reserved bits are zero on encode and ignored on decode. The digest is
//! computed over the canonical body encoding only (every body field,
//! mutable and non-mutable alike), never over the extension itself; see
//! [`digest_input`].

use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub const TYPE_RREQ: u8 = 1;
pub const TYPE_RREP: u8 = 2;
pub const TYPE_RERR: u8 = 3;

pub const RREQ_BODY_LEN: usize = 24;
pub const RREP_BODY_LEN: usize = 20;
pub const RERR_FIXED_LEN: usize = 4;
pub const RERR_DEST_LEN: usize = 8;
pub const EXT_HEADER_LEN: usize = 4;

/// Hash_Function registry ids usable on the wire: 1 = MD5, 2 = SHA-1.
/// 0 and 3..=127 are reserved, 128..=255 implementation-dependent (unused).
pub const HASH_ID_MD5: u8 = 1;
pub const HASH_ID_SHA1: u8 = 2;

/// 32-bit node address. Zero is reserved as "unspecified" and never
/// appears as the originator or destination of a valid message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct NodeAddress(pub u32);

impl NodeAddress {
    pub fn is_unspecified(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for NodeAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Route-freshness counter. Fresher means strictly greater; the value 0
/// doubles as "unknown" in RREQ destination fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct SequenceNumber(pub u32);

impl fmt::Display for SequenceNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RreqMessage {
    pub flag_j: bool,
    pub flag_r: bool,
    pub flag_g: bool,
    pub hop_count: u8,
    pub rreq_id: u32,
    pub dest_addr: NodeAddress,
    pub dest_seq: SequenceNumber,
    pub orig_addr: NodeAddress,
    pub orig_seq: SequenceNumber,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RrepMessage {
    pub flag_r: bool,
    pub flag_a: bool,
    pub prefix_sz: u8,
    pub hop_count: u8,
    pub dest_addr: NodeAddress,
    pub dest_seq: SequenceNumber,
    pub orig_addr: NodeAddress,
    pub lifetime_ms: u32,
}

impl RrepMessage {
    /// A HELLO is an RREP with hop count 0 that names the link-layer
    /// sender as both destination and originator. A real zero-hop reply
    /// from a destination carries the discovery originator instead.
    pub fn is_hello_from(&self, sender: NodeAddress) -> bool {
        self.hop_count == 0 && self.dest_addr == sender && self.orig_addr == sender
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RerrMessage {
    pub flag_n: bool,
    pub unreachable: Vec<(NodeAddress, SequenceNumber)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MessageBody {
    Rreq(RreqMessage),
    Rrep(RrepMessage),
    Rerr(RerrMessage),
}

impl MessageBody {
    pub fn type_code(&self) -> u8 {
        match self {
            MessageBody::Rreq(_) => TYPE_RREQ,
            MessageBody::Rrep(_) => TYPE_RREP,
            MessageBody::Rerr(_) => TYPE_RERR,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            MessageBody::Rreq(_) => "RREQ",
            MessageBody::Rrep(_) => "RREP",
            MessageBody::Rerr(_) => "RERR",
        }
    }

    pub fn hop_count(&self) -> Option<u8> {
        match self {
            MessageBody::Rreq(m) => Some(m.hop_count),
            MessageBody::Rrep(m) => Some(m.hop_count),
            MessageBody::Rerr(_) => None,
        }
    }
}

impl fmt::Display for MessageBody {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MessageBody::Rreq(m) => write!(
                f,
                "RREQ id={} orig={} oseq={} dest={} dseq={} hops={}",
                m.rreq_id, m.orig_addr, m.orig_seq, m.dest_addr, m.dest_seq, m.hop_count
            ),
            MessageBody::Rrep(m) => write!(
                f,
                "RREP dest={} dseq={} orig={} hops={} life={}ms",
                m.dest_addr, m.dest_seq, m.orig_addr, m.hop_count, m.lifetime_ms
            ),
            MessageBody::Rerr(m) => {
                write!(f, "RERR n={} [", m.unreachable.len())?;
                for (i, (d, s)) in m.unreachable.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{}/{}", d, s)?;
                }
                write!(f, "]")
            }
        }
    }
}

/// The trailing Hash_Function / Message_Digest fields. The digest length
/// travels explicitly so parsers need no out-of-band registry knowledge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecurityExtension {
    pub hash_function_id: u8,
    pub digest: Vec<u8>,
}

impl SecurityExtension {
    pub fn digest_len(&self) -> usize {
        self.digest.len()
    }
}

/// An AODV control message, optionally carrying the security extension.
/// Plain-protocol envelopes omit the extension entirely.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecureEnvelope {
    pub body: MessageBody,
    pub ext: Option<SecurityExtension>,
}

impl fmt::Display for SecureEnvelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.body)?;
        match &self.ext {
            Some(ext) => write!(f, " ext={}", hash_id_name(ext.hash_function_id)),
            None => Ok(()),
        }
    }
}

pub fn hash_id_name(id: u8) -> &'static str {
    match id {
        HASH_ID_MD5 => "md5",
        HASH_ID_SHA1 => "sha1",
        _ => "?",
    }
}

fn expected_digest_len(id: u8) -> Option<usize> {
    match id {
        HASH_ID_MD5 => Some(16),
        HASH_ID_SHA1 => Some(20),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("message truncated")]
    Truncated,
    #[error("unknown message type code {0}")]
    UnknownTypeCode(u8),
    #[error("digest length {len} does not match hash function id {id}")]
    BadDigestLength { id: u8, len: u8 },
    #[error("reserved hash function id {0}")]
    ReservedHashFunctionId(u8),
    #[error("{0} trailing byte(s) after message")]
    TrailingBytes(usize),
    #[error("RERR carries no unreachable destinations")]
    EmptyRerr,
    #[error("invariant violation: {0}")]
    InvariantViolation(&'static str),
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        if self.remaining() < 1 {
            return Err(WireError::Truncated);
        }
        let v = self.buf[self.pos];
        self.pos += 1;
        Ok(v)
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        if self.remaining() < 4 {
            return Err(WireError::Truncated);
        }
        let v = u32::from_be_bytes(self.buf[self.pos..self.pos + 4].try_into().unwrap());
        self.pos += 4;
        Ok(v)
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.remaining() < n {
            return Err(WireError::Truncated);
        }
        let v = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(v)
    }
}

fn check_addr(addr: NodeAddress) -> Result<(), WireError> {
    if addr.is_unspecified() {
        return Err(WireError::InvariantViolation(
            "address 0 is reserved as unspecified",
        ));
    }
    Ok(())
}

fn encode_body_into(body: &MessageBody, out: &mut Vec<u8>) -> Result<(), WireError> {
    match body {
        MessageBody::Rreq(m) => {
            check_addr(m.dest_addr)?;
            check_addr(m.orig_addr)?;
            out.push(TYPE_RREQ);
            let mut flags = 0u8;
            if m.flag_j {
                flags |= 0x80;
            }
            if m.flag_r {
                flags |= 0x40;
            }
            if m.flag_g {
                flags |= 0x20;
            }
            out.push(flags);
            out.push(0); // reserved
            out.push(m.hop_count);
            out.extend_from_slice(&m.rreq_id.to_be_bytes());
            out.extend_from_slice(&m.dest_addr.0.to_be_bytes());
            out.extend_from_slice(&m.dest_seq.0.to_be_bytes());
            out.extend_from_slice(&m.orig_addr.0.to_be_bytes());
            out.extend_from_slice(&m.orig_seq.0.to_be_bytes());
        }
        MessageBody::Rrep(m) => {
            check_addr(m.dest_addr)?;
            check_addr(m.orig_addr)?;
            if m.prefix_sz > 0x1f {
                return Err(WireError::InvariantViolation("prefix size exceeds 5 bits"));
            }
            out.push(TYPE_RREP);
            let mut flags = 0u8;
            if m.flag_r {
                flags |= 0x80;
            }
            if m.flag_a {
                flags |= 0x40;
            }
            out.push(flags);
            out.push(m.prefix_sz & 0x1f);
            out.push(m.hop_count);
            out.extend_from_slice(&m.dest_addr.0.to_be_bytes());
            out.extend_from_slice(&m.dest_seq.0.to_be_bytes());
            out.extend_from_slice(&m.orig_addr.0.to_be_bytes());
            out.extend_from_slice(&m.lifetime_ms.to_be_bytes());
        }
        MessageBody::Rerr(m) => {
            if m.unreachable.is_empty() {
                return Err(WireError::EmptyRerr);
            }
            if m.unreachable.len() > u8::MAX as usize {
                return Err(WireError::InvariantViolation(
                    "RERR destination count exceeds 255",
                ));
            }
            out.push(TYPE_RERR);
            out.push(if m.flag_n { 0x80 } else { 0 });
            out.push(0); // reserved
            out.push(m.unreachable.len() as u8);
            for (addr, seq) in &m.unreachable {
                check_addr(*addr)?;
                out.extend_from_slice(&addr.0.to_be_bytes());
                out.extend_from_slice(&seq.0.to_be_bytes());
            }
        }
    }
    Ok(())
}

/// Canonical byte string a digest is computed over: every body field in
/// wire order, excluding the security extension. Equal bodies always yield
/// equal byte strings.
pub fn digest_input(body: &MessageBody) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::with_capacity(RREQ_BODY_LEN);
    encode_body_into(body, &mut out)?;
    Ok(out)
}

/// Serializes an envelope. The extension, when present, is appended after
/// the body; its digest length must match its hash-function id.
pub fn encode(env: &SecureEnvelope) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::with_capacity(RREQ_BODY_LEN + EXT_HEADER_LEN + 20);
    encode_body_into(&env.body, &mut out)?;
    if let Some(ext) = &env.ext {
        let expected = expected_digest_len(ext.hash_function_id)
            .ok_or(WireError::ReservedHashFunctionId(ext.hash_function_id))?;
        if ext.digest.len() != expected {
            return Err(WireError::BadDigestLength {
                id: ext.hash_function_id,
                len: ext.digest.len().min(255) as u8,
            });
        }
        out.push(ext.hash_function_id);
        out.push(ext.digest.len() as u8);
        out.push(0);
        out.push(0);
        out.extend_from_slice(&ext.digest);
    }
    Ok(out)
}

/// Parses an envelope. With `secured` set, a trailing extension is parsed
/// when present (its absence is left for verification to reject); without
/// it, any bytes past the body are an error. Trailing bytes beyond the
/// declared structure are always an error.
pub fn decode(bytes: &[u8], secured: bool) -> Result<SecureEnvelope, WireError> {
    let mut r = Reader::new(bytes);
    let type_code = r.u8()?;
    let body = match type_code {
        TYPE_RREQ => {
            let flags = r.u8()?;
            let _reserved = r.u8()?;
            let hop_count = r.u8()?;
            MessageBody::Rreq(RreqMessage {
                flag_j: flags & 0x80 != 0,
                flag_r: flags & 0x40 != 0,
                flag_g: flags & 0x20 != 0,
                hop_count,
                rreq_id: r.u32()?,
                dest_addr: NodeAddress(r.u32()?),
                dest_seq: SequenceNumber(r.u32()?),
                orig_addr: NodeAddress(r.u32()?),
                orig_seq: SequenceNumber(r.u32()?),
            })
        }
        TYPE_RREP => {
            let flags = r.u8()?;
            let prefix = r.u8()?;
            let hop_count = r.u8()?;
            MessageBody::Rrep(RrepMessage {
                flag_r: flags & 0x80 != 0,
                flag_a: flags & 0x40 != 0,
                prefix_sz: prefix & 0x1f,
                hop_count,
                dest_addr: NodeAddress(r.u32()?),
                dest_seq: SequenceNumber(r.u32()?),
                orig_addr: NodeAddress(r.u32()?),
                lifetime_ms: r.u32()?,
            })
        }
        TYPE_RERR => {
            let flags = r.u8()?;
            let _reserved = r.u8()?;
            let dest_count = r.u8()?;
            if dest_count == 0 {
                return Err(WireError::EmptyRerr);
            }
            let mut unreachable = Vec::with_capacity(dest_count as usize);
            for _ in 0..dest_count {
                let addr = NodeAddress(r.u32()?);
                let seq = SequenceNumber(r.u32()?);
                unreachable.push((addr, seq));
            }
            MessageBody::Rerr(RerrMessage {
                flag_n: flags & 0x80 != 0,
                unreachable,
            })
        }
        other => return Err(WireError::UnknownTypeCode(other)),
    };

    let ext = if secured && r.remaining() > 0 {
        let id = r.u8()?;
        let len = r.u8()?;
        let _reserved = r.bytes(2)?;
        let expected = expected_digest_len(id).ok_or(WireError::ReservedHashFunctionId(id))?;
        if len as usize != expected {
            return Err(WireError::BadDigestLength { id, len });
        }
        let digest = r.bytes(len as usize)?.to_vec();
        Some(SecurityExtension {
            hash_function_id: id,
            digest,
        })
    } else {
        None
    };

    if r.remaining() > 0 {
        return Err(WireError::TrailingBytes(r.remaining()));
    }
    Ok(SecureEnvelope { body, ext })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_rreq() -> RreqMessage {
        RreqMessage {
            flag_j: false,
            flag_r: false,
            flag_g: true,
            hop_count: 2,
            rreq_id: 7,
            dest_addr: NodeAddress(2),
            dest_seq: SequenceNumber(5),
            orig_addr: NodeAddress(1),
            orig_seq: SequenceNumber(9),
        }
    }

    fn sample_rrep() -> RrepMessage {
        RrepMessage {
            flag_r: false,
            flag_a: false,
            prefix_sz: 0,
            hop_count: 1,
            dest_addr: NodeAddress(2),
            dest_seq: SequenceNumber(5),
            orig_addr: NodeAddress(1),
            lifetime_ms: 3000,
        }
    }

    #[test]
    fn rreq_body_is_24_octets() {
        let env = SecureEnvelope {
            body: MessageBody::Rreq(sample_rreq()),
            ext: None,
        };
        assert_eq!(encode(&env).unwrap().len(), RREQ_BODY_LEN);
    }

    #[test]
    fn rreq_with_md5_extension_is_44_octets() {
        let env = SecureEnvelope {
            body: MessageBody::Rreq(sample_rreq()),
            ext: Some(SecurityExtension {
                hash_function_id: HASH_ID_MD5,
                digest: vec![0xab; 16],
            }),
        };
        assert_eq!(encode(&env).unwrap().len(), 44);
    }

    #[test]
    fn rrep_body_is_20_octets() {
        let env = SecureEnvelope {
            body: MessageBody::Rrep(sample_rrep()),
            ext: None,
        };
        assert_eq!(encode(&env).unwrap().len(), RREP_BODY_LEN);
    }

    #[test]
    fn rerr_body_length_scales_with_dest_count() {
        for n in 1..=4usize {
            let env = SecureEnvelope {
                body: MessageBody::Rerr(RerrMessage {
                    flag_n: false,
                    unreachable: (0..n)
                        .map(|i| (NodeAddress(i as u32 + 1), SequenceNumber(i as u32)))
                        .collect(),
                }),
                ext: None,
            };
            assert_eq!(
                encode(&env).unwrap().len(),
                RERR_FIXED_LEN + RERR_DEST_LEN * n
            );
        }
    }

    #[test]
    fn truncated_fragment_is_rejected() {
        let env = SecureEnvelope {
            body: MessageBody::Rreq(sample_rreq()),
            ext: None,
        };
        let bytes = encode(&env).unwrap();
        assert_eq!(decode(&bytes[..10], false), Err(WireError::Truncated));
    }

    #[test]
    fn unknown_type_code_is_rejected() {
        let mut bytes = encode(&SecureEnvelope {
            body: MessageBody::Rreq(sample_rreq()),
            ext: None,
        })
        .unwrap();
        bytes[0] = 9;
        assert_eq!(decode(&bytes, false), Err(WireError::UnknownTypeCode(9)));
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let mut bytes = encode(&SecureEnvelope {
            body: MessageBody::Rreq(sample_rreq()),
            ext: None,
        })
        .unwrap();
        bytes.push(0);
        assert_eq!(decode(&bytes, false), Err(WireError::TrailingBytes(1)));
    }

    #[test]
    fn reserved_hash_id_is_rejected() {
        let env = SecureEnvelope {
            body: MessageBody::Rreq(sample_rreq()),
            ext: Some(SecurityExtension {
                hash_function_id: HASH_ID_MD5,
                digest: vec![0; 16],
            }),
        };
        let mut bytes = encode(&env).unwrap();
        bytes[RREQ_BODY_LEN] = 3;
        assert_eq!(
            decode(&bytes, true),
            Err(WireError::ReservedHashFunctionId(3))
        );
    }

    #[test]
    fn digest_length_must_match_hash_id() {
        let env = SecureEnvelope {
            body: MessageBody::Rreq(sample_rreq()),
            ext: Some(SecurityExtension {
                hash_function_id: HASH_ID_SHA1,
                digest: vec![0; 16],
            }),
        };
        assert_eq!(
            encode(&env),
            Err(WireError::BadDigestLength {
                id: HASH_ID_SHA1,
                len: 16
            })
        );
    }

    #[test]
    fn rerr_without_destinations_rejected_both_ways() {
        let env = SecureEnvelope {
            body: MessageBody::Rerr(RerrMessage {
                flag_n: false,
                unreachable: vec![],
            }),
            ext: None,
        };
        assert_eq!(encode(&env), Err(WireError::EmptyRerr));
        // type=3, flags, reserved, dest_count=0
        assert_eq!(decode(&[3, 0, 0, 0], false), Err(WireError::EmptyRerr));
    }

    #[test]
    fn unspecified_address_never_encodes() {
        let mut m = sample_rreq();
        m.orig_addr = NodeAddress(0);
        let env = SecureEnvelope {
            body: MessageBody::Rreq(m),
            ext: None,
        };
        assert!(matches!(
            encode(&env),
            Err(WireError::InvariantViolation(_))
        ));
    }

    #[test]
    fn digest_input_equals_body_encoding_and_ignores_extension() {
        let body = MessageBody::Rreq(sample_rreq());
        let plain = encode(&SecureEnvelope {
            body: body.clone(),
            ext: None,
        })
        .unwrap();
        assert_eq!(digest_input(&body).unwrap(), plain);

        // Extension excluded: same body under different ids hashes the same.
        let with_ext = SecureEnvelope {
            body: body.clone(),
            ext: Some(SecurityExtension {
                hash_function_id: HASH_ID_SHA1,
                digest: vec![1; 20],
            }),
        };
        assert_eq!(digest_input(&with_ext.body).unwrap(), plain);
    }

    #[test]
    fn hop_count_is_covered_by_digest_input() {
        let a = sample_rreq();
        let mut b = a;
        b.hop_count += 1;
        assert_ne!(
            digest_input(&MessageBody::Rreq(a)).unwrap(),
            digest_input(&MessageBody::Rreq(b)).unwrap()
        );
    }

    #[test]
    fn rendering_matches_trace_format() {
        let body = MessageBody::Rreq(sample_rreq());
        assert_eq!(
            body.to_string(),
            "RREQ id=7 orig=1 oseq=9 dest=2 dseq=5 hops=2"
        );
    }

    prop_compose! {
        fn arb_addr()(v in 1u32..=0xffff_ffff) -> NodeAddress { NodeAddress(v) }
    }

    fn arb_ext() -> impl Strategy<Value = SecurityExtension> {
        prop_oneof![
            proptest::collection::vec(any::<u8>(), 16).prop_map(|d| SecurityExtension {
                hash_function_id: HASH_ID_MD5,
                digest: d,
            }),
            proptest::collection::vec(any::<u8>(), 20).prop_map(|d| SecurityExtension {
                hash_function_id: HASH_ID_SHA1,
                digest: d,
            }),
        ]
    }

    fn arb_body() -> impl Strategy<Value = MessageBody> {
        prop_oneof![
            (
                any::<(bool, bool, bool)>(),
                any::<u8>(),
                any::<u32>(),
                arb_addr(),
                any::<u32>(),
                arb_addr(),
                any::<u32>()
            )
                .prop_map(|(flags, hops, id, dest, dseq, orig, oseq)| {
                    MessageBody::Rreq(RreqMessage {
                        flag_j: flags.0,
                        flag_r: flags.1,
                        flag_g: flags.2,
                        hop_count: hops,
                        rreq_id: id,
                        dest_addr: dest,
                        dest_seq: SequenceNumber(dseq),
                        orig_addr: orig,
                        orig_seq: SequenceNumber(oseq),
                    })
                }),
            (
                any::<(bool, bool)>(),
                0u8..=0x1f,
                any::<u8>(),
                arb_addr(),
                any::<u32>(),
                arb_addr(),
                1u32..=u32::MAX
            )
                .prop_map(|(flags, prefix, hops, dest, dseq, orig, life)| {
                    MessageBody::Rrep(RrepMessage {
                        flag_r: flags.0,
                        flag_a: flags.1,
                        prefix_sz: prefix,
                        hop_count: hops,
                        dest_addr: dest,
                        dest_seq: SequenceNumber(dseq),
                        orig_addr: orig,
                        lifetime_ms: life,
                    })
                }),
            (
                any::<bool>(),
                proptest::collection::vec((arb_addr(), any::<u32>()), 1..6)
            )
                .prop_map(|(n, list)| {
                    MessageBody::Rerr(RerrMessage {
                        flag_n: n,
                        unreachable: list
                            .into_iter()
                            .map(|(a, s)| (a, SequenceNumber(s)))
                            .collect(),
                    })
                }),
        ]
    }

    fn arb_envelope() -> impl Strategy<Value = SecureEnvelope> {
        (arb_body(), proptest::option::of(arb_ext()))
            .prop_map(|(body, ext)| SecureEnvelope { body, ext })
    }

    proptest! {
        #[test]
        fn roundtrip_decode_encode(env in arb_envelope()) {
            let secured = env.ext.is_some();
            let bytes = encode(&env).unwrap();
            let back = decode(&bytes, secured).unwrap();
            prop_assert_eq!(&back, &env);
            prop_assert_eq!(encode(&back).unwrap(), bytes);
        }

        #[test]
        fn every_octet_accounted_for(env in arb_envelope()) {
            let bytes = encode(&env).unwrap();
            let body_len = match &env.body {
                MessageBody::Rreq(_) => RREQ_BODY_LEN,
                MessageBody::Rrep(_) => RREP_BODY_LEN,
                MessageBody::Rerr(m) => RERR_FIXED_LEN + RERR_DEST_LEN * m.unreachable.len(),
            };
            let ext_len = env.ext.as_ref().map_or(0, |e| EXT_HEADER_LEN + e.digest.len());
            prop_assert_eq!(bytes.len(), body_len + ext_len);
        }
    }
}
