//! Seeded generators shared by the integration suites.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;

use aodv_sim::wire::{
    MessageBody, NodeAddress, RerrMessage, RrepMessage, RreqMessage, SecureEnvelope,
    SecurityExtension, SequenceNumber, HASH_ID_MD5, HASH_ID_SHA1,
};

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

pub fn random_addr(rng: &mut ChaCha8Rng) -> NodeAddress {
    NodeAddress(rng.gen_range(1..=u32::MAX))
}

fn different_addr(rng: &mut ChaCha8Rng, old: NodeAddress) -> NodeAddress {
    loop {
        let v = random_addr(rng);
        if v != old {
            return v;
        }
    }
}

fn different_u32(rng: &mut ChaCha8Rng, old: u32) -> u32 {
    loop {
        let v = rng.gen();
        if v != old {
            return v;
        }
    }
}

fn different_u8(rng: &mut ChaCha8Rng, old: u8, max: u8) -> u8 {
    loop {
        let v = rng.gen_range(0..=max);
        if v != old {
            return v;
        }
    }
}

pub fn random_body(rng: &mut ChaCha8Rng) -> MessageBody {
    match rng.gen_range(0..3u8) {
        0 => MessageBody::Rreq(RreqMessage {
            flag_j: rng.gen(),
            flag_r: rng.gen(),
            flag_g: rng.gen(),
            hop_count: rng.gen_range(0..=35),
            rreq_id: rng.gen(),
            dest_addr: random_addr(rng),
            dest_seq: SequenceNumber(rng.gen()),
            orig_addr: random_addr(rng),
            orig_seq: SequenceNumber(rng.gen()),
        }),
        1 => MessageBody::Rrep(RrepMessage {
            flag_r: rng.gen(),
            flag_a: rng.gen(),
            prefix_sz: rng.gen_range(0..=31),
            hop_count: rng.gen_range(0..=35),
            dest_addr: random_addr(rng),
            dest_seq: SequenceNumber(rng.gen()),
            orig_addr: random_addr(rng),
            lifetime_ms: rng.gen_range(1..=600_000),
        }),
        _ => MessageBody::Rerr(RerrMessage {
            flag_n: rng.gen(),
            unreachable: (0..rng.gen_range(1..=5))
                .map(|_| (random_addr(rng), SequenceNumber(rng.gen())))
                .collect(),
        }),
    }
}

pub fn random_extension(rng: &mut ChaCha8Rng) -> SecurityExtension {
    let id = if rng.gen::<bool>() {
        HASH_ID_MD5
    } else {
        HASH_ID_SHA1
    };
    let len = if id == HASH_ID_MD5 { 16 } else { 20 };
    let mut digest = vec![0u8; len];
    rng.fill_bytes(&mut digest);
    SecurityExtension {
        hash_function_id: id,
        digest,
    }
}

pub fn random_envelope(rng: &mut ChaCha8Rng) -> SecureEnvelope {
    let body = random_body(rng);
    let ext = rng.gen::<bool>().then(|| random_extension(rng));
    SecureEnvelope { body, ext }
}

/// Rewrites exactly one digest-covered field to a different value, chosen
/// uniformly among the body's fields.
pub fn mutate_one_field(rng: &mut ChaCha8Rng, body: &MessageBody) -> MessageBody {
    let mut b = body.clone();
    match &mut b {
        MessageBody::Rreq(m) => match rng.gen_range(0..9u8) {
            0 => m.flag_j = !m.flag_j,
            1 => m.flag_r = !m.flag_r,
            2 => m.flag_g = !m.flag_g,
            3 => m.hop_count = different_u8(rng, m.hop_count, u8::MAX),
            4 => m.rreq_id = different_u32(rng, m.rreq_id),
            5 => m.dest_addr = different_addr(rng, m.dest_addr),
            6 => m.dest_seq = SequenceNumber(different_u32(rng, m.dest_seq.0)),
            7 => m.orig_addr = different_addr(rng, m.orig_addr),
            _ => m.orig_seq = SequenceNumber(different_u32(rng, m.orig_seq.0)),
        },
        MessageBody::Rrep(m) => match rng.gen_range(0..8u8) {
            0 => m.flag_r = !m.flag_r,
            1 => m.flag_a = !m.flag_a,
            2 => m.prefix_sz = different_u8(rng, m.prefix_sz, 31),
            3 => m.hop_count = different_u8(rng, m.hop_count, u8::MAX),
            4 => m.dest_addr = different_addr(rng, m.dest_addr),
            5 => m.dest_seq = SequenceNumber(different_u32(rng, m.dest_seq.0)),
            6 => m.orig_addr = different_addr(rng, m.orig_addr),
            _ => m.lifetime_ms = different_u32(rng, m.lifetime_ms),
        },
        MessageBody::Rerr(m) => {
            let idx = rng.gen_range(0..m.unreachable.len());
            match rng.gen_range(0..3u8) {
                0 => m.flag_n = !m.flag_n,
                1 => m.unreachable[idx].0 = different_addr(rng, m.unreachable[idx].0),
                _ => {
                    m.unreachable[idx].1 =
                        SequenceNumber(different_u32(rng, m.unreachable[idx].1 .0))
                }
            }
        }
    }
    b
}
