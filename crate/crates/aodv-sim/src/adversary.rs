//! Malicious-node policies. An adversary is an ordinary simulation node
//! wrapped in one behavior; it participates in radio delivery like anyone
//! else but holds no secret key, so in secured runs everything it emits
//! carries either no extension or a blind-forgery extension.
//!
//! Tampering rewrites fields of a message the node is relaying and leaves
//! the carried extension stale; dropping swallows relayed traffic;
//! fabrication and spoofing inject messages that were never requested.

use crate::wire::{
    MessageBody, NodeAddress, RrepMessage, SecureEnvelope, SequenceNumber,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdversaryBehavior {
    Honest,
    /// Deceptive hop-count rewriting on relayed messages.
    TamperHopCount { set_to: u8 },
    /// Deceptive sequence-number shifts on relayed messages.
    TamperSeq { delta: i64 },
    /// Swallows everything it should relay.
    DropAll,
    /// Swallows relayed routing messages, forwards data untouched.
    DropRouting,
    /// Blackhole: answers overheard route requests with a fabricated
    /// zero-hop reply for `advertised_dest`, relays nothing, and swallows
    /// any data it attracts.
    FabricateRrep {
        advertised_dest: NodeAddress,
        fake_seq: SequenceNumber,
        fake_hops: u8,
    },
    /// Periodically claims to be `as_addr` in injected replies.
    SpoofOriginator { as_addr: NodeAddress },
}

/// What became of a message the adversary was asked to relay.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ForwardOutcome {
    /// Unchanged; pass it on.
    Pass(SecureEnvelope),
    /// Body rewritten, extension left stale.
    Tampered(SecureEnvelope),
    /// Relay suppressed, a fabricated message goes out instead.
    Replaced(SecureEnvelope),
    Swallowed,
}

impl AdversaryBehavior {
    pub fn is_honest(&self) -> bool {
        matches!(self, AdversaryBehavior::Honest)
    }

    /// Applies the behavior to a routing message the node is about to
    /// relay. Tampering keeps the (now stale) extension: the adversary
    /// has no key to re-sign with.
    pub fn apply_on_forward(&self, env: SecureEnvelope) -> ForwardOutcome {
        match self {
            AdversaryBehavior::Honest => ForwardOutcome::Pass(env),
            AdversaryBehavior::TamperHopCount { set_to } => {
                let mut env = env;
                match &mut env.body {
                    MessageBody::Rreq(m) => m.hop_count = *set_to,
                    MessageBody::Rrep(m) => m.hop_count = *set_to,
                    MessageBody::Rerr(_) => return ForwardOutcome::Pass(env),
                }
                ForwardOutcome::Tampered(env)
            }
            AdversaryBehavior::TamperSeq { delta } => {
                let mut env = env;
                let shift = |s: &mut SequenceNumber| {
                    s.0 = s.0.wrapping_add_signed(*delta as i32);
                };
                match &mut env.body {
                    MessageBody::Rreq(m) => {
                        shift(&mut m.dest_seq);
                        shift(&mut m.orig_seq);
                    }
                    MessageBody::Rrep(m) => shift(&mut m.dest_seq),
                    MessageBody::Rerr(m) => {
                        for (_, s) in m.unreachable.iter_mut() {
                            shift(s);
                        }
                    }
                }
                ForwardOutcome::Tampered(env)
            }
            AdversaryBehavior::DropAll | AdversaryBehavior::DropRouting => {
                ForwardOutcome::Swallowed
            }
            AdversaryBehavior::FabricateRrep {
                advertised_dest,
                fake_seq,
                fake_hops,
            } => {
                // Only route requests are worth answering; everything else
                // just disappears into the blackhole.
                if let MessageBody::Rreq(m) = &env.body {
                    let fake = RrepMessage {
                        flag_r: false,
                        flag_a: false,
                        prefix_sz: 0,
                        hop_count: *fake_hops,
                        dest_addr: *advertised_dest,
                        dest_seq: *fake_seq,
                        orig_addr: m.orig_addr,
                        lifetime_ms: 60_000,
                    };
                    ForwardOutcome::Replaced(SecureEnvelope {
                        body: MessageBody::Rrep(fake),
                        ext: None,
                    })
                } else {
                    ForwardOutcome::Swallowed
                }
            }
            AdversaryBehavior::SpoofOriginator { .. } => ForwardOutcome::Pass(env),
        }
    }

    /// Whether relayed data packets are swallowed.
    pub fn drops_data_forward(&self) -> bool {
        matches!(
            self,
            AdversaryBehavior::DropAll | AdversaryBehavior::FabricateRrep { .. }
        )
    }

    /// Unsolicited messages emitted on the adversary's injection timer.
    /// `round` increments per injection so spoofed state looks alive.
    pub fn inject(&self, round: u64) -> Vec<SecureEnvelope> {
        match self {
            AdversaryBehavior::FabricateRrep {
                advertised_dest,
                fake_seq,
                fake_hops,
            } => {
                let fake = RrepMessage {
                    flag_r: false,
                    flag_a: false,
                    prefix_sz: 0,
                    hop_count: *fake_hops,
                    dest_addr: *advertised_dest,
                    dest_seq: SequenceNumber(fake_seq.0.wrapping_add(round as u32)),
                    orig_addr: *advertised_dest,
                    lifetime_ms: 60_000,
                };
                vec![SecureEnvelope {
                    body: MessageBody::Rrep(fake),
                    ext: None,
                }]
            }
            AdversaryBehavior::SpoofOriginator { as_addr } => {
                // Claims adjacency as someone else. Receivers see a
                // non-HELLO reply (dest != link sender) and install a
                // route to the spoofed identity through the adversary.
                let fake = RrepMessage {
                    flag_r: false,
                    flag_a: false,
                    prefix_sz: 0,
                    hop_count: 0,
                    dest_addr: *as_addr,
                    dest_seq: SequenceNumber(1 + round as u32),
                    orig_addr: *as_addr,
                    lifetime_ms: 60_000,
                };
                vec![SecureEnvelope {
                    body: MessageBody::Rrep(fake),
                    ext: None,
                }]
            }
            _ => Vec::new(),
        }
    }

    /// Whether this behavior emits unsolicited messages.
    pub fn injects(&self) -> bool {
        matches!(
            self,
            AdversaryBehavior::FabricateRrep { .. } | AdversaryBehavior::SpoofOriginator { .. }
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::digest::{sign, HashFunctionId, SecretKey};
    use crate::wire::RreqMessage;

    fn env() -> SecureEnvelope {
        let body = MessageBody::Rreq(RreqMessage {
            flag_j: false,
            flag_r: false,
            flag_g: false,
            hop_count: 1,
            rreq_id: 4,
            dest_addr: NodeAddress(2),
            dest_seq: SequenceNumber(7),
            orig_addr: NodeAddress(1),
            orig_seq: SequenceNumber(3),
        });
        let key = SecretKey::new(b"k".to_vec()).unwrap();
        let ext = sign(&body, &key, HashFunctionId::Md5).unwrap();
        SecureEnvelope {
            body,
            ext: Some(ext),
        }
    }

    #[test]
    fn honest_is_identity() {
        let e = env();
        assert_eq!(
            AdversaryBehavior::Honest.apply_on_forward(e.clone()),
            ForwardOutcome::Pass(e)
        );
    }

    #[test]
    fn tamper_hop_count_rewrites_and_keeps_stale_extension() {
        let original = env();
        let behavior = AdversaryBehavior::TamperHopCount { set_to: 0 };
        match behavior.apply_on_forward(original.clone()) {
            ForwardOutcome::Tampered(t) => {
                match &t.body {
                    MessageBody::Rreq(m) => assert_eq!(m.hop_count, 0),
                    _ => unreachable!(),
                }
                assert_eq!(t.ext, original.ext); // stale digest survives
                let key = SecretKey::new(b"k".to_vec()).unwrap();
                assert!(crate::digest::verify(&t, &key).is_err());
            }
            other => panic!("expected tampered, got {other:?}"),
        }
    }

    #[test]
    fn tamper_seq_shifts_both_rreq_counters() {
        let behavior = AdversaryBehavior::TamperSeq { delta: 10 };
        match behavior.apply_on_forward(env()) {
            ForwardOutcome::Tampered(t) => match &t.body {
                MessageBody::Rreq(m) => {
                    assert_eq!(m.dest_seq, SequenceNumber(17));
                    assert_eq!(m.orig_seq, SequenceNumber(13));
                }
                _ => unreachable!(),
            },
            other => panic!("expected tampered, got {other:?}"),
        }
    }

    #[test]
    fn droppers_swallow_relayed_control() {
        assert_eq!(
            AdversaryBehavior::DropAll.apply_on_forward(env()),
            ForwardOutcome::Swallowed
        );
        assert_eq!(
            AdversaryBehavior::DropRouting.apply_on_forward(env()),
            ForwardOutcome::Swallowed
        );
        assert!(AdversaryBehavior::DropAll.drops_data_forward());
        assert!(!AdversaryBehavior::DropRouting.drops_data_forward());
    }

    #[test]
    fn fabricator_answers_rreq_with_keyless_zero_hop_reply() {
        let behavior = AdversaryBehavior::FabricateRrep {
            advertised_dest: NodeAddress(2),
            fake_seq: SequenceNumber(999),
            fake_hops: 0,
        };
        match behavior.apply_on_forward(env()) {
            ForwardOutcome::Replaced(fake) => {
                assert!(fake.ext.is_none());
                match &fake.body {
                    MessageBody::Rrep(m) => {
                        assert_eq!(m.dest_addr, NodeAddress(2));
                        assert_eq!(m.dest_seq, SequenceNumber(999));
                        assert_eq!(m.hop_count, 0);
                        assert_eq!(m.orig_addr, NodeAddress(1));
                    }
                    _ => unreachable!(),
                }
            }
            other => panic!("expected replacement, got {other:?}"),
        }
        assert!(behavior.drops_data_forward());
    }

    #[test]
    fn spoofer_injects_replies_claiming_foreign_identity() {
        let behavior = AdversaryBehavior::SpoofOriginator {
            as_addr: NodeAddress(7),
        };
        let injected = behavior.inject(0);
        assert_eq!(injected.len(), 1);
        match &injected[0].body {
            MessageBody::Rrep(m) => {
                assert_eq!(m.dest_addr, NodeAddress(7));
                assert_eq!(m.orig_addr, NodeAddress(7));
            }
            _ => unreachable!(),
        }
        assert!(injected[0].ext.is_none());
    }
}
