use std::collections::BTreeMap;
use std::net::SocketAddrV4;

use rand::{Rng, RngCore};

use crate::crypto::{srtp_derive, SrtpContext};
use crate::netsim::{Annot, ChannelId, HostId, Layer, Net};
use crate::transport::send_sip;
use crate::wire::{
    sdp_decode, sdp_encode, sip_parse, Candidate, CandidateKind, CryptoAttr, Method, SdpBody,
    SipMessage,
};

const RELAY_PORT_BASE: u16 = 50000;
/// Forwarding delay inside the relay.
pub const RELAY_PROCESSING_MS: u64 = 1;
const GATEWAY_MEDIA_BASE: u16 = 40000;

#[derive(Debug, Clone, Default)]
pub struct RelayAllocation {
    pub call_id: String,
    pub peers: Vec<SocketAddrV4>,
    pub forwarded: u64,
    pub dropped: u64,
    buffered: Vec<(SocketAddrV4, Vec<u8>, Annot)>,
}

/// Media relay: pairs the first two sources on a port and forwards their
/// packets to each other unchanged. It never holds keys.
pub struct Relay {
    pub host: HostId,
    next_port: u16,
    pub allocations: BTreeMap<u16, RelayAllocation>,
}

impl Relay {
    pub fn new(host: HostId) -> Self {
        Relay {
            host,
            next_port: RELAY_PORT_BASE,
            allocations: BTreeMap::new(),
        }
    }

    /// Reserves a fresh port for one call.
    pub fn allocate(&mut self, net: &mut Net, call_id: &str) -> SocketAddrV4 {
        let addr = net
            .internet_addr(self.host)
            .expect("relay is on the cloud LAN");
        loop {
            let port = self.next_port;
            self.next_port += 1;
            if net.bind(self.host, port).is_ok() {
                self.allocations.insert(
                    port,
                    RelayAllocation {
                        call_id: call_id.to_string(),
                        ..Default::default()
                    },
                );
                net.note(
                    self.host,
                    Layer::Sys,
                    format!("relay allocated {addr}:{port} for {call_id}"),
                );
                return SocketAddrV4::new(addr, port);
            }
        }
    }

    pub fn on_datagram(
        &mut self,
        net: &mut Net,
        port: u16,
        from: SocketAddrV4,
        bytes: Vec<u8>,
        annot: Annot,
    ) {
        let host = self.host;
        let Some(a) = self.allocations.get_mut(&port) else {
            return;
        };
        if !a.peers.contains(&from) {
            if a.peers.len() >= 2 {
                a.dropped += 1;
                return;
            }
            a.peers.push(from);
        }
        let Some(&to) = a.peers.iter().find(|p| **p != from) else {
            a.buffered.push((from, bytes, annot));
            return;
        };
        let mut queue = std::mem::take(&mut a.buffered);
        queue.push((from, bytes, annot));
        for (src, b, an) in queue {
            let dst = if src == to { from } else { to };
            let summary = an.summary.replacen("srtp", "relay", 1);
            if net
                .send_datagram_after(
                    host,
                    port,
                    dst,
                    b,
                    Annot::new(Layer::Media, summary),
                    RELAY_PROCESSING_MS,
                )
                .is_ok()
            {
                a.forwarded += 1;
            } else {
                a.dropped += 1;
            }
        }
    }
}

#[derive(Debug)]
pub struct GatewayCall {
    pub call_id: String,
    pub chan: ChannelId,
    pub media_port: u16,
    pub received: u32,
    pub rejected: u32,
    recv: Option<SrtpContext>,
}

/// Terminating stub for phone numbers: answers every INVITE and sinks media.
pub struct Gateway {
    pub host: HostId,
    next_port: u16,
    pub calls: BTreeMap<String, GatewayCall>,
}

impl Gateway {
    pub fn new(host: HostId) -> Self {
        Gateway {
            host,
            next_port: GATEWAY_MEDIA_BASE,
            calls: BTreeMap::new(),
        }
    }

    pub fn on_message(&mut self, net: &mut Net, chan: ChannelId, bytes: &[u8]) {
        let Ok(msg) = sip_parse(bytes) else { return };
        match msg.method() {
            Some(Method::Invite) => self.answer(net, chan, &msg),
            Some(Method::Bye) => {
                let ok = SipMessage::response_to(&msg, 200).with_header("Content-Length", "0");
                let _ = send_sip(net, chan, self.host, &ok);
                if let Some(c) = self.calls.get_mut(msg.call_id()) {
                    c.recv = None;
                    net.unbind(self.host, c.media_port);
                }
            }
            Some(Method::Cancel) => {
                let ok = SipMessage::response_to(&msg, 200).with_header("Content-Length", "0");
                let _ = send_sip(net, chan, self.host, &ok);
            }
            _ => {}
        }
    }

    fn answer(&mut self, net: &mut Net, chan: ChannelId, invite: &SipMessage) {
        let Ok(offer) = sdp_decode(&invite.body) else {
            let r = SipMessage::response_to(invite, 403).with_header("Content-Length", "0");
            let _ = send_sip(net, chan, self.host, &r);
            return;
        };
        let addr = net
            .internet_addr(self.host)
            .expect("gateway is on the cloud LAN");
        let port = loop {
            let p = self.next_port;
            self.next_port += 2;
            if net.bind(self.host, p).is_ok() {
                break p;
            }
        };
        let rng = net.rng();
        let mut key = [0u8; 32];
        let mut salt = [0u8; 14];
        rng.fill_bytes(&mut key);
        rng.fill_bytes(&mut salt);
        let answer = SdpBody {
            session_id: rng.gen_range(1..u64::from(u32::MAX)),
            address: addr,
            media_port: port,
            ssrc: rng.gen(),
            candidates: vec![Candidate {
                kind: CandidateKind::Host,
                address: addr,
                port,
            }],
            crypto: CryptoAttr::new(&key, &salt),
        };
        let recv = offer
            .crypto
            .split()
            .ok()
            .and_then(|(k, s)| srtp_derive(&k, &s, offer.ssrc).ok());
        self.calls.insert(
            invite.call_id().to_string(),
            GatewayCall {
                call_id: invite.call_id().to_string(),
                chan,
                media_port: port,
                received: 0,
                rejected: 0,
                recv,
            },
        );
        let mut ok = SipMessage::response_to(invite, 200);
        let to = format!("{};tag=gw{port}", invite.header("To").unwrap_or_default());
        ok.headers.set("To", to);
        let ok = ok.with_sdp(sdp_encode(&answer).expect("valid SDP"));
        let _ = send_sip(net, chan, self.host, &ok);
    }

    pub fn on_datagram(&mut self, port: u16, bytes: &[u8]) {
        let Some(c) = self.calls.values_mut().find(|c| c.media_port == port) else {
            return;
        };
        match c.recv.as_mut().map(|r| r.unprotect(bytes)) {
            Some(Ok(_)) => c.received += 1,
            _ => c.rejected += 1,
        }
    }
}
