use std::collections::{BTreeMap, BTreeSet};
use std::net::{Ipv4Addr, SocketAddrV4};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::scheduler::Scheduler;
use super::sim::{NodeEvent, SimEvent, TimerTag};
use super::trace::{Annot, Layer, TraceEvent};
use super::{ChannelId, HostId, LanId, NetError, NodeId, TapId};

/// One hop inside a LAN.
pub const HOP_MS: u64 = 1;
/// Hops for traffic that leaves its LAN (router + internet).
pub const WAN_HOPS: u64 = 2;
const FIRST_EPHEMERAL_PORT: u16 = 40000;

#[derive(Debug, Clone)]
pub struct Lan {
    pub id: LanId,
    pub name: String,
    pub prefix: [u8; 3],
    pub nat: bool,
    pub internet: bool,
    pub up: bool,
    pub ssid: Option<String>,
    pub passphrase: Option<String>,
    pub hosts: Vec<HostId>,
    /// Hard-wired resolver used instead of global DNS by hosts that can only
    /// see this LAN.
    pub resolver: Option<BTreeMap<String, Ipv4Addr>>,
}

impl Lan {
    pub fn contains(&self, addr: Ipv4Addr) -> bool {
        addr.octets()[..3] == self.prefix
    }
}

#[derive(Debug, Clone)]
pub struct Host {
    pub id: HostId,
    pub name: String,
    pub owner: NodeId,
    pub interfaces: Vec<(LanId, Ipv4Addr)>,
    next_port: u16,
}

impl Host {
    pub fn addr_on(&self, lan: LanId) -> Option<Ipv4Addr> {
        self.interfaces
            .iter()
            .find(|(l, _)| *l == lan)
            .map(|(_, a)| *a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelEnd {
    pub host: HostId,
    pub addr: SocketAddrV4,
    pub lan: LanId,
}

#[derive(Debug, Clone)]
pub struct Channel {
    pub id: ChannelId,
    /// Initiator.
    pub a: ChannelEnd,
    /// Acceptor.
    pub b: ChannelEnd,
    pub secured: bool,
    pub sni: Option<String>,
    pub latency_ms: u64,
    pub open: bool,
}

impl Channel {
    pub fn hops(&self) -> u64 {
        self.latency_ms / HOP_MS
    }

    fn ends_from(&self, host: HostId) -> Option<(ChannelEnd, ChannelEnd)> {
        if self.a.host == host {
            Some((self.a, self.b))
        } else if self.b.host == host {
            Some((self.b, self.a))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TapTarget {
    Lan(LanId),
    Channel(ChannelId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub tap: TapId,
    pub t_ms: u64,
    pub src: SocketAddrV4,
    pub dst: SocketAddrV4,
    pub lan: String,
    pub secured: bool,
    pub len: usize,
    /// Absent for secured channels.
    pub payload: Option<Vec<u8>>,
}

#[derive(Debug, Clone)]
struct Tap {
    target: TapTarget,
    observer: HostId,
    log: Vec<Observation>,
}

#[derive(Debug, Clone)]
pub struct PairingNetwork {
    pub ssid: String,
    pub lan: LanId,
    pub owner: HostId,
    pub device_addr: Ipv4Addr,
    pub resolver: BTreeMap<String, Ipv4Addr>,
    pub clients: Vec<HostId>,
    pub announced: bool,
    pub up: bool,
}

#[derive(Debug, Clone, Copy)]
struct Route {
    src: Ipv4Addr,
    src_lan: LanId,
    dst_host: HostId,
    dst_lan: LanId,
    latency_ms: u64,
}

/// The virtual network: LANs, hosts, channels, datagrams, taps, name
/// resolution, the event queue and the trace.
pub struct Net {
    pub(crate) sched: Scheduler<SimEvent>,
    rng: ChaCha20Rng,
    seed: u64,
    lans: Vec<Lan>,
    hosts: Vec<Host>,
    addrs: BTreeMap<Ipv4Addr, HostId>,
    listeners: BTreeSet<(HostId, u16)>,
    bound: BTreeSet<(HostId, u16)>,
    channels: BTreeMap<ChannelId, Channel>,
    next_channel: u64,
    nat_mappings: BTreeSet<(HostId, Ipv4Addr)>,
    dns: BTreeMap<String, Ipv4Addr>,
    pairing: BTreeMap<String, PairingNetwork>,
    taps: Vec<Tap>,
    trace: Vec<TraceEvent>,
    pub(crate) current: Option<NodeId>,
}

impl Net {
    pub fn new(seed: u64) -> Self {
        Net {
            sched: Scheduler::new(),
            rng: ChaCha20Rng::seed_from_u64(seed),
            seed,
            lans: Vec::new(),
            hosts: Vec::new(),
            addrs: BTreeMap::new(),
            listeners: BTreeSet::new(),
            bound: BTreeSet::new(),
            channels: BTreeMap::new(),
            next_channel: 1,
            nat_mappings: BTreeSet::new(),
            dns: BTreeMap::new(),
            pairing: BTreeMap::new(),
            taps: Vec::new(),
            trace: Vec::new(),
            current: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The single randomness source for everything running on this fabric.
    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }

    pub fn now(&self) -> u64 {
        self.sched.now()
    }

    pub fn now_secs(&self) -> u64 {
        self.sched.now() / 1000
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    // ---- topology

    pub fn create_lan(
        &mut self,
        name: &str,
        prefix: &str,
        nat: bool,
        internet: bool,
    ) -> Result<LanId, NetError> {
        let prefix = parse_prefix(prefix)?;
        if self.lans.iter().any(|l| l.up && l.prefix == prefix) {
            return Err(NetError::PrefixCollision(fmt_prefix(prefix)));
        }
        if self.lans.iter().any(|l| l.up && l.name == name) {
            return Err(NetError::DuplicateName(name.to_string()));
        }
        let id = LanId(self.lans.len() as u32);
        self.lans.push(Lan {
            id,
            name: name.to_string(),
            prefix,
            nat,
            internet,
            up: true,
            ssid: None,
            passphrase: None,
            hosts: Vec::new(),
            resolver: None,
        });
        Ok(id)
    }

    pub fn set_wifi(&mut self, lan: LanId, ssid: &str, passphrase: Option<&str>) {
        let l = &mut self.lans[lan.0 as usize];
        l.ssid = Some(ssid.to_string());
        l.passphrase = passphrase.map(str::to_string);
    }

    pub fn lan(&self, id: LanId) -> &Lan {
        &self.lans[id.0 as usize]
    }

    pub fn lans(&self) -> impl Iterator<Item = &Lan> {
        self.lans.iter().filter(|l| l.up)
    }

    pub fn lan_by_name(&self, name: &str) -> Option<LanId> {
        self.lans().find(|l| l.name == name).map(|l| l.id)
    }

    pub fn lan_by_ssid(&self, ssid: &str) -> Option<LanId> {
        self.lans()
            .find(|l| l.ssid.as_deref() == Some(ssid))
            .map(|l| l.id)
    }

    pub fn add_host(&mut self, name: &str, owner: NodeId) -> HostId {
        let id = HostId(self.hosts.len() as u32);
        self.hosts.push(Host {
            id,
            name: name.to_string(),
            owner,
            interfaces: Vec::new(),
            next_port: FIRST_EPHEMERAL_PORT,
        });
        id
    }

    pub fn host(&self, id: HostId) -> &Host {
        &self.hosts[id.0 as usize]
    }

    pub fn host_by_addr(&self, addr: Ipv4Addr) -> Option<HostId> {
        self.addrs.get(&addr).copied()
    }

    /// Attaches at the lowest free address (.2 upward; .1 is reserved).
    pub fn attach(&mut self, host: HostId, lan: LanId) -> Result<Ipv4Addr, NetError> {
        let p = self.lan(lan).prefix;
        let octet = (2..=254u8)
            .find(|o| {
                !self
                    .addrs
                    .contains_key(&Ipv4Addr::new(p[0], p[1], p[2], *o))
            })
            .ok_or(NetError::AddressExhausted)?;
        self.attach_at(host, lan, Ipv4Addr::new(p[0], p[1], p[2], octet))
    }

    pub fn attach_at(
        &mut self,
        host: HostId,
        lan: LanId,
        addr: Ipv4Addr,
    ) -> Result<Ipv4Addr, NetError> {
        let l = self.lan(lan);
        if !l.up {
            return Err(NetError::UnknownLan);
        }
        if !l.contains(addr) {
            return Err(NetError::AddressOutsidePrefix(addr));
        }
        if self.host(host).addr_on(lan).is_some() {
            return Err(NetError::AlreadyAttached);
        }
        if self.addrs.contains_key(&addr) {
            return Err(NetError::AddressInUse(addr));
        }
        self.addrs.insert(addr, host);
        self.hosts[host.0 as usize].interfaces.push((lan, addr));
        self.lans[lan.0 as usize].hosts.push(host);
        Ok(addr)
    }

    /// Removes the interface and closes every channel that used it.
    pub fn detach(&mut self, host: HostId, lan: LanId) -> Result<(), NetError> {
        let addr = self.host(host).addr_on(lan).ok_or(NetError::NotAttached)?;
        self.addrs.remove(&addr);
        self.hosts[host.0 as usize]
            .interfaces
            .retain(|(l, _)| *l != lan);
        self.lans[lan.0 as usize].hosts.retain(|h| *h != host);
        let doomed: Vec<ChannelId> = self
            .channels
            .values()
            .filter(|c| c.open && (*c.a.addr.ip() == addr || *c.b.addr.ip() == addr))
            .map(|c| c.id)
            .collect();
        for id in doomed {
            self.close_both(id);
        }
        Ok(())
    }

    /// First interface on an up, internet-connected LAN.
    pub fn internet_addr(&self, host: HostId) -> Option<Ipv4Addr> {
        self.host(host)
            .interfaces
            .iter()
            .find(|(l, _)| {
                let lan = self.lan(*l);
                lan.up && lan.internet
            })
            .map(|(_, a)| *a)
    }

    pub fn lan_of(&self, addr: Ipv4Addr) -> Option<LanId> {
        let host = self.addrs.get(&addr)?;
        self.host(*host)
            .interfaces
            .iter()
            .find(|(_, a)| *a == addr)
            .map(|(l, _)| *l)
    }

    pub fn lan_name(&self, addr: Ipv4Addr) -> String {
        self.lan_of(addr)
            .map(|l| self.lan(l).name.clone())
            .unwrap_or_else(|| "-".to_string())
    }

    pub fn ephemeral_port(&mut self, host: HostId) -> u16 {
        let h = &mut self.hosts[host.0 as usize];
        let p = h.next_port;
        h.next_port = h.next_port.checked_add(1).unwrap_or(FIRST_EPHEMERAL_PORT);
        p
    }

    // ---- name resolution

    pub fn dns_register(&mut self, name: &str, addr: Ipv4Addr) {
        self.dns.insert(name.to_ascii_lowercase(), addr);
    }

    /// Resolves `name` for `host`. Hosts without an internet-connected
    /// interface use the resolver of a LAN they sit on, if it has one.
    pub fn resolve(&mut self, host: HostId, name: &str) -> Option<Ipv4Addr> {
        let name = name.to_ascii_lowercase();
        let answer = if self.internet_addr(host).is_some() {
            self.dns.get(&name).copied()
        } else {
            self.host(host)
                .interfaces
                .iter()
                .find_map(|(l, _)| self.lan(*l).resolver.as_ref())
                .and_then(|r| r.get(&name).copied())
        };
        let summary = match answer {
            Some(a) => format!("dns {name} -> {a}"),
            None => format!("dns {name} -> NXDOMAIN"),
        };
        self.note(host, Layer::Sys, summary);
        answer
    }

    // ---- reachability

    fn route(&self, from: HostId, to: Ipv4Addr) -> Result<Route, NetError> {
        let dst_host = *self.addrs.get(&to).ok_or(NetError::Unreachable(to))?;
        let dst_lan = self.lan_of(to).ok_or(NetError::Unreachable(to))?;
        if !self.lan(dst_lan).up {
            return Err(NetError::Unreachable(to));
        }
        if let Some(src) = self.host(from).addr_on(dst_lan) {
            return Ok(Route {
                src,
                src_lan: dst_lan,
                dst_host,
                dst_lan,
                latency_ms: HOP_MS,
            });
        }
        let src = self.internet_addr(from).ok_or(NetError::Unreachable(to))?;
        let src_lan = self.lan_of(src).expect("interface address is indexed");
        let dl = self.lan(dst_lan);
        if !dl.internet {
            return Err(NetError::Unreachable(to));
        }
        if dl.nat && !self.nat_mappings.contains(&(dst_host, src)) {
            return Err(NetError::Unreachable(to));
        }
        Ok(Route {
            src,
            src_lan,
            dst_host,
            dst_lan,
            latency_ms: WAN_HOPS * HOP_MS,
        })
    }

    fn record_mapping(&mut self, from: HostId, r: &Route, to: Ipv4Addr) {
        if r.src_lan != r.dst_lan && self.lan(r.src_lan).nat {
            self.nat_mappings.insert((from, to));
        }
    }

    /// Side-effect-free reachability check (no NAT mapping is created).
    pub fn reachable(&self, from: HostId, to: Ipv4Addr) -> bool {
        self.route(from, to).is_ok()
    }

    /// Reachable in both directions between `from` and whoever owns `to`.
    pub fn mutually_reachable(&self, from: HostId, to: Ipv4Addr) -> bool {
        let Ok(r) = self.route(from, to) else {
            return false;
        };
        self.reachable(r.dst_host, r.src)
    }

    // ---- streams

    pub fn listen(&mut self, host: HostId, port: u16) {
        self.listeners.insert((host, port));
    }

    pub fn unlisten(&mut self, host: HostId, port: u16) {
        self.listeners.remove(&(host, port));
    }

    pub fn connect(
        &mut self,
        from: HostId,
        to: SocketAddrV4,
        secured: bool,
        sni: Option<&str>,
    ) -> Result<ChannelId, NetError> {
        let route = self.route(from, *to.ip())?;
        if !self.listeners.contains(&(route.dst_host, to.port())) {
            return Err(NetError::Refused(to));
        }
        self.record_mapping(from, &route, *to.ip());
        let id = ChannelId(self.next_channel);
        self.next_channel += 1;
        let src = SocketAddrV4::new(route.src, self.ephemeral_port(from));
        let ch = Channel {
            id,
            a: ChannelEnd {
                host: from,
                addr: src,
                lan: route.src_lan,
            },
            b: ChannelEnd {
                host: route.dst_host,
                addr: to,
                lan: route.dst_lan,
            },
            secured,
            sni: sni.map(str::to_string),
            latency_ms: route.latency_ms,
            open: true,
        };
        let summary = match sni {
            Some(n) => format!("connect {n}"),
            None => "connect".to_string(),
        };
        self.push_trace(
            self.endpoint_label(from, src),
            self.endpoint_label(route.dst_host, to),
            self.lan(route.dst_lan).name.clone(),
            secured,
            Annot::new(Layer::Sys, summary),
            None,
        );
        let owner = self.host(route.dst_host).owner;
        self.sched.schedule_in(
            route.latency_ms,
            SimEvent::Node {
                node: owner,
                event: NodeEvent::Accepted {
                    chan: id,
                    host: route.dst_host,
                    local_port: to.port(),
                    peer: src,
                    secured,
                    sni: ch.sni.clone(),
                },
            },
        );
        self.channels.insert(id, ch);
        Ok(id)
    }

    pub fn channel(&self, id: ChannelId) -> Option<&Channel> {
        self.channels.get(&id)
    }

    pub fn is_open(&self, id: ChannelId) -> bool {
        self.channels.get(&id).is_some_and(|c| c.open)
    }

    /// Remote address of `chan` as seen from `host`.
    pub fn peer_addr(&self, chan: ChannelId, host: HostId) -> Option<SocketAddrV4> {
        let (_, theirs) = self.channels.get(&chan)?.ends_from(host)?;
        Some(theirs.addr)
    }

    pub fn local_addr(&self, chan: ChannelId, host: HostId) -> Option<SocketAddrV4> {
        let (mine, _) = self.channels.get(&chan)?.ends_from(host)?;
        Some(mine.addr)
    }

    pub fn send(
        &mut self,
        chan: ChannelId,
        from: HostId,
        bytes: Vec<u8>,
        annot: Annot,
    ) -> Result<(), NetError> {
        let ch = self.channels.get(&chan).ok_or(NetError::UnknownChannel)?;
        if !ch.open {
            return Err(NetError::ChannelClosed);
        }
        let (mine, theirs) = ch.ends_from(from).ok_or(NetError::UnknownChannel)?;
        let (secured, latency) = (ch.secured, ch.latency_ms);
        let lan = self.lan(theirs.lan).name.clone();
        let payload = (!secured).then(|| bytes.clone());
        self.push_trace(
            self.endpoint_label(from, mine.addr),
            self.endpoint_label(theirs.host, theirs.addr),
            lan.clone(),
            secured,
            annot.clone(),
            payload,
        );
        self.observe(
            Some(chan),
            &[mine.lan, theirs.lan],
            mine.addr,
            theirs.addr,
            &lan,
            secured,
            &bytes,
            latency,
        );
        let owner = self.host(theirs.host).owner;
        self.sched.schedule_in(
            latency,
            SimEvent::Node {
                node: owner,
                event: NodeEvent::Message {
                    chan,
                    host: theirs.host,
                    bytes,
                    annot,
                },
            },
        );
        Ok(())
    }

    /// Closes the channel; the peer sees `Closed` after in-flight messages.
    pub fn close(&mut self, chan: ChannelId, from: HostId) {
        let Some(ch) = self.channels.get_mut(&chan) else {
            return;
        };
        if !ch.open {
            return;
        }
        ch.open = false;
        let Some((mine, theirs)) = ch.ends_from(from) else {
            return;
        };
        let latency = ch.latency_ms;
        let secured = ch.secured;
        self.push_trace(
            self.endpoint_label(from, mine.addr),
            self.endpoint_label(theirs.host, theirs.addr),
            self.lan(theirs.lan).name.clone(),
            secured,
            Annot::new(Layer::Sys, "close"),
            None,
        );
        let owner = self.host(theirs.host).owner;
        self.sched.schedule_in(
            latency,
            SimEvent::Node {
                node: owner,
                event: NodeEvent::Closed {
                    chan,
                    host: theirs.host,
                },
            },
        );
    }

    fn close_both(&mut self, chan: ChannelId) {
        let Some(ch) = self.channels.get_mut(&chan) else {
            return;
        };
        if !ch.open {
            return;
        }
        ch.open = false;
        let (a, b, latency) = (ch.a, ch.b, ch.latency_ms);
        for end in [a, b] {
            let owner = self.host(end.host).owner;
            self.sched.schedule_in(
                latency,
                SimEvent::Node {
                    node: owner,
                    event: NodeEvent::Closed {
                        chan,
                        host: end.host,
                    },
                },
            );
        }
    }

    // ---- datagrams

    pub fn bind(&mut self, host: HostId, port: u16) -> Result<(), NetError> {
        if !self.bound.insert((host, port)) {
            return Err(NetError::PortInUse(port));
        }
        Ok(())
    }

    pub fn unbind(&mut self, host: HostId, port: u16) {
        self.bound.remove(&(host, port));
    }

    /// Sends one datagram. Returns the delivery latency. Datagrams to an
    /// unbound port are traced and dropped.
    pub fn send_datagram(
        &mut self,
        from: HostId,
        from_port: u16,
        to: SocketAddrV4,
        bytes: Vec<u8>,
        annot: Annot,
    ) -> Result<u64, NetError> {
        self.send_datagram_after(from, from_port, to, bytes, annot, 0)
    }

    /// Like `send_datagram` with an extra processing delay before the packet
    /// leaves the host (used by the media relay).
    pub fn send_datagram_after(
        &mut self,
        from: HostId,
        from_port: u16,
        to: SocketAddrV4,
        bytes: Vec<u8>,
        annot: Annot,
        extra_ms: u64,
    ) -> Result<u64, NetError> {
        let route = self.route(from, *to.ip())?;
        self.record_mapping(from, &route, *to.ip());
        let src = SocketAddrV4::new(route.src, from_port);
        let lan = self.lan(route.dst_lan).name.clone();
        let latency = route.latency_ms + extra_ms;
        self.push_trace(
            self.endpoint_label(from, src),
            self.endpoint_label(route.dst_host, to),
            lan.clone(),
            false,
            annot.clone(),
            Some(bytes.clone()),
        );
        self.observe(
            None,
            &[route.src_lan, route.dst_lan],
            src,
            to,
            &lan,
            false,
            &bytes,
            latency,
        );
        if self.bound.contains(&(route.dst_host, to.port())) {
            let owner = self.host(route.dst_host).owner;
            self.sched.schedule_in(
                latency,
                SimEvent::Node {
                    node: owner,
                    event: NodeEvent::Datagram {
                        host: route.dst_host,
                        local_port: to.port(),
                        from: src,
                        bytes,
                        annot,
                    },
                },
            );
        }
        Ok(latency)
    }

    // ---- timers and notes

    pub fn set_timer(&mut self, delay_ms: u64, tag: TimerTag) {
        let node = self
            .current
            .expect("timers are set from inside a node handler");
        self.set_timer_for(node, delay_ms, tag);
    }

    pub fn set_timer_for(&mut self, node: NodeId, delay_ms: u64, tag: TimerTag) {
        self.sched.schedule_in(
            delay_ms,
            SimEvent::Node {
                node,
                event: NodeEvent::Timer(tag),
            },
        );
    }

    /// Records a local (non-network) event, e.g. a state change.
    pub fn note(&mut self, host: HostId, layer: Layer, summary: impl Into<String>) {
        let h = self.host(host);
        let label = h.name.clone();
        let lan = h
            .interfaces
            .first()
            .map(|(l, _)| self.lan(*l).name.clone())
            .unwrap_or_else(|| "-".to_string());
        self.push_trace(
            label.clone(),
            label,
            lan,
            true,
            Annot::new(layer, summary),
            None,
        );
    }

    fn endpoint_label(&self, host: HostId, addr: SocketAddrV4) -> String {
        format!("{}@{}", self.host(host).name, addr)
    }

    fn push_trace(
        &mut self,
        src: String,
        dst: String,
        lan: String,
        secured: bool,
        annot: Annot,
        payload: Option<Vec<u8>>,
    ) {
        let seq = self.trace.len() as u64;
        self.trace.push(TraceEvent {
            seq,
            t_ms: self.sched.now(),
            src,
            dst,
            lan,
            secured,
            layer: annot.layer,
            summary: annot.summary,
            payload: if secured { None } else { payload },
        });
    }

    // ---- taps

    pub fn tap_lan(&mut self, lan: LanId, observer: HostId) -> Result<TapId, NetError> {
        if self.host(observer).addr_on(lan).is_none() {
            return Err(NetError::NotOnLan);
        }
        Ok(self.add_tap(TapTarget::Lan(lan), observer))
    }

    /// Taps one channel; the observer must share a LAN with either end.
    pub fn tap_channel(&mut self, chan: ChannelId, observer: HostId) -> Result<TapId, NetError> {
        let ch = self.channels.get(&chan).ok_or(NetError::UnknownChannel)?;
        let (la, lb) = (ch.a.lan, ch.b.lan);
        let h = self.host(observer);
        if h.addr_on(la).is_none() && h.addr_on(lb).is_none() {
            return Err(NetError::NotOnLan);
        }
        Ok(self.add_tap(TapTarget::Channel(chan), observer))
    }

    fn add_tap(&mut self, target: TapTarget, observer: HostId) -> TapId {
        self.taps.push(Tap {
            target,
            observer,
            log: Vec::new(),
        });
        TapId(self.taps.len() as u32 - 1)
    }

    pub fn observations(&self, tap: TapId) -> &[Observation] {
        &self.taps[tap.0 as usize].log
    }

    #[allow(clippy::too_many_arguments)]
    fn observe(
        &mut self,
        chan: Option<ChannelId>,
        lans: &[LanId],
        src: SocketAddrV4,
        dst: SocketAddrV4,
        lan_name: &str,
        secured: bool,
        bytes: &[u8],
        latency: u64,
    ) {
        let now = self.sched.now();
        let mut deliveries = Vec::new();
        for (i, tap) in self.taps.iter_mut().enumerate() {
            let hit = match tap.target {
                TapTarget::Lan(l) => lans.contains(&l),
                TapTarget::Channel(c) => Some(c) == chan,
            };
            if !hit {
                continue;
            }
            let obs = Observation {
                tap: TapId(i as u32),
                t_ms: now,
                src,
                dst,
                lan: lan_name.to_string(),
                secured,
                len: bytes.len(),
                payload: (!secured).then(|| bytes.to_vec()),
            };
            tap.log.push(obs.clone());
            deliveries.push((tap.observer, obs));
        }
        for (observer, obs) in deliveries {
            let owner = self.host(observer).owner;
            self.sched.schedule_in(
                latency,
                SimEvent::Node {
                    node: owner,
                    event: NodeEvent::Tap(obs),
                },
            );
        }
    }

    // ---- pairing networks

    /// Brings up an open, non-internet LAN named after `ssid`, with the owner
    /// at the well-known `device_addr` and `resolver` answering names.
    pub fn create_pairing_network(
        &mut self,
        owner: HostId,
        ssid: &str,
        device_addr: Ipv4Addr,
        resolver: BTreeMap<String, Ipv4Addr>,
    ) -> Result<LanId, NetError> {
        if self.pairing.get(ssid).is_some_and(|p| p.up) {
            return Err(NetError::DuplicateName(ssid.to_string()));
        }
        let o = device_addr.octets();
        let lan = self.create_lan(
            &format!("pairing:{ssid}"),
            &format!("{}.{}.{}", o[0], o[1], o[2]),
            false,
            false,
        )?;
        self.lans[lan.0 as usize].ssid = Some(ssid.to_string());
        self.lans[lan.0 as usize].resolver = Some(resolver.clone());
        self.attach_at(owner, lan, device_addr)?;
        self.pairing.insert(
            ssid.to_string(),
            PairingNetwork {
                ssid: ssid.to_string(),
                lan,
                owner,
                device_addr,
                resolver,
                clients: Vec::new(),
                announced: false,
                up: true,
            },
        );
        self.note(
            owner,
            Layer::Sys,
            format!("pairing network {ssid} up at {device_addr}"),
        );
        Ok(lan)
    }

    pub fn pairing_network(&self, ssid: &str) -> Option<&PairingNetwork> {
        self.pairing.get(ssid)
    }

    /// Joins a client; the first join of a network triggers one announcement.
    pub fn join_pairing(&mut self, client: HostId, ssid: &str) -> Result<Ipv4Addr, NetError> {
        let p = self
            .pairing
            .get(ssid)
            .ok_or_else(|| NetError::WrongSsid(ssid.to_string()))?;
        if !p.up {
            return Err(NetError::TornDown(ssid.to_string()));
        }
        let (lan, owner) = (p.lan, p.owner);
        let addr = self.attach(client, lan)?;
        let p = self.pairing.get_mut(ssid).unwrap();
        p.clients.push(client);
        let first = !p.announced;
        p.announced = true;
        self.note(client, Layer::Sys, format!("join {ssid} as {addr}"));
        if first {
            self.note(owner, Layer::Sys, "announce: pairing client connected");
        }
        Ok(addr)
    }

    pub fn teardown_pairing(&mut self, ssid: &str) -> Result<(), NetError> {
        let p = self
            .pairing
            .get_mut(ssid)
            .ok_or_else(|| NetError::WrongSsid(ssid.to_string()))?;
        if !p.up {
            return Err(NetError::TornDown(ssid.to_string()));
        }
        p.up = false;
        let lan = p.lan;
        let owner = p.owner;
        let members: Vec<HostId> = self.lan(lan).hosts.clone();
        for h in members {
            self.detach(h, lan)?;
        }
        self.lans[lan.0 as usize].up = false;
        self.note(owner, Layer::Sys, format!("pairing network {ssid} down"));
        Ok(())
    }
}

fn parse_prefix(s: &str) -> Result<[u8; 3], NetError> {
    let bad = || NetError::BadPrefix(s.to_string());
    let s = s.strip_suffix("/24").unwrap_or(s);
    let parts: Vec<&str> = s.split('.').collect();
    let parts = match parts.as_slice() {
        [a, b, c] => [*a, *b, *c],
        [a, b, c, "0"] => [*a, *b, *c],
        _ => return Err(bad()),
    };
    let mut out = [0u8; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| bad())?;
    }
    Ok(out)
}

fn fmt_prefix(p: [u8; 3]) -> String {
    format!("{}.{}.{}.0/24", p[0], p[1], p[2])
}
