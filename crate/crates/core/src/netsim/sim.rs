use std::any::Any;
use std::collections::BTreeMap;
use std::net::SocketAddrV4;

use serde_json::Value;

use super::fabric::{Net, Observation};
use super::trace::Annot;
use super::{ChannelId, HostId, NetError, NodeId};

pub type TimerTag = String;

/// A scripted stimulus (a user gesture, an utterance, an attacker step).
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub name: String,
    pub args: Value,
}

impl Action {
    pub fn new(name: &str, args: Value) -> Self {
        Action {
            name: name.to_string(),
            args,
        }
    }

    pub fn arg_str(&self, key: &str) -> Option<&str> {
        self.args.get(key).and_then(Value::as_str)
    }
}

#[derive(Debug, Clone)]
pub enum NodeEvent {
    Accepted {
        chan: ChannelId,
        host: HostId,
        local_port: u16,
        peer: SocketAddrV4,
        secured: bool,
        sni: Option<String>,
    },
    Message {
        chan: ChannelId,
        host: HostId,
        bytes: Vec<u8>,
        annot: Annot,
    },
    Closed {
        chan: ChannelId,
        host: HostId,
    },
    Datagram {
        host: HostId,
        local_port: u16,
        from: SocketAddrV4,
        bytes: Vec<u8>,
        annot: Annot,
    },
    Timer(TimerTag),
    Action(Action),
    Tap(Observation),
}

pub type FabricHook = Box<dyn FnOnce(&mut Net)>;

pub(crate) enum SimEvent {
    Node { node: NodeId, event: NodeEvent },
    Fabric(FabricHook),
}

/// Behaviour attached to one or more hosts.
pub trait Node: Any {
    fn handle(&mut self, net: &mut Net, event: NodeEvent);
    fn as_any(&self) -> &dyn Any;
    fn as_any_mut(&mut self) -> &mut dyn Any;
}

/// Implements the `Any` plumbing of [`Node`] for a concrete type.
#[macro_export]
macro_rules! node_any {
    () => {
        fn as_any(&self) -> &dyn ::std::any::Any {
            self
        }
        fn as_any_mut(&mut self) -> &mut dyn ::std::any::Any {
            self
        }
    };
}

/// The fabric plus the nodes that run on it.
pub struct Sim {
    pub net: Net,
    nodes: Vec<Option<Box<dyn Node>>>,
    names: BTreeMap<String, NodeId>,
}

impl Sim {
    pub fn new(seed: u64) -> Self {
        Sim {
            net: Net::new(seed),
            nodes: Vec::new(),
            names: BTreeMap::new(),
        }
    }

    /// Adds a node. `build` receives the fabric and the new id so it can
    /// create hosts owned by the node.
    pub fn add_node<F>(&mut self, name: &str, build: F) -> Result<NodeId, NetError>
    where
        F: FnOnce(&mut Net, NodeId) -> Result<Box<dyn Node>, NetError>,
    {
        if self.names.contains_key(name) {
            return Err(NetError::DuplicateName(name.to_string()));
        }
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(None);
        let prev = self.net.current.replace(id);
        let node = build(&mut self.net, id);
        self.net.current = prev;
        match node {
            Ok(n) => {
                self.nodes[id.0 as usize] = Some(n);
                self.names.insert(name.to_string(), id);
                Ok(id)
            }
            Err(e) => {
                self.nodes.pop();
                Err(e)
            }
        }
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.names.get(name).copied()
    }

    pub fn node_names(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.names.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn node<T: Node>(&self, id: NodeId) -> Option<&T> {
        self.nodes
            .get(id.0 as usize)?
            .as_ref()?
            .as_any()
            .downcast_ref()
    }

    pub fn node_mut<T: Node>(&mut self, id: NodeId) -> Option<&mut T> {
        self.nodes
            .get_mut(id.0 as usize)?
            .as_mut()?
            .as_any_mut()
            .downcast_mut()
    }

    /// First node of type `T`.
    pub fn find<T: Node>(&self) -> Option<(NodeId, &T)> {
        self.nodes.iter().enumerate().find_map(|(i, n)| {
            let t = n.as_ref()?.as_any().downcast_ref::<T>()?;
            Some((NodeId(i as u32), t))
        })
    }

    pub fn schedule_action(&mut self, at_ms: u64, node: NodeId, action: Action) {
        self.net.sched.schedule_at(
            at_ms,
            SimEvent::Node {
                node,
                event: NodeEvent::Action(action),
            },
        );
    }

    /// Runs `hook` against the fabric at `at_ms` (link failures, test probes).
    pub fn schedule_fabric(&mut self, at_ms: u64, hook: impl FnOnce(&mut Net) + 'static) {
        self.net
            .sched
            .schedule_at(at_ms, SimEvent::Fabric(Box::new(hook)));
    }

    pub fn set_budget(&mut self, budget: u64) {
        self.net.sched.set_budget(budget);
    }

    pub fn now(&self) -> u64 {
        self.net.now()
    }

    /// Processes one event. Returns false when the queue is empty.
    pub fn step(&mut self) -> bool {
        let Some(ev) = self.net.sched.pop() else {
            return false;
        };
        self.dispatch(ev);
        true
    }

    /// Dispatches events until nothing is pending or the event budget is spent.
    pub fn run_until_idle(&mut self) -> Result<u64, NetError> {
        let budget = self.net.sched.budget();
        let mut count = 0u64;
        while let Some(ev) = self.net.sched.pop() {
            count += 1;
            if count > budget {
                return Err(NetError::BudgetExceeded {
                    budget,
                    now_ms: self.net.now(),
                    pending: self.net.sched.pending(),
                });
            }
            self.dispatch(ev);
        }
        Ok(count)
    }

    /// Dispatches events scheduled up to and including `t_ms`.
    pub fn run_until(&mut self, t_ms: u64) -> Result<u64, NetError> {
        let budget = self.net.sched.budget();
        let mut count = 0u64;
        while self.net.sched.peek_time().is_some_and(|t| t <= t_ms) {
            let ev = self.net.sched.pop().expect("peeked");
            count += 1;
            if count > budget {
                return Err(NetError::BudgetExceeded {
                    budget,
                    now_ms: self.net.now(),
                    pending: self.net.sched.pending(),
                });
            }
            self.dispatch(ev);
        }
        Ok(count)
    }

    fn dispatch(&mut self, ev: SimEvent) {
        match ev {
            SimEvent::Fabric(hook) => hook(&mut self.net),
            SimEvent::Node { node, event } => {
                let Some(slot) = self.nodes.get_mut(node.0 as usize) else {
                    return;
                };
                let Some(mut n) = slot.take() else { return };
                let prev = self.net.current.replace(node);
                n.handle(&mut self.net, event);
                self.net.current = prev;
                self.nodes[node.0 as usize] = Some(n);
            }
        }
    }
}
