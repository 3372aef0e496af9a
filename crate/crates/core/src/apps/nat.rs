use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use thiserror::Error;

use crate::net::{Datagram, Endpoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NatRule {
    pub external: Endpoint,
    pub internal: Endpoint,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NatError {
    #[error("external endpoint {0} used by two rules")]
    DuplicateExternal(Endpoint),
}

/// Destination rewrite with the first matching rule; payload untouched.
pub fn nat_translate(rules: &[NatRule], mut packet: Datagram) -> Datagram {
    if let Some(rule) = rules.iter().find(|r| r.external == packet.dst) {
        packet.dst = rule.internal;
    }
    packet
}

/// Destination NAT node. Replies from an internal endpoint get their source
/// rewritten back to the external endpoint the client addressed.
#[derive(Debug, Clone)]
pub struct NatRouter {
    name: String,
    interfaces: BTreeSet<Ipv4Addr>,
    rules: Vec<NatRule>,
    reverse: BTreeMap<Endpoint, Endpoint>,
}

impl NatRouter {
    pub fn new(name: impl Into<String>, interfaces: impl IntoIterator<Item = Ipv4Addr>, rules: Vec<NatRule>) -> Result<Self, NatError> {
        let mut seen = BTreeSet::new();
        for r in &rules {
            if !seen.insert(r.external) {
                return Err(NatError::DuplicateExternal(r.external));
            }
        }
        let reverse = rules.iter().map(|r| (r.internal, r.external)).collect();
        Ok(NatRouter { name: name.into(), interfaces: interfaces.into_iter().collect(), rules, reverse })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn interfaces(&self) -> impl Iterator<Item = Ipv4Addr> + '_ {
        self.interfaces.iter().copied()
    }

    pub fn rules(&self) -> &[NatRule] {
        &self.rules
    }

    pub fn owns(&self, addr: Ipv4Addr) -> bool {
        self.interfaces.contains(&addr)
    }

    /// Inbound: a packet addressed to one of the NAT's interfaces. `None`
    /// when no rule matches and it would terminate at the router.
    pub fn forward(&self, packet: Datagram) -> Option<Datagram> {
        if !self.rules.iter().any(|r| r.external == packet.dst) {
            return None;
        }
        Some(nat_translate(&self.rules, packet))
    }

    /// Transit traffic; sources behind a rule appear as its external endpoint.
    pub fn reverse(&self, mut packet: Datagram) -> Datagram {
        if let Some(ext) = self.reverse.get(&packet.src) {
            packet.src = *ext;
        }
        packet
    }

    pub fn internal_for(&self, external: Endpoint) -> Option<Endpoint> {
        self.rules.iter().find(|r| r.external == external).map(|r| r.internal)
    }

    pub fn has_internal(&self, internal: Endpoint) -> bool {
        self.reverse.contains_key(&internal)
    }
}
