//! Addressing shared by every simulated node.

use std::fmt;
use std::net::{Ipv4Addr, SocketAddr, SocketAddrV4};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// IPv4 address and port of a simulated (or external) socket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Endpoint {
    pub addr: Ipv4Addr,
    pub port: u16,
}

impl Endpoint {
    pub const fn new(addr: Ipv4Addr, port: u16) -> Self {
        Endpoint { addr, port }
    }

    pub fn socket_addr(&self) -> SocketAddr {
        SocketAddr::V4(SocketAddrV4::new(self.addr, self.port))
    }

    pub fn from_socket_addr(sa: SocketAddr) -> Option<Endpoint> {
        match sa {
            SocketAddr::V4(v4) => Some(Endpoint::new(*v4.ip(), v4.port())),
            SocketAddr::V6(_) => None,
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.addr, self.port)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BadEndpoint(pub String);

impl fmt::Display for BadEndpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid endpoint {:?}", self.0)
    }
}

impl std::error::Error for BadEndpoint {}

impl FromStr for Endpoint {
    type Err = BadEndpoint;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let sa: SocketAddrV4 = s.trim().parse().map_err(|_| BadEndpoint(s.to_string()))?;
        Ok(Endpoint::new(*sa.ip(), sa.port()))
    }
}

impl Serialize for Endpoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Endpoint {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Identifies one HTTP request/response exchange across the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConnId(pub u64);

impl fmt::Display for ConnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "conn-{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Datagram {
    pub src: Endpoint,
    pub dst: Endpoint,
    pub payload: Vec<u8>,
}

impl Datagram {
    pub fn new(src: Endpoint, dst: Endpoint, payload: impl Into<Vec<u8>>) -> Self {
        Datagram { src, dst, payload: payload.into() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_text_form() {
        let ep: Endpoint = "10.0.3.2:4001".parse().unwrap();
        assert_eq!(ep, Endpoint::new(Ipv4Addr::new(10, 0, 3, 2), 4001));
        assert_eq!(ep.to_string(), "10.0.3.2:4001");
        assert!("10.0.3.2".parse::<Endpoint>().is_err());
        assert!("host:80".parse::<Endpoint>().is_err());
        assert_eq!(serde_json::to_string(&ep).unwrap(), "\"10.0.3.2:4001\"");
    }
}
