//! Real sockets attached to a realtime simulation. I/O threads only talk to
//! the event loop through the kernel injector and the egress channel.

use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::http::complete_message_len;
use crate::kernel::{Injector, Kernel, NodeId};

const POLL: Duration = Duration::from_millis(10);
const IO_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BridgeMode {
    UdpDatagram,
    HttpClient,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BridgeError {
    #[error("cannot bind {addr}: {reason}")]
    BindFailure { addr: SocketAddr, reason: String },
    #[error("bridges need a realtime kernel")]
    ModeMismatch,
}

/// Traffic arriving from the real network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BridgeInbound {
    Datagram { from: SocketAddr, payload: Vec<u8> },
    /// A request accepted on the listener; answer with `BridgeEgress::HttpResponse`.
    HttpRequest { token: u64, from: SocketAddr, bytes: Vec<u8> },
    /// Reply to an earlier `BridgeEgress::HttpRequest`.
    HttpResponse { token: u64, bytes: Vec<u8> },
    HttpFailed { token: u64, error: String },
}

/// Traffic leaving the simulation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BridgeEgress {
    Datagram { to: SocketAddr, payload: Vec<u8> },
    HttpResponse { token: u64, bytes: Vec<u8> },
    HttpRequest { token: u64, to: SocketAddr, bytes: Vec<u8> },
}

type Wrap<P> = Arc<dyn Fn(BridgeInbound) -> P + Send + Sync>;

/// Open bridge. Dropping it stops and joins the I/O threads.
pub struct BridgeHandle {
    mode: BridgeMode,
    local: SocketAddr,
    egress: mpsc::Sender<BridgeEgress>,
    shutdown: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl std::fmt::Debug for BridgeHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeHandle").field("mode", &self.mode).field("local", &self.local).finish()
    }
}

impl BridgeHandle {
    pub fn mode(&self) -> BridgeMode {
        self.mode
    }

    /// Bound address, with the real port when 0 was requested.
    pub fn local_addr(&self) -> SocketAddr {
        self.local
    }

    pub fn send(&self, egress: BridgeEgress) -> bool {
        self.egress.send(egress).is_ok()
    }
}

impl Drop for BridgeHandle {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

/// Open `local` and connect it to `target` in the simulation. Inbound
/// traffic is wrapped into kernel payloads by `wrap`.
pub fn bridge_attach<P: Send + 'static>(
    kernel: &Kernel<P>,
    mode: BridgeMode,
    local: SocketAddr,
    target: NodeId,
    wrap: impl Fn(BridgeInbound) -> P + Send + Sync + 'static,
) -> Result<BridgeHandle, BridgeError> {
    let injector = kernel.injector().map_err(|_| BridgeError::ModeMismatch)?;
    let bind_err = |e: io::Error| BridgeError::BindFailure { addr: local, reason: e.to_string() };
    let wrap: Wrap<P> = Arc::new(wrap);
    let shutdown = Arc::new(AtomicBool::new(false));
    let streams: Arc<Mutex<HashMap<u64, TcpStream>>> = Arc::default();
    let (egress_tx, egress_rx) = mpsc::channel();
    let mut threads = Vec::new();

    let (udp, bound) = match mode {
        BridgeMode::UdpDatagram => {
            let socket = UdpSocket::bind(local).map_err(bind_err)?;
            socket.set_read_timeout(Some(POLL)).map_err(bind_err)?;
            let bound = socket.local_addr().map_err(bind_err)?;
            let reader = socket.try_clone().map_err(bind_err)?;
            let (inj, wrap, stop) = (injector.clone(), wrap.clone(), shutdown.clone());
            threads.push(thread::spawn(move || udp_reader(reader, target, inj, wrap, stop)));
            (Some(socket), bound)
        }
        BridgeMode::HttpClient => {
            let listener = TcpListener::bind(local).map_err(bind_err)?;
            listener.set_nonblocking(true).map_err(bind_err)?;
            let bound = listener.local_addr().map_err(bind_err)?;
            let (inj, wrap, stop, streams) = (injector.clone(), wrap.clone(), shutdown.clone(), streams.clone());
            threads.push(thread::spawn(move || acceptor(listener, target, inj, wrap, stop, streams)));
            (None, bound)
        }
    };

    let stop = shutdown.clone();
    threads.push(thread::spawn(move || writer(egress_rx, udp, streams, target, injector, wrap, stop)));
    Ok(BridgeHandle { mode, local: bound, egress: egress_tx, shutdown, threads })
}

fn udp_reader<P>(socket: UdpSocket, target: NodeId, injector: Injector<P>, wrap: Wrap<P>, stop: Arc<AtomicBool>) {
    let mut buf = vec![0u8; 65_536];
    while !stop.load(Ordering::SeqCst) {
        match socket.recv_from(&mut buf) {
            Ok((n, from)) => {
                if !injector.inject(target, wrap(BridgeInbound::Datagram { from, payload: buf[..n].to_vec() })) {
                    return;
                }
            }
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(e) => log::warn!("bridge recv failed: {e}"),
        }
    }
}

/// Read one complete HTTP message, or whatever arrived before EOF.
fn read_message(stream: &mut TcpStream, stop: &AtomicBool) -> io::Result<Vec<u8>> {
    stream.set_read_timeout(Some(POLL))?;
    let started = Instant::now();
    let mut buf = Vec::new();
    let mut chunk = [0u8; 8192];
    loop {
        if let Ok(Some(n)) = complete_message_len(&buf) {
            buf.truncate(n);
            return Ok(buf);
        }
        if stop.load(Ordering::SeqCst) || started.elapsed() > IO_TIMEOUT {
            return Err(io::Error::new(io::ErrorKind::TimedOut, "incomplete HTTP message"));
        }
        match stream.read(&mut chunk) {
            Ok(0) => return Ok(buf),
            Ok(n) => buf.extend_from_slice(&chunk[..n]),
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(e) => return Err(e),
        }
    }
}

fn acceptor<P: Send + 'static>(
    listener: TcpListener,
    target: NodeId,
    injector: Injector<P>,
    wrap: Wrap<P>,
    stop: Arc<AtomicBool>,
    streams: Arc<Mutex<HashMap<u64, TcpStream>>>,
) {
    let tokens = Arc::new(AtomicU64::new(1));
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((mut stream, from)) => {
                let _ = stream.set_nonblocking(false);
                let (inj, wrap, stop, streams, tokens) =
                    (injector.clone(), wrap.clone(), stop.clone(), streams.clone(), tokens.clone());
                thread::spawn(move || {
                    let Ok(bytes) = read_message(&mut stream, &stop) else { return };
                    if bytes.is_empty() {
                        return;
                    }
                    let token = tokens.fetch_add(1, Ordering::SeqCst);
                    streams.lock().expect("stream table").insert(token, stream);
                    inj.inject(target, wrap(BridgeInbound::HttpRequest { token, from, bytes }));
                });
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                log::warn!("bridge accept failed: {e}");
                thread::sleep(POLL);
            }
        }
    }
}

fn http_roundtrip(to: SocketAddr, bytes: &[u8], stop: &AtomicBool) -> io::Result<Vec<u8>> {
    let mut stream = TcpStream::connect_timeout(&to, IO_TIMEOUT)?;
    stream.write_all(bytes)?;
    let reply = read_message(&mut stream, stop)?;
    let _ = stream.shutdown(Shutdown::Both);
    Ok(reply)
}

fn writer<P: Send + 'static>(
    rx: mpsc::Receiver<BridgeEgress>,
    udp: Option<UdpSocket>,
    streams: Arc<Mutex<HashMap<u64, TcpStream>>>,
    target: NodeId,
    injector: Injector<P>,
    wrap: Wrap<P>,
    stop: Arc<AtomicBool>,
) {
    while !stop.load(Ordering::SeqCst) {
        let item = match rx.recv_timeout(POLL) {
            Ok(item) => item,
            Err(RecvTimeoutError::Timeout) => continue,
            Err(RecvTimeoutError::Disconnected) => return,
        };
        match item {
            BridgeEgress::Datagram { to, payload } => match &udp {
                Some(s) => {
                    if let Err(e) = s.send_to(&payload, to) {
                        log::warn!("bridge send to {to} failed: {e}");
                    }
                }
                None => log::warn!("datagram egress on an HTTP bridge dropped"),
            },
            BridgeEgress::HttpResponse { token, bytes } => {
                let stream = streams.lock().expect("stream table").remove(&token);
                if let Some(mut s) = stream {
                    let _ = s.write_all(&bytes);
                    let _ = s.shutdown(Shutdown::Both);
                }
            }
            BridgeEgress::HttpRequest { token, to, bytes } => {
                let (inj, wrap, stop) = (injector.clone(), wrap.clone(), stop.clone());
                thread::spawn(move || {
                    let inbound = match http_roundtrip(to, &bytes, &stop) {
                        Ok(bytes) => BridgeInbound::HttpResponse { token, bytes },
                        Err(e) => BridgeInbound::HttpFailed { token, error: e.to_string() },
                    };
                    inj.inject(target, wrap(inbound));
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::ClockMode;

    #[test]
    fn virtual_kernel_rejected() {
        let mut k: Kernel<BridgeInbound> = Kernel::new(ClockMode::Virtual);
        let n = k.add_node("bridge");
        let err = bridge_attach(&k, BridgeMode::UdpDatagram, "127.0.0.1:0".parse().unwrap(), n, |i| i).unwrap_err();
        assert_eq!(err, BridgeError::ModeMismatch);
    }

    #[test]
    fn bind_failure_reported() {
        let k: Kernel<BridgeInbound> = Kernel::new(ClockMode::realtime());
        let taken = UdpSocket::bind("127.0.0.1:0").unwrap();
        let addr = taken.local_addr().unwrap();
        let err = bridge_attach(&k, BridgeMode::UdpDatagram, addr, NodeId(0), |i| i).unwrap_err();
        assert!(matches!(err, BridgeError::BindFailure { .. }));
    }

    #[test]
    fn udp_in_and_out() {
        let mut k: Kernel<BridgeInbound> = Kernel::new(ClockMode::realtime());
        let node = k.add_node("bridge");
        let bridge = bridge_attach(&k, BridgeMode::UdpDatagram, "127.0.0.1:0".parse().unwrap(), node, |i| i).unwrap();
        let peer = UdpSocket::bind("127.0.0.1:0").unwrap();
        peer.set_read_timeout(Some(Duration::from_secs(2))).unwrap();
        peer.send_to(b"hello", bridge.local_addr()).unwrap();
        let mut got = Vec::new();
        k.run(Some(0.3), |_, ev| got.push(ev.payload));
        assert_eq!(got, vec![BridgeInbound::Datagram { from: peer.local_addr().unwrap(), payload: b"hello".to_vec() }]);

        bridge.send(BridgeEgress::Datagram { to: peer.local_addr().unwrap(), payload: b"back".to_vec() });
        let mut buf = [0u8; 16];
        let (n, from) = peer.recv_from(&mut buf).unwrap();
        assert_eq!((&buf[..n], from), (&b"back"[..], bridge.local_addr()));
    }

    #[test]
    fn silent_peer_injects_nothing() {
        let mut k: Kernel<BridgeInbound> = Kernel::new(ClockMode::realtime());
        let node = k.add_node("bridge");
        let _bridge = bridge_attach(&k, BridgeMode::HttpClient, "127.0.0.1:0".parse().unwrap(), node, |i| i).unwrap();
        assert_eq!(k.run(Some(0.1), |_, _| {}), 0);
    }

    #[test]
    fn http_listener_round_trip() {
        let mut k: Kernel<BridgeInbound> = Kernel::new(ClockMode::realtime());
        let node = k.add_node("bridge");
        let bridge = bridge_attach(&k, BridgeMode::HttpClient, "127.0.0.1:0".parse().unwrap(), node, |i| i).unwrap();
        let addr = bridge.local_addr();
        let client = thread::spawn(move || {
            let mut s = TcpStream::connect(addr).unwrap();
            s.write_all(b"GET /x HTTP/1.1\r\nContent-Length: 0\r\n\r\n").unwrap();
            let mut out = Vec::new();
            s.read_to_end(&mut out).unwrap();
            out
        });
        let mut token = None;
        k.run(Some(0.5), |_, ev| {
            if let BridgeInbound::HttpRequest { token: t, bytes, .. } = ev.payload {
                assert!(bytes.starts_with(b"GET /x"));
                token = Some(t);
            }
        });
        let reply = b"HTTP/1.1 204 No Content\r\nContent-Length: 0\r\n\r\n".to_vec();
        bridge.send(BridgeEgress::HttpResponse { token: token.unwrap(), bytes: reply.clone() });
        assert_eq!(client.join().unwrap(), reply);
    }
}
