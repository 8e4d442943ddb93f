//! Stream-socket transport. Each frame is a 4-byte big-endian length followed by
//! one JSON line. A sender writes one frame per packet, then an empty frame;
//! the receiver inserts the packets into its pool and answers the empty frame
//! with an acknowledgment line `{"accepted":N}`.

use std::collections::HashMap;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{deserialize, serialize, Delivery, RolloutPacket, SwarmPool, Transport};
use crate::error::{Error, Result};

pub const MAX_FRAME: usize = 16 << 20;

pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> io::Result<()> {
    if payload.len() > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "frame too large"));
    }
    w.write_all(&(payload.len() as u32).to_be_bytes())?;
    w.write_all(payload)
}

/// Reads one frame; `Ok(None)` on a clean end of stream between frames.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {len} bytes")));
    }
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)?;
    Ok(Some(payload))
}

#[derive(Serialize, Deserialize)]
struct Ack {
    accepted: usize,
}

/// A node's listening side: accepts peer connections and feeds its pool.
pub struct SocketEndpoint {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    streams: Arc<Mutex<Vec<TcpStream>>>,
    handle: Option<JoinHandle<()>>,
}

fn serve_connection(stream: TcpStream, pool: Arc<SwarmPool>) -> io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = stream;
    let mut accepted = 0;
    while let Some(frame) = read_frame(&mut reader)? {
        if frame.is_empty() {
            let mut ack = serde_json::to_vec(&Ack { accepted }).expect("ack serializes");
            ack.push(b'\n');
            write_frame(&mut writer, &ack)?;
            writer.flush()?;
            accepted = 0;
            continue;
        }
        match deserialize(&frame) {
            Ok(packet) => {
                pool.insert(packet);
                accepted += 1;
            }
            Err(e) => tracing::warn!("dropping malformed packet: {e}"),
        }
    }
    Ok(())
}

impl SocketEndpoint {
    /// Binds `addr` (port 0 picks a free port) and starts accepting.
    pub fn spawn(addr: SocketAddr, pool: Arc<SwarmPool>) -> Result<SocketEndpoint> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let streams = Arc::new(Mutex::new(Vec::new()));
        let handle = {
            let shutdown = Arc::clone(&shutdown);
            let streams = Arc::clone(&streams);
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if shutdown.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    if let Ok(clone) = stream.try_clone() {
                        streams.lock().expect("stream list poisoned").push(clone);
                    }
                    let pool = Arc::clone(&pool);
                    std::thread::spawn(move || {
                        if let Err(e) = serve_connection(stream, pool) {
                            tracing::debug!("peer connection closed: {e}");
                        }
                    });
                }
            })
        };
        Ok(SocketEndpoint {
            addr,
            shutdown,
            streams,
            handle: Some(handle),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting and drops every open peer connection.
    pub fn shutdown(&mut self) {
        if self.shutdown.swap(true, Ordering::SeqCst) {
            return;
        }
        // Wake the blocking accept.
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
        for s in self.streams.lock().expect("stream list poisoned").drain(..) {
            let _ = s.shutdown(Shutdown::Both);
        }
    }
}

impl Drop for SocketEndpoint {
    fn drop(&mut self) {
        self.shutdown();
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerAddr {
    pub id: String,
    pub addr: String,
}

/// Static full-mesh peer list, usually read from a TOML file:
///
/// ```toml
/// [[peers]]
/// id = "node-0"
/// addr = "127.0.0.1:7100"
/// ```
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerList {
    pub peers: Vec<PeerAddr>,
}

impl PeerList {
    pub fn from_toml_str(text: &str) -> Result<PeerList> {
        toml::from_str(text).map_err(|e| Error::Config(format!("peer list: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<PeerList> {
        PeerList::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// Sends to every listed peer except the sender over persistent connections.
pub struct SocketTransport {
    peers: Vec<(String, SocketAddr)>,
    timeout: Duration,
    conns: Mutex<HashMap<String, TcpStream>>,
}

impl SocketTransport {
    pub fn new(peers: &PeerList, timeout: Duration) -> Result<SocketTransport> {
        let mut resolved = Vec::with_capacity(peers.peers.len());
        for p in &peers.peers {
            let addr = p
                .addr
                .to_socket_addrs()
                .map_err(|e| Error::Transport(format!("peer {}: {e}", p.id)))?
                .next()
                .ok_or_else(|| Error::Transport(format!("peer {} has no address", p.id)))?;
            resolved.push((p.id.clone(), addr));
        }
        resolved.sort();
        Ok(SocketTransport {
            peers: resolved,
            timeout,
            conns: Mutex::new(HashMap::new()),
        })
    }

    fn connect(&self, addr: &SocketAddr) -> io::Result<TcpStream> {
        let s = TcpStream::connect_timeout(addr, self.timeout)?;
        s.set_read_timeout(Some(self.timeout))?;
        s.set_write_timeout(Some(self.timeout))?;
        s.set_nodelay(true)?;
        Ok(s)
    }

    fn exchange(stream: &TcpStream, frames: &[Vec<u8>]) -> io::Result<usize> {
        let mut w = BufWriter::new(stream);
        for f in frames {
            write_frame(&mut w, f)?;
        }
        write_frame(&mut w, &[])?;
        w.flush()?;
        drop(w);
        let mut r = stream;
        let ack = read_frame(&mut r)?
            .ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "no acknowledgment"))?;
        let ack: Ack = serde_json::from_slice(&ack)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        Ok(ack.accepted)
    }

    fn send(&self, conns: &mut HashMap<String, TcpStream>, id: &str, addr: &SocketAddr, frames: &[Vec<u8>]) -> bool {
        // A cached connection may have gone stale; retry once on a fresh one.
        for attempt in 0..2 {
            if attempt == 1 || !conns.contains_key(id) {
                match self.connect(addr) {
                    Ok(s) => {
                        conns.insert(id.to_string(), s);
                    }
                    Err(_) => {
                        conns.remove(id);
                        return false;
                    }
                }
            }
            let stream = &conns[id];
            match Self::exchange(stream, frames) {
                Ok(n) if n == frames.len() => return true,
                Ok(_) => return false,
                Err(_) => {
                    conns.remove(id);
                }
            }
        }
        false
    }
}

impl Transport for SocketTransport {
    fn broadcast(&self, sender: &str, packets: &[RolloutPacket]) -> Delivery {
        let mut delivery = Delivery::default();
        if packets.is_empty() {
            return delivery;
        }
        let frames: Vec<Vec<u8>> = match packets.iter().map(serialize).collect() {
            Ok(f) => f,
            Err(e) => {
                tracing::warn!("refusing to send invalid packets: {e}");
                delivery.unreached = self.peers.iter().filter(|(id, _)| id != sender).map(|(id, _)| id.clone()).collect();
                return delivery;
            }
        };
        let mut conns = self.conns.lock().expect("connection cache poisoned");
        for (id, addr) in &self.peers {
            if id == sender {
                continue;
            }
            if self.send(&mut conns, id, addr, &frames) {
                delivery.acknowledged += 1;
            } else {
                delivery.unreached.push(id.clone());
            }
        }
        delivery
    }
}
