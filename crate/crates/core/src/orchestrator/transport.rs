//! Frame carriers. Both transports move the exact encoded bytes, so metering
//! does not depend on which one is in use.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::io::{self, Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream};
use std::sync::mpsc;
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};

use super::wire::{frame_len_from_header, MsgType, HEADER_LEN};
use crate::cost::Phase;
use crate::crypto::Hostname;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    Nwdaf,
    Nf(Hostname),
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Nwdaf => f.write_str("nwdaf"),
            Endpoint::Nf(h) => write!(f, "{h}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    #[default]
    Bus,
    Socket,
}

pub trait Transport: Send {
    fn send(&mut self, from: Endpoint, to: Endpoint, frame: Vec<u8>) -> io::Result<()>;
    /// Next frame on the `from -> to` channel, in send order.
    fn recv(&mut self, from: Endpoint, to: Endpoint) -> io::Result<Vec<u8>>;
    fn bytes_carried(&self) -> u64;
}

pub fn make_transport(kind: TransportKind) -> io::Result<Box<dyn Transport>> {
    Ok(match kind {
        TransportKind::Bus => Box::new(Bus::default()),
        TransportKind::Socket => Box::new(SocketTransport::loopback()?),
    })
}

/// In-process bus with one FIFO per directed channel.
#[derive(Debug, Default)]
pub struct Bus {
    channels: BTreeMap<(Endpoint, Endpoint), VecDeque<Vec<u8>>>,
    carried: u64,
}

impl Transport for Bus {
    fn send(&mut self, from: Endpoint, to: Endpoint, frame: Vec<u8>) -> io::Result<()> {
        self.carried += frame.len() as u64;
        self.channels
            .entry((from, to))
            .or_default()
            .push_back(frame);
        Ok(())
    }

    fn recv(&mut self, from: Endpoint, to: Endpoint) -> io::Result<Vec<u8>> {
        self.channels
            .get_mut(&(from, to))
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| {
                io::Error::new(
                    io::ErrorKind::WouldBlock,
                    format!("no frame on {from} -> {to}"),
                )
            })
    }

    fn bytes_carried(&self) -> u64 {
        self.carried
    }
}

/// Loopback TCP: every frame is written to one socket and read back from its
/// peer by a reader thread that splits the stream on frame headers.
pub struct SocketTransport {
    writer: TcpStream,
    frames: mpsc::Receiver<io::Result<Vec<u8>>>,
    order: VecDeque<(Endpoint, Endpoint)>,
    reader: Option<JoinHandle<()>>,
    carried: u64,
}

impl SocketTransport {
    pub fn loopback() -> io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let writer = TcpStream::connect(listener.local_addr()?)?;
        writer.set_nodelay(true)?;
        let (mut stream, _) = listener.accept()?;
        let (tx, frames) = mpsc::channel();
        let reader = std::thread::spawn(move || loop {
            let mut header = [0u8; HEADER_LEN];
            match stream.read_exact(&mut header) {
                Ok(()) => {}
                Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return,
                Err(e) => {
                    let _ = tx.send(Err(e));
                    return;
                }
            }
            let mut frame = header.to_vec();
            frame.resize(frame_len_from_header(&header), 0);
            let res = stream.read_exact(&mut frame[HEADER_LEN..]).map(|_| frame);
            let failed = res.is_err();
            if tx.send(res).is_err() || failed {
                return;
            }
        });
        Ok(Self {
            writer,
            frames,
            order: VecDeque::new(),
            reader: Some(reader),
            carried: 0,
        })
    }
}

impl Transport for SocketTransport {
    fn send(&mut self, from: Endpoint, to: Endpoint, frame: Vec<u8>) -> io::Result<()> {
        self.writer.write_all(&frame)?;
        self.carried += frame.len() as u64;
        self.order.push_back((from, to));
        Ok(())
    }

    fn recv(&mut self, from: Endpoint, to: Endpoint) -> io::Result<Vec<u8>> {
        // a single stream carries every channel, so frames come back in global send order
        match self.order.front() {
            Some(&ch) if ch == (from, to) => {}
            _ => {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidInput,
                    format!("next frame is not on {from} -> {to}"),
                ))
            }
        }
        self.order.pop_front();
        self.frames
            .recv()
            .map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "reader thread gone"))?
    }

    fn bytes_carried(&self) -> u64 {
        self.carried
    }
}

impl Drop for SocketTransport {
    fn drop(&mut self) {
        let _ = self.writer.shutdown(Shutdown::Both);
        if let Some(h) = self.reader.take() {
            let _ = h.join();
        }
    }
}

/// What an interceptor sees about a frame in flight.
#[derive(Clone, Debug)]
pub struct FrameMeta {
    pub seq: u64,
    pub from: Endpoint,
    pub to: Endpoint,
    pub msg_type: MsgType,
    pub round: Option<u64>,
    pub phase: Phase,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Deliver,
    Drop,
}

/// Hook on every frame between transport and receiver, used for fault
/// injection. It may rewrite the bytes or drop the frame.
pub trait Interceptor: Send {
    fn intercept(&mut self, meta: &FrameMeta, frame: &mut Vec<u8>) -> Verdict;
}

#[derive(Debug, Default)]
pub struct PassThrough;

impl Interceptor for PassThrough {
    fn intercept(&mut self, _: &FrameMeta, _: &mut Vec<u8>) -> Verdict {
        Verdict::Deliver
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::wire::WireMessage;

    fn nf(i: u32) -> Endpoint {
        Endpoint::Nf(Hostname::for_index(i, "myran.example.com").unwrap())
    }

    fn frames() -> Vec<Vec<u8>> {
        (0..20u32)
            .map(|i| {
                WireMessage::new(
                    MsgType::ContainerBatch,
                    i,
                    i as u64,
                    vec![i as u8; (i as usize) * 997],
                )
                .encode()
            })
            .collect()
    }

    #[test]
    fn bus_is_fifo_per_channel() {
        let mut bus = Bus::default();
        bus.send(Endpoint::Nwdaf, nf(0), vec![1]).unwrap();
        bus.send(Endpoint::Nwdaf, nf(1), vec![2]).unwrap();
        bus.send(Endpoint::Nwdaf, nf(0), vec![3]).unwrap();
        assert_eq!(bus.recv(Endpoint::Nwdaf, nf(1)).unwrap(), vec![2]);
        assert_eq!(bus.recv(Endpoint::Nwdaf, nf(0)).unwrap(), vec![1]);
        assert_eq!(bus.recv(Endpoint::Nwdaf, nf(0)).unwrap(), vec![3]);
        assert!(bus.recv(Endpoint::Nwdaf, nf(0)).is_err());
        assert_eq!(bus.bytes_carried(), 3);
    }

    #[test]
    fn socket_carries_identical_bytes() {
        let mut s = SocketTransport::loopback().unwrap();
        for f in frames() {
            s.send(Endpoint::Nwdaf, nf(0), f.clone()).unwrap();
            assert_eq!(s.recv(Endpoint::Nwdaf, nf(0)).unwrap(), f);
        }
        // a large frame does not deadlock against the socket buffer
        let big = WireMessage::new(MsgType::GlobalModelUpdate, 0, 0, vec![7; 8 << 20]).encode();
        s.send(nf(1), Endpoint::Nwdaf, big.clone()).unwrap();
        assert!(s.recv(Endpoint::Nwdaf, nf(1)).is_err());
        assert_eq!(s.recv(nf(1), Endpoint::Nwdaf).unwrap(), big);
        let total: u64 = frames().iter().map(|f| f.len() as u64).sum::<u64>() + big.len() as u64;
        assert_eq!(s.bytes_carried(), total);
    }
}
