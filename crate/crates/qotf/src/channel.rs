//! Framed duplex channels: an in-process pair for tests and local runs, and a
//! TCP transport for two-process sessions.
//!
//! Wire format: `[u32 len (big-endian)] [u8 type] [payload]`, with `len`
//! counting the type byte plus payload. Frames above 16 MiB are rejected
//! before any allocation. Socket channels perform a version handshake
//! (`magic "QOTF"` + version u16) before the first frame.

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{Receiver, Sender};

use serde::{Deserialize, Serialize};

use crate::error::{QotfError, Result};

pub const MAX_FRAME: usize = 16 * 1024 * 1024;
pub const MAGIC: &[u8; 4] = b"QOTF";
pub const VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameType {
    Config,
    HashKey,
    Digests,
    ZkProof,
    ZkMsg,
    QState,
    SVec,
    ZVec,
    Abort,
}

impl FrameType {
    fn to_byte(self) -> u8 {
        match self {
            FrameType::Config => 1,
            FrameType::HashKey => 2,
            FrameType::Digests => 3,
            FrameType::ZkProof => 4,
            FrameType::ZkMsg => 5,
            FrameType::QState => 6,
            FrameType::SVec => 7,
            FrameType::ZVec => 8,
            FrameType::Abort => 9,
        }
    }

    fn from_byte(b: u8) -> Result<FrameType> {
        Ok(match b {
            1 => FrameType::Config,
            2 => FrameType::HashKey,
            3 => FrameType::Digests,
            4 => FrameType::ZkProof,
            5 => FrameType::ZkMsg,
            6 => FrameType::QState,
            7 => FrameType::SVec,
            8 => FrameType::ZVec,
            9 => FrameType::Abort,
            _ => return Err(QotfError::Malformed(format!("unknown frame type {b}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub frame_type: FrameType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(frame_type: FrameType, payload: Vec<u8>) -> Frame {
        Frame {
            frame_type,
            payload,
        }
    }

    /// Encoded length on the wire (header + type byte + payload).
    pub fn wire_len(&self) -> usize {
        4 + 1 + self.payload.len()
    }
}

pub trait Channel: Send {
    fn send(&mut self, frame: Frame) -> Result<()>;
    fn recv(&mut self) -> Result<Frame>;
}

/// In-process duplex channel backed by two mpsc queues.
pub struct MemChannel {
    tx: Sender<Frame>,
    rx: Receiver<Frame>,
}

/// A connected pair of in-process endpoints.
pub fn mem_pair() -> (MemChannel, MemChannel) {
    let (tx_a, rx_b) = std::sync::mpsc::channel();
    let (tx_b, rx_a) = std::sync::mpsc::channel();
    (
        MemChannel { tx: tx_a, rx: rx_a },
        MemChannel { tx: tx_b, rx: rx_b },
    )
}

impl Channel for MemChannel {
    fn send(&mut self, frame: Frame) -> Result<()> {
        if 1 + frame.payload.len() > MAX_FRAME {
            return Err(QotfError::FrameTooLarge(1 + frame.payload.len()));
        }
        self.tx.send(frame).map_err(|_| QotfError::ChannelClosed)
    }

    fn recv(&mut self) -> Result<Frame> {
        self.rx.recv().map_err(|_| QotfError::ChannelClosed)
    }
}

/// Framed TCP channel; construction performs the version handshake.
pub struct TcpChannel {
    stream: TcpStream,
}

impl TcpChannel {
    fn handshake(mut stream: TcpStream) -> Result<TcpChannel> {
        let mut hello = [0u8; 6];
        hello[..4].copy_from_slice(MAGIC);
        hello[4..].copy_from_slice(&VERSION.to_be_bytes());
        stream.write_all(&hello)?;
        stream.flush()?;
        let mut peer = [0u8; 6];
        stream.read_exact(&mut peer)?;
        if &peer[..4] != MAGIC {
            return Err(QotfError::Handshake("bad magic".into()));
        }
        let peer_version = u16::from_be_bytes([peer[4], peer[5]]);
        if peer_version != VERSION {
            return Err(QotfError::Handshake(format!(
                "version mismatch: ours {VERSION}, peer {peer_version}"
            )));
        }
        Ok(TcpChannel { stream })
    }
}

/// Listen on `endpoint` and accept one connection.
pub fn serve(endpoint: impl ToSocketAddrs) -> Result<TcpChannel> {
    serve_listener(TcpListener::bind(endpoint)?)
}

/// Accept one connection on an already-bound listener (useful with
/// ephemeral ports).
pub fn serve_listener(listener: TcpListener) -> Result<TcpChannel> {
    let (stream, _) = listener.accept()?;
    TcpChannel::handshake(stream)
}

/// Connect to a listening peer.
pub fn connect(endpoint: impl ToSocketAddrs) -> Result<TcpChannel> {
    let stream = TcpStream::connect(endpoint)?;
    TcpChannel::handshake(stream)
}

impl Channel for TcpChannel {
    fn send(&mut self, frame: Frame) -> Result<()> {
        let body_len = 1 + frame.payload.len();
        if body_len > MAX_FRAME {
            return Err(QotfError::FrameTooLarge(body_len));
        }
        self.stream.write_all(&(body_len as u32).to_be_bytes())?;
        self.stream.write_all(&[frame.frame_type.to_byte()])?;
        self.stream.write_all(&frame.payload)?;
        self.stream.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<Frame> {
        let mut len_buf = [0u8; 4];
        self.stream.read_exact(&mut len_buf)?;
        let body_len = u32::from_be_bytes(len_buf) as usize;
        // Reject before allocating anything.
        if body_len > MAX_FRAME {
            return Err(QotfError::FrameTooLarge(body_len));
        }
        if body_len == 0 {
            return Err(QotfError::Malformed("empty frame".into()));
        }
        let mut type_buf = [0u8; 1];
        self.stream.read_exact(&mut type_buf)?;
        let mut payload = vec![0u8; body_len - 1];
        self.stream.read_exact(&mut payload)?;
        Ok(Frame {
            frame_type: FrameType::from_byte(type_buf[0])?,
            payload,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mem_pair_roundtrip() {
        let (mut a, mut b) = mem_pair();
        a.send(Frame::new(FrameType::Config, b"hello".to_vec()))
            .unwrap();
        let f = b.recv().unwrap();
        assert_eq!(f.frame_type, FrameType::Config);
        assert_eq!(f.payload, b"hello");
    }

    #[test]
    fn oversized_frame_rejected() {
        let (mut a, _b) = mem_pair();
        let err = a
            .send(Frame::new(FrameType::QState, vec![0u8; MAX_FRAME + 1]))
            .unwrap_err();
        assert!(matches!(err, QotfError::FrameTooLarge(_)));
    }

    #[test]
    fn tcp_roundtrip_and_handshake() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut ch = TcpChannel::handshake(stream).unwrap();
            let f = ch.recv().unwrap();
            ch.send(f).unwrap();
        });
        let mut ch = connect(addr).unwrap();
        ch.send(Frame::new(FrameType::Digests, vec![1, 2, 3])).unwrap();
        let echo = ch.recv().unwrap();
        assert_eq!(echo.frame_type, FrameType::Digests);
        assert_eq!(echo.payload, vec![1, 2, 3]);
        server.join().unwrap();
    }

    #[test]
    fn tcp_oversized_length_rejected_on_read() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            // Complete the handshake manually, then claim a huge frame.
            let mut hello = [0u8; 6];
            stream.read_exact(&mut hello).unwrap();
            let mut reply = [0u8; 6];
            reply[..4].copy_from_slice(MAGIC);
            reply[4..].copy_from_slice(&VERSION.to_be_bytes());
            stream.write_all(&reply).unwrap();
            stream
                .write_all(&(u32::MAX).to_be_bytes())
                .unwrap();
            stream.flush().unwrap();
            // Hold the socket open until the client has errored out.
            let mut sink = [0u8; 1];
            let _ = stream.read(&mut sink);
        });
        let mut ch = connect(addr).unwrap();
        let err = ch.recv().unwrap_err();
        assert!(matches!(err, QotfError::FrameTooLarge(_)));
        drop(ch);
        server.join().unwrap();
    }
}
