//! Length-prefixed binary framing between replicas and parameter shards.
//!
//! ```text
//! frame   := u32 payload_len | u8 tag | payload          (little-endian)
//! 0x01 FetchParams    u32 shard_id, u32 key_count, key*      key := u16 len, UTF-8
//! 0x02 ParamsResponse u64 version, table
//! 0x03 PushGrads      u32 replica_id, u64 step, table
//! 0x04 Ack            u64 version
//! table   := u32 count, { u16 name_len, name, u8 rank, u64 dims[rank], f32 data[] }*
//! ```
//!
//! `payload_len` counts the payload only, not the tag byte.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::tensor::Tensor;

pub const TAG_FETCH_PARAMS: u8 = 0x01;
pub const TAG_PARAMS_RESPONSE: u8 = 0x02;
pub const TAG_PUSH_GRADS: u8 = 0x03;
pub const TAG_ACK: u8 = 0x04;

/// Frames larger than this are rejected before allocation.
pub const MAX_PAYLOAD: usize = 1 << 30;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("truncated {what}: expected {expected} bytes, got {actual}")]
    Truncated {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("unknown message tag 0x{0:02x}")]
    UnknownTag(u8),
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("frame payload of {0} bytes exceeds the limit")]
    TooLarge(usize),
    #[error("transport: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, tensor: Tensor) -> Self {
        Self {
            name: name.into(),
            tensor,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WireMessage {
    FetchParams { shard_id: u32, keys: Vec<String> },
    ParamsResponse { version: u64, tensors: Vec<NamedTensor> },
    PushGrads { replica_id: u32, step: u64, tensors: Vec<NamedTensor> },
    Ack { version: u64 },
}

impl WireMessage {
    pub fn tag(&self) -> u8 {
        match self {
            WireMessage::FetchParams { .. } => TAG_FETCH_PARAMS,
            WireMessage::ParamsResponse { .. } => TAG_PARAMS_RESPONSE,
            WireMessage::PushGrads { .. } => TAG_PUSH_GRADS,
            WireMessage::Ack { .. } => TAG_ACK,
        }
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    let bytes = s.as_bytes();
    assert!(bytes.len() <= u16::MAX as usize, "string too long for the wire");
    out.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
    out.extend_from_slice(bytes);
}

/// Appends a tensor table. Shared with the checkpoint format.
pub fn put_table(out: &mut Vec<u8>, tensors: &[NamedTensor]) {
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for nt in tensors {
        put_str(out, &nt.name);
        let shape = nt.tensor.shape();
        out.push(shape.len() as u8);
        for &d in shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in nt.tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn encode_message(msg: &WireMessage) -> Vec<u8> {
    let mut payload = Vec::new();
    match msg {
        WireMessage::FetchParams { shard_id, keys } => {
            payload.extend_from_slice(&shard_id.to_le_bytes());
            payload.extend_from_slice(&(keys.len() as u32).to_le_bytes());
            for k in keys {
                put_str(&mut payload, k);
            }
        }
        WireMessage::ParamsResponse { version, tensors } => {
            payload.extend_from_slice(&version.to_le_bytes());
            put_table(&mut payload, tensors);
        }
        WireMessage::PushGrads {
            replica_id,
            step,
            tensors,
        } => {
            payload.extend_from_slice(&replica_id.to_le_bytes());
            payload.extend_from_slice(&step.to_le_bytes());
            put_table(&mut payload, tensors);
        }
        WireMessage::Ack { version } => payload.extend_from_slice(&version.to_le_bytes()),
    }
    let mut frame = Vec::with_capacity(5 + payload.len());
    frame.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    frame.push(msg.tag());
    frame.extend_from_slice(&payload);
    frame
}

/// Cursor over a byte slice with bounds-checked little-endian reads.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], WireError> {
        if self.remaining() < n {
            return Err(WireError::Truncated {
                what,
                expected: n,
                actual: self.remaining(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self, what: &'static str) -> Result<u8, WireError> {
        Ok(self.take(1, what)?[0])
    }

    pub fn u16(&mut self, what: &'static str) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub fn u32(&mut self, what: &'static str) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn u64(&mut self, what: &'static str) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub fn f64(&mut self, what: &'static str) -> Result<f64, WireError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub fn string(&mut self, what: &'static str) -> Result<String, WireError> {
        let n = self.u16(what)? as usize;
        let bytes = self.take(n, what)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| WireError::Malformed(format!("{what} is not valid UTF-8")))
    }

    pub fn table(&mut self) -> Result<Vec<NamedTensor>, WireError> {
        let count = self.u32("tensor count")? as usize;
        let mut out = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name = self.string("tensor name")?;
            let rank = self.u8("tensor rank")? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let d = self.u64("tensor dimension")?;
                shape.push(usize::try_from(d).map_err(|_| WireError::Malformed("dimension overflow".into()))?);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| WireError::Malformed(format!("tensor {name} is too large")))?;
            let raw = self.take(n, "tensor data")?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let tensor = Tensor::new(shape, data)
                .map_err(|e| WireError::Malformed(format!("tensor {name}: {e}")))?;
            out.push(NamedTensor { name, tensor });
        }
        Ok(out)
    }
}

fn decode_payload(tag: u8, payload: &[u8]) -> Result<WireMessage, WireError> {
    let mut r = Reader::new(payload);
    let msg = match tag {
        TAG_FETCH_PARAMS => {
            let shard_id = r.u32("shard id")?;
            let count = r.u32("key count")? as usize;
            let mut keys = Vec::with_capacity(count.min(1024));
            for _ in 0..count {
                keys.push(r.string("key")?);
            }
            WireMessage::FetchParams { shard_id, keys }
        }
        TAG_PARAMS_RESPONSE => WireMessage::ParamsResponse {
            version: r.u64("version")?,
            tensors: r.table()?,
        },
        TAG_PUSH_GRADS => WireMessage::PushGrads {
            replica_id: r.u32("replica id")?,
            step: r.u64("step")?,
            tensors: r.table()?,
        },
        TAG_ACK => WireMessage::Ack {
            version: r.u64("version")?,
        },
        other => return Err(WireError::UnknownTag(other)),
    };
    if r.remaining() != 0 {
        return Err(WireError::Malformed(format!(
            "{} trailing bytes after payload",
            r.remaining()
        )));
    }
    Ok(msg)
}

/// Decodes one frame from the front of `bytes`, returning the message and
/// the number of bytes consumed.
pub fn decode_frame(bytes: &[u8]) -> Result<(WireMessage, usize), WireError> {
    let mut r = Reader::new(bytes);
    let len = r.u32("frame header")? as usize;
    if len > MAX_PAYLOAD {
        return Err(WireError::TooLarge(len));
    }
    let tag = r.u8("frame header")?;
    if r.remaining() < len {
        return Err(WireError::Truncated {
            what: "frame",
            expected: 5 + len,
            actual: bytes.len(),
        });
    }
    let payload = r.take(len, "frame payload")?;
    Ok((decode_payload(tag, payload)?, 5 + len))
}

/// Decodes exactly one frame; trailing bytes are an error.
pub fn decode_message(bytes: &[u8]) -> Result<WireMessage, WireError> {
    let (msg, used) = decode_frame(bytes)?;
    if used != bytes.len() {
        return Err(WireError::Malformed(format!(
            "{} bytes after the frame",
            bytes.len() - used
        )));
    }
    Ok(msg)
}

pub fn write_message(w: &mut impl Write, msg: &WireMessage) -> Result<(), WireError> {
    w.write_all(&encode_message(msg))?;
    w.flush()?;
    Ok(())
}

/// Blocks until one whole frame has been read. `Ok(None)` on clean EOF
/// before any header byte.
pub fn read_message(r: &mut impl Read) -> Result<Option<WireMessage>, WireError> {
    let mut header = [0u8; 5];
    let mut got = 0;
    while got < header.len() {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => {
                return Err(WireError::Truncated {
                    what: "frame header",
                    expected: 5,
                    actual: got,
                })
            }
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_le_bytes(header[..4].try_into().unwrap()) as usize;
    if len > MAX_PAYLOAD {
        return Err(WireError::TooLarge(len));
    }
    if !matches!(header[4], TAG_FETCH_PARAMS..=TAG_ACK) {
        return Err(WireError::UnknownTag(header[4]));
    }
    let mut payload = vec![0u8; len];
    let mut got = 0;
    while got < len {
        match r.read(&mut payload[got..]) {
            Ok(0) => {
                return Err(WireError::Truncated {
                    what: "frame payload",
                    expected: len,
                    actual: got,
                })
            }
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    decode_payload(header[4], &payload).map(Some)
}
