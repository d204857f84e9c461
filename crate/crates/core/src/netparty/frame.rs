//! Wire format.
//!
//! Party to referee, one frame per chunk, all integers little-endian:
//!
//! ```text
//! offset size field
//!      0    4 magic "QFPF"
//!      4    2 version
//!      6    1 role (0 = Alice, 1 = Bob)
//!      7   16 session id
//!     23    8 m_total, codeword bits in the whole session
//!     31    8 chunk_index, 0, 1, 2, ... per role
//!     39    4 chunk_bits
//!     43    - payload, ceil(chunk_bits / 8) bytes
//! ```
//!
//! Payload bit `k` is bit `k % 8` of byte `k / 8`, as in code files; unused
//! high bits of the last byte must be zero. Example: the 16 bits
//! `1010000011110001` (first bit left) are sent as bytes `05 8f`.
//!
//! Referee to party, once, after the ruling:
//!
//! ```text
//!      0    4 magic "QFPV"
//!      4    2 version
//!      6   16 session id
//!     22    1 status (0 equal, 1 different, >= 16 aborted, see AbortCode)
//!     23    8 clicks on D0
//!     31    8 clicks on D1
//!     39    8 threshold
//! ```

use std::io::{self, Read};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitString;
use crate::decision::Outcome;

pub const FRAME_MAGIC: [u8; 4] = *b"QFPF";
pub const VERDICT_MAGIC: [u8; 4] = *b"QFPV";
pub const WIRE_VERSION: u16 = 1;
pub const FRAME_HEADER_LEN: usize = 43;
pub const VERDICT_LEN: usize = 47;
/// Largest chunk a frame may carry (16 MiB of payload).
pub const MAX_CHUNK_BITS: u32 = 1 << 27;

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum FrameError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("wire version {got}, expected {WIRE_VERSION}")]
    VersionMismatch { got: u16 },
    #[error("truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("chunk of {0} bits exceeds the {MAX_CHUNK_BITS}-bit limit")]
    ChunkBitsOverflow(u32),
    #[error("unknown role byte {0}")]
    BadRole(u8),
    #[error("unknown verdict status {0}")]
    BadStatus(u8),
    #[error("padding bits after the last payload bit are not zero")]
    NonZeroPadding,
    #[error("{0} bytes after the end of the message")]
    Trailing(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Alice,
    Bob,
}

impl Role {
    pub fn byte(self) -> u8 {
        match self {
            Role::Alice => 0,
            Role::Bob => 1,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self, FrameError> {
        match b {
            0 => Ok(Role::Alice),
            1 => Ok(Role::Bob),
            _ => Err(FrameError::BadRole(b)),
        }
    }

    pub fn index(self) -> usize {
        self.byte() as usize
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Role::Alice => "alice",
            Role::Bob => "bob",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FingerprintFrame {
    pub role: Role,
    pub session_id: [u8; 16],
    pub m_total: u64,
    pub chunk_index: u64,
    pub chunk_bits: u32,
    pub payload: Vec<u8>,
}

impl FingerprintFrame {
    /// Frame carrying bits `start..start + count` of `bits`.
    pub fn from_bits(
        role: Role,
        session_id: [u8; 16],
        m_total: u64,
        chunk_index: u64,
        bits: &BitString,
        start: usize,
        count: usize,
    ) -> Self {
        Self {
            role,
            session_id,
            m_total,
            chunk_index,
            chunk_bits: count as u32,
            payload: bits.range_to_packed_bytes(start, count),
        }
    }

    pub fn encoded_len(&self) -> usize {
        FRAME_HEADER_LEN + self.payload.len()
    }
}

fn payload_len(chunk_bits: u32) -> usize {
    (chunk_bits as usize).div_ceil(8)
}

pub fn encode_frame(frame: &FingerprintFrame) -> Vec<u8> {
    assert_eq!(frame.payload.len(), payload_len(frame.chunk_bits), "payload length must match chunk_bits");
    let mut out = Vec::with_capacity(frame.encoded_len());
    out.extend_from_slice(&FRAME_MAGIC);
    out.extend_from_slice(&WIRE_VERSION.to_le_bytes());
    out.push(frame.role.byte());
    out.extend_from_slice(&frame.session_id);
    out.extend_from_slice(&frame.m_total.to_le_bytes());
    out.extend_from_slice(&frame.chunk_index.to_le_bytes());
    out.extend_from_slice(&frame.chunk_bits.to_le_bytes());
    out.extend_from_slice(&frame.payload);
    out
}

struct Header {
    role: Role,
    session_id: [u8; 16],
    m_total: u64,
    chunk_index: u64,
    chunk_bits: u32,
}

fn parse_header(h: &[u8; FRAME_HEADER_LEN]) -> Result<Header, FrameError> {
    let magic: [u8; 4] = h[0..4].try_into().unwrap();
    if magic != FRAME_MAGIC {
        return Err(FrameError::BadMagic(magic));
    }
    let version = u16::from_le_bytes([h[4], h[5]]);
    if version != WIRE_VERSION {
        return Err(FrameError::VersionMismatch { got: version });
    }
    let role = Role::from_byte(h[6])?;
    let chunk_bits = u32::from_le_bytes(h[39..43].try_into().unwrap());
    if chunk_bits > MAX_CHUNK_BITS {
        return Err(FrameError::ChunkBitsOverflow(chunk_bits));
    }
    Ok(Header {
        role,
        session_id: h[7..23].try_into().unwrap(),
        m_total: u64::from_le_bytes(h[23..31].try_into().unwrap()),
        chunk_index: u64::from_le_bytes(h[31..39].try_into().unwrap()),
        chunk_bits,
    })
}

fn check_padding(payload: &[u8], chunk_bits: u32) -> Result<(), FrameError> {
    let used = chunk_bits % 8;
    if used != 0 {
        let last = *payload.last().expect("non-empty payload");
        if last >> used != 0 {
            return Err(FrameError::NonZeroPadding);
        }
    }
    Ok(())
}

fn assemble(h: Header, payload: Vec<u8>) -> Result<FingerprintFrame, FrameError> {
    check_padding(&payload, h.chunk_bits)?;
    Ok(FingerprintFrame {
        role: h.role,
        session_id: h.session_id,
        m_total: h.m_total,
        chunk_index: h.chunk_index,
        chunk_bits: h.chunk_bits,
        payload,
    })
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Result<FingerprintFrame, FrameError> {
    if bytes.len() < FRAME_HEADER_LEN {
        return Err(FrameError::Truncated { need: FRAME_HEADER_LEN, have: bytes.len() });
    }
    let h = parse_header(bytes[..FRAME_HEADER_LEN].try_into().unwrap())?;
    let need = FRAME_HEADER_LEN + payload_len(h.chunk_bits);
    if bytes.len() < need {
        return Err(FrameError::Truncated { need, have: bytes.len() });
    }
    if bytes.len() > need {
        return Err(FrameError::Trailing(bytes.len() - need));
    }
    assemble(h, bytes[FRAME_HEADER_LEN..].to_vec())
}

#[derive(Debug, Error)]
pub enum ReadError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Reads as many bytes as available up to `buf.len()`; returns the count.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(k) => got += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(got)
}

/// Next frame from a stream; `Ok(None)` on a clean end of stream between frames.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<FingerprintFrame>, ReadError> {
    let mut h = [0u8; FRAME_HEADER_LEN];
    let got = read_full(r, &mut h)?;
    if got == 0 {
        return Ok(None);
    }
    if got < FRAME_HEADER_LEN {
        return Err(FrameError::Truncated { need: FRAME_HEADER_LEN, have: got }.into());
    }
    let header = parse_header(&h)?;
    let mut payload = vec![0u8; payload_len(header.chunk_bits)];
    let got = read_full(r, &mut payload)?;
    if got < payload.len() {
        return Err(
            FrameError::Truncated { need: FRAME_HEADER_LEN + payload.len(), have: FRAME_HEADER_LEN + got }.into()
        );
    }
    Ok(Some(assemble(header, payload)?))
}

pub fn session_hex(id: &[u8; 16]) -> String {
    id.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn parse_session_hex(s: &str) -> Option<[u8; 16]> {
    if s.len() != 32 || !s.is_ascii() {
        return None;
    }
    let mut id = [0u8; 16];
    for (i, b) in id.iter_mut().enumerate() {
        *b = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).ok()?;
    }
    Some(id)
}

/// Session ids as 32 hex digits in JSON.
mod hex_id {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(id: &[u8; 16], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::session_hex(id))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 16], D::Error> {
        let s = String::deserialize(d)?;
        super::parse_session_hex(&s).ok_or_else(|| D::Error::custom("session id must be 32 hex digits"))
    }
}

/// Why a session was abandoned; carried in the verdict status byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbortCode {
    RoleCollision = 16,
    IndexGap = 17,
    MMismatch = 18,
    Disconnected = 19,
    Overflow = 20,
    Protocol = 21,
    Timeout = 22,
}

impl AbortCode {
    fn from_byte(b: u8) -> Option<Self> {
        use AbortCode::*;
        [RoleCollision, IndexGap, MMismatch, Disconnected, Overflow, Protocol, Timeout]
            .into_iter()
            .find(|c| *c as u8 == b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "status", content = "code")]
pub enum VerdictStatus {
    Ruled(Outcome),
    Aborted(AbortCode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictMessage {
    #[serde(with = "hex_id")]
    pub session_id: [u8; 16],
    pub status: VerdictStatus,
    pub clicks_d0: u64,
    pub clicks_d1: u64,
    pub threshold: u64,
}

pub fn encode_verdict(v: &VerdictMessage) -> [u8; VERDICT_LEN] {
    let mut out = [0u8; VERDICT_LEN];
    out[0..4].copy_from_slice(&VERDICT_MAGIC);
    out[4..6].copy_from_slice(&WIRE_VERSION.to_le_bytes());
    out[6..22].copy_from_slice(&v.session_id);
    out[22] = match v.status {
        VerdictStatus::Ruled(Outcome::Equal) => 0,
        VerdictStatus::Ruled(Outcome::Different) => 1,
        VerdictStatus::Aborted(c) => c as u8,
    };
    out[23..31].copy_from_slice(&v.clicks_d0.to_le_bytes());
    out[31..39].copy_from_slice(&v.clicks_d1.to_le_bytes());
    out[39..47].copy_from_slice(&v.threshold.to_le_bytes());
    out
}

pub fn decode_verdict(bytes: &[u8]) -> Result<VerdictMessage, FrameError> {
    if bytes.len() < VERDICT_LEN {
        return Err(FrameError::Truncated { need: VERDICT_LEN, have: bytes.len() });
    }
    if bytes.len() > VERDICT_LEN {
        return Err(FrameError::Trailing(bytes.len() - VERDICT_LEN));
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != VERDICT_MAGIC {
        return Err(FrameError::BadMagic(magic));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != WIRE_VERSION {
        return Err(FrameError::VersionMismatch { got: version });
    }
    let status = match bytes[22] {
        0 => VerdictStatus::Ruled(Outcome::Equal),
        1 => VerdictStatus::Ruled(Outcome::Different),
        b => VerdictStatus::Aborted(AbortCode::from_byte(b).ok_or(FrameError::BadStatus(b))?),
    };
    Ok(VerdictMessage {
        session_id: bytes[6..22].try_into().unwrap(),
        status,
        clicks_d0: u64::from_le_bytes(bytes[23..31].try_into().unwrap()),
        clicks_d1: u64::from_le_bytes(bytes[31..39].try_into().unwrap()),
        threshold: u64::from_le_bytes(bytes[39..47].try_into().unwrap()),
    })
}

pub fn read_verdict<R: Read>(r: &mut R) -> Result<VerdictMessage, ReadError> {
    let mut buf = [0u8; VERDICT_LEN];
    let got = read_full(r, &mut buf)?;
    if got < VERDICT_LEN {
        return Err(FrameError::Truncated { need: VERDICT_LEN, have: got }.into());
    }
    Ok(decode_verdict(&buf)?)
}
