//! Party client: streams one codeword to the referee and waits for the ruling.

use std::io::{self, BufWriter, Read, Write};
use std::net::{Shutdown, TcpStream};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::frame::{
    decode_verdict, encode_frame, session_hex, FingerprintFrame, FrameError, Role, VerdictMessage, VerdictStatus,
    MAX_CHUNK_BITS, VERDICT_LEN,
};
use crate::bits::BitString;
use crate::codec::{encode, CodecError, ToeplitzCode};

pub const DEFAULT_CHUNK_BITS: u32 = 1 << 16;

#[derive(Debug, Error)]
pub enum PartyError {
    #[error("cannot reach referee at {addr}")]
    Connect {
        addr: String,
        #[source]
        source: io::Error,
    },
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("bad verdict: {0}")]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("chunk size {0} outside [1, {MAX_CHUNK_BITS}]")]
    ChunkBits(u32),
    #[error("verdict for session {got}, expected {want}")]
    WrongSession { got: String, want: String },
    #[error("referee sent {0} bytes after the verdict")]
    TrailingBytes(u64),
    #[error("connection closed before a verdict arrived")]
    NoVerdict,
}

pub enum PartyInput {
    /// Encode `x` with `code` before sending.
    Encode {
        code: ToeplitzCode,
        x: BitString,
    },
    Codeword(BitString),
}

#[derive(Debug, Clone)]
pub struct PartyConfig {
    pub role: Role,
    pub referee: String,
    pub session_id: [u8; 16],
    pub chunk_bits: u32,
    /// Give up waiting for the verdict after this long.
    pub verdict_timeout: Option<Duration>,
}

impl PartyConfig {
    pub fn new(role: Role, referee: impl Into<String>, session_id: [u8; 16]) -> Self {
        Self { role, referee: referee.into(), session_id, chunk_bits: DEFAULT_CHUNK_BITS, verdict_timeout: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartyReport {
    pub role: Role,
    pub session_id: String,
    pub m: u64,
    pub frames: u64,
    pub payload_bits: u64,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub verdict: VerdictMessage,
}

impl PartyReport {
    pub fn aborted(&self) -> bool {
        matches!(self.verdict.status, VerdictStatus::Aborted(_))
    }
}

/// Session id `k` of a run of several sessions starting from `base`.
pub fn session_id_for(base: &[u8; 16], k: u64) -> [u8; 16] {
    let mut id = *base;
    let tail = u64::from_le_bytes(id[8..].try_into().unwrap()) ^ k;
    id[8..].copy_from_slice(&tail.to_le_bytes());
    id
}

/// Runs one session. An aborted session is still `Ok`; inspect
/// `verdict.status`.
pub fn run_party(config: &PartyConfig, input: PartyInput) -> Result<PartyReport, PartyError> {
    if config.chunk_bits == 0 || config.chunk_bits > MAX_CHUNK_BITS {
        return Err(PartyError::ChunkBits(config.chunk_bits));
    }
    let codeword = match input {
        PartyInput::Encode { code, x } => encode(&code, &x)?,
        PartyInput::Codeword(c) => c,
    };
    let stream = TcpStream::connect(&config.referee)
        .map_err(|source| PartyError::Connect { addr: config.referee.clone(), source })?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(config.verdict_timeout)?;
    let m = codeword.len() as u64;
    let chunk = config.chunk_bits as usize;
    let mut frames = 0u64;
    let mut bytes_sent = 0u64;
    let send = (|| -> io::Result<()> {
        let mut w = BufWriter::with_capacity(1 << 16, &stream);
        let mut start = 0;
        while start < codeword.len() {
            let count = chunk.min(codeword.len() - start);
            let f = FingerprintFrame::from_bits(config.role, config.session_id, m, frames, &codeword, start, count);
            let bytes = encode_frame(&f);
            w.write_all(&bytes)?;
            bytes_sent += bytes.len() as u64;
            frames += 1;
            start += count;
        }
        w.flush()
    })();
    // a failed write usually means the referee aborted; its verdict may
    // still be readable
    let send_err = send.err();
    let mut r = &stream;
    let mut buf = [0u8; VERDICT_LEN];
    let mut got = 0;
    while got < VERDICT_LEN {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(k) => got += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(send_err.unwrap_or(e).into()),
        }
    }
    if got < VERDICT_LEN {
        return Err(send_err.map_or(PartyError::NoVerdict, PartyError::Io));
    }
    let verdict = decode_verdict(&buf)?;
    let mut rest = Vec::new();
    let _ = r.read_to_end(&mut rest);
    let _ = stream.shutdown(Shutdown::Both);
    if verdict.session_id != config.session_id {
        return Err(PartyError::WrongSession {
            got: session_hex(&verdict.session_id),
            want: session_hex(&config.session_id),
        });
    }
    if !rest.is_empty() {
        return Err(PartyError::TrailingBytes(rest.len() as u64));
    }
    if let (Some(e), VerdictStatus::Ruled(_)) = (send_err, verdict.status) {
        return Err(e.into());
    }
    Ok(PartyReport {
        role: config.role,
        session_id: session_hex(&config.session_id),
        m,
        frames,
        payload_bits: m,
        bytes_sent,
        bytes_received: (VERDICT_LEN + rest.len()) as u64,
        verdict,
    })
}
