//! On-disk layout for codes and codewords.
//!
//! ```text
//! offset size field
//!      0    4 magic "QFPC"
//!      4    2 version (u16, little-endian)
//!      6    8 n (u64, little-endian)
//!     14    8 m (u64, little-endian)
//!     22   32 seed
//!     54    - codeword, ceil(m/8) bytes, bit i at byte i/8 bit i%8
//! ```
//!
//! A code description is the header alone.

use super::{CodecError, Seed};
use crate::bits::BitString;

pub const CODE_MAGIC: [u8; 4] = *b"QFPC";
pub const CODE_FILE_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 54;

#[derive(Debug, Clone, PartialEq)]
pub struct CodeFile {
    pub n: u64,
    pub m: u64,
    pub seed: Seed,
    pub codeword: Option<BitString>,
}

pub fn encode_code_file(file: &CodeFile) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + file.m.div_ceil(8) as usize);
    out.extend_from_slice(&CODE_MAGIC);
    out.extend_from_slice(&CODE_FILE_VERSION.to_le_bytes());
    out.extend_from_slice(&file.n.to_le_bytes());
    out.extend_from_slice(&file.m.to_le_bytes());
    out.extend_from_slice(&file.seed.0);
    if let Some(cw) = &file.codeword {
        assert_eq!(cw.len() as u64, file.m, "codeword length must equal m");
        out.extend_from_slice(&cw.to_packed_bytes());
    }
    out
}

pub fn decode_code_file(bytes: &[u8]) -> Result<CodeFile, CodecError> {
    if bytes.len() < HEADER_LEN {
        return Err(CodecError::Format("truncated header"));
    }
    if bytes[..4] != CODE_MAGIC {
        return Err(CodecError::Format("bad magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CODE_FILE_VERSION {
        return Err(CodecError::Format("unsupported version"));
    }
    let n = u64::from_le_bytes(bytes[6..14].try_into().unwrap());
    let m = u64::from_le_bytes(bytes[14..22].try_into().unwrap());
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&bytes[22..54]);
    let payload = &bytes[HEADER_LEN..];
    let codeword = if payload.is_empty() {
        None
    } else {
        let cw = BitString::from_packed_bytes(payload, m as usize)
            .ok_or(CodecError::Format("payload length or padding does not match m"))?;
        Some(cw)
    };
    Ok(CodeFile { n, m, seed: Seed(seed), codeword })
}
