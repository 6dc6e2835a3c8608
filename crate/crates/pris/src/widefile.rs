//! On-disk form of a 32-bit bit-packed container.
//!
//! A 16-byte header (magic `PRW1`, then width, height and channel count as
//! little-endian u32) followed by the words as little-endian u32,
//! interleaved per pixel.

use std::path::Path;

use byteorder::{ByteOrder, LittleEndian as LE};
use pris_core::bitpack::WideContainer;

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 4] = b"PRW1";
pub const HEADER_LEN: usize = 16;

pub fn encode(c: &WideContainer) -> Vec<u8> {
    let mut out = vec![0u8; HEADER_LEN + 4 * c.words.len()];
    out[..4].copy_from_slice(MAGIC);
    LE::write_u32_into(&[c.width, c.height, c.channels], &mut out[4..HEADER_LEN]);
    LE::write_u32_into(&c.words, &mut out[HEADER_LEN..]);
    out
}

pub fn decode(bytes: &[u8]) -> CliResult<WideContainer> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(CliError::Data("not a wide container file".into()));
    }
    let mut dims = [0u32; 3];
    LE::read_u32_into(&bytes[4..HEADER_LEN], &mut dims);
    let body = &bytes[HEADER_LEN..];
    if !body.len().is_multiple_of(4) {
        return Err(CliError::Data("wide container body is not whole words".into()));
    }
    let mut words = vec![0u32; body.len() / 4];
    LE::read_u32_into(body, &mut words);
    Ok(WideContainer::new(dims[0], dims[1], dims[2], words)?)
}

pub fn save(path: &Path, c: &WideContainer) -> CliResult<()> {
    std::fs::write(path, encode(c)).map_err(|e| CliError::io(path, e))
}

pub fn load(path: &Path) -> CliResult<WideContainer> {
    decode(&std::fs::read(path).map_err(|e| CliError::io(path, e))?)
}
