//! Block compression codecs behind a codec-id registry.
//!
//! Two codecs are implemented: `store` (id 0, identity) and `deflate`
//! (id 1, raw RFC 1951 stream, no zlib or gzip framing; the basket header
//! already carries lengths and a CRC, so wrapper checksums would be
//! redundant bytes). Ids 2..=255 are reserved and rejected at both ends.
//!
//! Compression and decompression are pure functions of their arguments and
//! hold no locks, so any number of baskets can be (de)compressed
//! concurrently. That property is what every parallel path in this crate
//! schedules around.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::sync::assert_unlocked;

/// Registry id of a compression codec, as written into basket headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CodecId(pub u8);

impl CodecId {
    pub const STORE: CodecId = CodecId(0);
    pub const DEFLATE: CodecId = CodecId(1);

    pub fn name(self) -> &'static str {
        match self {
            CodecId::STORE => "store",
            CodecId::DEFLATE => "deflate",
            CodecId(_) => "unknown",
        }
    }

    pub fn from_name(name: &str) -> Result<CodecId> {
        match name {
            "store" => Ok(CodecId::STORE),
            "deflate" => Ok(CodecId::DEFLATE),
            other => Err(Error::InvalidArgument(format!("unknown codec {other:?}"))),
        }
    }
}

/// Effort level 0..=9; interpreted by the codec, ignored by `store`.
/// Level changes compressed size and speed, never round-trip results.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompressionLevel(u8);

impl CompressionLevel {
    pub const DEFAULT: CompressionLevel = CompressionLevel(6);

    pub fn new(level: u8) -> Result<CompressionLevel> {
        if level > 9 {
            return Err(Error::InvalidArgument(format!(
                "compression level {level} outside 0..=9"
            )));
        }
        Ok(CompressionLevel(level))
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl Default for CompressionLevel {
    fn default() -> Self {
        CompressionLevel::DEFAULT
    }
}

/// Compresses one block. `store` returns the input unchanged; `deflate`
/// returns a raw RFC 1951 stream. No incompressible-data fallback is
/// applied: output may be larger than the input.
pub fn compress(codec: CodecId, level: CompressionLevel, data: &[u8]) -> Result<Vec<u8>> {
    assert_unlocked("compress");
    if data.len() as u64 >= u64::from(u32::MAX) {
        return Err(Error::InvalidArgument(format!(
            "block of {} bytes exceeds the 4 GiB basket limit",
            data.len()
        )));
    }
    match codec {
        CodecId::STORE => Ok(data.to_vec()),
        CodecId::DEFLATE => {
            let mut encoder = flate2::write::DeflateEncoder::new(
                Vec::with_capacity(data.len() / 2 + 64),
                flate2::Compression::new(level.get() as u32),
            );
            encoder
                .write_all(data)
                .and_then(|_| encoder.finish())
                .map_err(|e| Error::CorruptStream(format!("deflate encoder: {e}")))
        }
        CodecId(id) => Err(Error::UnknownCodec(id)),
    }
}

/// Decompresses one block to exactly `expected_len` bytes. For `deflate`
/// any valid RFC 1951 stream is accepted regardless of which compressor
/// produced it, but it must consume the whole input and inflate to the
/// expected length.
pub fn decompress(codec: CodecId, data: &[u8], expected_len: u32) -> Result<Vec<u8>> {
    assert_unlocked("decompress");
    match codec {
        CodecId::STORE => {
            if data.len() as u64 != expected_len as u64 {
                return Err(Error::LengthMismatch {
                    expected: expected_len as u64,
                    actual: data.len() as u64,
                });
            }
            Ok(data.to_vec())
        }
        CodecId::DEFLATE => {
            let mut decoder = flate2::read::DeflateDecoder::new(data);
            let mut out = Vec::with_capacity(expected_len as usize);
            // Read one byte past the expected length so an overlong stream
            // is detected without inflating it fully.
            let produced = decoder
                .by_ref()
                .take(expected_len as u64 + 1)
                .read_to_end(&mut out)
                .map_err(|e| Error::CorruptStream(format!("deflate decoder: {e}")))?;
            if produced as u64 != expected_len as u64 {
                return Err(Error::LengthMismatch {
                    expected: expected_len as u64,
                    actual: produced as u64,
                });
            }
            if decoder.total_in() < data.len() as u64 {
                return Err(Error::CorruptStream(format!(
                    "{} bytes left after end of deflate stream",
                    data.len() as u64 - decoder.total_in()
                )));
            }
            Ok(out)
        }
        CodecId(id) => Err(Error::UnknownCodec(id)),
    }
}
