//! On-disk layout of a basket file.
//!
//! A file is a single append-only stream:
//!
//! ```text
//! +--------+----------+----------+     +----------+------------------+
//! | header | basket 0 | basket 1 | ... | basket n | footer + trailer |
//! +--------+----------+----------+     +----------+------------------+
//! ```
//!
//! * header: magic `"BKT1"` followed by a `u32` format version (= 1).
//! * basket: a 29-byte [`BasketHeader`] followed by the compressed payload
//!   of consecutive entries of one column.
//! * footer: serialized [`Schema`], [`BasketIndex`] and entry total, then a
//!   `u32` footer length and the trailer magic `"BKTF"`. The trailing eight
//!   bytes locate the footer backward, so metadata is readable without
//!   scanning any basket.
//!
//! All integers are little-endian with no padding. Encoding is canonical:
//! decoding then re-encoding any valid metadata reproduces identical bytes.

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"BKT1";
pub const TRAILER_MAGIC: [u8; 4] = *b"BKTF";
pub const FORMAT_VERSION: u32 = 1;
pub const FILE_HEADER_LEN: usize = 8;
pub const BASKET_HEADER_LEN: usize = 29;
/// Conventional extension for basket files.
pub const FILE_EXTENSION: &str = "bkt";

/// CRC-32/ISO-HDLC over `data` (reflected 0xEDB88320, init and final
/// XOR 0xFFFFFFFF). Check value: `crc32(b"123456789") == 0xCBF43926`.
pub fn crc32(data: &[u8]) -> u32 {
    crc32fast::hash(data)
}

/// Entry type of a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum TypeCode {
    I32 = 0,
    I64 = 1,
    F32 = 2,
    F64 = 3,
    /// Variable-length byte strings; each entry is stored as a `u32`
    /// length prefix followed by that many raw bytes.
    Bytes = 4,
}

impl TypeCode {
    pub const ALL: [TypeCode; 5] = [
        TypeCode::I32,
        TypeCode::I64,
        TypeCode::F32,
        TypeCode::F64,
        TypeCode::Bytes,
    ];

    pub fn from_u8(code: u8) -> Result<TypeCode> {
        match code {
            0 => Ok(TypeCode::I32),
            1 => Ok(TypeCode::I64),
            2 => Ok(TypeCode::F32),
            3 => Ok(TypeCode::F64),
            4 => Ok(TypeCode::Bytes),
            other => Err(Error::InvalidSchema(format!("unknown type code {other}"))),
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    /// Bytes per entry for fixed-width types, `None` for var-bytes.
    pub fn fixed_width(self) -> Option<usize> {
        match self {
            TypeCode::I32 | TypeCode::F32 => Some(4),
            TypeCode::I64 | TypeCode::F64 => Some(8),
            TypeCode::Bytes => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TypeCode::I32 => "i32",
            TypeCode::I64 => "i64",
            TypeCode::F32 => "f32",
            TypeCode::F64 => "f64",
            TypeCode::Bytes => "bytes",
        }
    }
}

/// One named, typed column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub type_code: TypeCode,
}

impl Column {
    pub fn new(name: impl Into<String>, type_code: TypeCode) -> Column {
        Column {
            name: name.into(),
            type_code,
        }
    }
}

/// Ordered list of columns; a column's id is its position in the list.
///
/// Construction validates the invariants (at least one column; names
/// unique, non-empty, at most 255 bytes of UTF-8), so a `Schema` value is
/// always encodable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    columns: Vec<Column>,
}

impl Schema {
    pub fn new(columns: Vec<Column>) -> Result<Schema> {
        if columns.is_empty() {
            return Err(Error::InvalidSchema("schema has no columns".into()));
        }
        for (i, col) in columns.iter().enumerate() {
            if col.name.is_empty() {
                return Err(Error::InvalidSchema(format!("column {i} has an empty name")));
            }
            if col.name.len() > 255 {
                return Err(Error::InvalidSchema(format!(
                    "column {:?} name exceeds 255 bytes",
                    col.name
                )));
            }
            if columns[..i].iter().any(|c| c.name == col.name) {
                return Err(Error::InvalidSchema(format!(
                    "duplicate column name {:?}",
                    col.name
                )));
            }
        }
        Ok(Schema { columns })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn column(&self, id: u32) -> &Column {
        &self.columns[id as usize]
    }

    pub fn column_id(&self, name: &str) -> Option<u32> {
        self.columns.iter().position(|c| c.name == name).map(|i| i as u32)
    }

    /// Appends the canonical encoding: `u32` column count, then per column
    /// a `u8` name length, the UTF-8 name bytes, and the `u8` type code.
    pub fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.columns.len() as u32).to_le_bytes());
        for col in &self.columns {
            out.push(col.name.len() as u8);
            out.extend_from_slice(col.name.as_bytes());
            out.push(col.type_code.as_u8());
        }
    }

    pub fn encoded(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode(&mut out);
        out
    }

    pub fn decode(data: &[u8], cursor: &mut usize) -> Result<Schema> {
        let n = read_u32(data, cursor).ok_or_else(|| truncated_footer("schema column count"))?;
        let mut columns = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let name_len =
                read_u8(data, cursor).ok_or_else(|| truncated_footer("column name length"))?;
            let name_bytes = take(data, cursor, name_len as usize)
                .ok_or_else(|| truncated_footer("column name"))?;
            let name = std::str::from_utf8(name_bytes)
                .map_err(|_| Error::InvalidSchema("column name is not valid UTF-8".into()))?
                .to_string();
            let code = read_u8(data, cursor).ok_or_else(|| truncated_footer("column type"))?;
            columns.push(Column::new(name, TypeCode::from_u8(code)?));
        }
        Schema::new(columns)
    }
}

/// Fixed eight-byte file header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FileHeader {
    pub version: u32,
}

impl Default for FileHeader {
    fn default() -> Self {
        FileHeader {
            version: FORMAT_VERSION,
        }
    }
}

impl FileHeader {
    pub fn encode(&self) -> [u8; FILE_HEADER_LEN] {
        let mut out = [0u8; FILE_HEADER_LEN];
        out[..4].copy_from_slice(&MAGIC);
        out[4..].copy_from_slice(&self.version.to_le_bytes());
        out
    }

    pub fn decode(data: &[u8]) -> Result<FileHeader> {
        if data.len() < FILE_HEADER_LEN {
            return Err(Error::MalformedHeader(format!(
                "file too short for header: {} bytes",
                data.len()
            )));
        }
        if data[..4] != MAGIC {
            return Err(Error::MalformedHeader(format!(
                "bad magic {:02x?}",
                &data[..4]
            )));
        }
        let version = u32::from_le_bytes(data[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::MalformedHeader(format!(
                "unsupported format version {version}"
            )));
        }
        Ok(FileHeader { version })
    }
}

/// Self-describing header preceding every basket payload. Exactly 29
/// bytes on disk: `column_id` u32, `codec_id` u8, `n_entries` u32,
/// `first_entry` u64, `uncompressed_len` u32, `compressed_len` u32,
/// `payload_crc` u32.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasketHeader {
    pub column_id: u32,
    pub codec_id: u8,
    pub n_entries: u32,
    /// Global index of the first entry in this basket.
    pub first_entry: u64,
    pub uncompressed_len: u32,
    pub compressed_len: u32,
    /// CRC-32 of the compressed payload.
    pub payload_crc: u32,
}

impl BasketHeader {
    pub fn encode(&self) -> [u8; BASKET_HEADER_LEN] {
        let mut out = [0u8; BASKET_HEADER_LEN];
        out[0..4].copy_from_slice(&self.column_id.to_le_bytes());
        out[4] = self.codec_id;
        out[5..9].copy_from_slice(&self.n_entries.to_le_bytes());
        out[9..17].copy_from_slice(&self.first_entry.to_le_bytes());
        out[17..21].copy_from_slice(&self.uncompressed_len.to_le_bytes());
        out[21..25].copy_from_slice(&self.compressed_len.to_le_bytes());
        out[25..29].copy_from_slice(&self.payload_crc.to_le_bytes());
        out
    }

    pub fn decode(data: &[u8]) -> Result<BasketHeader> {
        if data.len() < BASKET_HEADER_LEN {
            return Err(Error::Truncated {
                needed: BASKET_HEADER_LEN as u64,
                available: data.len() as u64,
            });
        }
        Ok(BasketHeader {
            column_id: u32::from_le_bytes(data[0..4].try_into().unwrap()),
            codec_id: data[4],
            n_entries: u32::from_le_bytes(data[5..9].try_into().unwrap()),
            first_entry: u64::from_le_bytes(data[9..17].try_into().unwrap()),
            uncompressed_len: u32::from_le_bytes(data[17..21].try_into().unwrap()),
            compressed_len: u32::from_le_bytes(data[21..25].try_into().unwrap()),
            payload_crc: u32::from_le_bytes(data[25..29].try_into().unwrap()),
        })
    }
}

/// Checks that `payload` matches the length and checksum a header claims.
pub fn verify_payload(header: &BasketHeader, payload: &[u8]) -> Result<()> {
    if payload.len() as u64 != header.compressed_len as u64 {
        return Err(Error::LengthMismatch {
            expected: header.compressed_len as u64,
            actual: payload.len() as u64,
        });
    }
    let computed = crc32(payload);
    if computed != header.payload_crc {
        return Err(Error::CrcMismatch {
            stored: header.payload_crc,
            computed,
        });
    }
    Ok(())
}

/// Serializes a basket: header bytes followed by the payload.
pub fn encode_basket(header: &BasketHeader, payload: &[u8]) -> Result<Vec<u8>> {
    verify_payload(header, payload)?;
    let mut out = Vec::with_capacity(BASKET_HEADER_LEN + payload.len());
    out.extend_from_slice(&header.encode());
    out.extend_from_slice(payload);
    Ok(out)
}

/// Parses the basket starting at `at`, returning the header and a slice of
/// the payload after verifying its length and CRC.
pub fn decode_basket(data: &[u8], at: usize) -> Result<(BasketHeader, &[u8])> {
    let available = data.len().saturating_sub(at) as u64;
    if available < BASKET_HEADER_LEN as u64 {
        return Err(Error::Truncated {
            needed: BASKET_HEADER_LEN as u64,
            available,
        });
    }
    let header = BasketHeader::decode(&data[at..])?;
    let needed = BASKET_HEADER_LEN as u64 + header.compressed_len as u64;
    if available < needed {
        return Err(Error::Truncated { needed, available });
    }
    let start = at + BASKET_HEADER_LEN;
    let payload = &data[start..start + header.compressed_len as usize];
    verify_payload(&header, payload)?;
    Ok((header, payload))
}

/// Location of one basket, as recorded in the index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasketLocation {
    /// Offset of the basket header from the start of the file.
    pub file_offset: u64,
    pub first_entry: u64,
    pub n_entries: u32,
}

/// Per-column directory of basket locations, in entry order. This is what
/// makes selective single-column reads possible: a reader seeks straight
/// to the baskets of the columns it wants.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BasketIndex {
    columns: Vec<Vec<BasketLocation>>,
}

impl BasketIndex {
    pub fn new(n_columns: usize) -> BasketIndex {
        BasketIndex {
            columns: vec![Vec::new(); n_columns],
        }
    }

    pub fn from_columns(columns: Vec<Vec<BasketLocation>>) -> BasketIndex {
        BasketIndex { columns }
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, id: u32) -> &[BasketLocation] {
        &self.columns[id as usize]
    }

    pub fn push(&mut self, column_id: u32, loc: BasketLocation) {
        self.columns[column_id as usize].push(loc);
    }

    pub fn n_baskets(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    /// Checks contiguity (each column's baskets cover `[0, total)` exactly
    /// once, in order) and that every column accounts for `total` entries.
    pub fn validate(&self, total: u64) -> Result<()> {
        for (id, baskets) in self.columns.iter().enumerate() {
            let mut next = 0u64;
            for loc in baskets {
                if loc.n_entries == 0 {
                    return Err(Error::IndexInconsistent(format!(
                        "column {id}: empty basket at entry {}",
                        loc.first_entry
                    )));
                }
                if loc.first_entry != next {
                    return Err(Error::IndexInconsistent(format!(
                        "column {id}: basket starts at entry {}, expected {next}",
                        loc.first_entry
                    )));
                }
                next += loc.n_entries as u64;
            }
            if next != total {
                return Err(Error::IndexInconsistent(format!(
                    "column {id} holds {next} entries, file total is {total}"
                )));
            }
        }
        Ok(())
    }

    /// Per column: `u32` basket count, then per basket `u64` file offset,
    /// `u64` first entry, `u32` entry count.
    pub fn encode(&self, out: &mut Vec<u8>) {
        for baskets in &self.columns {
            out.extend_from_slice(&(baskets.len() as u32).to_le_bytes());
            for loc in baskets {
                out.extend_from_slice(&loc.file_offset.to_le_bytes());
                out.extend_from_slice(&loc.first_entry.to_le_bytes());
                out.extend_from_slice(&loc.n_entries.to_le_bytes());
            }
        }
    }

    pub fn decode(data: &[u8], cursor: &mut usize, n_columns: usize) -> Result<BasketIndex> {
        let mut columns = Vec::with_capacity(n_columns);
        for _ in 0..n_columns {
            let n = read_u32(data, cursor).ok_or_else(|| truncated_footer("basket count"))?;
            let mut baskets = Vec::with_capacity(n as usize);
            for _ in 0..n {
                let file_offset =
                    read_u64(data, cursor).ok_or_else(|| truncated_footer("basket offset"))?;
                let first_entry =
                    read_u64(data, cursor).ok_or_else(|| truncated_footer("basket first entry"))?;
                let n_entries =
                    read_u32(data, cursor).ok_or_else(|| truncated_footer("basket entry count"))?;
                baskets.push(BasketLocation {
                    file_offset,
                    first_entry,
                    n_entries,
                });
            }
            columns.push(baskets);
        }
        Ok(BasketIndex { columns })
    }
}

/// Trailing metadata block: schema, index and entry total.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Footer {
    pub schema: Schema,
    pub index: BasketIndex,
    pub total_entries: u64,
}

impl Footer {
    /// Serializes the full footer including the length field and trailer
    /// magic, validating the index invariants first.
    pub fn encode(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = Vec::new();
        self.schema.encode(&mut out);
        self.index.encode(&mut out);
        out.extend_from_slice(&self.total_entries.to_le_bytes());
        let footer_len = out.len() as u32;
        out.extend_from_slice(&footer_len.to_le_bytes());
        out.extend_from_slice(&TRAILER_MAGIC);
        Ok(out)
    }

    /// Decodes the footer body (everything before the length field). The
    /// body must be consumed exactly.
    pub fn decode_body(body: &[u8]) -> Result<Footer> {
        let mut cursor = 0usize;
        let schema = Schema::decode(body, &mut cursor)?;
        let index = BasketIndex::decode(body, &mut cursor, schema.len())?;
        let total_entries =
            read_u64(body, &mut cursor).ok_or_else(|| truncated_footer("entry total"))?;
        if cursor != body.len() {
            return Err(Error::MalformedFooter(format!(
                "{} unexpected bytes at end of footer",
                body.len() - cursor
            )));
        }
        let footer = Footer {
            schema,
            index,
            total_entries,
        };
        footer.validate()?;
        Ok(footer)
    }

    pub fn validate(&self) -> Result<()> {
        if self.index.n_columns() != self.schema.len() {
            return Err(Error::IndexInconsistent(format!(
                "index covers {} columns, schema has {}",
                self.index.n_columns(),
                self.schema.len()
            )));
        }
        self.index.validate(self.total_entries)
    }
}

/// Parses the trailing eight bytes of a file, returning the footer length.
pub fn decode_trailer(trailer: &[u8; 8]) -> Result<u32> {
    if trailer[4..] != TRAILER_MAGIC {
        return Err(Error::MalformedFooter(format!(
            "bad trailer magic {:02x?}",
            &trailer[4..]
        )));
    }
    Ok(u32::from_le_bytes(trailer[..4].try_into().unwrap()))
}

/// Encodes file metadata as separate header and footer byte blocks.
pub fn encode_metadata(header: &FileHeader, footer: &Footer) -> Result<(Vec<u8>, Vec<u8>)> {
    Ok((header.encode().to_vec(), footer.encode()?))
}

/// Decodes and validates metadata from complete file bytes.
pub fn decode_metadata(file: &[u8]) -> Result<(FileHeader, Footer)> {
    let header = FileHeader::decode(file)?;
    if file.len() < FILE_HEADER_LEN + 8 {
        return Err(Error::MalformedFooter(format!(
            "file too short for a footer: {} bytes",
            file.len()
        )));
    }
    let trailer: [u8; 8] = file[file.len() - 8..].try_into().unwrap();
    let footer_len = decode_trailer(&trailer)? as usize;
    let body_end = file.len() - 8;
    if footer_len > body_end - FILE_HEADER_LEN {
        return Err(Error::MalformedFooter(format!(
            "footer length {footer_len} exceeds file"
        )));
    }
    let footer = Footer::decode_body(&file[body_end - footer_len..body_end])?;
    Ok((header, footer))
}

fn take<'a>(data: &'a [u8], cursor: &mut usize, n: usize) -> Option<&'a [u8]> {
    let end = cursor.checked_add(n)?;
    if end > data.len() {
        return None;
    }
    let slice = &data[*cursor..end];
    *cursor = end;
    Some(slice)
}

fn read_u8(data: &[u8], cursor: &mut usize) -> Option<u8> {
    take(data, cursor, 1).map(|s| s[0])
}

fn read_u32(data: &[u8], cursor: &mut usize) -> Option<u32> {
    take(data, cursor, 4).map(|s| u32::from_le_bytes(s.try_into().unwrap()))
}

fn read_u64(data: &[u8], cursor: &mut usize) -> Option<u64> {
    take(data, cursor, 8).map(|s| u64::from_le_bytes(s.try_into().unwrap()))
}

fn truncated_footer(what: &str) -> Error {
    Error::MalformedFooter(format!("footer ends inside {what}"))
}
