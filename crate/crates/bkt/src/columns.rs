//! Typed values, their payload serialization, and write-side staging.
//!
//! Fixed-width types serialize as little-endian concatenation; var-bytes
//! entries as a `u32` length prefix followed by the raw bytes. These
//! encodings are part of the on-disk contract.

use crate::error::{Error, Result};
use crate::format::TypeCode;

/// One entry of some column.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    I32(i32),
    I64(i64),
    F32(f32),
    F64(f64),
    Bytes(Vec<u8>),
}

impl Value {
    pub fn type_code(&self) -> TypeCode {
        match self {
            Value::I32(_) => TypeCode::I32,
            Value::I64(_) => TypeCode::I64,
            Value::F32(_) => TypeCode::F32,
            Value::F64(_) => TypeCode::F64,
            Value::Bytes(_) => TypeCode::Bytes,
        }
    }
}

/// A homogeneous run of column entries.
///
/// Equality is bit-pattern equality: two float sequences compare equal
/// exactly when their IEEE-754 bits match, so NaN payloads survive
/// round-trip comparisons.
#[derive(Debug, Clone)]
pub enum ColumnValues {
    I32(Vec<i32>),
    I64(Vec<i64>),
    F32(Vec<f32>),
    F64(Vec<f64>),
    Bytes(Vec<Vec<u8>>),
}

impl PartialEq for ColumnValues {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (ColumnValues::I32(a), ColumnValues::I32(b)) => a == b,
            (ColumnValues::I64(a), ColumnValues::I64(b)) => a == b,
            (ColumnValues::F32(a), ColumnValues::F32(b)) => {
                a.len() == b.len()
                    && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (ColumnValues::F64(a), ColumnValues::F64(b)) => {
                a.len() == b.len()
                    && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (ColumnValues::Bytes(a), ColumnValues::Bytes(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for ColumnValues {}

impl ColumnValues {
    pub fn new(type_code: TypeCode) -> ColumnValues {
        match type_code {
            TypeCode::I32 => ColumnValues::I32(Vec::new()),
            TypeCode::I64 => ColumnValues::I64(Vec::new()),
            TypeCode::F32 => ColumnValues::F32(Vec::new()),
            TypeCode::F64 => ColumnValues::F64(Vec::new()),
            TypeCode::Bytes => ColumnValues::Bytes(Vec::new()),
        }
    }

    pub fn type_code(&self) -> TypeCode {
        match self {
            ColumnValues::I32(_) => TypeCode::I32,
            ColumnValues::I64(_) => TypeCode::I64,
            ColumnValues::F32(_) => TypeCode::F32,
            ColumnValues::F64(_) => TypeCode::F64,
            ColumnValues::Bytes(_) => TypeCode::Bytes,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ColumnValues::I32(v) => v.len(),
            ColumnValues::I64(v) => v.len(),
            ColumnValues::F32(v) => v.len(),
            ColumnValues::F64(v) => v.len(),
            ColumnValues::Bytes(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, i: usize) -> Value {
        match self {
            ColumnValues::I32(v) => Value::I32(v[i]),
            ColumnValues::I64(v) => Value::I64(v[i]),
            ColumnValues::F32(v) => Value::F32(v[i]),
            ColumnValues::F64(v) => Value::F64(v[i]),
            ColumnValues::Bytes(v) => Value::Bytes(v[i].clone()),
        }
    }

    pub fn push(&mut self, value: Value) -> Result<()> {
        match (self, value) {
            (ColumnValues::I32(v), Value::I32(x)) => v.push(x),
            (ColumnValues::I64(v), Value::I64(x)) => v.push(x),
            (ColumnValues::F32(v), Value::F32(x)) => v.push(x),
            (ColumnValues::F64(v), Value::F64(x)) => v.push(x),
            (ColumnValues::Bytes(v), Value::Bytes(x)) => v.push(x),
            (this, value) => {
                return Err(Error::TypeMismatch(format!(
                    "cannot push {} value into {} column",
                    value.type_code().name(),
                    this.type_code().name()
                )))
            }
        }
        Ok(())
    }

    /// Appends all entries of `other`, which must have the same type.
    pub fn extend_from(&mut self, other: &ColumnValues) -> Result<()> {
        match (self, other) {
            (ColumnValues::I32(v), ColumnValues::I32(o)) => v.extend_from_slice(o),
            (ColumnValues::I64(v), ColumnValues::I64(o)) => v.extend_from_slice(o),
            (ColumnValues::F32(v), ColumnValues::F32(o)) => v.extend_from_slice(o),
            (ColumnValues::F64(v), ColumnValues::F64(o)) => v.extend_from_slice(o),
            (ColumnValues::Bytes(v), ColumnValues::Bytes(o)) => v.extend_from_slice(o),
            (this, other) => {
                return Err(Error::TypeMismatch(format!(
                    "cannot extend {} column from {} values",
                    this.type_code().name(),
                    other.type_code().name()
                )))
            }
        }
        Ok(())
    }

    /// Size of the serialized payload for these values.
    pub fn encoded_len(&self) -> u64 {
        match self {
            ColumnValues::I32(v) => 4 * v.len() as u64,
            ColumnValues::I64(v) => 8 * v.len() as u64,
            ColumnValues::F32(v) => 4 * v.len() as u64,
            ColumnValues::F64(v) => 8 * v.len() as u64,
            ColumnValues::Bytes(v) => v.iter().map(|b| 4 + b.len() as u64).sum(),
        }
    }

    /// Order-sensitive 64-bit fold over the entries, continuing from
    /// `state`. Folding baskets in delivery order gives the same result as
    /// folding the whole column at once, which is what lets benchmark runs
    /// compare sequential, column-parallel and pipelined reads.
    pub fn checksum_fold(&self, mut state: u64) -> u64 {
        fn step(state: u64, bits: u64) -> u64 {
            // splitmix64 finalizer over the running state and entry bits.
            let mut z = state.rotate_left(7) ^ bits;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            z ^ (z >> 31)
        }
        match self {
            ColumnValues::I32(v) => {
                for x in v {
                    state = step(state, *x as u32 as u64);
                }
            }
            ColumnValues::I64(v) => {
                for x in v {
                    state = step(state, *x as u64);
                }
            }
            ColumnValues::F32(v) => {
                for x in v {
                    state = step(state, x.to_bits() as u64);
                }
            }
            ColumnValues::F64(v) => {
                for x in v {
                    state = step(state, x.to_bits());
                }
            }
            ColumnValues::Bytes(v) => {
                for x in v {
                    state = step(state, crate::format::crc32(x) as u64);
                    state = step(state, x.len() as u64);
                }
            }
        }
        state
    }
}

fn serialize_bytes_entry(out: &mut Vec<u8>, entry: &[u8]) -> Result<()> {
    if entry.len() as u64 >= u64::from(u32::MAX) {
        return Err(Error::ValueOutOfDomain(format!(
            "var-bytes entry of {} bytes exceeds the u32 length prefix",
            entry.len()
        )));
    }
    out.extend_from_slice(&(entry.len() as u32).to_le_bytes());
    out.extend_from_slice(entry);
    Ok(())
}

/// Serializes values into a column payload.
pub fn serialize_values(values: &ColumnValues) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(values.encoded_len().min(1 << 20) as usize);
    match values {
        ColumnValues::I32(v) => {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        ColumnValues::I64(v) => {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        ColumnValues::F32(v) => {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        ColumnValues::F64(v) => {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        ColumnValues::Bytes(v) => {
            for x in v {
                serialize_bytes_entry(&mut out, x)?;
            }
        }
    }
    Ok(out)
}

/// Deserializes exactly `n_entries` values, consuming all of `data`.
pub fn deserialize_values(
    type_code: TypeCode,
    data: &[u8],
    n_entries: u32,
) -> Result<ColumnValues> {
    let n = n_entries as usize;
    if let Some(width) = type_code.fixed_width() {
        let needed = (width as u64) * n_entries as u64;
        if (data.len() as u64) < needed {
            return Err(Error::Truncated {
                needed,
                available: data.len() as u64,
            });
        }
        if data.len() as u64 > needed {
            return Err(Error::TrailingBytes(data.len() as u64 - needed));
        }
        let chunks = data.chunks_exact(width);
        Ok(match type_code {
            TypeCode::I32 => {
                ColumnValues::I32(chunks.map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect())
            }
            TypeCode::I64 => {
                ColumnValues::I64(chunks.map(|c| i64::from_le_bytes(c.try_into().unwrap())).collect())
            }
            TypeCode::F32 => {
                ColumnValues::F32(chunks.map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
            }
            TypeCode::F64 => {
                ColumnValues::F64(chunks.map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
            }
            TypeCode::Bytes => unreachable!(),
        })
    } else {
        let mut entries = Vec::with_capacity(n.min(1 << 16));
        let mut cursor = 0usize;
        for _ in 0..n {
            if data.len() - cursor < 4 {
                return Err(Error::Truncated {
                    needed: cursor as u64 + 4,
                    available: data.len() as u64,
                });
            }
            let len = u32::from_le_bytes(data[cursor..cursor + 4].try_into().unwrap()) as u64;
            cursor += 4;
            if ((data.len() - cursor) as u64) < len {
                return Err(Error::Truncated {
                    needed: cursor as u64 + len,
                    available: data.len() as u64,
                });
            }
            entries.push(data[cursor..cursor + len as usize].to_vec());
            cursor += len as usize;
        }
        if cursor != data.len() {
            return Err(Error::TrailingBytes((data.len() - cursor) as u64));
        }
        Ok(ColumnValues::Bytes(entries))
    }
}

/// A basket's worth of serialized entries taken out of a [`ColumnBuffer`],
/// ready to be compressed.
#[derive(Debug)]
pub struct PendingBasket {
    pub column_id: u32,
    pub first_entry: u64,
    pub n_entries: u32,
    pub bytes: Vec<u8>,
}

/// Write-side staging for one column: entries are serialized as they
/// arrive and sealed into baskets when the byte threshold is crossed.
///
/// A buffer is single-owner mutable state; distinct columns' buffers may be
/// filled and sealed concurrently.
#[derive(Debug)]
pub struct ColumnBuffer {
    column_id: u32,
    type_code: TypeCode,
    pending: Vec<u8>,
    pending_entries: u32,
    next_first_entry: u64,
}

impl ColumnBuffer {
    pub fn new(column_id: u32, type_code: TypeCode) -> ColumnBuffer {
        ColumnBuffer {
            column_id,
            type_code,
            pending: Vec::new(),
            pending_entries: 0,
            next_first_entry: 0,
        }
    }

    pub fn type_code(&self) -> TypeCode {
        self.type_code
    }

    pub fn pending_bytes(&self) -> usize {
        self.pending.len()
    }

    pub fn pending_entries(&self) -> u32 {
        self.pending_entries
    }

    /// Serializes one entry onto the pending payload. Entry boundaries
    /// never straddle a seal: the entry is wholly in this basket.
    pub fn push(&mut self, value: &Value) -> Result<()> {
        if value.type_code() != self.type_code {
            return Err(Error::TypeMismatch(format!(
                "column {} expects {}, got {}",
                self.column_id,
                self.type_code.name(),
                value.type_code().name()
            )));
        }
        match value {
            Value::I32(x) => self.pending.extend_from_slice(&x.to_le_bytes()),
            Value::I64(x) => self.pending.extend_from_slice(&x.to_le_bytes()),
            Value::F32(x) => self.pending.extend_from_slice(&x.to_le_bytes()),
            Value::F64(x) => self.pending.extend_from_slice(&x.to_le_bytes()),
            Value::Bytes(x) => serialize_bytes_entry(&mut self.pending, x)?,
        }
        self.pending_entries = self.pending_entries.checked_add(1).ok_or_else(|| {
            Error::ValueOutOfDomain("basket entry count exceeds u32".into())
        })?;
        Ok(())
    }

    /// Whether the pending data should be sealed into a basket now: the
    /// byte target is crossed, or `force` is set and anything is pending.
    /// Empty baskets are never emitted.
    pub fn plan_seal(&self, target_bytes: u32, force: bool) -> bool {
        if self.pending_entries == 0 {
            return false;
        }
        force || self.pending.len() as u64 >= target_bytes as u64
    }

    /// Takes the pending payload as one basket and advances the entry
    /// cursor. Caller decides *when* via [`ColumnBuffer::plan_seal`].
    pub fn take_pending(&mut self) -> PendingBasket {
        debug_assert!(self.pending_entries > 0, "sealing an empty buffer");
        let basket = PendingBasket {
            column_id: self.column_id,
            first_entry: self.next_first_entry,
            n_entries: self.pending_entries,
            bytes: std::mem::take(&mut self.pending),
        };
        self.next_first_entry += basket.n_entries as u64;
        self.pending_entries = 0;
        basket
    }
}
