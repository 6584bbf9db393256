//! Field dumps and CSV diagnostics
//!
//! A field dump is a short self-describing text header followed by the raw
//! row-major payload of 64-bit little-endian floats. The header carries an
//! FNV-1a checksum of the payload, verified on read, so a dump either
//! round-trips bit for bit or fails loudly. Header floats use the shortest
//! representation that parses back to the same bits.
//!
//! CSV files open with a single header row naming every column; numeric
//! cells are written as `{:.16e}`, which also round-trips f64 exactly.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::error::{ChdError, Result};
use crate::grid::{Grid2D, ScalarField};

const MAGIC: &str = "chd-field v1";

/// A field with its provenance, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub name: String,
    pub time: f64,
    pub grid: Grid2D,
    pub data: Vec<f64>,
}

impl FieldDump {
    pub fn new(name: &str, time: f64, field: &ScalarField) -> Self {
        FieldDump {
            name: name.to_string(),
            time,
            grid: field.grid,
            data: field.data.clone(),
        }
    }

    pub fn into_field(self) -> ScalarField {
        ScalarField::from_data(self.grid, self.data)
    }
}

/// 64-bit FNV-1a over the payload bytes.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn payload_bytes(data: &[f64]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(data.len() * 8);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ChdError {
    ChdError::Io(format!("{}: {e}", path.display()))
}

/// Writes a dump. The payload is the in-memory bit pattern, so writing and
/// reading back reproduces the field exactly.
pub fn write_field(path: &Path, dump: &FieldDump) -> Result<()> {
    let payload = payload_bytes(&dump.data);
    let mut header = String::new();
    let _ = writeln!(header, "{MAGIC}");
    let _ = writeln!(header, "name = {}", dump.name);
    let _ = writeln!(header, "nx = {}", dump.grid.nx);
    let _ = writeln!(header, "ny = {}", dump.grid.ny);
    let _ = writeln!(header, "lx = {}", dump.grid.lx);
    let _ = writeln!(header, "ly = {}", dump.grid.ly);
    let _ = writeln!(header, "time = {}", dump.time);
    let _ = writeln!(header, "layout = row_major");
    let _ = writeln!(header, "byte_order = little_endian");
    let _ = writeln!(header, "payload_bytes = {}", payload.len());
    let _ = writeln!(header, "checksum = fnv1a:{:016x}", fnv1a(&payload));
    let _ = writeln!(header);

    let mut file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(header.as_bytes())
        .and_then(|()| file.write_all(&payload))
        .map_err(|e| io_err(path, e))
}

/// Reads a dump, verifying structure, sizes, and checksum.
pub fn read_field(path: &Path) -> Result<FieldDump> {
    let raw = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let header_end = raw
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| io_err(path, "missing blank line after header"))?;
    let header = std::str::from_utf8(&raw[..header_end])
        .map_err(|_| io_err(path, "header is not UTF-8"))?;
    let payload = &raw[header_end + 2..];

    let mut lines = header.lines();
    if lines.next() != Some(MAGIC) {
        return Err(io_err(path, "not a field dump (bad magic line)"));
    }
    let mut name = String::new();
    let mut time = 0.0f64;
    let mut nx = 0usize;
    let mut ny = 0usize;
    let mut lx = 0.0f64;
    let mut ly = 0.0f64;
    let mut declared_len = usize::MAX;
    let mut checksum: Option<u64> = None;
    for line in lines {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| io_err(path, format!("malformed header line `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let num = |what: &str| -> Result<f64> {
            value
                .parse::<f64>()
                .map_err(|_| io_err(path, format!("bad {what} `{value}`")))
        };
        match key {
            "name" => name = value.to_string(),
            "nx" => nx = num("nx")? as usize,
            "ny" => ny = num("ny")? as usize,
            "lx" => lx = num("lx")?,
            "ly" => ly = num("ly")?,
            "time" => time = num("time")?,
            "payload_bytes" => declared_len = num("payload_bytes")? as usize,
            "layout" | "byte_order" => {
                let expected = if key == "layout" { "row_major" } else { "little_endian" };
                if value != expected {
                    return Err(io_err(path, format!("{key} `{value}` not supported")));
                }
            }
            "checksum" => {
                let hex = value
                    .strip_prefix("fnv1a:")
                    .ok_or_else(|| io_err(path, "checksum is not fnv1a"))?;
                checksum = Some(
                    u64::from_str_radix(hex, 16)
                        .map_err(|_| io_err(path, "checksum is not hex"))?,
                );
            }
            other => return Err(io_err(path, format!("unknown header key `{other}`"))),
        }
    }

    if nx < 2 || ny < 2 || !(lx > 0.0) || !(ly > 0.0) {
        return Err(io_err(path, format!("bad grid {nx}x{ny} [{lx} x {ly}]")));
    }
    if payload.len() != nx * ny * 8 || declared_len != payload.len() {
        return Err(io_err(
            path,
            format!(
                "payload is {} bytes, header declares {declared_len}, grid needs {}",
                payload.len(),
                nx * ny * 8
            ),
        ));
    }
    let stored = checksum.ok_or_else(|| io_err(path, "header has no checksum"))?;
    let actual = fnv1a(payload);
    if stored != actual {
        return Err(io_err(
            path,
            format!("checksum mismatch: header {stored:016x}, payload {actual:016x}"),
        ));
    }

    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(FieldDump {
        name,
        time,
        grid: Grid2D::new(nx, ny, lx, ly),
        data,
    })
}

/// Writes a CSV with one documenting header row. Numeric cells round-trip
/// f64 exactly.
pub fn write_csv(path: &Path, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut text = String::new();
    let _ = writeln!(text, "{}", columns.join(","));
    for row in rows {
        assert_eq!(row.len(), columns.len(), "row width vs column count");
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        let _ = writeln!(text, "{}", cells.join(","));
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}
