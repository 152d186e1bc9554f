//! Locates Wasm modules embedded at arbitrary offsets inside any byte stream
//! (assets, DEX bytes, native libraries) by magic-byte scan + forward parse.

use rayon::prelude::*;

use crate::container::{ApkInventory, FileClass};
use crate::wasm_parser::{parse_module_prefix, WasmModule, WASM_MAGIC};

/// Entries larger than this are scanned in overlapping windows.
pub const DEFAULT_STREAM_CAP: usize = 256 * 1024 * 1024;
const WINDOW_OVERLAP: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum CarveStatus {
    Parsed,
    MagicOnly,
}

#[derive(Debug, Clone)]
pub struct CarvedCandidate {
    pub source_path: String,
    /// Occurrence ordinal of the source entry (duplicate names).
    pub source_occurrence: usize,
    pub source_class: FileClass,
    /// Byte offset of the magic within the decompressed entry.
    pub offset: usize,
    /// Bytes consumed by a successful parse; 0 for MagicOnly.
    pub length: usize,
    pub status: CarveStatus,
    pub module: Option<WasmModule>,
    /// The exact module bytes for Parsed candidates (used by --deep string
    /// scans and --extract-out).
    pub raw: Vec<u8>,
}

/// Every offset at which the 4-byte Wasm magic occurs, ascending.
pub fn scan_magic(bytes: &[u8]) -> Vec<usize> {
    scan_magic_windowed(bytes, DEFAULT_STREAM_CAP)
}

/// Windowed scan with a 3-byte overlap so boundary-straddling magics are not
/// missed. `cap` bounds the window size.
pub fn scan_magic_windowed(bytes: &[u8], cap: usize) -> Vec<usize> {
    let cap = cap.max(8);
    let mut offsets = Vec::new();
    let mut start = 0;
    while start < bytes.len() {
        let end = (start + cap).min(bytes.len());
        let window = &bytes[start..end];
        let mut i = 0;
        while i + 4 <= window.len() {
            if window[i..i + 4] == WASM_MAGIC {
                offsets.push(start + i);
                i += 4; // the magic cannot overlap itself
            } else {
                i += 1;
            }
        }
        if end == bytes.len() {
            break;
        }
        start = end - WINDOW_OVERLAP;
    }
    offsets.dedup();
    offsets
}

/// Attempts a forward parse at a magic offset. A well-formed prefix yields
/// `Parsed` with the exact byte length (trailing host bytes ignored); any
/// failure degrades to `MagicOnly`.
pub fn carve(bytes: &[u8], offset: usize) -> CarvedCandidate {
    let slice = &bytes[offset..];
    match parse_module_prefix(slice) {
        Ok(module) => {
            let raw = slice[..module.byte_len].to_vec();
            CarvedCandidate {
                source_path: String::new(),
                source_occurrence: 0,
                source_class: FileClass::Other,
                offset,
                length: module.byte_len,
                status: CarveStatus::Parsed,
                module: Some(module),
                raw,
            }
        }
        Err(_) => CarvedCandidate {
            source_path: String::new(),
            source_occurrence: 0,
            source_class: FileClass::Other,
            offset,
            length: 0,
            status: CarveStatus::MagicOnly,
            module: None,
            raw: Vec::new(),
        },
    }
}

pub fn scan_bytes(bytes: &[u8]) -> Vec<CarvedCandidate> {
    scan_magic(bytes).into_iter().map(|off| carve(bytes, off)).collect()
}

/// Runs the magic scan + carve over the decompressed bytes of every entry.
/// Per-entry read failures become warnings in the returned list.
pub fn scan_inventory(inv: &ApkInventory) -> (Vec<CarvedCandidate>, Vec<String>) {
    let mut occurrence: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    let indexed: Vec<(usize, usize)> = inv
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let occ = occurrence.entry(e.path.as_str()).or_insert(0);
            let this = *occ;
            *occ += 1;
            (i, this)
        })
        .collect();

    let results: Vec<(Vec<CarvedCandidate>, Option<String>)> = indexed
        .par_iter()
        .map(|&(i, occ)| {
            let entry = &inv.entries[i];
            let class = inv.classes[i];
            if class == FileClass::UnsupportedCompression {
                return (
                    Vec::new(),
                    Some(format!("{}: unsupported compression, not scanned", entry.path)),
                );
            }
            match inv.entry_bytes_at(i) {
                Ok(data) => {
                    let mut cands: Vec<CarvedCandidate> = scan_bytes(&data.bytes)
                        .into_iter()
                        .map(|mut c| {
                            c.source_path = entry.path.clone();
                            c.source_occurrence = occ;
                            c.source_class = class;
                            c
                        })
                        .collect();
                    // .wasm-classed entries are carved at offset 0 first
                    cands.sort_by_key(|c| c.offset);
                    let warn = if data.crc_ok {
                        None
                    } else {
                        Some(format!("{}: crc32 mismatch", entry.path))
                    };
                    (cands, warn)
                }
                Err(e) => (Vec::new(), Some(format!("{}: {e}", entry.path))),
            }
        })
        .collect();

    let mut candidates = Vec::new();
    let mut warnings = Vec::new();
    for (cands, warn) in results {
        candidates.extend(cands);
        if let Some(w) = warn {
            warnings.push(w);
        }
    }
    // deterministic merge regardless of parallel scheduling
    candidates.sort_by(|a, b| {
        (&a.source_path, a.source_occurrence, a.offset)
            .cmp(&(&b.source_path, b.source_occurrence, b.offset))
    });
    (candidates, warnings)
}

/// File name used by --extract-out: path with separators sanitized, plus the
/// carve offset.
pub fn extract_file_name(source_path: &str, offset: usize) -> String {
    let sanitized: String = source_path
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{sanitized}@{offset}.wasm")
}
