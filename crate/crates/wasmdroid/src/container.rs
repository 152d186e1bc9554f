//! APK (ZIP) container handling: central-directory enumeration, entry
//! classification, and decompression of entry payloads.

use std::collections::BTreeMap;

use thiserror::Error;

const EOCD_SIG: u32 = 0x0605_4b50;
const EOCD64_LOCATOR_SIG: u32 = 0x0706_4b50;
const CENTRAL_SIG: u32 = 0x0201_4b50;
const LOCAL_SIG: u32 = 0x0403_4b50;

pub const WASM_MAGIC: [u8; 4] = [0x00, 0x61, 0x73, 0x6d];
const ELF_MAGIC: [u8; 4] = [0x7f, 0x45, 0x4c, 0x46];
const DEX_MAGIC: [u8; 4] = *b"dex\n";

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("not a zip archive: {0}")]
    NotAZip(&'static str),
    #[error("truncated archive: {0}")]
    TruncatedArchive(String),
    #[error("no such entry: {path} (occurrence {index})")]
    NoSuchEntry { path: String, index: usize },
    #[error("unsupported compression method {method} for {path}")]
    UnsupportedCompression { path: String, method: u16 },
    #[error("deflate error for {path}: {detail}")]
    Inflate { path: String, detail: String },
}

/// Classification of one archive entry, per path and leading bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub enum FileClass {
    Manifest,
    Dex,
    NativeLib,
    Asset,
    HtmlJs,
    WasmFile,
    Resource,
    Other,
    UnsupportedCompression,
}

impl FileClass {
    pub fn name(self) -> &'static str {
        match self {
            FileClass::Manifest => "Manifest",
            FileClass::Dex => "Dex",
            FileClass::NativeLib => "NativeLib",
            FileClass::Asset => "Asset",
            FileClass::HtmlJs => "HtmlJs",
            FileClass::WasmFile => "WasmFile",
            FileClass::Resource => "Resource",
            FileClass::Other => "Other",
            FileClass::UnsupportedCompression => "UnsupportedCompression",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ArchiveEntry {
    /// Path exactly as stored in the central directory.
    pub path: String,
    pub compressed_size: u64,
    pub uncompressed_size: u64,
    /// 0 = stored, 8 = deflate; anything else is unsupported.
    pub method: u16,
    pub crc32: u32,
    /// Offset of the local file header.
    pub offset: u64,
}

/// Result of decompressing one entry. A CRC mismatch is recorded, not fatal.
#[derive(Debug, Clone)]
pub struct EntryData {
    pub bytes: Vec<u8>,
    pub crc_ok: bool,
}

#[derive(Debug)]
pub struct ApkInventory {
    source: Vec<u8>,
    pub entries: Vec<ArchiveEntry>,
    pub classes: Vec<FileClass>,
    /// Paths that appear in more than one central-directory record.
    pub duplicates: Vec<String>,
    /// Non-fatal problems observed while opening (per-entry).
    pub warnings: Vec<String>,
}

/// Parses the central directory of a ZIP archive. Duplicate entry names are
/// retained (dual-payload archives are an evasion pattern we want to surface,
/// not hide). ZIP64 archives are rejected.
pub fn open_archive(bytes: Vec<u8>) -> Result<ApkInventory, ContainerError> {
    let eocd = find_eocd(&bytes)?;
    let cd_count = read_u16(&bytes, eocd + 10) as usize;
    let cd_size = read_u32(&bytes, eocd + 12) as usize;
    let cd_offset = read_u32(&bytes, eocd + 16) as usize;

    if cd_count == 0xffff || cd_size == 0xffff_ffff || cd_offset == 0xffff_ffff {
        return Err(ContainerError::TruncatedArchive(
            "zip64 markers present; zip64 archives are unsupported".into(),
        ));
    }
    if eocd >= 20 && read_u32(&bytes, eocd - 20) == EOCD64_LOCATOR_SIG {
        return Err(ContainerError::TruncatedArchive(
            "zip64 end-of-central-directory locator present; zip64 archives are unsupported"
                .into(),
        ));
    }
    if cd_offset.checked_add(cd_size).map_or(true, |end| end > bytes.len()) {
        return Err(ContainerError::TruncatedArchive(
            "central directory extends past end of archive".into(),
        ));
    }

    let mut entries = Vec::with_capacity(cd_count);
    let mut pos = cd_offset;
    for _ in 0..cd_count {
        if pos + 46 > bytes.len() || read_u32(&bytes, pos) != CENTRAL_SIG {
            return Err(ContainerError::TruncatedArchive(
                "central directory record missing or malformed".into(),
            ));
        }
        let method = read_u16(&bytes, pos + 10);
        let crc32 = read_u32(&bytes, pos + 16);
        let compressed_size = read_u32(&bytes, pos + 20) as u64;
        let uncompressed_size = read_u32(&bytes, pos + 24) as u64;
        let name_len = read_u16(&bytes, pos + 28) as usize;
        let extra_len = read_u16(&bytes, pos + 30) as usize;
        let comment_len = read_u16(&bytes, pos + 32) as usize;
        let offset = read_u32(&bytes, pos + 42) as u64;
        let name_end = pos + 46 + name_len;
        if name_end > bytes.len() {
            return Err(ContainerError::TruncatedArchive(
                "entry name extends past end of archive".into(),
            ));
        }
        let path = String::from_utf8_lossy(&bytes[pos + 46..name_end]).into_owned();
        if path.is_empty() {
            return Err(ContainerError::TruncatedArchive(
                "entry with empty name in central directory".into(),
            ));
        }
        entries.push(ArchiveEntry {
            path,
            compressed_size,
            uncompressed_size,
            method,
            crc32,
            offset,
        });
        pos = name_end + extra_len + comment_len;
    }

    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &entries {
        *seen.entry(e.path.as_str()).or_insert(0) += 1;
    }
    let duplicates: Vec<String> = seen
        .iter()
        .filter(|(_, &n)| n >= 2)
        .map(|(p, _)| p.to_string())
        .collect();

    let mut inv = ApkInventory {
        source: bytes,
        entries,
        classes: Vec::new(),
        duplicates,
        warnings: Vec::new(),
    };

    // Classify eagerly: classification needs the first decompressed bytes.
    let mut classes = Vec::with_capacity(inv.entries.len());
    for i in 0..inv.entries.len() {
        let entry = inv.entries[i].clone();
        if entry.method != 0 && entry.method != 8 {
            classes.push(FileClass::UnsupportedCompression);
            continue;
        }
        let head = match inv.entry_bytes_at(i) {
            Ok(data) => {
                let mut h = [0u8; 16];
                let n = data.bytes.len().min(16);
                h[..n].copy_from_slice(&data.bytes[..n]);
                h
            }
            Err(e) => {
                inv.warnings
                    .push(format!("{}: failed to read for classification: {e}", entry.path));
                [0u8; 16]
            }
        };
        classes.push(classify_entry(&entry.path, &head));
    }
    inv.classes = classes;
    Ok(inv)
}

impl ApkInventory {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Decompressed bytes for the `index`-th occurrence of `path`.
    pub fn entry_bytes(&self, path: &str, index: usize) -> Result<EntryData, ContainerError> {
        let pos = self
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.path == path)
            .nth(index)
            .map(|(i, _)| i)
            .ok_or_else(|| ContainerError::NoSuchEntry {
                path: path.to_string(),
                index,
            })?;
        self.entry_bytes_at(pos)
    }

    /// Decompressed bytes for the entry at inventory position `i`.
    pub fn entry_bytes_at(&self, i: usize) -> Result<EntryData, ContainerError> {
        let entry = &self.entries[i];
        if entry.method != 0 && entry.method != 8 {
            return Err(ContainerError::UnsupportedCompression {
                path: entry.path.clone(),
                method: entry.method,
            });
        }
        let off = entry.offset as usize;
        if off + 30 > self.source.len() || read_u32(&self.source, off) != LOCAL_SIG {
            return Err(ContainerError::TruncatedArchive(format!(
                "local header for {} missing or malformed",
                entry.path
            )));
        }
        let name_len = read_u16(&self.source, off + 26) as usize;
        let extra_len = read_u16(&self.source, off + 28) as usize;
        let data_start = off + 30 + name_len + extra_len;
        let data_end = data_start + entry.compressed_size as usize;
        if data_end > self.source.len() {
            return Err(ContainerError::TruncatedArchive(format!(
                "entry data for {} extends past end of archive",
                entry.path
            )));
        }
        let raw = &self.source[data_start..data_end];
        let bytes = match entry.method {
            0 => raw.to_vec(),
            8 => {
                let mut out = Vec::with_capacity(entry.uncompressed_size as usize);
                let mut dec = flate2::read::DeflateDecoder::new(raw);
                std::io::Read::read_to_end(&mut dec, &mut out).map_err(|e| {
                    ContainerError::Inflate {
                        path: entry.path.clone(),
                        detail: e.to_string(),
                    }
                })?;
                out
            }
            _ => unreachable!(),
        };
        let crc_ok = crc32fast::hash(&bytes) == entry.crc32;
        Ok(EntryData { bytes, crc_ok })
    }
}

/// Pure classification from path and the first decompressed bytes. Magic
/// bytes override the extension for Wasm and DEX.
pub fn classify_entry(path: &str, head: &[u8]) -> FileClass {
    if head.len() >= 4 {
        if head[..4] == WASM_MAGIC {
            return FileClass::WasmFile;
        }
        if head[..4] == DEX_MAGIC {
            return FileClass::Dex;
        }
    }
    let lower = path.to_ascii_lowercase();
    if lower.ends_with(".wasm") {
        return FileClass::WasmFile;
    }
    if lower == "androidmanifest.xml" {
        return FileClass::Manifest;
    }
    if lower.ends_with(".dex") {
        return FileClass::Dex;
    }
    if lower.ends_with(".so") || (head.len() >= 4 && head[..4] == ELF_MAGIC) {
        return FileClass::NativeLib;
    }
    if lower.ends_with(".html") || lower.ends_with(".htm") || lower.ends_with(".js") {
        return FileClass::HtmlJs;
    }
    if lower.starts_with("res/") || lower == "resources.arsc" {
        return FileClass::Resource;
    }
    if lower.starts_with("assets/") {
        return FileClass::Asset;
    }
    FileClass::Other
}

fn find_eocd(bytes: &[u8]) -> Result<usize, ContainerError> {
    if bytes.len() < 22 {
        return Err(ContainerError::NotAZip("too short for end-of-central-directory"));
    }
    // EOCD is within the last 64 KiB + 22 bytes (variable-length comment).
    let floor = bytes.len().saturating_sub(22 + 0xffff);
    let mut pos = bytes.len() - 22;
    loop {
        if read_u32(bytes, pos) == EOCD_SIG {
            let comment_len = read_u16(bytes, pos + 20) as usize;
            if pos + 22 + comment_len == bytes.len() {
                return Ok(pos);
            }
        }
        if pos == floor {
            return Err(ContainerError::NotAZip("no end-of-central-directory record"));
        }
        pos -= 1;
    }
}

fn read_u16(bytes: &[u8], off: usize) -> u16 {
    u16::from_le_bytes([bytes[off], bytes[off + 1]])
}

fn read_u32(bytes: &[u8], off: usize) -> u32 {
    u32::from_le_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]])
}
