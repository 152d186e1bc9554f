//! Minimal DEX parsing: header, string_ids, and string_data. Enough to scan
//! the string table for bridge-API tokens; everything else stays raw bytes
//! for the carver's whole-file magic scan.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DexError {
    #[error("bad dex magic")]
    BadDexMagic,
    #[error("dex header field out of bounds: {0}")]
    HeaderOutOfBounds(&'static str),
}

const HEADER_SIZE: usize = 112;

#[derive(Debug, Clone)]
pub struct DexFile {
    /// Three-digit version from the header magic, e.g. "035".
    pub version: String,
    pub strings: Vec<String>,
    /// Count of strings that contained malformed MUTF-8 (decoded with
    /// replacement characters).
    pub malformed_strings: usize,
    /// (offset, length) of the data section per the header.
    pub data_region: (usize, usize),
    pub raw: Vec<u8>,
}

impl DexFile {
    pub fn string_count(&self) -> usize {
        self.strings.len()
    }
}

pub fn parse_dex(bytes: Vec<u8>) -> Result<DexFile, DexError> {
    if bytes.len() < HEADER_SIZE {
        return Err(DexError::BadDexMagic);
    }
    if &bytes[..4] != b"dex\n" || bytes[7] != 0 {
        return Err(DexError::BadDexMagic);
    }
    let version = String::from_utf8_lossy(&bytes[4..7]).into_owned();
    if !matches!(version.as_str(), "035" | "037" | "038" | "039" | "040") {
        return Err(DexError::BadDexMagic);
    }

    let string_count = read_u32(&bytes, 56) as usize;
    let string_ids_off = read_u32(&bytes, 60) as usize;
    let data_size = read_u32(&bytes, 104) as usize;
    let data_off = read_u32(&bytes, 108) as usize;

    if string_count > 0 {
        let end = string_ids_off
            .checked_add(string_count.checked_mul(4).ok_or(DexError::HeaderOutOfBounds("string_ids"))?)
            .ok_or(DexError::HeaderOutOfBounds("string_ids"))?;
        if end > bytes.len() {
            return Err(DexError::HeaderOutOfBounds("string_ids"));
        }
    }
    if data_off.checked_add(data_size).map_or(true, |e| e > bytes.len()) && data_size > 0 {
        return Err(DexError::HeaderOutOfBounds("data section"));
    }

    let mut strings = Vec::with_capacity(string_count);
    let mut malformed_strings = 0;
    for i in 0..string_count {
        let off = read_u32(&bytes, string_ids_off + 4 * i) as usize;
        let (s, malformed) = decode_string_data(&bytes, off);
        if malformed {
            malformed_strings += 1;
        }
        strings.push(s);
    }

    Ok(DexFile {
        version,
        strings,
        malformed_strings,
        data_region: (data_off, data_size),
        raw: bytes,
    })
}

/// Substring token scan over the string table. Case-sensitive; each hit
/// reports the matched token and the string's index.
pub fn dex_strings_matching<'a>(
    dex: &DexFile,
    tokens: &'a [&'a str],
) -> Vec<(&'a str, usize)> {
    let mut hits = Vec::new();
    for (idx, s) in dex.strings.iter().enumerate() {
        for token in tokens {
            if s.contains(token) {
                hits.push((*token, idx));
            }
        }
    }
    hits
}

/// Decodes one string_data_item (ULEB128 utf16 length + MUTF-8, NUL
/// terminated). Lenient: any malformation yields replacement characters and
/// a flag, never an error.
fn decode_string_data(bytes: &[u8], off: usize) -> (String, bool) {
    let mut pos = off;
    // uleb128 utf16 length (value itself unused; decoding is NUL-delimited)
    let mut seen = 0;
    loop {
        if pos >= bytes.len() || seen >= 5 {
            return (String::from('\u{FFFD}'), true);
        }
        let b = bytes[pos];
        pos += 1;
        seen += 1;
        if b & 0x80 == 0 {
            break;
        }
    }
    decode_mutf8_until_nul(bytes, pos)
}

fn decode_mutf8_until_nul(bytes: &[u8], mut pos: usize) -> (String, bool) {
    let mut out = String::new();
    let mut malformed = false;
    while pos < bytes.len() {
        let b = bytes[pos];
        if b == 0 {
            return (out, malformed);
        }
        if b < 0x80 {
            out.push(b as char);
            pos += 1;
        } else if b & 0xe0 == 0xc0 {
            if pos + 1 < bytes.len() && bytes[pos + 1] & 0xc0 == 0x80 {
                let cp = ((b as u32 & 0x1f) << 6) | (bytes[pos + 1] as u32 & 0x3f);
                // MUTF-8 encodes NUL as C0 80
                out.push(char::from_u32(cp).unwrap_or('\u{FFFD}'));
                pos += 2;
            } else {
                out.push('\u{FFFD}');
                malformed = true;
                pos += 1;
            }
        } else if b & 0xf0 == 0xe0 {
            if pos + 2 < bytes.len()
                && bytes[pos + 1] & 0xc0 == 0x80
                && bytes[pos + 2] & 0xc0 == 0x80
            {
                let cp = ((b as u32 & 0x0f) << 12)
                    | ((bytes[pos + 1] as u32 & 0x3f) << 6)
                    | (bytes[pos + 2] as u32 & 0x3f);
                if (0xd800..=0xdbff).contains(&cp) {
                    // try CESU-8 surrogate pair
                    if let Some(c) = decode_surrogate_pair(bytes, pos + 3, cp) {
                        out.push(c);
                        pos += 6;
                        continue;
                    }
                    out.push('\u{FFFD}');
                    malformed = true;
                    pos += 3;
                } else {
                    match char::from_u32(cp) {
                        Some(c) => out.push(c),
                        None => {
                            out.push('\u{FFFD}');
                            malformed = true;
                        }
                    }
                    pos += 3;
                }
            } else {
                out.push('\u{FFFD}');
                malformed = true;
                pos += 1;
            }
        } else {
            out.push('\u{FFFD}');
            malformed = true;
            pos += 1;
        }
    }
    // ran off the end without a NUL
    (out, true)
}

fn decode_surrogate_pair(bytes: &[u8], pos: usize, hi: u32) -> Option<char> {
    if pos + 2 >= bytes.len() {
        return None;
    }
    let b = bytes[pos];
    if b & 0xf0 != 0xe0 || bytes[pos + 1] & 0xc0 != 0x80 || bytes[pos + 2] & 0xc0 != 0x80 {
        return None;
    }
    let lo = ((b as u32 & 0x0f) << 12)
        | ((bytes[pos + 1] as u32 & 0x3f) << 6)
        | (bytes[pos + 2] as u32 & 0x3f);
    if !(0xdc00..=0xdfff).contains(&lo) {
        return None;
    }
    char::from_u32(0x10000 + ((hi - 0xd800) << 10) + (lo - 0xdc00))
}

fn read_u32(bytes: &[u8], off: usize) -> u32 {
    u32::from_le_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]])
}
