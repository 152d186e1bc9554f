//! Printable-string extraction from Wasm data segments (or whole binaries)
//! and IoC pattern matching over the extracted strings.

use regex::Regex;
use thiserror::Error;

use crate::wasm_parser::{DataOffset, WasmModule};

pub const DEFAULT_MIN_LEN: usize = 6;

#[derive(Debug, Error)]
pub enum IocError {
    #[error("ioc pattern line {line}: {detail}")]
    BadPattern { line: usize, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum IocKind {
    Url,
    Domain,
    Ipv4,
    UnixPath,
    PreopenMapping,
}

impl IocKind {
    pub fn name(self) -> &'static str {
        match self {
            IocKind::Url => "Url",
            IocKind::Domain => "Domain",
            IocKind::Ipv4 => "Ipv4",
            IocKind::UnixPath => "UnixPath",
            IocKind::PreopenMapping => "PreopenMapping",
        }
    }

    fn from_name(s: &str) -> Option<IocKind> {
        match s {
            "Url" => Some(IocKind::Url),
            "Domain" => Some(IocKind::Domain),
            "Ipv4" => Some(IocKind::Ipv4),
            "UnixPath" => Some(IocKind::UnixPath),
            "PreopenMapping" => Some(IocKind::PreopenMapping),
            _ => None,
        }
    }
}

/// Where an extracted string came from.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum StringSource {
    DataSegment {
        index: usize,
        segment_offset: usize,
        resolved_memory_addr: Option<i64>,
    },
    WholeBinary {
        offset: usize,
    },
    CustomSection {
        name: String,
        offset: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedString {
    pub text: String,
    pub source: StringSource,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IocHit {
    pub kind: IocKind,
    pub value: String,
    pub source: StringSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtractMode {
    SegmentsOnly,
    WholeBinary,
}

/// IoC patterns loaded from the shipped (or user-provided) data file. File
/// order is match priority.
#[derive(Debug)]
pub struct IocPatterns {
    rows: Vec<(IocKind, Regex)>,
}

pub const DEFAULT_IOC_PATTERNS: &str = include_str!("../data/ioc_patterns.tsv");

impl IocPatterns {
    pub fn load(text: &str) -> Result<IocPatterns, IocError> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (kind_s, pat) = line.split_once('\t').ok_or_else(|| IocError::BadPattern {
                line: i + 1,
                detail: "expected kind<TAB>regex".into(),
            })?;
            let kind = IocKind::from_name(kind_s).ok_or_else(|| IocError::BadPattern {
                line: i + 1,
                detail: format!("unknown kind {kind_s:?}"),
            })?;
            let re = Regex::new(pat).map_err(|e| IocError::BadPattern {
                line: i + 1,
                detail: e.to_string(),
            })?;
            rows.push((kind, re));
        }
        Ok(IocPatterns { rows })
    }

    pub fn default_patterns() -> IocPatterns {
        IocPatterns::load(DEFAULT_IOC_PATTERNS).expect("shipped ioc patterns are valid")
    }

    pub fn rows(&self) -> impl Iterator<Item = (IocKind, &str)> {
        self.rows.iter().map(|(k, r)| (*k, r.as_str()))
    }
}

/// Maximal printable-ASCII runs of at least `min_len` bytes, with their
/// offsets within `bytes`.
pub fn printable_runs(bytes: &[u8], min_len: usize) -> Vec<(usize, String)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &b) in bytes.iter().enumerate() {
        let printable = (0x20..=0x7e).contains(&b);
        match (printable, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if i - s >= min_len {
                    runs.push((s, String::from_utf8_lossy(&bytes[s..i]).into_owned()));
                }
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        if bytes.len() - s >= min_len {
            runs.push((s, String::from_utf8_lossy(&bytes[s..]).into_owned()));
        }
    }
    runs
}

/// Extracts strings from a module's data segments and custom sections
/// (SegmentsOnly) or from the whole binary (WholeBinary, needs `raw`).
pub fn extract_strings(
    m: &WasmModule,
    raw: Option<&[u8]>,
    min_len: usize,
    mode: ExtractMode,
) -> Vec<ExtractedString> {
    let mut out = Vec::new();
    match mode {
        ExtractMode::SegmentsOnly => {
            for (index, seg) in m.data.iter().enumerate() {
                let base = match seg.offset {
                    DataOffset::Const(k) => Some(k),
                    _ => None,
                };
                for (off, text) in printable_runs(&seg.bytes, min_len) {
                    out.push(ExtractedString {
                        text,
                        source: StringSource::DataSegment {
                            index,
                            segment_offset: off,
                            resolved_memory_addr: base.map(|b| b + off as i64),
                        },
                    });
                }
            }
            for (name, bytes) in &m.customs {
                for (off, text) in printable_runs(bytes, min_len) {
                    out.push(ExtractedString {
                        text,
                        source: StringSource::CustomSection { name: name.clone(), offset: off },
                    });
                }
            }
        }
        ExtractMode::WholeBinary => {
            if let Some(raw) = raw {
                for (off, text) in printable_runs(raw, min_len) {
                    out.push(ExtractedString { text, source: StringSource::WholeBinary { offset: off } });
                }
            }
        }
    }
    out
}

/// Matches the pattern table against extracted strings. Within one string,
/// pattern priority is file order and an overlapping lower-priority match is
/// suppressed, so a URL does not additionally report its domain and path.
pub fn match_iocs(patterns: &IocPatterns, strings: &[ExtractedString]) -> Vec<IocHit> {
    let mut hits = Vec::new();
    for s in strings {
        let mut claimed: Vec<(usize, usize)> = Vec::new();
        for (kind, re) in &patterns.rows {
            for mat in re.find_iter(&s.text) {
                let span = (mat.start(), mat.end());
                if claimed.iter().any(|&(a, b)| span.0 < b && a < span.1) {
                    continue;
                }
                if *kind == IocKind::Ipv4 && !standalone_ipv4(&s.text, span) {
                    continue;
                }
                claimed.push(span);
                hits.push(IocHit { kind: *kind, value: mat.as_str().to_string(), source: s.source.clone() });
            }
        }
    }
    hits
}

fn standalone_ipv4(text: &str, span: (usize, usize)) -> bool {
    let before = text[..span.0].chars().next_back();
    let after = text[span.1..].chars().next();
    let part = |c: Option<char>| c.map_or(false, |c| c.is_ascii_digit() || c == '.');
    !part(before) && !part(after)
}
