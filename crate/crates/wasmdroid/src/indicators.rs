//! Data-driven indicator catalog and the scans that apply it: path globs over
//! archive entries, tokens over DEX strings and HTML/JS assets, and symbol
//! tokens over native-library bytes.

use regex::Regex;
use thiserror::Error;

use crate::container::ApkInventory;
use crate::dex_lite::DexFile;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog line {line}: {detail}")]
    BadLine { line: usize, detail: String },
    #[error("duplicate catalog id {0:?}")]
    DuplicateId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Severity {
    Info,
    Suspicious,
    Strong,
}

impl Severity {
    pub fn name(self) -> &'static str {
        match self {
            Severity::Info => "Info",
            Severity::Suspicious => "Suspicious",
            Severity::Strong => "Strong",
        }
    }

    fn from_name(s: &str) -> Option<Severity> {
        match s {
            "Info" => Some(Severity::Info),
            "Suspicious" => Some(Severity::Suspicious),
            "Strong" => Some(Severity::Strong),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Channel {
    WebView,
    JsEngine,
    NativeRuntime,
    Generic,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::WebView => "WebView",
            Channel::JsEngine => "JsEngine",
            Channel::NativeRuntime => "NativeRuntime",
            Channel::Generic => "Generic",
        }
    }

    fn from_name(s: &str) -> Option<Channel> {
        match s {
            "WebView" => Some(Channel::WebView),
            "JsEngine" => Some(Channel::JsEngine),
            "NativeRuntime" => Some(Channel::NativeRuntime),
            "Generic" => Some(Channel::Generic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchKind {
    PathGlob,
    Token,
    SymbolToken,
    /// Raised by the pipeline itself (carver results, parser health flags);
    /// the catalog row fixes id, channel, and severity.
    Derived,
}

impl MatchKind {
    pub fn name(self) -> &'static str {
        match self {
            MatchKind::PathGlob => "PathGlob",
            MatchKind::Token => "Token",
            MatchKind::SymbolToken => "SymbolToken",
            MatchKind::Derived => "Derived",
        }
    }

    fn from_name(s: &str) -> Option<MatchKind> {
        match s {
            "PathGlob" => Some(MatchKind::PathGlob),
            "Token" => Some(MatchKind::Token),
            "SymbolToken" => Some(MatchKind::SymbolToken),
            "Derived" => Some(MatchKind::Derived),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub id: String,
    pub channel: Channel,
    pub severity: Severity,
    pub kind: MatchKind,
    pub pattern: String,
    glob: Option<Regex>,
}

#[derive(Debug, Clone)]
pub struct IndicatorCatalog {
    pub entries: Vec<CatalogEntry>,
}

pub const DEFAULT_CATALOG: &str = include_str!("../data/catalog.tsv");

impl IndicatorCatalog {
    /// Loads the tab-separated catalog. Fails closed on duplicate ids.
    pub fn load(text: &str) -> Result<IndicatorCatalog, CatalogError> {
        let mut entries: Vec<CatalogEntry> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 5 {
                return Err(CatalogError::BadLine {
                    line: i + 1,
                    detail: "expected 5 tab-separated fields".into(),
                });
            }
            let bad = |detail: String| CatalogError::BadLine { line: i + 1, detail };
            let channel = Channel::from_name(parts[1])
                .ok_or_else(|| bad(format!("unknown channel {:?}", parts[1])))?;
            let severity = Severity::from_name(parts[2])
                .ok_or_else(|| bad(format!("unknown severity {:?}", parts[2])))?;
            let kind = MatchKind::from_name(parts[3])
                .ok_or_else(|| bad(format!("unknown match kind {:?}", parts[3])))?;
            let id = parts[0].to_string();
            if entries.iter().any(|e| e.id == id) {
                return Err(CatalogError::DuplicateId(id));
            }
            let glob = if kind == MatchKind::PathGlob {
                Some(compile_glob(parts[4]).map_err(|e| bad(e))?)
            } else {
                None
            };
            entries.push(CatalogEntry {
                id,
                channel,
                severity,
                kind,
                pattern: parts[4].to_string(),
                glob,
            });
        }
        Ok(IndicatorCatalog { entries })
    }

    pub fn default_catalog() -> IndicatorCatalog {
        IndicatorCatalog::load(DEFAULT_CATALOG).expect("shipped catalog is valid")
    }

    pub fn get(&self, id: &str) -> Option<&CatalogEntry> {
        self.entries.iter().find(|e| e.id == id)
    }
}

/// Path glob: `**` crosses `/` separators, `*` stays within one segment,
/// `?` matches one non-separator character.
fn compile_glob(glob: &str) -> Result<Regex, String> {
    let mut re = String::from("^");
    let mut chars = glob.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '*' => {
                if chars.peek() == Some(&'*') {
                    chars.next();
                    // swallow a following separator so `**/x` also matches `x`
                    if chars.peek() == Some(&'/') {
                        chars.next();
                        re.push_str("(?:.*/)?");
                    } else {
                        re.push_str(".*");
                    }
                } else {
                    re.push_str("[^/]*");
                }
            }
            '?' => re.push_str("[^/]"),
            c => re.push_str(&regex::escape(&c.to_string())),
        }
    }
    re.push('$');
    Regex::new(&re).map_err(|e| e.to_string())
}

/// Where an indicator matched: an archive path plus a byte offset or a DEX
/// string index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct Locus {
    pub source_path: String,
    pub position: Position,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Position {
    Path,
    Offset(usize),
    StringIndex(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Indicator {
    pub id: String,
    pub severity: Severity,
    pub channel: Channel,
    pub locus: Locus,
    pub evidence: String,
}

fn raise(entry: &CatalogEntry, locus: Locus, evidence: String) -> Indicator {
    Indicator {
        id: entry.id.clone(),
        severity: entry.severity,
        channel: entry.channel,
        locus,
        evidence,
    }
}

/// Applies every catalog entry to its match domain. `dexes` are parsed DEX
/// files by path, `assets` decompressed HtmlJs texts by path, `native_libs`
/// raw NativeLib bytes by path.
pub fn scan_indicators(
    inv: &ApkInventory,
    catalog: &IndicatorCatalog,
    dexes: &[(String, DexFile)],
    assets: &[(String, String)],
    native_libs: &[(String, Vec<u8>)],
) -> Vec<Indicator> {
    let mut out = Vec::new();
    for entry in &catalog.entries {
        match entry.kind {
            MatchKind::PathGlob => {
                let glob = entry.glob.as_ref().expect("compiled at load");
                for e in &inv.entries {
                    if glob.is_match(&e.path) {
                        out.push(raise(
                            entry,
                            Locus { source_path: e.path.clone(), position: Position::Path },
                            e.path.clone(),
                        ));
                    }
                }
            }
            MatchKind::Token => {
                for (path, dex) in dexes {
                    for (idx, s) in dex.strings.iter().enumerate() {
                        if s.contains(&entry.pattern) {
                            out.push(raise(
                                entry,
                                Locus {
                                    source_path: path.clone(),
                                    position: Position::StringIndex(idx),
                                },
                                s.clone(),
                            ));
                        }
                    }
                }
                for (path, text) in assets {
                    if let Some(off) = text.find(&entry.pattern) {
                        out.push(raise(
                            entry,
                            Locus { source_path: path.clone(), position: Position::Offset(off) },
                            entry.pattern.clone(),
                        ));
                    }
                }
            }
            MatchKind::SymbolToken => {
                for (path, bytes) in native_libs {
                    for (off, sym) in nul_strings(bytes) {
                        if sym.contains(&entry.pattern) {
                            out.push(raise(
                                entry,
                                Locus { source_path: path.clone(), position: Position::Offset(off) },
                                sym.clone(),
                            ));
                        }
                    }
                }
            }
            MatchKind::Derived => {}
        }
    }
    for (path, bytes) in native_libs {
        out.extend(jni_wasm_bridges(catalog, path, bytes));
    }
    sort_indicators(&mut out);
    out
}

/// JNI export names (`Java_<class>_<method>`) whose remainder carries a wasm
/// token. Plain NUL-terminated string search; no ELF parsing.
pub fn jni_wasm_bridges(catalog: &IndicatorCatalog, path: &str, bytes: &[u8]) -> Vec<Indicator> {
    let Some(entry) = catalog.get("jni-wasm-bridge") else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for (off, sym) in nul_strings(bytes) {
        if let Some(rest) = sym.strip_prefix("Java_") {
            if rest.contains("wasm") || rest.contains("Wasm") || rest.contains("WASM") {
                out.push(raise(
                    entry,
                    Locus { source_path: path.to_string(), position: Position::Offset(off) },
                    sym.clone(),
                ));
            }
        }
    }
    out
}

pub fn sort_indicators(indicators: &mut [Indicator]) {
    indicators.sort_by(|a, b| (&a.id, &a.locus).cmp(&(&b.id, &b.locus)));
}

/// Printable NUL-terminated strings of length >= 4, with their byte offsets.
fn nul_strings(bytes: &[u8]) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, &b) in bytes.iter().enumerate() {
        if b == 0 {
            if i > start && i - start >= 4 {
                let chunk = &bytes[start..i];
                if chunk.iter().all(|&c| (0x20..=0x7e).contains(&c)) {
                    out.push((start, String::from_utf8_lossy(chunk).into_owned()));
                }
            }
            start = i + 1;
        } else if !(0x20..=0x7e).contains(&b) {
            start = i + 1;
        }
    }
    out
}
