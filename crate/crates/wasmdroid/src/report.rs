//! Report assembly: evidence rows, score, verdict, and the canonical JSON /
//! text renderings.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capability::{Capability, CapabilityProfile, Soundness};
use crate::carver::{CarveStatus, CarvedCandidate};
use crate::container::{ApkInventory, FileClass};
use crate::indicators::{Channel, Indicator, MatchKind, IndicatorCatalog, Position, Severity};
use crate::ioc::{IocHit, IocKind, StringSource};
use crate::wasm_parser::dump_structure;

pub const SCHEMA_VERSION: &str = "1.0.0";

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("weights line {line}: {detail}")]
    BadLine { line: usize, detail: String },
    #[error("thresholds must be strictly increasing")]
    BadThresholds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EvidenceKind {
    WasmFileAsset,
    MagicOnly,
    ParsedModule,
    CarvedFromNonWasm,
    HostCustomCapability,
    WasiFilesystemCapability,
    IocUrlOrPreopen,
    RuntimeLibIndicator,
    BridgeTokenIndicator,
}

impl EvidenceKind {
    pub fn key(self) -> &'static str {
        match self {
            EvidenceKind::WasmFileAsset => "wasm_file_asset",
            EvidenceKind::MagicOnly => "magic_only",
            EvidenceKind::ParsedModule => "parsed_module",
            EvidenceKind::CarvedFromNonWasm => "carved_from_non_wasm",
            EvidenceKind::HostCustomCapability => "host_custom_capability",
            EvidenceKind::WasiFilesystemCapability => "wasi_filesystem_capability",
            EvidenceKind::IocUrlOrPreopen => "ioc_url_or_preopen",
            EvidenceKind::RuntimeLibIndicator => "runtime_lib_indicator",
            EvidenceKind::BridgeTokenIndicator => "bridge_token_indicator",
        }
    }

    fn from_key(s: &str) -> Option<EvidenceKind> {
        Some(match s {
            "wasm_file_asset" => EvidenceKind::WasmFileAsset,
            "magic_only" => EvidenceKind::MagicOnly,
            "parsed_module" => EvidenceKind::ParsedModule,
            "carved_from_non_wasm" => EvidenceKind::CarvedFromNonWasm,
            "host_custom_capability" => EvidenceKind::HostCustomCapability,
            "wasi_filesystem_capability" => EvidenceKind::WasiFilesystemCapability,
            "ioc_url_or_preopen" => EvidenceKind::IocUrlOrPreopen,
            "runtime_lib_indicator" => EvidenceKind::RuntimeLibIndicator,
            "bridge_token_indicator" => EvidenceKind::BridgeTokenIndicator,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ScoringTable {
    pub weights: BTreeMap<EvidenceKind, u32>,
    pub caps: BTreeMap<EvidenceKind, u32>,
    pub wasm_present_min: u32,
    pub suspicious_min: u32,
    pub malicious_min: u32,
}

pub const DEFAULT_WEIGHTS: &str = include_str!("../data/weights.tsv");

impl ScoringTable {
    pub fn load(text: &str) -> Result<ScoringTable, WeightsError> {
        let mut weights = BTreeMap::new();
        let mut caps = BTreeMap::new();
        let mut thresholds: BTreeMap<String, u32> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            let bad = |detail: String| WeightsError::BadLine { line: i + 1, detail };
            if parts.len() != 3 {
                return Err(bad("expected 3 tab-separated fields".into()));
            }
            let value: u32 =
                parts[2].parse().map_err(|_| bad(format!("bad number {:?}", parts[2])))?;
            match parts[0] {
                "weight" | "cap" => {
                    let kind = EvidenceKind::from_key(parts[1])
                        .ok_or_else(|| bad(format!("unknown evidence kind {:?}", parts[1])))?;
                    if parts[0] == "weight" {
                        weights.insert(kind, value);
                    } else {
                        caps.insert(kind, value);
                    }
                }
                "threshold" => {
                    thresholds.insert(parts[1].to_string(), value);
                }
                other => return Err(bad(format!("unknown row kind {other:?}"))),
            }
        }
        let get = |k: &str| thresholds.get(k).copied();
        let (Some(p), Some(s), Some(m)) = (get("wasm_present"), get("suspicious"), get("malicious"))
        else {
            return Err(WeightsError::BadThresholds);
        };
        if !(p < s && s < m) {
            return Err(WeightsError::BadThresholds);
        }
        Ok(ScoringTable { weights, caps, wasm_present_min: p, suspicious_min: s, malicious_min: m })
    }

    pub fn default_table() -> ScoringTable {
        ScoringTable::load(DEFAULT_WEIGHTS).expect("shipped weights table is valid")
    }

    pub fn weight(&self, kind: EvidenceKind) -> u32 {
        self.weights.get(&kind).copied().unwrap_or(0)
    }

    /// Sums evidence rows, applying per-kind caps.
    pub fn score(&self, rows: &[EvidenceRow]) -> u32 {
        let mut per_kind: BTreeMap<EvidenceKind, u32> = BTreeMap::new();
        for row in rows {
            *per_kind.entry(row.kind).or_insert(0) += row.weight;
        }
        per_kind
            .into_iter()
            .map(|(kind, sum)| self.caps.get(&kind).map_or(sum, |cap| sum.min(*cap)))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verdict {
    Clean,
    WasmPresent,
    SuspiciousHiding,
    LikelyMaliciousHiding,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Clean => "Clean",
            Verdict::WasmPresent => "WasmPresent",
            Verdict::SuspiciousHiding => "SuspiciousHiding",
            Verdict::LikelyMaliciousHiding => "LikelyMaliciousHiding",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Clean => 0,
            Verdict::WasmPresent => 2,
            Verdict::SuspiciousHiding => 3,
            Verdict::LikelyMaliciousHiding => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceRow {
    pub kind: EvidenceKind,
    pub locus: String,
    pub weight: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IocRecord {
    pub kind: IocKind,
    pub value: String,
    pub source: StringSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapabilityRecord {
    pub export_name: String,
    pub reachable_imports: Vec<(String, String)>,
    pub categories: Vec<Capability>,
    pub soundness: Soundness,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleRecord {
    pub source_path: String,
    pub source_occurrence: usize,
    pub source_class: String,
    pub offset: usize,
    pub length: usize,
    pub status: CarveStatus,
    pub exports: Vec<String>,
    pub imports: Vec<(String, String)>,
    pub capabilities: Vec<CapabilityRecord>,
    pub iocs: Vec<IocRecord>,
    pub structure: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IndicatorRecord {
    pub id: String,
    pub severity: String,
    pub channel: String,
    pub source_path: String,
    pub position: String,
    pub evidence: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanReport {
    pub schema_version: String,
    pub tool_version: String,
    pub target_path: String,
    pub target_sha256: String,
    pub catalog_digests: BTreeMap<String, String>,
    pub inventory_summary: BTreeMap<String, usize>,
    pub wasm_modules: Vec<ModuleRecord>,
    /// IoC hits found outside Wasm modules (e.g. preopen mappings planted in
    /// native libraries), keyed by archive path.
    pub host_iocs: Vec<(String, IocRecord)>,
    pub indicators: Vec<IndicatorRecord>,
    pub evidence: Vec<EvidenceRow>,
    pub score: u32,
    pub verdict: Verdict,
    pub warnings: Vec<String>,
}

pub struct AssembleInput<'a> {
    pub target_path: String,
    pub target_sha256: String,
    pub inventory: Option<&'a ApkInventory>,
    pub candidates: &'a [CarvedCandidate],
    /// Per-candidate capability profiles, parallel to `candidates`.
    pub profiles: &'a [Vec<CapabilityProfile>],
    /// Per-candidate IoC hits, parallel to `candidates`.
    pub iocs: &'a [Vec<IocHit>],
    pub host_iocs: &'a [(String, IocHit)],
    pub indicators: &'a [Indicator],
    pub warnings: Vec<String>,
    pub catalog_digests: BTreeMap<String, String>,
}

/// Aggregates all upstream findings into a scored, deterministic report.
pub fn assemble(
    input: AssembleInput<'_>,
    catalog: &IndicatorCatalog,
    table: &ScoringTable,
) -> ScanReport {
    let mut evidence: Vec<EvidenceRow> = Vec::new();
    let mut hard_trigger = false;
    let mut any_ioc_or_custom = false;
    let mut any_carved_from_non_wasm = false;

    let mut inventory_summary = BTreeMap::new();
    if let Some(inv) = input.inventory {
        for class in &inv.classes {
            *inventory_summary.entry(class.name().to_string()).or_insert(0) += 1;
        }
        for (i, class) in inv.classes.iter().enumerate() {
            if *class == FileClass::WasmFile {
                evidence.push(EvidenceRow {
                    kind: EvidenceKind::WasmFileAsset,
                    locus: inv.entries[i].path.clone(),
                    weight: table.weight(EvidenceKind::WasmFileAsset),
                });
            }
        }
    }

    let mut modules = Vec::new();
    for (i, cand) in input.candidates.iter().enumerate() {
        let locus = format!("{}@{}", cand.source_path, cand.offset);
        match cand.status {
            CarveStatus::Parsed => {
                evidence.push(EvidenceRow {
                    kind: EvidenceKind::ParsedModule,
                    locus: locus.clone(),
                    weight: table.weight(EvidenceKind::ParsedModule),
                });
                if cand.source_class != FileClass::WasmFile {
                    any_carved_from_non_wasm = true;
                    evidence.push(EvidenceRow {
                        kind: EvidenceKind::CarvedFromNonWasm,
                        locus: locus.clone(),
                        weight: table.weight(EvidenceKind::CarvedFromNonWasm),
                    });
                }
            }
            CarveStatus::MagicOnly => {
                evidence.push(EvidenceRow {
                    kind: EvidenceKind::MagicOnly,
                    locus: locus.clone(),
                    weight: table.weight(EvidenceKind::MagicOnly),
                });
            }
        }

        let profiles = input.profiles.get(i).cloned().unwrap_or_default();
        let iocs = input.iocs.get(i).cloned().unwrap_or_default();

        let mut categories_seen = std::collections::BTreeSet::new();
        for p in &profiles {
            for c in &p.categories {
                categories_seen.insert(*c);
            }
        }
        if categories_seen.contains(&Capability::HostCustom) {
            any_ioc_or_custom = true;
            evidence.push(EvidenceRow {
                kind: EvidenceKind::HostCustomCapability,
                locus: locus.clone(),
                weight: table.weight(EvidenceKind::HostCustomCapability),
            });
        }
        if categories_seen.contains(&Capability::WasiFilesystem) {
            evidence.push(EvidenceRow {
                kind: EvidenceKind::WasiFilesystemCapability,
                locus: locus.clone(),
                weight: table.weight(EvidenceKind::WasiFilesystemCapability),
            });
        }
        for hit in &iocs {
            if matches!(hit.kind, IocKind::Url | IocKind::PreopenMapping) {
                any_ioc_or_custom = true;
                evidence.push(EvidenceRow {
                    kind: EvidenceKind::IocUrlOrPreopen,
                    locus: format!("{locus} {}", hit.value),
                    weight: table.weight(EvidenceKind::IocUrlOrPreopen),
                });
            }
        }

        let (exports, imports, structure) = match &cand.module {
            Some(m) => (
                m.exports.iter().map(|e| e.name.clone()).collect(),
                m.imports.iter().map(|imp| (imp.module.clone(), imp.name.clone())).collect(),
                dump_structure(m),
            ),
            None => (Vec::new(), Vec::new(), String::new()),
        };
        modules.push(ModuleRecord {
            source_path: cand.source_path.clone(),
            source_occurrence: cand.source_occurrence,
            source_class: cand.source_class.name().to_string(),
            offset: cand.offset,
            length: cand.length,
            status: cand.status,
            exports,
            imports,
            capabilities: profiles
                .iter()
                .map(|p| CapabilityRecord {
                    export_name: p.export_name.clone(),
                    reachable_imports: p.reachable_imports.iter().cloned().collect(),
                    categories: p.categories.iter().cloned().collect(),
                    soundness: p.soundness,
                })
                .collect(),
            iocs: iocs
                .iter()
                .map(|h| IocRecord { kind: h.kind, value: h.value.clone(), source: h.source.clone() })
                .collect(),
            structure,
        });
    }

    for (path, hit) in input.host_iocs {
        if matches!(hit.kind, IocKind::Url | IocKind::PreopenMapping) {
            any_ioc_or_custom = true;
            evidence.push(EvidenceRow {
                kind: EvidenceKind::IocUrlOrPreopen,
                locus: format!("{path} {}", hit.value),
                weight: table.weight(EvidenceKind::IocUrlOrPreopen),
            });
        }
    }

    for ind in input.indicators {
        let entry = catalog.get(&ind.id);
        let kind = match entry.map(|e| e.kind) {
            Some(MatchKind::PathGlob) | Some(MatchKind::SymbolToken)
                if ind.channel == Channel::NativeRuntime && ind.severity == Severity::Strong =>
            {
                Some(EvidenceKind::RuntimeLibIndicator)
            }
            Some(MatchKind::Token) if ind.severity >= Severity::Suspicious => {
                Some(EvidenceKind::BridgeTokenIndicator)
            }
            Some(MatchKind::Derived) if ind.id == "jni-wasm-bridge" => {
                Some(EvidenceKind::BridgeTokenIndicator)
            }
            _ => None,
        };
        if let Some(kind) = kind {
            evidence.push(EvidenceRow {
                kind,
                locus: format!("{} {}", ind.id, ind.locus.source_path),
                weight: table.weight(kind),
            });
        }
    }

    if any_carved_from_non_wasm && any_ioc_or_custom {
        hard_trigger = true;
    }

    evidence.sort_by(|a, b| (a.kind, &a.locus).cmp(&(b.kind, &b.locus)));
    let score = table.score(&evidence);

    let verdict = if hard_trigger {
        Verdict::LikelyMaliciousHiding
    } else if score >= table.malicious_min {
        Verdict::LikelyMaliciousHiding
    } else if score >= table.suspicious_min {
        Verdict::SuspiciousHiding
    } else if score >= table.wasm_present_min {
        Verdict::WasmPresent
    } else {
        Verdict::Clean
    };

    let mut indicators: Vec<IndicatorRecord> = input
        .indicators
        .iter()
        .map(|i| IndicatorRecord {
            id: i.id.clone(),
            severity: i.severity.name().to_string(),
            channel: i.channel.name().to_string(),
            source_path: i.locus.source_path.clone(),
            position: match i.locus.position {
                Position::Path => "path".to_string(),
                Position::Offset(o) => format!("offset {o}"),
                Position::StringIndex(s) => format!("string {s}"),
            },
            evidence: i.evidence.clone(),
        })
        .collect();
    indicators.sort();

    let mut host_iocs: Vec<(String, IocRecord)> = input
        .host_iocs
        .iter()
        .map(|(p, h)| {
            (p.clone(), IocRecord { kind: h.kind, value: h.value.clone(), source: h.source.clone() })
        })
        .collect();
    host_iocs.sort_by(|a, b| (&a.0, &a.1.value).cmp(&(&b.0, &b.1.value)));

    let mut warnings = input.warnings;
    warnings.sort();

    ScanReport {
        schema_version: SCHEMA_VERSION.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        target_path: input.target_path,
        target_sha256: input.target_sha256,
        catalog_digests: input.catalog_digests,
        inventory_summary,
        wasm_modules: modules,
        host_iocs,
        indicators,
        evidence,
        score,
        verdict,
        warnings,
    }
}

/// Canonical JSON: keys sorted, fixed integer formatting. Byte-identical
/// inputs give byte-identical output.
pub fn render_json(report: &ScanReport) -> Vec<u8> {
    // serde_json's Map is a BTreeMap (preserve_order off), so converting to
    // Value sorts all object keys.
    let value = serde_json::to_value(report).expect("report serializes");
    let mut out = serde_json::to_vec_pretty(&value).expect("value renders");
    out.push(b'\n');
    out
}

pub fn parse_json(bytes: &[u8]) -> serde_json::Result<ScanReport> {
    serde_json::from_slice(bytes)
}

/// Stable columnar digest for humans.
pub fn render_text(report: &ScanReport) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    let _ = writeln!(s, "target:  {}", report.target_path);
    let _ = writeln!(s, "sha256:  {}", report.target_sha256);
    let _ = writeln!(s, "verdict: {} (score {})", report.verdict.name(), report.score);
    let classes: Vec<String> =
        report.inventory_summary.iter().map(|(k, v)| format!("{k}={v}")).collect();
    let _ = writeln!(s, "entries: {}", classes.join(" "));
    for m in &report.wasm_modules {
        let _ = writeln!(
            s,
            "module:  {}@{} len={} {:?} exports=[{}]",
            m.source_path,
            m.offset,
            m.length,
            m.status,
            m.exports.join(", ")
        );
        for c in &m.capabilities {
            let cats: Vec<&str> = c.categories.iter().map(|c| c.name()).collect();
            let _ = writeln!(s, "  export {} -> {} ({:?})", c.export_name, cats.join("+"), c.soundness);
        }
        for ioc in &m.iocs {
            let _ = writeln!(s, "  ioc {} {}", ioc.kind.name(), ioc.value);
        }
    }
    for (path, ioc) in &report.host_iocs {
        let _ = writeln!(s, "hostioc: {} {} {}", path, ioc.kind.name(), ioc.value);
    }
    for i in &report.indicators {
        let _ = writeln!(s, "indic:   {} [{}/{}] {} ({})", i.id, i.channel, i.severity, i.source_path, i.position);
    }
    for w in &report.warnings {
        let _ = writeln!(s, "warn:    {w}");
    }
    s
}
