//! End-to-end scan pipeline: container -> carver -> parser -> capability ->
//! IoC -> indicators -> report.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::capability::{CapabilityProfile, CapabilityTable, DEFAULT_CAPABILITY_TABLE};
use crate::carver::{self, CarveStatus, CarvedCandidate};
use crate::container::{self, ApkInventory, ContainerError, FileClass};
use crate::dex_lite;
use crate::indicators::{
    Indicator, IndicatorCatalog, Locus, Position, DEFAULT_CATALOG,
};
use crate::ioc::{self, ExtractMode, IocHit, IocPatterns, DEFAULT_IOC_PATTERNS};
use crate::report::{
    assemble, AssembleInput, ScanReport, ScoringTable, DEFAULT_WEIGHTS,
};

#[derive(Debug, Clone)]
pub struct ScanOptions {
    /// Also scan whole module binaries for strings, not just data segments.
    pub deep: bool,
    pub min_string_len: usize,
    pub extract_out: Option<std::path::PathBuf>,
    pub jobs: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions { deep: false, min_string_len: ioc::DEFAULT_MIN_LEN, extract_out: None, jobs: 1 }
    }
}

/// All loaded data tables plus their digests (embedded in every report).
pub struct Catalogs {
    pub indicator: IndicatorCatalog,
    pub capability: CapabilityTable,
    pub ioc: IocPatterns,
    pub weights: ScoringTable,
    pub digests: BTreeMap<String, String>,
}

impl Catalogs {
    pub fn load_default() -> Catalogs {
        let mut digests = BTreeMap::new();
        digests.insert("catalog".into(), sha256_hex(DEFAULT_CATALOG.as_bytes()));
        digests.insert("capability".into(), sha256_hex(DEFAULT_CAPABILITY_TABLE.as_bytes()));
        digests.insert("ioc_patterns".into(), sha256_hex(DEFAULT_IOC_PATTERNS.as_bytes()));
        digests.insert("weights".into(), sha256_hex(DEFAULT_WEIGHTS.as_bytes()));
        Catalogs {
            indicator: IndicatorCatalog::default_catalog(),
            capability: CapabilityTable::default_table(),
            ioc: IocPatterns::default_patterns(),
            weights: ScoringTable::default_table(),
            digests,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let d = h.finalize();
    d.iter().map(|b| format!("{b:02x}")).collect()
}

/// Scans one APK given as raw bytes. All per-entry failures degrade to
/// warnings in the report; only a broken container is an error.
pub fn scan_apk_bytes(
    bytes: Vec<u8>,
    label: &str,
    opts: &ScanOptions,
    catalogs: &Catalogs,
) -> Result<ScanReport, ContainerError> {
    let digest = sha256_hex(&bytes);
    let inv = container::open_archive(bytes)?;
    let mut warnings = inv.warnings.clone();

    let (candidates, carve_warnings) = run_in_pool(opts.jobs, || carver::scan_inventory(&inv));
    warnings.extend(carve_warnings);

    // Collect parsed DEX tables, HtmlJs texts, and native-lib bytes.
    let mut dexes = Vec::new();
    let mut assets = Vec::new();
    let mut native_libs = Vec::new();
    for (i, entry) in inv.entries.iter().enumerate() {
        match inv.classes[i] {
            FileClass::Dex => match inv.entry_bytes_at(i) {
                Ok(data) => match dex_lite::parse_dex(data.bytes) {
                    Ok(dex) => dexes.push((entry.path.clone(), dex)),
                    Err(e) => warnings.push(format!("{}: {e}", entry.path)),
                },
                Err(e) => warnings.push(format!("{}: {e}", entry.path)),
            },
            FileClass::HtmlJs => match inv.entry_bytes_at(i) {
                Ok(data) => {
                    assets.push((entry.path.clone(), String::from_utf8_lossy(&data.bytes).into_owned()))
                }
                Err(e) => warnings.push(format!("{}: {e}", entry.path)),
            },
            FileClass::NativeLib => match inv.entry_bytes_at(i) {
                Ok(data) => native_libs.push((entry.path.clone(), data.bytes)),
                Err(e) => warnings.push(format!("{}: {e}", entry.path)),
            },
            _ => {}
        }
    }

    let mut indicators =
        crate::indicators::scan_indicators(&inv, &catalogs.indicator, &dexes, &assets, &native_libs);
    indicators.extend(derived_indicators(&inv, &candidates, &dexes, &catalogs.indicator));
    crate::indicators::sort_indicators(&mut indicators);

    let (profiles, iocs) = analyze_modules(&candidates, opts, catalogs);

    // Preopen-style mappings hidden in native libraries are IoCs too.
    let mut host_iocs = Vec::new();
    for (path, bytes) in &native_libs {
        let strings: Vec<ioc::ExtractedString> = ioc::printable_runs(bytes, opts.min_string_len)
            .into_iter()
            .map(|(off, text)| ioc::ExtractedString {
                text,
                source: ioc::StringSource::WholeBinary { offset: off },
            })
            .collect();
        for hit in ioc::match_iocs(&catalogs.ioc, &strings) {
            host_iocs.push((path.clone(), hit));
        }
    }

    if let Some(dir) = &opts.extract_out {
        if let Err(e) = std::fs::create_dir_all(dir) {
            warnings.push(format!("extract dir: {e}"));
        } else {
            extract_candidates(dir, &candidates, &mut warnings);
        }
    }

    Ok(assemble(
        AssembleInput {
            target_path: label.to_string(),
            target_sha256: digest,
            inventory: Some(&inv),
            candidates: &candidates,
            profiles: &profiles,
            iocs: &iocs,
            host_iocs: &host_iocs,
            indicators: &indicators,
            warnings,
            catalog_digests: catalogs.digests.clone(),
        },
        &catalogs.indicator,
        &catalogs.weights,
    ))
}

/// Scans a bare `.wasm` file: parser + capability + IoC only.
pub fn scan_wasm_bytes(
    bytes: Vec<u8>,
    label: &str,
    opts: &ScanOptions,
    catalogs: &Catalogs,
) -> ScanReport {
    let digest = sha256_hex(&bytes);
    let mut candidates: Vec<CarvedCandidate> = carver::scan_bytes(&bytes);
    for c in &mut candidates {
        c.source_path = label.to_string();
        c.source_class = FileClass::WasmFile;
    }
    let (profiles, iocs) = analyze_modules(&candidates, opts, catalogs);
    let mut warnings = Vec::new();
    if let Some(dir) = &opts.extract_out {
        if let Err(e) = std::fs::create_dir_all(dir) {
            warnings.push(format!("extract dir: {e}"));
        } else {
            extract_candidates(dir, &candidates, &mut warnings);
        }
    }
    let mut indicators = Vec::new();
    for cand in &candidates {
        if let Some(m) = &cand.module {
            if !m.malformed.is_empty() {
                indicators.extend(malformed_wasm_indicator(&catalogs.indicator, cand));
            }
        }
    }
    assemble(
        AssembleInput {
            target_path: label.to_string(),
            target_sha256: digest,
            inventory: None,
            candidates: &candidates,
            profiles: &profiles,
            iocs: &iocs,
            host_iocs: &[],
            indicators: &indicators,
            warnings,
            catalog_digests: catalogs.digests.clone(),
        },
        &catalogs.indicator,
        &catalogs.weights,
    )
}

fn analyze_modules(
    candidates: &[CarvedCandidate],
    opts: &ScanOptions,
    catalogs: &Catalogs,
) -> (Vec<Vec<CapabilityProfile>>, Vec<Vec<IocHit>>) {
    let mut profiles = Vec::with_capacity(candidates.len());
    let mut iocs = Vec::with_capacity(candidates.len());
    for cand in candidates {
        match &cand.module {
            Some(m) => {
                profiles.push(crate::capability::profile_all_exports(m, &catalogs.capability));
                let strings = if opts.deep {
                    ioc::extract_strings(m, Some(&cand.raw), opts.min_string_len, ExtractMode::WholeBinary)
                } else {
                    ioc::extract_strings(m, None, opts.min_string_len, ExtractMode::SegmentsOnly)
                };
                iocs.push(ioc::match_iocs(&catalogs.ioc, &strings));
            }
            None => {
                profiles.push(Vec::new());
                iocs.push(Vec::new());
            }
        }
    }
    (profiles, iocs)
}

/// Indicators raised from pipeline results rather than catalog pattern
/// matching. Each id must exist in the catalog (severity/channel come from
/// there).
fn derived_indicators(
    inv: &ApkInventory,
    candidates: &[CarvedCandidate],
    dexes: &[(String, dex_lite::DexFile)],
    catalog: &IndicatorCatalog,
) -> Vec<Indicator> {
    let mut out = Vec::new();
    let mk = |id: &str, locus: Locus, evidence: String| -> Option<Indicator> {
        catalog.get(id).map(|e| Indicator {
            id: e.id.clone(),
            severity: e.severity,
            channel: e.channel,
            locus,
            evidence,
        })
    };
    for path in &inv.duplicates {
        out.extend(mk(
            "duplicate-entry",
            Locus { source_path: path.clone(), position: Position::Path },
            path.clone(),
        ));
    }
    for cand in candidates {
        if cand.source_class != FileClass::WasmFile {
            out.extend(mk(
                "wasm-bytearray-signature",
                Locus {
                    source_path: cand.source_path.clone(),
                    position: Position::Offset(cand.offset),
                },
                format!("wasm magic at offset {}", cand.offset),
            ));
        }
        if let Some(m) = &cand.module {
            if !m.malformed.is_empty() {
                out.extend(malformed_wasm_indicator(catalog, cand));
            }
        }
    }
    for (path, dex) in dexes {
        if dex.malformed_strings > 0 {
            out.extend(mk(
                "malformed-dex-string",
                Locus { source_path: path.clone(), position: Position::Path },
                format!("{} string(s) with replacement characters", dex.malformed_strings),
            ));
        }
    }
    out
}

fn malformed_wasm_indicator(catalog: &IndicatorCatalog, cand: &CarvedCandidate) -> Vec<Indicator> {
    let Some(entry) = catalog.get("malformed-wasm-section") else {
        return Vec::new();
    };
    let issues = cand.module.as_ref().map(|m| m.malformed.len()).unwrap_or(0);
    vec![Indicator {
        id: entry.id.clone(),
        severity: entry.severity,
        channel: entry.channel,
        locus: Locus {
            source_path: cand.source_path.clone(),
            position: Position::Offset(cand.offset),
        },
        evidence: format!("{issues} undecodable section(s)"),
    }]
}

fn extract_candidates(
    dir: &std::path::Path,
    candidates: &[CarvedCandidate],
    warnings: &mut Vec<String>,
) {
    for cand in candidates {
        if cand.status != CarveStatus::Parsed {
            continue;
        }
        let name = carver::extract_file_name(&cand.source_path, cand.offset);
        if let Err(e) = std::fs::write(dir.join(&name), &cand.raw) {
            warnings.push(format!("extract {name}: {e}"));
        }
    }
}

fn run_in_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("pool")
        .install(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::Verdict;
    use crate::testkit::{
        emit_dex_with_strings_and_blob, emit_module, emit_zip, spyware_analog_spec, ZipEntrySpec,
    };

    const URL: &str = "http://push.mobilefonex.com/upload.php";

    fn spyware_apk() -> Vec<u8> {
        let module = emit_module(&spyware_analog_spec(URL)).unwrap();
        let (dex, _) = emit_dex_with_strings_and_blob(&["MainActivity"], &module);
        emit_zip(&[
            ZipEntrySpec::stored("AndroidManifest.xml", b"<manifest/>".to_vec()),
            ZipEntrySpec::stored("classes.dex", dex),
        ])
    }

    #[test]
    fn spyware_analog_hits_hard_trigger() {
        let catalogs = Catalogs::load_default();
        let opts = ScanOptions::default();
        let report = scan_apk_bytes(spyware_apk(), "spy.apk", &opts, &catalogs).unwrap();
        assert_eq!(report.verdict, Verdict::LikelyMaliciousHiding);
        let urls: Vec<&str> = report.wasm_modules[0]
            .iocs
            .iter()
            .filter(|i| i.kind == crate::ioc::IocKind::Url)
            .map(|i| i.value.as_str())
            .collect();
        assert_eq!(urls, vec![URL]);
        assert!(report
            .indicators
            .iter()
            .any(|i| i.id == "wasm-bytearray-signature"));
    }

    #[test]
    fn scan_is_deterministic_across_job_counts() {
        let catalogs = Catalogs::load_default();
        let apk = spyware_apk();
        let mut opts = ScanOptions::default();
        let a = scan_apk_bytes(apk.clone(), "x.apk", &opts, &catalogs).unwrap();
        opts.jobs = 8;
        let b = scan_apk_bytes(apk, "x.apk", &opts, &catalogs).unwrap();
        assert_eq!(crate::report::render_json(&a), crate::report::render_json(&b));
    }

    #[test]
    fn bare_wasm_scan() {
        let catalogs = Catalogs::load_default();
        let bytes = emit_module(&crate::testkit::ModuleSpec {
            funcs: vec![crate::testkit::FuncSpec::new(
                crate::testkit::SigSpec::empty(),
                vec![crate::testkit::BodyOp::End],
            )],
            exports: vec![("run".into(), 0)],
            ..Default::default()
        })
        .unwrap();
        let report = scan_wasm_bytes(bytes, "m.wasm", &ScanOptions::default(), &catalogs);
        assert_eq!(report.verdict, Verdict::WasmPresent);
        assert_eq!(report.wasm_modules.len(), 1);
    }

    #[test]
    fn duplicate_entries_raise_indicator() {
        let catalogs = Catalogs::load_default();
        let zip = emit_zip(&[
            ZipEntrySpec::stored("classes.dex", b"AAAA".to_vec()),
            ZipEntrySpec::stored("classes.dex", b"BBBB".to_vec()),
        ]);
        let report =
            scan_apk_bytes(zip, "d.apk", &ScanOptions::default(), &catalogs).unwrap();
        assert!(report.indicators.iter().any(|i| i.id == "duplicate-entry"));
    }
}
