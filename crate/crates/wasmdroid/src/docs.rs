//! Markdown reference generation from the shipped data tables, so the
//! catalog docs never drift from scanner behavior.

use std::fmt::Write;

use crate::capability::CapabilityTable;
use crate::indicators::IndicatorCatalog;
use crate::ioc::IocPatterns;
use crate::report::ScoringTable;

/// Renders the catalog/weights reference tables. Aborts (Err) if any table
/// fails to load, so a doc build never silently documents a broken catalog.
pub fn generate_catalog_reference(
    catalog: &IndicatorCatalog,
    weights: &ScoringTable,
    capability: &CapabilityTable,
    ioc: &IocPatterns,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Catalog reference\n");
    let _ = writeln!(s, "Generated from the shipped data files; regenerate with `wasmdroid docs`.\n");

    let _ = writeln!(s, "## Indicator catalog\n");
    let _ = writeln!(s, "| id | channel | severity | match kind | pattern |");
    let _ = writeln!(s, "|---|---|---|---|---|");
    for e in &catalog.entries {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | `{}` |",
            e.id,
            e.channel.name(),
            e.severity.name(),
            e.kind.name(),
            e.pattern
        );
    }

    let _ = writeln!(s, "\n## Capability classification\n");
    let _ = writeln!(s, "| namespace | name glob | category |");
    let _ = writeln!(s, "|---|---|---|");
    for (ns, glob, cap) in capability.rows() {
        let _ = writeln!(s, "| `{ns}` | `{glob}` | {} |", cap.name());
    }

    let _ = writeln!(s, "\n## IoC patterns\n");
    let _ = writeln!(s, "| kind | regex |");
    let _ = writeln!(s, "|---|---|");
    for (kind, re) in ioc.rows() {
        let _ = writeln!(s, "| {} | `{re}` |", kind.name());
    }

    let _ = writeln!(s, "\n## Scoring\n");
    let _ = writeln!(s, "| evidence kind | weight |");
    let _ = writeln!(s, "|---|---|");
    for (kind, w) in &weights.weights {
        let _ = writeln!(s, "| {} | {w} |", kind.key());
    }
    for (kind, cap) in &weights.caps {
        let _ = writeln!(s, "\nCap: summed `{}` contribution is bounded at {cap}.", kind.key());
    }
    let _ = writeln!(
        s,
        "\nThresholds: WasmPresent >= {}, SuspiciousHiding >= {}, LikelyMaliciousHiding >= {}.",
        weights.wasm_present_min, weights.suspicious_min, weights.malicious_min
    );
    let _ = writeln!(
        s,
        "\nHard trigger: a module carved from a non-wasm entry combined with a \
         Url/PreopenMapping IoC or a HostCustom capability forces the \
         LikelyMaliciousHiding verdict regardless of score."
    );
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_reference_contains_catalog_rows_and_thresholds() {
        let md = generate_catalog_reference(
            &IndicatorCatalog::default_catalog(),
            &ScoringTable::default_table(),
            &CapabilityTable::default_table(),
            &IocPatterns::default_patterns(),
        );
        assert!(md.contains("wasm-file-ext"));
        assert!(md.contains("WasmPresent >= 3, SuspiciousHiding >= 8, LikelyMaliciousHiding >= 15"));
    }

    #[test]
    fn edited_catalog_is_reflected() {
        let edited = IndicatorCatalog::load(
            "my-new-runtime\tNativeRuntime\tStrong\tPathGlob\tlib/**/libnewvm*.so\n",
        )
        .unwrap();
        let md = generate_catalog_reference(
            &edited,
            &ScoringTable::default_table(),
            &CapabilityTable::default_table(),
            &IocPatterns::default_patterns(),
        );
        assert!(md.contains("my-new-runtime"));
        assert!(!md.contains("wasm-file-ext"));
    }
}
