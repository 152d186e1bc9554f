use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use wasmdroid::capability::CapabilityTable;
use wasmdroid::indicators::IndicatorCatalog;
use wasmdroid::ioc::IocPatterns;
use wasmdroid::pipeline::{self, Catalogs, ScanOptions};
use wasmdroid::report::{render_json, render_text, ScanReport, ScoringTable, Verdict};

#[derive(Parser)]
#[command(name = "wasmdroid", version, about = "Static scanner for Wasm payload hiding in Android APKs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan APKs, .wasm files, or directories of either
    Scan {
        /// Input paths (files or directories)
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Output format
        #[arg(long, default_value = "json", value_parser = ["json", "text"])]
        format: String,
        /// Also string-scan whole module binaries, not just data segments
        #[arg(long)]
        deep: bool,
        /// Minimum extracted string length
        #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u16).range(1..))]
        min_string_len: u16,
        /// Write each recovered module to this directory, bit-exact
        #[arg(long)]
        extract_out: Option<PathBuf>,
        /// Indicator catalog file (overrides the shipped one)
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Scoring table file (overrides the shipped one)
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Worker parallelism
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
        jobs: u16,
    },
    /// Regenerate the data-driven catalog reference markdown
    Docs {
        /// Output directory
        #[arg(long, default_value = "docs")]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Scan {
            paths,
            format,
            deep,
            min_string_len,
            extract_out,
            catalog,
            weights,
            jobs,
        } => {
            let opts = ScanOptions {
                deep,
                min_string_len: min_string_len as usize,
                extract_out,
                jobs: jobs as usize,
            };
            match run_scan(&paths, &format, &opts, catalog.as_deref(), weights.as_deref()) {
                Ok(code) => code,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    1
                }
            }
        }
        Command::Docs { out } => match run_docs(&out) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e:#}");
                1
            }
        },
    };
    std::process::exit(code);
}

/// Catalog search order: explicit flag, then WASMDROID_CATALOG_DIR, then the
/// embedded defaults.
fn load_catalogs(catalog: Option<&Path>, weights: Option<&Path>) -> Result<Catalogs> {
    let mut catalogs = Catalogs::load_default();
    let dir = std::env::var_os("WASMDROID_CATALOG_DIR").map(PathBuf::from);
    let resolve = |explicit: Option<&Path>, name: &str| -> Option<PathBuf> {
        if let Some(p) = explicit {
            return Some(p.to_path_buf());
        }
        dir.as_ref().map(|d| d.join(name)).filter(|p| p.is_file())
    };
    if let Some(path) = resolve(catalog, "catalog.tsv") {
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading catalog {}", path.display()))?;
        catalogs.indicator = IndicatorCatalog::load(&text)?;
        catalogs.digests.insert("catalog".into(), pipeline::sha256_hex(text.as_bytes()));
    }
    if let Some(path) = resolve(weights, "weights.tsv") {
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading weights {}", path.display()))?;
        catalogs.weights = ScoringTable::load(&text)?;
        catalogs.digests.insert("weights".into(), pipeline::sha256_hex(text.as_bytes()));
    }
    if let Some(path) = resolve(None, "capability.tsv") {
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading capability table {}", path.display()))?;
        catalogs.capability = CapabilityTable::load(&text)?;
        catalogs.digests.insert("capability".into(), pipeline::sha256_hex(text.as_bytes()));
    }
    if let Some(path) = resolve(None, "ioc_patterns.tsv") {
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading ioc patterns {}", path.display()))?;
        catalogs.ioc = IocPatterns::load(&text)?;
        catalogs.digests.insert("ioc_patterns".into(), pipeline::sha256_hex(text.as_bytes()));
    }
    Ok(catalogs)
}

/// A scan target after directory expansion.
enum Target {
    Apk(PathBuf),
    Wasm(PathBuf),
}

fn expand_inputs(paths: &[PathBuf]) -> Result<Vec<Target>> {
    let mut targets = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut found = Vec::new();
            for entry in walkdir::WalkDir::new(path).sort_by_file_name() {
                let entry = entry?;
                if !entry.file_type().is_file() {
                    continue;
                }
                let p = entry.path();
                match p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
                    Some(ext) if ext == "apk" => found.push(Target::Apk(p.to_path_buf())),
                    Some(ext) if ext == "wasm" => found.push(Target::Wasm(p.to_path_buf())),
                    _ => {}
                }
            }
            targets.extend(found);
        } else if path.extension().and_then(|e| e.to_str()).map(|e| e.eq_ignore_ascii_case("wasm"))
            == Some(true)
        {
            targets.push(Target::Wasm(path.clone()));
        } else {
            targets.push(Target::Apk(path.clone()));
        }
    }
    Ok(targets)
}

fn run_scan(
    paths: &[PathBuf],
    format: &str,
    opts: &ScanOptions,
    catalog: Option<&Path>,
    weights: Option<&Path>,
) -> Result<i32> {
    let catalogs = load_catalogs(catalog, weights)?;
    let targets = expand_inputs(paths)?;
    if targets.is_empty() {
        bail!("no .apk or .wasm inputs found");
    }
    let multiple = targets.len() > 1;
    let mut max_verdict: Option<Verdict> = None;
    let mut failures = 0usize;

    for target in &targets {
        let (path, result): (&Path, Result<ScanReport>) = match target {
            Target::Apk(p) => (
                p,
                std::fs::read(p)
                    .with_context(|| format!("reading {}", p.display()))
                    .and_then(|bytes| {
                        pipeline::scan_apk_bytes(bytes, &p.display().to_string(), opts, &catalogs)
                            .map_err(Into::into)
                    }),
            ),
            Target::Wasm(p) => (
                p,
                std::fs::read(p)
                    .with_context(|| format!("reading {}", p.display()))
                    .map(|bytes| {
                        pipeline::scan_wasm_bytes(bytes, &p.display().to_string(), opts, &catalogs)
                    }),
            ),
        };
        match result {
            Ok(report) => {
                max_verdict = Some(max_verdict.map_or(report.verdict, |v| v.max(report.verdict)));
                let rendered = match format {
                    "text" => render_text(&report).into_bytes(),
                    _ => render_json(&report),
                };
                if multiple {
                    let ext = if format == "text" { "report.txt" } else { "report.json" };
                    let out = path.with_extension(ext);
                    std::fs::write(&out, &rendered)
                        .with_context(|| format!("writing {}", out.display()))?;
                    println!("{}: {} -> {}", path.display(), report.verdict.name(), out.display());
                } else {
                    use std::io::Write;
                    std::io::stdout().write_all(&rendered)?;
                }
            }
            Err(e) => {
                eprintln!("{}: scan failed: {e:#}", path.display());
                failures += 1;
            }
        }
    }

    if failures == targets.len() {
        return Ok(1);
    }
    Ok(max_verdict.map_or(0, |v| v.exit_code()))
}

fn run_docs(out: &Path) -> Result<()> {
    let catalogs = Catalogs::load_default();
    let md = wasmdroid::docs::generate_catalog_reference(
        &catalogs.indicator,
        &catalogs.weights,
        &catalogs.capability,
        &catalogs.ioc,
    );
    std::fs::create_dir_all(out)?;
    let path = out.join("catalog_reference.md");
    std::fs::write(&path, md).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}
