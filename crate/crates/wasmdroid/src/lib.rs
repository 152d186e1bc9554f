//! Static scanner for WebAssembly payload hiding in Android APKs.
//!
//! The pipeline recovers Wasm modules from three embedding channels
//! (standalone `.wasm` assets, byte arrays inside DEX or other entries, and
//! payloads next to bundled runtime libraries), parses them, maps each
//! export's reachable host imports, extracts hidden indicators of compromise
//! from data segments, and emits a scored, machine-readable report.

pub mod capability;
pub mod carver;
pub mod container;
pub mod dex_lite;
pub mod docs;
pub mod indicators;
pub mod ioc;
pub mod pipeline;
pub mod report;
pub mod testkit;
pub mod wasm_parser;
