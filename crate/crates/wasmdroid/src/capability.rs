//! Intra-module call graph and per-export reachability of host imports,
//! classified into capability categories via a data-driven table.

use std::collections::{BTreeSet, VecDeque};

use thiserror::Error;

use crate::wasm_parser::{ExternKind, WasmModule};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CapabilityError {
    #[error("export {0:?} is not a function export")]
    NotAFunctionExport(String),
    #[error("capability table line {line}: {detail}")]
    BadTable { line: usize, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Capability {
    WasiFilesystem,
    WasiEnviron,
    WasiClockRandom,
    HostCustom,
    None,
}

impl Capability {
    pub fn name(self) -> &'static str {
        match self {
            Capability::WasiFilesystem => "WasiFilesystem",
            Capability::WasiEnviron => "WasiEnviron",
            Capability::WasiClockRandom => "WasiClockRandom",
            Capability::HostCustom => "HostCustom",
            Capability::None => "None",
        }
    }

    fn from_name(s: &str) -> Option<Capability> {
        match s {
            "WasiFilesystem" => Some(Capability::WasiFilesystem),
            "WasiEnviron" => Some(Capability::WasiEnviron),
            "WasiClockRandom" => Some(Capability::WasiClockRandom),
            "HostCustom" => Some(Capability::HostCustom),
            "None" => Some(Capability::None),
            _ => None,
        }
    }
}

/// `namespace<TAB>name_glob<TAB>category` rows, first match wins. Globs
/// support `*` as any-run; everything else matches literally.
#[derive(Debug, Clone)]
pub struct CapabilityTable {
    rows: Vec<(String, String, Capability)>,
}

pub const DEFAULT_CAPABILITY_TABLE: &str = include_str!("../data/capability.tsv");

impl CapabilityTable {
    pub fn load(text: &str) -> Result<CapabilityTable, CapabilityError> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 3 {
                return Err(CapabilityError::BadTable {
                    line: i + 1,
                    detail: "expected 3 tab-separated fields".into(),
                });
            }
            let cap = Capability::from_name(parts[2]).ok_or_else(|| CapabilityError::BadTable {
                line: i + 1,
                detail: format!("unknown category {:?}", parts[2]),
            })?;
            rows.push((parts[0].to_string(), parts[1].to_string(), cap));
        }
        Ok(CapabilityTable { rows })
    }

    pub fn default_table() -> CapabilityTable {
        CapabilityTable::load(DEFAULT_CAPABILITY_TABLE).expect("shipped capability table is valid")
    }

    pub fn rows(&self) -> &[(String, String, Capability)] {
        &self.rows
    }

    /// Table lookup: WASI namespace functions by name prefix, anything else
    /// HostCustom. The namespace match wins over the name.
    pub fn classify_import(&self, module: &str, name: &str) -> Capability {
        for (ns, pat, cap) in &self.rows {
            if glob_match(ns, module) && glob_match(pat, name) {
                return *cap;
            }
        }
        Capability::HostCustom
    }
}

fn glob_match(pattern: &str, text: &str) -> bool {
    // '*' matches any run of characters; no other metacharacters
    let parts: Vec<&str> = pattern.split('*').collect();
    if parts.len() == 1 {
        return pattern == text;
    }
    let mut rest = text;
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            continue;
        }
        if i == 0 {
            if !rest.starts_with(part) {
                return false;
            }
            rest = &rest[part.len()..];
        } else if i == parts.len() - 1 {
            return rest.ends_with(part);
        } else {
            match rest.find(part) {
                Some(p) => rest = &rest[p + part.len()..],
                None => return false,
            }
        }
    }
    true
}

#[derive(Debug, Clone)]
pub struct CallGraph {
    pub node_count: usize,
    /// Direct-call adjacency, indexed by function index.
    pub edges: Vec<Vec<u32>>,
    pub indirect_nodes: BTreeSet<u32>,
    pub opaque_nodes: BTreeSet<u32>,
    /// Function indices appearing in element segments.
    pub table_funcs: BTreeSet<u32>,
}

/// One node per function index (imports first, then locals); an edge (f, g)
/// for every `call g` decoded in f's body.
pub fn build_call_graph(m: &WasmModule) -> CallGraph {
    let n_imports = m.imported_func_count();
    let node_count = m.func_space_len();
    let mut edges = vec![Vec::new(); node_count];
    let mut indirect_nodes = BTreeSet::new();
    let mut opaque_nodes = BTreeSet::new();
    for (body_index, body) in m.code.iter().enumerate() {
        let node = (n_imports + body_index) as u32;
        if node as usize >= node_count {
            break; // code entries beyond the declared function count
        }
        for &callee in &body.calls {
            if (callee as usize) < node_count {
                edges[node as usize].push(callee);
            }
        }
        if body.has_call_indirect {
            indirect_nodes.insert(node);
        }
        if body.opaque {
            opaque_nodes.insert(node);
        }
    }
    let mut table_funcs = BTreeSet::new();
    for seg in &m.elements {
        for &f in &seg.func_indices {
            if (f as usize) < node_count {
                table_funcs.insert(f);
            }
        }
    }
    CallGraph { node_count, edges, indirect_nodes, opaque_nodes, table_funcs }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Soundness {
    Exact,
    OverApprox,
}

#[derive(Debug, Clone)]
pub struct CapabilityProfile {
    pub export_name: String,
    pub reachable_imports: BTreeSet<(String, String)>,
    pub categories: BTreeSet<Capability>,
    pub soundness: Soundness,
}

/// BFS from the export over direct call edges. Indirect calls add all
/// element-segment functions to the frontier; opaque bodies are treated as
/// calling every import. Both degrade soundness to OverApprox.
pub fn reachable_imports(
    graph: &CallGraph,
    m: &WasmModule,
    table: &CapabilityTable,
    export_name: &str,
) -> Result<CapabilityProfile, CapabilityError> {
    let export = m
        .exports
        .iter()
        .find(|e| e.name == export_name && e.kind == ExternKind::Func)
        .ok_or_else(|| CapabilityError::NotAFunctionExport(export_name.to_string()))?;

    let n_imports = m.imported_func_count() as u32;
    let mut visited = vec![false; graph.node_count];
    let mut queue = VecDeque::new();
    let mut soundness = Soundness::Exact;

    let start = export.index;
    if (start as usize) < graph.node_count {
        visited[start as usize] = true;
        queue.push_back(start);
    }

    while let Some(node) = queue.pop_front() {
        if node < n_imports {
            continue; // imports have no bodies
        }
        if graph.opaque_nodes.contains(&node) {
            soundness = Soundness::OverApprox;
            for imp in 0..n_imports {
                if !visited[imp as usize] {
                    visited[imp as usize] = true;
                    queue.push_back(imp);
                }
            }
        }
        if graph.indirect_nodes.contains(&node) {
            soundness = Soundness::OverApprox;
            for &f in &graph.table_funcs {
                if !visited[f as usize] {
                    visited[f as usize] = true;
                    queue.push_back(f);
                }
            }
        }
        for &callee in &graph.edges[node as usize] {
            if !visited[callee as usize] {
                visited[callee as usize] = true;
                queue.push_back(callee);
            }
        }
    }

    let func_imports: Vec<&crate::wasm_parser::ImportEntry> =
        m.imports.iter().filter(|i| i.kind == ExternKind::Func).collect();
    let mut reachable = BTreeSet::new();
    for (idx, imp) in func_imports.iter().enumerate() {
        // the export node itself counts only if it was reached as a callee;
        // an exported import is trivially reachable
        if visited[idx] {
            reachable.insert((imp.module.clone(), imp.name.clone()));
        }
    }

    let mut categories: BTreeSet<Capability> = reachable
        .iter()
        .map(|(module, name)| table.classify_import(module, name))
        .collect();
    if categories.is_empty() {
        categories.insert(Capability::None);
    }

    Ok(CapabilityProfile {
        export_name: export_name.to_string(),
        reachable_imports: reachable,
        categories,
        soundness,
    })
}

/// Profiles for every function export of the module, in export order.
pub fn profile_all_exports(m: &WasmModule, table: &CapabilityTable) -> Vec<CapabilityProfile> {
    let graph = build_call_graph(m);
    m.exports
        .iter()
        .filter(|e| e.kind == ExternKind::Func)
        .filter_map(|e| reachable_imports(&graph, m, table, &e.name).ok())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::{
        emit_module, ransomware_analog_spec, spyware_analog_spec, BodyOp, FuncSpec, ImportSpec,
        ModuleSpec, SigSpec,
    };
    use crate::wasm_parser::parse_module;

    fn parse(spec: &ModuleSpec) -> WasmModule {
        parse_module(&emit_module(spec).unwrap()).unwrap()
    }

    #[test]
    fn lone_function_graph() {
        let m = parse(&ModuleSpec {
            funcs: vec![FuncSpec::new(SigSpec::empty(), vec![BodyOp::End])],
            ..Default::default()
        });
        let g = build_call_graph(&m);
        assert_eq!(g.node_count, 1);
        assert!(g.edges[0].is_empty());
    }

    #[test]
    fn call_chain_edges() {
        // import(0) <- f2(2) <- f1(1) exported as run
        let m = parse(&ModuleSpec {
            imports: vec![ImportSpec::func("env", "sink", SigSpec::empty())],
            funcs: vec![
                FuncSpec::new(SigSpec::empty(), vec![BodyOp::Call(2), BodyOp::End]),
                FuncSpec::new(SigSpec::empty(), vec![BodyOp::Call(0), BodyOp::End]),
            ],
            exports: vec![("run".into(), 1)],
            ..Default::default()
        });
        let g = build_call_graph(&m);
        assert_eq!(g.edges[1], vec![2]);
        assert_eq!(g.edges[2], vec![0]);
        let table = CapabilityTable::default_table();
        let prof = reachable_imports(&g, &m, &table, "run").unwrap();
        assert_eq!(
            prof.reachable_imports.iter().cloned().collect::<Vec<_>>(),
            vec![("env".to_string(), "sink".to_string())]
        );
        assert_eq!(prof.soundness, Soundness::Exact);
    }

    #[test]
    fn spyware_analog_profile() {
        let m = parse(&spyware_analog_spec("http://push.mobilefonex.com/upload.php"));
        let table = CapabilityTable::default_table();
        let profs = profile_all_exports(&m, &table);
        assert_eq!(profs.len(), 1);
        assert_eq!(profs[0].export_name, "run");
        assert!(profs[0].reachable_imports.contains(&("env".into(), "http_post".into())));
        assert_eq!(
            profs[0].categories.iter().cloned().collect::<Vec<_>>(),
            vec![Capability::HostCustom]
        );
        assert_eq!(profs[0].soundness, Soundness::Exact);
    }

    #[test]
    fn ransomware_analog_profile() {
        let m = parse(&ransomware_analog_spec());
        let table = CapabilityTable::default_table();
        let profs = profile_all_exports(&m, &table);
        assert!(profs[0].categories.contains(&Capability::WasiFilesystem));
    }

    #[test]
    fn export_calling_nothing_has_none_category() {
        let m = parse(&ModuleSpec {
            funcs: vec![FuncSpec::new(SigSpec::empty(), vec![BodyOp::End])],
            exports: vec![("idle".into(), 0)],
            ..Default::default()
        });
        let table = CapabilityTable::default_table();
        let profs = profile_all_exports(&m, &table);
        assert!(profs[0].reachable_imports.is_empty());
        assert_eq!(
            profs[0].categories.iter().cloned().collect::<Vec<_>>(),
            vec![Capability::None]
        );
    }

    #[test]
    fn indirect_call_over_approximates_via_table() {
        // f0 does call_indirect; secret (index 2) sits in the table and calls the import
        let m = parse(&ModuleSpec {
            imports: vec![ImportSpec::func("env", "leak", SigSpec::empty())],
            funcs: vec![
                FuncSpec::new(SigSpec::empty(), vec![BodyOp::CallIndirect, BodyOp::End]),
                FuncSpec::new(SigSpec::empty(), vec![BodyOp::Call(0), BodyOp::End]),
            ],
            exports: vec![("run".into(), 1)],
            table_funcs: vec![2],
            ..Default::default()
        });
        let g = build_call_graph(&m);
        assert!(g.indirect_nodes.contains(&1));
        assert!(g.table_funcs.contains(&2));
        let table = CapabilityTable::default_table();
        let prof = reachable_imports(&g, &m, &table, "run").unwrap();
        assert_eq!(prof.soundness, Soundness::OverApprox);
        assert!(prof.reachable_imports.contains(&("env".into(), "leak".into())));
    }

    #[test]
    fn opaque_body_reaches_every_import() {
        let m = parse(&ModuleSpec {
            imports: vec![
                ImportSpec::func("env", "a", SigSpec::empty()),
                ImportSpec::func("env", "b", SigSpec::empty()),
            ],
            funcs: vec![FuncSpec::new(SigSpec::empty(), vec![BodyOp::RawByte(0xfd), BodyOp::End])],
            exports: vec![("run".into(), 2)],
            ..Default::default()
        });
        let table = CapabilityTable::default_table();
        let prof = profile_all_exports(&m, &table).remove(0);
        assert_eq!(prof.soundness, Soundness::OverApprox);
        assert_eq!(prof.reachable_imports.len(), 2);
    }

    #[test]
    fn non_function_export_is_rejected() {
        let m = parse(&ModuleSpec {
            funcs: vec![FuncSpec::new(SigSpec::empty(), vec![BodyOp::End])],
            exports: vec![("f".into(), 0)],
            ..Default::default()
        });
        let g = build_call_graph(&m);
        let table = CapabilityTable::default_table();
        assert!(matches!(
            reachable_imports(&g, &m, &table, "missing"),
            Err(CapabilityError::NotAFunctionExport(_))
        ));
    }

    #[test]
    fn classify_table_rules() {
        let t = CapabilityTable::default_table();
        assert_eq!(t.classify_import("wasi_snapshot_preview1", "path_open"), Capability::WasiFilesystem);
        assert_eq!(t.classify_import("wasi_snapshot_preview1", "fd_write"), Capability::WasiFilesystem);
        assert_eq!(t.classify_import("wasi_snapshot_preview1", "environ_get"), Capability::WasiEnviron);
        assert_eq!(t.classify_import("wasi_snapshot_preview1", "args_sizes_get"), Capability::WasiEnviron);
        assert_eq!(t.classify_import("wasi_snapshot_preview1", "clock_time_get"), Capability::WasiClockRandom);
        assert_eq!(t.classify_import("wasi_snapshot_preview1", "random_get"), Capability::WasiClockRandom);
        assert_eq!(t.classify_import("wasi_snapshot_preview1", "proc_exit"), Capability::None);
        assert_eq!(t.classify_import("env", "http_post"), Capability::HostCustom);
        // namespace wins over name
        assert_eq!(t.classify_import("env", "fd_write"), Capability::HostCustom);
    }
}
