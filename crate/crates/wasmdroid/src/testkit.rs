//! Programmatic emitters for minimal valid Wasm binaries, DEX files, and ZIP
//! archives. Fixtures built from these are inert by construction: bodies are
//! call chains ending in `end`, never runnable logic.

use thiserror::Error;

use crate::wasm_parser::ValType;

#[derive(Debug, Error)]
pub enum TestkitError {
    #[error("index {index} out of range ({what})")]
    IndexOutOfRange { what: &'static str, index: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SigSpec {
    pub params: Vec<ValType>,
    pub results: Vec<ValType>,
}

impl SigSpec {
    pub fn new(params: Vec<ValType>, results: Vec<ValType>) -> Self {
        SigSpec { params, results }
    }

    pub fn empty() -> Self {
        SigSpec { params: vec![], results: vec![] }
    }
}

#[derive(Debug, Clone)]
pub struct ImportSpec {
    pub module: String,
    pub name: String,
    pub sig: SigSpec,
}

impl ImportSpec {
    pub fn func(module: &str, name: &str, sig: SigSpec) -> Self {
        ImportSpec { module: module.into(), name: name.into(), sig }
    }
}

/// Body instructions for fixture functions. `Call`/`CallIndirect` and `End`
/// cover call-graph shapes; `RawByte` exists solely to exercise the
/// opaque-opcode path in the body walker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BodyOp {
    Call(u32),
    CallIndirect,
    End,
    RawByte(u8),
}

#[derive(Debug, Clone)]
pub struct FuncSpec {
    pub sig: SigSpec,
    pub body: Vec<BodyOp>,
}

impl FuncSpec {
    pub fn new(sig: SigSpec, body: Vec<BodyOp>) -> Self {
        FuncSpec { sig, body }
    }
}

#[derive(Debug, Clone)]
pub enum DataSpec {
    Active { offset: u32, bytes: Vec<u8> },
    Passive { bytes: Vec<u8> },
}

#[derive(Debug, Clone, Default)]
pub struct ModuleSpec {
    pub imports: Vec<ImportSpec>,
    pub funcs: Vec<FuncSpec>,
    /// (export name, function index in the combined index space).
    pub exports: Vec<(String, u32)>,
    pub data: Vec<DataSpec>,
    pub customs: Vec<(String, Vec<u8>)>,
    /// Function indices placed in the table via one active element segment.
    pub table_funcs: Vec<u32>,
}

impl ModuleSpec {
    pub fn func_count(&self) -> u32 {
        (self.imports.len() + self.funcs.len()) as u32
    }
}

fn leb_u32(out: &mut Vec<u8>, mut v: u32) {
    loop {
        let mut b = (v & 0x7f) as u8;
        v >>= 7;
        if v != 0 {
            b |= 0x80;
        }
        out.push(b);
        if v == 0 {
            break;
        }
    }
}

fn section(out: &mut Vec<u8>, id: u8, payload: &[u8]) {
    out.push(id);
    leb_u32(out, payload.len() as u32);
    out.extend_from_slice(payload);
}

fn name(out: &mut Vec<u8>, s: &str) {
    leb_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

fn sig_bytes(out: &mut Vec<u8>, sig: &SigSpec) {
    out.push(0x60);
    leb_u32(out, sig.params.len() as u32);
    for p in &sig.params {
        out.push(p.byte());
    }
    leb_u32(out, sig.results.len() as u32);
    for r in &sig.results {
        out.push(r.byte());
    }
}

/// Emits a well-formed Wasm v1 binary from a ModuleSpec. The output always begins
/// with the 8-byte header; an empty spec emits exactly those 8 bytes.
pub fn emit_module(spec: &ModuleSpec) -> Result<Vec<u8>, TestkitError> {
    let func_count = spec.func_count();
    for (_, idx) in &spec.exports {
        if *idx >= func_count {
            return Err(TestkitError::IndexOutOfRange { what: "export", index: *idx });
        }
    }
    for f in &spec.funcs {
        for op in &f.body {
            if let BodyOp::Call(t) = op {
                if *t >= func_count {
                    return Err(TestkitError::IndexOutOfRange { what: "call", index: *t });
                }
            }
        }
    }
    for t in &spec.table_funcs {
        if *t >= func_count {
            return Err(TestkitError::IndexOutOfRange { what: "element", index: *t });
        }
    }

    let mut out = Vec::new();
    out.extend_from_slice(&[0x00, 0x61, 0x73, 0x6d, 0x01, 0x00, 0x00, 0x00]);

    // Type section: dedup signatures across imports and local functions.
    let mut types: Vec<SigSpec> = Vec::new();
    let type_of = |sig: &SigSpec, types: &mut Vec<SigSpec>| -> u32 {
        if let Some(i) = types.iter().position(|t| t == sig) {
            i as u32
        } else {
            types.push(sig.clone());
            (types.len() - 1) as u32
        }
    };
    let import_types: Vec<u32> =
        spec.imports.iter().map(|i| type_of(&i.sig, &mut types)).collect();
    let func_types: Vec<u32> = spec.funcs.iter().map(|f| type_of(&f.sig, &mut types)).collect();

    let uses_indirect =
        spec.funcs.iter().any(|f| f.body.iter().any(|op| matches!(op, BodyOp::CallIndirect)));
    let need_table = uses_indirect || !spec.table_funcs.is_empty();
    // call_indirect encodes a type index; make sure index 0 exists.
    if uses_indirect && types.is_empty() {
        types.push(SigSpec::empty());
    }

    if !types.is_empty() {
        let mut p = Vec::new();
        leb_u32(&mut p, types.len() as u32);
        for t in &types {
            sig_bytes(&mut p, t);
        }
        section(&mut out, 1, &p);
    }

    if !spec.imports.is_empty() {
        let mut p = Vec::new();
        leb_u32(&mut p, spec.imports.len() as u32);
        for (imp, ty) in spec.imports.iter().zip(&import_types) {
            name(&mut p, &imp.module);
            name(&mut p, &imp.name);
            p.push(0x00); // func import
            leb_u32(&mut p, *ty);
        }
        section(&mut out, 2, &p);
    }

    if !spec.funcs.is_empty() {
        let mut p = Vec::new();
        leb_u32(&mut p, spec.funcs.len() as u32);
        for ty in &func_types {
            leb_u32(&mut p, *ty);
        }
        section(&mut out, 3, &p);
    }

    if need_table {
        let mut p = Vec::new();
        leb_u32(&mut p, 1);
        p.push(0x70); // funcref
        p.push(0x00); // min only
        leb_u32(&mut p, spec.table_funcs.len().max(1) as u32);
        section(&mut out, 4, &p);
    }

    if !spec.data.is_empty() {
        // one memory so active data segments have a target
        let mut p = Vec::new();
        leb_u32(&mut p, 1);
        p.push(0x00);
        leb_u32(&mut p, 1);
        section(&mut out, 5, &p);
    }

    if !spec.exports.is_empty() {
        let mut p = Vec::new();
        leb_u32(&mut p, spec.exports.len() as u32);
        for (n, idx) in &spec.exports {
            name(&mut p, n);
            p.push(0x00); // func export
            leb_u32(&mut p, *idx);
        }
        section(&mut out, 7, &p);
    }

    if !spec.table_funcs.is_empty() {
        let mut p = Vec::new();
        leb_u32(&mut p, 1);
        leb_u32(&mut p, 0); // active, table 0, i32.const offset
        p.push(0x41);
        p.push(0x00); // i32.const 0
        p.push(0x0b);
        leb_u32(&mut p, spec.table_funcs.len() as u32);
        for t in &spec.table_funcs {
            leb_u32(&mut p, *t);
        }
        section(&mut out, 9, &p);
    }

    if !spec.funcs.is_empty() {
        let mut p = Vec::new();
        leb_u32(&mut p, spec.funcs.len() as u32);
        for f in &spec.funcs {
            let mut body = Vec::new();
            leb_u32(&mut body, 0); // no locals
            let mut ended = false;
            for op in &f.body {
                match op {
                    BodyOp::Call(t) => {
                        body.push(0x10);
                        leb_u32(&mut body, *t);
                    }
                    BodyOp::CallIndirect => {
                        body.push(0x41);
                        body.push(0x00); // i32.const 0 (table slot)
                        body.push(0x11);
                        leb_u32(&mut body, 0); // type index
                        body.push(0x00); // table index
                    }
                    BodyOp::End => {
                        body.push(0x0b);
                        ended = true;
                    }
                    BodyOp::RawByte(b) => body.push(*b),
                }
            }
            if !ended {
                body.push(0x0b);
            }
            leb_u32(&mut p, body.len() as u32);
            p.extend_from_slice(&body);
        }
        section(&mut out, 10, &p);
    }

    if !spec.data.is_empty() {
        let mut p = Vec::new();
        leb_u32(&mut p, spec.data.len() as u32);
        for d in &spec.data {
            match d {
                DataSpec::Active { offset, bytes } => {
                    leb_u32(&mut p, 0);
                    p.push(0x41); // i32.const
                    leb_s33(&mut p, *offset as i64);
                    p.push(0x0b);
                    leb_u32(&mut p, bytes.len() as u32);
                    p.extend_from_slice(bytes);
                }
                DataSpec::Passive { bytes } => {
                    leb_u32(&mut p, 1);
                    leb_u32(&mut p, bytes.len() as u32);
                    p.extend_from_slice(bytes);
                }
            }
        }
        section(&mut out, 11, &p);
    }

    for (n, bytes) in &spec.customs {
        let mut p = Vec::new();
        name(&mut p, n);
        p.extend_from_slice(bytes);
        section(&mut out, 0, &p);
    }

    Ok(out)
}

fn leb_s33(out: &mut Vec<u8>, mut v: i64) {
    loop {
        let b = (v & 0x7f) as u8;
        v >>= 7;
        let done = (v == 0 && b & 0x40 == 0) || (v == -1 && b & 0x40 != 0);
        out.push(if done { b } else { b | 0x80 });
        if done {
            break;
        }
    }
}

// ---------------------------------------------------------------------------
// DEX emitter

fn uleb(out: &mut Vec<u8>, mut v: u32) {
    loop {
        let mut b = (v & 0x7f) as u8;
        v >>= 7;
        if v != 0 {
            b |= 0x80;
        }
        out.push(b);
        if v == 0 {
            break;
        }
    }
}

fn mutf8(out: &mut Vec<u8>, s: &str) {
    for c in s.chars() {
        let cp = c as u32;
        if cp == 0 {
            out.extend_from_slice(&[0xc0, 0x80]);
        } else if cp < 0x80 {
            out.push(cp as u8);
        } else if cp < 0x800 {
            out.push(0xc0 | (cp >> 6) as u8);
            out.push(0x80 | (cp & 0x3f) as u8);
        } else if cp < 0x10000 {
            out.push(0xe0 | (cp >> 12) as u8);
            out.push(0x80 | ((cp >> 6) & 0x3f) as u8);
            out.push(0x80 | (cp & 0x3f) as u8);
        } else {
            // CESU-8 surrogate pair
            let v = cp - 0x10000;
            let hi = 0xd800 + (v >> 10);
            let lo = 0xdc00 + (v & 0x3ff);
            for su in [hi, lo] {
                out.push(0xe0 | (su >> 12) as u8);
                out.push(0x80 | ((su >> 6) & 0x3f) as u8);
                out.push(0x80 | (su & 0x3f) as u8);
            }
        }
    }
}

pub fn emit_dex_with_strings(strings: &[&str]) -> Vec<u8> {
    emit_dex_with_strings_and_blob(strings, &[]).0
}

/// Minimal valid DEX: header + string_ids + string_data, with an optional raw
/// blob appended to the data region. Returns (bytes, blob offset).
pub fn emit_dex_with_strings_and_blob(strings: &[&str], blob: &[u8]) -> (Vec<u8>, usize) {
    const HEADER: usize = 112;
    let ids_off = HEADER;
    let data_off = ids_off + 4 * strings.len();

    let mut data = Vec::new();
    let mut offsets = Vec::with_capacity(strings.len());
    for s in strings {
        offsets.push(data_off + data.len());
        uleb(&mut data, s.chars().map(|c| c.len_utf16() as u32).sum());
        mutf8(&mut data, s);
        data.push(0);
    }
    let blob_off = data_off + data.len();
    data.extend_from_slice(blob);

    let file_size = data_off + data.len();
    let mut out = vec![0u8; HEADER];
    out[..8].copy_from_slice(b"dex\n035\0");
    // checksum (adler32 of bytes 12..) and signature left zero; the parser
    // does not verify them.
    out[32..36].copy_from_slice(&(file_size as u32).to_le_bytes());
    out[36..40].copy_from_slice(&(HEADER as u32).to_le_bytes());
    out[40..44].copy_from_slice(&0x1234_5678u32.to_le_bytes()); // endian tag
    out[56..60].copy_from_slice(&(strings.len() as u32).to_le_bytes());
    if !strings.is_empty() {
        out[60..64].copy_from_slice(&(ids_off as u32).to_le_bytes());
    }
    out[104..108].copy_from_slice(&(data.len() as u32).to_le_bytes());
    out[108..112].copy_from_slice(&(data_off as u32).to_le_bytes());
    for off in &offsets {
        out.extend_from_slice(&(*off as u32).to_le_bytes());
    }
    out.extend_from_slice(&data);
    (out, blob_off)
}

// ---------------------------------------------------------------------------
// ZIP emitter

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZipMethod {
    Stored,
    Deflate,
}

#[derive(Debug, Clone)]
pub struct ZipEntrySpec {
    pub name: String,
    pub bytes: Vec<u8>,
    pub method: ZipMethod,
}

impl ZipEntrySpec {
    pub fn stored(name: &str, bytes: Vec<u8>) -> Self {
        ZipEntrySpec { name: name.into(), bytes, method: ZipMethod::Stored }
    }

    pub fn deflated(name: &str, bytes: Vec<u8>) -> Self {
        ZipEntrySpec { name: name.into(), bytes, method: ZipMethod::Deflate }
    }
}

pub fn emit_zip(entries: &[ZipEntrySpec]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut centrals = Vec::new();
    for e in entries {
        let crc = crc32fast::hash(&e.bytes);
        let (method, payload) = match e.method {
            ZipMethod::Stored => (0u16, e.bytes.clone()),
            ZipMethod::Deflate => {
                let mut enc =
                    flate2::write::DeflateEncoder::new(Vec::new(), flate2::Compression::default());
                std::io::Write::write_all(&mut enc, &e.bytes).unwrap();
                (8u16, enc.finish().unwrap())
            }
        };
        let local_off = out.len() as u32;
        out.extend_from_slice(&0x0403_4b50u32.to_le_bytes());
        out.extend_from_slice(&20u16.to_le_bytes()); // version needed
        out.extend_from_slice(&0u16.to_le_bytes()); // flags
        out.extend_from_slice(&method.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes()); // mod time/date
        out.extend_from_slice(&crc.to_le_bytes());
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&(e.bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes()); // extra len
        out.extend_from_slice(e.name.as_bytes());
        out.extend_from_slice(&payload);

        let mut c = Vec::new();
        c.extend_from_slice(&0x0201_4b50u32.to_le_bytes());
        c.extend_from_slice(&20u16.to_le_bytes()); // version made by
        c.extend_from_slice(&20u16.to_le_bytes()); // version needed
        c.extend_from_slice(&0u16.to_le_bytes()); // flags
        c.extend_from_slice(&method.to_le_bytes());
        c.extend_from_slice(&0u32.to_le_bytes()); // mod time/date
        c.extend_from_slice(&crc.to_le_bytes());
        c.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        c.extend_from_slice(&(e.bytes.len() as u32).to_le_bytes());
        c.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
        c.extend_from_slice(&0u16.to_le_bytes()); // extra
        c.extend_from_slice(&0u16.to_le_bytes()); // comment
        c.extend_from_slice(&0u16.to_le_bytes()); // disk start
        c.extend_from_slice(&0u16.to_le_bytes()); // internal attrs
        c.extend_from_slice(&0u32.to_le_bytes()); // external attrs
        c.extend_from_slice(&local_off.to_le_bytes());
        c.extend_from_slice(e.name.as_bytes());
        centrals.push(c);
    }
    let cd_off = out.len() as u32;
    for c in &centrals {
        out.extend_from_slice(c);
    }
    let cd_size = out.len() as u32 - cd_off;
    out.extend_from_slice(&0x0605_4b50u32.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes()); // disk number
    out.extend_from_slice(&0u16.to_le_bytes()); // cd start disk
    out.extend_from_slice(&(entries.len() as u16).to_le_bytes());
    out.extend_from_slice(&(entries.len() as u16).to_le_bytes());
    out.extend_from_slice(&cd_size.to_le_bytes());
    out.extend_from_slice(&cd_off.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes()); // comment len
    out
}

// ---------------------------------------------------------------------------
// Canned fixture specs mirroring the two case-study shapes. Both are inert:
// the bodies only call their import and return.

/// Module importing env.http_post(i32,i32), exporting `run` that calls it,
/// with the given URL planted in an active data segment.
pub fn spyware_analog_spec(url: &str) -> ModuleSpec {
    ModuleSpec {
        imports: vec![ImportSpec::func(
            "env",
            "http_post",
            SigSpec::new(vec![ValType::I32, ValType::I32], vec![]),
        )],
        funcs: vec![FuncSpec::new(SigSpec::empty(), vec![BodyOp::Call(0), BodyOp::End])],
        exports: vec![("run".into(), 1)],
        data: vec![DataSpec::Active { offset: 1024, bytes: url.as_bytes().to_vec() }],
        ..Default::default()
    }
}

/// Module importing WASI filesystem functions, exporting `run` that reaches
/// all three.
pub fn ransomware_analog_spec() -> ModuleSpec {
    let wasi = "wasi_snapshot_preview1";
    ModuleSpec {
        imports: vec![
            ImportSpec::func(wasi, "path_open", SigSpec::new(vec![ValType::I32], vec![ValType::I32])),
            ImportSpec::func(wasi, "fd_read", SigSpec::new(vec![ValType::I32], vec![ValType::I32])),
            ImportSpec::func(wasi, "fd_write", SigSpec::new(vec![ValType::I32], vec![ValType::I32])),
        ],
        funcs: vec![FuncSpec::new(
            SigSpec::empty(),
            vec![BodyOp::Call(0), BodyOp::Call(1), BodyOp::Call(2), BodyOp::End],
        )],
        exports: vec![("run".into(), 3)],
        ..Default::default()
    }
}
