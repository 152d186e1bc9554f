//! WebAssembly binary format parser: header, all known sections, import and
//! export entries, function bodies, data segments, and custom sections.
//!
//! Parsing is resilient by design: a malformed section is recorded per-section
//! and skipped when its size is known, so earlier evidence stays queryable.

use std::fmt::Write as _;

use thiserror::Error;

pub const WASM_MAGIC: [u8; 4] = [0x00, 0x61, 0x73, 0x6d];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WasmError {
    #[error("invalid magic bytes")]
    InvalidMagic,
    #[error("invalid version {0}")]
    InvalidVersion(u32),
    #[error("section {id} size exceeds remaining bytes")]
    TruncatedSection { id: u8 },
    #[error("LEB128 value too long or out of range")]
    LebOverflow,
    #[error("unexpected end of input")]
    UnexpectedEof,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum ValType {
    I32,
    I64,
    F32,
    F64,
    V128,
    FuncRef,
    ExternRef,
    Unknown(u8),
}

impl ValType {
    pub fn from_byte(b: u8) -> ValType {
        match b {
            0x7f => ValType::I32,
            0x7e => ValType::I64,
            0x7d => ValType::F32,
            0x7c => ValType::F64,
            0x7b => ValType::V128,
            0x70 => ValType::FuncRef,
            0x6f => ValType::ExternRef,
            other => ValType::Unknown(other),
        }
    }

    pub fn byte(self) -> u8 {
        match self {
            ValType::I32 => 0x7f,
            ValType::I64 => 0x7e,
            ValType::F32 => 0x7d,
            ValType::F64 => 0x7c,
            ValType::V128 => 0x7b,
            ValType::FuncRef => 0x70,
            ValType::ExternRef => 0x6f,
            ValType::Unknown(b) => b,
        }
    }

    pub fn name(self) -> String {
        match self {
            ValType::I32 => "i32".into(),
            ValType::I64 => "i64".into(),
            ValType::F32 => "f32".into(),
            ValType::F64 => "f64".into(),
            ValType::V128 => "v128".into(),
            ValType::FuncRef => "funcref".into(),
            ValType::ExternRef => "externref".into(),
            ValType::Unknown(b) => format!("unknown(0x{b:02x})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FuncSig {
    pub params: Vec<ValType>,
    pub results: Vec<ValType>,
}

impl FuncSig {
    pub fn render(&self) -> String {
        let p: Vec<String> = self.params.iter().map(|v| v.name()).collect();
        let r: Vec<String> = self.results.iter().map(|v| v.name()).collect();
        format!("({}) -> ({})", p.join(", "), r.join(", "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExternKind {
    Func,
    Table,
    Memory,
    Global,
}

impl ExternKind {
    pub fn name(self) -> &'static str {
        match self {
            ExternKind::Func => "func",
            ExternKind::Table => "table",
            ExternKind::Memory => "memory",
            ExternKind::Global => "global",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportEntry {
    pub module: String,
    pub name: String,
    pub kind: ExternKind,
    /// Signature when kind == Func.
    pub sig: Option<FuncSig>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportEntry {
    pub name: String,
    pub kind: ExternKind,
    pub index: u32,
}

/// Offset expression of an active data segment. Only `i32.const` and
/// `global.get` forms are evaluated; anything else is `Unresolved`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataOffset {
    Const(i64),
    Global(u32),
    Passive,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataSegment {
    pub memory_index: u32,
    pub offset: DataOffset,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FuncBody {
    pub locals: Vec<(u32, ValType)>,
    /// Instruction bytes (locals stripped).
    pub instructions_raw: Vec<u8>,
    /// Immediates of every `call` decoded before any unknown opcode, in order.
    pub calls: Vec<u32>,
    pub has_call_indirect: bool,
    /// True when an unrecognized opcode stopped decoding.
    pub opaque: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementSegment {
    pub table_index: u32,
    pub offset: DataOffset,
    pub func_indices: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectionIssue {
    pub section_id: u8,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub min: u32,
    pub max: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WasmModule {
    pub version: u32,
    pub types: Vec<FuncSig>,
    pub imports: Vec<ImportEntry>,
    /// Type index per locally defined function.
    pub functions: Vec<u32>,
    pub tables: Vec<Limits>,
    pub memories: Vec<Limits>,
    pub global_count: u32,
    pub exports: Vec<ExportEntry>,
    pub start: Option<u32>,
    pub elements: Vec<ElementSegment>,
    pub code: Vec<FuncBody>,
    pub data: Vec<DataSegment>,
    pub customs: Vec<(String, Vec<u8>)>,
    /// Sections that failed to decode (recorded, not fatal).
    pub malformed: Vec<SectionIssue>,
    /// Bytes consumed by the well-formed prefix (header + section sizes).
    pub byte_len: usize,
}

/// One slot in the function index space: imports first, then local bodies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FuncSlot {
    Imported { module: String, name: String },
    Local { body_index: usize },
}

impl WasmModule {
    pub fn imported_func_count(&self) -> usize {
        self.imports.iter().filter(|i| i.kind == ExternKind::Func).count()
    }

    pub fn func_space_len(&self) -> usize {
        self.imported_func_count() + self.functions.len()
    }
}

/// Maps every function index to either its import origin or its body index.
pub fn function_index_map(m: &WasmModule) -> Vec<FuncSlot> {
    let mut map = Vec::with_capacity(m.func_space_len());
    for imp in m.imports.iter().filter(|i| i.kind == ExternKind::Func) {
        map.push(FuncSlot::Imported { module: imp.module.clone(), name: imp.name.clone() });
    }
    for body_index in 0..m.functions.len() {
        map.push(FuncSlot::Local { body_index });
    }
    map
}

// ---------------------------------------------------------------------------
// LEB128

/// Unsigned LEB128, at most 5 bytes. Returns (value, cursor after the value).
pub fn decode_leb_u32(bytes: &[u8], cursor: usize) -> Result<(u32, usize), WasmError> {
    let mut result: u64 = 0;
    let mut shift = 0;
    let mut pos = cursor;
    loop {
        if pos >= bytes.len() {
            return Err(WasmError::UnexpectedEof);
        }
        if pos - cursor >= 5 {
            return Err(WasmError::LebOverflow);
        }
        let b = bytes[pos];
        result |= ((b & 0x7f) as u64) << shift;
        pos += 1;
        if b & 0x80 == 0 {
            if result > u32::MAX as u64 {
                return Err(WasmError::LebOverflow);
            }
            return Ok((result as u32, pos));
        }
        shift += 7;
    }
}

fn decode_leb_s64(bytes: &[u8], cursor: usize, max_bytes: usize) -> Result<(i64, usize), WasmError> {
    let mut result: i64 = 0;
    let mut shift = 0;
    let mut pos = cursor;
    loop {
        if pos >= bytes.len() {
            return Err(WasmError::UnexpectedEof);
        }
        if pos - cursor >= max_bytes {
            return Err(WasmError::LebOverflow);
        }
        let b = bytes[pos];
        result |= ((b & 0x7f) as i64) << shift;
        pos += 1;
        shift += 7;
        if b & 0x80 == 0 {
            if shift < 64 && b & 0x40 != 0 {
                result |= -1i64 << shift;
            }
            return Ok((result, pos));
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn byte(&mut self) -> Result<u8, WasmError> {
        if self.pos >= self.bytes.len() {
            return Err(WasmError::UnexpectedEof);
        }
        let b = self.bytes[self.pos];
        self.pos += 1;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32, WasmError> {
        let (v, p) = decode_leb_u32(self.bytes, self.pos)?;
        self.pos = p;
        Ok(v)
    }

    fn s33(&mut self) -> Result<i64, WasmError> {
        let (v, p) = decode_leb_s64(self.bytes, self.pos, 5)?;
        self.pos = p;
        Ok(v)
    }

    fn s64(&mut self) -> Result<i64, WasmError> {
        let (v, p) = decode_leb_s64(self.bytes, self.pos, 10)?;
        self.pos = p;
        Ok(v)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], WasmError> {
        if self.remaining() < n {
            return Err(WasmError::UnexpectedEof);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn name(&mut self) -> Result<String, WasmError> {
        let len = self.u32()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| WasmError::UnexpectedEof)
    }

    fn valtype(&mut self) -> Result<ValType, WasmError> {
        Ok(ValType::from_byte(self.byte()?))
    }

    fn limits(&mut self) -> Result<Limits, WasmError> {
        let flag = self.byte()?;
        let min = self.u32()?;
        let max = if flag & 1 != 0 { Some(self.u32()?) } else { None };
        Ok(Limits { min, max })
    }

    /// Const expression used as an offset: decode the common single-value
    /// forms and otherwise skip to the terminating `end`.
    fn const_expr(&mut self) -> Result<DataOffset, WasmError> {
        let op = self.byte()?;
        let out = match op {
            0x41 => {
                let v = self.s33()?;
                DataOffset::Const(v)
            }
            0x42 => {
                let v = self.s64()?;
                DataOffset::Const(v)
            }
            0x23 => {
                let g = self.u32()?;
                DataOffset::Global(g)
            }
            0x0b => return Ok(DataOffset::Unresolved),
            _ => DataOffset::Unresolved,
        };
        // skip to end opcode
        loop {
            let b = self.byte()?;
            if b == 0x0b {
                break;
            }
        }
        Ok(out)
    }
}

/// Strict parse for standalone `.wasm` inputs: a valid section id whose size
/// overruns the input is a `TruncatedSection` error.
pub fn parse_module(bytes: &[u8]) -> Result<WasmModule, WasmError> {
    parse_module_with(bytes, false)
}

/// Lenient prefix parse for carving: parsing stops at the first byte that
/// cannot start a well-formed section, and `byte_len` records the consumed
/// prefix. Never fails after a valid 8-byte header.
pub fn parse_module_prefix(bytes: &[u8]) -> Result<WasmModule, WasmError> {
    parse_module_with(bytes, true)
}

fn parse_module_with(bytes: &[u8], lenient: bool) -> Result<WasmModule, WasmError> {
    if bytes.len() < 4 || bytes[..4] != WASM_MAGIC {
        return Err(WasmError::InvalidMagic);
    }
    if bytes.len() < 8 {
        return Err(WasmError::UnexpectedEof);
    }
    let version = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]);
    if version != 1 {
        return Err(WasmError::InvalidVersion(version));
    }

    let mut m = WasmModule { version, byte_len: 8, ..Default::default() };
    let mut pos = 8;
    let mut last_noncustom_id = 0u8;

    while pos < bytes.len() {
        let id = bytes[pos];
        if id > 12 && lenient {
            break;
        }
        let (size, body_start) = match decode_leb_u32(bytes, pos + 1) {
            Ok(v) => v,
            Err(_) if lenient => break,
            Err(e) => return Err(e),
        };
        let size = size as usize;
        if body_start + size > bytes.len() {
            if lenient {
                break;
            }
            return Err(WasmError::TruncatedSection { id });
        }
        // Non-custom sections must appear in increasing id order; a violation
        // means this is not really a section (carved trailing bytes) or a
        // deliberately mangled module.
        if id != 0 && id <= 12 {
            if id <= last_noncustom_id {
                if lenient {
                    break;
                }
                m.malformed.push(SectionIssue {
                    section_id: id,
                    detail: "section out of order".into(),
                });
                pos = body_start + size;
                m.byte_len = pos;
                continue;
            }
            last_noncustom_id = id;
        }
        let payload = &bytes[body_start..body_start + size];
        if id > 12 {
            // unknown section id: preserved as an opaque custom-like record
            m.customs.push((format!("<unknown section {id}>"), payload.to_vec()));
            m.malformed.push(SectionIssue { section_id: id, detail: "unknown section id".into() });
            pos = body_start + size;
            m.byte_len = pos;
            continue;
        }
        if let Err(e) = parse_section(&mut m, id, payload) {
            if lenient && id == 0 {
                // junk masquerading as a custom section: stop the prefix here
                break;
            }
            m.malformed.push(SectionIssue { section_id: id, detail: e.to_string() });
        }
        pos = body_start + size;
        m.byte_len = pos;
    }
    Ok(m)
}

fn parse_section(m: &mut WasmModule, id: u8, payload: &[u8]) -> Result<(), WasmError> {
    let mut c = Cursor::new(payload);
    match id {
        0 => {
            let name = c.name()?;
            m.customs.push((name, payload[c.pos..].to_vec()));
        }
        1 => {
            let count = c.u32()?;
            for _ in 0..count {
                let form = c.byte()?;
                if form != 0x60 {
                    return Err(WasmError::UnexpectedEof);
                }
                let np = c.u32()? as usize;
                let mut params = Vec::with_capacity(np.min(64));
                for _ in 0..np {
                    params.push(c.valtype()?);
                }
                let nr = c.u32()? as usize;
                let mut results = Vec::with_capacity(nr.min(64));
                for _ in 0..nr {
                    results.push(c.valtype()?);
                }
                m.types.push(FuncSig { params, results });
            }
        }
        2 => {
            let count = c.u32()?;
            for _ in 0..count {
                let module = c.name()?;
                let name = c.name()?;
                let kind_byte = c.byte()?;
                let (kind, sig) = match kind_byte {
                    0x00 => {
                        let ty = c.u32()?;
                        let sig = m.types.get(ty as usize).cloned().unwrap_or_default();
                        (ExternKind::Func, Some(sig))
                    }
                    0x01 => {
                        c.valtype()?;
                        c.limits()?;
                        (ExternKind::Table, None)
                    }
                    0x02 => {
                        c.limits()?;
                        (ExternKind::Memory, None)
                    }
                    0x03 => {
                        c.valtype()?;
                        c.byte()?;
                        (ExternKind::Global, None)
                    }
                    _ => return Err(WasmError::UnexpectedEof),
                };
                m.imports.push(ImportEntry { module, name, kind, sig });
            }
        }
        3 => {
            let count = c.u32()?;
            for _ in 0..count {
                m.functions.push(c.u32()?);
            }
        }
        4 => {
            let count = c.u32()?;
            for _ in 0..count {
                c.valtype()?;
                m.tables.push(c.limits()?);
            }
        }
        5 => {
            let count = c.u32()?;
            for _ in 0..count {
                m.memories.push(c.limits()?);
            }
        }
        6 => {
            let count = c.u32()?;
            for _ in 0..count {
                c.valtype()?;
                c.byte()?; // mutability
                c.const_expr()?;
                m.global_count += 1;
            }
        }
        7 => {
            let count = c.u32()?;
            let mut seen = std::collections::BTreeSet::new();
            let mut dup = false;
            for _ in 0..count {
                let name = c.name()?;
                let kind = match c.byte()? {
                    0x00 => ExternKind::Func,
                    0x01 => ExternKind::Table,
                    0x02 => ExternKind::Memory,
                    0x03 => ExternKind::Global,
                    _ => return Err(WasmError::UnexpectedEof),
                };
                let index = c.u32()?;
                if seen.insert(name.clone()) {
                    m.exports.push(ExportEntry { name, kind, index });
                } else {
                    dup = true; // first wins
                }
            }
            if dup {
                m.malformed.push(SectionIssue {
                    section_id: 7,
                    detail: "duplicate export name (first occurrence kept)".into(),
                });
            }
        }
        8 => {
            m.start = Some(c.u32()?);
        }
        9 => {
            let count = c.u32()?;
            for _ in 0..count {
                let flags = c.u32()?;
                match flags {
                    0 => {
                        let offset = c.const_expr()?;
                        let n = c.u32()? as usize;
                        let mut funcs = Vec::with_capacity(n.min(1024));
                        for _ in 0..n {
                            funcs.push(c.u32()?);
                        }
                        m.elements.push(ElementSegment { table_index: 0, offset, func_indices: funcs });
                    }
                    1 | 3 => {
                        c.byte()?; // elemkind
                        let n = c.u32()? as usize;
                        let mut funcs = Vec::with_capacity(n.min(1024));
                        for _ in 0..n {
                            funcs.push(c.u32()?);
                        }
                        m.elements.push(ElementSegment {
                            table_index: 0,
                            offset: DataOffset::Passive,
                            func_indices: funcs,
                        });
                    }
                    2 => {
                        let table_index = c.u32()?;
                        let offset = c.const_expr()?;
                        c.byte()?; // elemkind
                        let n = c.u32()? as usize;
                        let mut funcs = Vec::with_capacity(n.min(1024));
                        for _ in 0..n {
                            funcs.push(c.u32()?);
                        }
                        m.elements.push(ElementSegment { table_index, offset, func_indices: funcs });
                    }
                    _ => {
                        // expression-form segments: not decoded in v1
                        return Err(WasmError::UnexpectedEof);
                    }
                }
            }
        }
        10 => {
            let count = c.u32()?;
            for _ in 0..count {
                let body_size = c.u32()? as usize;
                let body = c.take(body_size)?;
                m.code.push(parse_body(body)?);
            }
        }
        11 => {
            let count = c.u32()?;
            for _ in 0..count {
                let flags = c.u32()?;
                let (memory_index, offset) = match flags {
                    0 => (0, c.const_expr()?),
                    1 => (0, DataOffset::Passive),
                    2 => {
                        let mi = c.u32()?;
                        (mi, c.const_expr()?)
                    }
                    _ => return Err(WasmError::UnexpectedEof),
                };
                let len = c.u32()? as usize;
                let bytes = c.take(len)?.to_vec();
                m.data.push(DataSegment { memory_index, offset, bytes });
            }
        }
        12 => {
            c.u32()?; // data count
        }
        _ => unreachable!(),
    }
    Ok(())
}

fn parse_body(body: &[u8]) -> Result<FuncBody, WasmError> {
    let mut c = Cursor::new(body);
    let local_groups = c.u32()? as usize;
    let mut locals = Vec::with_capacity(local_groups.min(64));
    for _ in 0..local_groups {
        let count = c.u32()?;
        let ty = c.valtype()?;
        locals.push((count, ty));
    }
    let instructions_raw = body[c.pos..].to_vec();
    let walk = walk_body(&instructions_raw);
    Ok(FuncBody {
        locals,
        instructions_raw,
        calls: walk.calls,
        has_call_indirect: walk.has_call_indirect,
        opaque: walk.opaque,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BodyWalk {
    pub calls: Vec<u32>,
    pub has_call_indirect: bool,
    pub opaque: bool,
}

/// Decodes the MVP opcode set plus the 0xFC misc prefix, skipping each
/// instruction's immediates exactly. An unrecognized opcode stops the walk
/// and marks the body opaque; calls decoded up to that point are kept.
pub fn walk_body(instrs: &[u8]) -> BodyWalk {
    let mut out = BodyWalk::default();
    let mut c = Cursor::new(instrs);
    while c.pos < instrs.len() {
        let op = match c.byte() {
            Ok(b) => b,
            Err(_) => break,
        };
        let r = match op {
            // no immediates
            0x00 | 0x01 | 0x05 | 0x0b | 0x0f | 0x1a | 0x1b => Ok(()),
            // blocktype
            0x02 | 0x03 | 0x04 => c.s33().map(|_| ()),
            // single u32 index
            0x0c | 0x0d | 0x20..=0x24 => c.u32().map(|_| ()),
            0x0e => (|| {
                let n = c.u32()? as usize;
                for _ in 0..n {
                    c.u32()?;
                }
                c.u32()?;
                Ok(())
            })(),
            0x10 => match c.u32() {
                Ok(target) => {
                    out.calls.push(target);
                    Ok(())
                }
                Err(e) => Err(e),
            },
            0x11 => (|| {
                c.u32()?; // type index
                c.u32()?; // table index
                out.has_call_indirect = true;
                Ok(())
            })(),
            // memarg
            0x28..=0x3e => (|| {
                c.u32()?;
                c.u32()?;
                Ok(())
            })(),
            // memory.size / memory.grow
            0x3f | 0x40 => c.u32().map(|_| ()),
            0x41 => c.s33().map(|_| ()),
            0x42 => c.s64().map(|_| ()),
            0x43 => c.take(4).map(|_| ()),
            0x44 => c.take(8).map(|_| ()),
            // numeric ops incl. sign-extension, no immediates
            0x45..=0xc4 => Ok(()),
            0xfc => (|| {
                let sub = c.u32()?;
                match sub {
                    0..=7 => {}
                    8 => {
                        c.u32()?;
                        c.byte()?;
                    }
                    9 | 13 => {
                        c.u32()?;
                    }
                    10 => {
                        c.byte()?;
                        c.byte()?;
                    }
                    11 => {
                        c.byte()?;
                    }
                    12 | 14 => {
                        c.u32()?;
                        c.u32()?;
                    }
                    15 | 16 | 17 => {
                        c.u32()?;
                    }
                    _ => return Err(WasmError::UnexpectedEof),
                }
                Ok(())
            })(),
            _ => Err(WasmError::UnexpectedEof),
        };
        if r.is_err() {
            // unknown opcode or truncated immediates: degrade to opaque
            out.opaque = true;
            break;
        }
    }
    out
}

/// Deterministic, line-oriented structural summary (objdump-style).
pub fn dump_structure(m: &WasmModule) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "wasm module: version {}, {} types, {} imports, {} functions, {} exports, {} data segments",
        m.version,
        m.types.len(),
        m.imports.len(),
        m.functions.len(),
        m.exports.len(),
        m.data.len()
    );
    for (i, t) in m.types.iter().enumerate() {
        let _ = writeln!(s, "type[{i}] {}", t.render());
    }
    for imp in &m.imports {
        match &imp.sig {
            Some(sig) => {
                let _ = writeln!(s, "import func {}.{} : {}", imp.module, imp.name, sig.render());
            }
            None => {
                let _ = writeln!(s, "import {} {}.{}", imp.kind.name(), imp.module, imp.name);
            }
        }
    }
    for e in &m.exports {
        let _ = writeln!(s, "export {} {} (idx {})", e.kind.name(), e.name, e.index);
    }
    for (i, d) in m.data.iter().enumerate() {
        let at = match d.offset {
            DataOffset::Const(k) => format!("@{k}"),
            DataOffset::Global(g) => format!("@global[{g}]"),
            DataOffset::Passive => "passive".into(),
            DataOffset::Unresolved => "@?".into(),
        };
        let preview: String = d
            .bytes
            .iter()
            .take(48)
            .map(|&b| {
                if (0x20..=0x7e).contains(&b) {
                    b as char
                } else {
                    '.'
                }
            })
            .collect();
        let _ = writeln!(s, "data[{i}] {at} len={} \"{preview}\"", d.bytes.len());
    }
    for (name, bytes) in &m.customs {
        let _ = writeln!(s, "custom section \"{name}\" len={}", bytes.len());
    }
    for issue in &m.malformed {
        let _ = writeln!(s, "malformed section {}: {}", issue.section_id, issue.detail);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::{
        emit_module, spyware_analog_spec, BodyOp, FuncSpec, ImportSpec, ModuleSpec, SigSpec,
    };

    #[test]
    fn empty_module_parses() {
        let bytes = [0x00, 0x61, 0x73, 0x6d, 0x01, 0x00, 0x00, 0x00];
        let m = parse_module(&bytes).unwrap();
        assert_eq!(m.version, 1);
        assert!(m.types.is_empty() && m.imports.is_empty() && m.exports.is_empty());
        assert_eq!(m.byte_len, 8);
    }

    #[test]
    fn bad_magic_rejected() {
        let bytes = [0x00, 0x61, 0x73, 0x6e, 0x01, 0x00, 0x00, 0x00];
        assert_eq!(parse_module(&bytes).unwrap_err(), WasmError::InvalidMagic);
    }

    #[test]
    fn bad_version_rejected() {
        let bytes = [0x00, 0x61, 0x73, 0x6d, 0x02, 0x00, 0x00, 0x00];
        assert_eq!(parse_module(&bytes).unwrap_err(), WasmError::InvalidVersion(2));
    }

    #[test]
    fn leb_worked_example() {
        // 0x65 + 0x0e*128 + 0x26*128^2 = 101 + 1792 + 622592 = 624485
        assert_eq!(decode_leb_u32(&[0xe5, 0x8e, 0x26], 0).unwrap(), (624485, 3));
        assert_eq!(decode_leb_u32(&[0x00], 0).unwrap(), (0, 1));
        assert_eq!(
            decode_leb_u32(&[0x80, 0x80, 0x80, 0x80, 0x80, 0x01], 0).unwrap_err(),
            WasmError::LebOverflow
        );
    }

    #[test]
    fn spyware_analog_imports_and_exports_recovered() {
        let bytes = emit_module(&spyware_analog_spec("http://push.mobilefonex.com/upload.php"))
            .unwrap();
        let m = parse_module(&bytes).unwrap();
        assert_eq!(m.imports.len(), 1);
        assert_eq!(m.imports[0].module, "env");
        assert_eq!(m.imports[0].name, "http_post");
        assert_eq!(m.exports.len(), 1);
        assert_eq!(m.exports[0].name, "run");
        assert_eq!(m.byte_len, bytes.len());
        assert!(m.malformed.is_empty());
        // the run body calls function index 0, the import
        assert_eq!(m.code[0].calls, vec![0]);
    }

    #[test]
    fn walk_body_single_call() {
        let walk = walk_body(&[0x10, 0x00, 0x0b]);
        assert_eq!(walk.calls, vec![0]);
        assert!(!walk.has_call_indirect);
        assert!(!walk.opaque);
    }

    #[test]
    fn walk_body_simd_prefix_is_opaque() {
        let walk = walk_body(&[0x10, 0x02, 0xfd, 0x00, 0x0b]);
        assert_eq!(walk.calls, vec![2]);
        assert!(walk.opaque);
    }

    #[test]
    fn index_map_orders_imports_first() {
        let spec = ModuleSpec {
            imports: vec![ImportSpec::func("env", "f", SigSpec::empty())],
            funcs: vec![
                FuncSpec::new(SigSpec::empty(), vec![BodyOp::End]),
                FuncSpec::new(SigSpec::empty(), vec![BodyOp::End]),
            ],
            ..Default::default()
        };
        let m = parse_module(&emit_module(&spec).unwrap()).unwrap();
        let map = function_index_map(&m);
        assert!(matches!(map[0], FuncSlot::Imported { .. }));
        assert_eq!(map[1], FuncSlot::Local { body_index: 0 });
        assert_eq!(map[2], FuncSlot::Local { body_index: 1 });
    }

    #[test]
    fn dump_structure_examples() {
        let empty = parse_module(&[0x00, 0x61, 0x73, 0x6d, 0x01, 0x00, 0x00, 0x00]).unwrap();
        assert_eq!(dump_structure(&empty).lines().count(), 1);

        let url = "http://push.mobilefonex.com/upload.php";
        let m = parse_module(&emit_module(&spyware_analog_spec(url)).unwrap()).unwrap();
        let dump = dump_structure(&m);
        assert!(dump.contains("export func run (idx 1)"));
        assert!(dump.contains(&format!("data[0] @1024 len=38 \"{url}\"")));
    }

    #[test]
    fn truncated_section_strict_vs_lenient() {
        // header + section id 1, declared size 100, but no payload
        let mut bytes = vec![0x00, 0x61, 0x73, 0x6d, 0x01, 0x00, 0x00, 0x00];
        bytes.extend_from_slice(&[0x01, 100]);
        assert_eq!(
            parse_module(&bytes).unwrap_err(),
            WasmError::TruncatedSection { id: 1 }
        );
        let m = parse_module_prefix(&bytes).unwrap();
        assert_eq!(m.byte_len, 8);
    }

    #[test]
    fn malformed_late_section_keeps_earlier_evidence() {
        let url = "http://push.mobilefonex.com/upload.php";
        let mut bytes = emit_module(&spyware_analog_spec(url)).unwrap();
        // append a custom section with garbage payload (bad name length)
        bytes.extend_from_slice(&[0x00, 0x02, 0xff, 0xff]);
        let m = parse_module(&bytes).unwrap();
        assert_eq!(m.imports.len(), 1);
        assert!(!m.malformed.is_empty());
    }

    #[test]
    fn duplicate_export_first_wins() {
        // hand-build an export section with the same name twice
        let mut bytes = vec![0x00, 0x61, 0x73, 0x6d, 0x01, 0x00, 0x00, 0x00];
        let mut p = vec![0x02]; // 2 exports
        for idx in [0u8, 1u8] {
            p.push(3);
            p.extend_from_slice(b"run");
            p.push(0x00);
            p.push(idx);
        }
        bytes.push(7);
        bytes.push(p.len() as u8);
        bytes.extend_from_slice(&p);
        let m = parse_module(&bytes).unwrap();
        assert_eq!(m.exports.len(), 1);
        assert_eq!(m.exports[0].index, 0);
        assert!(m.malformed.iter().any(|i| i.section_id == 7));
    }
}
