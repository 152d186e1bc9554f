//! Property tests over the emitters and parsers.

use proptest::prelude::*;

use wasmdroid::carver;
use wasmdroid::container;
use wasmdroid::dex_lite;
use wasmdroid::testkit::{
    emit_dex_with_strings, emit_module, emit_zip, BodyOp, DataSpec, FuncSpec, ImportSpec,
    ModuleSpec, SigSpec, ZipEntrySpec, ZipMethod,
};
use wasmdroid::wasm_parser::{decode_leb_u32, parse_module, walk_body, DataOffset};

fn encode_leb_u32(mut v: u32) -> Vec<u8> {
    let mut out = Vec::new();
    loop {
        let b = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(b);
            return out;
        }
        out.push(b | 0x80);
    }
}

fn name_strategy() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,7}"
}

fn spec_strategy() -> impl Strategy<Value = ModuleSpec> {
    let imports = prop::collection::vec(name_strategy(), 0..=4).prop_map(|names| {
        names
            .iter()
            .enumerate()
            .map(|(i, n)| ImportSpec::func("env", &format!("{n}{i}"), SigSpec::empty()))
            .collect::<Vec<_>>()
    });
    let data = prop::collection::vec(
        (any::<bool>(), 0u32..65536, prop::collection::vec(any::<u8>(), 0..32)),
        0..=4,
    )
    .prop_map(|segs| {
        segs.into_iter()
            .map(|(passive, offset, bytes)| {
                if passive {
                    DataSpec::Passive { bytes }
                } else {
                    DataSpec::Active { offset, bytes }
                }
            })
            .collect::<Vec<_>>()
    });
    (imports, 1usize..=8, data).prop_flat_map(|(imports, n_funcs, data)| {
        let total = (imports.len() + n_funcs) as u32;
        let funcs = prop::collection::vec(
            prop::collection::vec(0..total, 0..4),
            n_funcs..=n_funcs,
        )
        .prop_map(|bodies| {
            bodies
                .into_iter()
                .map(|calls| {
                    let mut ops: Vec<BodyOp> = calls.into_iter().map(BodyOp::Call).collect();
                    ops.push(BodyOp::End);
                    FuncSpec::new(SigSpec::empty(), ops)
                })
                .collect::<Vec<_>>()
        });
        let exports = prop::collection::vec((name_strategy(), 0..total), 0..=3).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (n, idx))| (format!("{n}{i}"), idx))
                .collect::<Vec<_>>()
        });
        (Just(imports), funcs, exports, Just(data)).prop_map(
            |(imports, funcs, exports, data)| ModuleSpec {
                imports,
                funcs,
                exports,
                data,
                ..Default::default()
            },
        )
    })
}

proptest! {
    #[test]
    fn leb_decode_inverts_encode(v in any::<u32>()) {
        let bytes = encode_leb_u32(v);
        let (got, next) = decode_leb_u32(&bytes, 0).unwrap();
        prop_assert_eq!(got, v);
        prop_assert_eq!(next, bytes.len());
    }

    #[test]
    fn scan_magic_matches_naive_oracle(bytes in prop::collection::vec(any::<u8>(), 0..4096)) {
        let naive: Vec<usize> = (0..bytes.len().saturating_sub(3))
            .filter(|&i| bytes[i..i + 4] == [0x00, 0x61, 0x73, 0x6d])
            .collect();
        prop_assert_eq!(carver::scan_magic(&bytes), naive);
    }

    #[test]
    fn module_roundtrip(spec in spec_strategy()) {
        let bytes = emit_module(&spec).unwrap();
        let m = parse_module(&bytes).unwrap();
        prop_assert!(m.malformed.is_empty());
        prop_assert_eq!(m.byte_len, bytes.len());
        let imports: Vec<(String, String)> =
            m.imports.iter().map(|i| (i.module.clone(), i.name.clone())).collect();
        let want: Vec<(String, String)> =
            spec.imports.iter().map(|i| (i.module.clone(), i.name.clone())).collect();
        prop_assert_eq!(imports, want);
        prop_assert_eq!(m.functions.len(), spec.funcs.len());
        let exports: Vec<(String, u32)> =
            m.exports.iter().map(|e| (e.name.clone(), e.index)).collect();
        prop_assert_eq!(exports, spec.exports);
        prop_assert_eq!(m.data.len(), spec.data.len());
        for (seg, want) in m.data.iter().zip(&spec.data) {
            match want {
                DataSpec::Active { offset, bytes } => {
                    prop_assert_eq!(seg.offset, DataOffset::Const(*offset as i64));
                    prop_assert_eq!(&seg.bytes, bytes);
                }
                DataSpec::Passive { bytes } => {
                    prop_assert_eq!(seg.offset, DataOffset::Passive);
                    prop_assert_eq!(&seg.bytes, bytes);
                }
            }
        }
    }

    #[test]
    fn emitted_dex_parses(strings in prop::collection::vec("[ -~]{1,16}", 0..8)) {
        let refs: Vec<&str> = strings.iter().map(|s| s.as_str()).collect();
        let dex = emit_dex_with_strings(&refs);
        let parsed = dex_lite::parse_dex(dex).unwrap();
        prop_assert_eq!(parsed.strings, strings);
        prop_assert_eq!(parsed.malformed_strings, 0);
    }

    #[test]
    fn emitted_zip_opens(
        entries in prop::collection::vec(
            ("[a-z]{1,8}(/[a-z]{1,8}){0,2}", prop::collection::vec(any::<u8>(), 0..256), any::<bool>()),
            1..6,
        )
    ) {
        let specs: Vec<ZipEntrySpec> = entries
            .iter()
            .map(|(name, bytes, deflate)| ZipEntrySpec {
                name: name.clone(),
                bytes: bytes.clone(),
                method: if *deflate { ZipMethod::Deflate } else { ZipMethod::Stored },
            })
            .collect();
        let zip = emit_zip(&specs);
        let inv = container::open_archive(zip).unwrap();
        prop_assert_eq!(inv.entries.len(), entries.len());
        for (i, (name, bytes, _)) in entries.iter().enumerate() {
            prop_assert_eq!(&inv.entries[i].path, name);
            let data = inv.entry_bytes_at(i).unwrap();
            prop_assert_eq!(&data.bytes, bytes);
            prop_assert!(data.crc_ok);
        }
    }
}

/// Each known opcode with hand-built immediates must be consumed exactly, so
/// a body of one instruction plus `end` walks cleanly to the end.
#[test]
fn opcode_immediates_consumed_exactly() {
    let cases: Vec<(&str, Vec<u8>)> = vec![
        ("nop", vec![0x01]),
        ("block void", vec![0x02, 0x40]),
        ("block i32", vec![0x02, 0x7f, 0x0b]),
        ("br", vec![0x0c, 0x00]),
        ("br_table 2", vec![0x0e, 0x02, 0x00, 0x01, 0x00]),
        ("call 5", vec![0x10, 0x05]),
        ("call_indirect", vec![0x11, 0x00, 0x00]),
        ("local.get", vec![0x20, 0x00]),
        ("i32.load", vec![0x28, 0x02, 0x00]),
        ("i32.const", vec![0x41, 0x2a]),
        ("i64.const", vec![0x42, 0xc0, 0xbb, 0x78]),
        ("f32.const", vec![0x43, 0, 0, 0x80, 0x3f]),
        ("f64.const", vec![0x44, 0, 0, 0, 0, 0, 0, 0xf0, 0x3f]),
        ("memory.size", vec![0x3f, 0x00]),
        ("memory.copy", vec![0xfc, 0x0a, 0x00, 0x00]),
        ("memory.fill", vec![0xfc, 0x0b, 0x00]),
    ];
    for (name, instr) in cases {
        let mut body = instr.clone();
        body.push(0x0b);
        let walk = walk_body(&body);
        assert!(!walk.opaque, "{name}: walk must consume immediates exactly");
        if instr[0] == 0x10 {
            assert_eq!(walk.calls, vec![5], "{name}");
        }
        if instr[0] == 0x11 {
            assert!(walk.has_call_indirect, "{name}");
        }
    }
}
