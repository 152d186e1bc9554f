//! Black-box checks on the compiled binary: exit codes, output files, and
//! the docs subcommand.

use std::process::Command;

use wasmdroid::testkit::{
    emit_dex_with_strings_and_blob, emit_module, emit_zip, spyware_analog_spec, ZipEntrySpec,
};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wasmdroid"))
}

fn spyware_apk() -> Vec<u8> {
    let module =
        emit_module(&spyware_analog_spec("http://push.mobilefonex.com/upload.php")).unwrap();
    let (dex, _) = emit_dex_with_strings_and_blob(&["MainActivity"], &module);
    emit_zip(&[
        ZipEntrySpec::stored("AndroidManifest.xml", b"<manifest/>".to_vec()),
        ZipEntrySpec::stored("classes.dex", dex),
    ])
}

#[test]
fn scan_single_apk_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let apk = dir.path().join("sample.apk");
    std::fs::write(&apk, spyware_apk()).unwrap();

    let out = bin().args(["scan"]).arg(&apk).output().unwrap();
    assert_eq!(out.status.code(), Some(4), "LikelyMaliciousHiding exit code");
    let report = wasmdroid::report::parse_json(&out.stdout).unwrap();
    assert_eq!(report.verdict, wasmdroid::report::Verdict::LikelyMaliciousHiding);
    assert!(out.stdout.ends_with(b"\n"));
}

#[test]
fn scan_multiple_writes_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.apk");
    let b = dir.path().join("b.apk");
    std::fs::write(&a, spyware_apk()).unwrap();
    std::fs::write(
        &b,
        emit_zip(&[ZipEntrySpec::stored("AndroidManifest.xml", b"<manifest/>".to_vec())]),
    )
    .unwrap();

    let out = bin().args(["scan"]).arg(&a).arg(&b).output().unwrap();
    assert_eq!(out.status.code(), Some(4), "max verdict across inputs");
    let ra = std::fs::read(dir.path().join("a.report.json")).unwrap();
    let rb = std::fs::read(dir.path().join("b.report.json")).unwrap();
    assert_eq!(
        wasmdroid::report::parse_json(&ra).unwrap().verdict,
        wasmdroid::report::Verdict::LikelyMaliciousHiding
    );
    assert_eq!(
        wasmdroid::report::parse_json(&rb).unwrap().verdict,
        wasmdroid::report::Verdict::Clean
    );
}

#[test]
fn text_format_and_clean_exit() {
    let dir = tempfile::tempdir().unwrap();
    let apk = dir.path().join("clean.apk");
    std::fs::write(
        &apk,
        emit_zip(&[ZipEntrySpec::stored("AndroidManifest.xml", b"<manifest/>".to_vec())]),
    )
    .unwrap();

    let out = bin().args(["scan", "--format", "text"]).arg(&apk).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("verdict: Clean"), "text report summary: {text}");
}

#[test]
fn unreadable_input_exits_one() {
    let out = bin().args(["scan", "/no/such/file.apk"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn docs_subcommand_writes_reference() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["docs", "--out"]).arg(dir.path()).output().unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("catalog_reference.md")).unwrap();
    assert!(text.contains("wasm-file-ext"));
    assert!(text.contains("runtime-lib-wasmedge"));
}
