use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use storygauge_ffi::*;

const PERSONAS: [&str; 4] = ["Arzt", "Pflegekraft", "Patient", "Fahrer"];
const ACTIONS: [&str; 5] = [
    "Medikamente im Katalog suchen",
    "Termine für die nächste Woche planen",
    "den Reifendruck am Display prüfen",
    "Befunde an die Klinik senden",
    "die Route zur Ladestation anzeigen",
];
const REASONS: [&str; 3] = ["Fehler vermieden werden", "ich Zeit spare", "die Sicherheit steigt"];

fn backlog_csv(n: usize) -> String {
    let mut csv = String::from("id,description\n");
    for i in 0..n {
        let (p, a, r) = (PERSONAS[i % 4], ACTIONS[(i * 3) % 5], REASONS[(i * 7) % 3]);
        let extra = if i % 2 == 0 { " Akzeptanzkriterien: Die Liste wird in zwei Sekunden geladen." } else { "" };
        csv.push_str(&format!("S-{i},\"Als {p} möchte ich {a}, damit {r}.{extra}\"\n"));
    }
    csv
}

fn last_error() -> String {
    let p = sg_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn train(csv: &str) -> *mut SgBundle {
    let project = CString::new("alpha").unwrap();
    let mut bundle = ptr::null_mut();
    let (mut skipped, mut rejected) = (usize::MAX, usize::MAX);
    let status = unsafe {
        sg_bundle_train_csv(project.as_ptr(), csv.as_ptr(), csv.len(), ptr::null(), &mut bundle, &mut skipped, &mut rejected)
    };
    assert_eq!(status, SgStatus::Ok, "{}", last_error());
    assert!(sg_last_error().is_null());
    assert_eq!((skipped, rejected), (0, 0));
    bundle
}

fn take_string(p: *mut c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned();
    unsafe { sg_string_free(p) };
    s
}

#[test]
fn train_score_and_read_values() {
    let bundle = train(&backlog_csv(30));
    assert_eq!(unsafe { sg_bundle_version(bundle) }, 1);
    let text = CString::new("Suche: Als Arzt möchte ich Medikamente suchen, damit Fehler vermieden werden.").unwrap();
    let mut report = ptr::null_mut();
    assert_eq!(unsafe { sg_score(bundle, text.as_ptr(), &mut report) }, SgStatus::Ok);

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { sg_report_json(report, &mut json) }, SgStatus::Ok);
    let parsed: serde_json::Value = serde_json::from_str(&take_string(json)).unwrap();
    let metrics = parsed["metrics"].as_array().unwrap();
    assert_eq!(metrics.len(), SG_METRIC_COUNT);

    for (i, entry) in metrics.iter().enumerate() {
        let name = unsafe { CStr::from_ptr(sg_metric_name(i)) }.to_str().unwrap();
        assert_eq!(entry["name"], name);
        let mut v = f64::NAN;
        let status = unsafe { sg_report_value(report, i, &mut v) };
        match entry["value"].as_f64() {
            Some(expected) => {
                assert_eq!(status, SgStatus::Ok);
                assert_eq!(v.to_bits(), expected.to_bits());
                assert!((0.0..=1.0).contains(&v));
            }
            None => assert_eq!(status, SgStatus::Unavailable),
        }
    }
    assert!(sg_metric_name(SG_METRIC_COUNT).is_null());
    let mut v = 0.0;
    assert_eq!(unsafe { sg_report_value(report, SG_METRIC_COUNT, &mut v) }, SgStatus::InvalidArgument);

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { sg_bundle_percentiles_json(bundle, &mut json) }, SgStatus::Ok);
    let bands: serde_json::Value = serde_json::from_str(&take_string(json)).unwrap();
    let q = &bands["format_complete"];
    assert!(q["q25"].as_f64().unwrap() <= q["q50"].as_f64().unwrap());

    unsafe {
        sg_report_free(report);
        sg_bundle_free(bundle);
    }
}

#[test]
fn save_and_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let root = CString::new(dir.path().to_str().unwrap()).unwrap();
    let project = CString::new("alpha").unwrap();
    let bundle = train(&backlog_csv(24));
    let mut version = 0;
    assert_eq!(unsafe { sg_bundle_save(bundle, root.as_ptr(), &mut version) }, SgStatus::Ok);
    assert_eq!(version, 1);
    assert_eq!(unsafe { sg_bundle_version(bundle) }, 1);
    assert_eq!(unsafe { sg_bundle_save(bundle, root.as_ptr(), ptr::null_mut()) }, SgStatus::Ok);

    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { sg_bundle_load(root.as_ptr(), project.as_ptr(), &mut loaded) }, SgStatus::Ok);
    assert_eq!(unsafe { sg_bundle_version(loaded) }, 2);

    let text = CString::new("Als Fahrer möchte ich die Route anzeigen, damit ich Zeit spare.").unwrap();
    let json_of = |b: *const SgBundle| {
        let mut report = ptr::null_mut();
        assert_eq!(unsafe { sg_score(b, text.as_ptr(), &mut report) }, SgStatus::Ok);
        let mut json = ptr::null_mut();
        assert_eq!(unsafe { sg_report_json(report, &mut json) }, SgStatus::Ok);
        unsafe { sg_report_free(report) };
        let mut v: serde_json::Value = serde_json::from_str(&take_string(json)).unwrap();
        v["bundle_version"] = serde_json::Value::Null;
        v
    };
    assert_eq!(json_of(bundle), json_of(loaded));

    let nobody = CString::new("nobody").unwrap();
    let mut missing = ptr::null_mut();
    assert_eq!(unsafe { sg_bundle_load(root.as_ptr(), nobody.as_ptr(), &mut missing) }, SgStatus::NotFound);
    assert!(missing.is_null());
    assert!(last_error().contains("nobody"));

    let path = dir.path().join("projects").join("alpha").join("bundle-v2.json");
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 3]).unwrap();
    assert_eq!(unsafe { sg_bundle_load(root.as_ptr(), project.as_ptr(), &mut missing) }, SgStatus::CorruptBundle);

    unsafe {
        sg_bundle_free(bundle);
        sg_bundle_free(loaded);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let mut bundle = ptr::null_mut();
    let project = CString::new("alpha").unwrap();
    let bad_id = CString::new("../x").unwrap();
    let csv = backlog_csv(10);
    let call = |id: *const c_char, csv: &[u8], config: *const c_char, out: *mut *mut SgBundle| unsafe {
        sg_bundle_train_csv(id, csv.as_ptr(), csv.len(), config, out, ptr::null_mut(), ptr::null_mut())
    };

    assert_eq!(call(ptr::null(), csv.as_bytes(), ptr::null(), &mut bundle), SgStatus::NullPointer);
    assert_eq!(call(project.as_ptr(), csv.as_bytes(), ptr::null(), ptr::null_mut()), SgStatus::NullPointer);
    assert_eq!(call(bad_id.as_ptr(), csv.as_bytes(), ptr::null(), &mut bundle), SgStatus::InvalidArgument);
    assert_eq!(call(project.as_ptr(), b"title\nfoo\n", ptr::null(), &mut bundle), SgStatus::MalformedCsv);
    assert!(last_error().contains("missing column"), "{}", last_error());

    let config = CString::new("thr = 1.5").unwrap();
    assert_eq!(call(project.as_ptr(), csv.as_bytes(), config.as_ptr(), &mut bundle), SgStatus::InvalidArgument);
    let config = CString::new("nonsense = true").unwrap();
    assert_eq!(call(project.as_ptr(), csv.as_bytes(), config.as_ptr(), &mut bundle), SgStatus::InvalidArgument);
    let config = CString::new("seed = 7\nk = 2").unwrap();
    assert_eq!(call(project.as_ptr(), csv.as_bytes(), config.as_ptr(), &mut bundle), SgStatus::Ok);

    let invalid = [0x66u8, 0xff, 0x00];
    let mut report = ptr::null_mut();
    assert_eq!(unsafe { sg_score(bundle, invalid.as_ptr().cast(), &mut report) }, SgStatus::InvalidUtf8);
    let blank = CString::new("   ").unwrap();
    assert_eq!(unsafe { sg_score(bundle, blank.as_ptr(), &mut report) }, SgStatus::InvalidArgument);
    assert!(report.is_null());
    assert_eq!(unsafe { sg_score(ptr::null(), blank.as_ptr(), &mut report) }, SgStatus::NullPointer);

    unsafe {
        sg_bundle_free(bundle);
        sg_bundle_free(ptr::null_mut());
        sg_report_free(ptr::null_mut());
        sg_string_free(ptr::null_mut());
    }
}

#[test]
fn kappa_through_the_c_interface() {
    let a = [1u8, 2, 3, 4, 5, 3, 2, 4];
    let mut k = 0.0;
    let q = SgWeighting::Quadratic as u32;
    assert_eq!(unsafe { sg_weighted_kappa(a.as_ptr(), a.as_ptr(), a.len(), q, &mut k) }, SgStatus::Ok);
    assert_eq!(k, 1.0);

    // sklearn cohen_kappa_score(weights="linear") on these vectors
    let (x, y) = ([1u8, 2, 3, 4, 5, 2], [1u8, 3, 3, 5, 4, 2]);
    let l = SgWeighting::Linear as u32;
    assert_eq!(unsafe { sg_weighted_kappa(x.as_ptr(), y.as_ptr(), x.len(), l, &mut k) }, SgStatus::Ok);
    assert!((k - 0.6666666666666667).abs() < 1e-12, "{k}");

    let flat = [3u8; 5];
    assert_eq!(unsafe { sg_weighted_kappa(flat.as_ptr(), a.as_ptr(), 5, q, &mut k) }, SgStatus::Unavailable);
    let bad = [0u8, 6];
    assert_eq!(unsafe { sg_weighted_kappa(bad.as_ptr(), bad.as_ptr(), 2, q, &mut k) }, SgStatus::InvalidArgument);
    assert_eq!(unsafe { sg_weighted_kappa(a.as_ptr(), a.as_ptr(), a.len(), 7, &mut k) }, SgStatus::InvalidArgument);
    assert!(last_error().contains('7'));
    assert_eq!(unsafe { sg_weighted_kappa(ptr::null(), a.as_ptr(), 3, q, &mut k) }, SgStatus::NullPointer);
}

#[test]
fn last_error_is_per_thread() {
    let mut k = 0.0;
    let bad = [9u8, 9];
    assert_eq!(unsafe { sg_weighted_kappa(bad.as_ptr(), bad.as_ptr(), 2, 1, &mut k) }, SgStatus::InvalidArgument);
    std::thread::spawn(|| assert!(sg_last_error().is_null())).join().unwrap();
    assert!(!last_error().is_empty());
    assert!(!sg_version().is_null());
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_static_library() {
    let header_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let lib = target_dir().join("libstorygauge_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("backlog.csv");
    std::fs::write(&csv_path, backlog_csv(20)).unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include <string.h>
#include "storygauge.h"

int main(int argc, char **argv) {
    FILE *f = fopen(argv[1], "rb");
    static uint8_t buf[1 << 16];
    size_t n = fread(buf, 1, sizeof buf, f);
    fclose(f);
    SgBundle *bundle = NULL;
    size_t skipped = 0, rejected = 0;
    if (sg_bundle_train_csv("c-proj", buf, n, NULL, &bundle, &skipped, &rejected) != SG_STATUS_OK) {
        fprintf(stderr, "%s\n", sg_last_error());
        return 1;
    }
    SgReport *report = NULL;
    if (sg_score(bundle, "Als Arzt möchte ich Befunde senden, damit ich Zeit spare.", &report) != SG_STATUS_OK) return 2;
    for (size_t i = 0; i < SG_METRIC_COUNT; i++) {
        double v = -1.0;
        SgStatus s = sg_report_value(report, i, &v);
        if (s == SG_STATUS_OK) printf("%s=%.6f\n", sg_metric_name(i), v);
        else if (s == SG_STATUS_UNAVAILABLE) printf("%s=na\n", sg_metric_name(i));
        else return 3;
    }
    double k = 0.0;
    uint8_t a[] = {1, 2, 3, 4}, b[] = {1, 2, 4, 4};
    if (sg_weighted_kappa(a, b, 4, SG_WEIGHTING_QUADRATIC, &k) != SG_STATUS_OK) return 4;
    printf("kappa=%.6f\n", k);
    if (sg_score(NULL, "x", &report) != SG_STATUS_NULL_POINTER || sg_last_error() == NULL) return 5;
    sg_report_free(report);
    sg_bundle_free(bundle);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("main");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(&src)
        .arg("-I")
        .arg(&header_dir)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).arg(&csv_path).output().unwrap();
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), SG_METRIC_COUNT + 1);
    assert!(lines[0].starts_with("format_complete="));
    // sklearn cohen_kappa_score(weights="quadratic") gives 0.91666...
    assert_eq!(lines[8], "kappa=0.916667");
}
