//! Exercises the C ABI in-process and keeps `include/dcf.h` honest.

use std::ffi::{c_int, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use dcf_ffi::{
    dcf_config_free, dcf_config_new, dcf_last_error, dcf_optimize, dcf_simulate, dcf_solve,
    dcf_version, DcfConfig, DcfOperatingPoint, DcfOptimization, DcfSimMetrics, DCF_ERR_INFEASIBLE,
    DCF_ERR_INVALID, DCF_ERR_SOLVER, DCF_OK, DCF_REGION_BLC, DCF_REGION_LC,
};

fn last_error() -> String {
    unsafe { CStr::from_ptr(dcf_last_error()) }.to_string_lossy().into_owned()
}

fn config(json: &str) -> *mut DcfConfig {
    let text = CString::new(json).unwrap();
    let mut handle: *mut DcfConfig = ptr::null_mut();
    let code = unsafe { dcf_config_new(text.as_ptr(), &mut handle) };
    assert_eq!(code, DCF_OK, "config {json:?} rejected: {}", last_error());
    assert!(!handle.is_null());
    handle
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(dcf_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn solve_defaults_reports_a_blc_point() {
    let cfg = config("{}");
    let mut op = DcfOperatingPoint {
        tau: 0.0,
        p_col: 0.0,
        p_eq: 0.0,
        q: 0.0,
        e_slot_s: 0.0,
        s_bps: 0.0,
        tau_m: 0.0,
        s_m_bps: 0.0,
        lambda_c_pps: 0.0,
        residual: 0.0,
        iterations: 0,
        region: -1,
        multiple_roots: -1,
    };
    assert_eq!(unsafe { dcf_solve(cfg, &mut op) }, DCF_OK, "{}", last_error());
    unsafe { dcf_config_free(cfg) };

    assert!(op.tau > 0.0 && op.tau < 0.01, "tau {}", op.tau);
    assert!(op.q > 0.0 && op.q < 0.01);
    assert!(op.s_bps > 0.0);
    assert!(op.s_m_bps > 8.0e5 && op.s_m_bps < 9.5e5, "S_m {}", op.s_m_bps);
    assert!(op.lambda_c_pps > 9.0 && op.lambda_c_pps < 11.0);
    assert_eq!(op.region, DCF_REGION_BLC);
    assert_eq!(op.multiple_roots, 0);
    assert!(op.residual.abs() < 1e-9);
    assert!(op.iterations > 0);
}

#[test]
fn saturated_scenario_lands_in_lc() {
    let cfg = config(r#"{"scenario": {"lambda_pps": 1000.0}}"#);
    let mut op: DcfOperatingPoint = unsafe { std::mem::zeroed() };
    assert_eq!(unsafe { dcf_solve(cfg, &mut op) }, DCF_OK, "{}", last_error());
    unsafe { dcf_config_free(cfg) };
    assert_eq!(op.region, DCF_REGION_LC);
    assert!(op.s_bps < op.s_m_bps * 1.001);
}

#[test]
fn optimize_defaults_selects_991_bytes() {
    let cfg = config("{}");
    let mut o: DcfOptimization = unsafe { std::mem::zeroed() };
    assert_eq!(unsafe { dcf_optimize(cfg, &mut o) }, DCF_OK, "{}", last_error());
    unsafe { dcf_config_free(cfg) };
    assert_eq!(o.region, DCF_REGION_BLC);
    assert_eq!(o.w_op, -1, "BLC tunes the payload, not the window");
    assert_eq!(o.payload_opt_b, 991);
    assert_eq!(o.payload_step2_b, 991);
    assert!(o.payload_step1_b > 991);
    assert!(o.achieved_pe > 0.0 && o.achieved_pe <= 0.08 + 1e-9);
    assert!(o.predicted_s_bps > 0.0);
}

#[test]
fn congested_scenario_returns_a_window() {
    let cfg = config(
        r#"{"scenario": {"lambda_pps": 1000.0, "payload_bytes": 1028,
                         "packet_error_prob": 0.0}}"#,
    );
    let mut o: DcfOptimization = unsafe { std::mem::zeroed() };
    assert_eq!(unsafe { dcf_optimize(cfg, &mut o) }, DCF_OK, "{}", last_error());
    unsafe { dcf_config_free(cfg) };
    assert_eq!(o.region, DCF_REGION_LC);
    assert_eq!(o.w_op, 270);
    assert_eq!(o.payload_opt_b, -1);
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let cfg = config(
        r#"{"scenario": {"n_stations": 4, "lambda_pps": 6.0},
            "sim": {"duration_s": 4.0, "warmup_s": 0.5, "seed": 3}}"#,
    );
    let mut a: DcfSimMetrics = unsafe { std::mem::zeroed() };
    let mut b: DcfSimMetrics = unsafe { std::mem::zeroed() };
    let mut c: DcfSimMetrics = unsafe { std::mem::zeroed() };
    assert_eq!(unsafe { dcf_simulate(cfg, ptr::null(), &mut a) }, DCF_OK, "{}", last_error());
    assert_eq!(unsafe { dcf_simulate(cfg, ptr::null(), &mut b) }, DCF_OK);
    let other = 4u64;
    assert_eq!(unsafe { dcf_simulate(cfg, &other, &mut c) }, DCF_OK);
    unsafe { dcf_config_free(cfg) };

    assert_eq!(a, b, "same seed must reproduce identical metrics");
    assert_ne!(
        a.delivered_payload_bits, c.delivered_payload_bits,
        "a fresh seed must change the realization"
    );
    assert!(a.sim_time_s >= 4.0);
    assert!(a.s_bps > 0.0);
    assert!(a.slots >= a.slots_measured);
    assert_eq!(
        a.slots_measured,
        a.idle_slots + a.success_slots + a.collision_slots + a.error_slots
    );
}

#[test]
fn error_codes_mirror_the_cli() {
    // Parse error.
    let bad = CString::new("{nope").unwrap();
    let mut handle: *mut DcfConfig = ptr::null_mut();
    assert_eq!(unsafe { dcf_config_new(bad.as_ptr(), &mut handle) }, DCF_ERR_INVALID);
    assert!(handle.is_null());
    assert!(!last_error().is_empty());

    // Unknown key.
    let bad = CString::new(r#"{"scenario": {"stations": 5}}"#).unwrap();
    assert_eq!(unsafe { dcf_config_new(bad.as_ptr(), &mut handle) }, DCF_ERR_INVALID);

    // Semantic error caught eagerly at construction.
    let bad = CString::new(r#"{"scenario": {"n_stations": 0}}"#).unwrap();
    assert_eq!(unsafe { dcf_config_new(bad.as_ptr(), &mut handle) }, DCF_ERR_INVALID);

    // Solver starved of iterations.
    let cfg = config(r#"{"solver": {"max_iterations": 3, "tolerance": 1e-14}}"#);
    let mut op: DcfOperatingPoint = unsafe { std::mem::zeroed() };
    assert_eq!(unsafe { dcf_solve(cfg, &mut op) }, DCF_ERR_SOLVER);
    assert!(last_error().contains("3 iterations"), "{}", last_error());
    unsafe { dcf_config_free(cfg) };

    // Unreachable PER target.
    let cfg = config(
        r#"{"scenario": {"bit_error_prob": 2e-4, "per_target": 0.05, "lambda_pps": 1.0}}"#,
    );
    let mut o: DcfOptimization = unsafe { std::mem::zeroed() };
    assert_eq!(unsafe { dcf_optimize(cfg, &mut o) }, DCF_ERR_INFEASIBLE);
    unsafe { dcf_config_free(cfg) };

    // NULL misuse.
    assert_eq!(unsafe { dcf_solve(ptr::null(), &mut op) }, DCF_ERR_INVALID);
    assert_eq!(unsafe { dcf_config_new(ptr::null(), ptr::null_mut()) }, DCF_ERR_INVALID);
    unsafe { dcf_config_free(ptr::null_mut()) }; // must not crash
}

#[test]
fn null_json_means_defaults() {
    let mut handle: *mut DcfConfig = ptr::null_mut();
    assert_eq!(unsafe { dcf_config_new(ptr::null(), &mut handle) }, DCF_OK);
    let mut op: DcfOperatingPoint = unsafe { std::mem::zeroed() };
    assert_eq!(unsafe { dcf_solve(handle, &mut op) }, DCF_OK);
    unsafe { dcf_config_free(handle) };
    assert_eq!(op.region, DCF_REGION_BLC);
}

/// Every exported symbol and status constant must appear in the header.
#[test]
fn header_covers_the_exported_surface() {
    let header_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/dcf.h");
    let header = std::fs::read_to_string(&header_path).unwrap();
    for symbol in [
        "dcf_version",
        "dcf_last_error",
        "dcf_config_new",
        "dcf_config_free",
        "dcf_solve",
        "dcf_optimize",
        "dcf_simulate",
        "DcfConfig",
        "DcfOperatingPoint",
        "DcfOptimization",
        "DcfSimMetrics",
        "DCF_OK",
        "DCF_ERR_INVALID",
        "DCF_ERR_SOLVER",
        "DCF_ERR_INFEASIBLE",
        "DCF_REGION_BLC",
        "DCF_REGION_LC",
    ] {
        assert!(header.contains(symbol), "{} missing from include/dcf.h", symbol);
    }
    // Struct field parity with the Rust definitions, in declaration order.
    let fields_in_order = |names: &[&str]| {
        let mut at = 0usize;
        for name in names {
            let pos = header[at..]
                .find(name)
                .unwrap_or_else(|| panic!("field {name} missing or out of order"));
            at += pos + name.len();
        }
    };
    fields_in_order(&[
        "tau;", "p_col;", "p_eq;", "q;", "e_slot_s;", "s_bps;", "tau_m;", "s_m_bps;",
        "lambda_c_pps;", "residual;", "iterations;", "region;", "multiple_roots;",
    ]);
    fields_in_order(&[
        "achieved_pe;",
        "predicted_s_bps;",
        "w_op;",
        "payload_step1_b;",
        "payload_step2_b;",
        "payload_opt_b;",
        "region_shift_warning;",
    ]);
    fields_in_order(&[
        "sim_time_s;",
        "measured_time_s;",
        "measured_tau;",
        "measured_p_col;",
        "slots;",
        "slots_measured;",
        "idle_slots;",
        "success_slots;",
        "collision_slots;",
        "error_slots;",
        "delivered_payload_bits;",
    ]);
}

/// Status constants in the header must equal the Rust values.
#[test]
fn header_constants_match() {
    let header_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/dcf.h");
    let header = std::fs::read_to_string(&header_path).unwrap();
    for (name, value) in [
        ("DCF_OK", DCF_OK),
        ("DCF_ERR_INVALID", DCF_ERR_INVALID),
        ("DCF_ERR_SOLVER", DCF_ERR_SOLVER),
        ("DCF_ERR_INFEASIBLE", DCF_ERR_INFEASIBLE),
        ("DCF_REGION_BLC", DCF_REGION_BLC),
        ("DCF_REGION_LC", DCF_REGION_LC),
    ] {
        let needle = format!("#define {name} {value}");
        assert!(header.contains(&needle), "expected {needle:?} in include/dcf.h");
    }
    let _: c_int = DCF_OK; // status type stays C int
}

fn find_c_compiler() -> Option<&'static str> {
    ["cc", "gcc", "clang"].iter().find_map(|name| {
        Command::new(name)
            .arg("--version")
            .output()
            .ok()
            .filter(|o| o.status.success())
            .map(|_| *name)
    })
}

/// The header must stand alone as C99; skipped when no C compiler is present.
#[test]
fn header_compiles_as_c() {
    let header_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/dcf.h");
    let Some(cc) = find_c_compiler() else {
        eprintln!("skipping: no C compiler on PATH");
        return;
    };
    let out = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Wextra", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(&header_path)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{cc} rejected include/dcf.h:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Compiles `examples/demo.c` against the header, links the freshly built
/// cdylib, runs it, and checks the output — an end-to-end ABI check from C.
/// Skipped when no C compiler is present.
#[test]
fn demo_c_links_and_runs() {
    let Some(cc) = find_c_compiler() else {
        eprintln!("skipping: no C compiler on PATH");
        return;
    };
    // target/debug is two levels up from the test executable in deps/.
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().unwrap().parent().unwrap().to_path_buf();
    let cdylib = lib_dir.join("libdcf_ffi.so");
    if !cdylib.exists() {
        eprintln!("skipping: {} not found", cdylib.display());
        return;
    }
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let out_dir = tempfile::tempdir().unwrap();
    let demo_bin = out_dir.path().join("demo");
    let build = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Wextra", "-Werror"])
        .arg(format!("-I{}", manifest.join("include").display()))
        .arg(manifest.join("examples/demo.c"))
        .arg(format!("-L{}", lib_dir.display()))
        .arg("-ldcf_ffi")
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .args(["-o".as_ref(), demo_bin.as_os_str()])
        .output()
        .unwrap();
    assert!(
        build.status.success(),
        "{cc} failed to build demo.c:\n{}",
        String::from_utf8_lossy(&build.stderr)
    );
    let run = Command::new(&demo_bin).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "demo exited {:?}: {stdout}", run.status.code());
    assert!(stdout.contains(&format!("dcf version {}", env!("CARGO_PKG_VERSION"))));
    assert!(stdout.contains("region=BLC"), "stdout: {stdout}");
    assert!(stdout.contains("payload_opt_b=991"), "stdout: {stdout}");
    assert!(stdout.contains("delivered"), "stdout: {stdout}");
}
