use std::ffi::{CStr, CString};
use std::ptr;

use selftune_ffi::*;

const NEURAL: &str = r#"
name = "neural"
system = "first_order"
[model]
mu0 = 0.5
[law]
kind = "log"
a = 1.0
b = 1.0
[initial]
x = 2.0
mu = 0.0
[time]
horizon = 50.0
"#;

fn last_error() -> String {
    let p = st_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn scenario(src: &str) -> Result<*mut StScenario, StStatus> {
    let c = CString::new(src).unwrap();
    let mut out = ptr::null_mut();
    match unsafe { st_scenario_from_toml(c.as_ptr(), &mut out) } {
        StStatus::Ok => Ok(out),
        s => {
            assert!(out.is_null());
            Err(s)
        }
    }
}

#[test]
fn simulate_and_read_back() {
    let s = scenario(NEURAL).unwrap();
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { st_simulate(s, &mut run) }, StStatus::Ok);
    unsafe {
        let n = st_run_len(run);
        let d = st_run_dim(run);
        assert!(n > 10);
        assert_eq!(d, 2);
        let mut times = vec![0.0; n];
        let mut states = vec![0.0; n * d];
        assert_eq!(st_run_copy_times(run, times.as_mut_ptr(), n), StStatus::Ok);
        assert_eq!(
            st_run_copy_states(run, states.as_mut_ptr(), n * d),
            StStatus::Ok
        );
        assert_eq!(times[0], 0.0);
        assert_eq!(times[n - 1], 50.0);
        assert_eq!(&states[..2], &[2.0, 0.0]);
        assert!((states[n * d - 1] - 0.5).abs() < 1e-6);
        assert!(st_run_final_mu_error(run) < 1e-6);

        let mut small = vec![0.0; 1];
        assert_eq!(
            st_run_copy_times(run, small.as_mut_ptr(), 1),
            StStatus::BufferTooSmall
        );
        assert!(last_error().contains("needed"));

        let json = st_run_report_json(run);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        st_string_free(json);
        let report: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(report["name"], "neural");

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.csv");
        let cpath = CString::new(path.to_str().unwrap()).unwrap();
        assert_eq!(st_run_write_csv(run, cpath.as_ptr()), StStatus::Ok);
        let csv = std::fs::read_to_string(&path).unwrap();
        assert!(csv.starts_with("t,x,mu\n"));
        assert_eq!(csv.lines().count(), n + 1);

        st_run_free(run);
        st_scenario_free(s);
    }
}

#[test]
fn error_codes() {
    assert_eq!(scenario("not toml ="), Err(StStatus::Validation));
    assert!(last_error().starts_with("validation"));
    assert_eq!(
        scenario(&NEURAL.replace("x = 2.0", "x = 0.0")),
        Err(StStatus::DomainViolation)
    );
    assert!(last_error().starts_with("domain_violation"));

    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { st_scenario_from_toml(ptr::null(), &mut out) },
        StStatus::NullPointer
    );
    let bad = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { st_scenario_from_toml(bad.as_ptr().cast(), &mut out) },
        StStatus::InvalidUtf8
    );
    assert_eq!(
        unsafe { st_simulate(ptr::null(), &mut ptr::null_mut()) },
        StStatus::NullPointer
    );
    unsafe {
        assert_eq!(st_run_len(ptr::null()), 0);
        assert!(st_run_final_mu_error(ptr::null()).is_nan());
        assert!(st_run_report_json(ptr::null()).is_null());
        st_run_free(ptr::null_mut());
        st_scenario_free(ptr::null_mut());
        st_string_free(ptr::null_mut());
    }
}

#[test]
fn seeds_and_determinism() {
    let s = scenario(NEURAL).unwrap();
    unsafe {
        assert_eq!(st_scenario_set_seed(s, 42), StStatus::Ok);
        let dir = tempfile::tempdir().unwrap();
        let mut texts = Vec::new();
        for k in 0..2 {
            let mut run = ptr::null_mut();
            assert_eq!(st_simulate(s, &mut run), StStatus::Ok);
            let path = dir.path().join(format!("{k}.csv"));
            let cpath = CString::new(path.to_str().unwrap()).unwrap();
            assert_eq!(st_run_write_csv(run, cpath.as_ptr()), StStatus::Ok);
            let json = st_run_report_json(run);
            texts.push((
                std::fs::read(&path).unwrap(),
                CStr::from_ptr(json).to_bytes().to_vec(),
            ));
            st_string_free(json);
            st_run_free(run);
        }
        assert_eq!(texts[0], texts[1]);
        assert!(String::from_utf8_lossy(&texts[0].1).contains("\"seed\": 42"));
        st_scenario_free(s);
    }
}

#[test]
fn analysis_entry_points() {
    assert_eq!(st_positive_real_margin(4.0, 2.0), 0.0);
    let (mut l, mut r) = (0.0, 0.0);
    assert_eq!(
        unsafe { st_sector_identity(std::f64::consts::FRAC_PI_4, 2.0, &mut l, &mut r) },
        StStatus::Ok
    );
    assert!((l + 1.0).abs() < 1e-15 && (r + 1.0).abs() < 1e-15);

    let mut f = StFloquet::default();
    assert_eq!(unsafe { st_floquet(1.0, 1.0, 1.0, &mut f) }, StStatus::Ok);
    assert!(f.spectral_radius < 1.0);
    assert!((f.det - f.liouville_det).abs() < 1e-10);
    assert_eq!(
        unsafe { st_floquet(1.0, 1.0, 0.0, &mut f) },
        StStatus::Validation
    );

    let mut p = [0.0; 3];
    assert_eq!(
        unsafe { st_kyp_storage(1.0, 2.0, 0, p.as_mut_ptr()) },
        StStatus::Ok
    );
    assert!(p[0] > 0.0 && p[0] * p[2] > p[1] * p[1]);
    assert_eq!(
        unsafe { st_kyp_storage(8.0, 2.0, 0, p.as_mut_ptr()) },
        StStatus::Infeasible
    );
    assert!(last_error().starts_with("infeasible"));
}

#[test]
fn header_declares_every_export() {
    let header =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/selftune.h"))
            .unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15, "{exports:?}");
    for name in exports {
        assert!(
            header.contains(&format!("{name}(")),
            "{name} missing from header"
        );
    }
    assert!(header.contains("typedef struct StScenario StScenario;"));
}

/// Compile the C example against the static library and run it on a preset.
#[test]
fn c_client_links_and_runs() {
    use std::path::PathBuf;
    use std::process::Command;

    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let Ok(exe) = std::env::current_exe() else {
        return;
    };
    // target/<profile>/deps/<test binary>
    let profile_dir = exe.parent().and_then(|p| p.parent()).unwrap().to_path_buf();
    let lib = profile_dir.join("libselftune_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("examples/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin)
        .arg(manifest.join("../core/presets/neural-integrator.toml"))
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let mu: f64 = text
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("final_mu="))
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| panic!("{text}"));
    assert!((mu - 0.5).abs() < 1e-6, "{text}");
}
