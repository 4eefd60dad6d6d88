use std::path::Path;
use std::process::{Command, Output};

fn sramflip(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sramflip"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

#[test]
fn estimate_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = sramflip(&["estimate", "--dv", "41mV", "--method", "nobile"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["method"], "nobile");
    assert!(v["mttf"].as_f64().unwrap() > 0.0);
    assert_eq!(v["inputs"]["primary"], "sigma_vv,tau");
}

#[test]
fn extract_and_simulate_write_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let out = sramflip(&["extract", "--dv", "0.042", "--out", "d.csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("d.csv")).unwrap();
    assert!(csv.starts_with("# params_hash="));
    assert!(csv.lines().nth(1).unwrap() == "vv_mV,h_mV_per_us,U_V2_per_s");
    assert!(dir.path().join("d.csv.meta.json").exists());

    let out = sramflip(
        &["simulate", "--dv", "42mV", "--mode", "2d", "--n", "10", "--seed", "4", "--out", "e.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ens = std::fs::read_to_string(dir.path().join("e.csv")).unwrap();
    assert_eq!(ens.lines().count(), 11);
    assert_eq!(ens.lines().next().unwrap(), "path_index,ttf_s,censored");
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("e.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 4);
    assert_eq!(meta["mode"], "full-2d");
    assert_eq!(meta["dt"].as_f64().unwrap(), 2.5e-11);
}

#[test]
fn sweep_then_report() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.cfg"),
        "sweep.dv_start = 42mV\nsweep.dv_stop = 43mV\nmc.n_paths = 200\nmc.n_paths_2d = 10\noutput.dir = res\n",
    )
    .unwrap();
    let out = sramflip(&["sweep", "--config", "run.cfg"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let res = dir.path().join("res");
    for f in ["report.csv", "mttf_vs_dv.csv", "report.txt", "config.txt", "timings.json"] {
        assert!(res.join(f).exists(), "{f}");
    }
    let plot = std::fs::read(res.join("mttf_vs_dv.csv")).unwrap();
    std::fs::remove_file(res.join("mttf_vs_dv.csv")).unwrap();
    let out = sramflip(&["report", "--in", "res/report.csv"], dir.path());
    assert!(out.status.success());
    assert_eq!(std::fs::read(res.join("mttf_vs_dv.csv")).unwrap(), plot);
    assert!(String::from_utf8_lossy(&out.stdout).contains("kish/mc1d"));
}

#[test]
fn failures_give_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.cfg"), "sweep.dv_step = 0\n").unwrap();
    let out = sramflip(&["sweep", "--config", "bad.cfg"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sweep.dv_step"));

    std::fs::write(
        dir.path().join("quiet.cfg"),
        "cell.noise_scale = 0\nsweep.dv_start = 41mV\nsweep.dv_stop = 41mV\nestimators.methods = kish\n",
    )
    .unwrap();
    let out = sramflip(&["sweep", "--config", "quiet.cfg", "--out", "q"], dir.path());
    assert!(!out.status.success());
    assert!(dir.path().join("q/report.csv").exists());

    let out = sramflip(&["estimate", "--dv", "60mV", "--method", "kish"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("monostable"));
}
