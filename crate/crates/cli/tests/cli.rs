use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lkgd(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lkgd"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn velocity_class_of_the_vertical_edge() {
    let dir = tempfile::tempdir().unwrap();
    let o = lkgd(dir.path(), &["velocity-class", "--v", "0,6"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("V2"));
    let v = json(dir.path().join("velocity-class/velocity_class.json"));
    assert_eq!(v["class"], "V2");
    let found = v["witnesses"].as_array().unwrap().iter().any(|w| {
        let c = w["location"]["coordinates"].as_array().unwrap();
        let (x, y) = (c[0].as_f64().unwrap(), c[1].as_f64().unwrap());
        x.abs() < 1e-9 && (y - std::f64::consts::FRAC_PI_2).abs() < 1e-9
    });
    assert!(found, "{v}");
    let m = json(dir.path().join("velocity-class/manifest.json"));
    assert_eq!(m["command"], "velocity-class");
    assert!(m["wall_time_seconds"].as_f64().is_some());
}

#[test]
fn appendix_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = lkgd(dir.path(), &["verify-appendix", "--resolution", "512"]);
    assert!(o.status.success());
    let table = std::fs::read_to_string(dir.path().join("verify-appendix/verdicts.txt")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].contains("solvable"));
    assert!(lines[1].contains("no solution found") || lines[1].contains("no-solution-found"), "{}", lines[1]);
    assert!(lines[2].contains("no solution found") || lines[2].contains("no-solution-found"), "{}", lines[2]);
}

#[test]
fn chain_decay_artifacts_and_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--threads", "1", "kernel-decay", "--preset", "chain1d", "--t", "64..1024"];
    assert!(lkgd(a.path(), &args).status.success());
    assert!(lkgd(b.path(), &args).status.success());
    let csv_a = std::fs::read(a.path().join("kernel-decay/kernel_decay.csv")).unwrap();
    let csv_b = std::fs::read(b.path().join("kernel-decay/kernel_decay.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
    assert!(String::from_utf8_lossy(&csv_a).starts_with("t,value,N,method\n"));
    let fit = json(a.path().join("kernel-decay/kernel_decay_fit.json"));
    assert!((fit["exponent"].as_f64().unwrap() + 1.0 / 3.0).abs() < 0.03);
    assert!(a.path().join("kernel-decay/kernel_decay.gp").exists());
    let fit_b = std::fs::read(b.path().join("kernel-decay/kernel_decay_fit.json")).unwrap();
    assert_eq!(std::fs::read(a.path().join("kernel-decay/kernel_decay_fit.json")).unwrap(), fit_b);
}

#[test]
fn thread_count_does_not_change_numbers() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let common = ["region-decay", "--v", "5.196152422706632,0", "--t", "64..256", "--envelope", "2"];
    let mut one = vec!["--threads", "1"];
    one.extend(common);
    let mut three = vec!["--threads", "3"];
    three.extend(common);
    assert!(lkgd(a.path(), &one).status.success());
    assert!(lkgd(b.path(), &three).status.success());
    let read = |p: &Path| -> Vec<f64> {
        std::fs::read_to_string(p.join("region-decay/region_decay.csv"))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect()
    };
    for (x, y) in read(a.path()).iter().zip(read(b.path())) {
        assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-300), "{x} vs {y}");
    }
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_lkgd"))
        .env("LKGD_OUTPUT_DIR", dir.path())
        .args(["newton", "--point", "0,1.5707963267948966"])
        .output()
        .unwrap();
    assert!(o.status.success());
    let v = json(dir.path().join("newton/newton.json"));
    assert_eq!(v["report"]["distance"], "6/5");
    assert!(dir.path().join("newton/newton.svg").exists());
}

#[test]
fn dnls_run_with_dump() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "preset = lkg3d\nbox = 16, 16, 8\ninitial = gaussian\namplitude = 0.1\ndt = 0.05\nt_final = 2\nstride = 4\n",
    )
    .unwrap();
    let o = lkgd(dir.path(), &["dnls", "--config", cfg.to_str().unwrap(), "--dump"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let side = json(dir.path().join("dnls/final_field.json"));
    assert_eq!(side["box"], serde_json::json!([16, 16, 8]));
    assert_eq!(side["sign"], "plus");
    let bin = std::fs::metadata(dir.path().join("dnls/final_field.bin")).unwrap();
    assert_eq!(bin.len(), 16 * 16 * 8 * 16);
    let rep = json(dir.path().join("dnls/strichartz.json"));
    let first = &rep.as_array().unwrap()[0];
    assert_eq!(first["q"], "inf");
    assert!((first["ratio"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    let norms = std::fs::read_to_string(dir.path().join("dnls/norms.csv")).unwrap();
    assert!(norms.starts_with("t,l2,l4,linf"));
}

#[test]
fn rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!lkgd(dir.path(), &["no-such-command"]).status.success());
    let o = lkgd(dir.path(), &["kernel-decay", "--preset", "hexagonal"]);
    assert_eq!(o.status.code(), Some(2));
    let o = lkgd(dir.path(), &["dnls", "--pairs", "2:2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn single_acceptance_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let o = lkgd(dir.path(), &["all-acceptance", "--only", "2"]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(dir.path().join("all-acceptance/acceptance.txt")).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.contains("PASS"));
}
