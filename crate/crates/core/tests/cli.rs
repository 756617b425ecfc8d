use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cpmcmc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpmcmc"))
        .args(args)
        .arg("--config")
        .arg(dir.join("run.toml"))
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

#[test]
fn full_pipeline_on_the_constant_model() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "seed = 1\n[model]\nname = \"constant\"\nlog_value = -3.0\ndim = 2\n\
         [adapt]\nparticles = 40\n[run]\nparticles = 4\nrho = 1.0\nreplicates = 3\nl = 15\n",
    )
    .unwrap();
    let adapt = cpmcmc(dir.path(), &["adapt"]);
    assert_eq!(adapt.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&adapt.stdout).contains("S = 0"));
    let first = fs::read(dir.path().join("out/schedule.json")).unwrap();
    cpmcmc(dir.path(), &["adapt"]);
    assert_eq!(fs::read(dir.path().join("out/schedule.json")).unwrap(), first);

    let run = cpmcmc(dir.path(), &["run", "--workers", "2"]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).contains("tau =    1: 3"));
    for cmd in ["estimate", "diagnose"] {
        assert_eq!(cpmcmc(dir.path(), &[cmd]).status.code(), Some(0));
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["r_used"], 3);
    assert!(dir.path().join("out/variance_time.csv").exists());
    assert!(dir.path().join("out/diagnostics.json").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), "[model]\nname = \"nonsense\"\n").unwrap();
    let bad = cpmcmc(dir.path(), &["adapt"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line"));

    fs::write(
        dir.path().join("run.toml"),
        "[model]\nname = \"conjugate\"\ndata = [[0.1], [0.4]]\n[adapt]\nparticles = 50\n",
    )
    .unwrap();
    assert_eq!(cpmcmc(dir.path(), &["estimate"]).status.code(), Some(2));

    // A budget far below one outer step leaves every replicate partial.
    fs::write(
        dir.path().join("run.toml"),
        "[model]\nname = \"conjugate\"\ndata = [[0.1], [0.4]]\n[adapt]\nparticles = 50\n\
         [run]\nparticles = 64\nl = 100000\nreplicates = 2\ntime_budget_seconds = 0.000001\n",
    )
    .unwrap();
    assert_eq!(cpmcmc(dir.path(), &["adapt"]).status.code(), Some(0));
    let run = cpmcmc(dir.path(), &["run"]);
    assert_eq!(run.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&run.stdout).contains("incomplete: 2"));
    assert_eq!(cpmcmc(dir.path(), &["estimate"]).status.code(), Some(3));
}

#[test]
fn synthetic_ggm_then_adapt() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "seed = 3\n[model]\nname = \"ggm\"\ndata = \"out/ggm_data.csv\"\n[adapt]\nparticles = 40\n\
         [synth_ggm]\np = 3\nn = 20\n",
    )
    .unwrap();
    let synth = cpmcmc(dir.path(), &["synth-ggm"]);
    assert_eq!(synth.status.code(), Some(0));
    let adapt = cpmcmc(dir.path(), &["adapt", "--seed", "9"]);
    assert_eq!(
        adapt.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&adapt.stderr)
    );
    let schedule: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/schedule.json")).unwrap()).unwrap();
    assert_eq!(schedule["seed"], 9);
    assert_eq!(schedule["model"], "ggm");
}
