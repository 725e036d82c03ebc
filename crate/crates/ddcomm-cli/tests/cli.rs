use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ddcomm"))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("ddcomm-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

#[test]
fn unknown_key_exits_2_and_writes_nothing() {
    let d = scratch("badkey");
    let cfg = d.join("c.toml");
    std::fs::write(&cfg, "[grid]\nm = 8\nbogus = 1\n").unwrap();
    let out = d.join("out");
    let o = run(&["basis", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
    assert!(!out.exists());
}

#[test]
fn invalid_value_names_key_and_line() {
    let d = scratch("badval");
    let cfg = d.join("c.toml");
    std::fs::write(&cfg, "[channel]\npaths = 2\nl_max = 40.0\n").unwrap();
    let o = run(&["ber", "--config", cfg.to_str().unwrap(), "--out", d.join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("channel.l_max") && err.contains("line 3"), "{err}");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["nonsense"]).status.code(), Some(2));
    assert_eq!(run(&["basis", "--threads", "x"]).status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_4() {
    let d = scratch("io");
    let blocker = d.join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = run(&["basis", "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn ber_csv_has_expected_columns_and_manifest() {
    let d = scratch("ber");
    let cfg = d.join("c.toml");
    std::fs::write(&cfg, "[sweep]\nframes = 2\nsnr_db = [8.0, 16.0]\n").unwrap();
    let out = d.join("o");
    let o = run(&["ber", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("ber.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "scheme,snr_db,value,stderr,n_trials,bit_errors,bits");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    for r in &rows {
        let v: f64 = r[2].parse().unwrap();
        assert!((0.0..=1.0).contains(&v));
        assert_eq!(r[4], "2");
    }
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["subcommand"], "ber");
    assert_eq!(m["seed"], 3);
    assert_eq!(m["config"]["channel"]["seed"], 3);
    assert!(m["files"].as_array().unwrap().iter().any(|f| f["name"] == "ber.csv"));
}

#[test]
fn json_format_and_selftest_pass() {
    let d = scratch("json");
    let out = d.join("o");
    let o = run(&["selftest", "--format", "json", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("selftest.json")).unwrap()).unwrap();
    let pass_col = t["columns"].as_array().unwrap().iter().position(|c| c == "pass").unwrap();
    for row in t["rows"].as_array().unwrap() {
        assert_eq!(row[pass_col], true, "{row}");
    }
}

#[test]
fn every_subcommand_runs_on_a_small_grid() {
    let d = scratch("all");
    let cfg = d.join("c.toml");
    std::fs::write(
        &cfg,
        "[grid]\nm = 8\nn = 8\n[channel]\npaths = 3\nl_max = 3.0\nk_max = 2.0\n[modem]\ncp_len = 3\n\
         [sweep]\nframes = 1\nsnr_db = [10.0]\n[psd]\nframes = 8\nnfft = 256\noverlap = 128\n\
         [ambiguity]\ntau_points = 17\nnu_points = 17\n",
    )
    .unwrap();
    for cmd in ["ambiguity", "basis", "channel-matrix", "ber", "capacity", "psd"] {
        let out = d.join(cmd);
        let o = run(&[cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(out.join("manifest.json").exists());
    }
}
