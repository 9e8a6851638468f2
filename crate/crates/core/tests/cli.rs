use std::path::Path;
use std::process::{Command, Output};

fn regboot(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_regboot"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn config(observable: &str, extra: &str) -> String {
    format!(
        r#"{{
            "kernel": {{"variant": "finite_order", "order": 1, "table": [[0.7, 0.3], [0.3, 0.7]]}},
            "observable": {observable}, "mode": "markov", "k": 3, "m": 200, "B": 500, "seed": 3{extra}
        }}"#
    )
}

#[test]
fn window_prints_interval() {
    let dir = tempfile::tempdir().unwrap();
    let out = regboot(dir.path(), &["window", "--delta", "0.45", "--c", "15"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("window (3.99254, 14.20149)"));

    let out = regboot(dir.path(), &["window", "--delta", "0.3", "--c", "inf"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("window (6.01986, inf)"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(regboot(p, &["clt-check", "--config", "missing.json"]).status.code(), Some(1));
    assert_eq!(regboot(p, &["no-such-command"]).status.code(), Some(1));
    assert_eq!(regboot(p, &["--help"]).status.code(), Some(0));

    std::fs::write(p.join("constant.json"), config("[1, 1]", "")).unwrap();
    assert_eq!(regboot(p, &["clt-check", "--config", "constant.json"]).status.code(), Some(2));

    let capped = config("[0, 1]", r#", "caps": {"max_trajectory": 300}"#);
    std::fs::write(p.join("capped.json"), capped).unwrap();
    assert_eq!(regboot(p, &["blocks", "--config", "capped.json"]).status.code(), Some(3));

    std::fs::write(p.join("bad.json"), "{\"kernel\": 1}").unwrap();
    assert_eq!(regboot(p, &["simulate", "--config", "bad.json"]).status.code(), Some(1));
    std::fs::write(p.join("ok.json"), config("[0, 1]", "")).unwrap();
    assert_eq!(regboot(p, &["--threads", "0", "simulate", "--config", "ok.json"]).status.code(), Some(1));
}

#[test]
fn subcommands_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let outputs = r#", "output": {"csv": "out.csv", "json": "out.json"}, "bounds": {"replicates": 10000, "t_grid": [1, 2], "m_grid": [20, 40], "scaling_replicates": 20}, "coupling": {"k_grid": [1, 2], "replicates": 1000, "horizon": 3}"#;
    std::fs::write(p.join("c.json"), config("[0, 1]", outputs)).unwrap();
    let headers = [
        ("simulate", "symbol"),
        ("blocks", "index,start,length,z"),
        ("bootstrap", "statistic"),
        ("clt-check", "statistic"),
        ("bounds-check", "t,empirical,se,bound,violation"),
        ("coupling-check", "k,single_rate"),
    ];
    for (command, header) in headers {
        let out = regboot(p, &[command, "--config", "c.json", "--seed", "9"]);
        assert_eq!(out.status.code(), Some(0), "{command}: {}", String::from_utf8_lossy(&out.stderr));
        let csv = std::fs::read_to_string(p.join("out.csv")).unwrap();
        assert!(csv.starts_with(header), "{command}: {}", &csv[..csv.len().min(80)]);
        let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p.join("out.json")).unwrap()).unwrap();
        assert_eq!(json["seed"], 9, "{command}");
    }
}
