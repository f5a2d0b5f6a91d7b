use std::path::Path;
use std::process::{Command, Output};

fn qsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsim")).args(args).env("QSIM_THREADS", "1").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path(dir: &tempfile::TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn field(out: &str, key: &str) -> f64 {
    let line = out.lines().find(|l| l.starts_with(&format!("{key}: "))).unwrap_or_else(|| panic!("no {key} in {out}"));
    line[key.len() + 2..].split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn help_on_every_subcommand_lists_flags() {
    let expect: &[(&str, &[&str])] = &[
        ("gen", &["--family", "--n", "--seed", "--noise", "--out"]),
        ("train", &["--data", "--out", "--seed", "--epochs"]),
        ("eval", &["--model", "--data", "--report", "--noise"]),
        ("vqe", &["--qubits", "--backend", "--model", "--naive-inversion", "--report"]),
        ("grover", &["--backend", "--model", "--noise", "--report"]),
        ("sim3q", &["--in", "--backend", "--model", "--naive-inversion", "--out"]),
        ("tomo", &["--in", "--out", "--shots", "--seed"]),
        ("plotdata", &["--in", "--out"]),
    ];
    for (cmd, flags) in expect {
        let o = qsim(&[cmd, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{cmd}");
        let text = stdout(&o);
        for f in *flags {
            assert!(text.contains(f), "{cmd} --help lacks {f}");
        }
    }
    assert_eq!(qsim(&["--help"]).status.code(), Some(0));
}

#[test]
fn exit_codes() {
    assert_eq!(qsim(&[]).status.code(), Some(1));
    assert_eq!(qsim(&["gen", "--family", "1q", "--n", "5", "--bogus"]).status.code(), Some(1));
    assert_eq!(qsim(&["gen", "--family", "3q", "--n", "5", "--out", "x"]).status.code(), Some(1));
    assert_eq!(qsim(&["gen", "--family", "1q", "--n", "5", "--noise", "gamma=2", "--out", "x"]).status.code(), Some(1));
    assert_eq!(qsim(&["vqe", "--backend", "surrogate"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let missing = path(&dir, "missing.jsonl");
    assert_eq!(qsim(&["train", "--data", &missing, "--out", &path(&dir, "m.bin")]).status.code(), Some(2));
    assert_eq!(qsim(&["tomo", "--in", &missing, "--out", &path(&dir, "r.json")]).status.code(), Some(2));
}

#[test]
fn gen_is_deterministic_and_prints_config() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (path(&dir, "a.jsonl"), path(&dir, "b.jsonl"));
    let oa = qsim(&["gen", "--family", "1q", "--n", "7000", "--seed", "42", "--out", &a]);
    let ob = qsim(&["gen", "--family", "1q", "--n", "7000", "--seed", "42", "--out", &b]);
    assert_eq!(oa.status.code(), Some(0));
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 7001);
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let sa = stdout(&oa).replace(&a, "OUT");
    assert_eq!(sa, stdout(&ob).replace(&b, "OUT"));
    assert!(sa.starts_with("config: {\"command\":\"gen\""));
    assert!(sa.contains("\nseed: 42\n"));
}

#[test]
fn vqe_exact_two_qubit() {
    let o = qsim(&["vqe", "--qubits", "2", "--backend", "exact"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!((field(&out, "final_energy") + 3.0).abs() < 1e-3);
    assert_eq!(out, stdout(&qsim(&["vqe", "--qubits", "2", "--backend", "exact"])));
}

#[test]
fn grover_report_and_plotdata() {
    let dir = tempfile::tempdir().unwrap();
    let report = path(&dir, "g.csv");
    let o = qsim(&["grover", "--backend", "exact", "--report", &report]);
    assert_eq!(o.status.code(), Some(0));
    assert!((field(&stdout(&o), "p(11)") - 1.0).abs() < 1e-6);
    let csv = std::fs::read_to_string(&report).unwrap();
    assert!(csv.starts_with("state,probability\n"));
    let plot = path(&dir, "g.dat");
    assert_eq!(qsim(&["plotdata", "--in", &report, "--out", &plot]).status.code(), Some(0));
    let dat = std::fs::read_to_string(&plot).unwrap();
    assert!(dat.starts_with("# state probability\n00 "));
}

#[test]
fn tomo_round_trip_on_bell_state() {
    let dir = tempfile::tempdir().unwrap();
    let h = 0.5;
    let mut entries = vec![[0.0, 0.0]; 16];
    for (r, c) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
        entries[r * 4 + c] = [h, 0.0];
    }
    let bell = serde_json::json!({ "n_qubits": 2, "entries": entries });
    let state = path(&dir, "bell.json");
    std::fs::write(&state, bell.to_string()).unwrap();
    let probs = path(&dir, "probs.json");
    assert_eq!(qsim(&["tomo", "--from-state", &state, "--out", &probs]).status.code(), Some(0));
    let rho = path(&dir, "rho.json");
    let o = qsim(&["tomo", "--in", &probs, "--out", &rho]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&rho).unwrap()).unwrap();
    let got = v["entries"].as_array().unwrap();
    for (g, e) in got.iter().zip(&entries) {
        assert!((g[0].as_f64().unwrap() - e[0]).abs() < 1e-9 && (g[1].as_f64().unwrap() - e[1]).abs() < 1e-9);
    }
}

#[test]
fn train_eval_and_sim3q() {
    let dir = tempfile::tempdir().unwrap();
    let data = path(&dir, "d.jsonl");
    assert_eq!(qsim(&["gen", "--family", "1q-noisy", "--n", "200", "--out", &data]).status.code(), Some(0));
    let model = path(&dir, "m.bin");
    let args = ["train", "--data", &data, "--out", &model, "--epochs", "2", "--d-model", "16", "--d-ff", "32"];
    let o = qsim(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let first = std::fs::read(&model).unwrap();
    assert_eq!(qsim(&args).status.code(), Some(0));
    assert_eq!(first, std::fs::read(&model).unwrap());
    let report = path(&dir, "f.csv");
    let o = qsim(&["eval", "--model", &model, "--n", "50", "--report", &report]);
    assert_eq!(o.status.code(), Some(0));
    let f = field(&stdout(&o), "mean_fidelity");
    assert!((0.0..=1.0).contains(&f));
    assert!(Path::new(&report).exists());

    let layers = serde_json::json!([
        { "pair": [0, 1], "angles": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6], "cnot_direction": "A" },
        { "pair": [2, 1], "angles": [1.1, 1.2, 1.3, 1.4, 1.5, 1.6], "cnot_direction": "B" }
    ]);
    let circ = path(&dir, "c.json");
    std::fs::write(&circ, layers.to_string()).unwrap();
    let rho = path(&dir, "rho3.json");
    let o = qsim(&["sim3q", "--in", &circ, "--out", &rho]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!((field(&stdout(&o), "min_fidelity") - 1.0).abs() < 1e-6);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&rho).unwrap()).unwrap();
    assert_eq!(v["n_qubits"], 3);
}
