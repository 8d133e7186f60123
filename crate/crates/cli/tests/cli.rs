use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn locality(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_locality"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Value of a `# key=value` summary line.
fn summary(text: &str, key: &str) -> String {
    let prefix = format!("# {key}=");
    text.lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no {key} in\n{text}"))
        .to_string()
}

fn num(text: &str, key: &str) -> f64 {
    summary(text, key).parse().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.display().to_string()
}

#[test]
fn mermin_examples() {
    let o = locality(&["mermin", "--distribution", "nonconstant"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!((num(&text, "p_agree_overall") - 5.0 / 9.0).abs() < 1e-12);
    assert!((num(&text, "quantum_p_agree_overall") - 0.5).abs() < 1e-12);
    assert_eq!(summary(&text, "bound_satisfied"), "true");

    let text = stdout(&locality(&["mermin", "--distribution", "point:RRR"]));
    assert_eq!(num(&text, "p_agree_overall"), 1.0);
}

#[test]
fn bad_distribution_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.cfg",
        "model=mermin\np[RRR]=0.5\np[GGG]=0.4\n",
    );
    let o = locality(&["mermin", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sum"));
}

#[test]
fn config_file_table_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "m.cfg",
        "# two sets\nmodel=mermin\np[RRG]=0.5\np[GGG]=0.5\n",
    );
    let text = stdout(&locality(&["mermin", "--config", &cfg]));
    assert!((num(&text, "p_agree_overall") - (0.5 * 5.0 / 9.0 + 0.5)).abs() < 1e-12);
}

#[test]
fn unknown_key_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.cfg", "b_convention=aligned\nfrobnicate=3\n");
    let o = locality(&["clock", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("frobnicate"));
    assert_eq!(
        locality(&["clock", "--set", "nope=1"]).status.code(),
        Some(1)
    );
    assert_eq!(
        locality(&["propagate", "--seed", "3"]).status.code(),
        Some(1)
    );
}

#[test]
fn flags_override_file_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.cfg", "b_convention=aligned\ngrid_n=600\n");
    let text = stdout(&locality(&["clock", "--config", &cfg]));
    assert_eq!(summary(&text, "b_convention"), "aligned");
    assert_eq!(summary(&text, "grid_n"), "600");
    let text = stdout(&locality(&[
        "clock",
        "--config",
        &cfg,
        "--b-convention",
        "anti_aligned",
        "--set",
        "grid_n=900",
    ]));
    assert_eq!(summary(&text, "b_convention"), "anti_aligned");
    assert_eq!(summary(&text, "grid_n"), "900");
}

#[test]
fn clock_reports_both_conventions() {
    let text = stdout(&locality(&["clock", "--n", "20000", "--seed", "1"]));
    assert!((num(&text, "p_agree_differing_anti_aligned") - 2.0 / 3.0).abs() < 1e-3);
    assert!((num(&text, "p_agree_differing_aligned") - 1.0 / 3.0).abs() < 1e-3);
    let mc = num(&text, "mc_p_agree_differing_anti_aligned");
    let se = num(&text, "mc_stderr_anti_aligned");
    assert!((mc - 2.0 / 3.0).abs() < 4.0 * se);
    // 9 exact rows and 9 Monte Carlo rows
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 19);
}

#[test]
fn chsh_examples() {
    let text = stdout(&locality(&["chsh", "--model", "clock", "--exact"]));
    assert_eq!(summary(&text, "within_local_bound"), "true");
    assert!(num(&text, "abs_s") <= 2.0 + 1e-9);
    for key in ["a", "a_prime", "b", "b_prime"] {
        assert!(summary(&text, key).starts_with('i'));
    }

    let text = stdout(&locality(&[
        "chsh",
        "--oracle",
        "--angles",
        "0,1.5708,0.7854,2.3562",
    ]));
    assert!((num(&text, "abs_s") - 2.82843).abs() < 1e-4);
    assert_eq!(summary(&text, "within_local_bound"), "false");

    let o = locality(&["chsh", "--model", "mermin", "--angles", "0,1,2,3"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bell_reports_violation_only_for_the_oracle() {
    let text = stdout(&locality(&["bell", "--oracle"]));
    assert_eq!(summary(&text, "violated"), "true");
    let text = stdout(&locality(&[
        "bell",
        "--model",
        "clock",
        "--angles",
        "0,1.5708,0.7854,2.3562",
    ]));
    assert_eq!(summary(&text, "satisfied"), "true");
    // lhs 2 against both right-hand sides 2: on the boundary
    let text = stdout(&locality(&["bell", "--values", "1,-1,0,0"]));
    assert_eq!(summary(&text, "satisfied"), "true");
    assert_eq!(num(&text, "lhs"), 2.0);
    let text = stdout(&locality(&["bell", "--values", "1,-1,1,1"]));
    assert_eq!(summary(&text, "violated"), "true");
}

#[test]
fn one_slice_propagator_row_is_exact() {
    let text = stdout(&locality(&["propagate", "--kind", "free", "--slices", "1"]));
    let row = text.lines().nth(1).unwrap();
    assert_eq!(row, "1,2048,0.0000000000000000e0,0.0000000000000000e0");
    assert_eq!(summary(&text, "support_warning"), "false");
}

#[test]
fn caustic_is_a_domain_error() {
    let o = locality(&[
        "propagate",
        "--kind",
        "harmonic",
        "--set",
        "t=3.141592653589793",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn json_mirrors_csv() {
    let csv = stdout(&locality(&["clock", "--n", "500", "--seed", "2"]));
    let json: serde_json::Value = serde_json::from_str(&stdout(&locality(&[
        "clock", "--n", "500", "--seed", "2", "--format", "json",
    ])))
    .unwrap();
    let rows = json["rows"].as_array().unwrap();
    let csv_rows: Vec<&str> = csv
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .collect();
    assert_eq!(rows.len(), csv_rows.len());
    for (j, c) in rows.iter().zip(csv_rows) {
        let fields: Vec<&str> = c.split(',').collect();
        assert_eq!(j["setting_a"], fields[0]);
        assert_eq!(
            j["mean"].as_f64().unwrap(),
            fields[2].parse::<f64>().unwrap()
        );
        match j["stderr"].as_f64() {
            Some(x) => assert_eq!(x, fields[3].parse::<f64>().unwrap()),
            None => assert_eq!(fields[3], ""),
        }
    }
    assert_eq!(json["summary"]["seed"], 2);
}

#[test]
fn seeded_output_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let st = Command::new(env!("CARGO_BIN_EXE_locality"))
            .args(["mermin", "--n", "3000", "--seed", "17", "--out"])
            .arg(p)
            .status()
            .unwrap();
        assert!(st.success());
    }
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn oracle_kinds() {
    let text = stdout(&locality(&[
        "oracle", "--kind", "singlet", "--angles", "0,0",
    ]));
    assert_eq!(text.lines().nth(1).unwrap(), "E,-1.0000000000000000e0");
    let text = stdout(&locality(&[
        "oracle",
        "--kind",
        "rt",
        "--angles",
        "0,3.141592653589793",
    ]));
    let v: f64 = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!(v.abs() < 1e-12);
    assert_eq!(
        locality(&["oracle", "--kind", "nope"]).status.code(),
        Some(1)
    );
}

#[test]
fn help_names_the_quantity() {
    let text = stdout(&locality(&["chsh", "--help"]));
    assert!(text.contains("E(a,b) + E(a',b) + E(a',b') - E(a,b')"));
    let text = stdout(&locality(&["rt", "--help"]));
    assert!(text.contains("(1 + cos(phi_a + phi_b))/2"));
    assert_eq!(locality(&["chsh", "--bogus"]).status.code(), Some(1));
}

fn spawn_wing(id: &str) -> (std::process::Child, String) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_locality"))
        .args([
            "wing",
            "--wing",
            id,
            "--model",
            "mermin",
            "--listen",
            "127.0.0.1:0",
        ])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on ")
        .unwrap()
        .to_string();
    (child, addr)
}

#[test]
fn zero_trial_run_is_valid_and_empty() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("empty.log");
    let (wa, addr_a) = spawn_wing("A");
    let (wb, addr_b) = spawn_wing("B");
    let o = Command::new(env!("CARGO_BIN_EXE_locality"))
        .args([
            "source", "--model", "mermin", "--wing-a", &addr_a, "--wing-b", &addr_b, "--n", "0",
            "--log",
        ])
        .arg(&log)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    wa.wait_with_output().unwrap();
    wb.wait_with_output().unwrap();
    let text = stdout(&o);
    assert_eq!(
        text.lines().next().unwrap(),
        "setting_a,setting_b,mean,stderr,n,exact"
    );
    assert_eq!(summary(&text, "n_trials"), "0");
    let body = std::fs::read_to_string(&log).unwrap();
    assert!(!body.contains("type=lambda"));
    assert_eq!(body.lines().filter(|l| l.contains("type=hello")).count(), 4);

    let a = locality(&["audit", log.to_str().unwrap()]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(summary(&stdout(&a), "clean"), "true");
}

#[test]
fn point_mass_distributed_run_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "m.cfg", "model=mermin\np[RGG]=1\n");
    let log = dir.path().join("pm.log");
    let spawn = |id: &str| {
        let mut child = Command::new(env!("CARGO_BIN_EXE_locality"))
            .args([
                "wing",
                "--wing",
                id,
                "--config",
                &cfg,
                "--listen",
                "127.0.0.1:0",
                "--policy",
                "i1",
            ])
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stderr.take().unwrap())
            .read_line(&mut line)
            .unwrap();
        (
            child,
            line.trim()
                .strip_prefix("listening on ")
                .unwrap()
                .to_string(),
        )
    };
    let (mut wa, addr_a) = spawn("A");
    let (mut wb, addr_b) = spawn("B");
    let o = Command::new(env!("CARGO_BIN_EXE_locality"))
        .args([
            "source", "--config", &cfg, "--wing-a", &addr_a, "--wing-b", &addr_b, "--n", "100",
            "--log",
        ])
        .arg(&log)
        .output()
        .unwrap();
    assert!(o.status.success());
    wa.wait().unwrap();
    wb.wait().unwrap();
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[..3], &["i1", "i1", "1.0000000000000000e0"]);
    assert_eq!(row[4], "100");

    let merged = locality(&["audit", "--merge", log.to_str().unwrap()]);
    assert_eq!(merged.status.code(), Some(0));
    assert!(stdout(&merged).starts_with(&text.lines().take(2).collect::<Vec<_>>().join("\n")));
}
