use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_svc-cache"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn header_carries_hash_and_seed() {
    let o = run(&["baselines", "--seed", "42"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let first = text.lines().next().unwrap();
    assert!(first.starts_with("# config_hash="), "{first}");
    assert!(first.ends_with(",master_seed=42"), "{first}");
    let hash = &first["# config_hash=".len()..first.find(',').unwrap()];
    assert_eq!(hash.len(), 64);

    let other = stdout(&run(&["baselines", "--seed", "43"]));
    assert_ne!(other.lines().next().unwrap(), first);
}

#[test]
fn validate_is_byte_identical_and_writes_out() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let args = |p: &Path| {
        vec![
            "validate".to_string(),
            "--trials".into(),
            "400".into(),
            "--sweep".into(),
            "p=0:1:3".into(),
            "--out".into(),
            p.to_str().unwrap().into(),
        ]
    };
    let oa = bin().args(args(&a)).output().unwrap();
    let ob = bin().args(args(&b)).output().unwrap();
    assert_eq!(oa.status.code(), ob.status.code());
    assert!(matches!(oa.status.code(), Some(0) | Some(3)));
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    let text = String::from_utf8(ta).unwrap();
    let mut lines = text.lines();
    lines.next();
    assert_eq!(
        lines.next().unwrap(),
        "quantity,sweep_var,value,analytic,mc_mean,mc_stderr,trials,pass"
    );
    assert!(text.contains("stp_cache_tier_d2d,p,0,0,NA,NA,0,NA"));
    assert!(oa.stdout.is_empty());
}

#[test]
fn gate_failure_exits_three() {
    // One trial per estimate has zero standard error, so any deviation fails.
    let o = run(&["validate", "--trials", "1", "--sweep", "theta_db=5:5:1"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains(",fail"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("unknown.toml", "[radio]\nsir_threshold = 5.0\n"),
        ("radii.toml", "tiers.d2d.serving_radius = 80.0\n"),
        ("layers.toml", "content.layer_count = 1\n"),
        ("syntax.toml", "content.file_count = \n"),
    ];
    for (name, text) in cases {
        let path = write(dir.path(), name, text);
        let o = run(&["optimize", "--config", &path]);
        assert_eq!(o.status.code(), Some(2), "{name}");
        assert!(!o.stderr.is_empty());
    }
    for sweep in ["nope=1:2:3", "theta_db=1:2", "p=0:1:5"] {
        assert_eq!(
            run(&["optimize", "--sweep", sweep]).status.code(),
            Some(2),
            "{sweep}"
        );
    }
    assert_eq!(
        run(&["baselines", "--config", "/no/such/file.toml"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(run(&["validate", "--trials", "0"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn delay_surface_grid() {
    let start = std::time::Instant::now();
    let o = run(&["delay-surface"]);
    assert!(o.status.success());
    assert!(start.elapsed().as_secs() < 60);
    let text = stdout(&o);
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(2)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 21 * 21);
    // Row-major over p_d then p_s; delay must not rise along either axis.
    for i in 0..21 {
        for j in 0..21 {
            let d = rows[i * 21 + j][2];
            if i > 0 {
                assert!(d <= rows[(i - 1) * 21 + j][2]);
            }
            if j > 0 {
                assert!(d <= rows[i * 21 + j - 1][2]);
            }
        }
    }
}

#[test]
fn optimize_and_convergence_outputs() {
    let text = stdout(&run(&["optimize", "--sweep", "m_s=250e6:1000e6:4"]));
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(2)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 4);
    let col = |r: &Vec<&str>, k: usize| r[k].parse::<f64>().unwrap();
    for r in &rows {
        assert_eq!(r[0], "m_s");
        assert!(col(r, 2) <= col(r, 3) && col(r, 2) <= col(r, 4) && col(r, 2) <= col(r, 5));
    }
    assert!(rows.windows(2).all(|w| col(&w[1], 2) < col(&w[0], 2)));

    let conv = stdout(&run(&["convergence"]));
    let mut finals = std::collections::BTreeMap::new();
    for line in conv.lines().skip(2) {
        let f: Vec<&str> = line.split(',').collect();
        finals.insert(f[0].to_string(), f[3].parse::<f64>().unwrap());
    }
    assert_eq!(finals.len(), 3);
    assert!(finals["3"] < finals["5"] && finals["5"] < finals["7"]);
}

#[test]
fn template_round_trips() {
    let o = run(&["template"]);
    assert!(o.status.success());
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "t.toml", &stdout(&o));
    let from_file = stdout(&run(&["baselines", "--config", &path]));
    let builtin = stdout(&run(&["baselines"]));
    assert_eq!(from_file, builtin);
}
