use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_polaron");

fn golden(name: &str) -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("POLARON_CACHE_DIR")
        .output()
        .expect("spawn polaron")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Field-by-field CSV comparison: identical text for non-numeric fields,
/// relative `rel` for floats.
fn assert_csv_close(got: &str, want: &str, rel: f64) {
    let g: Vec<&str> = got.lines().collect();
    let w: Vec<&str> = want.lines().collect();
    assert_eq!(g.len(), w.len(), "line count\n{got}");
    assert_eq!(g[0], w[0], "header");
    for (lg, lw) in g.iter().zip(&w).skip(1) {
        let fg: Vec<&str> = lg.split(',').collect();
        let fw: Vec<&str> = lw.split(',').collect();
        assert_eq!(fg.len(), fw.len());
        for (a, b) in fg.iter().zip(&fw) {
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(x), Ok(y)) => assert!(
                    (x - y).abs() <= rel * y.abs().max(1e-300),
                    "{x} vs golden {y}\n{lg}\n{lw}"
                ),
                _ => assert_eq!(a, b, "{lg}\n{lw}"),
            }
        }
    }
}

#[test]
fn shells_table_matches_golden() {
    let o = run(&["shells", "--L", "6.2832", "--cutoff", "4"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), golden("shells.csv"));
    let rows: Vec<(u64, u32)> = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    assert_eq!(rows, vec![(0, 1), (1, 4), (2, 4), (4, 4)]);
}

#[test]
fn shells_zero_cutoff_and_missing_box() {
    let o = run(&["shells", "--cutoff", "0"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "n,energy,multiplicity\n0,0.0,1\n");
    let o = run(&["shells", "--cutoff", "4"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--L"));
}

#[test]
fn single_point_schema() {
    let o = run(&["solve", "--L", "6.283185307179586", "--mu", "1000"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(
        lines[0],
        "L,E_B,mu,mu_tilde,N,E0,e_p,lambda_shift,exact_shift,feasible,theorem_ratio,polaron_ratio"
    );
    assert_eq!(lines[1].split(',').count(), 12);
    // Same point through the alias and the dimensionless flags.
    let o2 = run(&["enclosure", "--mu-tilde", "1000", "--L-tilde", "6.283185307179586"]);
    assert_eq!(stdout(&o2), text);
}

#[test]
fn physical_units_scale_out() {
    // (L, E_B, mu) = (pi, -4, 400) is (L~, mu~) = (2 pi, 100).
    let a = run(&["solve", "--L", "3.141592653589793", "--E-B", "-4", "--mu", "400"]);
    let b = run(&["solve", "--mu-tilde", "100", "--L-tilde", "6.283185307179586"]);
    let row = |o: &Output| -> Vec<String> {
        stdout(o).lines().nth(1).unwrap().split(',').map(String::from).collect()
    };
    let (ra, rb) = (row(&a), row(&b));
    for (i, k) in [(5usize, 4.0), (6, 4.0), (7, 4.0), (8, 4.0), (10, 1.0), (11, 1.0)] {
        let x: f64 = ra[i].parse().unwrap();
        let y: f64 = rb[i].parse().unwrap();
        assert!((x - k * y).abs() <= 1e-12 * x.abs(), "column {i}: {x} vs {k} * {y}");
    }
    assert_eq!(ra[4], rb[4]);
}

#[test]
fn exit_codes() {
    // Certification failure.
    let o = run(&["solve", "--mu-tilde", "100", "--L-tilde", "6.283185307179586", "--inject-fault", "sandwich"]);
    assert_eq!(code(&o), 1);
    assert_eq!(stdout(&o).lines().nth(1).unwrap().matches(',').count(), 11);
    // Invalid parameters.
    assert_eq!(code(&run(&["solve", "--L", "1", "--E-B", "1", "--mu", "1"])), 2);
    assert_eq!(code(&run(&["solve", "--L", "1", "--mu", "-1"])), 2);
    // Usage.
    assert_eq!(code(&run(&["solve", "--bogus"])), 2);
    assert_eq!(code(&run(&["solve", "--mu", "1"])), 2);
    assert_eq!(code(&run(&["solve", "--mu", "1", "--L", "1", "--sum-tol", "0"])), 2);
    assert_eq!(code(&run(&["sweep", "--grid-mu-tilde", "1:10:20", "--max-points", "5"])), 2);
    assert_eq!(code(&run(&["sweep", "--grid-mu-tilde", ""])), 2);
    // Resource: the shell table would not fit in memory.
    let o = run(&["solve", "--mu-tilde", "1e13", "--L-tilde", "6.283185307179586"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    // Sweep precedence: invalid + numeric -> 3, invalid + ok -> 2.
    assert_eq!(code(&run(&["sweep", "--grid-mu-tilde", "1e13", "--grid-E-B=1,-1"])), 3);
    assert_eq!(code(&run(&["sweep", "--grid-mu-tilde", "10", "--grid-E-B=1,-1"])), 2);
    // Certification beats everything.
    assert_eq!(
        code(&run(&["sweep", "--grid-mu-tilde", "10,1e13", "--grid-E-B=1,-1", "--inject-fault", "sandwich"])),
        1
    );
}

#[test]
fn canonical_grid_matches_golden() {
    let o = run(&["sweep", "--grid-mu-tilde", "1e2:1e6:9", "--format", "json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["schema"], "polaron.enclosure/1");
    let recs = doc["records"].as_array().unwrap();
    assert_eq!(recs.len(), 9);

    // Re-derive the CSV from the JSON so one run checks both formats.
    let mut csv = String::from(
        "L,E_B,mu,mu_tilde,N,E0,e_p,lambda_shift,exact_shift,feasible,theorem_ratio,polaron_ratio\n",
    );
    for r in recs {
        let e = &r["enclosure"];
        let p = &e["params"];
        csv += &format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            p["l"], p["e_b"], p["mu"], p["mu_tilde"], e["n_fermions"], e["e_free"], e["upper_shift"],
            e["lower_shift"], e["exact_shift"], e["feasible"], e["theorem_ratio"], e["polaron_ratio"]
        );
        let lo = e["lower_shift"].as_f64().unwrap();
        let ex = e["exact_shift"].as_f64().unwrap();
        let up = e["upper_shift"].as_f64().unwrap();
        assert!(lo < ex && ex < up);
    }
    assert_csv_close(&csv, &golden("canonical.csv"), 1e-9);

    let c = &doc["constants"];
    let want: Value = serde_json::from_str(&golden("canonical_constants.json")).unwrap();
    for k in ["c_theorem", "c_polaron"] {
        let (x, y) = (c[k].as_f64().unwrap(), want[k].as_f64().unwrap());
        assert!((x - y).abs() <= 1e-9 * y, "{k}: {x} vs golden {y}");
    }
}

#[test]
fn parallel_sweep_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("p1.csv");
    let b = dir.path().join("p4.csv");
    let grid = "1e1:1e4:9";
    assert_eq!(code(&run(&["sweep", "--grid-mu-tilde", grid, "--parallel", "1", "--output", a.to_str().unwrap()])), 0);
    assert_eq!(code(&run(&["sweep", "--grid-mu-tilde", grid, "--parallel", "4", "--output", b.to_str().unwrap()])), 0);
    let (ta, tb) = (fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    assert_eq!(String::from_utf8(ta).unwrap().lines().count(), 10);
}

#[test]
fn cache_deletion_reproduces_output() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let c = cache.to_str().unwrap();
    let args = |out: &str| -> Vec<String> {
        ["sweep", "--grid-mu-tilde", "1e2,1e3,1e4", "--grid-L-tilde", "3,6.283185307179586", "--cache-dir", c, "--output", out]
            .iter()
            .map(|s| s.to_string())
            .collect()
    };
    let outs: Vec<_> = (0..3).map(|i| dir.path().join(format!("o{i}.csv"))).collect();
    let go = |i: usize| {
        let a = args(outs[i].to_str().unwrap());
        let a: Vec<&str> = a.iter().map(String::as_str).collect();
        assert_eq!(code(&run(&a)), 0);
    };
    go(0);
    let listing = run(&["cache", "inspect", "--cache-dir", c]);
    assert_eq!(code(&listing), 0);
    let n_files = stdout(&listing).lines().count() - 1;
    assert!(n_files >= 2, "{}", stdout(&listing));
    go(1); // warm cache
    let cleared = run(&["cache", "clear", "--cache-dir", c]);
    assert_eq!(code(&cleared), 0);
    assert_eq!(stdout(&run(&["cache", "inspect", "--cache-dir", c])), "");
    go(2); // rebuilt
    let first = fs::read(&outs[0]).unwrap();
    assert_eq!(first, fs::read(&outs[1]).unwrap());
    assert_eq!(first, fs::read(&outs[2]).unwrap());
    // Without a directory the cache commands are usage errors.
    assert_eq!(code(&run(&["cache", "inspect"])), 2);
    // The environment variable supplies the directory.
    let o = Command::new(BIN).args(["cache", "inspect"]).env("POLARON_CACHE_DIR", c).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn verify_default_grid_holds() {
    let o = run(&["verify", "--format", "json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["schema"], "polaron.verify/1");
    assert_eq!(doc["failed"], 0);
    assert_eq!(doc["errors"], 0);
    // 36 log-law cases, 27 Riemann checks, 9 interlacing runs.
    assert_eq!(doc["passed"], 72);
}

#[test]
fn verify_family_and_empty_grid() {
    let o = run(&["verify", "--suite", "riemann", "--family", "exp"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1 + 9);
    assert!(text.lines().skip(1).all(|l| l.contains("exp(-t)") && l.ends_with(",true,")));
    assert_eq!(code(&run(&["verify", "--grid-mu-tilde", ""])), 2);
    assert_eq!(code(&run(&["verify", "--suite", "riemann", "--grid-m", ""])), 2);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        r#"
[point]
L = 6.283185307179586
mu = 1000.0

[tolerances]
sum_tol = 1e-10
root_tol = 1e-10

[output]
format = "json"
"#,
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let o = run(&["solve", "--config", c]);
    assert_eq!(code(&o), 0);
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["records"][0]["mu"], 1000.0);
    // Flags win over the file.
    let o = run(&["solve", "--config", c, "--format", "csv", "--mu", "100"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).lines().nth(1).unwrap().contains(",100.0,"));
    // Unknown keys are usage errors.
    fs::write(&cfg, "[point]\nmuu = 3\n").unwrap();
    assert_eq!(code(&run(&["solve", "--config", c])), 2);
    assert_eq!(code(&run(&["solve", "--config", "/nonexistent/run.toml"])), 2);
}

#[test]
fn gmu_polaron_spectrum_commands() {
    let pt = ["--mu-tilde", "1000", "--L-tilde", "6.283185307179586"];
    let mut a = vec!["gmu", "--tau-tilde", "0", "--format", "json"];
    a.extend(pt);
    let o = run(&a);
    assert_eq!(code(&o), 0);
    let g: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(g["G_lower"].as_f64().unwrap() <= g["G_upper"].as_f64().unwrap());
    assert_eq!(g["log_law_holds"], true);

    let mut a = vec!["polaron"];
    a.extend(pt);
    let o = run(&a);
    assert_eq!(code(&o), 0);
    let row = stdout(&o);
    let e_p: f64 = row.lines().nth(1).unwrap().split(',').nth(5).unwrap().parse().unwrap();
    assert!((e_p + 158.2576).abs() < 1e-3, "{e_p}");

    let mut a = vec!["spectrum", "--format", "json"];
    a.extend(pt);
    let o = run(&a);
    assert_eq!(code(&o), 0);
    let s: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(s["interlacing_ok"], true);
    assert_eq!(s["N"], 3149);
    let count: u64 = s["eigenvalues"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["multiplicity"].as_u64().unwrap())
        .sum();
    assert_eq!(count, 3150);
    assert!((s["shift_total"].as_f64().unwrap() + 160.4549).abs() < 1e-3);

    // gmu needs tau; tau below the first pole is a domain error.
    let mut a = vec!["gmu"];
    a.extend(pt);
    assert_eq!(code(&run(&a)), 2);
}
