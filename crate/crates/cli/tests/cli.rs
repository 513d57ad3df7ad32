use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bond3(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bond3"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout_json(out: &Output) -> Value {
    assert_eq!(code(out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn usizes(v: &Value) -> Vec<usize> {
    v.as_array().unwrap().iter().map(|x| x.as_u64().unwrap() as usize).collect()
}

fn write_state(dir: &TempDir, l: usize, seed: u64) -> std::path::PathBuf {
    let p = dir.path().join(format!("state_{l}_{seed}.json"));
    let out = bond3(&["random-state", "--L", &l.to_string(), "--seed", &seed.to_string(), "--out", path_str(&p)]);
    assert_eq!(code(&out), 0);
    p
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        assert_eq!(code(&bond3(&["random-hamiltonian", "--L", "5", "--seed", "9", "--out", path_str(p)])), 0);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let s = write_state(&dir, 6, 4);
    let r1 = bond3(&["ranks", "--state", path_str(&s), "--seed", "2"]);
    let r2 = bond3(&["ranks", "--state", path_str(&s), "--seed", "2"]);
    assert_eq!(r1.stdout, r2.stdout);
}

#[test]
fn ranks_before_and_after_natural_orbitals() {
    let dir = TempDir::new().unwrap();
    let s = write_state(&dir, 8, 1);
    let v = stdout_json(&bond3(&["ranks", "--state", path_str(&s), "--trials", "20", "--seed", "3"]));
    // a generic state saturates 2 + min(k, L-k) inside and 2 at the ends
    assert_eq!(usizes(&v["before"]["ranks"]), vec![2, 4, 5, 6, 5, 4, 2]);
    assert_eq!(usizes(&v["after"]["ranks"]), vec![2, 2, 3, 2, 3, 2, 2]);
    assert_eq!(usizes(&v["explicit_bond_dims"]), vec![2, 2, 3, 2, 3, 2, 2]);
    assert_eq!(v["lower_bound"]["violations"], 0);
    assert_eq!(v["lower_bound"]["minimum_is_optimal_vector"], true);
    assert_eq!(v["spec"]["L"], 8);
    assert_eq!(v["spec"]["seed"], 3);

    let s4 = write_state(&dir, 4, 2);
    let v4 = stdout_json(&bond3(&["ranks", "--state", path_str(&s4)]));
    assert_eq!(usizes(&v4["after"]["ranks"]), vec![2, 2, 2]);
}

#[test]
fn slater_determinant_skips_the_lower_bound() {
    let dir = TempDir::new().unwrap();
    let l = 6;
    // orbitals 1 and 4 occupied
    let index = (1 << (l - 1 - 1)) | (1 << (l - 1 - 4));
    let coeffs: Vec<[f64; 2]> = (0..1 << l).map(|x| if x == index { [1.0, 0.0] } else { [0.0, 0.0] }).collect();
    let p = dir.path().join("slater.json");
    std::fs::write(&p, json!({ "L": l, "coeffs": coeffs }).to_string()).unwrap();
    let v = stdout_json(&bond3(&["ranks", "--state", path_str(&p)]));
    assert_eq!(usizes(&v["before"]["ranks"]), vec![1; 5]);
    assert_eq!(usizes(&v["after"]["ranks"]), vec![1; 5]);
    assert!(v["lower_bound"].is_null());
    assert!(v["lower_bound_skipped"].is_string());
}

#[test]
fn build_mps_reconstructs_the_state() {
    let dir = TempDir::new().unwrap();
    let s = write_state(&dir, 7, 5);
    let v = stdout_json(&bond3(&["build-mps", "--state", path_str(&s)]));
    assert!(v["reconstruction_error"].as_f64().unwrap() <= 1e-10);
    assert!(usizes(&v["bond_dims"]).iter().all(|&d| d <= 3));
}

#[test]
fn parent_hamiltonian_ground_energy_is_minus_one() {
    let dir = TempDir::new().unwrap();
    let s = write_state(&dir, 8, 6);
    let v = stdout_json(&bond3(&["dmrg", "--parent", path_str(&s)]));
    let e = v["report"]["levels"][0]["energy"].as_f64().unwrap();
    assert!((e + 1.0).abs() <= 1e-9, "{e}");
}

#[test]
fn mode_optimization_matches_exact_levels() {
    let v = stdout_json(&bond3(&["modeopt", "--L", "6", "--seed", "7", "--levels", "2", "--scan"]));
    for level in v["report"]["levels"].as_array().unwrap() {
        assert!(level["error"].as_f64().unwrap().abs() <= 1e-8, "{level}");
        let gap = level["energy"].as_f64().unwrap() - level["fci"].as_f64().unwrap();
        assert!(gap.abs() <= 1e-8);
    }
    let scan = &v["scan"];
    assert_eq!(scan["monotone"], true);
    let energies: Vec<f64> = scan["entries"].as_array().unwrap().iter().map(|e| e["energy"].as_f64().unwrap()).collect();
    assert!(energies.windows(2).all(|w| w[1] <= w[0] + 1e-10));
    assert!((energies.last().unwrap() - scan["fci"].as_f64().unwrap()).abs() <= 1e-8);
}

#[test]
fn tail_truncations_match_the_geometric_series() {
    let v = stdout_json(&bond3(&["tail", "--geometric", "32", "--lengths", "8,12,16"]));
    assert_eq!(v["shared_cores_identical"], true);
    assert_eq!(v["tail_monotone"], true);
    for row in v["rows"].as_array().unwrap() {
        let l = row["L"].as_u64().unwrap() as i32;
        let analytic = 0.25f64.powi(l / 2) / 3.0;
        assert!((row["tail_norm_sqr"].as_f64().unwrap() - analytic).abs() <= 1e-12);
        assert!(usizes(&row["bond_dims"]).iter().all(|&d| d <= 3));
    }
}

const H2: &str = "&FCI NORB=2,NELEC=2,MS2=0,\n ORBSYM=1,1,\n ISYM=1,\n&END\n\
    0.6746 1 1 1 1\n0.6636 2 2 1 1\n0.1813 2 1 2 1\n0.6975 2 2 2 2\n\
    -1.2528 1 1 0 0\n-0.4756 2 2 0 0\n0.7151 0 0 0 0\n";

#[test]
fn fcidump_ground_state_matches_two_configuration_solve() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("FCIDUMP");
    std::fs::write(&p, H2).unwrap();
    let v = stdout_json(&bond3(&["dmrg", "--fcidump", path_str(&p)]));
    // the singlet ground state mixes |1a 1b> and |2a 2b> through (12|12)
    let (h11, h22, j11, j22, k12, core): (f64, f64, f64, f64, f64, f64) = (-1.2528, -0.4756, 0.6746, 0.6975, 0.1813, 0.7151);
    let a = 2.0 * h11 + j11 + core;
    let d = 2.0 * h22 + j22 + core;
    let want = 0.5 * (a + d) - (0.25 * (a - d) * (a - d) + k12 * k12).sqrt();
    let e = v["report"]["levels"][0]["energy"].as_f64().unwrap();
    assert!((e - want).abs() <= 1e-8, "{e} vs {want}");
    assert_eq!(v["spec"]["N"], 2);

    let h = stdout_json(&bond3(&["parse-fcidump", "--fcidump", path_str(&p)]));
    assert_eq!(h["L"], 4);
}

#[test]
fn invalid_input_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(code(&bond3(&["ranks", "--state", path_str(&bad)])), 2);
    assert_eq!(code(&bond3(&["dmrg", "--L", "6", "--bond-dims", "3,3"])), 2);
    assert_eq!(code(&bond3(&["dmrg", "--L", "6", "--N", "9"])), 2);
    let missing = dir.path().join("missing.json");
    assert_eq!(code(&bond3(&["build-mps", "--state", path_str(&missing)])), 2);
    let dump = dir.path().join("FCIDUMP");
    std::fs::write(&dump, "&FCI NORB=2,NELEC=2,\n&END\n0.5 1 1 3 1\n").unwrap();
    assert_eq!(code(&bond3(&["parse-fcidump", "--fcidump", path_str(&dump)])), 2);
}

#[test]
fn unfinished_mode_optimization_exits_with_three() {
    let out = bond3(&["modeopt", "--L", "6", "--seed", "3", "--max-outer", "1"]);
    assert_eq!(code(&out), 3, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["report"]["converged"], false);
}
