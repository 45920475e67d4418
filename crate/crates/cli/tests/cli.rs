use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cylscat::classical_flow::{kappa_quadrature, BoundaryPoint};
use cylscat::{End, ModelSpec, PotentialSpec, Profile};

const BULGE: &str = r#"
[model]
kind = "bulge"
amplitude = 0.3
half_width = 1.0
h = 0.05
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cylscat"));
    c.env_remove("CYLSCAT_THREADS");
    c
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("model.toml");
    fs::write(&p, text).unwrap();
    p
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn kappa_one_line_matches_quadrature() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BULGE);
    let out = dir.path().join("out");
    let o = run(bin().args(["kappa", "--theta", "1.0", "--eta", "0.5", "--config"]).arg(&cfg).arg("--out").arg(&out));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("kappa.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with(&format!("# cylscat {} command=kappa config_sha256=", env!("CARGO_PKG_VERSION"))));
    assert_eq!(lines[1], "end,theta,eta,outcome,end_out,theta_out,eta_out,t_plus,energy_drift");
    let f: Vec<&str> = lines[2].split(',').collect();
    assert_eq!(f[3], "exited");
    assert_eq!(f[4], "R");
    let model = ModelSpec::new(Profile::bulge(0.3, 1.0).unwrap(), PotentialSpec::none(), 0.05).unwrap();
    let oracle = kappa_quadrature(&BoundaryPoint::new(End::Left, 1.0, 0.5), &model).unwrap();
    let theta_out: f64 = f[5].parse().unwrap();
    assert!((theta_out - oracle.theta).abs() < 1e-9);
}

#[test]
fn verify_free_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(bin().args(["verify", "--suite", "free", "--out"]).arg(dir.path()));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let text = fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    assert!(text.lines().nth(1).unwrap() == "suite,check,value,bound,pass");
    assert!(text.lines().skip(2).all(|l| l.ends_with(",true")));
}

#[test]
fn verify_failure_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(bin().args(["verify", "--suite", "free", "--tol", "unitarity=1e-30", "--out"]).arg(dir.path()));
    assert_eq!(code(&o), 1);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad_key = write_config(dir.path(), &format!("{BULGE}colour = 1\n"));
    assert_eq!(code(&run(bin().arg("smatrix").arg("--config").arg(&bad_key).arg("--out").arg(&out))), 2);
    let missing = dir.path().join("none.toml");
    assert_eq!(code(&run(bin().arg("smatrix").arg("--config").arg(&missing).arg("--out").arg(&out))), 2);
    let cfg = write_config(dir.path(), BULGE);
    assert_eq!(code(&run(bin().args(["smatrix", "--h", "0.1,zero", "--config"]).arg(&cfg).arg("--out").arg(&out))), 2);
    assert_eq!(code(&run(bin().args(["smatrix", "--tol", "bogus=1", "--config"]).arg(&cfg).arg("--out").arg(&out))), 2);
    assert_eq!(code(&run(bin().arg("smatrix").arg("--out").arg(&out))), 2);
    // the band check only applies to an hourglass
    assert_eq!(code(&run(bin().args(["dichotomy", "--config"]).arg(&cfg).arg("--out").arg(&out))), 2);
}

#[test]
fn numerical_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BULGE);
    // centres at |eta| = 0.4 are too close to the edge at h = 0.2
    let o = run(bin().args(["coherent", "--h", "0.2", "--config"]).arg(&cfg).arg("--out").arg(dir.path()));
    assert_eq!(code(&o), 3);
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn outputs_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BULGE);
    let mut runs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("t{threads}"));
        for cmd in [&["smatrix", "--h", "0.1"][..], &["equidist", "--h", "0.1,0.05"], &["domain"]] {
            let o = run(bin().args(cmd).arg("--config").arg(&cfg).arg("--out").arg(&out).env("CYLSCAT_THREADS", threads));
            assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        }
        runs.push(read_dir_bytes(&out));
    }
    assert!(!runs[0].is_empty());
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn header_hash_tracks_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BULGE);
    let header = |extra: &[&str], sub: &str| {
        let out = dir.path().join(sub);
        let o = run(bin().args(["smatrix", "--h", "0.2"]).args(extra).arg("--config").arg(&cfg).arg("--out").arg(&out));
        assert_eq!(code(&o), 0);
        fs::read_to_string(out.join("smatrix_h0.2.csv")).unwrap().lines().next().unwrap().to_string()
    };
    let a = header(&[], "a");
    let b = header(&[], "b");
    let c = header(&["--tol", "unitarity=1e-6"], "c");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn equidist_schema_and_plot_scripts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BULGE);
    let o = run(bin().args(["equidist", "--h", "0.1,0.05", "--config"]).arg(&cfg).arg("--out").arg(dir.path()));
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(dir.path().join("equidist.csv")).unwrap();
    assert_eq!(
        text.lines().nth(1).unwrap(),
        "h,dim,f_id,re_trace_scaled,im_trace_scaled,target_re,target_im,cdf_dev"
    );
    // 5 functionals at 2 values of h
    assert_eq!(text.lines().count(), 2 + 10);
    let gp = fs::read_to_string(dir.path().join("equidist_hist.gp")).unwrap();
    assert!(gp.contains("set datafile separator ','") && gp.contains("equidist_hist.csv"));
}

#[test]
fn smatrix_dense_export_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BULGE);
    let o = run(bin().args(["smatrix", "--h", "0.2", "--config"]).arg(&cfg).arg("--out").arg(dir.path()));
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(dir.path().join("smatrix_h0.2.txt")).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(' ').map(|x| x.parse().unwrap()).collect())
        .collect();
    let n = rows.len();
    // h = 0.2: modes -4..4 on two ends
    assert_eq!(n, 18);
    // columns are unit vectors: S_U is unitary
    for j in 0..n {
        let norm: f64 = rows.iter().map(|r| r[2 * j] * r[2 * j] + r[2 * j + 1] * r[2 * j + 1]).sum();
        assert!((norm - 1.0).abs() < 1e-8);
    }
}
