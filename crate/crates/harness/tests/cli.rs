use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_imex-peer")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn tableau_show_then_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.txt");
    let o = cli(&["tableau", "show", "IMEX-Peer4sve"]);
    assert!(o.status.success());
    std::fs::write(&path, &o.stdout).unwrap();
    let o = cli(&["tableau", "load", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("name,stages,gamma,c_min,c_max,preconsistency,zero_stable"));
    let row = lines.next().unwrap();
    assert!(row.starts_with("IMEX-Peer4sve,4,") && row.ends_with(",true"), "{row}");
}

#[test]
fn verify_accepts_builtin_and_rejects_bad_file() {
    let o = cli(&["verify", "IMEX-Peer3sv"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("verdict: PASS"));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.txt");
    let text = stdout(&cli(&["tableau", "show", "IMEX-Peer3sv"]));
    // Zeroing the first P row breaks pre-consistency.
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let k = lines.iter().position(|l| l.trim_start().starts_with('P')).unwrap() + 1;
    lines[k] = "0 0 0".into();
    std::fs::write(&path, lines.join("\n")).unwrap();
    let o = cli(&["verify", path.to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn reference_round_trip_and_converge_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pr.csv");
    let o = cli(&["reference", "prothero-robinson", "--out", path.to_str().unwrap(), "--tol", "1e-8"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = cli(&["wp", "IMEX-Peer3sv", "prothero-robinson", "--tols", "1e-4,1e-5", "--repeats", "1", "--reference", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.starts_with("method,tol,error,"));
    assert_eq!(out.lines().count(), 3);
    let o = cli(&["converge", "IMEX-Peer2sve", "prothero-robinson", "--sigma", "1.2", "--dt-list", "0.05,0.025"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("method,problem,sigma,dt,error,observed_order\n"));
    let o = cli(&["converge", "IMEX-Peer2sve", "nope", "--dt-list", "0.05"]);
    assert!(!o.status.success());
}
