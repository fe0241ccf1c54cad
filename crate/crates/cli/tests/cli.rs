use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn neoprint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neoprint"))
        .args(args)
        .output()
        .expect("spawn neoprint")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, seed: &str) {
    let out = neoprint(&[
        "synth", "--out", s(dir), "--seed", seed, "--subjects", "3", "--sessions", "2", "--impressions", "1",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn enroll(image: &Path, out: &Path, gender: &str) -> Output {
    neoprint(&[
        "enroll", s(image), "--subject", "S1", "--session", "s1", "--thumb", "left", "--gender", gender,
        "--age-weeks", "20", "--out", s(out),
    ])
}

fn write_flat_pgm(path: &Path) {
    let mut bytes = b"P5\n64 64\n255\n".to_vec();
    bytes.extend(std::iter::repeat(128u8).take(64 * 64));
    std::fs::write(path, bytes).unwrap();
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    assert_eq!(code(&neoprint(&[])), 1);
    assert_eq!(code(&neoprint(&["frobnicate"])), 1);
    assert_eq!(code(&neoprint(&["--jobs", "0", "config"])), 1);
    assert_eq!(code(&neoprint(&["--help"])), 0);
}

#[test]
fn missing_input_exits_2() {
    let out = neoprint(&["match", "--probe", "/nonexistent/a.iptf", "--enrolled", "/nonexistent/b.iptf"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn config_round_trips_and_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let printed = stdout(&neoprint(&["--lambda", "1.2", "config"]));
    assert!(printed.contains("lambda = 1.2"));
    let path = dir.path().join("c.toml");
    std::fs::write(&path, &printed).unwrap();
    let again = neoprint(&["--config", s(&path), "config"]);
    assert_eq!(code(&again), 0);
    assert_eq!(stdout(&again), printed);

    std::fs::write(&path, "[aging]\nlamda = 1.2\n").unwrap();
    assert_eq!(code(&neoprint(&["--config", s(&path), "config"])), 1);
}

#[test]
fn synth_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    synth(a.path(), "9");
    synth(b.path(), "9");
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert!(fa.iter().any(|(p, _)| p.ends_with("manifest.tsv")));
    assert_eq!(fa.len(), 1 + 2 * (3 * 2 * 2));
    assert!(fa == fb, "synth outputs differ");
}

#[test]
fn enroll_match_search_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, "3");
    let image = data.join("images").join("S0001_s1_L_0.pgm");
    let (male, female) = (dir.path().join("m"), dir.path().join("f"));
    assert_eq!(code(&enroll(&image, &male, "male")), 0);
    assert_eq!(code(&enroll(&image, &female, "female")), 0);
    let (tm, tf) = (male.join("S0001_s1_L_0.iptf"), female.join("S0001_s1_L_0.iptf"));

    let same = neoprint(&["match", "--probe", s(&tm), "--enrolled", s(&tm)]);
    assert_eq!(code(&same), 0);
    assert_eq!(stdout(&same).trim(), "1.0000");
    let cross = neoprint(&["match", "--probe", s(&tm), "--enrolled", s(&tf)]);
    assert_eq!(stdout(&cross).trim(), "0.0000");

    let search = neoprint(&["search", "--probe", s(&tm), "--gallery", s(&data.join("manifest.tsv")), "--top", "2"]);
    assert_eq!(code(&search), 0);
    let lines: Vec<String> = stdout(&search).lines().map(String::from).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("1\tS0001\t"), "{lines:?}");

    let report = dir.path().join("report");
    let eval = neoprint(&["eval", "--manifest", s(&data.join("manifest.tsv")), "--out", s(&report)]);
    assert_eq!(code(&eval), 0, "{}", String::from_utf8_lossy(&eval.stderr));
    let csv = std::fs::read_to_string(report.join("report.csv")).unwrap();
    assert!(csv.starts_with("age_bucket,lapse_bucket,n_subjects,n_genuine,n_imposter,tar_far_0.1,tar_far_1.0,rank1,rank5"));
    assert!(report.join("scores.csv").exists() && report.join("report.txt").exists());
}

#[test]
fn blank_image_enroll_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("blank.pgm");
    write_flat_pgm(&img);
    assert_eq!(code(&enroll(&img, dir.path(), "unknown")), 2);
}

#[test]
fn external_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, "4");
    let image = data.join("images").join("S0001_s1_L_0.pgm");
    assert_eq!(code(&enroll(&image, dir.path(), "male")), 0);
    let t = dir.path().join("S0001_s1_L_0.iptf");
    let args = |cmd: &'static str| {
        neoprint(&[
            "--external-cmd", cmd, "match", "--probe", s(&t), "--enrolled", s(&t), "--probe-image", s(&image),
            "--enrolled-image", s(&image),
        ])
    };
    assert_eq!(code(&args("exit 1")), 3);
    let ok = args("echo 1.0");
    assert_eq!(code(&ok), 0);
    assert_eq!(stdout(&ok).trim(), "1.0000");
}
