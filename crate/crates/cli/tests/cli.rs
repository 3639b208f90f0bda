use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_motionflow");

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn motionflow")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let out = run(&["bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = run(&["drag-flow", "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--annotation"));
    let out = run(&["stabilize", "--input", "x", "--filter", "bandpass", "--out", "y"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn data_errors_exit_two_and_name_the_file() {
    let t = tempfile::tempdir().unwrap();
    let missing = t.path().join("missing.json");
    let out = run(&["drag-flow", "--annotation", s(&missing), "--out", s(t.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));

    let bad = t.path().join("bad.json");
    fs::write(&bad, r#"{"width":8,"height":8,"num_frames":2,"trajectories":[[[100,1],[2,2]]]}"#).unwrap();
    let out = run(&["drag-flow", "--annotation", s(&bad), "--out", s(&t.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn camera_only_bundle_matches_camera_flow() {
    let t = tempfile::tempdir().unwrap();
    let bundle = t.path().join("b.json");
    fs::write(
        &bundle,
        format!(
            r#"{{"width":64,"height":48,"num_frames":9,"camera":{{"trajectory":"{}","depth":{{"kind":"ramp","near":3,"far":12}}}}}}"#,
            s(&data("camera_pan.json"))
        ),
    )
    .unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    ok(&["unify", "--bundle", s(&bundle), "--out", s(&a)]);
    ok(&[
        "camera-flow",
        "--trajectory",
        s(&data("camera_pan.json")),
        "--depth",
        "ramp:3:12",
        "--width",
        "64",
        "--height",
        "48",
        "--out",
        s(&b),
    ]);
    let (fa, fb) = (dir_bytes(&a), dir_bytes(&b));
    assert_eq!(fa.len(), 8);
    assert_eq!(fa, fb);
}

#[test]
fn noisy_camera_flow_is_seeded() {
    let t = tempfile::tempdir().unwrap();
    let go = |seed: &str, out: &Path| {
        ok(&[
            "camera-flow",
            "--trajectory",
            s(&data("camera_pan.json")),
            "--depth",
            "constant:5",
            "--width",
            "64",
            "--height",
            "48",
            "--noise-sigma",
            "0.3",
            "--seed",
            seed,
            "--out",
            s(out),
        ]);
        dir_bytes(out)
    };
    let a = go("7", &t.path().join("a"));
    assert_eq!(a, go("7", &t.path().join("b")));
    assert_ne!(a, go("8", &t.path().join("c")));
}

#[test]
fn toy_train_and_sample_are_seeded() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("toy.json");
    fs::write(&cfg, r#"{"toy":{"hidden":8,"time_dim":4,"steps":30,"batch_size":16,"lr":0.01}}"#).unwrap();
    let train = |seed: &str, tag: &str| {
        let (ck, curve) = (t.path().join(format!("{tag}.bin")), t.path().join(format!("{tag}.csv")));
        let stdout = ok(&["toy-train", "--config", s(&cfg), "--seed", seed, "--out", s(&ck), "--curve", s(&curve)]);
        assert!(stdout.contains("initial loss"));
        (fs::read(&ck).unwrap(), fs::read_to_string(&curve).unwrap())
    };
    let a = train("3", "a");
    assert_eq!(a, train("3", "b"));
    assert_ne!(a.0, train("4", "c").0);
    assert!(a.1.starts_with("step,loss\n0,"));
    assert_eq!(a.1.lines().count(), 31);

    let sample = |seed: &str, tag: &str| {
        let out = t.path().join(format!("s{tag}.csv"));
        let stdout = ok(&[
            "toy-sample",
            "--config",
            s(&cfg),
            "--seed",
            seed,
            "--checkpoint",
            s(&t.path().join("a.bin")),
            "--count",
            "5",
            "--out",
            s(&out),
        ]);
        assert!(stdout.contains("mode purity"));
        fs::read(out).unwrap()
    };
    let x = sample("1", "x");
    assert_eq!(x, sample("1", "y"));
    assert_ne!(x, sample("2", "z"));
    assert_eq!(String::from_utf8(x).unwrap().lines().count(), 5);
}

#[test]
fn stabilize_dc_only_reports_zero_flicker() {
    let t = tempfile::tempdir().unwrap();
    let flows = t.path().join("f");
    ok(&["unify", "--bundle", s(&data("bundle.json")), "--out", s(&flows)]);
    let stdout = ok(&["stabilize", "--input", s(&flows), "--filter", "dc-only", "--out", s(&t.path().join("o"))]);
    let after: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("flicker after: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(after < 1e-20, "{after}");

    let weights = t.path().join("w.json");
    fs::write(&weights, "[1, 1, 0, 0, 0]").unwrap();
    ok(&["stabilize", "--input", s(&flows), "--filter", s(&weights), "--out", s(&t.path().join("w"))]);
    fs::write(&weights, "[1, 1]").unwrap();
    let out = run(&["stabilize", "--input", s(&flows), "--filter", s(&weights), "--out", s(&t.path().join("w2"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn codec_round_trip_on_disk() {
    let t = tempfile::tempdir().unwrap();
    let (flows, lat, dec) = (t.path().join("f"), t.path().join("l.bin"), t.path().join("d"));
    ok(&["unify", "--bundle", s(&data("bundle.json")), "--out", s(&flows)]);
    let stdout = ok(&["codec", "encode", "--input", s(&flows), "--out", s(&lat)]);
    assert!(stdout.contains("2x6x8"), "{stdout}");
    ok(&["codec", "decode", "--latent", s(&lat), "--out", s(&dec)]);
    assert_eq!(dir_bytes(&dec).len(), 8);
}

#[test]
fn eval_traj_report_columns() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("r.csv");
    ok(&["eval-traj", "--pred", s(&data("camera_pan.json")), "--gt", s(&data("camera_pan.json")), "--clip-len", "2", "--out", s(&out)]);
    let text = fs::read_to_string(out).unwrap();
    assert_eq!(
        text,
        "method,basic_t_err,basic_r_err,difficult_t_err,difficult_r_err\ncamera_pan,0,0,0,0\n"
    );
}

#[test]
fn viz_writes_pngs() {
    let t = tempfile::tempdir().unwrap();
    let flows = t.path().join("f");
    ok(&["drag-flow", "--annotation", s(&data("drags.json")), "--out", s(&flows)]);
    ok(&["viz", "--input", s(&flows), "--out", s(&t.path().join("p"))]);
    let pngs = dir_bytes(&t.path().join("p"));
    assert_eq!(pngs.len(), 8);
    assert!(pngs.iter().all(|(n, b)| n.ends_with(".png") && b.starts_with(b"\x89PNG")));
}

#[test]
fn config_sigma_feeds_drag_flow() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("c.toml");
    fs::write(&cfg, "sigma = 2.0\n").unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    ok(&["drag-flow", "--config", s(&cfg), "--annotation", s(&data("drags.json")), "--out", s(&a)]);
    ok(&["drag-flow", "--sigma", "2.0", "--annotation", s(&data("drags.json")), "--out", s(&b)]);
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
    fs::write(&cfg, "sigma = \"wide\"\n").unwrap();
    assert_eq!(run(&["drag-flow", "--config", s(&cfg), "--annotation", s(&data("drags.json")), "--out", s(&a)]).status.code(), Some(2));
}

#[test]
fn serve_honours_port_env() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut child = Command::new(BIN)
        .arg("serve")
        .env("MOTIONFLOW_PORT", port.to_string())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    assert!(line.contains(&format!(":{port}")), "{line}");

    let mut stream = TcpStream::connect(("127.0.0.1", port)).unwrap();
    stream
        .write_all(b"GET /health HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n")
        .unwrap();
    let mut resp = String::new();
    stream.read_to_string(&mut resp).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.ends_with(r#"{"status":"ok"}"#), "{resp}");
}
