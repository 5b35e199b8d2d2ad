use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use coverify_core::blobio::read_blob_dump;

fn coverify(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coverify")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn run_to(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let path = dir.join(name);
    let mut args = vec!["run", "--out", p(&path)];
    args.extend_from_slice(extra);
    let out = coverify(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    path
}

fn dump(path: &Path) -> coverify_core::BlobDump {
    read_blob_dump(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn sw_run_writes_seven_lenet_records() {
    let dir = tempfile::tempdir().unwrap();
    let d = dump(&run_to(dir.path(), "sw.txt", &["--stage", "sw"]));
    let names: Vec<&str> = d.records.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names, ["conv1", "pool1", "conv2", "pool2", "conv3", "fc1_relu1", "fc2"]);
}

#[test]
fn hw_fault_diverges_from_design_at_conv2() {
    let dir = tempfile::tempdir().unwrap();
    let design = dump(&run_to(dir.path(), "d.txt", &["--stage", "design"]));
    let hw = dump(&run_to(dir.path(), "h.txt", &["--stage", "hw", "--fault", "conv2:scale:0.5"]));
    let first = design.records.iter().zip(&hw.records).position(|(a, b)| a.values() != b.values());
    assert_eq!(first.map(|i| design.records[i].name.as_str()), Some("conv2"));
}

#[test]
fn fixed_design_dump_is_deterministic_and_frozen() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--stage", "design", "--numeric", "fixed:w8.6:a24.12"];
    let a = std::fs::read(run_to(dir.path(), "a.txt", &args)).unwrap();
    let b = std::fs::read(run_to(dir.path(), "b.txt", &args)).unwrap();
    assert_eq!(a, b);
    let golden = std::fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/golden/lenet_design_fixed.txt")).unwrap();
    assert!(a == golden);
}

#[test]
fn run_prints_to_stdout_without_out() {
    let out = coverify(&["run", "--stage", "sw", "--network", "cifar"]);
    assert_eq!(code(&out), 0);
    let d = read_blob_dump(&stdout(&out)).unwrap();
    assert_eq!(d.records.len(), 8);
}

#[test]
fn gen_spvf_and_check() {
    let dir = tempfile::tempdir().unwrap();
    let spvf = dir.path().join("spvf.txt");
    let out = coverify(&["gen-spvf", "--out", p(&spvf)]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("kept 100"));
    let text = std::fs::read_to_string(&spvf).unwrap();
    assert!(text.starts_with("spvf version 1\nnetwork lenet\nimages 100\n"), "{}", &text[..60]);

    let good = run_to(dir.path(), "sw1.txt", &["--stage", "sw"]);
    let out = coverify(&["check-spvf", p(&good), "--spvf", p(&spvf)]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).ends_with("envelope-result pass=1\n"));

    let outlier = run_to(dir.path(), "sw0.txt", &["--stage", "sw", "--image-index", "0"]);
    let out = coverify(&["check-spvf", p(&outlier), "--spvf", p(&spvf)]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("envelope fc2 checked=10 outside=1"));
    let out = coverify(&["check-spvf", p(&outlier), "--spvf", p(&spvf), "--pass-fraction", "0.9"]);
    assert_eq!(code(&out), 0);

    let cifar = run_to(dir.path(), "c.txt", &["--stage", "sw", "--network", "cifar"]);
    assert_eq!(code(&coverify(&["check-spvf", p(&cifar), "--spvf", p(&spvf)])), 2);
    assert_eq!(code(&coverify(&["check-spvf", p(&good), "--spvf", p(&spvf), "--slack", "-1"])), 2);
}

#[test]
fn single_image_spvf() {
    let out = coverify(&["gen-spvf", "--n", "1"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("\nimages 1\n"));
}

#[test]
fn fixture_files_reproduce_the_bundled_run() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("fx");
    assert_eq!(code(&coverify(&["fixture", "--out", p(&fx), "--n", "12"])), 0);
    let files = |name: &str| fx.join(name);
    let a = run_to(dir.path(), "a.txt", &["--stage", "design"]);
    let b = run_to(
        dir.path(),
        "b.txt",
        &[
            "--stage",
            "design",
            "--topology",
            p(&files("topology.txt")),
            "--params",
            p(&files("params.txt")),
            "--image",
            p(&files("image.tensor")),
        ],
    );
    assert!(std::fs::read(a).unwrap() == std::fs::read(b).unwrap());

    let manifest = files("calibration/manifest.txt");
    let out = coverify(&["gen-spvf", "--calibration", p(&manifest), "--params", p(&files("params.txt")), "--n", "12"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out) == stdout(&coverify(&["gen-spvf", "--n", "12"])));
    let out = coverify(&["gen-spvf", "--calibration", p(&manifest), "--params", p(&files("params.txt")), "--n", "13"]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("insufficient correctly predicted images: kept 12"));
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let sw = run_to(dir.path(), "sw.txt", &["--stage", "sw"]);
    let design = run_to(dir.path(), "d.txt", &["--stage", "design"]);
    let hw = run_to(dir.path(), "h.txt", &["--stage", "hw"]);
    let out = coverify(&["verify", p(&sw), p(&design), p(&hw)]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).ends_with("divergent none\nadvice deployment verified\n"));

    let bad = run_to(dir.path(), "hf.txt", &["--stage", "hw", "--fault", "pool2:zero:3"]);
    let out = coverify(&["verify", p(&sw), p(&design), p(&bad), "--table"]);
    assert_eq!(code(&out), 1);
    let text = stdout(&out);
    assert!(text.contains("divergent pool2\n"));
    assert!(text.contains("advice hardware stage diverges at pool2"));

    let other = run_to(dir.path(), "c.txt", &["--stage", "hw", "--network", "cifar"]);
    let out = coverify(&["verify", p(&sw), p(&design), p(&other)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("sw/hw"));
    // stage tags must match their slots
    assert_eq!(code(&coverify(&["verify", p(&sw), p(&hw), p(&design)])), 2);
}

#[test]
fn pipeline_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("ok");
    let out = coverify(&["pipeline", "--out", p(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains("advice deployment verified"));
    for f in ["spvf.txt", "file_sw.txt", "file_design.txt", "file_hw.txt", "report.txt"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }

    let out = coverify(&["pipeline", "--out", p(&dir.path().join("f")), "--fault", "conv2:scale:0.5"]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("advice hardware stage diverges at conv2"));

    let fixed_dir = dir.path().join("x");
    let out = coverify(&["pipeline", "--out", p(&fixed_dir), "--numeric", "fixed:w8.6:a24.12", "--threshold", "0.99"]);
    assert_eq!(code(&out), 1);
    let report = std::fs::read_to_string(fixed_dir.join("report.txt")).unwrap();
    assert!(report.contains("divergent conv1\n"), "{report}");
    assert!(report.contains("advice design stage diverges at conv1"));
    assert!(!fixed_dir.join("file_hw.txt").exists());

    let out = coverify(&["pipeline", "--out", p(&dir.path().join("z")), "--image-index", "0"]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("sw: outside SPVF at fc2"));
}

#[test]
fn pipeline_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        coverify(&["pipeline", "--network", "cifar", "--n", "20", "--out", p(d)]);
    }
    for f in ["spvf.txt", "file_sw.txt", "file_design.txt", "file_hw.txt", "report.txt"] {
        let (x, y) = (std::fs::read(a.join(f)).ok(), std::fs::read(b.join(f)).ok());
        assert!(x == y, "{f}");
    }
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let topo = dir.path().join("bad.topo");
    std::fs::write(&topo, "network x\ninput 1 4 4\nlayer conv c filters=2 kernel=9\n").unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["shapes", "--topology", p(&topo)],
        vec!["shapes", "--topology", "/nonexistent/file"],
        vec!["run", "--stage", "hw", "--fault", "conv9:zero:0"],
        vec!["run", "--stage", "hw", "--fault", "fc2:zero:10"],
        vec!["run", "--stage", "design", "--fault", "fc2:zero:1"],
        vec!["run", "--stage", "sw", "--numeric", "float32"],
        vec!["run", "--stage", "design", "--numeric", "fixed:w8.9:a24.12"],
        vec!["run", "--stage", "fpga"],
        vec!["gen-spvf", "--n", "0"],
        vec!["pipeline", "--out", p(dir.path()), "--threshold", "1.5"],
        vec!["bogus"],
    ];
    for args in cases {
        assert_eq!(code(&coverify(&args)), 2, "{args:?}");
    }
}

#[test]
fn engine_errors_exit_3() {
    let out = coverify(&["run", "--stage", "hw", "--fault", "conv1:scale:1e300"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite"));
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("small.tensor");
    std::fs::write(&img, "tensor 1 2 2\n0 0 0 0\n").unwrap();
    assert_eq!(code(&coverify(&["run", "--stage", "sw", "--image", p(&img)])), 3);
}

#[test]
fn import_raw_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("digit.raw");
    std::fs::write(&raw, (0..784).map(|i| (i % 256) as u8).collect::<Vec<_>>()).unwrap();
    let tensor = dir.path().join("digit.tensor");
    let out = coverify(&["import-raw", p(&raw), "--height", "28", "--width", "28", "--out", p(&tensor)]);
    assert_eq!(code(&out), 0);
    assert_eq!(code(&coverify(&["run", "--stage", "sw", "--image", p(&tensor)])), 0);
    assert_eq!(code(&coverify(&["import-raw", p(&raw), "--height", "28", "--width", "27"])), 2);
}
