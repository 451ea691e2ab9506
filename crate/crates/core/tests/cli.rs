use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::io::Write;

fn qopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qopt")).args(args).output().unwrap()
}

fn tiny_png(dir: &Path) -> PathBuf {
    let img = image::RgbImage::from_fn(16, 16, |x, y| image::Rgb([(x * 15) as u8, (y * 15) as u8, ((x ^ y) * 15) as u8]));
    let path = dir.join("tiny.png");
    img.save(&path).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn optimize_tiny_image_emits_candidates() {
    let dir = tempfile::tempdir().unwrap();
    let input = tiny_png(dir.path());
    let out = dir.path().join("run");
    let o = qopt(&["optimize", s(&input), "--epochs", "2", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let entries = qopt::harness::load_candidates(&out).unwrap();
    assert!(!entries.is_empty());
    for e in &entries {
        assert!(out.join(&e.jpeg).is_file());
        assert!(out.join(&e.tables).is_file());
        assert!(out.join(&e.preview).is_file());
        assert_eq!(fs::metadata(out.join(&e.jpeg)).unwrap().len() as usize, e.size_bytes);
    }
    for f in ["run_record.json", "timing.json", "summary.csv", "summary.txt", "config.txt", "checkpoint/params.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let csv = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("image_id,method,size_bytes,ms_ssim,bpp"));
}

#[test]
fn fixed_seed_gives_identical_record() {
    let dir = tempfile::tempdir().unwrap();
    let input = tiny_png(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert!(qopt(&["optimize", s(&input), "--epochs", "3", "--seed", "11", "--out", s(out)]).status.success());
    }
    let ra = fs::read(a.join("run_record.json")).unwrap();
    assert_eq!(ra, fs::read(b.join("run_record.json")).unwrap());
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let input = tiny_png(dir.path());
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# short run\nepochs = 4\nseed = 3\n").unwrap();
    let out = dir.path().join("run");
    let o = qopt(&["optimize", s(&input), "--config", s(&cfg), "--epochs", "1", "--out", s(&out)]);
    assert!(o.status.success());
    let text = fs::read_to_string(out.join("config.txt")).unwrap();
    let used = qopt::config::RunConfig::parse(&text).unwrap();
    assert_eq!((used.epochs, used.seed), (1, 3));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let input = tiny_png(dir.path());
    let out = dir.path().join("run");
    assert_eq!(qopt(&["optimize"]).status.code(), Some(1));
    assert_eq!(qopt(&["optimize", s(&input), "--frobnicate"]).status.code(), Some(1));
    assert_eq!(qopt(&["optimize", s(&input), "--tau", "1.5", "--out", s(&out)]).status.code(), Some(2));
    assert_eq!(qopt(&["optimize", s(&input), "--bins-width", "0", "--out", s(&out)]).status.code(), Some(2));
    let bad_cfg = dir.path().join("bad.cfg");
    fs::write(&bad_cfg, "no_such_key = 1\n").unwrap();
    assert_eq!(qopt(&["optimize", s(&input), "--config", s(&bad_cfg), "--out", s(&out)]).status.code(), Some(2));
    assert_eq!(qopt(&["optimize", s(&dir.path().join("missing.png")), "--out", s(&out)]).status.code(), Some(3));
    assert_eq!(qopt(&["select", s(&dir.path().join("nothing"))]).status.code(), Some(3));
}

#[test]
fn select_modes() {
    let dir = tempfile::tempdir().unwrap();
    let input = tiny_png(dir.path());
    let out = dir.path().join("run");
    assert!(qopt(&["optimize", s(&input), "--epochs", "2", "--out", s(&out)]).status.success());
    let entries = qopt::harness::ordered_by_size(qopt::harness::load_candidates(&out).unwrap());

    let o = qopt(&["select", s(&out), "--non-interactive", "--threshold", "0"]);
    assert!(o.status.success());
    assert_eq!(fs::read(out.join("final.jpg")).unwrap(), fs::read(out.join(&entries[0].jpeg)).unwrap());

    assert_eq!(qopt(&["select", s(&out), "--non-interactive", "--threshold", "1.1"]).status.code(), Some(3));

    let last = entries.len() - 1;
    let pick = dir.path().join("pick.jpg");
    let mut child = Command::new(env!("CARGO_BIN_EXE_qopt"))
        .args(["select", s(&out), "--out", s(&pick)])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    writeln!(child.stdin.take().unwrap(), "{last}").unwrap();
    let o = child.wait_with_output().unwrap();
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("ms-ssim"));
    assert_eq!(fs::read(&pick).unwrap(), fs::read(out.join(&entries[last].jpeg)).unwrap());
}

#[test]
fn encode_then_compare() {
    let dir = tempfile::tempdir().unwrap();
    let input = tiny_png(dir.path());
    let tables = dir.path().join("q60.json");
    fs::write(&tables, qopt::codec::QuantTableSet::standard(60, 3, 2).unwrap().to_json().unwrap()).unwrap();
    let jpg = dir.path().join("q60.jpg");
    assert!(qopt(&["encode", s(&input), "--tables", s(&tables), "--out", s(&jpg)]).status.success());
    let junk = dir.path().join("junk.jpg");
    fs::write(&junk, [0xFF, 0xD8, 0x00]).unwrap();
    let csv = dir.path().join("report.csv");
    let o = qopt(&["compare", s(&input), s(&jpg), s(&input), s(&junk), "--out", s(&csv)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = qopt::report::read_csv(fs::File::open(&csv).unwrap()).unwrap();
    let methods: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(methods, ["q60", "tiny", "junk", "annexk_q50", "annexk_q75", "annexk_q90"]);
    assert_eq!(rows[1].ms_ssim, Some(1.0));
    assert!(rows[2].is_failed());
    assert_eq!(rows[0].size_bytes, Some(fs::metadata(&jpg).unwrap().len() as usize));
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 1 + rows.len());
}
