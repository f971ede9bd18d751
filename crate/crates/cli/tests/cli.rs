use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use glyphocr::net::Network;
use glyphocr::synth::PageTruth;

const TINY_ARCH: &str = "arch=48x48-MP2-MP2-4C3-MP2-16SM";

fn glyphocr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glyphocr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = glyphocr(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    glyphocr(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_data(dir: &Path, seed: &str) {
    ok(&["gen-data", "--out", s(dir), "--seed", seed, "--set", "styles_per_class=3"]);
}

#[test]
fn gen_data_layout_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    tiny_data(&a, "5");
    tiny_data(&b, "5");
    tiny_data(&c, "6");
    for f in ["labels.tsv", "vocab.txt", "train/00000.pbm", "valid/00000.pbm", "test/00000.pbm"] {
        assert!(a.join(f).exists(), "{f} missing");
    }
    let labels = |d: &Path| fs::read_to_string(d.join("labels.tsv")).unwrap();
    assert_eq!(labels(&a).lines().count(), 1 + 16 * 3);
    assert_eq!(fs::read(a.join("train/00003.pbm")).unwrap(), fs::read(b.join("train/00003.pbm")).unwrap());
    assert_eq!(labels(&a), labels(&b));
    assert_ne!(labels(&a), labels(&c));
    assert_eq!(fs::read_to_string(a.join("vocab.txt")).unwrap().lines().count(), 16);
}

#[test]
fn gen_corpus_writes_model_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("lm");
    ok(&["gen-corpus", "--out", s(&out), "--sentences", "300"]);
    let corpus = fs::read_to_string(out.join("corpus.txt")).unwrap();
    assert_eq!(corpus.lines().count(), 300);
    let lm = glyphocr::langmodel::TrigramTable::load(&out.join("lm.txt")).unwrap();
    assert_eq!((lm.k, lm.order), (16, 3));
    let vocab = glyphocr::langmodel::Vocabulary::load(&out.join("vocab.txt")).unwrap();
    assert_eq!(vocab.parse_corpus(&corpus).unwrap().len(), 300);
    assert_eq!(code(&["gen-corpus", "--out", s(&out), "--set", "alphabet=runic"]), 1);
}

#[test]
fn gen_pages_erasure_rate_shows_in_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let (clean, broken) = (tmp.path().join("clean"), tmp.path().join("broken"));
    ok(&["gen-pages", "--out", s(&clean), "--pages", "3"]);
    ok(&["gen-pages", "--out", s(&broken), "--pages", "6", "--erasure", "0.25", "--seed", "4"]);
    let truths = |d: &Path, n: usize| -> Vec<PageTruth> {
        (0..n)
            .map(|i| {
                assert!(d.join(format!("page_{i:03}.pbm")).exists());
                PageTruth::parse(&fs::read_to_string(d.join(format!("page_{i:03}.truth"))).unwrap()).unwrap()
            })
            .collect()
    };
    assert!(truths(&clean, 3).iter().all(|t| t.erasures.is_empty()));
    let pages = truths(&broken, 6);
    let n: usize = pages.iter().map(|t| t.glyph_count()).sum();
    let hit: usize = pages.iter().map(|t| t.erasures.len()).sum();
    let (n, hit) = (n as f64, hit as f64);
    let sigma = (n * 0.25 * 0.75).sqrt();
    assert!((hit - 0.25 * n).abs() <= 3.0 * sigma, "{hit} erasures over {n} glyphs");
}

#[test]
fn train_writes_model_and_curve() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    tiny_data(&data, "1");
    let model = tmp.path().join("m.bin");
    ok(&["train", "--data", s(&data), "--out", s(&model), "--epochs", "2", "--set", TINY_ARCH, "--no-dropout", "--no-distortion"]);
    let curve = fs::read_to_string(model.with_extension("csv")).unwrap();
    assert_eq!(curve.lines().next().unwrap(), "epoch,train_err,train_loss,valid_err,valid_loss,test_err");
    assert_eq!(curve.lines().count(), 3);
    let net = Network::load(&model).unwrap();
    assert_eq!(net.spec.dropout, 0.0);
    assert_eq!(net.num_classes(), 16);

    // same inputs and seed give the same model
    let again = tmp.path().join("again.bin");
    ok(&["train", "--data", s(&data), "--out", s(&again), "--epochs", "2", "--set", TINY_ARCH, "--no-dropout", "--no-distortion"]);
    assert_eq!(fs::read(&model).unwrap(), fs::read(&again).unwrap());

    let resumed = tmp.path().join("r.bin");
    ok(&["train", "--data", s(&data), "--out", s(&resumed), "--epochs", "1", "--set", TINY_ARCH, "--resume", s(&model)]);
    let other = "arch=48x48-MP2-MP2-6C3-MP2-16SM";
    let out = glyphocr(&["train", "--data", s(&data), "--out", s(&resumed), "--set", other, "--resume", s(&model)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("was built for"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["gen-pages", "--out", s(tmp.path()), "--set", "epochz=3"]), 1);
    assert_eq!(code(&["gen-pages", "--out", s(tmp.path()), "--erasure", "0.9"]), 1);
    let cfg = tmp.path().join("bad.conf");
    fs::write(&cfg, "m = 0\n").unwrap();
    assert_eq!(code(&["--config", s(&cfg), "gen-pages", "--out", s(tmp.path())]), 1);
    assert_eq!(code(&["--config", s(&tmp.path().join("missing.conf")), "gen-pages", "--out", s(tmp.path())]), 1);
    let lm = tmp.path().join("lm.txt");
    assert_eq!(code(&["ocr", "--model", s(&tmp.path().join("none.bin")), "--lm", s(&lm), s(tmp.path())]), 2);
    assert_eq!(code(&["train", "--data", s(&tmp.path().join("nodata")), "--out", s(&lm)]), 2);

    // an exploding learning rate surfaces as a numeric failure
    let data = tmp.path().join("data");
    tiny_data(&data, "2");
    let args = [
        "train", "--data", s(&data), "--out", s(&lm), "--epochs", "3", "--set", TINY_ARCH,
        "--set", "learning_rate=1e300", "--set", "linf_clip=1e300", "--no-distortion",
    ];
    assert_eq!(code(&args), 3);
}

#[test]
fn ablate_grid_enumerates_configured_variants() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    tiny_data(&data, "3");
    let (csv, summary) = (tmp.path().join("abl.csv"), tmp.path().join("sum.csv"));
    let text = ok(&[
        "ablate", "--data", s(&data), "--out", s(&csv), "--summary", s(&summary), "--runs", "2",
        "--variants", "baseline,no-location,dropout-0.2", "--set", TINY_ARCH, "--set", "epochs=1",
        "--seed", "10",
    ]);
    let rows: Vec<Vec<String>> = fs::read_to_string(&csv)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    let keys: Vec<(&str, &str)> = rows.iter().map(|r| (r[0].as_str(), r[1].as_str())).collect();
    assert_eq!(
        keys,
        [
            ("baseline", "10"),
            ("baseline", "11"),
            ("no-location", "10"),
            ("no-location", "11"),
            ("dropout-0.2", "10"),
            ("dropout-0.2", "11")
        ]
    );
    let sum = fs::read_to_string(&summary).unwrap();
    assert_eq!(sum.lines().count(), 4);
    let first: Vec<f64> = rows[..2].iter().map(|r| r[3].parse().unwrap()).collect();
    let median: f64 = sum.lines().nth(1).unwrap().split(',').nth(3).unwrap().parse().unwrap();
    assert!((median - (first[0] + first[1]) / 2.0).abs() < 1e-12);
    assert!(text.contains("no-location"));
    assert_eq!(code(&["ablate", "--data", s(&tmp.path().join("none")), "--out", s(&csv)]), 2);
    assert_eq!(code(&["ablate", "--data", s(&data), "--out", s(&csv), "--variants", "sigmoid"]), 1);
}

#[test]
fn ocr_then_eval_is_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path();
    tiny_data(&p.join("data"), "1");
    let model = p.join("m.bin");
    ok(&["train", "--data", s(&p.join("data")), "--out", s(&model), "--epochs", "1", "--set", TINY_ARCH]);
    ok(&["gen-corpus", "--out", s(&p.join("lm")), "--sentences", "500"]);
    ok(&["gen-pages", "--out", s(&p.join("pages")), "--pages", "2", "--erasure", "0.2"]);
    let lm = p.join("lm/lm.txt");
    let run = |tag: &str| {
        let out = p.join(format!("ocr_{tag}"));
        let dumps = p.join(format!("dumps_{tag}"));
        ok(&["ocr", "--model", s(&model), "--lm", s(&lm), "--out", s(&out), "--dump-graphs", s(&dumps), s(&p.join("pages"))]);
        let csv = p.join(format!("{tag}.csv"));
        ok(&["eval", "--truth", s(&p.join("pages")), "--ocr", s(&out), "--csv", s(&csv)]);
        (fs::read_to_string(csv).unwrap(), out, dumps)
    };
    let (a, out, dumps) = run("a");
    let (b, _, _) = run("b");
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 4);
    assert!(a.lines().last().unwrap().starts_with("TOTAL,"));
    let truth = PageTruth::parse(&fs::read_to_string(p.join("pages/page_000.truth")).unwrap()).unwrap();
    let text = fs::read_to_string(out.join("page_000.txt")).unwrap();
    assert_eq!(text.lines().count(), truth.lines.len());
    assert!(fs::read_to_string(dumps.join("page_000_line00.seg.txt")).unwrap().starts_with("# segmentation graph"));
    assert!(dumps.join("page_000_line00.rec.txt").exists());

    // vocabulary of a different alphabet
    let pages = p.join("pages");
    let wrong = ["ocr", "--model", s(&model), "--lm", s(&lm), "--set", "alphabet=large", s(&pages)];
    assert_eq!(code(&wrong), 2);
    let junk = p.join("junk.pbm");
    fs::write(&junk, "not an image").unwrap();
    assert_eq!(code(&["ocr", "--model", s(&model), "--lm", s(&lm), s(&junk)]), 2);
}

#[test]
fn eval_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path();
    ok(&["gen-pages", "--out", s(&p.join("pages")), "--pages", "1", "--set", "lines_min=2"]);
    let truth = PageTruth::parse(&fs::read_to_string(p.join("pages/page_000.truth")).unwrap()).unwrap();
    let vocab = glyphocr::langmodel::Vocabulary::from_alphabet(&glyphocr::synth::AlphabetSpec::standard()).unwrap();
    let ocr = p.join("ocr");
    fs::create_dir(&ocr).unwrap();
    let exact: String = truth.text().iter().map(|l| vocab.decode(l).unwrap() + "\n").collect();
    fs::write(ocr.join("page_000.txt"), &exact).unwrap();
    let csv = p.join("e.csv");
    ok(&["eval", "--truth", s(&p.join("pages")), "--ocr", s(&ocr), "--csv", s(&csv)]);
    let total = fs::read_to_string(&csv).unwrap().lines().last().unwrap().to_string();
    let n = truth.glyph_count();
    assert_eq!(total, format!("TOTAL,{n},0,0,0,0,0.000000,0,0"));

    let mut lines = truth.text();
    lines[0][0] = (lines[0][0] + 1) % 16;
    let one_off: String = lines.iter().map(|l| vocab.decode(l).unwrap() + "\n").collect();
    fs::write(ocr.join("page_000.txt"), one_off).unwrap();
    ok(&["eval", "--truth", s(&p.join("pages")), "--ocr", s(&ocr), "--csv", s(&csv)]);
    let total = fs::read_to_string(&csv).unwrap().lines().last().unwrap().to_string();
    assert_eq!(total, format!("TOTAL,{n},1,0,0,1,{:.6},0,0", 1.0 / n as f64));

    fs::remove_file(ocr.join("page_000.txt")).unwrap();
    assert_eq!(code(&["eval", "--truth", s(&p.join("pages")), "--ocr", s(&ocr)]), 2);
    let empty = p.join("empty");
    fs::create_dir(&empty).unwrap();
    fs::write(empty.join("blank.truth"), "").unwrap();
    fs::write(empty.join("blank.txt"), "").unwrap();
    assert_eq!(code(&["eval", "--truth", s(&empty), "--ocr", s(&empty)]), 2);
}

#[test]
fn distort_preview_writes_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("p.pgm");
    ok(&["distort-preview", "--out", s(&out), "--samples", "3"]);
    let bytes = fs::read(&out).unwrap();
    let header = format!("P5\n{} {}\n255\n", 4 * 50 + 2, 16 * 50 + 2);
    assert!(bytes.starts_with(header.as_bytes()), "{:?}", String::from_utf8_lossy(&bytes[..20]));
}
