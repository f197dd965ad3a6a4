use std::path::{Path, PathBuf};
use std::process::Command;

use difs::formats::{load_signatures, save_dump, save_signatures, ActivationDump, DumpFrame};
use difs::net::Scale;
use difs::{LabeledSample, Tensor3};
use difs_cli::{run_main, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run_main(std::iter::once("difs").chain(args.iter().copied()), &mut out, &mut err);
    Run {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn fixture_weights() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/reference_s256.mfcn")
}

/// One 64x48 frame letterboxed to 64, layers 3 (4 channels, 8x8) and
/// 5 (4 channels, 4x4).
fn write_small_dump(dir: &Path) -> PathBuf {
    let mut d = ActivationDump::new(64, 64, 48);
    let layers = [
        (3, Tensor3::from_fn(4, 8, 8, |c, y, x| (c + 1) as f32 * 0.5 + (y * 8 + x) as f32 * 0.01).unwrap()),
        (5, Tensor3::filled(4, 4, 4, 2.0).unwrap()),
    ]
    .into_iter()
    .collect();
    d.frames.push(DumpFrame { frame: 0, layers });
    let path = dir.join("small.difd");
    save_dump(&path, &d).unwrap();
    path
}

fn write_csv(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("ann.csv");
    std::fs::write(&path, format!("frame,track,type,x1,y1,x2,y2\n{body}")).unwrap();
    path
}

#[test]
fn extract_from_dump_writes_one_signature_per_annotation() {
    let dir = tempfile::tempdir().unwrap();
    let dump = write_small_dump(dir.path());
    let ann = write_csv(dir.path(), "0,a,car,0,0,16,16\n0,b,car,32,16,64,40\n");
    let out = dir.path().join("sigs.csv");
    let r = run(&["extract", "--dump", p(&dump), "--annotations", p(&ann), "--layer", "5", "-o", p(&out)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert!(r.stdout.starts_with("extracted 2 signatures from 1 frames"), "{}", r.stdout);
    let sigs = load_signatures(&out).unwrap();
    assert_eq!(sigs.len(), 2);
    assert_eq!(sigs[0].label, "a");
    assert_eq!(sigs[0].layer, 5);
    // 8 rows of top padding put box a at y 8..24: cells x 0..1, y 0..2 at stride 16
    assert_eq!(sigs[0].values, vec![2.0 * 2.0; 4]);
}

#[test]
fn missing_layer_is_a_data_error_naming_the_layer() {
    let dir = tempfile::tempdir().unwrap();
    let dump = write_small_dump(dir.path());
    let ann = write_csv(dir.path(), "0,a,car,0,0,16,16\n");
    let out = dir.path().join("sigs.csv");
    let r = run(&["extract", "--dump", p(&dump), "--annotations", p(&ann), "--layer", "12", "-o", p(&out)]);
    assert_eq!(r.code, EXIT_DATA);
    assert!(r.stderr.contains("signature layer 12"), "{}", r.stderr);
    assert!(r.stderr.contains("layers present: 3, 5"), "{}", r.stderr);
    assert!(!out.exists());
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let sigs = dir.path().join("s.csv");
    let report = dir.path().join("r.txt");
    for args in [
        vec!["evaluate", "--signatures", p(&sigs), "-o", p(&report), "--seed", "1", "--k", "4"],
        vec!["evaluate", "--signatures", p(&sigs), "-o", p(&report)],
        vec!["evaluate", "--signatures", p(&sigs), "-o", p(&report), "--seed", "1", "--metric", "cosine"],
        vec!["extract", "--annotations", "a.csv", "--layer", "3", "-o", "x"],
        vec!["extract", "--dump", "d", "--weights", "w", "--images", "i", "--annotations", "a", "--layer", "3", "-o", "x"],
        vec!["extract", "--dump", "d", "--annotations", "a", "--scale-layer", "huge=3", "-o", "x"],
        vec!["match", "--gallery", "g", "--queries", "q", "--k", "0"],
        vec!["frobnicate"],
    ] {
        let r = run(&args);
        assert_eq!(r.code, EXIT_USAGE, "{args:?}: {}", r.stderr);
        assert!(!r.stderr.is_empty());
    }
    assert_eq!(run(&["--help"]).code, EXIT_OK);
}

fn clustered(instances: usize, per: usize, p: usize, spread: f32, seed: u64) -> Vec<LabeledSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..instances {
        let centre: Vec<f32> = (0..p).map(|_| rng.gen_range(-1000.0..1000.0)).collect();
        for j in 0..per {
            out.push(LabeledSample {
                label: format!("v{i}"),
                frame: j as u32,
                scale: Scale::Medium,
                layer: 22,
                values: centre.iter().map(|c| c + rng.gen_range(-spread..spread)).collect(),
            });
        }
    }
    out
}

#[test]
fn evaluate_separable_set_is_perfect_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let sigs = dir.path().join("s.csv");
    save_signatures(&sigs, &clustered(6, 25, 8, 1.0, 5)).unwrap();
    let (r1, r2) = (dir.path().join("r1.txt"), dir.path().join("r2.txt"));
    for r in [&r1, &r2] {
        let run = run(&["evaluate", "--signatures", p(&sigs), "-o", p(r), "--seed", "9"]);
        assert_eq!(run.code, EXIT_OK, "{}", run.stderr);
    }
    let text = std::fs::read_to_string(&r1).unwrap();
    assert_eq!(text, std::fs::read_to_string(&r2).unwrap());
    assert!(text.contains("\nmean_accuracy=1\n"), "{text}");
    assert!(text.contains("\nstd_accuracy=0\n"), "{text}");
    assert!(text.contains("\nsamples=120\n"), "{text}");

    let temporal = dir.path().join("t.txt");
    let run = run(&["evaluate", "--signatures", p(&sigs), "-o", p(&temporal), "--seed", "9", "--holdout-frames", "--k", "3"]);
    assert_eq!(run.code, EXIT_OK, "{}", run.stderr);
    let text = std::fs::read_to_string(&temporal).unwrap();
    assert!(text.contains("fold_strategy=stratified-temporal"), "{text}");
    assert!(text.contains("\nk=3\n"), "{text}");
}

#[test]
fn evaluate_reports_harness_errors_as_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let sigs = dir.path().join("s.csv");
    save_signatures(&sigs, &clustered(3, 10, 4, 1.0, 5)).unwrap();
    let r = run(&["evaluate", "--signatures", p(&sigs), "-o", p(&dir.path().join("r")), "--seed", "1"]);
    assert_eq!(r.code, EXIT_DATA);
    assert!(!r.stderr.is_empty());
}

#[test]
fn match_ranks_like_a_full_sort() {
    let dir = tempfile::tempdir().unwrap();
    let gallery_set = clustered(4, 6, 5, 50.0, 21);
    let gallery = dir.path().join("g.csv");
    save_signatures(&gallery, &gallery_set).unwrap();
    let query_set = vec![gallery_set[7].clone(), clustered(1, 1, 5, 1.0, 99).remove(0)];
    let queries = dir.path().join("q.csv");
    save_signatures(&queries, &query_set).unwrap();

    let r = run(&["match", "--gallery", p(&gallery), "--queries", p(&queries), "--k", "6"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let lines: Vec<&str> = r.stdout.lines().collect();
    assert_eq!(lines.len(), 12);
    assert!(lines[0].starts_with("query=0 query_label=v1 rank=1 label=v1 distance=0 gallery_index=7"), "{}", lines[0]);

    for (qi, q) in query_set.iter().enumerate() {
        let mut oracle: Vec<(f64, usize)> = gallery_set
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let d: f64 = q.values.iter().zip(&g.values).map(|(a, b)| (f64::from(*a) - f64::from(*b)).abs()).sum();
                (d, i)
            })
            .collect();
        oracle.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (rank, (_, idx)) in oracle.iter().take(6).enumerate() {
            let line = lines[qi * 6 + rank];
            assert!(line.contains(&format!(" rank={} ", rank + 1)), "{line}");
            assert!(line.contains(&format!(" gallery_index={idx} ")), "{line}");
        }
    }

    let r = run(&["match", "--gallery", p(&gallery), "--queries", p(&queries), "--k", "25"]);
    assert_eq!(r.code, EXIT_DATA);
    assert!(r.stderr.contains("exceeds the gallery size 24"), "{}", r.stderr);

    let empty = dir.path().join("e.csv");
    save_signatures(&empty, &[]).unwrap();
    let r = run(&["match", "--gallery", p(&empty), "--queries", p(&queries), "--k", "1"]);
    assert_eq!(r.code, EXIT_DATA);
    assert!(r.stderr.contains("holds no signatures"), "{}", r.stderr);
}

/// Renders a small scene, dumps it through the committed weights and checks
/// that repeated extraction is byte-identical and agrees with the direct
/// weights-and-images path.
#[test]
fn rendered_scene_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    let r = run(&["render", "--vehicles", "4", "--frames-per-vehicle", "2", "-o", p(&frames)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    let ann = frames.join("annotations.csv");
    let weights = fixture_weights();

    let dump = dir.path().join("scene.difd");
    let r = run(&["dump", "--weights", p(&weights), "--images", p(&frames), "--layers", "22,52", "-o", p(&dump)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);

    let outs: Vec<PathBuf> = (0..2).map(|i| dir.path().join(format!("sig{i}.csv"))).collect();
    for o in &outs {
        let r = run(&["extract", "--dump", p(&dump), "--annotations", p(&ann), "--layer", "22", "-o", p(o)]);
        assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
        assert!(r.stdout.starts_with("extracted 8 signatures from 2 frames"), "{}", r.stdout);
    }
    let a = std::fs::read(&outs[0]).unwrap();
    assert_eq!(a, std::fs::read(&outs[1]).unwrap());

    let direct = dir.path().join("direct.csv");
    let r = run(&[
        "extract", "--weights", p(&weights), "--images", p(&frames), "--annotations", p(&ann), "--layer", "22", "-o",
        p(&direct),
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert_eq!(a, std::fs::read(&direct).unwrap());

    let detector = dir.path().join("det.csv");
    let r = run(&[
        "extract", "--weights", p(&weights), "--images", p(&frames), "--annotations", p(&ann), "--layer", "22",
        "--detector", "--conf-threshold", "0.0", "--match-iou", "0.0", "-o", p(&detector),
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.stderr);
    assert_eq!(load_signatures(&detector).unwrap().len(), 8, "{}", r.stdout);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_difs");
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(bin).args(["evaluate", "--k", "4"]).status().unwrap();
    assert_eq!(status.code(), Some(EXIT_USAGE));
    let missing = dir.path().join("nope.csv");
    let status = Command::new(bin)
        .args(["evaluate", "--signatures", p(&missing), "-o", p(&dir.path().join("r")), "--seed", "1"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_DATA));
    assert!(String::from_utf8_lossy(&status.stderr).contains("nope.csv"));
    let weights = dir.path().join("w.mfcn");
    let status = Command::new(bin).args(["gen-weights", "--side", "64", "-o", p(&weights)]).status().unwrap();
    assert_eq!(status.code(), Some(EXIT_OK));
    assert!(difs::net::load_network(&weights).is_ok());
}
