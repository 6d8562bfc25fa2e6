use std::fs;
use std::path::Path;
use std::process::Command;

use scatvox::synth::{Param, PlantCounts, PlantSpec, TextureCorpus, TextureKind};
use scatvox::Raster;
use scatvox_cli::formats::*;
use scatvox_cli::report::Summary;
use scatvox_cli::run_subcommand;

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["scatvox".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    run_subcommand(&argv)
}

fn bin(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_scatvox")).args(args).env_remove("SCATTER_THREADS").output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn no_arguments_prints_usage_and_fails() {
    let (code, err) = bin(&[]);
    assert_eq!(code, 1);
    assert!(err.starts_with("error:") && err.contains("Usage"), "{err}");
    let (code, err) = bin(&["filters", "--J", "3", "--L", "4", "--size", "32x32", "--out", "x.json", "--bogus"]);
    assert_eq!(code, 1);
    assert!(err.starts_with("error:") && err.contains("--bogus"), "{err}");
    assert_eq!(bin(&["frobnicate"]).0, 1);
    assert_eq!(bin(&["--help"]).0, 0);
}

#[test]
fn raster_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let u = Raster::from_fn(7, 5, |x, y| (x as f32 * 0.37 - y as f32).sin() * 1e-3 + f32::MIN_POSITIVE * x as f32);
    let path = dir.path().join("u.ras");
    write_raster(&path, &u).unwrap();
    let back = read_image(&path).unwrap();
    assert!(u.data().iter().zip(back.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!((back.width(), back.height()), (7, 5));
    assert_eq!(fs::read(&path).unwrap().len(), 16 + 4 * 35);
}

#[test]
fn pgm_is_scaled_to_unit_interval() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.pgm");
    let mut bytes = b"P5\n# comment\n3 2\n255\n".to_vec();
    bytes.extend([0u8, 51, 255, 102, 204, 153]);
    fs::write(&path, bytes).unwrap();
    let u = read_image(&path).unwrap();
    assert_eq!((u.width(), u.height()), (3, 2));
    assert_eq!(u.data(), &[0.0, 0.2, 1.0, 0.4, 0.8, 0.6]);
}

#[test]
fn malformed_inputs_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ras");
    fs::write(&bad, b"SCATRAS1\x04\0\0\0\x04\0\0\0short").unwrap();
    let (code, err) = bin(&["scatter", "--images", p(&bad), "--M", "1", "--J", "1", "--L", "1", "--out", p(&dir.path().join("f.csv"))]);
    assert_eq!(code, 1);
    assert!(err.contains("bad.ras") && err.contains("malformed"), "{err}");

    let sessions = dir.path().join("s.csv");
    fs::write(&sessions, "image_id,session\n0,1\n").unwrap();
    assert!(read_sessions(&sessions).unwrap_err().to_string().contains("s.csv"));

    let a = dir.path().join("a.ras");
    let b = dir.path().join("b.ras");
    write_raster(&a, &Raster::from_fn(16, 16, |x, _| x as f32)).unwrap();
    write_raster(&b, &Raster::from_fn(16, 12, |x, _| x as f32)).unwrap();
    let (code, err) = bin(&["scatter", "--images", &format!("{},{}", p(&a), p(&b)), "--M", "1", "--J", "1", "--L", "1", "--out", p(&dir.path().join("f.csv"))]);
    assert_eq!(code, 1);
    assert!(err.contains("shape mismatch") && err.contains("b.ras"), "{err}");
}

#[test]
fn matrix_and_table_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let rows = vec!["a".to_string(), "bé".to_string()];
    let cols = vec!["x".to_string(), "y".to_string(), "z".to_string()];
    let values = vec![1.0, -0.0, f64::MIN_POSITIVE, 1e300, 0.1, -7.25];
    let path = dir.path().join("m.bin");
    write_bytes(&path, &encode_matrix(&rows, &cols, &values)).unwrap();
    let (r, c, v) = decode_matrix(&fs::read(&path).unwrap(), &path).unwrap();
    assert_eq!((r, c), (rows, cols));
    assert!(v.iter().zip(&values).all(|(a, b)| a.to_bits() == b.to_bits()));

    let sessions = scatvox::synth::gen_session_labels(12, 3, 2).unwrap();
    let sp = dir.path().join("sessions.csv");
    write_sessions(&sp, &sessions).unwrap();
    assert_eq!(read_sessions(&sp).unwrap(), sessions);
    assert!(fs::read_to_string(&sp).unwrap().starts_with("image_id,session,block\n"));
}

#[test]
fn nine_significant_digits() {
    assert_eq!(fmt9(0.1), "1.00000000e-1");
    assert_eq!(fmt9(-123456.789012), "-1.23456789e5");
    assert_eq!(fmt9(0.0), "0.00000000e0");
    let x = 0.123456789123f64;
    assert!((fmt9(x).parse::<f64>().unwrap() - x).abs() <= 1e-9 * x);
}

#[test]
fn filters_config_round_trip_and_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lp.json");
    let spectra = dir.path().join("spectra");
    assert_eq!(run(&["filters", "--J", "3", "--L", "4", "--size", "32x32", "--out", p(&out), "--spectra-dir", p(&spectra)]), 0);
    let cfg = dir.path().join("lp.run_config.txt");
    let text = fs::read_to_string(&cfg).unwrap();
    assert!(text.contains("J=3") && text.contains("size=32x32"), "{text}");
    assert_eq!(fs::read_dir(&spectra).unwrap().count(), 12);
    let psi = read_image(&spectra.join("psi_j0g0.ras")).unwrap();
    assert!(psi.data()[0].abs() < 1e-12);

    let first = fs::read(&out).unwrap();
    fs::remove_file(&out).unwrap();
    assert_eq!(run(&["filters", "--config", p(&cfg)]), 0);
    assert_eq!(fs::read(&out).unwrap(), first);

    // explicit flags beat the file
    let other = dir.path().join("other.json");
    assert_eq!(run(&["filters", "--config", p(&cfg), "--L", "2", "--out", p(&other)]), 0);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(&other).unwrap()).unwrap();
    assert_eq!(report["params"]["L"], 2);

    let typo = dir.path().join("typo.txt");
    fs::write(&typo, "J=3\nL=4\nsize=32x32\nout=x.json\nsigma=0.9\n").unwrap();
    let (code, err) = bin(&["filters", "--config", p(&typo)]);
    assert_eq!(code, 1);
    assert!(err.starts_with("error:") && err.contains("unknown key 'sigma'"), "{err}");

    assert_eq!(run(&["filters", "--J", "9", "--L", "4", "--size", "16x16", "--out", p(&out)]), 1);
    assert_eq!(run(&["filters", "--J", "3", "--L", "4", "--size", "32by32", "--out", p(&out)]), 1);
}

#[test]
fn scatter_three_images_gives_417_columns() {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("x");
    for i in 0..3 {
        let u = Raster::from_fn(32, 32, |x, y| ((x * (i + 2) + y * 3) % 7) as f32 / 7.0);
        write_raster(&images.join(format!("img{i}.ras")), &u).unwrap();
    }
    let out = dir.path().join("f.csv");
    assert_eq!(run(&["scatter", "--images", p(&images), "--M", "2", "--J", "4", "--L", "8", "--out", p(&out)]), 0);
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    let header: Vec<&str> = lines[0].split(',').collect();
    assert_eq!(header.len(), 1 + 417);
    assert_eq!(&header[..3], &["image_id", "m0", "m1_j0g0"]);
    assert_eq!(header[417], "m2_j2g7_j3g7");
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 418));
    assert_eq!(read_features(&out).unwrap().image_ids(), &["img0", "img1", "img2"]);
    assert!(dir.path().join("f.run_config.txt").exists());
}

fn small_corpus() -> TextureCorpus {
    let mut corpus = TextureCorpus::default_study(3);
    corpus.width = 32;
    corpus.height = 32;
    corpus.images_per_class = 6;
    for k in corpus.classes.iter_mut() {
        let k = match k {
            TextureKind::PhaseScrambledOf { source } => source.as_mut(),
            k => k,
        };
        if let TextureKind::Bars { length, .. } = k {
            *length = Param::Range([3.0, 10.0]);
        }
    }
    corpus
}

#[test]
fn synth_scatter_encode_compare_decode() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let textures = d.join("textures.json");
    let plant = d.join("plant.json");
    fs::write(&textures, serde_json::to_string(&small_corpus()).unwrap()).unwrap();
    let spec = PlantSpec {
        counts: PlantCounts { layer1_only: 3, layer2_only: 3, mixed: 0, null: 2 },
        snr: Some(2.0),
        seed: 5,
    };
    fs::write(&plant, serde_json::to_string(&spec).unwrap()).unwrap();
    let study = d.join("study");
    assert_eq!(
        run(&["synth", "--textures", p(&textures), "--plant", p(&plant), "--J", "3", "--L", "4", "--sessions", "6", "--blocks-per-session", "2", "--out-dir", p(&study)]),
        0
    );
    for f in ["responses.bin", "sessions.csv", "labels.csv", "ground_truth.json", "run_config.txt", "images/35.ras"] {
        assert!(study.join(f).exists(), "{f}");
    }

    // scattering the written images reproduces the synth features
    let features = d.join("features.bin");
    assert_eq!(run(&["scatter", "--images", p(&study.join("images")), "--M", "2", "--J", "3", "--L", "4", "--out", p(&features)]), 0);
    assert_eq!(read_features(&features).unwrap(), read_features(&study.join("features.bin")).unwrap());

    let (responses, sessions) = (study.join("responses.bin"), study.join("sessions.csv"));
    let (cv1, cv2) = (d.join("cv_m1.json"), d.join("cv_m2.json"));
    let grid = "0.01,1,100";
    let encode = |max_layer: &str, out: &Path| {
        run(&["encode", "--features", p(&features), "--responses", p(&responses), "--sessions", p(&sessions), "--lambda-grid", grid, "--max-layer", max_layer, "--out", p(out)])
    };
    assert_eq!(encode("1", &cv1), 0);
    assert_eq!(encode("2", &cv2), 0);
    let a = read_cv(&cv1).unwrap();
    assert_eq!(a.voxel_ids.len(), 8);
    assert_eq!(a.lambda_grid, vec![0.01, 1.0, 100.0]);

    let (map, scatter, summary) = (d.join("map.csv"), d.join("scatter.csv"), d.join("summary.json"));
    let out = format!("{},{}", p(&map), p(&scatter));
    assert_eq!(run(&["compare", "--a", p(&cv1), "--b", p(&cv2), "--top-k", "5", "--out", &out, "--summary", p(&summary)]), 0);
    assert_eq!(fs::read_to_string(&map).unwrap().lines().count(), 1 + 8);
    assert_eq!(fs::read_to_string(&scatter).unwrap().lines().count(), 1 + 5);
    let s: Summary = serde_json::from_str(&fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(s.models.len(), 2);
    assert!(s.missing.contains(&"decode".to_string()) && s.decode.is_none());
    let c = s.counts.unwrap();
    assert_eq!(c.red + c.blue + c.unlabeled, 8);

    let decoded = d.join("decode.json");
    assert_eq!(
        run(&["decode", "--responses", p(&responses), "--labels", p(&study.join("labels.csv")), "--blocks", p(&sessions), "--out", p(&decoded)]),
        0
    );
    let result = read_decode(&decoded).unwrap();
    assert_eq!(result.folds.len(), 12);
    assert!((result.chance - 1.0 / 6.0).abs() < 1e-12);
    let by_session = d.join("decode_s.json");
    assert_eq!(
        run(&["decode", "--responses", p(&responses), "--labels", p(&study.join("labels.csv")), "--blocks", p(&sessions), "--cv-unit", "session", "--out", p(&by_session)]),
        0
    );
    assert_eq!(read_decode(&by_session).unwrap().folds.len(), 6);

    // labels missing an image
    let partial = d.join("partial.csv");
    fs::write(&partial, "image_id,label\n0,1\n").unwrap();
    let (code, err) = bin(&["decode", "--responses", p(&responses), "--labels", p(&partial), "--blocks", p(&sessions), "--out", p(&decoded)]);
    assert_eq!(code, 1);
    assert!(err.contains("partial.csv"), "{err}");
}

#[test]
fn identical_results_report_degenerate_test() {
    let dir = tempfile::tempdir().unwrap();
    let cv = scatvox::encoding::CvResult {
        voxel_ids: (0..10).map(|v| format!("v{v}")).collect(),
        sessions: vec![1, 2],
        lambda_grid: vec![1.0],
        selection: scatvox::encoding::LambdaSelection::PerVoxel,
        fold_r2: vec![vec![0.1; 10]; 2],
        fold_lambda: vec![vec![1.0; 10]; 2],
        mean_r2: (0..10).map(|v| v as f64 / 20.0).collect(),
    };
    let path = dir.path().join("cv.json");
    write_json(&path, &cv).unwrap();
    let summary = dir.path().join("summary.json");
    let out = format!("{},{}", p(&dir.path().join("map.csv")), p(&dir.path().join("scatter.csv")));
    assert_eq!(run(&["compare", "--a", p(&path), "--b", p(&path), "--out", &out, "--summary", p(&summary)]), 0);
    let s: Summary = serde_json::from_str(&fs::read_to_string(&summary).unwrap()).unwrap();
    let w = s.wilcoxon_top_k.unwrap();
    assert!(w.result.is_none() && w.error.unwrap().contains("degenerate"));
    assert_eq!(s.counts.unwrap().blue, 10);
    // k larger than the voxel count
    assert_eq!(fs::read_to_string(dir.path().join("scatter.csv")).unwrap().lines().count(), 11);
    assert_eq!(run(&["compare", "--a", p(&path), "--b", p(&path), "--out", "only_one.csv"]), 1);
}

#[test]
fn thread_settings_are_validated() {
    let out = Command::new(env!("CARGO_BIN_EXE_scatvox"))
        .args(["filters", "--J", "2", "--L", "2", "--size", "16x16", "--out", "/dev/null"])
        .env("SCATTER_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("SCATTER_THREADS"));
    assert_eq!(run(&["filters", "--threads", "0", "--J", "2", "--L", "2", "--size", "16x16", "--out", "/dev/null"]), 1);
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let (code, err) = bin(&["filters", "--J", "2", "--L", "2", "--size", "16x16", "--out", "/proc/nope/lp.json"]);
    assert_eq!(code, 2, "{err}");
    assert!(err.starts_with("error:"));
}
