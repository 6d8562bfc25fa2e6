use std::collections::HashSet;

use num_complex::Complex64;
use scatvox::encoding::{nested_cv_encode, CvOptions};
use scatvox::fft::Fft2d;
use scatvox::raster::bin_frequency;
use scatvox::synth::*;
use scatvox::*;

fn bars_spec(seed: u64) -> TextureSpec {
    TextureSpec {
        kind: TextureKind::Bars {
            length: Param::Range([10.0, 30.0]),
            width: Param::Fixed(3.0),
            density: Param::Fixed(0.2),
            orientations: vec![0.0, 90.0],
            rotation: Param::Range([0.0, 180.0]),
        },
        width: 128,
        height: 128,
        seed,
    }
}

fn power(u: &Raster<f64>) -> Raster<f64> {
    Fft2d::new(u.width(), u.height())
        .forward_real(u)
        .map(|c: Complex64| c.norm_sqr())
}

fn radial_bands(u: &Raster<f64>, bands: usize) -> Vec<f64> {
    let p = power(u);
    let mut acc = vec![0.0; bands];
    for y in 0..u.height() {
        for x in 0..u.width() {
            let r = bin_frequency(x, u.width()).hypot(bin_frequency(y, u.height()));
            let b = ((r / std::f64::consts::PI) * bands as f64) as usize;
            if b < bands {
                acc[b] += p.get(x, y);
            }
        }
    }
    acc
}

#[test]
fn same_seed_same_texture() {
    let spec = TextureSpec {
        kind: TextureKind::PhaseScrambledOf {
            source: Box::new(bars_spec(0).kind),
        },
        ..bars_spec(42)
    };
    assert_eq!(gen_texture(&spec).unwrap(), gen_texture(&spec).unwrap());
    assert_ne!(gen_texture(&spec).unwrap(), gen_texture(&TextureSpec { seed: 43, ..spec.clone() }).unwrap());
}

#[test]
fn white_field_has_unit_variance() {
    let spec = TextureSpec {
        kind: TextureKind::GaussianField { alpha: Param::Fixed(0.0) },
        width: 128,
        height: 128,
        seed: 1,
    };
    let u = gen_texture(&spec).unwrap();
    assert!((u.variance() - 1.0).abs() <= 0.05);
    assert!(u.mean().abs() < 1e-12);
}

#[test]
fn scramble_preserves_power_exactly() {
    let u = gen_texture(&bars_spec(5)).unwrap();
    let s = phase_scramble(&u, 9).unwrap();
    let (pu, ps) = (power(&u), power(&s));
    let scale = pu.data().iter().cloned().fold(0.0, f64::max);
    for (a, b) in pu.data().iter().zip(ps.data()) {
        assert!((a - b).abs() <= 1e-10 * scale);
    }
    assert!((s.mean() - u.mean()).abs() < 1e-12);
    assert_ne!(s, u);

    // odd sizes have no Nyquist bins
    let v = Raster::from_fn(15, 9, |x, y| ((x * 7 + y * 3) % 5) as f64);
    let sv = phase_scramble(&v, 1).unwrap();
    let (pv, psv) = (power(&v), power(&sv));
    for (a, b) in pv.data().iter().zip(psv.data()) {
        assert!((a - b).abs() <= 1e-9);
    }
}

#[test]
fn bars_and_twin_share_radial_spectrum() {
    let u = gen_texture(&bars_spec(7)).unwrap();
    let twin = phase_scramble(&u, 8).unwrap();
    for (a, b) in radial_bands(&u, 16).iter().zip(radial_bands(&twin, 16)) {
        assert!((a - b).abs() <= 0.05 * a, "{a} vs {b}");
    }
}

#[test]
fn scrambling_moves_layer_two_more_than_layer_one() {
    // dense overlapping bars: sparse ones also move the layer-1 L1 means
    let dense = |seed| TextureSpec {
        kind: TextureKind::Bars {
            length: Param::Range([20.0, 60.0]),
            width: Param::Fixed(1.5),
            density: Param::Fixed(2.0),
            orientations: vec![0.0, 90.0],
            rotation: Param::Range([0.0, 180.0]),
        },
        ..bars_spec(seed)
    };
    let config = ScatteringConfig::new(2, 5, 4);
    let sc = Scatterer::new(&config, 128, 128).unwrap();
    let (mut d1, mut d2) = (0.0, 0.0);
    for seed in 0..20 {
        let u = gen_texture(&dense(seed)).unwrap();
        let v = phase_scramble(&u, 1000 + seed).unwrap();
        let a = sc.coefficients(&u).unwrap();
        let b = sc.coefficients(&v).unwrap();
        let rel = |layer: u8| {
            let idx: Vec<usize> = (0..a.len()).filter(|&k| sc.paths()[k].layer() == layer).collect();
            idx.iter().map(|&k| (a[k] - b[k]).abs() / a[k].abs()).sum::<f64>() / idx.len() as f64
        };
        d1 += rel(1) / 20.0;
        d2 += rel(2) / 20.0;
    }
    assert!(d2 >= 5.0 * d1, "layer 1 {d1:.4}, layer 2 {d2:.4}");
}

#[test]
fn default_corpus_is_balanced() {
    let corpus = TextureCorpus::default_study(7);
    assert_eq!(corpus.len(), 216);
    let per: Vec<usize> = (1..=6).map(|c| (0..216).filter(|&i| corpus.class_of(i) == c).count()).collect();
    assert_eq!(per, vec![36; 6]);
    assert_eq!(corpus.spec(3), corpus.spec(3));
    assert_ne!(corpus.spec(3).seed, corpus.spec(4).seed);
}

#[test]
fn study_session_layout() {
    let s = gen_session_labels(216, 6, 36).unwrap();
    assert_eq!(s.sessions(), (1..=6).collect::<Vec<u32>>());
    for session in 1..=6 {
        let rows: Vec<_> = s.entries().iter().filter(|e| e.session == session).collect();
        assert_eq!(rows.len(), 36);
        let blocks: HashSet<u32> = rows.iter().map(|e| e.block).collect();
        assert_eq!(blocks, (1..=36).collect());
    }
    let pairs: HashSet<(String, u32, u32)> =
        s.entries().iter().map(|e| (e.image_id.clone(), e.session, e.block)).collect();
    assert_eq!(pairs.len(), 216);
    assert_eq!(gen_session_labels(12, 3, 2).unwrap().entries().iter().filter(|e| e.session == 2).count(), 4);
}

fn small_study(per_class: usize) -> (FeatureMatrix, SessionLabels) {
    let mut corpus = TextureCorpus::default_study(3);
    corpus.width = 32;
    corpus.height = 32;
    corpus.images_per_class = per_class;
    for k in corpus.classes.iter_mut() {
        if let TextureKind::Bars { length, .. } = k {
            *length = Param::Range([3.0, 10.0]);
        }
        if let TextureKind::PhaseScrambledOf { source } = k {
            if let TextureKind::Bars { length, .. } = source.as_mut() {
                *length = Param::Range([3.0, 10.0]);
            }
        }
    }
    let images = corpus.generate().unwrap();
    let features = batch_scatter(&images, &ScatteringConfig::new(2, 3, 4)).unwrap();
    let sessions = gen_session_labels(images.len(), 6, 2).unwrap();
    (features, sessions)
}

#[test]
fn ground_truth_rebuilds_responses() {
    let (features, sessions) = small_study(6);
    let plant = PlantSpec::balanced(3, Some(1.0), 11);
    let (y, truth) = gen_voxels(&features, &plant, &sessions).unwrap();
    assert_eq!(truth.recompute(&features).unwrap(), y);
    let (again, _) = gen_voxels(&features, &plant, &sessions).unwrap();
    assert_eq!(again, y);
    for v in &truth.voxels {
        match v.kind {
            PlantKind::Null => assert!(v.beta.is_empty() && v.support.is_empty()),
            PlantKind::Layer1Only => assert!(v.support.iter().all(|s| s.starts_with("m1_"))),
            PlantKind::Layer2Only => assert!(v.support.iter().all(|s| s.starts_with("m2_"))),
            PlantKind::Mixed => assert!(v.support.iter().any(|s| s.starts_with("m1_"))),
        }
        if v.kind != PlantKind::Null {
            let snr = v.signal_variance / (v.noise_sd * v.noise_sd);
            assert!((snr - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn noiseless_layer_one_voxels_are_recovered_by_m1() {
    let (features, sessions) = small_study(10);
    let plant = PlantSpec {
        counts: PlantCounts {
            layer1_only: 5,
            layer2_only: 0,
            mixed: 0,
            null: 0,
        },
        snr: None,
        seed: 4,
    };
    let (y, _) = gen_voxels(&features, &plant, &sessions).unwrap();
    let cv = nested_cv_encode(&features.up_to_layer(1), &y, &sessions, &CvOptions::default()).unwrap();
    assert!(cv.mean_r2.iter().all(|r| *r >= 0.99), "{:?}", cv.mean_r2);
}

#[test]
fn null_voxels_score_near_zero() {
    let (features, sessions) = small_study(10);
    let plant = PlantSpec {
        counts: PlantCounts {
            layer1_only: 0,
            layer2_only: 0,
            mixed: 0,
            null: 30,
        },
        snr: Some(1.0),
        seed: 5,
    };
    let (y, _) = gen_voxels(&features, &plant, &sessions).unwrap();
    let cv = nested_cv_encode(&features, &y, &sessions, &CvOptions::default()).unwrap();
    let mean = cv.mean_r2.iter().sum::<f64>() / cv.mean_r2.len() as f64;
    assert!(mean <= 0.05, "{mean}");
}

#[test]
fn flat_support_with_finite_snr_is_an_error() {
    let paths = vec![Path::Zeroth, Path::First { j1: 0, g1: 0 }];
    let ids: Vec<String> = (0..6).map(|i| i.to_string()).collect();
    let values: Vec<f64> = (0..6).flat_map(|i| [i as f64, 1.0]).collect();
    let features = FeatureMatrix::new(paths, ids, values).unwrap();
    let sessions = gen_session_labels(6, 3, 1).unwrap();
    let plant = PlantSpec::balanced(1, Some(2.0), 0);
    assert!(matches!(
        gen_voxels(&features, &plant, &sessions),
        Err(Error::ZeroSignalVariance(_))
    ));
    let bad = PlantSpec::balanced(1, Some(-1.0), 0);
    assert!(gen_voxels(&features, &bad, &sessions).is_err());
}
