//! One function per subcommand.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use scatvox::decoding::{block_cv_decode, default_decode_grid, DecodeOptions, DecodeResult, LabeledActivity};
use scatvox::encoding::{compare_models, default_lambda_grid, nested_cv_encode, CvOptions, CvResult, LambdaSelection};
use scatvox::filterbank::{build_filter_bank, littlewood_paley, FilterParams, LpReport};
use scatvox::synth::{gen_session_labels, gen_voxels, GroundTruth, PlantSpec, TextureCorpus};
use scatvox::{batch_scatter, FeatureMatrix, Raster, ScatteringConfig, SessionLabels, VoxelResponses};
use serde::Serialize;

use crate::formats::*;
use crate::report::{write_report, ReportInputs};
use crate::*;

pub fn dispatch(command: &Command, resolved: &str) -> Result<(), CliError> {
    match command {
        Command::Filters(a) => filters(a, resolved),
        Command::Scatter(a) => scatter(a, resolved),
        Command::Encode(a) => encode(a, resolved),
        Command::Decode(a) => decode(a, resolved),
        Command::Compare(a) => compare(a, resolved),
        Command::Synth(a) => synth(a, resolved),
        Command::Reproduce(a) => reproduce(a, resolved),
    }
}

/// `dir/stem.run_config.txt` beside a file output.
fn config_beside(out: &Path, resolved: &str) -> Result<(), CliError> {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    write_bytes(&out.with_file_name(format!("{stem}.run_config.txt")), resolved.as_bytes())
}

fn config_in(dir: &Path, resolved: &str) -> Result<(), CliError> {
    write_bytes(&dir.join("run_config.txt"), resolved.as_bytes())
}

fn parse_list(flag: &str, s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Invalid(format!("--{flag}: '{v}' is not a number")))
        })
        .collect()
}

fn timestamp() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn apply_shape(config: &mut ScatteringConfig, shape: &FilterShape) {
    config.sigma0 = shape.sigma0;
    config.xi0 = shape.xi0;
    config.slant = shape.slant;
}

#[derive(Serialize)]
struct FilterEntry {
    j: usize,
    orientation: usize,
    gamma: f64,
    dc_ratio: f64,
}

#[derive(Serialize)]
struct FiltersReport {
    params: FilterParams,
    notes: Vec<String>,
    littlewood_paley: LpReport,
    filters: Vec<FilterEntry>,
}

fn filters(a: &FiltersArgs, resolved: &str) -> Result<(), CliError> {
    let (w, h) = a
        .size
        .split_once(['x', 'X'])
        .and_then(|(w, h)| Some((w.trim().parse().ok()?, h.trim().parse().ok()?)))
        .ok_or_else(|| CliError::Invalid(format!("--size: '{}' is not WxH", a.size)))?;
    let mut params = FilterParams::new(a.scales, a.orientations, w, h);
    if let Some(s) = a.shape.sigma0 {
        params.sigma0 = s;
    }
    if let Some(x) = a.shape.xi0 {
        params.xi0 = x;
    }
    if let Some(s) = a.shape.slant {
        params.slant = s;
    }
    let notes = params.validate()?;
    let bank = build_filter_bank(&params)?;
    let annulus = match &a.annulus {
        Some(s) => match parse_list("annulus", s)?.as_slice() {
            [lo, hi] => (*lo, *hi),
            _ => return Err(CliError::Invalid(format!("--annulus: '{s}' is not lo,hi"))),
        },
        None => (params.xi0 / 2f64.powi(params.scales as i32), params.xi0),
    };
    let lp = littlewood_paley(&bank, annulus)?;
    if let Some(dir) = &a.spectra_dir {
        for f in bank.filters() {
            let mag = f.spectrum.map(|c| c.norm() as f32);
            write_raster(&dir.join(format!("psi_j{}g{}.ras", f.j, f.orientation)), &mag)?;
        }
    }
    let report = FiltersReport {
        params,
        notes,
        littlewood_paley: lp,
        filters: bank
            .filters()
            .iter()
            .map(|f| FilterEntry { j: f.j, orientation: f.orientation, gamma: f.gamma, dc_ratio: f.dc_ratio() })
            .collect(),
    };
    write_json(&a.out, &report)?;
    config_beside(&a.out, resolved)
}

fn to_f64(u: &Raster<f32>) -> Raster<f64> {
    u.map(|v| v as f64)
}

fn scatter(a: &ScatterArgs, resolved: &str) -> Result<(), CliError> {
    let paths = collect_images(&a.images)?;
    let mut ids = Vec::with_capacity(paths.len());
    let mut images = Vec::with_capacity(paths.len());
    let mut seen = BTreeSet::new();
    for p in &paths {
        let id = image_id(p);
        if !seen.insert(id.clone()) {
            return Err(CliError::Invalid(format!("duplicate image id '{id}' ({})", p.display())));
        }
        let img = read_image(p)?;
        if let (Some(first), Some(q)) = (images.first(), paths.first()) {
            let first: &Raster<f64> = first;
            if !img.same_shape(first) {
                return Err(CliError::Invalid(format!(
                    "shape mismatch: {} is {}x{}, {} is {}x{}",
                    p.display(),
                    img.width(),
                    img.height(),
                    q.display(),
                    first.width(),
                    first.height()
                )));
            }
        }
        images.push(to_f64(&img));
        ids.push(id);
    }
    let mut config = ScatteringConfig::new(a.depth, a.scales, a.orientations);
    apply_shape(&mut config, &a.shape);
    let features = batch_scatter(&images, &config)?.with_image_ids(ids)?;
    write_features(&a.out, &features)?;
    config_beside(&a.out, resolved)
}

fn encode(a: &EncodeArgs, resolved: &str) -> Result<(), CliError> {
    let mut x = read_features(&a.features)?;
    if let Some(layer) = a.max_layer {
        x = x.up_to_layer(layer);
    }
    let y = read_responses(&a.responses)?;
    let sessions = read_sessions(&a.sessions)?;
    let options = CvOptions {
        lambda_grid: match &a.lambda_grid {
            Some(s) => parse_list("lambda-grid", s)?,
            None => default_lambda_grid(),
        },
        selection: match a.selection {
            Selection::PerVoxel => LambdaSelection::PerVoxel,
            Selection::Shared => LambdaSelection::Shared,
        },
    };
    let cv = nested_cv_encode(&x, &y, &sessions, &options)?;
    write_json(&a.out, &cv)?;
    config_beside(&a.out, resolved)
}

#[derive(Serialize)]
struct DecodeFile<'a> {
    cv_unit: &'static str,
    #[serde(flatten)]
    result: &'a DecodeResult,
}

fn unit_name(unit: CvUnit) -> &'static str {
    match unit {
        CvUnit::Block => "block",
        CvUnit::Session => "session",
    }
}

/// Assembles the decoding table in response-row order. With `CvUnit::Block`
/// every (session, block) pair is its own held-out unit.
fn labeled_activity(
    y: &VoxelResponses,
    labels: &HashMap<String, u32>,
    labels_src: &Path,
    sessions: &SessionLabels,
    sessions_src: &Path,
    unit: CvUnit,
) -> Result<LabeledActivity, CliError> {
    let lookup = sessions.lookup();
    let mut classes = Vec::with_capacity(y.n_images());
    let mut keys = Vec::with_capacity(y.n_images());
    for id in y.image_ids() {
        let l = labels
            .get(id)
            .ok_or_else(|| CliError::Invalid(format!("image '{id}' has no label in {}", labels_src.display())))?;
        let e = lookup
            .get(id.as_str())
            .ok_or_else(|| CliError::Invalid(format!("image '{id}' has no block in {}", sessions_src.display())))?;
        classes.push(*l);
        keys.push(match unit {
            CvUnit::Block => (e.session, e.block),
            CvUnit::Session => (e.session, 0),
        });
    }
    let order: BTreeSet<(u32, u32)> = keys.iter().copied().collect();
    let rank: HashMap<(u32, u32), u32> = order.into_iter().zip(1..).collect();
    let groups = keys.iter().map(|k| rank[k]).collect();
    let activity = nalgebra::DMatrix::from_fn(y.n_images(), y.n_voxels(), |i, v| y.get(i, v));
    Ok(LabeledActivity::new(activity, classes, groups)?)
}

fn decode(a: &DecodeArgs, resolved: &str) -> Result<(), CliError> {
    let y = read_responses(&a.responses)?;
    let labels: HashMap<String, u32> = read_labels(&a.labels)?.into_iter().collect();
    let sessions = read_sessions(&a.blocks)?;
    let data = labeled_activity(&y, &labels, &a.labels, &sessions, &a.blocks, a.cv_unit)?;
    let options = DecodeOptions {
        lambda_grid: match &a.lambda_grid {
            Some(s) => parse_list("lambda-grid", s)?,
            None => default_decode_grid(),
        },
        inner_folds: a.inner_folds,
    };
    let result = block_cv_decode(&data, &options)?;
    write_json(&a.out, &DecodeFile { cv_unit: unit_name(a.cv_unit), result: &result })?;
    config_beside(&a.out, resolved)
}

fn stem(p: &Path) -> String {
    p.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string()
}

fn compare(a: &CompareArgs, resolved: &str) -> Result<(), CliError> {
    let outs: Vec<&str> = a.out.split(',').map(str::trim).collect();
    let [map_path, scatter_path] = outs.as_slice() else {
        return Err(CliError::Invalid(format!("--out: '{}' is not map.csv,scatter.csv", a.out)));
    };
    let (map_path, scatter_path) = (PathBuf::from(map_path), PathBuf::from(scatter_path));
    let cv_a = read_cv(&a.a)?;
    let cv_b = read_cv(&a.b)?;
    if cv_a.voxel_ids != cv_b.voxel_ids {
        return Err(CliError::Invalid(format!(
            "misaligned ids: {} and {} list different voxels",
            a.a.display(),
            a.b.display()
        )));
    }
    let map = compare_models(&(&cv_a).into(), &(&cv_b).into(), a.threshold, a.top_k)?;
    write_map(&map_path, &map, &cv_a, &cv_b)?;
    write_scatter(&scatter_path, &map)?;
    if let Some(path) = &a.summary {
        let (na, nb) = (stem(&a.a), stem(&a.b));
        let inputs = ReportInputs {
            model_a: Some((&na, &cv_a)),
            model_b: Some((&nb, &cv_b)),
            comparison: Some(&map),
            ..ReportInputs::default()
        };
        write_json(path, &write_report(&inputs, timestamp()))?;
    }
    config_beside(&map_path, resolved)
}

struct Study {
    features: FeatureMatrix,
    responses: VoxelResponses,
    truth: GroundTruth,
    sessions: SessionLabels,
    labels: Vec<u32>,
}

/// Renders the corpus, scatters it at float32 precision (what the image files
/// hold) and plants voxels. Writes every intermediate under `dir`.
fn build_study(
    corpus: &TextureCorpus,
    plant: &PlantSpec,
    config: &ScatteringConfig,
    sessions: usize,
    blocks: usize,
    dir: &Path,
) -> Result<Study, CliError> {
    let images: Vec<Raster<f32>> = corpus.generate()?.iter().map(|u| u.map(|v| v as f32)).collect();
    for (i, img) in images.iter().enumerate() {
        write_raster(&dir.join("images").join(format!("{i}.ras")), img)?;
    }
    let wide: Vec<Raster<f64>> = images.iter().map(to_f64).collect();
    let features = batch_scatter(&wide, config)?;
    let session_labels = gen_session_labels(images.len(), sessions, blocks)?;
    let (responses, truth) = gen_voxels(&features, plant, &session_labels)?;
    let labels: Vec<u32> = (0..images.len()).map(|i| corpus.class_of(i)).collect();

    write_json(&dir.join("textures.json"), corpus)?;
    write_json(&dir.join("plant.json"), plant)?;
    write_features(&dir.join("features.bin"), &features)?;
    write_responses(&dir.join("responses.bin"), &responses)?;
    write_sessions(&dir.join("sessions.csv"), &session_labels)?;
    write_labels(&dir.join("labels.csv"), features.image_ids(), &labels)?;
    write_json(&dir.join("ground_truth.json"), &truth)?;
    Ok(Study { features, responses, truth, sessions: session_labels, labels })
}

fn synth(a: &SynthArgs, resolved: &str) -> Result<(), CliError> {
    let corpus = match &a.textures {
        Some(p) => read_json::<TextureCorpus>(p)?,
        None => TextureCorpus::default_study(a.seed),
    };
    let plant = match &a.plant {
        Some(p) => read_json::<PlantSpec>(p)?,
        None => PlantSpec::balanced(50, Some(1.0), a.seed),
    };
    let config = ScatteringConfig::new(a.depth, a.scales, a.orientations);
    build_study(&corpus, &plant, &config, a.sessions, a.blocks_per_session, &a.out_dir)?;
    config_in(&a.out_dir, resolved)
}

fn reproduce(a: &ReproduceArgs, resolved: &str) -> Result<(), CliError> {
    let start = Instant::now();
    let dir = &a.out_dir;
    let corpus = TextureCorpus::default_study(a.seed);
    let plant = PlantSpec::balanced(a.per_kind, Some(a.snr), a.seed);
    let config = ScatteringConfig::new(2, a.scales, a.orientations);
    let study = build_study(&corpus, &plant, &config, a.sessions, a.blocks_per_session, dir)?;
    write_features(&dir.join("features.csv"), &study.features)?;
    println!("features: {} images x {} paths ({:.1}s)", study.features.n_images(), study.features.n_features(), start.elapsed().as_secs_f64());

    let options = CvOptions::default();
    let cv_m1: CvResult = nested_cv_encode(&study.features.up_to_layer(1), &study.responses, &study.sessions, &options)?;
    let cv_m2: CvResult = nested_cv_encode(&study.features, &study.responses, &study.sessions, &options)?;
    write_json(&dir.join("cv_m1.json"), &cv_m1)?;
    write_json(&dir.join("cv_m2.json"), &cv_m2)?;
    let map = compare_models(&(&cv_m1).into(), &(&cv_m2).into(), a.threshold, a.top_k)?;
    write_map(&dir.join("map.csv"), &map, &cv_m1, &cv_m2)?;
    write_scatter(&dir.join("scatter.csv"), &map)?;
    println!("encoding: done ({:.1}s)", start.elapsed().as_secs_f64());

    let labels: HashMap<String, u32> = study.features.image_ids().iter().cloned().zip(study.labels.iter().copied()).collect();
    let data = labeled_activity(&study.responses, &labels, &dir.join("labels.csv"), &study.sessions, &dir.join("sessions.csv"), a.decode_unit)?;
    let decoded = block_cv_decode(&data, &DecodeOptions::default())?;
    write_json(&dir.join("decode.json"), &DecodeFile { cv_unit: unit_name(a.decode_unit), result: &decoded })?;
    println!("decoding: mean accuracy {:.3} ({:.1}s)", decoded.mean_accuracy, start.elapsed().as_secs_f64());

    let inputs = ReportInputs {
        seed: Some(a.seed),
        model_a: Some(("M1", &cv_m1)),
        model_b: Some(("M2", &cv_m2)),
        comparison: Some(&map),
        decode: Some(&decoded),
        truth: Some(&study.truth),
    };
    write_json(&dir.join("summary.json"), &write_report(&inputs, timestamp()))?;
    config_in(dir, resolved)?;
    println!("reproduce: wrote {} ({:.1}s)", dir.display(), start.elapsed().as_secs_f64());
    Ok(())
}
