//! Fixtures shared by the criterion benches.

use scatvox::Raster;

/// Deterministic pseudo-noise image, independent of any rng crate version.
pub fn fixture_image(size: usize, seed: u64) -> Raster<f64> {
    let mut s = seed ^ 0x9e37_79b9_7f4a_7c15;
    Raster::from_fn(size, size, |_, _| {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (s >> 11) as f64 / (1u64 << 53) as f64
    })
}

/// Random-looking design, responses and a six-session layout for CV benches.
pub fn fixture_study(
    n_images: usize,
    n_features: usize,
    n_voxels: usize,
) -> (scatvox::FeatureMatrix, scatvox::VoxelResponses, scatvox::SessionLabels) {
    let x = fixture_image(n_images.max(n_features), 1);
    let y = fixture_image(n_images.max(n_voxels), 2);
    let paths = (0..n_features).map(|k| scatvox::Path::First { j1: k, g1: 0 }).collect();
    let ids: Vec<String> = (0..n_images).map(|i| i.to_string()).collect();
    let features = scatvox::FeatureMatrix::new(
        paths,
        ids.clone(),
        (0..n_images).flat_map(|i| (0..n_features).map(move |k| (i, k))).map(|(i, k)| x.get(k, i)).collect(),
    )
    .unwrap();
    let voxels = (0..n_voxels).map(|v| format!("v{v}")).collect();
    let responses = scatvox::VoxelResponses::new(
        ids,
        voxels,
        (0..n_images).flat_map(|i| (0..n_voxels).map(move |v| (i, v))).map(|(i, v)| y.get(v, i)).collect(),
    )
    .unwrap();
    let sessions = scatvox::synth::gen_session_labels(n_images, 6, 1).unwrap();
    (features, responses, sessions)
}
