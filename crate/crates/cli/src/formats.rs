//! On-disk formats: rasters, labelled matrices, CSV tables.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use scatvox::decoding::DecodeResult;
use scatvox::encoding::{ComparisonMap, CvResult};
use scatvox::{FeatureMatrix, Raster, SessionEntry, SessionLabels, VoxelResponses};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::CliError;

pub const RASTER_MAGIC: &[u8; 8] = b"SCATRAS1";
pub const MATRIX_MAGIC: &[u8; 8] = b"SCATMAT1";

fn malformed(path: &Path, what: impl std::fmt::Display) -> CliError {
    CliError::Invalid(format!("malformed file {}: {what}", path.display()))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Floats with 9 significant digits, '.' decimal point.
pub fn fmt9(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.8e}")
    }
}

// ---- rasters ----

pub fn encode_raster(u: &Raster<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * u.len());
    out.extend_from_slice(RASTER_MAGIC);
    out.extend_from_slice(&(u.width() as u32).to_le_bytes());
    out.extend_from_slice(&(u.height() as u32).to_le_bytes());
    for v in u.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_raster(path: &Path, u: &Raster<f32>) -> Result<(), CliError> {
    write_bytes(path, &encode_raster(u))
}

pub fn decode_raster(bytes: &[u8], path: &Path) -> Result<Raster<f32>, CliError> {
    if bytes.len() < 16 || &bytes[..8] != RASTER_MAGIC {
        return Err(malformed(path, "missing SCATRAS1 header"));
    }
    let w = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if w.checked_mul(h).and_then(|n| n.checked_mul(4)) != Some(body.len()) {
        return Err(malformed(path, format!("{w}x{h} header but {} payload bytes", body.len())));
    }
    let data = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Raster::from_vec(w, h, data).map_err(|e| malformed(path, e))
}

/// Binary 8-bit PGM, scaled to [0, 1] by its maxval.
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<Raster<f32>, CliError> {
    let mut fields = Vec::new();
    let mut i = 2;
    if !bytes.starts_with(b"P5") {
        return Err(malformed(path, "not a binary PGM"));
    }
    while fields.len() < 3 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        let v: usize = std::str::from_utf8(&bytes[start..i])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed(path, "bad PGM header"))?;
        fields.push(v);
    }
    i += 1; // single whitespace byte after maxval
    let (w, h, max) = (fields[0], fields[1], fields[2]);
    if max == 0 || max > 255 {
        return Err(malformed(path, format!("PGM maxval {max} unsupported (8-bit only)")));
    }
    let body = bytes.get(i..).unwrap_or(&[]);
    if body.len() != w * h {
        return Err(malformed(path, format!("{w}x{h} PGM but {} pixel bytes", body.len())));
    }
    let data = body.iter().map(|&b| b as f32 / max as f32).collect();
    Raster::from_vec(w, h, data).map_err(|e| malformed(path, e))
}

pub fn read_image(path: &Path) -> Result<Raster<f32>, CliError> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(b"P5") {
        decode_pgm(&bytes, path)
    } else {
        decode_raster(&bytes, path)
    }
}

fn is_image(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("ras" | "pgm"))
}

fn natural_key(path: &Path) -> (u8, u64, String) {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string();
    match stem.parse::<u64>() {
        Ok(n) => (0, n, stem),
        Err(_) => (1, 0, stem),
    }
}

/// Expands `--images` arguments: directories (all .ras/.pgm inside, numeric
/// stems in numeric order), list files (one path per line, relative to the
/// list), or image files.
pub fn collect_images(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let entries = fs::read_dir(input)
                .map_err(|e| CliError::Invalid(format!("cannot list {}: {e}", input.display())))?;
            let mut found: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| is_image(p)).collect();
            found.sort_by_key(|p| natural_key(p));
            if found.is_empty() {
                return Err(CliError::Invalid(format!("no .ras or .pgm images in {}", input.display())));
            }
            out.extend(found);
        } else if is_image(input) {
            out.push(input.clone());
        } else {
            let base = input.parent().unwrap_or(Path::new(""));
            for line in read_text(input)?.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
                out.push(base.join(line));
            }
        }
    }
    if out.is_empty() {
        return Err(CliError::Invalid("no images given".into()));
    }
    Ok(out)
}

pub fn image_id(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string()
}

// ---- labelled matrices ----

/// `SCATMAT1`, u64 rows, u64 cols, row ids and column ids as u32-length-prefixed
/// UTF-8, then f64 LE row-major.
pub fn encode_matrix(rows: &[String], cols: &[String], values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * values.len());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&(rows.len() as u64).to_le_bytes());
    out.extend_from_slice(&(cols.len() as u64).to_le_bytes());
    for s in rows.iter().chain(cols) {
        out.extend_from_slice(&(s.len() as u32).to_le_bytes());
        out.extend_from_slice(s.as_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], CliError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| malformed(self.path, "truncated"))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, CliError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, CliError> {
        let n = u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize;
        let path = self.path;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| malformed(path, "id is not UTF-8"))
    }
}

pub type Matrix = (Vec<String>, Vec<String>, Vec<f64>);

pub fn decode_matrix(bytes: &[u8], path: &Path) -> Result<Matrix, CliError> {
    if !bytes.starts_with(MATRIX_MAGIC) {
        return Err(malformed(path, "missing SCATMAT1 header"));
    }
    let mut c = Cursor { bytes, at: 8, path };
    let (r, k) = (c.u64()? as usize, c.u64()? as usize);
    let rows = (0..r).map(|_| c.string()).collect::<Result<Vec<_>, _>>()?;
    let cols = (0..k).map(|_| c.string()).collect::<Result<Vec<_>, _>>()?;
    let body = &bytes[c.at..];
    if r.checked_mul(k).and_then(|n| n.checked_mul(8)) != Some(body.len()) {
        return Err(malformed(path, format!("{r}x{k} header but {} payload bytes", body.len())));
    }
    let values = body.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    Ok((rows, cols, values))
}

fn is_csv(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()) == Some("csv")
}

pub fn write_features(path: &Path, f: &FeatureMatrix) -> Result<(), CliError> {
    let labels: Vec<String> = f.paths().iter().map(|p| p.label()).collect();
    if !is_csv(path) {
        return write_bytes(path, &encode_matrix(f.image_ids(), &labels, f.values()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["image_id".to_string()];
    header.extend(labels);
    w.write_record(&header).map_err(csv_err)?;
    for (i, id) in f.image_ids().iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(f.row(i).iter().map(|&v| fmt9(v)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    write_bytes(path, &w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?)
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Runtime(format!("csv: {e}"))
}

/// Reads a CSV table with a header; returns header and rows.
fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let text = read_text(path)?;
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| malformed(path, e))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| malformed(path, e))?;
        rows.push(rec.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

fn parse_f64(s: &str, path: &Path, line: usize) -> Result<f64, CliError> {
    s.parse().map_err(|_| malformed(path, format!("line {line}: '{s}' is not a number")))
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix, CliError> {
    let (ids, labels, values) = if is_csv(path) {
        let (header, rows) = read_table(path)?;
        if header.first().map(String::as_str) != Some("image_id") {
            return Err(malformed(path, "first column must be image_id"));
        }
        let mut ids = Vec::new();
        let mut values = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            ids.push(row[0].clone());
            for s in &row[1..] {
                values.push(parse_f64(s, path, i + 2)?);
            }
        }
        (ids, header[1..].to_vec(), values)
    } else {
        decode_matrix(&read_bytes(path)?, path)?
    };
    let paths = labels
        .iter()
        .map(|l| l.parse())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| malformed(path, e))?;
    FeatureMatrix::new(paths, ids, values).map_err(|e| malformed(path, e))
}

pub fn write_responses(path: &Path, y: &VoxelResponses) -> Result<(), CliError> {
    write_bytes(path, &encode_matrix(y.image_ids(), y.voxel_ids(), y.values()))
}

pub fn read_responses(path: &Path) -> Result<VoxelResponses, CliError> {
    let (rows, cols, values) = decode_matrix(&read_bytes(path)?, path)?;
    VoxelResponses::new(rows, cols, values).map_err(|e| malformed(path, e))
}

// ---- tables ----

fn write_csv<const N: usize>(path: &Path, header: [&str; N], rows: impl IntoIterator<Item = [String; N]>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    write_bytes(path, &w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?)
}

fn expect_header(path: &Path, header: &[String], want: &[&str]) -> Result<(), CliError> {
    if header.iter().map(String::as_str).ne(want.iter().copied()) {
        return Err(malformed(path, format!("expected columns {}", want.join(","))));
    }
    Ok(())
}

pub fn write_sessions(path: &Path, s: &SessionLabels) -> Result<(), CliError> {
    write_csv(
        path,
        ["image_id", "session", "block"],
        s.entries().iter().map(|e| [e.image_id.clone(), e.session.to_string(), e.block.to_string()]),
    )
}

pub fn read_sessions(path: &Path) -> Result<SessionLabels, CliError> {
    let (header, rows) = read_table(path)?;
    expect_header(path, &header, &["image_id", "session", "block"])?;
    let mut entries = Vec::with_capacity(rows.len());
    for (i, r) in rows.into_iter().enumerate() {
        let num = |s: &str| s.parse::<u32>().map_err(|_| malformed(path, format!("line {}: '{s}' is not a non-negative integer", i + 2)));
        entries.push(SessionEntry {
            session: num(&r[1])?,
            block: num(&r[2])?,
            image_id: r[0].clone(),
        });
    }
    SessionLabels::new(entries).map_err(|e| malformed(path, e))
}

pub fn write_labels(path: &Path, ids: &[String], labels: &[u32]) -> Result<(), CliError> {
    write_csv(path, ["image_id", "label"], ids.iter().zip(labels).map(|(i, l)| [i.clone(), l.to_string()]))
}

pub fn read_labels(path: &Path) -> Result<Vec<(String, u32)>, CliError> {
    let (header, rows) = read_table(path)?;
    expect_header(path, &header, &["image_id", "label"])?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let l = r[1].parse().map_err(|_| malformed(path, format!("line {}: '{}' is not a class label", i + 2, r[1])))?;
            Ok((r[0].clone(), l))
        })
        .collect()
}

pub fn write_map(path: &Path, m: &ComparisonMap, a: &CvResult, b: &CvResult) -> Result<(), CliError> {
    write_csv(
        path,
        ["voxel_id", "r2_a", "r2_b", "delta", "label"],
        (0..m.voxel_ids.len()).map(|v| {
            [m.voxel_ids[v].clone(), fmt9(a.mean_r2[v]), fmt9(b.mean_r2[v]), fmt9(m.delta[v]), m.labels[v].as_str().to_string()]
        }),
    )
}

pub fn write_scatter(path: &Path, m: &ComparisonMap) -> Result<(), CliError> {
    write_csv(
        path,
        ["voxel_id", "r2_a", "r2_b"],
        m.scatter.iter().map(|p| [p.voxel_id.clone(), fmt9(p.r2_a), fmt9(p.r2_b)]),
    )
}

// ---- json ----

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut buf = BufWriter::new(Vec::new());
    serde_json::to_writer_pretty(&mut buf, value).map_err(|e| CliError::Runtime(format!("json: {e}")))?;
    buf.write_all(b"\n").map_err(|e| CliError::Runtime(e.to_string()))?;
    write_bytes(path, &buf.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let mut text = String::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| malformed(path, e))
}

pub fn read_cv(path: &Path) -> Result<CvResult, CliError> {
    let cv: CvResult = read_json(path)?;
    if cv.mean_r2.len() != cv.voxel_ids.len() {
        return Err(malformed(path, "mean_r2 and voxel_ids differ in length"));
    }
    Ok(cv)
}

pub fn read_decode(path: &Path) -> Result<DecodeResult, CliError> {
    read_json(path)
}
