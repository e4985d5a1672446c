//! Data loading: IDX image/label files, numeric CSV, stratified
//! subsampling with bilinear rescale, and synthetic Gaussian blobs.

use crate::Matrix;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use rand::Rng;
use rand::seq::SliceRandom;
use std::path::Path;

/// Magic of IDX image files (unsigned byte, 3 dimensions).
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
/// Magic of IDX label files (unsigned byte, 1 dimension).
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Parsed IDX header: magic word plus big-endian dimension sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxHeader {
    pub magic: u32,
    pub dims: Vec<u32>,
}

fn read_u32_be(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or(Error::TruncatedPayload { expected: offset + 4, got: bytes.len() })
}

/// Parse an IDX image blob into (header, count, rows, cols, pixels).
pub fn parse_idx_images(bytes: &[u8]) -> Result<(IdxHeader, usize, usize, usize, Vec<u8>)> {
    let magic = read_u32_be(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic { expected: IDX_IMAGES_MAGIC, got: magic });
    }
    let n = read_u32_be(bytes, 4)? as usize;
    let rows = read_u32_be(bytes, 8)? as usize;
    let cols = read_u32_be(bytes, 12)? as usize;
    let expected = 16 + n * rows * cols;
    if bytes.len() != expected {
        return Err(Error::TruncatedPayload { expected, got: bytes.len() });
    }
    let header = IdxHeader { magic, dims: vec![n as u32, rows as u32, cols as u32] };
    Ok((header, n, rows, cols, bytes[16..].to_vec()))
}

/// Parse an IDX label blob into (header, labels).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<(IdxHeader, Vec<u8>)> {
    let magic = read_u32_be(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic { expected: IDX_LABELS_MAGIC, got: magic });
    }
    let n = read_u32_be(bytes, 4)? as usize;
    let expected = 8 + n;
    if bytes.len() != expected {
        return Err(Error::TruncatedPayload { expected, got: bytes.len() });
    }
    let header = IdxHeader { magic, dims: vec![n as u32] };
    Ok((header, bytes[8..].to_vec()))
}

/// Inverse of [`parse_idx_images`]; bit-exact round trip.
pub fn encode_idx_images(rows: usize, cols: usize, images: &[u8]) -> Vec<u8> {
    let n = images.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + images.len());
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(n as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    out.extend_from_slice(images);
    out
}

/// Inverse of [`parse_idx_labels`].
pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Load an IDX image/label pair as a dataset.
///
/// Pixels land in [0, 1] (divided by 255), images are flattened row-major
/// into columns, and byte labels shift up by one so classes are 1-based.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let image_bytes = std::fs::read(images_path)?;
    let label_bytes = std::fs::read(labels_path)?;
    let (_, n, rows, cols, pixels) = parse_idx_images(&image_bytes)?;
    let (_, labels) = parse_idx_labels(&label_bytes)?;
    if labels.len() != n {
        return Err(Error::CountMismatch { images: n, labels: labels.len() });
    }
    let dim = rows * cols;
    let x = Matrix::from_fn(dim, n, |i, j| pixels[j * dim + i] as f64 / 255.0);
    let class_count = labels.iter().copied().max().unwrap_or(0) as usize + 1;
    let labels = labels.iter().map(|&l| Some(l as usize + 1)).collect();
    let name = images_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    Dataset::new(x, labels, class_count, name)
}

/// Bilinear resample of a square image, pixel-center aligned. The identity
/// size is an exact copy and constants stay constant.
fn bilinear_resize(src: &[f64], side_in: usize, side_out: usize) -> Vec<f64> {
    if side_in == side_out {
        return src.to_vec();
    }
    let scale = side_in as f64 / side_out as f64;
    let mut out = Vec::with_capacity(side_out * side_out);
    for dy in 0..side_out {
        let sy = ((dy as f64 + 0.5) * scale - 0.5).clamp(0.0, (side_in - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(side_in - 1);
        let fy = sy - y0 as f64;
        for dx in 0..side_out {
            let sx = ((dx as f64 + 0.5) * scale - 0.5).clamp(0.0, (side_in - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(side_in - 1);
            let fx = sx - x0 as f64;
            let p00 = src[y0 * side_in + x0];
            let p01 = src[y0 * side_in + x1];
            let p10 = src[y1 * side_in + x0];
            let p11 = src[y1 * side_in + x1];
            out.push(
                p00 * (1.0 - fy) * (1.0 - fx)
                    + p01 * (1.0 - fy) * fx
                    + p10 * fy * (1.0 - fx)
                    + p11 * fy * fx,
            );
        }
    }
    out
}

/// Stratified subsample of `n_keep` samples, each square image resized to
/// `side`×`side`.
///
/// Quotas split evenly over the label groups (remainders to the first
/// groups in class order, spill when a group is short), selection shuffles
/// within each group under the seed, and the kept samples stay in their
/// original order.
pub fn subsample_and_rescale(
    ds: &Dataset,
    n_keep: usize,
    side: usize,
    seed: u64,
) -> Result<Dataset> {
    let n = ds.len();
    if n_keep > n {
        return Err(Error::SubsampleTooLarge { requested: n_keep, available: n });
    }
    let side_in = (ds.dim() as f64).sqrt().round() as usize;
    if side_in * side_in != ds.dim() {
        return Err(Error::DimensionMismatch {
            context: "subsample_and_rescale".into(),
            expected: "square images (D = side²)".into(),
            got: format!("D = {}", ds.dim()),
        });
    }

    // group sample indices by label, unlabeled as its own stratum
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for (i, l) in ds.labels().iter().enumerate() {
        groups.entry(l.unwrap_or(0)).or_default().push(i);
    }
    let keys: Vec<usize> = groups.keys().copied().collect();
    let g = keys.len();
    let mut quotas: Vec<usize> = keys
        .iter()
        .enumerate()
        .map(|(gi, _)| n_keep / g + usize::from(gi < n_keep % g))
        .collect();
    // cap at group size, spill the deficit round-robin over groups with room
    let mut deficit = 0usize;
    for (gi, key) in keys.iter().enumerate() {
        let available = groups[key].len();
        if quotas[gi] > available {
            deficit += quotas[gi] - available;
            quotas[gi] = available;
        }
    }
    while deficit > 0 {
        let mut placed = false;
        for (gi, key) in keys.iter().enumerate() {
            if deficit == 0 {
                break;
            }
            if quotas[gi] < groups[key].len() {
                quotas[gi] += 1;
                deficit -= 1;
                placed = true;
            }
        }
        assert!(placed, "n_keep <= n guarantees capacity");
    }

    let mut selected = Vec::with_capacity(n_keep);
    for (gi, key) in keys.iter().enumerate() {
        let mut pool = groups[key].clone();
        let mut rng = crate::rng::derive(seed, *key as u64);
        pool.shuffle(&mut rng);
        selected.extend_from_slice(&pool[..quotas[gi]]);
    }
    selected.sort_unstable();

    let dim_out = side * side;
    let mut x = Matrix::zeros(dim_out, selected.len());
    let mut labels = Vec::with_capacity(selected.len());
    for (col, &i) in selected.iter().enumerate() {
        let src: Vec<f64> = ds.x().column(i).iter().cloned().collect();
        let resized = bilinear_resize(&src, side_in, side);
        for (r, v) in resized.into_iter().enumerate() {
            x[(r, col)] = v;
        }
        labels.push(ds.labels()[i]);
    }
    Dataset::new(x, labels, ds.class_count(), format!("{}_sub{}_{}x{}", ds.name(), n_keep, side, side))
}

/// Read a rectangular numeric CSV (header row required) as a raw matrix
/// with samples as columns. Zero data rows are allowed.
pub fn read_csv_matrix(path: &Path) -> Result<(Vec<String>, Matrix)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::InvalidDataset("CSV has no header row".into()))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let width = header.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != width {
            return Err(Error::RaggedRows { row: idx + 1, got: cells.len(), expected: width });
        }
        let mut row = Vec::with_capacity(width);
        for (c, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::NonNumericCell {
                row: idx + 1,
                column: header[c].clone(),
                value: cell.trim().to_string(),
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    let n = rows.len();
    let x = Matrix::from_fn(width, n, |i, j| rows[j][i]);
    Ok((header, x))
}

/// Load a CSV as a dataset: rows are samples, one optional column holds
/// 1-based integer labels (empty or `?` cells mean unlabeled).
pub fn load_csv(path: &Path, label_column: Option<&str>) -> Result<Dataset> {
    let (header, full) = read_csv_matrix_with_labels(path, label_column)?;
    let (x, labels) = full;
    let class_count = labels.iter().flatten().copied().max().unwrap_or(1);
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    let _ = header;
    Dataset::new(x, labels, class_count, name)
}

type LabeledMatrix = (Matrix, Vec<Option<usize>>);

fn read_csv_matrix_with_labels(
    path: &Path,
    label_column: Option<&str>,
) -> Result<(Vec<String>, LabeledMatrix)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::InvalidDataset("CSV has no header row".into()))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let label_idx = match label_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))?,
        ),
        None => None,
    };
    let width = header.len();
    let feat_width = width - usize::from(label_idx.is_some());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<Option<usize>> = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != width {
            return Err(Error::RaggedRows { row: idx + 1, got: cells.len(), expected: width });
        }
        let mut row = Vec::with_capacity(feat_width);
        for (c, cell) in cells.iter().enumerate() {
            let cell = cell.trim();
            if Some(c) == label_idx {
                if cell.is_empty() || cell == "?" {
                    labels.push(None);
                } else {
                    let l: usize = cell.parse().map_err(|_| Error::NonNumericCell {
                        row: idx + 1,
                        column: header[c].clone(),
                        value: cell.to_string(),
                    })?;
                    labels.push(Some(l));
                }
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::NonNumericCell {
                    row: idx + 1,
                    column: header[c].clone(),
                    value: cell.to_string(),
                })?;
                row.push(v);
            }
        }
        rows.push(row);
    }
    let n = rows.len();
    if label_idx.is_none() {
        labels = vec![None; n];
    }
    let x = Matrix::from_fn(feat_width, n, |i, j| rows[j][i]);
    Ok((header, (x, labels)))
}

/// Gaussian blobs with class means on scaled coordinate axes.
///
/// Class `c` (1-based) centers at `separation · e_{c-1}` with isotropic
/// `noise_std` noise; samples are grouped by class and labeled 1..=classes.
pub fn make_blobs(
    n_per_class: usize,
    classes: usize,
    dim: usize,
    separation: f64,
    noise_std: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_per_class == 0 || classes == 0 || dim == 0 {
        return Err(Error::InvalidDataset("blob sizes must be positive".into()));
    }
    if dim < classes {
        return Err(Error::InvalidDataset(format!(
            "need dim >= classes to place axis-aligned means, got dim={dim}, classes={classes}"
        )));
    }
    if !(noise_std >= 0.0 && separation.is_finite()) {
        return Err(Error::InvalidDataset("bad separation/noise".into()));
    }
    let n = n_per_class * classes;
    let mut rng = crate::rng::from_seed(seed);
    let normal = rand_distr::Normal::new(0.0, noise_std.max(0.0))
        .map_err(|e| Error::InvalidDataset(format!("noise_std: {e}")))?;
    let mut x = Matrix::zeros(dim, n);
    let mut labels = Vec::with_capacity(n);
    for class in 0..classes {
        for s in 0..n_per_class {
            let col = class * n_per_class + s;
            for r in 0..dim {
                let mean = if r == class { separation } else { 0.0 };
                let noise = if noise_std > 0.0 { rng.sample(normal) } else { 0.0 };
                x[(r, col)] = mean + noise;
            }
            labels.push(Some(class + 1));
        }
    }
    Dataset::new(x, labels, classes, "blobs")
}
