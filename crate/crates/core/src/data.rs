//! Dataset ingestion (IDX, CSV), class filtering and raster preprocessing.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{Encoder, FeatureVector};
use crate::error::{Error, Result};
use crate::heads::NUM_CLASSES;

pub const SIDE: usize = 28;
pub const PIXELS: usize = SIDE * SIDE;
/// Output side of the amplitude-encoding resize.
pub const RESIZED_SIDE: usize = 16;

const IMAGE_MAGIC: u32 = 0x0803;
const LABEL_MAGIC: u32 = 0x0801;

/// One 28×28 greyscale raster, row-major.
pub type Raster = [u8; PIXELS];

#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub images: Vec<Raster>,
    pub labels: Vec<u8>,
    pub source: String,
}

impl RawDataset {
    pub fn new(images: Vec<Raster>, labels: Vec<u8>, source: impl Into<String>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        Ok(Self { images, labels, source: source.into() })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Keeps the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            images: indices.iter().map(|&i| self.images[i]).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            source: self.source.clone(),
        }
    }

    pub fn histogram(&self) -> HashMap<u8, usize> {
        let mut h = HashMap::new();
        for &l in &self.labels {
            *h.entry(l).or_insert(0) += 1;
        }
        h
    }
}

fn open_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&bytes[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Idx { path: path.into(), reason: "truncated header".into() })
}

fn read_idx_images(path: &Path) -> Result<Vec<Raster>> {
    let bytes = open_maybe_gz(path)?;
    let idx_err = |reason: String| Error::Idx { path: path.into(), reason };
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IMAGE_MAGIC {
        return Err(idx_err(format!("image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}")));
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    if rows != SIDE || cols != SIDE {
        return Err(idx_err(format!("images are {rows}x{cols}, expected {SIDE}x{SIDE}")));
    }
    let body = &bytes[16..];
    if body.len() != count * PIXELS {
        return Err(idx_err(format!("{} pixel bytes for {count} images", body.len())));
    }
    Ok(body
        .chunks_exact(PIXELS)
        .map(|c| c.try_into().expect("chunk is one raster"))
        .collect())
}

fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = open_maybe_gz(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != LABEL_MAGIC {
        return Err(Error::Idx {
            path: path.into(),
            reason: format!("label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"),
        });
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(Error::Idx {
            path: path.into(),
            reason: format!("{} label bytes for {count} labels", body.len()),
        });
    }
    Ok(body.to_vec())
}

/// Reads an IDX image/label pair; gzip-compressed files are detected and inflated.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<RawDataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = read_idx_images(ip)?;
    let labels = read_idx_labels(lp)?;
    if images.len() != labels.len() {
        return Err(Error::Idx {
            path: lp.into(),
            reason: format!("{} labels for {} images", labels.len(), images.len()),
        });
    }
    RawDataset::new(images, labels, ip.display().to_string())
}

/// Writes an uncompressed IDX image/label pair.
pub fn write_idx(ds: &RawDataset, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let n = ds.len() as u32;
    let mut w = BufWriter::new(File::create(ip).map_err(|e| Error::io(ip, e))?);
    let mut header = Vec::with_capacity(16);
    for v in [IMAGE_MAGIC, n, SIDE as u32, SIDE as u32] {
        header.extend_from_slice(&v.to_be_bytes());
    }
    w.write_all(&header).map_err(|e| Error::io(ip, e))?;
    for img in &ds.images {
        w.write_all(img).map_err(|e| Error::io(ip, e))?;
    }
    w.flush().map_err(|e| Error::io(ip, e))?;

    let mut w = BufWriter::new(File::create(lp).map_err(|e| Error::io(lp, e))?);
    let mut header = LABEL_MAGIC.to_be_bytes().to_vec();
    header.extend_from_slice(&n.to_be_bytes());
    w.write_all(&header).map_err(|e| Error::io(lp, e))?;
    w.write_all(&ds.labels).map_err(|e| Error::io(lp, e))?;
    w.flush().map_err(|e| Error::io(lp, e))
}

/// Reads `label,p0,…,p783` rows; a header line is skipped when its first
/// cell is not numeric.
pub fn load_csv(path: impl AsRef<Path>) -> Result<RawDataset> {
    let path = path.as_ref();
    let csv_err = |row: usize, reason: String| Error::Csv {
        path: path.into(),
        reason: format!("row {row}: {reason}"),
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv { path: path.into(), reason: e.to_string() })?;
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(row + 1, e.to_string()))?;
        if row == 0 && rec.get(0).is_some_and(|c| c.parse::<f64>().is_err()) {
            continue;
        }
        if rec.len() != PIXELS + 1 {
            return Err(csv_err(row + 1, format!("{} cells, expected {}", rec.len(), PIXELS + 1)));
        }
        let parse = |cell: &str| -> Result<u8> {
            cell.parse::<u8>()
                .map_err(|_| csv_err(row + 1, format!("cell {cell:?} is not an integer in 0..=255")))
        };
        labels.push(parse(&rec[0])?);
        let mut img = [0u8; PIXELS];
        for (px, cell) in img.iter_mut().zip(rec.iter().skip(1)) {
            *px = parse(cell)?;
        }
        images.push(img);
    }
    RawDataset::new(images, labels, path.display().to_string())
}

/// Keeps samples whose label is in `classes`, relabelled `classes[i] ↦ i`.
pub fn filter_split(ds: &RawDataset, classes: &[u8]) -> Result<RawDataset> {
    if classes.len() != NUM_CLASSES {
        return Err(Error::ClassSplit(format!("need {NUM_CLASSES} classes, got {classes:?}")));
    }
    for (i, c) in classes.iter().enumerate() {
        if classes[..i].contains(c) {
            return Err(Error::ClassSplit(format!("duplicate class {c} in {classes:?}")));
        }
    }
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (img, l) in ds.images.iter().zip(&ds.labels) {
        if let Some(pos) = classes.iter().position(|c| c == l) {
            images.push(*img);
            labels.push(pos as u8);
        }
    }
    RawDataset::new(images, labels, ds.source.clone())
}

/// Seeded shuffle, then the first `round(n · test_fraction)` samples go to the test side.
pub fn split_train_test(ds: &RawDataset, test_fraction: f64, seed: u64) -> Result<(RawDataset, RawDataset)> {
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(Error::Config(format!("test fraction {test_fraction} outside [0, 1]")));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (ds.len() as f64 * test_fraction).round() as usize;
    let (test, train) = order.split_at(n_test);
    Ok((ds.subset(train), ds.subset(test)))
}

/// First `n` indices of a seeded permutation (or all, when `n` exceeds the size).
pub fn take_subset(ds: &RawDataset, n: usize, seed: u64) -> RawDataset {
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.truncate(n);
    ds.subset(&order)
}

/// Bilinear resize with pixel-centre alignment and edge clamping.
pub fn resize_bilinear(src: &[f64], sh: usize, sw: usize, dh: usize, dw: usize) -> Vec<f64> {
    let coord = |d: usize, s: usize, dd: usize| -> (usize, usize, f64) {
        let x = ((d as f64 + 0.5) * s as f64 / dd as f64 - 0.5).clamp(0.0, (s - 1) as f64);
        let x0 = x.floor() as usize;
        let x1 = (x0 + 1).min(s - 1);
        (x0, x1, x - x0 as f64)
    };
    let mut out = Vec::with_capacity(dh * dw);
    for r in 0..dh {
        let (r0, r1, fr) = coord(r, sh, dh);
        for c in 0..dw {
            let (c0, c1, fc) = coord(c, sw, dw);
            let top = src[r0 * sw + c0] * (1.0 - fc) + src[r0 * sw + c1] * fc;
            let bottom = src[r1 * sw + c0] * (1.0 - fc) + src[r1 * sw + c1] * fc;
            out.push(top * (1.0 - fr) + bottom * fr);
        }
    }
    out
}

/// Means over a `rows × cols` grid of blocks; block `i` spans source rows
/// `⌊i·h/rows⌋..⌊(i+1)·h/rows⌋` (likewise for columns).
pub fn block_means(src: &[f64], h: usize, w: usize, rows: usize, cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * cols);
    for br in 0..rows {
        let (r0, r1) = (br * h / rows, (br + 1) * h / rows);
        for bc in 0..cols {
            let (c0, c1) = (bc * w / cols, (bc + 1) * w / cols);
            let mut sum = 0.0;
            for r in r0..r1 {
                sum += src[r * w + c0..r * w + c1].iter().sum::<f64>();
            }
            out.push(sum / ((r1 - r0) * (c1 - c0)) as f64);
        }
    }
    out
}

/// Block grid for the angle-encoding reduction (must have 8 cells).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockGrid {
    pub rows: usize,
    pub cols: usize,
}

impl Default for BlockGrid {
    fn default() -> Self {
        Self { rows: 2, cols: 4 }
    }
}

/// Raster → normalized feature vector for `encoder`.
pub fn preprocess(raster: &Raster, encoder: Encoder) -> Result<FeatureVector> {
    preprocess_with(raster, encoder, BlockGrid::default())
}

pub fn preprocess_with(raster: &Raster, encoder: Encoder, grid: BlockGrid) -> Result<FeatureVector> {
    let px: Vec<f64> = raster.iter().map(|&p| p as f64).collect();
    match encoder {
        Encoder::Amplitude => {
            let v = resize_bilinear(&px, SIDE, SIDE, RESIZED_SIDE, RESIZED_SIDE);
            let (min, max) = min_max(&v);
            if min == max {
                if max > 0.0 {
                    return FeatureVector::new(v.iter().map(|x| x / max).collect());
                }
                return Err(Error::Preprocess("all-zero image cannot be amplitude encoded".into()));
            }
            FeatureVector::new(v.iter().map(|x| ((x - min) / (max - min)).clamp(0.0, 1.0)).collect())
        }
        Encoder::Angle => {
            if grid.rows * grid.cols != encoder.feature_dim() || grid.rows > SIDE || grid.cols > SIDE {
                return Err(Error::Preprocess(format!(
                    "block grid {}x{} must have {} cells",
                    grid.rows,
                    grid.cols,
                    encoder.feature_dim()
                )));
            }
            let v = block_means(&px, SIDE, SIDE, grid.rows, grid.cols);
            let (min, max) = min_max(&v);
            if min == max {
                return FeatureVector::new(vec![0.0; v.len()]);
            }
            FeatureVector::new(v.iter().map(|x| ((x - min) / (max - min)).clamp(0.0, 1.0)).collect())
        }
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// A preprocessed, relabelled example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: FeatureVector,
    pub label: usize,
}

impl Sample {
    pub fn new(features: FeatureVector, label: usize) -> Result<Self> {
        if label >= NUM_CLASSES {
            return Err(Error::InvalidLabel { label, classes: NUM_CLASSES });
        }
        Ok(Self { features, label })
    }
}

/// Preprocesses every raster of an already-filtered dataset.
pub fn to_samples(ds: &RawDataset, encoder: Encoder, grid: BlockGrid) -> Result<Vec<Sample>> {
    ds.images
        .iter()
        .zip(&ds.labels)
        .map(|(img, &l)| Sample::new(preprocess_with(img, encoder, grid)?, l as usize))
        .collect()
}

/// Four noisy clusters in feature space, `n` samples, labels cycling 0..3.
///
/// Angle features: class `c` is bright on features `2c, 2c + 1`. Amplitude
/// features: class `c` is bright in quadrant `c` of the 16×16 grid.
pub fn synthetic_clusters(n: usize, encoder: Encoder, noise: f64, seed: u64) -> Result<Vec<Sample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = encoder.feature_dim();
    (0..n)
        .map(|i| {
            let label = i % NUM_CLASSES;
            let v: Vec<f64> = (0..dim)
                .map(|j| {
                    let on = match encoder {
                        Encoder::Angle => j / 2 == label,
                        Encoder::Amplitude => {
                            let (r, c) = (j / RESIZED_SIDE, j % RESIZED_SIDE);
                            (r >= RESIZED_SIDE / 2) as usize * 2 + (c >= RESIZED_SIDE / 2) as usize == label
                        }
                    };
                    let centre = if on { 0.9 } else { 0.1 };
                    (centre + rng.gen_range(-noise..=noise)).clamp(0.0, 1.0)
                })
                .collect();
            Sample::new(FeatureVector::new(v)?, label)
        })
        .collect()
}
