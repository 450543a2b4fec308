//! Datasets: IDX ingestion, synthetic generators and splitting.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, IdxError, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Labeled examples with features scaled into `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub n_classes: usize,
    pub name: String,
    /// `(height, width)` when rows are flattened images.
    pub image_shape: Option<(usize, usize)>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, x: Array2<f64>, y: Vec<usize>, n_classes: usize) -> Result<Self> {
        let ds = Self {
            x,
            y,
            n_classes,
            name: name.into(),
            image_shape: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.nrows() != self.y.len() {
            return Err(Error::mismatch("dataset labels", self.x.nrows(), self.y.len()));
        }
        if self.y.is_empty() {
            return Err(Error::DegenerateInput(format!("dataset {} is empty", self.name)));
        }
        if self.x.iter().any(|v| v.is_nan()) {
            return Err(Error::DegenerateInput(format!("dataset {} contains NaN", self.name)));
        }
        if let Some(l) = self.y.iter().find(|&&l| l >= self.n_classes) {
            return Err(Error::IndexOutOfRange(format!(
                "label {l} in dataset {} with {} classes",
                self.name, self.n_classes
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            n_classes: self.n_classes,
            name: self.name.clone(),
            image_shape: self.image_shape,
        }
    }

    /// The first `n` rows (all rows if `n >= len`).
    pub fn take(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn u32_be(&mut self) -> Result<u32, IdxError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn take(&mut self, n: usize) -> Result<&[u8], IdxError> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(IdxError::Truncated {
                needed: end,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
}

/// Raw IDX image block: count, height, width and row-major pixel bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages, IdxError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.u32_be()?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(IdxError::WrongMagic {
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let count = cur.u32_be()? as usize;
    let height = cur.u32_be()? as usize;
    let width = cur.u32_be()? as usize;
    let pixels = cur.take(count * height * width)?.to_vec();
    Ok(IdxImages {
        count,
        height,
        width,
        pixels,
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.u32_be()?;
    if magic != IDX_LABELS_MAGIC {
        return Err(IdxError::WrongMagic {
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let count = cur.u32_be()? as usize;
    Ok(cur.take(count)?.to_vec())
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [
        IDX_IMAGES_MAGIC,
        images.count as u32,
        images.height as u32,
        images.width as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Builds a dataset from parsed IDX blocks; pixels are scaled by 1/255.
pub fn dataset_from_idx(name: &str, images: &IdxImages, labels: &[u8]) -> Result<Dataset> {
    if images.count != labels.len() {
        return Err(IdxError::CountMismatch {
            images: images.count,
            labels: labels.len(),
        }
        .into());
    }
    let d = images.height * images.width;
    let x = Array2::from_shape_fn((images.count, d), |(i, j)| images.pixels[i * d + j] as f64 / 255.0);
    let y: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let n_classes = y.iter().max().map_or(0, |m| m + 1);
    let mut ds = Dataset::new(name, x, y, n_classes)?;
    ds.image_shape = Some((images.height, images.width));
    Ok(ds)
}

/// Reads an IDX image file and its label file.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let ip = images_path.as_ref();
    let lp = labels_path.as_ref();
    let ib = fs::read(ip).map_err(|e| Error::io(ip, e))?;
    let lb = fs::read(lp).map_err(|e| Error::io(lp, e))?;
    let images = parse_idx_images(&ib)?;
    let labels = parse_idx_labels(&lb)?;
    let name = ip.file_name().map_or_else(|| "idx".into(), |s| s.to_string_lossy().into_owned());
    dataset_from_idx(&name, &images, &labels)
}

/// Converts a `[0, 1]` image dataset back to IDX blocks (pixels rounded to bytes).
pub fn dataset_to_idx(ds: &Dataset) -> Result<(IdxImages, Vec<u8>)> {
    let (height, width) = ds.image_shape.unwrap_or((1, ds.dim()));
    let pixels = ds.x.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let labels = ds
        .y
        .iter()
        .map(|&l| u8::try_from(l).map_err(|_| Error::IndexOutOfRange(format!("label {l} does not fit a byte"))))
        .collect::<Result<Vec<u8>>>()?;
    Ok((
        IdxImages {
            count: ds.len(),
            height,
            width,
            pixels,
        },
        labels,
    ))
}

/// Tall-vs-wide rectangle outlines on a `side x side` canvas. Label 1 means
/// taller than wide.
pub fn gen_rectangles<R: Rng + ?Sized>(n_samples: usize, side: usize, rng: &mut R) -> Result<Dataset> {
    if side < 8 {
        return Err(Error::InvalidDimension {
            got: side,
            reason: "rectangle canvas side must be at least 8",
        });
    }
    let mut x = Array2::zeros((n_samples, side * side));
    let mut y = Vec::with_capacity(n_samples);
    for mut row in x.axis_iter_mut(Axis(0)) {
        let (h, w) = loop {
            let h = rng.random_range(3..=side);
            let w = rng.random_range(3..=side);
            if h != w {
                break (h, w);
            }
        };
        let top = rng.random_range(0..=side - h);
        let left = rng.random_range(0..=side - w);
        for r in top..top + h {
            for c in left..left + w {
                if r == top || r == top + h - 1 || c == left || c == left + w - 1 {
                    row[r * side + c] = 1.0;
                }
            }
        }
        y.push(usize::from(h > w));
    }
    let mut ds = Dataset::new("rectangles", x, y, 2)?;
    ds.image_shape = Some((side, side));
    Ok(ds)
}

/// Gaussian clusters with unit variance around centers at least
/// `separation` apart, min-max rescaled per feature into `[0, 1]`.
pub fn gen_blobs<R: Rng + ?Sized>(
    n_samples: usize,
    dim: usize,
    n_classes: usize,
    separation: f64,
    rng: &mut R,
) -> Result<Dataset> {
    gen_blobs_with_centers(n_samples, dim, n_classes, separation, rng).map(|(ds, _)| ds)
}

/// Like [`gen_blobs`], also returning the class centers after rescaling.
pub fn gen_blobs_with_centers<R: Rng + ?Sized>(
    n_samples: usize,
    dim: usize,
    n_classes: usize,
    separation: f64,
    rng: &mut R,
) -> Result<(Dataset, Array2<f64>)> {
    if !(separation > 0.0) {
        return Err(Error::Config {
            line: None,
            message: format!("blob separation {separation} must be positive"),
        });
    }
    if dim == 0 || n_classes == 0 || n_samples == 0 {
        return Err(Error::InvalidDimension {
            got: dim.min(n_classes).min(n_samples),
            reason: "blobs need positive dim, class count and sample count",
        });
    }
    let mut extent = separation * (n_classes as f64).powf(1.0 / dim as f64).ceil().max(1.0) * 2.0;
    let mut centers = Array2::<f64>::zeros((n_classes, dim));
    let mut placed = 0;
    let mut attempts = 0;
    while placed < n_classes {
        let cand: Vec<f64> = (0..dim).map(|_| rng.random_range(0.0..extent)).collect();
        let far = (0..placed).all(|j| {
            let d2: f64 = centers.row(j).iter().zip(&cand).map(|(a, b)| (a - b).powi(2)).sum();
            d2.sqrt() >= separation
        });
        if far {
            centers.row_mut(placed).assign(&ndarray::Array1::from(cand));
            placed += 1;
        }
        attempts += 1;
        if attempts % 1000 == 0 {
            extent *= 1.5;
        }
    }

    let mut x = Array2::<f64>::zeros((n_samples, dim));
    let mut y = Vec::with_capacity(n_samples);
    for (i, mut row) in x.axis_iter_mut(Axis(0)).enumerate() {
        let c = i % n_classes;
        for (v, &m) in row.iter_mut().zip(centers.row(c)) {
            *v = m + rng.sample::<f64, _>(StandardNormal);
        }
        y.push(c);
    }
    let mut order: Vec<usize> = (0..n_samples).collect();
    order.shuffle(rng);
    let x = x.select(Axis(0), &order);
    let y: Vec<usize> = order.iter().map(|&i| y[i]).collect();

    let mut scaled = x;
    for j in 0..dim {
        let col = scaled.column(j);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        scaled.column_mut(j).mapv_inplace(|v| (v - lo) / span);
        centers.column_mut(j).mapv_inplace(|v| (v - lo) / span);
    }
    Ok((Dataset::new("blobs", scaled, y, n_classes)?, centers))
}

/// Disjoint uniform partitions of `ds` with the given fractions. When
/// `keep_remainder` is set, unassigned rows are returned as a final part.
pub fn split<R: Rng + ?Sized>(
    ds: &Dataset,
    fractions: &[f64],
    keep_remainder: bool,
    rng: &mut R,
) -> Result<Vec<Dataset>> {
    let n = ds.len();
    let total: f64 = fractions.iter().sum();
    if fractions.iter().any(|&f| !(f > 0.0)) || total > 1.0 + 1e-12 {
        return Err(Error::Config {
            line: None,
            message: format!("split fractions {fractions:?} must be positive and sum to at most 1"),
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut parts = Vec::with_capacity(fractions.len() + 1);
    let mut start = 0;
    for &f in fractions {
        let exact = f * n as f64;
        if exact < 1.0 {
            return Err(Error::Config {
                line: None,
                message: format!("fraction {f} of {n} rows selects no rows"),
            });
        }
        let count = (exact.round() as usize).min(n - start);
        parts.push(ds.select(&order[start..start + count]));
        start += count;
    }
    if keep_remainder && start < n {
        parts.push(ds.select(&order[start..]));
    }
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn two_images() -> (Vec<u8>, Vec<u8>) {
        let images = IdxImages {
            count: 2,
            height: 2,
            width: 2,
            pixels: vec![0, 255, 128, 0, 10, 20, 30, 40],
        };
        (encode_idx_images(&images), encode_idx_labels(&[3, 7]))
    }

    #[test]
    fn scales_pixels() {
        let (ib, lb) = two_images();
        let ds = dataset_from_idx("t", &parse_idx_images(&ib).unwrap(), &parse_idx_labels(&lb).unwrap()).unwrap();
        assert_eq!(ds.x.row(0).to_vec(), vec![0.0, 1.0, 128.0 / 255.0, 0.0]);
        assert_eq!(ds.y, vec![3, 7]);
        assert_eq!(ds.n_classes, 8);
        assert_eq!(ds.image_shape, Some((2, 2)));
    }

    #[test]
    fn wrong_magic_and_truncation() {
        let (ib, lb) = two_images();
        assert_eq!(
            parse_idx_labels(&ib).unwrap_err(),
            IdxError::WrongMagic {
                expected: IDX_LABELS_MAGIC,
                found: IDX_IMAGES_MAGIC
            }
        );
        assert!(matches!(parse_idx_images(&ib[..ib.len() - 1]), Err(IdxError::Truncated { .. })));
        assert!(matches!(parse_idx_labels(&lb[..6]), Err(IdxError::Truncated { .. })));
    }

    #[test]
    fn count_mismatch() {
        let (ib, _) = two_images();
        let err = dataset_from_idx("t", &parse_idx_images(&ib).unwrap(), &[1]).unwrap_err();
        assert!(matches!(err, Error::Idx(IdxError::CountMismatch { images: 2, labels: 1 })));
    }

    #[test]
    fn rectangles_labels_and_pixels() {
        let ds = gen_rectangles(200, 12, &mut rng::stream(1, &[])).unwrap();
        assert!(ds.x.iter().all(|&v| v == 0.0 || v == 1.0));
        for (row, &label) in ds.x.axis_iter(Axis(0)).zip(&ds.y) {
            let rows_on: Vec<usize> = (0..12).filter(|r| (0..12).any(|c| row[r * 12 + c] > 0.0)).collect();
            let cols_on: Vec<usize> = (0..12).filter(|c| (0..12).any(|r| row[r * 12 + c] > 0.0)).collect();
            let h = rows_on.last().unwrap() - rows_on[0] + 1;
            let w = cols_on.last().unwrap() - cols_on[0] + 1;
            assert_eq!(label, usize::from(h > w));
        }
        assert!(gen_rectangles(1, 7, &mut rng::stream(1, &[])).is_err());
    }

    #[test]
    fn single_class_blobs() {
        let ds = gen_blobs(10, 3, 1, 2.0, &mut rng::stream(2, &[])).unwrap();
        assert!(ds.y.iter().all(|&l| l == 0));
        assert!(ds.x.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(gen_blobs(10, 3, 2, 0.0, &mut rng::stream(2, &[])).is_err());
    }

    #[test]
    fn split_halves() {
        let ds = gen_blobs(100, 2, 2, 5.0, &mut rng::stream(3, &[])).unwrap();
        let parts = split(&ds, &[0.5, 0.5], false, &mut rng::stream(4, &[])).unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].len(), 50);
        assert_eq!(parts[1].len(), 50);
        assert!(split(&ds, &[0.001], false, &mut rng::stream(4, &[])).is_err());
        assert!(split(&ds, &[0.7, 0.7], false, &mut rng::stream(4, &[])).is_err());
        let with_rest = split(&ds, &[0.3], true, &mut rng::stream(4, &[])).unwrap();
        assert_eq!(with_rest[1].len(), 70);
    }
}
