//! CIFAR-10/100 binary batches, synthetic datasets and the train/validation
//! split.
//!
//! CIFAR binary records are `label (1 byte) + 3072 pixel bytes` for CIFAR-10
//! and `coarse label + fine label + 3072 pixel bytes` for CIFAR-100. Pixels are
//! three 32x32 planes (R, G, B), row-major. Loaded images are NHWC
//! `[n, 32, 32, 3]`, scaled by 1/255; CIFAR-100 keeps the fine label.
//! Files are never downloaded; fetch the "binary version" archives from
//! <https://www.cs.toronto.edu/~kriz/cifar.html>.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Batch;
use crate::tensor::{RngStream, Tensor};

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_PIXELS: usize = CIFAR_SIDE * CIFAR_SIDE * 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CifarVariant {
    C10,
    C100,
}

impl CifarVariant {
    pub fn classes(self) -> usize {
        match self {
            CifarVariant::C10 => 10,
            CifarVariant::C100 => 100,
        }
    }

    fn label_bytes(self) -> usize {
        match self {
            CifarVariant::C10 => 1,
            CifarVariant::C100 => 2,
        }
    }

    pub fn record_len(self) -> usize {
        self.label_bytes() + CIFAR_PIXELS
    }

    pub fn train_files(self) -> &'static [&'static str] {
        match self {
            CifarVariant::C10 => &[
                "data_batch_1.bin",
                "data_batch_2.bin",
                "data_batch_3.bin",
                "data_batch_4.bin",
                "data_batch_5.bin",
            ],
            CifarVariant::C100 => &["train.bin"],
        }
    }

    pub fn test_file(self) -> &'static str {
        match self {
            CifarVariant::C10 => "test_batch.bin",
            CifarVariant::C100 => "test.bin",
        }
    }
}

impl FromStr for CifarVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "c10" | "cifar10" => Ok(CifarVariant::C10),
            "c100" | "cifar100" => Ok(CifarVariant::C100),
            other => Err(Error::Config(format!("unknown CIFAR variant {other:?}"))),
        }
    }
}

/// Labelled samples; `inputs` is `[n, features...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Tensor,
    labels: Vec<usize>,
    class_count: usize,
}

impl Dataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if inputs.shape().len() < 2 || inputs.shape()[0] != labels.len() {
            return Err(Error::ShapeMsg(format!(
                "inputs {:?} do not match {} labels",
                inputs.shape(),
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Label {
                label,
                classes: class_count,
            });
        }
        Ok(Dataset {
            inputs,
            labels,
            class_count,
        })
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    fn row_len(&self) -> usize {
        self.sample_shape().iter().product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let r = self.row_len();
        &self.inputs.data()[i * r..(i + 1) * r]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows `indices`, in that order. Panics on an empty or out-of-range selection.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        assert!(!indices.is_empty(), "empty selection");
        let mut data = Vec::with_capacity(indices.len() * self.row_len());
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        let mut shape = self.inputs.shape().to_vec();
        shape[0] = indices.len();
        Dataset {
            inputs: Tensor::new(shape, data).expect("selected rows fill the shape"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        let sel = self.select(indices);
        Batch::new(sel.inputs, sel.labels).expect("dataset rows form a valid batch")
    }

    pub fn as_batch(&self) -> Batch {
        Batch::new(self.inputs.clone(), self.labels.clone()).expect("dataset forms a valid batch")
    }
}

/// Decodes whole CIFAR records. A trailing partial record or an empty buffer
/// is a format error.
pub fn parse_cifar(bytes: &[u8], variant: CifarVariant) -> Result<Dataset> {
    let rec = variant.record_len();
    if bytes.is_empty() || bytes.len() % rec != 0 {
        return Err(Error::Format(format!(
            "{} bytes is not a whole number of {rec}-byte records",
            bytes.len()
        )));
    }
    let n = bytes.len() / rec;
    let plane = CIFAR_SIDE * CIFAR_SIDE;
    let mut labels = Vec::with_capacity(n);
    let mut data = vec![0.0; n * CIFAR_PIXELS];
    for (i, record) in bytes.chunks_exact(rec).enumerate() {
        let label = record[variant.label_bytes() - 1] as usize;
        if label >= variant.classes() {
            return Err(Error::Format(format!(
                "record {i} has label {label} for a {}-class set",
                variant.classes()
            )));
        }
        labels.push(label);
        let pixels = &record[variant.label_bytes()..];
        let out = &mut data[i * CIFAR_PIXELS..(i + 1) * CIFAR_PIXELS];
        for p in 0..plane {
            for c in 0..3 {
                out[p * 3 + c] = pixels[c * plane + p] as f64 / 255.0;
            }
        }
    }
    let inputs = Tensor::new(vec![n, CIFAR_SIDE, CIFAR_SIDE, 3], data)?;
    Dataset::new(inputs, labels, variant.classes())
}

/// Encodes `[n, 32, 32, 3]` images in `[0, 1]` as CIFAR records (values are
/// rounded to the nearest byte; CIFAR-100 coarse labels are written as 0).
pub fn encode_cifar(ds: &Dataset, variant: CifarVariant) -> Result<Vec<u8>> {
    if ds.sample_shape() != [CIFAR_SIDE, CIFAR_SIDE, 3] {
        return Err(Error::ShapeMsg(format!(
            "CIFAR records hold 32x32x3 images, dataset rows are {:?}",
            ds.sample_shape()
        )));
    }
    if ds.class_count() > variant.classes() {
        return Err(Error::Label {
            label: ds.class_count() - 1,
            classes: variant.classes(),
        });
    }
    let plane = CIFAR_SIDE * CIFAR_SIDE;
    let mut out = Vec::with_capacity(ds.len() * variant.record_len());
    for i in 0..ds.len() {
        if variant == CifarVariant::C100 {
            out.push(0);
        }
        out.push(ds.labels()[i] as u8);
        let row = ds.row(i);
        for c in 0..3 {
            for p in 0..plane {
                out.push((row[p * 3 + c].clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    Ok(out)
}

pub fn load_cifar_file(path: &Path, variant: CifarVariant) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_cifar(&bytes, variant).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Loads the standard train and test batch files of `variant` from `dir`.
pub fn load_cifar(dir: &Path, variant: CifarVariant) -> Result<(Dataset, Dataset)> {
    let parts = variant
        .train_files()
        .iter()
        .map(|f| load_cifar_file(&dir.join(f), variant))
        .collect::<Result<Vec<_>>>()?;
    let train = concat(&parts)?;
    let test = load_cifar_file(&dir.join(variant.test_file()), variant)?;
    Ok((train, test))
}

pub fn concat(parts: &[Dataset]) -> Result<Dataset> {
    let first = parts
        .first()
        .ok_or_else(|| Error::ShapeMsg("nothing to concatenate".into()))?;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for p in parts {
        if p.sample_shape() != first.sample_shape() || p.class_count() != first.class_count() {
            return Err(Error::ShapeMsg(
                "datasets disagree on sample shape or classes".into(),
            ));
        }
        data.extend_from_slice(p.inputs().data());
        labels.extend_from_slice(p.labels());
    }
    let mut shape = first.inputs().shape().to_vec();
    shape[0] = labels.len();
    Dataset::new(Tensor::new(shape, data)?, labels, first.class_count())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub val_ratio: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            val_ratio: 0.1,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.val_ratio > 0.0 && self.val_ratio < 1.0) {
            return Err(Error::Config(format!(
                "val_ratio must lie in (0, 1), got {}",
                self.val_ratio
            )));
        }
        Ok(())
    }
}

/// Seeded shuffle, then the first `round(val_ratio * n)` rows become the
/// validation set. Returns `(train, validation)`.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let n = ds.len();
    let n_val = (spec.val_ratio * n as f64).round() as usize;
    if n_val == 0 || n_val == n {
        return Err(Error::Config(format!(
            "val_ratio {} leaves an empty side for {n} samples",
            spec.val_ratio
        )));
    }
    let order = RngStream::new(spec.seed).permutation(n);
    let (val_idx, train_idx) = order.split_at(n_val);
    Ok((ds.select(train_idx), ds.select(val_idx)))
}

/// Class-balanced seeded sample of `per_class` rows per class, kept in the
/// original row order.
pub fn subset(ds: &Dataset, per_class: usize, seed: u64) -> Result<Dataset> {
    if per_class == 0 {
        return Err(Error::Config("per_class must be >= 1".into()));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.class_count()];
    for (i, &l) in ds.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = RngStream::new(seed);
    let mut picked = Vec::with_capacity(per_class * ds.class_count());
    for (class, mut idx) in by_class.into_iter().enumerate() {
        if idx.len() < per_class {
            return Err(Error::Insufficient {
                class,
                available: idx.len(),
                requested: per_class,
            });
        }
        rng.shuffle(&mut idx);
        picked.extend_from_slice(&idx[..per_class]);
    }
    picked.sort_unstable();
    Ok(ds.select(&picked))
}

/// Gaussian clusters: centers drawn `N(0, 3^2)` per coordinate, samples
/// `center + N(0, 1)`. Rows cycle through the classes.
pub fn synth_blobs(classes: usize, per_class: usize, dim: usize, seed: u64) -> Result<Dataset> {
    if classes < 2 || per_class == 0 || dim == 0 {
        return Err(Error::Config(format!(
            "synth_blobs needs classes >= 2, per_class >= 1, dim >= 1 (got {classes}, {per_class}, {dim})"
        )));
    }
    let mut rng = RngStream::new(seed);
    let centers: Vec<f64> = (0..classes * dim)
        .map(|_| 3.0 * rng.standard_normal())
        .collect();
    let mut data = Vec::with_capacity(classes * per_class * dim);
    let mut labels = Vec::with_capacity(classes * per_class);
    for _ in 0..per_class {
        for c in 0..classes {
            for d in 0..dim {
                data.push(centers[c * dim + d] + rng.standard_normal());
            }
            labels.push(c);
        }
    }
    Dataset::new(Tensor::new(vec![labels.len(), dim], data)?, labels, classes)
}

/// CIFAR-shaped synthetic images in `[0, 1]`: each class has a random 4x4x3
/// prototype upsampled to 32x32; samples add `N(0, 0.2^2)` pixel noise and
/// are clamped. Rows cycle through the classes.
pub fn synth_images(classes: usize, per_class: usize, seed: u64) -> Result<Dataset> {
    if classes < 2 || per_class == 0 {
        return Err(Error::Config(format!(
            "synth_images needs classes >= 2 and per_class >= 1 (got {classes}, {per_class})"
        )));
    }
    const COARSE: usize = 4;
    let mut rng = RngStream::new(seed);
    let protos: Vec<f64> = (0..classes * COARSE * COARSE * 3)
        .map(|_| rng.uniform_in(0.2, 0.8))
        .collect();
    let cell = CIFAR_SIDE / COARSE;
    let mut data = Vec::with_capacity(classes * per_class * CIFAR_PIXELS);
    let mut labels = Vec::with_capacity(classes * per_class);
    for _ in 0..per_class {
        for c in 0..classes {
            let proto = &protos[c * COARSE * COARSE * 3..(c + 1) * COARSE * COARSE * 3];
            for y in 0..CIFAR_SIDE {
                for x in 0..CIFAR_SIDE {
                    for ch in 0..3 {
                        let base = proto[((y / cell) * COARSE + x / cell) * 3 + ch];
                        data.push((base + 0.2 * rng.standard_normal()).clamp(0.0, 1.0));
                    }
                }
            }
            labels.push(c);
        }
    }
    let inputs = Tensor::new(vec![labels.len(), CIFAR_SIDE, CIFAR_SIDE, 3], data)?;
    Dataset::new(inputs, labels, classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_record(label: u8, pixel: u8, variant: CifarVariant) -> Vec<u8> {
        let mut r = Vec::new();
        if variant == CifarVariant::C100 {
            r.push(3);
        }
        r.push(label);
        r.extend(std::iter::repeat(pixel).take(CIFAR_PIXELS));
        r
    }

    #[test]
    fn single_white_record() {
        let ds = parse_cifar(&one_record(7, 255, CifarVariant::C10), CifarVariant::C10).unwrap();
        assert_eq!(ds.labels(), &[7]);
        assert_eq!(ds.inputs().shape(), &[1, 32, 32, 3]);
        assert!(ds.inputs().data().iter().all(|&v| v == 1.0));
        assert_eq!(ds.class_count(), 10);
    }

    #[test]
    fn cifar100_uses_fine_label() {
        let ds = parse_cifar(&one_record(42, 0, CifarVariant::C100), CifarVariant::C100).unwrap();
        assert_eq!(ds.labels(), &[42]);
        assert_eq!(ds.class_count(), 100);
    }

    #[test]
    fn planes_become_channels() {
        let mut rec = vec![1u8];
        rec.extend(std::iter::repeat(10).take(1024));
        rec.extend(std::iter::repeat(20).take(1024));
        rec.extend(std::iter::repeat(30).take(1024));
        let ds = parse_cifar(&rec, CifarVariant::C10).unwrap();
        assert_eq!(&ds.row(0)[..3], &[10.0 / 255.0, 20.0 / 255.0, 30.0 / 255.0]);
    }

    #[test]
    fn truncated_buffer_is_format_error() {
        let mut bytes = one_record(1, 0, CifarVariant::C10);
        bytes.extend(one_record(2, 0, CifarVariant::C10));
        bytes.pop();
        assert_eq!(
            parse_cifar(&bytes, CifarVariant::C10).unwrap_err().kind(),
            "format"
        );
        assert_eq!(
            parse_cifar(&[], CifarVariant::C10).unwrap_err().kind(),
            "format"
        );
        assert_eq!(
            parse_cifar(&one_record(10, 0, CifarVariant::C10), CifarVariant::C10)
                .unwrap_err()
                .kind(),
            "format"
        );
    }

    #[test]
    fn missing_directory_is_io_error() {
        let err = load_cifar(Path::new("/nonexistent/cifar"), CifarVariant::C10).unwrap_err();
        assert_eq!(err.kind(), "io");
    }

    #[test]
    fn encode_then_parse_is_identity_on_byte_images() {
        let ds = parse_cifar(
            &[
                one_record(3, 17, CifarVariant::C10),
                one_record(9, 200, CifarVariant::C10),
            ]
            .concat(),
            CifarVariant::C10,
        )
        .unwrap();
        let bytes = encode_cifar(&ds, CifarVariant::C10).unwrap();
        assert_eq!(parse_cifar(&bytes, CifarVariant::C10).unwrap(), ds);
    }

    #[test]
    fn split_examples() {
        let ds = synth_blobs(2, 5, 1, 0).unwrap();
        let (train, val) = split(
            &ds,
            &SplitSpec {
                val_ratio: 0.1,
                seed: 3,
            },
        )
        .unwrap();
        assert_eq!((train.len(), val.len()), (9, 1));
        let again = split(
            &ds,
            &SplitSpec {
                val_ratio: 0.1,
                seed: 3,
            },
        )
        .unwrap();
        assert_eq!((train, val), again);
        assert!(split(
            &ds,
            &SplitSpec {
                val_ratio: 1.0,
                seed: 0
            }
        )
        .is_err());
        assert!(split(
            &ds,
            &SplitSpec {
                val_ratio: 0.01,
                seed: 0
            }
        )
        .is_err());
    }

    #[test]
    fn split_ratio_on_full_size() {
        // one feature per row keeps this cheap
        let n = 50_000;
        let ds = Dataset::new(
            Tensor::new(vec![n, 1], (0..n).map(|i| i as f64).collect()).unwrap(),
            vec![0; n],
            1,
        )
        .unwrap();
        let (train, val) = split(
            &ds,
            &SplitSpec {
                val_ratio: 0.1,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!((train.len(), val.len()), (45_000, 5_000));
    }

    #[test]
    fn subset_examples() {
        let ds = synth_blobs(3, 20, 2, 1).unwrap();
        let s = subset(&ds, 5, 9).unwrap();
        assert_eq!(s.len(), 15);
        assert_eq!(s.class_counts(), vec![5, 5, 5]);
        assert_eq!(s, subset(&ds, 5, 9).unwrap());
        match subset(&ds, 21, 0) {
            Err(Error::Insufficient {
                available,
                requested,
                ..
            }) => {
                assert_eq!((available, requested), (20, 21))
            }
            other => panic!("expected insufficient, got {other:?}"),
        }
    }

    #[test]
    fn blobs_shape() {
        let ds = synth_blobs(3, 50, 2, 4).unwrap();
        assert_eq!(ds.len(), 150);
        assert_eq!(ds.class_counts(), vec![50, 50, 50]);
        assert_eq!(ds.sample_shape(), &[2]);
    }

    #[test]
    fn synthetic_images_are_in_range() {
        let ds = synth_images(4, 3, 2).unwrap();
        assert_eq!(ds.inputs().shape(), &[12, 32, 32, 3]);
        assert!(ds.inputs().data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn split_is_a_partition(n in 2usize..200, ratio in 0.05f64..0.95, seed in any::<u64>()) {
                let ds = Dataset::new(
                    Tensor::new(vec![n, 1], (0..n).map(|i| i as f64).collect()).unwrap(),
                    vec![0; n],
                    1,
                ).unwrap();
                let n_val = (ratio * n as f64).round() as usize;
                prop_assume!(n_val > 0 && n_val < n);
                let (train, val) = split(&ds, &SplitSpec { val_ratio: ratio, seed }).unwrap();
                prop_assert_eq!(val.len(), n_val);
                let mut all: Vec<usize> = train.inputs().data().iter()
                    .chain(val.inputs().data())
                    .map(|&v| v as usize)
                    .collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            }
        }
    }
}
