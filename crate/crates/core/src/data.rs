//! Dataset ingestion (CIFAR-10/100 binary), desk-scale synthetic data,
//! label-noise injection with clean/noisy bookkeeping, and deterministic
//! batching.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

const CIFAR10_RECORD: usize = 1 + 3 * 1024;
const CIFAR100_RECORD: usize = 2 + 3 * 1024;

/// Partition of a dataset by the label-noise mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    All,
    Clean,
    Noisy,
}

impl Subset {
    pub fn as_str(self) -> &'static str {
        match self {
            Subset::All => "all",
            Subset::Clean => "clean",
            Subset::Noisy => "noisy",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Subset::All),
            "clean" => Ok(Subset::Clean),
            "noisy" => Ok(Subset::Noisy),
            other => Err(Error::InvalidArgument(format!("unknown subset {other:?}"))),
        }
    }
}

/// Images in [0,1] with training labels plus the clean/noisy bookkeeping
/// left behind by label-noise injection.
#[derive(Clone, Debug)]
pub struct ImageDataset {
    images: Vec<Tensor>,
    labels: Vec<usize>,
    original_labels: Vec<usize>,
    noisy_mask: Vec<bool>,
    num_classes: usize,
}

impl ImageDataset {
    pub fn new(images: Vec<Tensor>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        for (i, img) in images.iter().enumerate() {
            if img.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::InvalidArgument(format!(
                    "image {i} has pixel values outside [0,1]"
                )));
            }
        }
        let n = images.len();
        Ok(ImageDataset {
            images,
            original_labels: labels.clone(),
            labels,
            noisy_mask: vec![false; n],
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn image(&self, i: usize) -> &Tensor {
        &self.images[i]
    }

    /// Training label (the noisy one where noise was injected).
    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn original_label(&self, i: usize) -> usize {
        self.original_labels[i]
    }

    pub fn is_noisy(&self, i: usize) -> bool {
        self.noisy_mask[i]
    }

    pub fn noisy_count(&self) -> usize {
        self.noisy_mask.iter().filter(|&&m| m).count()
    }

    pub fn clean_count(&self) -> usize {
        self.len() - self.noisy_count()
    }

    pub fn subset_len(&self, subset: Subset) -> usize {
        match subset {
            Subset::All => self.len(),
            Subset::Clean => self.clean_count(),
            Subset::Noisy => self.noisy_count(),
        }
    }

    pub fn contains(&self, subset: Subset, i: usize) -> bool {
        match subset {
            Subset::All => true,
            Subset::Clean => !self.noisy_mask[i],
            Subset::Noisy => self.noisy_mask[i],
        }
    }

    pub fn subset_indices(&self, subset: Subset) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.contains(subset, i)).collect()
    }
}

/// Label-noise request: exactly round(fraction * N) labels get changed.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub fraction: f64,
    pub seed: u64,
}

/// Reads CIFAR-10 binary records (1 label byte + 3072 pixel bytes) from a
/// file, or from every `*.bin` in a directory in name order.
pub fn load_cifar10(path: &Path) -> Result<ImageDataset> {
    let bytes = read_binary_source(path)?;
    parse_cifar(&bytes, path, CIFAR10_RECORD, 10)
}

/// CIFAR-100 variant: records carry a coarse and a fine label byte; the
/// fine label is used.
pub fn load_cifar100(path: &Path) -> Result<ImageDataset> {
    let bytes = read_binary_source(path)?;
    parse_cifar(&bytes, path, CIFAR100_RECORD, 100)
}

fn read_binary_source(path: &Path) -> Result<Vec<u8>> {
    if path.is_dir() {
        let mut files: Vec<_> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "bin"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::DatasetFormat(format!(
                "{}: directory contains no .bin files",
                path.display()
            )));
        }
        let mut bytes = Vec::new();
        for f in files {
            bytes.extend(fs::read(&f).map_err(|e| Error::io(&f, e))?);
        }
        Ok(bytes)
    } else {
        fs::read(path).map_err(|e| Error::io(path, e))
    }
}

fn parse_cifar(
    bytes: &[u8],
    path: &Path,
    record_len: usize,
    num_classes: usize,
) -> Result<ImageDataset> {
    if bytes.len() % record_len != 0 {
        return Err(Error::DatasetFormat(format!(
            "{}: {} bytes is not a multiple of the {record_len}-byte record",
            path.display(),
            bytes.len()
        )));
    }
    let label_offset = record_len - 3 * 1024 - 1;
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in bytes.chunks_exact(record_len).enumerate() {
        let label = record[label_offset] as usize;
        if label >= num_classes {
            return Err(Error::DatasetFormat(format!(
                "{}: record {i} has label byte {label} >= {num_classes}",
                path.display()
            )));
        }
        let pixels: Vec<f64> = record[label_offset + 1..]
            .iter()
            .map(|&b| f64::from(b) / 255.0)
            .collect();
        images.push(Tensor::new(vec![3, 32, 32], pixels)?);
        labels.push(label);
    }
    ImageDataset::new(images, labels, num_classes)
}

/// Writes CIFAR-10 binary records using the current training labels.
/// Loading and re-exporting a CIFAR-10 file reproduces it byte for byte.
pub fn export_cifar10(data: &ImageDataset, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(data.len() * CIFAR10_RECORD);
    for i in 0..data.len() {
        if data.label(i) > 9 {
            return Err(Error::InvalidArgument(format!(
                "label {} does not fit the CIFAR-10 format",
                data.label(i)
            )));
        }
        bytes.push(data.label(i) as u8);
        let img = data.image(i);
        if img.shape() != [3, 32, 32] {
            return Err(Error::ShapeMismatch(format!(
                "CIFAR-10 export needs 3x32x32 images, got {:?}",
                img.shape()
            )));
        }
        bytes.extend(
            img.data()
                .iter()
                .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8),
        );
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

// Synthetic texture geometry: low-frequency 2D sinusoids on a 32x32 grid.
const SYNTH_SIDE: usize = 32;
const SYNTH_CHANNELS: usize = 3;
const SYNTH_MAX_FREQ: usize = 3;
// Mixing amplitudes (pixel RMS) for class texture, per-sample smooth
// jitter and per-pixel noise.
const SYNTH_CLASS_AMP: f64 = 0.16;
const SYNTH_JITTER_AMP: f64 = 0.10;
const SYNTH_NOISE_AMP: f64 = 0.045;
// Fixed stream for class textures: the class basis is shared by every
// generated dataset so independently seeded train/test splits pose the
// same classification task.
const SYNTH_CLASS_STREAM: u64 = 0x534c_4e53_434c_5354;

struct ModeBasis {
    // cos/sin fields per mode, each SYNTH_SIDE^2 long.
    cos: Vec<Vec<f64>>,
    sin: Vec<Vec<f64>>,
}

fn mode_basis() -> ModeBasis {
    let n = SYNTH_SIDE;
    let mut cos = Vec::new();
    let mut sin = Vec::new();
    for fy in 0..=SYNTH_MAX_FREQ {
        for fx in 0..=SYNTH_MAX_FREQ {
            if fy == 0 && fx == 0 {
                continue;
            }
            let mut c = vec![0.0; n * n];
            let mut s = vec![0.0; n * n];
            for y in 0..n {
                for x in 0..n {
                    let phase = std::f64::consts::TAU * (fy * y + fx * x) as f64 / n as f64;
                    c[y * n + x] = phase.cos();
                    s[y * n + x] = phase.sin();
                }
            }
            cos.push(c);
            sin.push(s);
        }
    }
    ModeBasis { cos, sin }
}

/// Random unit-RMS combination of the sinusoidal modes.
fn random_field(basis: &ModeBasis, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n2 = SYNTH_SIDE * SYNTH_SIDE;
    let mut field = vec![0.0; n2];
    for (c, s) in basis.cos.iter().zip(&basis.sin) {
        let (a, b) : (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        for i in 0..n2 {
            field[i] += a * c[i] + b * s[i];
        }
    }
    let rms = (field.iter().map(|v| v * v).sum::<f64>() / n2 as f64).sqrt();
    if rms > 0.0 {
        for v in field.iter_mut() {
            *v /= rms;
        }
    }
    field
}

/// Desk-scale stand-in for CIFAR: 3x32x32 images where each class is a
/// distinct smooth texture, plus per-sample smooth jitter and pixel noise.
/// Classes are balanced to within one sample; the pixel noise keeps every
/// channel full-rank so singular-value erasure is meaningful.
pub fn generate_synthetic(
    num_samples: usize,
    num_classes: usize,
    seed: u64,
) -> Result<ImageDataset> {
    if num_classes < 2 {
        return Err(Error::InvalidArgument(
            "synthetic data needs at least 2 classes".into(),
        ));
    }
    let basis = mode_basis();
    let n2 = SYNTH_SIDE * SYNTH_SIDE;

    // Class textures come from a fixed stream, independent of `seed`.
    let mut class_fields = Vec::with_capacity(num_classes);
    for c in 0..num_classes {
        let mut class_rng =
            ChaCha8Rng::seed_from_u64(SYNTH_CLASS_STREAM.wrapping_add(c as u64));
        let per_channel: Vec<Vec<f64>> = (0..SYNTH_CHANNELS)
            .map(|_| random_field(&basis, &mut class_rng))
            .collect();
        class_fields.push(per_channel);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(num_samples);
    let mut labels = Vec::with_capacity(num_samples);
    for i in 0..num_samples {
        let class = i % num_classes;
        let mut pixels = vec![0.0; SYNTH_CHANNELS * n2];
        for ch in 0..SYNTH_CHANNELS {
            let jitter = random_field(&basis, &mut rng);
            let class_field = &class_fields[class][ch];
            let out = &mut pixels[ch * n2..(ch + 1) * n2];
            for (j, o) in out.iter_mut().enumerate() {
                let noise: f64 = rng.gen_range(-1.0..1.0);
                *o = (0.5
                    + SYNTH_CLASS_AMP * class_field[j]
                    + SYNTH_JITTER_AMP * jitter[j]
                    + SYNTH_NOISE_AMP * noise)
                    .clamp(0.0, 1.0);
            }
        }
        images.push(Tensor::new(
            vec![SYNTH_CHANNELS, SYNTH_SIDE, SYNTH_SIDE],
            pixels,
        )?);
        labels.push(class);
    }
    ImageDataset::new(images, labels, num_classes)
}

/// Replaces exactly round(fraction * N) labels, chosen uniformly without
/// replacement, by a uniform draw over the other classes. The original
/// labels and the noisy mask record the partition.
pub fn inject_label_noise(data: ImageDataset, spec: &NoiseSpec) -> Result<ImageDataset> {
    if !(0.0..=1.0).contains(&spec.fraction) {
        return Err(Error::InvalidArgument(format!(
            "noise fraction {} outside [0,1]",
            spec.fraction
        )));
    }
    let n = data.len();
    let target = (spec.fraction * n as f64).round() as usize;
    if target == 0 {
        return Ok(data);
    }
    if data.num_classes < 2 {
        return Err(Error::InvalidArgument(
            "cannot corrupt labels with fewer than 2 classes".into(),
        ));
    }

    let mut data = data;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut indices: Vec<usize> = (0..n).collect();
    // Partial Fisher-Yates: the first `target` entries are a uniform
    // sample without replacement.
    for i in 0..target {
        let j = rng.gen_range(i..n);
        indices.swap(i, j);
    }
    for &i in &indices[..target] {
        let offset = rng.gen_range(1..data.num_classes);
        data.labels[i] = (data.original_labels[i] + offset) % data.num_classes;
        data.noisy_mask[i] = true;
    }
    Ok(data)
}

/// Seeded per-epoch shuffle cut into batches; the last batch may be short.
pub struct BatchIter {
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
}

impl Iterator for BatchIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let batch = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        Some(batch)
    }
}

pub fn batch_iterator(
    data: &ImageDataset,
    batch_size: usize,
    epoch_seed: u64,
) -> Result<BatchIter> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("cannot batch an empty dataset".into()));
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be >= 1".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    Ok(BatchIter {
        order,
        batch_size,
        cursor: 0,
    })
}

/// Provenance record written beside every sweep.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DatasetManifest {
    pub source: String,
    pub num_samples: usize,
    pub num_classes: usize,
    pub noise_fraction: f64,
    pub noise_seed: u64,
    pub clean_count: usize,
    pub noisy_count: usize,
}

impl DatasetManifest {
    pub fn describe(data: &ImageDataset, source: String, noise: &NoiseSpec) -> Self {
        DatasetManifest {
            source,
            num_samples: data.len(),
            num_classes: data.num_classes(),
            noise_fraction: noise.fraction,
            noise_seed: noise.seed,
            clean_count: data.clean_count(),
            noisy_count: data.noisy_count(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_record(label: u8, pixel: u8) -> Vec<u8> {
        let mut rec = vec![label];
        rec.extend(std::iter::repeat(pixel).take(3072));
        rec
    }

    #[test]
    fn load_single_record_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.bin");
        fs::write(&path, fixture_record(3, 255)).unwrap();
        let data = load_cifar10(&path).unwrap();
        assert_eq!(data.len(), 1);
        assert_eq!(data.label(0), 3);
        assert!(data.image(0).data().iter().all(|&v| v == 1.0));
        assert_eq!(data.noisy_count(), 0);
    }

    #[test]
    fn truncated_file_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        fs::write(&path, vec![0u8; 3072]).unwrap();
        assert!(matches!(
            load_cifar10(&path),
            Err(Error::DatasetFormat(_))
        ));
    }

    #[test]
    fn out_of_range_label_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        fs::write(&path, fixture_record(10, 0)).unwrap();
        assert!(matches!(
            load_cifar10(&path),
            Err(Error::DatasetFormat(_))
        ));
    }

    #[test]
    fn two_record_fixture_round_trips_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("two.bin");
        let mut bytes = fixture_record(1, 7);
        bytes.extend(fixture_record(9, 200));
        // Some spread in the pixel bytes.
        bytes[5] = 13;
        bytes[3080] = 77;
        fs::write(&path, &bytes).unwrap();

        let data = load_cifar10(&path).unwrap();
        let out = dir.path().join("copy.bin");
        export_cifar10(&data, &out).unwrap();
        assert_eq!(fs::read(&out).unwrap(), bytes);
    }

    #[test]
    fn cifar100_uses_fine_label() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c100.bin");
        let mut rec = vec![5u8, 42u8];
        rec.extend(std::iter::repeat(128u8).take(3072));
        fs::write(&path, rec).unwrap();
        let data = load_cifar100(&path).unwrap();
        assert_eq!(data.label(0), 42);
        assert_eq!(data.num_classes(), 100);
    }

    #[test]
    fn synthetic_classes_are_balanced() {
        let data = generate_synthetic(10, 2, 0).unwrap();
        let ones = (0..10).filter(|&i| data.label(i) == 1).count();
        assert_eq!(ones, 5);
        let data = generate_synthetic(11, 3, 0).unwrap();
        let mut counts = [0usize; 3];
        for i in 0..11 {
            counts[data.label(i)] += 1;
        }
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    }

    #[test]
    fn synthetic_is_deterministic_and_seed_sensitive() {
        let a = generate_synthetic(6, 3, 9).unwrap();
        let b = generate_synthetic(6, 3, 9).unwrap();
        let c = generate_synthetic(6, 3, 10).unwrap();
        for i in 0..6 {
            assert_eq!(a.image(i), b.image(i));
        }
        assert_ne!(a.image(0), c.image(0));
    }

    #[test]
    fn synthetic_class_textures_are_shared_across_seeds() {
        // Same class, different dataset seeds: the smooth class component
        // must dominate the difference less than across classes.
        let a = generate_synthetic(4, 2, 1).unwrap();
        let b = generate_synthetic(4, 2, 2).unwrap();
        let same_class = a.image(0).distance(b.image(0)).unwrap();
        let diff_class = a.image(0).distance(b.image(1)).unwrap();
        assert!(same_class < diff_class);
    }

    #[test]
    fn noise_fraction_zero_is_identity() {
        let data = generate_synthetic(10, 2, 0).unwrap();
        let labels: Vec<usize> = (0..10).map(|i| data.label(i)).collect();
        let out = inject_label_noise(
            data,
            &NoiseSpec {
                fraction: 0.0,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(out.noisy_count(), 0);
        for i in 0..10 {
            assert_eq!(out.label(i), labels[i]);
        }
    }

    #[test]
    fn noise_fraction_one_changes_every_label() {
        let data = generate_synthetic(10, 4, 0).unwrap();
        let out = inject_label_noise(
            data,
            &NoiseSpec {
                fraction: 1.0,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(out.noisy_count(), 10);
        for i in 0..10 {
            assert_ne!(out.label(i), out.original_label(i));
            assert!(out.is_noisy(i));
        }
    }

    #[test]
    fn noise_count_is_exact() {
        let data = generate_synthetic(1000, 10, 0).unwrap();
        let out = inject_label_noise(
            data,
            &NoiseSpec {
                fraction: 0.2,
                seed: 3,
            },
        )
        .unwrap();
        assert_eq!(out.noisy_count(), 200);
        assert_eq!(out.clean_count(), 800);
        // mask == (label != original) everywhere
        for i in 0..out.len() {
            assert_eq!(out.is_noisy(i), out.label(i) != out.original_label(i));
        }
    }

    #[test]
    fn batch_sizes_and_coverage() {
        let data = generate_synthetic(5, 2, 0).unwrap();
        let batches: Vec<Vec<usize>> = batch_iterator(&data, 2, 17).unwrap().collect();
        assert_eq!(
            batches.iter().map(|b| b.len()).collect::<Vec<_>>(),
            vec![2, 2, 1]
        );
        let mut all: Vec<usize> = batches.into_iter().flatten().collect();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn batch_order_is_seeded() {
        let data = generate_synthetic(8, 2, 0).unwrap();
        let a: Vec<Vec<usize>> = batch_iterator(&data, 3, 5).unwrap().collect();
        let b: Vec<Vec<usize>> = batch_iterator(&data, 3, 5).unwrap().collect();
        let c: Vec<Vec<usize>> = batch_iterator(&data, 3, 6).unwrap().collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn subset_partition_is_exact() {
        let data = generate_synthetic(50, 5, 0).unwrap();
        let data = inject_label_noise(
            data,
            &NoiseSpec {
                fraction: 0.3,
                seed: 2,
            },
        )
        .unwrap();
        let clean = data.subset_indices(Subset::Clean);
        let noisy = data.subset_indices(Subset::Noisy);
        assert_eq!(clean.len() + noisy.len(), data.len());
        let mut merged = [clean, noisy].concat();
        merged.sort_unstable();
        assert_eq!(merged, (0..data.len()).collect::<Vec<_>>());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let data = generate_synthetic(10, 2, 0).unwrap();
        let noise = NoiseSpec {
            fraction: 0.2,
            seed: 5,
        };
        let data = inject_label_noise(data, &noise).unwrap();
        let manifest = DatasetManifest::describe(&data, "synthetic".into(), &noise);
        manifest.write(&path).unwrap();
        assert_eq!(DatasetManifest::read(&path).unwrap(), manifest);
    }
}
