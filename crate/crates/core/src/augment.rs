//! Measurement-probe transformations: singular-value-erasure augmentation
//! of controlled strength, photometric jitter for tangent directions, and
//! on-manifold path generation. All operations are pure functions of
//! (input, spec, seed).

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Multiplicative jitter factors live in [0.9, 1.1].
pub const JITTER_FACTOR_RANGE: (f64, f64) = (0.9, 1.1);
/// Hue shift as a fraction of the full hue circle, in [-0.05, 0.05].
pub const JITTER_HUE_RANGE: (f64, f64) = (-0.05, 0.05);
/// Default number of tangent directions per sample.
pub const DEFAULT_TANGENT_COUNT: usize = 4;
/// Default finite-difference step along tangent directions.
pub const DEFAULT_TANGENT_DELTA: f64 = 0.1;

/// Strength (number of erased singular values) and path offset of one
/// SVD augmentation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SvdAugmentSpec {
    pub strength: usize,
    pub path_index: usize,
}

/// Per-channel SVD factors of a square image, computed once and reused
/// for every (strength, path) reconstruction of the same base image.
struct ImageSvd {
    side: usize,
    channels: Vec<ChannelFactor>,
}

struct ChannelFactor {
    u: DMatrix<f64>,
    v_t: DMatrix<f64>,
    sigma: Vec<f64>,
}

impl ImageSvd {
    fn compute(x: &Tensor) -> Result<Self> {
        let shape = x.shape();
        if shape.len() != 3 {
            return Err(Error::ShapeMismatch(format!(
                "expected [c,h,w] image, got {shape:?}"
            )));
        }
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        if h != w {
            return Err(Error::InvalidArgument(format!(
                "SVD augmentation assumes square spatial dims, got {h}x{w}"
            )));
        }
        let mut channels = Vec::with_capacity(c);
        for ch in 0..c {
            let m = DMatrix::from_row_slice(h, w, &x.data()[ch * h * w..(ch + 1) * h * w]);
            let svd = m
                .try_svd(true, true, f64::EPSILON, 0)
                .ok_or_else(|| Error::InvalidArgument("SVD did not converge".into()))?;
            // Singular values come back sorted by decreasing magnitude.
            channels.push(ChannelFactor {
                u: svd.u.expect("u requested"),
                v_t: svd.v_t.expect("v_t requested"),
                sigma: svd.singular_values.as_slice().to_vec(),
            });
        }
        Ok(ImageSvd { side: w, channels })
    }

    /// Erases singular values at 1-based indices w-k-p+1 ..= w-p (in
    /// descending-magnitude order) from every channel by subtracting the
    /// corresponding rank-one components. Strength 0 returns the base
    /// image unchanged.
    fn erase(&self, x: &Tensor, spec: &SvdAugmentSpec) -> Result<Tensor> {
        let (k, p, w) = (spec.strength, spec.path_index, self.side);
        if k + p > w {
            return Err(Error::InvalidArgument(format!(
                "strength {k} + path index {p} exceeds spatial dim {w}"
            )));
        }
        if k == 0 {
            return Ok(x.clone());
        }
        let mut out = x.clone();
        let hw = w * w;
        for (ch, factor) in self.channels.iter().enumerate() {
            let data = &mut out.data_mut()[ch * hw..(ch + 1) * hw];
            for i in (w - k - p)..(w - p) {
                let sigma = factor.sigma[i];
                let u = factor.u.column(i);
                let vt = factor.v_t.row(i);
                for y in 0..w {
                    let su = sigma * u[y];
                    let row = &mut data[y * w..(y + 1) * w];
                    for (x_idx, val) in row.iter_mut().enumerate() {
                        *val -= su * vt[x_idx];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Root-sum-square of the erased singular values across channels: the
    /// exact Frobenius distance of the erasure.
    fn erased_magnitude(&self, spec: &SvdAugmentSpec) -> f64 {
        let (k, p, w) = (spec.strength, spec.path_index, self.side);
        let mut sum = 0.0;
        for factor in &self.channels {
            for i in (w - k - p)..(w - p) {
                sum += factor.sigma[i] * factor.sigma[i];
            }
        }
        sum.sqrt()
    }
}

/// Weak image perturbation obtained by zeroing a block of small singular
/// values per channel; strength is the number of erased values.
pub fn svd_augment(x: &Tensor, spec: &SvdAugmentSpec) -> Result<Tensor> {
    ImageSvd::compute(x)?.erase(x, spec)
}

/// The four photometric transforms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JitterOp {
    Brightness,
    Contrast,
    Saturation,
    Hue,
}

/// One concrete photometric jitter: factors plus a fixed application order.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorJitterSpec {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue_shift: f64,
    pub order: [JitterOp; 4],
}

impl ColorJitterSpec {
    pub fn identity() -> Self {
        ColorJitterSpec {
            brightness: 1.0,
            contrast: 1.0,
            saturation: 1.0,
            hue_shift: 0.0,
            order: [
                JitterOp::Brightness,
                JitterOp::Contrast,
                JitterOp::Saturation,
                JitterOp::Hue,
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = JITTER_FACTOR_RANGE;
        for (name, v) in [
            ("brightness", self.brightness),
            ("contrast", self.contrast),
            ("saturation", self.saturation),
        ] {
            if !(lo..=hi).contains(&v) {
                return Err(Error::InvalidArgument(format!(
                    "{name} factor {v} outside [{lo}, {hi}]"
                )));
            }
        }
        let (hlo, hhi) = JITTER_HUE_RANGE;
        if !(hlo..=hhi).contains(&self.hue_shift) {
            return Err(Error::InvalidArgument(format!(
                "hue shift {} outside [{hlo}, {hhi}]",
                self.hue_shift
            )));
        }
        Ok(())
    }

    /// Uniform draw over the declared ranges with a seeded application
    /// order.
    pub fn sample(rng: &mut ChaCha8Rng) -> Self {
        let (lo, hi) = JITTER_FACTOR_RANGE;
        let (hlo, hhi) = JITTER_HUE_RANGE;
        let mut order = [
            JitterOp::Brightness,
            JitterOp::Contrast,
            JitterOp::Saturation,
            JitterOp::Hue,
        ];
        let spec = ColorJitterSpec {
            brightness: rng.gen_range(lo..=hi),
            contrast: rng.gen_range(lo..=hi),
            saturation: rng.gen_range(lo..=hi),
            hue_shift: rng.gen_range(hlo..=hhi),
            order,
        };
        let mut spec = spec;
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        spec.order = order;
        spec
    }
}

fn luma(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let v = max;
    let s = if max > 0.0 { d / max } else { 0.0 };
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        (((g - b) / d).rem_euclid(6.0)) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    (h, s, v)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let sector = (h6.floor() as usize) % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - f * s);
    let t = v * (1.0 - (1.0 - f) * s);
    match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

/// Applies the spec's transforms in its declared order to a 3-channel
/// image in [0,1]; exact-identity factors are skipped so the identity
/// spec reproduces the input bitwise.
pub fn color_jitter(x: &Tensor, spec: &ColorJitterSpec) -> Result<Tensor> {
    spec.validate()?;
    let shape = x.shape();
    if shape.len() != 3 || shape[0] != 3 {
        return Err(Error::ShapeMismatch(format!(
            "color jitter needs a [3,h,w] image, got {shape:?}"
        )));
    }
    let hw = shape[1] * shape[2];
    let mut out = x.clone();
    for op in spec.order {
        let data = out.data_mut();
        match op {
            JitterOp::Brightness => {
                let f = spec.brightness;
                if f == 1.0 {
                    continue;
                }
                for v in data.iter_mut() {
                    *v = (*v * f).clamp(0.0, 1.0);
                }
            }
            JitterOp::Contrast => {
                let f = spec.contrast;
                if f == 1.0 {
                    continue;
                }
                let mut mean = 0.0;
                for i in 0..hw {
                    mean += luma(data[i], data[hw + i], data[2 * hw + i]);
                }
                mean /= hw as f64;
                for v in data.iter_mut() {
                    *v = (mean + f * (*v - mean)).clamp(0.0, 1.0);
                }
            }
            JitterOp::Saturation => {
                let f = spec.saturation;
                if f == 1.0 {
                    continue;
                }
                for i in 0..hw {
                    let gray = luma(data[i], data[hw + i], data[2 * hw + i]);
                    for c in 0..3 {
                        let v = &mut data[c * hw + i];
                        *v = (gray + f * (*v - gray)).clamp(0.0, 1.0);
                    }
                }
            }
            JitterOp::Hue => {
                let shift = spec.hue_shift;
                if shift == 0.0 {
                    continue;
                }
                for i in 0..hw {
                    let (h, s, v) = rgb_to_hsv(data[i], data[hw + i], data[2 * hw + i]);
                    let (r, g, b) = hsv_to_rgb(h + shift, s, v);
                    data[i] = r.clamp(0.0, 1.0);
                    data[hw + i] = g.clamp(0.0, 1.0);
                    data[2 * hw + i] = b.clamp(0.0, 1.0);
                }
            }
        }
    }
    Ok(out)
}

/// Displacement vectors u_m = jitter(x) - x approximating the tangent
/// space local to x, together with the finite-difference step size.
#[derive(Clone, Debug)]
pub struct TangentDirectionSet {
    directions: Vec<Tensor>,
    delta: f64,
}

impl TangentDirectionSet {
    /// Plumbing constructor for oracles and tests that need prescribed
    /// directions.
    pub fn from_directions(directions: Vec<Tensor>, delta: f64) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::InvalidArgument("need at least one direction".into()));
        }
        if delta <= 0.0 {
            return Err(Error::InvalidArgument("step size must be positive".into()));
        }
        let shape = directions[0].shape().to_vec();
        if directions.iter().any(|d| d.shape() != shape) {
            return Err(Error::ShapeMismatch("mixed direction shapes".into()));
        }
        Ok(TangentDirectionSet { directions, delta })
    }

    pub fn directions(&self) -> &[Tensor] {
        &self.directions
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn count(&self) -> usize {
        self.directions.len()
    }
}

/// Samples M jitter displacements of x with seeded randomness.
pub fn sample_tangent_directions(
    x: &Tensor,
    count: usize,
    delta: f64,
    seed: u64,
) -> Result<TangentDirectionSet> {
    if count == 0 {
        return Err(Error::InvalidArgument("need at least one direction".into()));
    }
    if delta <= 0.0 {
        return Err(Error::InvalidArgument("step size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut directions = Vec::with_capacity(count);
    for _ in 0..count {
        let spec = ColorJitterSpec::sample(&mut rng);
        directions.push(color_jitter(x, &spec)?.sub(x)?);
    }
    Ok(TangentDirectionSet { directions, delta })
}

/// Ordered sequence of augmented points of increasing strength
/// approximating an on-manifold trajectory from the base point.
#[derive(Clone, Debug)]
pub struct AugmentationPath {
    nodes: Vec<Tensor>,
    strengths: Vec<usize>,
    segment_lengths: Vec<f64>,
    length: f64,
}

impl AugmentationPath {
    /// Builds a path from explicit nodes; node 0 is the base point.
    pub fn from_nodes(nodes: Vec<Tensor>, strengths: Vec<usize>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidArgument(
                "a path needs at least one segment".into(),
            ));
        }
        if nodes.len() != strengths.len() {
            return Err(Error::InvalidArgument(
                "one strength per node is required".into(),
            ));
        }
        if !strengths.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(
                "strengths must be strictly increasing".into(),
            ));
        }
        let mut segment_lengths = Vec::with_capacity(nodes.len() - 1);
        for pair in nodes.windows(2) {
            segment_lengths.push(pair[1].distance(&pair[0])?);
        }
        let length = segment_lengths.iter().sum();
        Ok(AugmentationPath {
            nodes,
            strengths,
            segment_lengths,
            length,
        })
    }

    pub fn base(&self) -> &Tensor {
        &self.nodes[0]
    }

    pub fn nodes(&self) -> &[Tensor] {
        &self.nodes
    }

    pub fn strengths(&self) -> &[usize] {
        &self.strengths
    }

    pub fn segment_lengths(&self) -> &[f64] {
        &self.segment_lengths
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn num_segments(&self) -> usize {
        self.segment_lengths.len()
    }

    /// Prefix of the path up to strength index `k` (k segments).
    pub fn truncated(&self, k: usize) -> Result<AugmentationPath> {
        if k == 0 || k > self.num_segments() {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate a {}-segment path to {k} segments",
                self.num_segments()
            )));
        }
        let segment_lengths = self.segment_lengths[..k].to_vec();
        Ok(AugmentationPath {
            nodes: self.nodes[..=k].to_vec(),
            strengths: self.strengths[..=k].to_vec(),
            length: segment_lengths.iter().sum(),
            segment_lengths,
        })
    }
}

/// Generates `num_paths` paths of `max_strength` steps each: path p visits
/// svd_augment(x, k, p) for k = 0..=max_strength. Node 0 is the base
/// sample itself; randomness across the family comes only from the
/// deterministic path offset.
pub fn generate_paths(
    x: &Tensor,
    num_paths: usize,
    max_strength: usize,
) -> Result<Vec<AugmentationPath>> {
    if num_paths == 0 {
        return Err(Error::InvalidArgument("need at least one path".into()));
    }
    if max_strength == 0 {
        return Err(Error::InvalidArgument(
            "paths need at least one segment (max strength >= 1)".into(),
        ));
    }
    let svd = ImageSvd::compute(x)?;
    if max_strength + num_paths > svd.side {
        return Err(Error::InvalidArgument(format!(
            "max strength {max_strength} + paths {num_paths} exceeds spatial dim {}",
            svd.side
        )));
    }
    let mut paths = Vec::with_capacity(num_paths);
    for p in 0..num_paths {
        let mut nodes = Vec::with_capacity(max_strength + 1);
        for k in 0..=max_strength {
            nodes.push(svd.erase(
                x,
                &SvdAugmentSpec {
                    strength: k,
                    path_index: p,
                },
            )?);
        }
        paths.push(AugmentationPath::from_nodes(
            nodes,
            (0..=max_strength).collect(),
        )?);
    }
    Ok(paths)
}

/// Frobenius distance identity oracle: distance implied by the erased
/// singular values alone.
pub fn erased_distance(x: &Tensor, spec: &SvdAugmentSpec) -> Result<f64> {
    let svd = ImageSvd::compute(x)?;
    if spec.strength + spec.path_index > svd.side {
        return Err(Error::InvalidArgument(format!(
            "strength {} + path index {} exceeds spatial dim {}",
            spec.strength, spec.path_index, svd.side
        )));
    }
    Ok(svd.erased_magnitude(spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;

    fn diag_531() -> Tensor {
        Tensor::new(
            vec![1, 3, 3],
            vec![5.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn svd_truncation_on_diagonal_matrix() {
        let x = diag_531();
        let a = svd_augment(
            &x,
            &SvdAugmentSpec {
                strength: 1,
                path_index: 0,
            },
        )
        .unwrap();
        assert!((x.distance(&a).unwrap() - 1.0).abs() < 1e-9);
        // Reconstruction is diag(5,3,0).
        assert!((a.data()[8]).abs() < 1e-9);
        assert!((a.data()[0] - 5.0).abs() < 1e-9);

        let b = svd_augment(
            &x,
            &SvdAugmentSpec {
                strength: 2,
                path_index: 0,
            },
        )
        .unwrap();
        assert!((x.distance(&b).unwrap() - 10.0f64.sqrt()).abs() < 1e-9);

        // path offset 1 erases the second-smallest value, sigma = 3
        let c = svd_augment(
            &x,
            &SvdAugmentSpec {
                strength: 1,
                path_index: 1,
            },
        )
        .unwrap();
        assert!((x.distance(&c).unwrap() - 3.0).abs() < 1e-9);
        assert!((c.data()[4]).abs() < 1e-9);
        assert!((c.data()[8] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn strength_zero_is_bitwise_identity() {
        let x = generate_synthetic(1, 2, 3).unwrap().image(0).clone();
        let a = svd_augment(
            &x,
            &SvdAugmentSpec {
                strength: 0,
                path_index: 0,
            },
        )
        .unwrap();
        assert_eq!(a, x);
    }

    #[test]
    fn svd_rejects_non_square_and_overflow() {
        let x = Tensor::zeros(&[1, 2, 4]);
        assert!(svd_augment(
            &x,
            &SvdAugmentSpec {
                strength: 1,
                path_index: 0
            }
        )
        .is_err());
        let x = diag_531();
        assert!(svd_augment(
            &x,
            &SvdAugmentSpec {
                strength: 3,
                path_index: 1
            }
        )
        .is_err());
    }

    #[test]
    fn truncation_distance_identity_on_random_images() {
        let data = generate_synthetic(8, 2, 11).unwrap();
        for i in 0..data.len() {
            let x = data.image(i);
            for (k, p) in [(1usize, 0usize), (3, 0), (5, 2), (7, 3), (2, 30)] {
                let spec = SvdAugmentSpec {
                    strength: k,
                    path_index: p,
                };
                let aug = svd_augment(x, &spec).unwrap();
                let want = erased_distance(x, &spec).unwrap();
                assert!(
                    (x.distance(&aug).unwrap() - want).abs() < 1e-9,
                    "sample {i} k={k} p={p}"
                );
            }
        }
    }

    #[test]
    fn mean_distance_is_monotone_in_strength() {
        let data = generate_synthetic(16, 2, 5).unwrap();
        let mut last = 0.0;
        for k in 0..=8usize {
            let mut mean = 0.0;
            for i in 0..data.len() {
                let x = data.image(i);
                let aug = svd_augment(
                    x,
                    &SvdAugmentSpec {
                        strength: k,
                        path_index: 0,
                    },
                )
                .unwrap();
                mean += x.distance(&aug).unwrap();
            }
            mean /= data.len() as f64;
            assert!(mean >= last - 1e-12, "k={k}: {mean} < {last}");
            last = mean;
        }
    }

    #[test]
    fn identity_jitter_is_exact() {
        let x = generate_synthetic(1, 2, 3).unwrap().image(0).clone();
        let out = color_jitter(&x, &ColorJitterSpec::identity()).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn brightness_scales_pixels() {
        let x = Tensor::filled(&[3, 2, 2], 0.5);
        let mut spec = ColorJitterSpec::identity();
        spec.brightness = 1.1;
        let out = color_jitter(&x, &spec).unwrap();
        for &v in out.data() {
            assert!((v - 0.55).abs() < 1e-12);
        }
    }

    #[test]
    fn hue_shift_third_turns_red_into_green() {
        let mut data = vec![0.0; 3 * 1 * 1];
        data[0] = 1.0; // pure red pixel
        let x = Tensor::new(vec![3, 1, 1], data).unwrap();
        let mut spec = ColorJitterSpec::identity();
        // A third of the hue circle; bypass range validation through the
        // internal op to keep the oracle simple.
        spec.hue_shift = 1.0 / 3.0;
        let err = spec.validate();
        assert!(err.is_err(), "1/3 is outside the declared range");

        // Apply the rotation directly.
        let (h, s, v) = super::rgb_to_hsv(1.0, 0.0, 0.0);
        let (r, g, b) = super::hsv_to_rgb(h + 1.0 / 3.0, s, v);
        assert!((r - 0.0).abs() < 1e-12);
        assert!((g - 1.0).abs() < 1e-12);
        assert!((b - 0.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_factor_is_rejected() {
        let x = Tensor::filled(&[3, 2, 2], 0.5);
        let mut spec = ColorJitterSpec::identity();
        spec.contrast = 1.2;
        assert!(color_jitter(&x, &spec).is_err());
    }

    #[test]
    fn grayscale_image_ignores_saturation_and_hue() {
        // Uniform gray: saturation blending and hue rotation are identities,
        // so the displacement depends only on brightness/contrast.
        let x = Tensor::filled(&[3, 4, 4], 0.5);
        let mut spec = ColorJitterSpec::identity();
        spec.saturation = 1.1;
        spec.hue_shift = 0.05;
        let out = color_jitter(&x, &spec).unwrap();
        for (a, b) in out.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn tangent_directions_are_reproducible() {
        let x = generate_synthetic(1, 2, 3).unwrap().image(0).clone();
        let a = sample_tangent_directions(&x, 4, 0.1, 7).unwrap();
        let b = sample_tangent_directions(&x, 4, 0.1, 7).unwrap();
        assert_eq!(a.count(), 4);
        for (da, db) in a.directions().iter().zip(b.directions()) {
            assert_eq!(da, db);
        }
        let c = sample_tangent_directions(&x, 4, 0.1, 8).unwrap();
        assert_ne!(a.directions()[0], c.directions()[0]);
    }

    #[test]
    fn default_tangent_settings() {
        assert_eq!(DEFAULT_TANGENT_COUNT, 4);
        assert_eq!(DEFAULT_TANGENT_DELTA, 0.1);
    }

    #[test]
    fn paths_reject_degenerate_requests() {
        let x = diag_531();
        assert!(generate_paths(&x, 1, 0).is_err());
        assert!(generate_paths(&x, 0, 1).is_err());
        assert!(generate_paths(&x, 3, 1).is_err()); // K + P > w
    }

    #[test]
    fn single_path_on_diagonal_matrix() {
        let x = diag_531();
        let paths = generate_paths(&x, 1, 1).unwrap();
        assert_eq!(paths.len(), 1);
        let path = &paths[0];
        assert_eq!(path.nodes().len(), 2);
        assert_eq!(path.nodes()[0], x); // bitwise base
        assert!((path.length() - 1.0).abs() < 1e-9);
        assert_eq!(path.strengths(), &[0, 1]);
    }

    #[test]
    fn path_nodes_respect_truncation_bound() {
        let data = generate_synthetic(4, 2, 21).unwrap();
        let (num_paths, max_k) = (3usize, 5usize);
        for i in 0..data.len() {
            let x = data.image(i);
            // Bound: the union of erased index blocks lies in the smallest
            // K + P - 1 singular values.
            let bound = erased_distance(
                x,
                &SvdAugmentSpec {
                    strength: max_k + num_paths - 1,
                    path_index: 0,
                },
            )
            .unwrap();
            for path in generate_paths(x, num_paths, max_k).unwrap() {
                for node in path.nodes() {
                    assert!(x.distance(node).unwrap() <= bound + 1e-9);
                }
            }
        }
    }

    #[test]
    fn truncated_path_is_a_prefix() {
        let x = generate_synthetic(1, 2, 3).unwrap().image(0).clone();
        let path = generate_paths(&x, 1, 5).unwrap().remove(0);
        let t = path.truncated(2).unwrap();
        assert_eq!(t.nodes().len(), 3);
        assert_eq!(t.segment_lengths(), &path.segment_lengths()[..2]);
        assert!(path.truncated(0).is_err());
        assert!(path.truncated(6).is_err());
    }
}
