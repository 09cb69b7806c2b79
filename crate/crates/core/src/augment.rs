//! Transform collection, batch expansion and the self-labeled partition.
//!
//! Each original sample is expanded into `n` augmented copies that share one
//! artificial self-label; the first copy is always the identity so the clean
//! sample survives in every self-class. Image transforms clamp back into
//! `[0, 1]`; vector transforms (noise, coordinate-pair sign flips) leave the
//! value range of synthetic data alone.

use crate::error::{Error, Result};
use crate::ldr::Partition;
use crate::numerics::{Matrix, SeededRng};
use crate::Scalar;

/// Pixel layout of image vectors: `channels` planes of `height x width`,
/// row-major within a plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageGeometry {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl ImageGeometry {
    pub fn len(&self) -> usize {
        self.width * self.height * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, d_in: usize) -> Result<()> {
        if self.len() != d_in {
            return Err(Error::GeometryMismatch(format!(
                "{}x{}x{} = {} pixels but vectors have {} entries",
                self.width,
                self.height,
                self.channels,
                self.len(),
                d_in
            )));
        }
        Ok(())
    }
}

/// One member of the transform collection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransformKind {
    Identity,
    HorizontalFlip,
    /// Random shift of up to `max_px` pixels in each axis, zero-filled.
    Shift { max_px: u32 },
    /// Quarter-turn clockwise; square images only.
    Rotate90,
    /// Additive Gaussian noise with the given standard deviation.
    GaussianNoise { sigma: f64 },
    /// Uniform brightness offset drawn from `[-delta, delta]`.
    Brightness { delta: f64 },
    /// Negates one random adjacent coordinate pair; for non-image vectors.
    SignFlipPair,
    /// Gaussian jitter on the trailing `count` coordinates only; for vector
    /// data whose tail carries class-independent nuisance structure.
    TailJitter { count: usize, sigma: f64 },
}

impl TransformKind {
    pub fn name(&self) -> String {
        match self {
            TransformKind::Identity => "identity".into(),
            TransformKind::HorizontalFlip => "hflip".into(),
            TransformKind::Shift { max_px } => format!("shift{max_px}"),
            TransformKind::Rotate90 => "rot90".into(),
            TransformKind::GaussianNoise { sigma } => format!("noise{sigma}"),
            TransformKind::Brightness { delta } => format!("bright{delta}"),
            TransformKind::SignFlipPair => "signflip".into(),
            TransformKind::TailJitter { count, sigma } => format!("tailjitter{count}/{sigma}"),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::ConfigError(format!("unknown transform {s:?}"));
        if s == "identity" {
            Ok(TransformKind::Identity)
        } else if s == "hflip" {
            Ok(TransformKind::HorizontalFlip)
        } else if s == "rot90" {
            Ok(TransformKind::Rotate90)
        } else if s == "signflip" {
            Ok(TransformKind::SignFlipPair)
        } else if let Some(v) = s.strip_prefix("tailjitter") {
            let (count, sigma) = v.split_once('/').ok_or_else(bad)?;
            Ok(TransformKind::TailJitter {
                count: count.parse().map_err(|_| bad())?,
                sigma: sigma.parse().map_err(|_| bad())?,
            })
        } else if let Some(v) = s.strip_prefix("shift") {
            Ok(TransformKind::Shift { max_px: v.parse().map_err(|_| bad())? })
        } else if let Some(v) = s.strip_prefix("noise") {
            Ok(TransformKind::GaussianNoise { sigma: v.parse().map_err(|_| bad())? })
        } else if let Some(v) = s.strip_prefix("bright") {
            Ok(TransformKind::Brightness { delta: v.parse().map_err(|_| bad())? })
        } else {
            Err(bad())
        }
    }
}

/// The transform collection, its sampling seed and the number of augmented
/// copies per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentSpec {
    pub kinds: Vec<TransformKind>,
    /// Augmented copies per sample (the first is always the identity).
    pub n: usize,
    pub seed: u64,
    /// Geometry of image vectors; `None` for plain vector data.
    pub geometry: Option<ImageGeometry>,
}

impl AugmentSpec {
    /// Default collection for image vectors.
    pub fn image_default(geometry: ImageGeometry, seed: u64) -> Self {
        AugmentSpec {
            kinds: vec![
                TransformKind::Identity,
                TransformKind::HorizontalFlip,
                TransformKind::Shift { max_px: 2 },
                TransformKind::GaussianNoise { sigma: 0.05 },
                TransformKind::Brightness { delta: 0.2 },
            ],
            n: 4,
            seed,
            geometry: Some(geometry),
        }
    }

    /// Default collection for synthetic vector datasets.
    pub fn vector_default(seed: u64) -> Self {
        AugmentSpec {
            kinds: vec![
                TransformKind::Identity,
                TransformKind::GaussianNoise { sigma: 0.3 },
                TransformKind::SignFlipPair,
            ],
            n: 4,
            seed,
            geometry: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(Error::ConfigError("transform collection is empty".into()));
        }
        if self.n < 1 {
            return Err(Error::ConfigError("n must be at least 1".into()));
        }
        Ok(())
    }

    fn sample_kind(&self, rng: &mut SeededRng) -> TransformKind {
        self.kinds[rng.next_index(self.kinds.len())]
    }
}

/// A batch expanded to `B * n` columns with the artificial self-labeled
/// partition: all copies of one original share one self-class.
#[derive(Debug, Clone)]
pub struct SelfLabeledBatch<F = f64> {
    pub xa: Matrix<F>,
    /// Source sample index of each expanded column.
    pub origin: Vec<usize>,
    pub part: Partition,
}

fn shift_image<F: Scalar>(x: &[F], geom: &ImageGeometry, dx: i32, dy: i32) -> Vec<F> {
    let (w, h) = (geom.width as i32, geom.height as i32);
    let mut out = vec![F::zero(); x.len()];
    for ch in 0..geom.channels {
        let plane = ch * (geom.width * geom.height);
        for y in 0..h {
            for xx in 0..w {
                let sx = xx - dx;
                let sy = y - dy;
                if sx >= 0 && sx < w && sy >= 0 && sy < h {
                    out[plane + (y * w + xx) as usize] = x[plane + (sy * w + sx) as usize];
                }
            }
        }
    }
    out
}

fn hflip_image<F: Scalar>(x: &[F], geom: &ImageGeometry) -> Vec<F> {
    let (w, h) = (geom.width, geom.height);
    let mut out = x.to_vec();
    for ch in 0..geom.channels {
        let plane = ch * w * h;
        for y in 0..h {
            for xx in 0..w {
                out[plane + y * w + xx] = x[plane + y * w + (w - 1 - xx)];
            }
        }
    }
    out
}

fn rot90_image<F: Scalar>(x: &[F], geom: &ImageGeometry) -> Result<Vec<F>> {
    if geom.width != geom.height {
        return Err(Error::GeometryMismatch(
            "quarter-turn requires square images".into(),
        ));
    }
    let w = geom.width;
    let mut out = vec![F::zero(); x.len()];
    for ch in 0..geom.channels {
        let plane = ch * w * w;
        for y in 0..w {
            for xx in 0..w {
                // Clockwise: destination (y, x) reads source (w-1-x, y).
                out[plane + y * w + xx] = x[plane + (w - 1 - xx) * w + y];
            }
        }
    }
    Ok(out)
}

fn clamp_unit<F: Scalar>(v: &mut [F]) {
    for x in v {
        if *x < F::zero() {
            *x = F::zero();
        } else if *x > F::one() {
            *x = F::one();
        }
    }
}

/// Applies one transform to one sample vector.
///
/// Image transforms require the geometry and clamp the result to `[0, 1]`;
/// vector transforms work on any dimension and leave the range alone.
/// Deterministic given the RNG state.
pub fn apply_transform<F: Scalar>(
    x: &[F],
    kind: TransformKind,
    geometry: Option<&ImageGeometry>,
    rng: &mut SeededRng,
) -> Result<Vec<F>> {
    let need_geom = |kind: &str| -> Result<&ImageGeometry> {
        geometry.ok_or_else(|| {
            Error::GeometryMismatch(format!("{kind} requires image geometry"))
        })
    };
    let mut out = match kind {
        TransformKind::Identity => x.to_vec(),
        TransformKind::HorizontalFlip => {
            let geom = need_geom("hflip")?;
            geom.check(x.len())?;
            hflip_image(x, geom)
        }
        TransformKind::Shift { max_px } => {
            let geom = need_geom("shift")?;
            geom.check(x.len())?;
            let m = max_px as i32;
            let dx = rng.next_i32_range(-m, m);
            let dy = rng.next_i32_range(-m, m);
            shift_image(x, geom, dx, dy)
        }
        TransformKind::Rotate90 => {
            let geom = need_geom("rot90")?;
            geom.check(x.len())?;
            rot90_image(x, geom)?
        }
        TransformKind::GaussianNoise { sigma } => x
            .iter()
            .map(|&v| v + F::from_f64(sigma * rng.standard_normal()))
            .collect(),
        TransformKind::Brightness { delta } => {
            let geom = need_geom("brightness")?;
            geom.check(x.len())?;
            let off = F::from_f64(rng.next_f64_range(-delta, delta));
            x.iter().map(|&v| v + off).collect()
        }
        TransformKind::SignFlipPair => {
            if x.len() < 2 {
                return Err(Error::GeometryMismatch(
                    "sign flip needs at least two coordinates".into(),
                ));
            }
            let pair = rng.next_index(x.len() / 2);
            let mut v = x.to_vec();
            v[2 * pair] = -v[2 * pair];
            v[2 * pair + 1] = -v[2 * pair + 1];
            v
        }
        TransformKind::TailJitter { count, sigma } => {
            if count > x.len() {
                return Err(Error::GeometryMismatch(format!(
                    "tail jitter covers {count} coordinates but vectors have {}",
                    x.len()
                )));
            }
            let mut v = x.to_vec();
            let start = x.len() - count;
            for item in v.iter_mut().skip(start) {
                *item = *item + F::from_f64(sigma * rng.standard_normal());
            }
            v
        }
    };
    // Image vectors stay in [0, 1]; plain vectors keep their natural range.
    if geometry.is_some() {
        clamp_unit(&mut out);
    }
    Ok(out)
}

/// Expands a batch to `B * n` columns. Column `j*n + i` is the `i`-th
/// augmentation of sample `j`; augmentation 0 is the identity. The partition
/// assigns self-label `j` to all `n` copies of sample `j`.
///
/// Per-sample RNGs are derived from the base generator so the expansion of a
/// sample depends only on (spec, seed, sample index).
pub fn expand_batch<F: Scalar>(
    x: &Matrix<F>,
    spec: &AugmentSpec,
    rng: &SeededRng,
) -> Result<SelfLabeledBatch<F>> {
    spec.validate()?;
    let b = x.cols();
    let n = spec.n;
    let mut xa = Matrix::zeros(x.rows(), b * n);
    let mut origin = Vec::with_capacity(b * n);
    let mut labels = Vec::with_capacity(b * n);
    for j in 0..b {
        let col = x.col(j);
        let mut sample_rng = rng.derive(j as u64 + 1);
        for i in 0..n {
            let out = if i == 0 {
                col.clone()
            } else {
                let kind = spec.sample_kind(&mut sample_rng);
                apply_transform(&col, kind, spec.geometry.as_ref(), &mut sample_rng)?
            };
            xa.set_col(j * n + i, &out);
            origin.push(j);
            labels.push(j);
        }
    }
    let part = Partition::new(labels, b)?;
    Ok(SelfLabeledBatch { xa, origin, part })
}

/// One random transform per sample; the robustness-evaluation counterpart of
/// [`expand_batch`].
pub fn distort_eval_set<F: Scalar>(
    x: &Matrix<F>,
    spec: &AugmentSpec,
    rng: &SeededRng,
) -> Result<Matrix<F>> {
    spec.validate()?;
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for j in 0..x.cols() {
        let mut sample_rng = rng.derive(j as u64 + 1);
        let kind = spec.sample_kind(&mut sample_rng);
        let v = apply_transform(&x.col(j), kind, spec.geometry.as_ref(), &mut sample_rng)?;
        out.set_col(j, &v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom8() -> ImageGeometry {
        ImageGeometry { width: 8, height: 8, channels: 1 }
    }

    fn seeded_image(seed: u64) -> Vec<f64> {
        let mut rng = SeededRng::new(seed);
        (0..64).map(|_| rng.next_f64()).collect()
    }

    #[test]
    fn identity_is_identity() {
        let x = seeded_image(1);
        let mut rng = SeededRng::new(2);
        let y = apply_transform(&x, TransformKind::Identity, Some(&geom8()), &mut rng).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn horizontal_flip_is_involution() {
        let x = seeded_image(3);
        let mut rng = SeededRng::new(4);
        let y = apply_transform(&x, TransformKind::HorizontalFlip, Some(&geom8()), &mut rng).unwrap();
        let z = apply_transform(&y, TransformKind::HorizontalFlip, Some(&geom8()), &mut rng).unwrap();
        assert_eq!(x, z);
        assert_ne!(x, y);
    }

    #[test]
    fn shift_matches_pixel_index_oracle() {
        // +1 px shift right on a seeded 8x8 image: out[y][x] = in[y][x-1].
        let x = seeded_image(5);
        let geom = geom8();
        let shifted = shift_image(&x, &geom, 1, 0);
        for y in 0..8usize {
            for xx in 0..8usize {
                let want = if xx == 0 { 0.0 } else { x[y * 8 + xx - 1] };
                assert_eq!(shifted[y * 8 + xx], want, "pixel ({y},{xx})");
            }
        }
    }

    #[test]
    fn rot90_four_times_is_identity() {
        let x = seeded_image(6);
        let geom = geom8();
        let mut cur = x.clone();
        for _ in 0..4 {
            cur = rot90_image(&cur, &geom).unwrap();
        }
        assert_eq!(cur, x);
    }

    #[test]
    fn geometry_mismatch_detected() {
        let x = vec![0.5; 60];
        let mut rng = SeededRng::new(7);
        let res = apply_transform(&x, TransformKind::HorizontalFlip, Some(&geom8()), &mut rng);
        assert!(matches!(res, Err(Error::GeometryMismatch(_))));
    }

    #[test]
    fn expand_batch_counts_and_identity_column() {
        let mut rng = SeededRng::new(8);
        let x = Matrix::<f64>::random_gaussian(6, 3, &mut rng);
        let spec = AugmentSpec { n: 2, ..AugmentSpec::vector_default(11) };
        let batch = expand_batch(&x, &spec, &SeededRng::new(11)).unwrap();
        assert_eq!(batch.xa.cols(), 6);
        assert_eq!(batch.part.k(), 3);
        assert_eq!(batch.part.counts(), &[2, 2, 2]);
        for j in 0..3 {
            assert_eq!(batch.xa.col(j * 2), x.col(j), "identity copy of sample {j}");
            assert_eq!(batch.origin[j * 2], j);
            assert_eq!(batch.origin[j * 2 + 1], j);
        }
    }

    #[test]
    fn identity_only_spec_copies_originals() {
        let mut rng = SeededRng::new(9);
        let x = Matrix::<f64>::random_gaussian(4, 3, &mut rng);
        let spec = AugmentSpec {
            kinds: vec![TransformKind::Identity],
            n: 3,
            seed: 0,
            geometry: None,
        };
        let batch = expand_batch(&x, &spec, &SeededRng::new(0)).unwrap();
        for j in 0..3 {
            for i in 0..3 {
                assert_eq!(batch.xa.col(j * 3 + i), x.col(j));
            }
        }
    }

    #[test]
    fn partition_trace_sums_to_expanded_size() {
        let mut rng = SeededRng::new(10);
        let x = Matrix::<f64>::random_gaussian(5, 7, &mut rng);
        let spec = AugmentSpec { n: 4, ..AugmentSpec::vector_default(3) };
        let batch = expand_batch(&x, &spec, &SeededRng::new(3)).unwrap();
        let total: usize = batch.part.counts().iter().sum();
        assert_eq!(total, 7 * 4);
        assert!(batch.part.counts().iter().all(|&c| c == 4));
    }

    #[test]
    fn expand_batch_deterministic_given_seed() {
        let mut rng = SeededRng::new(11);
        let x = Matrix::<f64>::random_gaussian(6, 4, &mut rng);
        let spec = AugmentSpec::vector_default(5);
        let a = expand_batch(&x, &spec, &SeededRng::new(5)).unwrap();
        let b = expand_batch(&x, &spec, &SeededRng::new(5)).unwrap();
        assert_eq!(a.xa, b.xa);
        assert_eq!(a.part, b.part);
    }

    #[test]
    fn distort_identity_spec_is_noop() {
        let mut rng = SeededRng::new(12);
        let x = Matrix::<f64>::random_gaussian(6, 5, &mut rng);
        let spec = AugmentSpec {
            kinds: vec![TransformKind::Identity],
            n: 1,
            seed: 0,
            geometry: None,
        };
        let out = distort_eval_set(&x, &spec, &SeededRng::new(0)).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn distort_deterministic_and_bounded_for_images() {
        let mut base = Matrix::zeros(64, 10);
        let mut rng = SeededRng::new(13);
        for c in 0..10 {
            let img = seeded_image(100 + c as u64);
            base.set_col(c, &img);
        }
        let spec = AugmentSpec {
            kinds: vec![
                TransformKind::GaussianNoise { sigma: 0.5 },
                TransformKind::HorizontalFlip,
            ],
            n: 1,
            seed: 0,
            geometry: Some(geom8()),
        };
        let a = distort_eval_set(&base, &spec, &SeededRng::new(21)).unwrap();
        let b = distort_eval_set(&base, &spec, &SeededRng::new(21)).unwrap();
        assert_eq!(a, b);
        // Bound scan: heavy noise still clamps into [0, 1].
        let _ = &mut rng;
        for &v in a.data() {
            assert!((0.0..=1.0).contains(&v));
        }
    }
}
