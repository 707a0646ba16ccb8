//! Seeded synthetic cross-domain generators.
//!
//! Both benchmarks share one construction: a label-causal core signal whose
//! distribution never changes across domains, plus a spurious shortcut that
//! tracks the label with domain-dependent probability `rho` and is far easier
//! to learn. Sources use high `rho`; the target sets `rho = 0`, making the
//! shortcut worthless. Generators annotate which input regions are which so
//! feature-reliance probes can measure what a trained model actually uses.
//!
//! Randomness is split into independent streams (labels, core, spurious), so
//! regenerating a domain with a different `rho` but the same seed keeps the
//! labels and the core columns bitwise identical.

use crate::error::{Error, Result};
use crate::model::{default_image_arch, default_tabular_arch, Architecture};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::io::Write;
use std::path::Path;

/// Class-conditional mean of each core dimension (tabular).
pub const TABULAR_MU_CORE: f64 = 0.5;
/// Magnitude of the spurious dimensions (tabular). Much larger than the core
/// so gradient descent locks onto it first.
pub const TABULAR_MU_SPURIOUS: f64 = 3.0;
/// Default core/spurious dimension counts of the tabular benchmark.
pub const TABULAR_DIMS: (usize, usize) = (5, 5);
/// Default per-dimension noise of the tabular benchmark.
pub const TABULAR_NOISE: f64 = 0.2;

/// Additive intensity of the shape pixels (all three channels).
pub const SHAPE_INTENSITY: f64 = 0.4;
/// Additive intensity of the corner tint patch (one channel).
pub const PATCH_INTENSITY: f64 = 1.5;
/// Default pixel noise of the shape-color benchmark.
pub const SHAPE_NOISE: f64 = 0.3;
/// The tint patch occupies rows 0..4 x cols 0..4.
pub const PATCH_SIZE: usize = 4;

/// Per-domain generation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub id: String,
    /// Probability alignment of the spurious feature with the label, in [-1, 1];
    /// each spurious draw matches the label sign with probability (1+rho)/2.
    pub rho: f64,
    pub noise_std: f64,
    pub sample_count: usize,
    pub seed: u64,
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidConfig(format!("rho {} outside [-1, 1]", self.rho)));
        }
        if self.noise_std < 0.0 {
            return Err(Error::InvalidConfig(format!("noise_std {} < 0", self.noise_std)));
        }
        if self.sample_count == 0 {
            return Err(Error::InvalidConfig("sample_count must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainRole {
    Source,
    Target,
}

/// Which parts of the input carry the core signal vs the spurious shortcut.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureAnnotation {
    /// Dims are laid out along the input height axis.
    Tabular { core_dims: Vec<usize>, spurious_dims: Vec<usize> },
    /// The spurious patch is rows 0..patch x cols 0..patch, all channels;
    /// everything else is core.
    Image { patch: usize },
}

impl FeatureAnnotation {
    /// Copy of `inputs` with the spurious region zeroed (core-only view).
    pub fn zero_spurious(&self, inputs: &Tensor) -> Tensor {
        let mut out = inputs.clone();
        self.for_each_spurious(inputs.shape(), |idx| out.data_mut()[idx] = 0.0);
        out
    }

    /// Copy of `inputs` keeping only the spurious region (shortcut-only view).
    pub fn zero_core(&self, inputs: &Tensor) -> Tensor {
        let mut keep = vec![false; inputs.numel()];
        self.for_each_spurious(inputs.shape(), |idx| keep[idx] = true);
        let mut out = inputs.clone();
        for (v, k) in out.data_mut().iter_mut().zip(keep) {
            if !k {
                *v = 0.0;
            }
        }
        out
    }

    fn for_each_spurious(&self, shape: &[usize], mut f: impl FnMut(usize)) {
        let (n, h, w, c) = (shape[0], shape[1], shape[2], shape[3]);
        match self {
            FeatureAnnotation::Tabular { spurious_dims, .. } => {
                for i in 0..n {
                    for &d in spurious_dims {
                        for x in 0..w {
                            for ch in 0..c {
                                f(((i * h + d) * w + x) * c + ch);
                            }
                        }
                    }
                }
            }
            FeatureAnnotation::Image { patch } => {
                for i in 0..n {
                    for y in 0..*patch {
                        for x in 0..*patch {
                            for ch in 0..c {
                                f(((i * h + y) * w + x) * c + ch);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Labeled samples of one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub domain_id: String,
    pub role: DomainRole,
    /// [n, H, W, C]; tabular data uses H = dims, W = C = 1.
    pub inputs: Tensor,
    /// [n, K] one-hot.
    pub labels: Tensor,
    pub annotation: FeatureAnnotation,
}

impl DomainDataset {
    pub fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Class index of sample i.
    pub fn class_of(&self, i: usize) -> usize {
        let k = self.labels.shape()[1];
        self.labels.sample(i).iter().position(|v| *v == 1.0).unwrap_or(k)
    }
}

/// Derive an independent stream seed from a base seed (splitmix64 mixing).
pub fn mix_seed(base: u64, stream: u64) -> u64 {
    // splitmix64 over the combined value
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Balanced 0/1 labels (within one sample), order shuffled by the label stream.
fn balanced_labels(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let zeros = n / 2;
    let mut labels: Vec<usize> = (0..n).map(|i| usize::from(i >= zeros)).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        labels.swap(i, j);
    }
    labels
}

fn one_hot(classes: &[usize], k: usize) -> Tensor {
    let mut data = vec![0.0; classes.len() * k];
    for (i, &c) in classes.iter().enumerate() {
        data[i * k + c] = 1.0;
    }
    Tensor::new(vec![classes.len(), k], data).expect("one-hot shape")
}

/// Tabular domain: core dims are class-conditional Gaussians with identical
/// means across all domains; each spurious dim is +/- the spurious magnitude,
/// matching the label sign with probability (1+rho)/2; noise on every dim.
/// Dims are laid out along the height axis as [n, d_core+d_spurious, 1, 1].
pub fn generate_tabular_domain(
    spec: &DomainSpec,
    d_core: usize,
    d_spurious: usize,
) -> Result<DomainDataset> {
    spec.validate()?;
    if d_core < 1 || d_spurious < 1 {
        return Err(Error::InvalidConfig(format!(
            "need at least one core and one spurious dim, got ({d_core}, {d_spurious})"
        )));
    }
    let n = spec.sample_count;
    let d = d_core + d_spurious;
    let mut rng_labels = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, 1));
    let mut rng_core = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, 2));
    let mut rng_spur = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, 3));

    let classes = balanced_labels(n, &mut rng_labels);
    let mut data = vec![0.0; n * d];
    let p_align = (1.0 + spec.rho) / 2.0;
    for (i, &class) in classes.iter().enumerate() {
        let sy = if class == 1 { 1.0 } else { -1.0 };
        let row = &mut data[i * d..(i + 1) * d];
        for slot in row.iter_mut().take(d_core) {
            let noise: f64 = rng_core.sample(StandardNormal);
            *slot = sy * TABULAR_MU_CORE + noise * spec.noise_std;
        }
        for slot in row.iter_mut().skip(d_core) {
            let aligned = rng_spur.gen_bool(p_align);
            let sign = if aligned { sy } else { -sy };
            let noise: f64 = rng_spur.sample(StandardNormal);
            *slot = sign * TABULAR_MU_SPURIOUS + noise * spec.noise_std;
        }
    }
    Ok(DomainDataset {
        domain_id: spec.id.clone(),
        role: DomainRole::Source,
        inputs: Tensor::new(vec![n, d, 1, 1], data)?,
        labels: one_hot(&classes, 2),
        annotation: FeatureAnnotation::Tabular {
            core_dims: (0..d_core).collect(),
            spurious_dims: (d_core..d).collect(),
        },
    })
}

/// Draw one canvas: class 0 is a filled 6x6 square, class 1 a filled cross
/// (arm width 2, length 10), both centered at (9,9) plus the jitter offset
/// and written into all three channels; the tint patch adds intensity to one
/// channel of the corner. Pure function of its arguments.
pub fn render_shape_color(class: usize, dy: i64, dx: i64, tint_channel: usize) -> Tensor {
    let (h, w, c) = (16usize, 16usize, 3usize);
    let mut data = vec![0.0; h * w * c];
    let cy = (9 + dy) as usize;
    let cx = (9 + dx) as usize;
    let mut paint = |y: usize, x: usize| {
        for ch in 0..c {
            data[(y * w + x) * c + ch] += SHAPE_INTENSITY;
        }
    };
    if class == 0 {
        for y in cy - 3..cy + 3 {
            for x in cx - 3..cx + 3 {
                paint(y, x);
            }
        }
    } else {
        for y in cy - 5..cy + 5 {
            for x in cx - 1..cx + 1 {
                paint(y, x);
            }
        }
        for y in cy - 1..cy + 1 {
            for x in cx - 5..cx + 5 {
                if !(cx - 1..cx + 1).contains(&x) {
                    paint(y, x);
                }
            }
        }
    }
    for y in 0..PATCH_SIZE {
        for x in 0..PATCH_SIZE {
            data[(y * w + x) * c + tint_channel] += PATCH_INTENSITY;
        }
    }
    Tensor::new(vec![h, w, c], data).expect("canvas shape")
}

/// Image domain on a 16x16x3 canvas: jittered shape (core) plus a corner tint
/// patch whose channel tracks the label with probability (1+rho)/2 (spurious),
/// then pixel noise everywhere.
pub fn generate_shape_color_domain(spec: &DomainSpec) -> Result<DomainDataset> {
    spec.validate()?;
    let n = spec.sample_count;
    let (h, w, c) = (16usize, 16usize, 3usize);
    let mut rng_labels = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, 1));
    let mut rng_core = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, 2));
    let mut rng_spur = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, 3));

    let classes = balanced_labels(n, &mut rng_labels);
    let p_align = (1.0 + spec.rho) / 2.0;
    let mut data = vec![0.0; n * h * w * c];
    for (i, &class) in classes.iter().enumerate() {
        let dy = rng_core.gen_range(-2i64..=2);
        let dx = rng_core.gen_range(-2i64..=2);
        let aligned = rng_spur.gen_bool(p_align);
        let tint = if aligned { class } else { 1 - class };
        let canvas = render_shape_color(class, dy, dx, tint);
        let dst = &mut data[i * h * w * c..(i + 1) * h * w * c];
        dst.copy_from_slice(canvas.data());
        for v in dst.iter_mut() {
            let noise: f64 = rng_core.sample(StandardNormal);
            *v += noise * spec.noise_std;
        }
    }
    Ok(DomainDataset {
        domain_id: spec.id.clone(),
        role: DomainRole::Source,
        inputs: Tensor::new(vec![n, h, w, c], data)?,
        labels: one_hot(&classes, 2),
        annotation: FeatureAnnotation::Image { patch: PATCH_SIZE },
    })
}

/// Benchmark names accepted by [`make_benchmark`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchmarkName {
    TabularShift,
    ShapeColor,
}

impl std::str::FromStr for BenchmarkName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tabular-shift" => Ok(BenchmarkName::TabularShift),
            "shape-color" => Ok(BenchmarkName::ShapeColor),
            other => Err(Error::InvalidConfig(format!("unknown benchmark '{other}'"))),
        }
    }
}

impl std::fmt::Display for BenchmarkName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BenchmarkName::TabularShift => "tabular-shift",
            BenchmarkName::ShapeColor => "shape-color",
        })
    }
}

/// A training pool plus held-out domains. The pool is the concatenation of
/// all source domains in a seeded shuffle; domain ids never reach the trainer.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub name: BenchmarkName,
    pub arch: Architecture,
    pub sources: Vec<DomainDataset>,
    pub target: DomainDataset,
    pub pool_inputs: Tensor,
    pub pool_labels: Tensor,
}

/// Source alignment levels for the three training domains.
pub const SOURCE_RHOS: [f64; 3] = [0.90, 0.95, 0.99];
/// Samples per source domain.
pub const SOURCE_SAMPLES: usize = 2000;
/// Samples in the target domain.
pub const TARGET_SAMPLES: usize = 5000;

/// Build a benchmark from a master seed: three sources with rho in
/// {0.90, 0.95, 0.99}, one target with rho = 0, per-domain seeds derived
/// from the master.
pub fn make_benchmark(name: BenchmarkName, seed: u64) -> Result<Benchmark> {
    let noise = match name {
        BenchmarkName::TabularShift => TABULAR_NOISE,
        BenchmarkName::ShapeColor => SHAPE_NOISE,
    };
    let gen_domain = |spec: &DomainSpec| -> Result<DomainDataset> {
        match name {
            BenchmarkName::TabularShift => {
                generate_tabular_domain(spec, TABULAR_DIMS.0, TABULAR_DIMS.1)
            }
            BenchmarkName::ShapeColor => generate_shape_color_domain(spec),
        }
    };
    let mut sources = Vec::new();
    for (i, rho) in SOURCE_RHOS.iter().enumerate() {
        let spec = DomainSpec {
            id: format!("source{i}"),
            rho: *rho,
            noise_std: noise,
            sample_count: SOURCE_SAMPLES,
            seed: mix_seed(seed, 100 + i as u64),
        };
        sources.push(gen_domain(&spec)?);
    }
    let mut target = gen_domain(&DomainSpec {
        id: "target".into(),
        rho: 0.0,
        noise_std: noise,
        sample_count: TARGET_SAMPLES,
        seed: mix_seed(seed, 200),
    })?;
    target.role = DomainRole::Target;

    // concatenate sources and shuffle; the trainer never sees domain ids
    let total: usize = sources.iter().map(|s| s.len()).sum();
    let per_sample = sources[0].inputs.numel() / sources[0].len();
    let k = sources[0].labels.shape()[1];
    let mut perm: Vec<usize> = (0..total).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 300));
    for i in (1..total).rev() {
        let j = rng.gen_range(0..=i);
        perm.swap(i, j);
    }
    let flat_index = |global: usize| -> (usize, usize) {
        let mut g = global;
        for (d, src) in sources.iter().enumerate() {
            if g < src.len() {
                return (d, g);
            }
            g -= src.len();
        }
        unreachable!()
    };
    let mut pool_inputs = vec![0.0; total * per_sample];
    let mut pool_labels = vec![0.0; total * k];
    for (slot, &global) in perm.iter().enumerate() {
        let (d, i) = flat_index(global);
        pool_inputs[slot * per_sample..(slot + 1) * per_sample]
            .copy_from_slice(sources[d].inputs.sample(i));
        pool_labels[slot * k..(slot + 1) * k].copy_from_slice(sources[d].labels.sample(i));
    }
    let mut input_shape = sources[0].inputs.shape().to_vec();
    input_shape[0] = total;
    let arch = match name {
        BenchmarkName::TabularShift => default_tabular_arch(TABULAR_DIMS.0 + TABULAR_DIMS.1),
        BenchmarkName::ShapeColor => default_image_arch(),
    };
    Ok(Benchmark {
        name,
        arch,
        sources,
        target,
        pool_inputs: Tensor::new(input_shape, pool_inputs)?,
        pool_labels: Tensor::new(vec![total, k], pool_labels)?,
    })
}

/// Format a float with nine significant digits for file output.
pub fn fmt_g9(v: f64) -> String {
    format!("{v:.8e}")
}

/// Dump a tabular dataset as CSV: header `y,x0,...,xd`, one row per sample,
/// the label as a class index, features with nine significant digits.
pub fn write_tabular_csv(ds: &DomainDataset, path: &Path) -> Result<()> {
    let per = ds.inputs.numel() / ds.len();
    let mut out = String::new();
    out.push('y');
    for j in 0..per {
        out.push_str(&format!(",x{j}"));
    }
    out.push('\n');
    for i in 0..ds.len() {
        out.push_str(&ds.class_of(i).to_string());
        for v in ds.inputs.sample(i) {
            out.push(',');
            out.push_str(&fmt_g9(*v));
        }
        out.push('\n');
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    file.flush()?;
    Ok(())
}

/// Dump an image dataset: magic "RSCDATA1", u32 sample count, u32 dims
/// (H, W, C), f32 little-endian pixels, then u32 class count and the one-hot
/// labels as bytes.
pub fn write_image_data(ds: &DomainDataset, path: &Path) -> Result<()> {
    let shape = ds.inputs.shape();
    let (n, h, w, c) = (shape[0], shape[1], shape[2], shape[3]);
    let k = ds.labels.shape()[1];
    let mut file = std::fs::File::create(path)?;
    file.write_all(b"RSCDATA1")?;
    file.write_all(&(n as u32).to_le_bytes())?;
    for d in [h, w, c] {
        file.write_all(&(d as u32).to_le_bytes())?;
    }
    for v in ds.inputs.data() {
        file.write_all(&(*v as f32).to_le_bytes())?;
    }
    file.write_all(&(k as u32).to_le_bytes())?;
    for v in ds.labels.data() {
        file.write_all(&[*v as u8])?;
    }
    file.flush()?;
    Ok(())
}
