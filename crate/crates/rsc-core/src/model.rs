//! Two-block convolutional feature extractor plus a single linear top layer.
//!
//! The network is split exactly where the self-challenging step operates: the
//! extractor produces the representation `Z` (last feature tensor, NHWC), and
//! the top classifier maps flattened `Z` to logits. The top stays a single
//! linear layer so the fixed-feature theory checks apply to it exactly.

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, ValueId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};
use std::path::Path;

const KERNEL: usize = 3;
const CKPT_MAGIC: &[u8; 8] = b"RSCCKPT1";

/// Static description of the network: input geometry, block widths, pooling
/// factor (1 disables pooling) and class count.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Architecture {
    pub height: usize,
    pub width: usize,
    pub in_channels: usize,
    pub conv1_channels: usize,
    pub conv2_channels: usize,
    pub pool: usize,
    pub classes: usize,
}

impl Architecture {
    /// Shape of one sample's representation `Z`.
    pub fn z_shape(&self) -> [usize; 3] {
        [
            self.height / self.pool,
            self.width / self.pool,
            self.conv2_channels,
        ]
    }

    /// Flattened size of `Z`, the top layer's input width.
    pub fn flat_features(&self) -> usize {
        self.z_shape().iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.height >= 1
            && self.width >= 1
            && self.in_channels >= 1
            && self.conv1_channels >= 1
            && self.conv2_channels >= 1
            && self.classes >= 2
            && self.pool >= 1
            && self.height % self.pool == 0
            && self.width % self.pool == 0;
        if !ok {
            return Err(Error::InvalidConfig(format!("bad architecture {self:?}")));
        }
        Ok(())
    }
}

/// Names for the six parameter tensors, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamName {
    Conv1W,
    Conv1B,
    Conv2W,
    Conv2B,
    FcW,
    FcB,
}

impl ParamName {
    pub const ALL: [ParamName; 6] = [
        ParamName::Conv1W,
        ParamName::Conv1B,
        ParamName::Conv2W,
        ParamName::Conv2B,
        ParamName::FcW,
        ParamName::FcB,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ParamName::Conv1W => "conv1_w",
            ParamName::Conv1B => "conv1_b",
            ParamName::Conv2W => "conv2_w",
            ParamName::Conv2B => "conv2_b",
            ParamName::FcW => "fc_w",
            ParamName::FcB => "fc_b",
        }
    }
}

/// Gradient (or any per-parameter tensor bundle) aligned with [`ParamName`].
#[derive(Debug, Clone)]
pub struct ParamGrads(pub Vec<(ParamName, Tensor)>);

impl ParamGrads {
    /// Squared L2 norm over all contained gradients, in storage order.
    pub fn sq_norm(&self) -> f64 {
        self.0.iter().map(|(_, t)| t.sq_norm()).sum()
    }

    pub fn get(&self, name: ParamName) -> Option<&Tensor> {
        self.0.iter().find(|(n, _)| *n == name).map(|(_, t)| t)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|(_, t)| t.is_finite())
    }
}

/// The full parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub arch: Architecture,
    pub conv1_w: Tensor,
    pub conv1_b: Tensor,
    pub conv2_w: Tensor,
    pub conv2_b: Tensor,
    pub fc_w: Tensor,
    pub fc_b: Tensor,
}

fn glorot(rng: &mut ChaCha8Rng, shape: Vec<usize>, fan_in: usize, fan_out: usize) -> Tensor {
    let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-s..=s)).collect();
    Tensor::new(shape, data).expect("init shape")
}

impl NetworkParams {
    /// Seeded uniform initialization in [-s, s], s = sqrt(6/(fan_in+fan_out));
    /// biases start at zero.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k2 = KERNEL * KERNEL;
        let conv1_w = glorot(
            &mut rng,
            vec![KERNEL, KERNEL, arch.in_channels, arch.conv1_channels],
            k2 * arch.in_channels,
            k2 * arch.conv1_channels,
        );
        let conv2_w = glorot(
            &mut rng,
            vec![KERNEL, KERNEL, arch.conv1_channels, arch.conv2_channels],
            k2 * arch.conv1_channels,
            k2 * arch.conv2_channels,
        );
        let flat = arch.flat_features();
        let fc_w = glorot(&mut rng, vec![flat, arch.classes], flat, arch.classes);
        Ok(NetworkParams {
            arch,
            conv1_w,
            conv1_b: Tensor::zeros(vec![arch.conv1_channels]),
            conv2_w,
            conv2_b: Tensor::zeros(vec![arch.conv2_channels]),
            fc_w,
            fc_b: Tensor::zeros(vec![arch.classes]),
        })
    }

    pub fn param(&self, name: ParamName) -> &Tensor {
        match name {
            ParamName::Conv1W => &self.conv1_w,
            ParamName::Conv1B => &self.conv1_b,
            ParamName::Conv2W => &self.conv2_w,
            ParamName::Conv2B => &self.conv2_b,
            ParamName::FcW => &self.fc_w,
            ParamName::FcB => &self.fc_b,
        }
    }

    pub fn param_mut(&mut self, name: ParamName) -> &mut Tensor {
        match name {
            ParamName::Conv1W => &mut self.conv1_w,
            ParamName::Conv1B => &mut self.conv1_b,
            ParamName::Conv2W => &mut self.conv2_w,
            ParamName::Conv2B => &mut self.conv2_b,
            ParamName::FcW => &mut self.fc_w,
            ParamName::FcB => &mut self.fc_b,
        }
    }

    /// One SGD step: theta <- theta - lr * grad for every provided gradient.
    pub fn sgd_step(&mut self, grads: &ParamGrads, lr: f64) {
        for (name, g) in &grads.0 {
            let p = self.param_mut(*name);
            for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
                *pv -= lr * gv;
            }
        }
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        let s = batch.shape();
        let want = [self.arch.height, self.arch.width, self.arch.in_channels];
        if s.len() != 4 || s[1..] != want {
            return Err(Error::ShapeMismatch {
                op: "forward_features",
                lhs: s.to_vec(),
                rhs: vec![0, want[0], want[1], want[2]],
            });
        }
        Ok(())
    }

    /// Record the feature extractor on a fresh tape: batch [B,H,W,Cin] -> Z.
    pub fn features_graph(&self, batch: &Tensor) -> Result<ModelGraph> {
        self.check_batch(batch)?;
        let b = batch.shape()[0];
        let mut tape = Tape::new();
        let input = tape.leaf(batch.clone());
        let c1w = tape.leaf(self.conv1_w.clone());
        let c1b = tape.leaf(self.conv1_b.clone());
        let c2w = tape.leaf(self.conv2_w.clone());
        let c2b = tape.leaf(self.conv2_b.clone());
        let fcw = tape.leaf(self.fc_w.clone());
        let fcb = tape.leaf(self.fc_b.clone());

        let a1 = tape.conv2d(input, c1w, c1b)?;
        let r1 = tape.relu(a1)?;
        let a2 = tape.conv2d(r1, c2w, c2b)?;
        let r2 = tape.relu(a2)?;
        let z = if self.arch.pool > 1 {
            let p = self.arch.pool;
            let [zh, zw, zc] = self.arch.z_shape();
            let split = tape.reshape(r2, vec![b, zh, p, zw, p, zc])?;
            tape.mean_axes(split, &[2, 4])?
        } else {
            r2
        };
        Ok(ModelGraph {
            tape,
            z,
            params: vec![
                (ParamName::Conv1W, c1w),
                (ParamName::Conv1B, c1b),
                (ParamName::Conv2W, c2w),
                (ParamName::Conv2B, c2b),
                (ParamName::FcW, fcw),
                (ParamName::FcB, fcb),
            ],
        })
    }

    /// Record only the top classifier over fixed features: z is a leaf.
    /// Accepts [B, H', W', C] or already-flat [B, F].
    pub fn top_graph(&self, z: &Tensor) -> Result<ModelGraph> {
        let flat = self.arch.flat_features();
        let s = z.shape();
        let per: usize = s[1..].iter().product();
        if s.is_empty() || per != flat {
            return Err(Error::ShapeMismatch {
                op: "forward_logits",
                lhs: s.to_vec(),
                rhs: vec![0, flat],
            });
        }
        let mut tape = Tape::new();
        let z_id = tape.leaf(z.clone());
        let fcw = tape.leaf(self.fc_w.clone());
        let fcb = tape.leaf(self.fc_b.clone());
        Ok(ModelGraph {
            tape,
            z: z_id,
            params: vec![(ParamName::FcW, fcw), (ParamName::FcB, fcb)],
        })
    }

    /// Convenience: representation values for a batch, without keeping the tape.
    pub fn forward_features(&self, batch: &Tensor) -> Result<Tensor> {
        let g = self.features_graph(batch)?;
        Ok(g.tape.value(g.z).clone())
    }

    /// Convenience: logits for fixed features, without keeping the tape.
    pub fn forward_logits(&self, z: &Tensor) -> Result<Tensor> {
        let mut g = self.top_graph(z)?;
        let logits = g.logits(g.z)?;
        Ok(g.tape.value(logits).clone())
    }

    /// Write the checkpoint: magic, then per tensor name length (u32 LE),
    /// name bytes, rank (u32), dims (u32 each), values (f64 LE).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(CKPT_MAGIC)?;
        let a = &self.arch;
        let arch_tensor = Tensor::new(
            vec![7],
            vec![
                a.height as f64,
                a.width as f64,
                a.in_channels as f64,
                a.conv1_channels as f64,
                a.conv2_channels as f64,
                a.pool as f64,
                a.classes as f64,
            ],
        )?;
        write_tensor(&mut file, "architecture", &arch_tensor)?;
        for name in ParamName::ALL {
            write_tensor(&mut file, name.as_str(), self.param(name))?;
        }
        file.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut file = std::fs::File::open(path)?;
        let mut magic = [0u8; 8];
        file.read_exact(&mut magic)?;
        if &magic != CKPT_MAGIC {
            return Err(Error::InvalidData(format!(
                "{} is not a checkpoint (bad magic)",
                path.display()
            )));
        }
        let mut tensors = Vec::new();
        while let Some(t) = read_tensor(&mut file)? {
            tensors.push(t);
        }
        let find = |name: &str| -> Result<Tensor> {
            tensors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| Error::InvalidData(format!("checkpoint missing tensor {name}")))
        };
        let meta = find("architecture")?;
        let m = meta.data();
        if m.len() != 7 {
            return Err(Error::InvalidData("bad architecture record".into()));
        }
        let arch = Architecture {
            height: m[0] as usize,
            width: m[1] as usize,
            in_channels: m[2] as usize,
            conv1_channels: m[3] as usize,
            conv2_channels: m[4] as usize,
            pool: m[5] as usize,
            classes: m[6] as usize,
        };
        arch.validate()?;
        Ok(NetworkParams {
            arch,
            conv1_w: find("conv1_w")?,
            conv1_b: find("conv1_b")?,
            conv2_w: find("conv2_w")?,
            conv2_b: find("conv2_b")?,
            fc_w: find("fc_w")?,
            fc_b: find("fc_b")?,
        })
    }

    pub fn is_finite(&self) -> bool {
        ParamName::ALL.iter().all(|n| self.param(*n).is_finite())
    }
}

fn write_tensor(w: &mut impl Write, name: &str, t: &Tensor) -> Result<()> {
    w.write_all(&(name.len() as u32).to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
    for d in t.shape() {
        w.write_all(&(*d as u32).to_le_bytes())?;
    }
    for v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_tensor(r: &mut impl Read) -> Result<Option<(String, Tensor)>> {
    let mut len4 = [0u8; 4];
    match r.read_exact(&mut len4) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let name_len = u32::from_le_bytes(len4) as usize;
    let mut name = vec![0u8; name_len];
    r.read_exact(&mut name)?;
    let name = String::from_utf8(name).map_err(|_| Error::InvalidData("bad tensor name".into()))?;
    r.read_exact(&mut len4)?;
    let rank = u32::from_le_bytes(len4) as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        r.read_exact(&mut len4)?;
        shape.push(u32::from_le_bytes(len4) as usize);
    }
    let numel: usize = shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    let mut v8 = [0u8; 8];
    for _ in 0..numel {
        r.read_exact(&mut v8)?;
        data.push(f64::from_le_bytes(v8));
    }
    Ok(Some((name, Tensor::new(shape, data)?)))
}

/// A recorded forward pass: the tape plus references to `Z` and the bound
/// parameter leaves. Further ops (logits over clean or masked features,
/// losses) are appended to the same tape.
pub struct ModelGraph {
    pub tape: Tape,
    pub z: ValueId,
    params: Vec<(ParamName, ValueId)>,
}

impl ModelGraph {
    fn param_id(&self, name: ParamName) -> Option<ValueId> {
        self.params.iter().find(|(n, _)| *n == name).map(|(_, id)| *id)
    }

    /// Record the top classifier on any `Z`-shaped value: flatten then linear.
    pub fn logits(&mut self, z: ValueId) -> Result<ValueId> {
        let fcw = self.param_id(ParamName::FcW).expect("fc weights bound");
        let fcb = self.param_id(ParamName::FcB).expect("fc bias bound");
        let flat = self.tape.flatten(z)?;
        let a = self.tape.matmul(flat, fcw)?;
        self.tape.add_bias(a, fcb)
    }

    /// Record mean softmax cross-entropy of `logits` against one-hot labels.
    pub fn loss(&mut self, logits: ValueId, labels: &Tensor) -> Result<ValueId> {
        let y = self.tape.leaf(labels.clone());
        self.tape.softmax_cross_entropy(logits, y)
    }

    /// Register a constant (e.g. a mask) on the tape.
    pub fn constant(&mut self, t: Tensor) -> ValueId {
        self.tape.leaf(t)
    }

    /// Gradients of a scalar with respect to every bound parameter.
    pub fn param_grads(&self, output: ValueId) -> Result<ParamGrads> {
        let ids: Vec<ValueId> = self.params.iter().map(|(_, id)| *id).collect();
        let grads = self.tape.grad(output, &ids)?;
        Ok(ParamGrads(
            self.params.iter().map(|(n, _)| *n).zip(grads).collect(),
        ))
    }
}

/// Default image architecture: 16x16x3 in, 8 then 16 channels, 2x2 average
/// pooling, so Z is [8, 8, 16] — 64 spatial cells and 16 channels.
pub fn default_image_arch() -> Architecture {
    Architecture {
        height: 16,
        width: 16,
        in_channels: 3,
        conv1_channels: 8,
        conv2_channels: 16,
        pool: 2,
        classes: 2,
    }
}

/// Default tabular architecture: the d input dims are laid out along the
/// height axis so convolutions only mix neighbouring dims; no pooling.
/// Z is [d, 1, 16].
pub fn default_tabular_arch(dims: usize) -> Architecture {
    Architecture {
        height: dims,
        width: 1,
        in_channels: 1,
        conv1_channels: 8,
        conv2_channels: 16,
        pool: 1,
        classes: 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{finite_diff, max_relative_error};

    fn small_arch() -> Architecture {
        Architecture {
            height: 4,
            width: 4,
            in_channels: 2,
            conv1_channels: 3,
            conv2_channels: 4,
            pool: 2,
            classes: 2,
        }
    }

    fn rand_tensor(shape: Vec<usize>, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn rand_batch(arch: &Architecture, b: usize, seed: u64) -> Tensor {
        rand_tensor(vec![b, arch.height, arch.width, arch.in_channels], seed)
    }

    #[test]
    fn zero_input_zero_bias_gives_zero_z() {
        let params = NetworkParams::init(small_arch(), 0).unwrap();
        let batch = Tensor::zeros(vec![2, 4, 4, 2]);
        let z = params.forward_features(&batch).unwrap();
        assert!(z.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_sample_matches_batch_slice() {
        let params = NetworkParams::init(small_arch(), 1).unwrap();
        let batch = rand_batch(&params.arch, 4, 9);
        let z4 = params.forward_features(&batch).unwrap();
        let sample2 = Tensor::new(vec![1, 4, 4, 2], batch.sample(2).to_vec()).unwrap();
        let z1 = params.forward_features(&sample2).unwrap();
        assert_eq!(z1.data(), z4.sample(2));
    }

    #[test]
    fn forward_is_reproducible_bitwise() {
        let a = NetworkParams::init(small_arch(), 5).unwrap();
        let b = NetworkParams::init(small_arch(), 5).unwrap();
        assert_eq!(a, b);
        let batch = rand_batch(&a.arch, 3, 2);
        let za = a.forward_features(&batch).unwrap();
        let zb = b.forward_features(&batch).unwrap();
        assert_eq!(za.data(), zb.data());
    }

    #[test]
    fn zero_z_zero_bias_gives_zero_logits() {
        let params = NetworkParams::init(small_arch(), 0).unwrap();
        let z = Tensor::zeros(vec![2, 2, 2, 4]);
        let logits = params.forward_logits(&z).unwrap();
        assert!(logits.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_top_weights_pass_z_through() {
        let arch = Architecture {
            height: 1,
            width: 1,
            in_channels: 2,
            conv1_channels: 2,
            conv2_channels: 2,
            pool: 1,
            classes: 2,
        };
        let mut params = NetworkParams::init(arch, 0).unwrap();
        params.fc_w = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let z = Tensor::new(vec![1, 1, 1, 2], vec![3.0, 5.0]).unwrap();
        let logits = params.forward_logits(&z).unwrap();
        assert_eq!(logits.data(), &[3.0, 5.0]);
    }

    #[test]
    fn all_ones_mask_is_identity_on_logits() {
        let params = NetworkParams::init(small_arch(), 2).unwrap();
        let batch = rand_batch(&params.arch, 2, 3);
        let mut g = params.features_graph(&batch).unwrap();
        let plain = g.logits(g.z).unwrap();
        let ones = g.constant(Tensor::ones(g.tape.shape(g.z).to_vec()));
        let z = g.z;
        let masked = g.tape.mul(z, ones).unwrap();
        let masked_logits = g.logits(masked).unwrap();
        assert_eq!(g.tape.value(plain).data(), g.tape.value(masked_logits).data());
    }

    #[test]
    fn logits_shift_invariance_of_loss() {
        let params = NetworkParams::init(small_arch(), 4).unwrap();
        let z = rand_tensor(vec![3, 2, 2, 4], 7);
        let logits = params.forward_logits(&z).unwrap();
        let labels = Tensor::new(vec![3, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        let loss = |l: &Tensor| {
            let ls = crate::tensor::per_sample_cross_entropy(l, &labels).unwrap();
            ls.iter().sum::<f64>() / ls.len() as f64
        };
        let base = loss(&logits);
        let mut shifted = logits.clone();
        for row in shifted.data_mut().chunks_mut(2) {
            for v in row.iter_mut() {
                *v += 123.456;
            }
        }
        assert!((loss(&shifted) - base).abs() <= 1e-9);
    }

    #[test]
    fn top_layer_is_positively_homogeneous_without_bias() {
        let params = NetworkParams::init(small_arch(), 6).unwrap(); // biases zero from init
        let z = rand_tensor(vec![2, 2, 2, 4], 8);
        let base = params.forward_logits(&z).unwrap();
        let mut z2 = z.clone();
        for v in z2.data_mut() {
            *v *= 2.0; // power of two scaling is exact in floating point
        }
        let doubled = params.forward_logits(&z2).unwrap();
        for (a, b) in base.data().iter().zip(doubled.data()) {
            assert_eq!(2.0 * a, *b);
        }
        let mut z17 = z.clone();
        for v in z17.data_mut() {
            *v *= 1.7;
        }
        let scaled = params.forward_logits(&z17).unwrap();
        for (a, b) in base.data().iter().zip(scaled.data()) {
            assert!((1.7 * a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn random_loss_matches_direct_evaluation() {
        // cross-check the recorded loss against an independent longhand
        // evaluation of -log(softmax)
        let params = NetworkParams::init(small_arch(), 10).unwrap();
        let batch = rand_batch(&params.arch, 3, 11);
        let labels = Tensor::new(vec![3, 2], vec![0.0, 1.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let mut g = params.features_graph(&batch).unwrap();
        let logits = g.logits(g.z).unwrap();
        let loss_id = g.loss(logits, &labels).unwrap();
        let got = g.tape.value(loss_id).item().unwrap();

        let lg = g.tape.value(logits);
        let mut total = 0.0;
        for (row, y) in lg.data().chunks(2).zip(labels.data().chunks(2)) {
            let exp_sum: f64 = row.iter().map(|v| v.exp()).sum();
            let true_idx = if y[0] == 1.0 { 0 } else { 1 };
            total += -(row[true_idx].exp() / exp_sum).ln();
        }
        let want = total / 3.0;
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }

    #[test]
    fn full_network_gradient_matches_finite_differences() {
        let arch = small_arch();
        let params = NetworkParams::init(arch, 20).unwrap();
        let batch = rand_batch(&arch, 2, 21);
        let labels = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();

        let mut g = params.features_graph(&batch).unwrap();
        let logits = g.logits(g.z).unwrap();
        let loss = g.loss(logits, &labels).unwrap();
        let grads = g.param_grads(loss).unwrap();

        for name in ParamName::ALL {
            let f = |p: &Tensor| {
                let mut probe = params.clone();
                *probe.param_mut(name) = p.clone();
                let mut g = probe.features_graph(&batch)?;
                let logits = g.logits(g.z)?;
                let loss = g.loss(logits, &labels)?;
                g.tape.value(loss).item()
            };
            let numeric = finite_diff(f, params.param(name), 1e-5).unwrap();
            let analytic = grads.get(name).unwrap();
            let err = max_relative_error(analytic, &numeric);
            assert!(err <= 1e-5, "{name:?}: rel err {err}");
        }
    }

    #[test]
    fn checkpoint_roundtrip_is_bitwise() {
        let params = NetworkParams::init(small_arch(), 42).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        params.save(&path).unwrap();
        let loaded = NetworkParams::load(&path).unwrap();
        assert_eq!(params, loaded);

        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], b"RSCCKPT1");
        // first record is the architecture tensor: name length 12 then the name
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 12);
        assert_eq!(&bytes[12..24], b"architecture");
    }

    #[test]
    fn batch_shape_mismatch_is_descriptive() {
        let params = NetworkParams::init(small_arch(), 0).unwrap();
        let err = params
            .forward_features(&Tensor::zeros(vec![1, 5, 4, 2]))
            .unwrap_err();
        assert!(err.to_string().contains("forward_features"));
    }
}
