//! The width-parameterized ConvNet family plus a small MLP family used as
//! a cheap test vehicle, with deterministic initialization and a flat
//! binary checkpoint container.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Tensor, VarId};
use crate::error::{Error, Result};

/// Magic bytes of the checkpoint container.
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SLNS";
/// Container format version.
pub const CHECKPOINT_VERSION: u32 = 1;

/// Architecture description. ConvNet stage widths follow the progression
/// [k, 2k, 4k, 8k]; the MLP variant is plain fully-connected ReLU.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModelSpec {
    ConvNet {
        base_width: usize,
        input_shape: (usize, usize, usize),
        num_classes: usize,
    },
    Mlp {
        layer_widths: Vec<usize>,
    },
}

impl ModelSpec {
    pub fn convnet(
        base_width: usize,
        input_shape: (usize, usize, usize),
        num_classes: usize,
    ) -> Result<Self> {
        let (c, h, w) = input_shape;
        if base_width == 0 {
            return Err(Error::InvalidArgument("base width must be positive".into()));
        }
        if num_classes < 2 {
            return Err(Error::InvalidArgument(
                "a classifier needs at least 2 classes".into(),
            ));
        }
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidArgument(format!(
                "degenerate input shape {input_shape:?}"
            )));
        }
        // Four pooled stages plus the final pool halve the spatial dims
        // five times.
        if h % 32 != 0 || w % 32 != 0 {
            return Err(Error::InvalidArgument(format!(
                "convnet input spatial dims must be divisible by 32, got {h}x{w}"
            )));
        }
        Ok(ModelSpec::ConvNet {
            base_width,
            input_shape,
            num_classes,
        })
    }

    pub fn mlp(layer_widths: Vec<usize>) -> Result<Self> {
        if layer_widths.len() < 2 {
            return Err(Error::InvalidArgument(
                "mlp needs at least input and output widths".into(),
            ));
        }
        if layer_widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidArgument("zero layer width".into()));
        }
        Ok(ModelSpec::Mlp { layer_widths })
    }

    /// Per-stage channel counts of the convnet: [k, 2k, 4k, 8k].
    pub fn stage_widths(&self) -> Option<[usize; 4]> {
        match self {
            ModelSpec::ConvNet { base_width: k, .. } => Some([*k, 2 * k, 4 * k, 8 * k]),
            ModelSpec::Mlp { .. } => None,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            ModelSpec::ConvNet { num_classes, .. } => *num_classes,
            ModelSpec::Mlp { layer_widths } => *layer_widths.last().unwrap(),
        }
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        match self {
            ModelSpec::ConvNet { input_shape, .. } => *input_shape,
            ModelSpec::Mlp { layer_widths } => (layer_widths[0], 1, 1),
        }
    }

    /// Flattened input length of the final linear layer.
    fn head_in_features(&self) -> usize {
        match self {
            ModelSpec::ConvNet {
                base_width,
                input_shape: (_, h, w),
                ..
            } => 8 * base_width * (h / 32) * (w / 32),
            ModelSpec::Mlp { layer_widths } => layer_widths[layer_widths.len() - 2],
        }
    }
}

/// Closed-form number of learnable scalars for a spec.
pub fn param_count(spec: &ModelSpec) -> usize {
    match spec {
        ModelSpec::ConvNet {
            input_shape: (c, ..),
            num_classes,
            ..
        } => {
            let widths = spec.stage_widths().unwrap();
            let mut count = 0;
            let mut c_in = *c;
            for &c_out in &widths {
                count += c_out * c_in * 9 + c_out;
                c_in = c_out;
            }
            count + spec.head_in_features() * num_classes + num_classes
        }
        ModelSpec::Mlp { layer_widths } => layer_widths
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum(),
    }
}

/// The learnable parameter set: named tensors in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    spec: ModelSpec,
    tensors: Vec<(String, Tensor)>,
}

impl Params {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn tensors(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    /// Total number of scalars across all tensors.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|(_, t)| t.all_finite())
    }

    /// Writes the flat binary container; the byte stream is a pure
    /// function of the contents, so save/load round-trips bitwise.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let werr = |e| Error::io(path, e);

        w.write_all(CHECKPOINT_MAGIC).map_err(werr)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(werr)?;
        match &self.spec {
            ModelSpec::ConvNet {
                base_width,
                input_shape: (c, h, wd),
                num_classes,
            } => {
                w.write_all(&0u32.to_le_bytes()).map_err(werr)?;
                for v in [*base_width, *c, *h, *wd, *num_classes] {
                    w.write_all(&(v as u32).to_le_bytes()).map_err(werr)?;
                }
            }
            ModelSpec::Mlp { layer_widths } => {
                w.write_all(&1u32.to_le_bytes()).map_err(werr)?;
                w.write_all(&(layer_widths.len() as u32).to_le_bytes())
                    .map_err(werr)?;
                for &lw in layer_widths {
                    w.write_all(&(lw as u32).to_le_bytes()).map_err(werr)?;
                }
            }
        }
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())
            .map_err(werr)?;
        for (name, tensor) in &self.tensors {
            w.write_all(&(name.len() as u32).to_le_bytes()).map_err(werr)?;
            w.write_all(name.as_bytes()).map_err(werr)?;
            w.write_all(&(tensor.shape().len() as u32).to_le_bytes())
                .map_err(werr)?;
            for &e in tensor.shape() {
                w.write_all(&(e as u64).to_le_bytes()).map_err(werr)?;
            }
            for &v in tensor.data() {
                w.write_all(&v.to_le_bytes()).map_err(werr)?;
            }
        }
        w.flush().map_err(werr)
    }

    pub fn load(path: &Path) -> Result<Params> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let rerr = |e| Error::io(path, e);
        let fmt = |msg: &str| Error::CheckpointFormat(format!("{}: {msg}", path.display()));

        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(rerr)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(fmt("bad magic bytes"));
        }
        let version = read_u32(&mut r).map_err(rerr)?;
        if version != CHECKPOINT_VERSION {
            return Err(fmt(&format!("unsupported version {version}")));
        }
        let kind = read_u32(&mut r).map_err(rerr)?;
        let spec = match kind {
            0 => {
                let k = read_u32(&mut r).map_err(rerr)? as usize;
                let c = read_u32(&mut r).map_err(rerr)? as usize;
                let h = read_u32(&mut r).map_err(rerr)? as usize;
                let w = read_u32(&mut r).map_err(rerr)? as usize;
                let classes = read_u32(&mut r).map_err(rerr)? as usize;
                ModelSpec::convnet(k, (c, h, w), classes)?
            }
            1 => {
                let n = read_u32(&mut r).map_err(rerr)? as usize;
                let mut widths = Vec::with_capacity(n);
                for _ in 0..n {
                    widths.push(read_u32(&mut r).map_err(rerr)? as usize);
                }
                ModelSpec::mlp(widths)?
            }
            other => return Err(fmt(&format!("unknown model kind {other}"))),
        };

        let count = read_u32(&mut r).map_err(rerr)? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = read_u32(&mut r).map_err(rerr)? as usize;
            let mut name_bytes = vec![0u8; name_len];
            r.read_exact(&mut name_bytes).map_err(rerr)?;
            let name = String::from_utf8(name_bytes)
                .map_err(|_| fmt("tensor name is not valid UTF-8"))?;
            let rank = read_u32(&mut r).map_err(rerr)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let mut buf = [0u8; 8];
                r.read_exact(&mut buf).map_err(rerr)?;
                shape.push(u64::from_le_bytes(buf) as usize);
            }
            let numel: usize = shape.iter().product();
            let mut data = vec![0.0f64; numel];
            for v in data.iter_mut() {
                let mut buf = [0u8; 8];
                r.read_exact(&mut buf).map_err(rerr)?;
                *v = f64::from_le_bytes(buf);
            }
            tensors.push((name, Tensor::new(shape, data)?));
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing).map_err(rerr)? != 0 {
            return Err(fmt("trailing bytes after last tensor"));
        }

        let params = Params { spec, tensors };
        if params.scalar_count() != param_count(&params.spec) {
            return Err(fmt("tensor sizes do not match the architecture"));
        }
        if !params.all_finite() {
            return Err(Error::NonFinite {
                context: format!("checkpoint {}", path.display()),
            });
        }
        Ok(params)
    }
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

/// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) for both weights and biases,
/// drawn deterministically from the seed in declaration order.
fn init_uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let numel: usize = shape.iter().product();
    let data: Vec<f64> = (0..numel).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("init shape is valid")
}

/// Builds the four-stage ConvNet: conv3x3+relu+pool per stage, one extra
/// pool, then a linear head. No normalization layers anywhere.
pub fn build_convnet(spec: &ModelSpec, seed: u64) -> Result<Params> {
    let ModelSpec::ConvNet {
        input_shape: (c, ..),
        num_classes,
        ..
    } = spec
    else {
        return Err(Error::InvalidArgument(
            "build_convnet requires a convnet spec".into(),
        ));
    };
    let widths = spec.stage_widths().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tensors = Vec::new();
    let mut c_in = *c;
    for (i, &c_out) in widths.iter().enumerate() {
        let fan_in = c_in * 9;
        tensors.push((
            format!("stage{i}.kernel"),
            init_uniform(&mut rng, &[c_out, c_in, 3, 3], fan_in),
        ));
        tensors.push((
            format!("stage{i}.bias"),
            init_uniform(&mut rng, &[c_out], fan_in),
        ));
        c_in = c_out;
    }
    let head_in = spec.head_in_features();
    tensors.push((
        "head.weight".into(),
        init_uniform(&mut rng, &[*num_classes, head_in], head_in),
    ));
    tensors.push((
        "head.bias".into(),
        init_uniform(&mut rng, &[*num_classes], head_in),
    ));
    Ok(Params {
        spec: spec.clone(),
        tensors,
    })
}

/// Fully-connected ReLU network with the same initialization scheme.
pub fn build_mlp(layer_widths: &[usize], seed: u64) -> Result<Params> {
    let spec = ModelSpec::mlp(layer_widths.to_vec())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tensors = Vec::new();
    for (i, pair) in layer_widths.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        tensors.push((
            format!("layer{i}.weight"),
            init_uniform(&mut rng, &[fan_out, fan_in], fan_in),
        ));
        tensors.push((
            format!("layer{i}.bias"),
            init_uniform(&mut rng, &[fan_out], fan_in),
        ));
    }
    Ok(Params { spec, tensors })
}

/// Builds either family from its spec.
pub fn build(spec: &ModelSpec, seed: u64) -> Result<Params> {
    match spec {
        ModelSpec::ConvNet { .. } => build_convnet(spec, seed),
        ModelSpec::Mlp { layer_widths } => build_mlp(layer_widths, seed),
    }
}

/// Which leaves of a forward pass receive gradients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Watch {
    /// Input only: sharpness measurement.
    Input,
    /// Parameters only: training.
    Params,
    /// Both sets of leaves.
    Both,
}

impl Watch {
    fn input(self) -> bool {
        matches!(self, Watch::Input | Watch::Both)
    }
    fn params(self) -> bool {
        matches!(self, Watch::Params | Watch::Both)
    }
}

/// A recorded forward pass: the tape plus handles to the interesting nodes.
pub struct ForwardPass {
    pub tape: Tape,
    pub input: VarId,
    pub logits: VarId,
    /// Parameter leaves in `Params::tensors` order.
    pub param_vars: Vec<VarId>,
}

/// Runs the network on one input, recording the pass on a fresh tape.
pub fn forward(params: &Params, x: &Tensor, watch: Watch) -> Result<ForwardPass> {
    let expected = params.spec.input_shape();
    let matches_shape = match params.spec {
        ModelSpec::ConvNet { .. } => {
            x.shape() == [expected.0, expected.1, expected.2]
        }
        // The MLP consumes any shape with the right element count.
        ModelSpec::Mlp { .. } => x.len() == expected.0,
    };
    if !matches_shape {
        return Err(Error::ShapeMismatch(format!(
            "model expects input shape {expected:?}, got {:?}",
            x.shape()
        )));
    }

    let mut tape = Tape::new();
    let input = if watch.input() {
        tape.leaf(x.clone())?
    } else {
        tape.constant(x.clone())?
    };
    let mut param_vars = Vec::with_capacity(params.tensors.len());
    for (_, t) in &params.tensors {
        let id = if watch.params() {
            tape.leaf(t.clone())?
        } else {
            tape.constant(t.clone())?
        };
        param_vars.push(id);
    }

    let logits = match &params.spec {
        ModelSpec::ConvNet { .. } => {
            let mut h = input;
            for stage in 0..4 {
                let conv = tape.conv2d(h, param_vars[2 * stage], param_vars[2 * stage + 1])?;
                let act = tape.relu(conv)?;
                h = tape.maxpool2(act)?;
            }
            h = tape.maxpool2(h)?;
            tape.linear(h, param_vars[8], param_vars[9])?
        }
        ModelSpec::Mlp { layer_widths } => {
            let layers = layer_widths.len() - 1;
            let mut h = input;
            for layer in 0..layers {
                h = tape.linear(h, param_vars[2 * layer], param_vars[2 * layer + 1])?;
                if layer + 1 < layers {
                    h = tape.relu(h)?;
                }
            }
            h
        }
    };

    Ok(ForwardPass {
        tape,
        input,
        logits,
        param_vars,
    })
}
