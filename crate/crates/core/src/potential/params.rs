//! Model parameters: construction, the textual parameter file, and the
//! per-precision weight copies.
//!
//! All fitting-weight transposes are packed at load time and every evaluation
//! buffer is shaped by the dimensions fixed here, so nothing is allocated or
//! transposed per step.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::potential::mlp::{Dense, Mlp};
use crate::scalar::Real;
use crate::tsgemm::Matrix;

/// Arithmetic mode for the network evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecisionMode {
    /// Everything in f64.
    Double,
    /// Embedding, descriptor and fitting nets in f32; geometry stays f64.
    MixFp32,
    /// MixFp32 plus binary16 storage for the first fitting-layer products.
    MixFp16,
}

impl PrecisionMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "double" => Ok(PrecisionMode::Double),
            "mix-fp32" => Ok(PrecisionMode::MixFp32),
            "mix-fp16" => Ok(PrecisionMode::MixFp16),
            other => Err(Error::invalid_input(format!(
                "unknown precision mode '{other}' (double | mix-fp32 | mix-fp16)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PrecisionMode::Double => "double",
            PrecisionMode::MixFp32 => "mix-fp32",
            PrecisionMode::MixFp16 => "mix-fp16",
        }
    }
}

/// Network shape. The embedding net runs 1 -> w1 -> w2 -> m1, one net per
/// ordered (center type, neighbor type) pair; the fitting net runs
/// m1*m2 -> width^hidden -> 1, one net per center type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDims {
    pub ntypes: usize,
    pub embed_widths: [usize; 2],
    pub m1: usize,
    pub m2: usize,
    pub fitting_width: usize,
    pub fitting_hidden: usize,
    /// Final-layer bias: the atomic energy offset (eV).
    pub energy_offset: f64,
    /// Extra scale on the first fitting layer at init time. The descriptor
    /// is normalized by n_pad^2, so its entries are O(1e-3) at typical
    /// occupancies; this gain brings randomly initialized models to
    /// unit-scale energies and forces.
    pub fitting_input_gain: f64,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            ntypes: 1,
            embed_widths: [8, 16],
            m1: 16,
            m2: 4,
            fitting_width: 240,
            fitting_hidden: 3,
            energy_offset: -1.0,
            fitting_input_gain: 200.0,
        }
    }
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.ntypes == 0 {
            return Err(Error::model("ntypes must be >= 1"));
        }
        if self.m2 > self.m1 {
            return Err(Error::model(format!(
                "m2 ({}) must not exceed m1 ({})",
                self.m2, self.m1
            )));
        }
        if self.m1 == 0 || self.m2 == 0 || self.fitting_width == 0 || self.fitting_hidden == 0 {
            return Err(Error::model("network dimensions must be nonzero"));
        }
        if self.embed_widths.iter().any(|&w| w == 0) {
            return Err(Error::model("embedding widths must be nonzero"));
        }
        Ok(())
    }

    pub fn descriptor_len(&self) -> usize {
        self.m1 * self.m2
    }
}

/// Weights of every network at one working precision.
#[derive(Debug, Clone)]
pub struct TypedModel<T> {
    pub ntypes: usize,
    pub m1: usize,
    pub m2: usize,
    /// Indexed `center_type * ntypes + neighbor_type`.
    pub embedding: Vec<Mlp<T>>,
    /// Indexed by center type.
    pub fitting: Vec<Mlp<T>>,
}

impl<T: Real> TypedModel<T> {
    pub fn embedding_net(&self, center_type: usize, neighbor_type: usize) -> &Mlp<T> {
        &self.embedding[center_type * self.ntypes + neighbor_type]
    }

    pub fn fitting_net(&self, center_type: usize) -> &Mlp<T> {
        &self.fitting[center_type]
    }

    pub fn convert<U: Real>(&self) -> TypedModel<U> {
        let conv_mlp = |m: &Mlp<T>| {
            let layers = m
                .layers
                .iter()
                .map(|l| {
                    Dense::new(
                        l.w.map(|x| U::from_f64(x.into_f64())),
                        l.b.iter().map(|&x| U::from_f64(x.into_f64())).collect(),
                    )
                    .expect("shapes preserved")
                })
                .collect();
            Mlp::new(layers, m.linear_output)
        };
        TypedModel {
            ntypes: self.ntypes,
            m1: self.m1,
            m2: self.m2,
            embedding: self.embedding.iter().map(conv_mlp).collect(),
            fitting: self.fitting.iter().map(conv_mlp).collect(),
        }
    }
}

/// Full model: double-precision master weights, the single-precision copy
/// for the mixed modes, and the active mode.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub mode: PrecisionMode,
    pub master: TypedModel<f64>,
    pub single: TypedModel<f32>,
}

impl ModelParams {
    pub fn new(dims: ModelDims, master: TypedModel<f64>, mode: PrecisionMode) -> Result<Self> {
        dims.validate()?;
        validate_model(&dims, &master)?;
        let single = master.convert::<f32>();
        Ok(ModelParams {
            dims,
            mode,
            master,
            single,
        })
    }

    pub fn with_mode(&self, mode: PrecisionMode) -> Self {
        let mut p = self.clone();
        p.mode = mode;
        p
    }
}

fn validate_model(dims: &ModelDims, model: &TypedModel<f64>) -> Result<()> {
    if model.ntypes != dims.ntypes || model.m1 != dims.m1 || model.m2 != dims.m2 {
        return Err(Error::model("model header disagrees with tensor shapes"));
    }
    if model.embedding.len() != dims.ntypes * dims.ntypes {
        return Err(Error::model(format!(
            "expected {} embedding nets, got {}",
            dims.ntypes * dims.ntypes,
            model.embedding.len()
        )));
    }
    if model.fitting.len() != dims.ntypes {
        return Err(Error::model(format!(
            "expected {} fitting nets, got {}",
            dims.ntypes,
            model.fitting.len()
        )));
    }
    let embed_dims = [1, dims.embed_widths[0], dims.embed_widths[1], dims.m1];
    for net in &model.embedding {
        if net.layers.len() != 3 {
            return Err(Error::model("embedding nets must have 3 layers"));
        }
        for (li, layer) in net.layers.iter().enumerate() {
            if layer.in_dim() != embed_dims[li] || layer.out_dim() != embed_dims[li + 1] {
                return Err(Error::model(format!(
                    "embedding layer {li} is {}x{}, expected {}x{}",
                    layer.in_dim(),
                    layer.out_dim(),
                    embed_dims[li],
                    embed_dims[li + 1]
                )));
            }
        }
    }
    for net in &model.fitting {
        if net.layers.len() != dims.fitting_hidden + 1 {
            return Err(Error::model(format!(
                "fitting nets must have {} layers",
                dims.fitting_hidden + 1
            )));
        }
        let mut expect = dims.descriptor_len();
        for (li, layer) in net.layers.iter().enumerate() {
            let out = if li == dims.fitting_hidden { 1 } else { dims.fitting_width };
            if layer.in_dim() != expect || layer.out_dim() != out {
                return Err(Error::model(format!(
                    "fitting layer {li} is {}x{}, expected {}x{}",
                    layer.in_dim(),
                    layer.out_dim(),
                    expect,
                    out
                )));
            }
            expect = out;
        }
        if !net.linear_output {
            return Err(Error::model("fitting net must have a linear head"));
        }
    }
    Ok(())
}

fn xavier_layer(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bias: f64) -> Dense<f64> {
    let scale = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    let w = Matrix::from_vec(rows, cols, data).expect("sized");
    let b = (0..cols)
        .map(|_| bias + rng.random_range(-0.1..0.1))
        .collect();
    Dense::new(w, b).expect("bias sized")
}

/// Deterministically initialize a model from a seed. The same seed yields
/// bitwise-identical parameters.
pub fn init_params(seed: u64, dims: &ModelDims, mode: PrecisionMode) -> Result<ModelParams> {
    dims.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let embed_dims = [1, dims.embed_widths[0], dims.embed_widths[1], dims.m1];

    let mut embedding = Vec::with_capacity(dims.ntypes * dims.ntypes);
    for _ in 0..dims.ntypes * dims.ntypes {
        let layers = embed_dims
            .windows(2)
            .map(|w| xavier_layer(&mut rng, w[0], w[1], 0.0))
            .collect();
        embedding.push(Mlp::new(layers, false));
    }

    let mut fitting = Vec::with_capacity(dims.ntypes);
    for _ in 0..dims.ntypes {
        let mut layers = Vec::with_capacity(dims.fitting_hidden + 1);
        let mut in_dim = dims.descriptor_len();
        for li in 0..dims.fitting_hidden {
            let mut layer = xavier_layer(&mut rng, in_dim, dims.fitting_width, 0.0);
            if li == 0 {
                let gain = dims.fitting_input_gain;
                layer
                    .w
                    .as_mut_slice()
                    .iter_mut()
                    .for_each(|v| *v *= gain);
                layer.wt.as_mut_slice().iter_mut().for_each(|v| *v *= gain);
            }
            layers.push(layer);
            in_dim = dims.fitting_width;
        }
        let mut head = xavier_layer(&mut rng, in_dim, 1, 0.0);
        head.b[0] = dims.energy_offset;
        layers.push(head);
        fitting.push(Mlp::new(layers, true));
    }

    let master = TypedModel {
        ntypes: dims.ntypes,
        m1: dims.m1,
        m2: dims.m2,
        embedding,
        fitting,
    };
    ModelParams::new(dims.clone(), master, mode)
}

const MAGIC: &str = "dpparams 1";

/// Serialize to the textual parameter format: a magic line, then per-tensor
/// blocks of `name rows cols` followed by row-major decimal floats.
pub fn params_to_text(params: &ModelParams) -> String {
    let mut out = String::new();
    let d = &params.dims;
    out.push_str(MAGIC);
    out.push('\n');
    let mut tensor = |name: &str, rows: usize, cols: usize, data: &[f64]| {
        writeln!(out, "{name} {rows} {cols}").unwrap();
        for r in 0..rows {
            let row = &data[r * cols..(r + 1) * cols];
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{}", line.join(" ")).unwrap();
        }
    };
    tensor(
        "dims",
        1,
        7,
        &[
            d.ntypes as f64,
            d.embed_widths[0] as f64,
            d.embed_widths[1] as f64,
            d.m1 as f64,
            d.m2 as f64,
            d.fitting_width as f64,
            d.fitting_hidden as f64,
        ],
    );
    for ti in 0..d.ntypes {
        for tj in 0..d.ntypes {
            let net = params.master.embedding_net(ti, tj);
            for (li, layer) in net.layers.iter().enumerate() {
                tensor(
                    &format!("embedding.{ti}.{tj}.w{li}"),
                    layer.in_dim(),
                    layer.out_dim(),
                    layer.w.as_slice(),
                );
                tensor(&format!("embedding.{ti}.{tj}.b{li}"), 1, layer.out_dim(), &layer.b);
            }
        }
    }
    for ti in 0..d.ntypes {
        let net = params.master.fitting_net(ti);
        for (li, layer) in net.layers.iter().enumerate() {
            tensor(
                &format!("fitting.{ti}.w{li}"),
                layer.in_dim(),
                layer.out_dim(),
                layer.w.as_slice(),
            );
            tensor(&format!("fitting.{ti}.b{li}"), 1, layer.out_dim(), &layer.b);
        }
    }
    out
}

/// Parse the textual parameter format.
pub fn params_from_text(text: &str, mode: PrecisionMode) -> Result<ModelParams> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, message: "empty parameter file".into() })?;
    if first.trim() != MAGIC {
        return Err(Error::Parse {
            line: 1,
            message: format!("bad magic line, expected '{MAGIC}'"),
        });
    }

    let mut tensors: BTreeMap<String, (usize, usize, Vec<f64>)> = BTreeMap::new();
    while let Some((lno, header)) = lines.next() {
        let header = header.trim();
        if header.is_empty() {
            continue;
        }
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::Parse {
                line: lno + 1,
                message: format!("expected 'name rows cols', got '{header}'"),
            });
        }
        let name = parts[0].to_string();
        let rows: usize = parts[1].parse().map_err(|_| Error::Parse {
            line: lno + 1,
            message: format!("bad row count '{}'", parts[1]),
        })?;
        let cols: usize = parts[2].parse().map_err(|_| Error::Parse {
            line: lno + 1,
            message: format!("bad column count '{}'", parts[2]),
        })?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (rlno, row_line) = lines.next().ok_or_else(|| Error::Parse {
                line: lno + 1,
                message: format!("tensor '{name}' truncated"),
            })?;
            for tok in row_line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| Error::Parse {
                    line: rlno + 1,
                    message: format!("bad float '{tok}'"),
                })?;
                data.push(v);
            }
        }
        if data.len() != rows * cols {
            return Err(Error::Parse {
                line: lno + 1,
                message: format!(
                    "tensor '{name}' has {} values, expected {}",
                    data.len(),
                    rows * cols
                ),
            });
        }
        if tensors.insert(name.clone(), (rows, cols, data)).is_some() {
            return Err(Error::Parse {
                line: lno + 1,
                message: format!("duplicate tensor '{name}'"),
            });
        }
    }

    let take = |tensors: &mut BTreeMap<String, (usize, usize, Vec<f64>)>,
                name: &str|
     -> Result<(usize, usize, Vec<f64>)> {
        tensors
            .remove(name)
            .ok_or_else(|| Error::model(format!("missing tensor '{name}'")))
    };

    let (_, dcols, dvals) = take(&mut tensors, "dims")?;
    if dcols != 7 || dvals.len() != 7 {
        return Err(Error::model("dims tensor must be 1x7"));
    }
    let dims = ModelDims {
        ntypes: dvals[0] as usize,
        embed_widths: [dvals[1] as usize, dvals[2] as usize],
        m1: dvals[3] as usize,
        m2: dvals[4] as usize,
        fitting_width: dvals[5] as usize,
        fitting_hidden: dvals[6] as usize,
        energy_offset: 0.0,       // recovered from the head bias below
        fitting_input_gain: 1.0,  // init-time knob, already baked into weights
    };
    dims.validate()?;

    let mut load_net = |prefix: String, nlayers: usize, linear_output: bool| -> Result<Mlp<f64>> {
        let mut layers = Vec::with_capacity(nlayers);
        for li in 0..nlayers {
            let (wr, wc, wv) = take(&mut tensors, &format!("{prefix}.w{li}"))?;
            let (_, bc, bv) = take(&mut tensors, &format!("{prefix}.b{li}"))?;
            if bc != wc {
                return Err(Error::model(format!("{prefix}.b{li} length {bc} vs {wc} outputs")));
            }
            layers.push(Dense::new(Matrix::from_vec(wr, wc, wv)?, bv)?);
        }
        Ok(Mlp::new(layers, linear_output))
    };

    let mut embedding = Vec::new();
    for ti in 0..dims.ntypes {
        for tj in 0..dims.ntypes {
            embedding.push(load_net(format!("embedding.{ti}.{tj}"), 3, false)?);
        }
    }
    let mut fitting = Vec::new();
    for ti in 0..dims.ntypes {
        fitting.push(load_net(format!("fitting.{ti}"), dims.fitting_hidden + 1, true)?);
    }
    if let Some(name) = tensors.keys().next() {
        return Err(Error::model(format!("unexpected tensor '{name}'")));
    }

    let mut dims = dims;
    dims.energy_offset = fitting[0].layers.last().map_or(0.0, |l| l.b[0]);

    let master = TypedModel {
        ntypes: dims.ntypes,
        m1: dims.m1,
        m2: dims.m2,
        embedding,
        fitting,
    };
    ModelParams::new(dims, master, mode)
}

pub fn save_params(params: &ModelParams, path: &Path) -> Result<()> {
    std::fs::write(path, params_to_text(params))?;
    Ok(())
}

pub fn load_params(path: &Path, mode: PrecisionMode) -> Result<ModelParams> {
    let text = std::fs::read_to_string(path)?;
    params_from_text(&text, mode)
}
