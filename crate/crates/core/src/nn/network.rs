use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use crate::error::{dim_err, Error, Result};
use crate::linalg::{serde_rows, serde_rows_opt, serde_vec, Matrix, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Feedforward,
    ElmanRnn,
}

impl std::str::FromStr for Arch {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "feedforward" | "ff" | "mlp" => Ok(Arch::Feedforward),
            "elman_rnn" | "rnn" | "elman" => Ok(Arch::ElmanRnn),
            other => Err(format!("unknown architecture '{other}'")),
        }
    }
}

/// Weights of layer `l`: `W_ff[l]` maps `d_l -> d_{l+1}`, `b[l]` is the bias of
/// layer `l+1`, and for Elman networks `W_rec` is the recurrent matrix of layer `l+1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    #[serde(rename = "W_ff", with = "serde_rows")]
    pub w_ff: Matrix,
    #[serde(with = "serde_vec")]
    pub b: Vector,
    #[serde(
        rename = "W_rec",
        with = "serde_rows_opt",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub w_rec: Option<Matrix>,
}

fn default_true() -> bool {
    true
}

/// Parameters of a feedforward or Elman recurrent policy network.
///
/// The same type doubles as a gradient container: anything that is
/// "NetworkParams-shaped" (gradients, interpolations, averages) uses it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub arch: Arch,
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
    /// Replace the activation with the identity at the output layer.
    #[serde(default = "default_true")]
    pub final_identity: bool,
    pub layers: Vec<Layer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl NetworkParams {
    /// All-zero parameters with the given shape.
    pub fn zeros(arch: Arch, layer_dims: &[usize], activation: Activation) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::Invalid(
                "a network needs at least input and output dimensions".into(),
            ));
        }
        let layers = layer_dims
            .windows(2)
            .map(|w| Layer {
                w_ff: Matrix::zeros(w[1], w[0]),
                b: Vector::zeros(w[1]),
                w_rec: (arch == Arch::ElmanRnn).then(|| Matrix::zeros(w[1], w[1])),
            })
            .collect();
        Ok(Self {
            arch,
            layer_dims: layer_dims.to_vec(),
            activation,
            final_identity: true,
            layers,
            seed: None,
        })
    }

    /// Random initialization: weights ~ U(-1/sqrt(d_in), 1/sqrt(d_in)), biases ~ U(-0.01, 0.01).
    ///
    /// Recurrent matrices use the fan-in of the recurrent input (`d_{l+1}`).
    /// Biases are kept away from exactly zero.
    pub fn init(
        arch: Arch,
        layer_dims: &[usize],
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Self::init_with_rng(arch, layer_dims, activation, &mut rng)?;
        net.seed = Some(seed);
        Ok(net)
    }

    pub fn init_with_rng<R: Rng + ?Sized>(
        arch: Arch,
        layer_dims: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(arch, layer_dims, activation)?;
        for layer in &mut net.layers {
            let fan_in = layer.w_ff.ncols().max(1) as f64;
            let s = 1.0 / fan_in.sqrt();
            layer.w_ff = layer.w_ff.map(|_| rng.random_range(-s..s));
            for v in layer.b.iter_mut() {
                let mut x = 0.0;
                while x == 0.0 {
                    x = rng.random_range(-0.01..0.01);
                }
                *v = x;
            }
            if let Some(w_rec) = layer.w_rec.as_mut() {
                let s = 1.0 / (w_rec.ncols().max(1) as f64).sqrt();
                *w_rec = w_rec.map(|_| rng.random_range(-s..s));
            }
        }
        Ok(net)
    }

    pub fn with_final_identity(mut self, final_identity: bool) -> Self {
        self.final_identity = final_identity;
        self
    }

    /// Number of weight layers `L`.
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated non-empty")
    }

    /// Activation used when producing `h^{l+1}` from layer `l`.
    pub fn layer_activation(&self, l: usize) -> Activation {
        if self.final_identity && l + 1 == self.layers.len() {
            Activation::Identity
        } else {
            self.activation
        }
    }

    pub fn is_recurrent(&self) -> bool {
        self.arch == Arch::ElmanRnn
    }

    /// Checks shape consistency and finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(Error::Invalid("layer_dims needs at least two entries".into()));
        }
        if self.layers.len() + 1 != self.layer_dims.len() {
            return Err(dim_err(
                "layer count",
                self.layer_dims.len() - 1,
                self.layers.len(),
            ));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let (d_in, d_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            if layer.w_ff.shape() != (d_out, d_in) {
                return Err(dim_err(
                    "W_ff",
                    format!("{d_out}x{d_in}"),
                    format!("{:?}", layer.w_ff.shape()),
                ));
            }
            if layer.b.len() != d_out {
                return Err(dim_err("b", d_out, layer.b.len()));
            }
            match (&layer.w_rec, self.arch) {
                (Some(w), Arch::ElmanRnn) => {
                    if w.shape() != (d_out, d_out) {
                        return Err(dim_err(
                            "W_rec",
                            format!("{d_out}x{d_out}"),
                            format!("{:?}", w.shape()),
                        ));
                    }
                }
                (None, Arch::ElmanRnn) => {
                    return Err(Error::Invalid(format!("layer {l} is missing W_rec")));
                }
                (Some(_), Arch::Feedforward) => {
                    return Err(Error::Invalid(format!(
                        "feedforward layer {l} carries a recurrent matrix"
                    )));
                }
                (None, Arch::Feedforward) => {}
            }
        }
        if !self.flat_iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("network weights".into()));
        }
        Ok(())
    }

    /// Same architecture, dimensions and activation configuration.
    pub fn same_shape(&self, other: &Self) -> bool {
        self.arch == other.arch && self.layer_dims == other.layer_dims
    }

    pub fn ensure_same_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ArchitectureMismatch(format!(
                "{:?} {:?} vs {:?} {:?}",
                self.arch, self.layer_dims, other.arch, other.layer_dims
            )))
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.map_inplace(|_| 0.0);
        z.seed = None;
        z
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w_ff.len() + l.b.len() + l.w_rec.as_ref().map_or(0, |w| w.len()))
            .sum()
    }

    /// Iterates over every scalar parameter in a fixed order (per layer: W_ff, b, W_rec).
    pub fn flat_iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| {
            l.w_ff
                .iter()
                .chain(l.b.iter())
                .chain(l.w_rec.iter().flat_map(|w| w.iter()))
                .copied()
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.flat_iter().collect()
    }

    /// Overwrites parameters from a flat vector in `flat_iter` order.
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(dim_err("flat parameters", self.num_params(), flat.len()));
        }
        let mut it = flat.iter();
        self.map_inplace(|_| *it.next().expect("length checked"));
        Ok(())
    }

    pub fn map_inplace(&mut self, mut f: impl FnMut(f64) -> f64) {
        for l in &mut self.layers {
            l.w_ff.iter_mut().for_each(|x| *x = f(*x));
            l.b.iter_mut().for_each(|x| *x = f(*x));
            if let Some(w) = l.w_rec.as_mut() {
                w.iter_mut().for_each(|x| *x = f(*x));
            }
        }
    }

    fn zip_inplace(&mut self, other: &Self, mut f: impl FnMut(f64, f64) -> f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w_ff.zip_apply(&b.w_ff, |x, y| *x = f(*x, y));
            a.b.zip_apply(&b.b, |x, y| *x = f(*x, y));
            if let (Some(x), Some(y)) = (a.w_rec.as_mut(), b.w_rec.as_ref()) {
                x.zip_apply(y, |x, y| *x = f(*x, y));
            }
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        self.zip_inplace(other, |x, y| x + alpha * y);
    }

    pub fn scale(&mut self, alpha: f64) {
        self.map_inplace(|x| alpha * x);
    }

    /// `(1 - lambda) * a + lambda * b`.
    pub fn lerp(a: &Self, b: &Self, lambda: f64) -> Result<Self> {
        a.ensure_same_shape(b)?;
        let mut out = a.clone();
        out.zip_inplace(b, |x, y| (1.0 - lambda) * x + lambda * y);
        Ok(out)
    }

    /// `wa * a + wb * b`, evaluated so that swapping the pairs gives identical bits.
    pub fn combine(a: &Self, wa: f64, b: &Self, wb: f64) -> Result<Self> {
        a.ensure_same_shape(b)?;
        let mut out = a.clone();
        out.zip_inplace(b, |x, y| wa * x + wb * y);
        Ok(out)
    }

    /// Sum of squared entries of all parameters.
    pub fn sq_norm(&self) -> f64 {
        self.flat_iter().map(|x| x * x).sum()
    }

    /// Euclidean inner product in parameter space.
    pub fn dot(&self, other: &Self) -> f64 {
        self.flat_iter().zip(other.flat_iter()).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.flat_iter()
            .zip(other.flat_iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let net: Self = serde_json::from_reader(f)?;
        net.validate()?;
        Ok(net)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let net: Self = serde_json::from_str(s)?;
        net.validate()?;
        Ok(net)
    }
}
