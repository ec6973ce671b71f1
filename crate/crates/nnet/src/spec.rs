//! Architecture descriptions and parameter layouts.

use serde::{Deserialize, Serialize};

use crate::error::NetError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Mlp,
    Cnn,
    Rnn,
    Lstm,
}

impl Arch {
    pub const ALL: [Arch; 4] = [Arch::Mlp, Arch::Cnn, Arch::Rnn, Arch::Lstm];

    pub fn name(self) -> &'static str {
        match self {
            Arch::Mlp => "mlp",
            Arch::Cnn => "cnn",
            Arch::Rnn => "rnn",
            Arch::Lstm => "lstm",
        }
    }

    pub fn parse(s: &str) -> Option<Arch> {
        Self::ALL.into_iter().find(|a| a.name().eq_ignore_ascii_case(s))
    }

    /// Recurrent archs consume a per-step feature sequence, feed-forward
    /// ones a flattened vector.
    pub fn is_recurrent(self) -> bool {
        matches!(self, Arch::Rnn | Arch::Lstm)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Selu,
    Gelu,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Relu, Activation::Selu, Activation::Gelu];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Selu => "selu",
            Activation::Gelu => "gelu",
        }
    }

    pub fn parse(s: &str) -> Option<Activation> {
        Self::ALL.into_iter().find(|a| a.name().eq_ignore_ascii_case(s))
    }
}

/// Hyperparameters of one forecaster.
///
/// Input conventions:
/// * MLP/CNN take a flat vector of `n_psi * n_k_psi` values. The CNN reads it
///   as `n_psi` channels of length `n_k_psi` (channels-first).
/// * RNN/LSTM take `n_k_psi + n_k_xi` steps of `n_psi` features, step-major,
///   and emit one value for each of the last `n_k_xi` steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub arch: Arch,
    pub n_layer: usize,
    pub n_z: usize,
    pub activation: Activation,
    #[serde(default)]
    pub n_channel: usize,
    #[serde(default)]
    pub n_filter: usize,
    #[serde(default)]
    pub n_pool: usize,
    pub dropout: f64,
    pub n_psi: usize,
    pub n_k_psi: usize,
    pub n_k_xi: usize,
}

pub const DEFAULT_DROPOUT: f64 = 0.1;

pub const MLP_LAYERS: [usize; 3] = [1, 2, 4];
pub const MLP_WIDTHS: [usize; 4] = [10, 20, 50, 100];
pub const RECURRENT_LAYERS: [usize; 3] = [1, 2, 4];
pub const RECURRENT_WIDTHS: [usize; 4] = [10, 20, 40, 60];
pub const CNN_LAYERS: [usize; 2] = [1, 2];
pub const CNN_WIDTHS: [usize; 3] = [10, 50, 100];
pub const CNN_CHANNELS: [usize; 3] = [10, 50, 100];
pub const CNN_FILTERS: [usize; 2] = [6, 12];
pub const CNN_POOLS: [usize; 2] = [0, 4];

impl NetSpec {
    pub fn new(arch: Arch, n_layer: usize, n_z: usize, activation: Activation) -> Self {
        NetSpec {
            arch,
            n_layer,
            n_z,
            activation,
            n_channel: 0,
            n_filter: 0,
            n_pool: 0,
            dropout: DEFAULT_DROPOUT,
            n_psi: 1,
            n_k_psi: 1,
            n_k_xi: 1,
        }
    }

    pub fn with_io(mut self, n_psi: usize, n_k_psi: usize, n_k_xi: usize) -> Self {
        self.n_psi = n_psi;
        self.n_k_psi = n_k_psi;
        self.n_k_xi = n_k_xi;
        self
    }

    pub fn with_conv(mut self, n_channel: usize, n_filter: usize, n_pool: usize) -> Self {
        self.n_channel = n_channel;
        self.n_filter = n_filter;
        self.n_pool = n_pool;
        self
    }

    pub fn with_dropout(mut self, p: f64) -> Self {
        self.dropout = p;
        self
    }

    /// Number of recurrent steps (recurrent archs only).
    pub fn n_steps(&self) -> usize {
        self.n_k_psi + self.n_k_xi
    }

    pub fn input_len(&self) -> usize {
        if self.arch.is_recurrent() {
            self.n_psi * self.n_steps()
        } else {
            self.n_psi * self.n_k_psi
        }
    }

    pub fn output_len(&self) -> usize {
        self.n_k_xi
    }

    /// Sequence length after each convolution block.
    pub fn conv_lengths(&self) -> Vec<usize> {
        let mut len = self.n_k_psi;
        let mut out = Vec::with_capacity(self.n_layer);
        for _ in 0..self.n_layer {
            if len < self.n_filter {
                out.push(0);
                return out;
            }
            len = len - self.n_filter + 1;
            if self.n_pool > 0 {
                len /= self.n_pool;
            }
            out.push(len);
        }
        out
    }

    /// Structural validity (positive sizes, dropout range, CNN geometry).
    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: String| Err(NetError::Spec(m));
        if self.n_layer == 0 || self.n_z == 0 {
            return bad("n_layer and n_z must be positive".into());
        }
        if self.n_psi == 0 || self.n_k_psi == 0 || self.n_k_xi == 0 {
            return bad("input and output dimensions must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.arch == Arch::Cnn {
            if self.n_channel == 0 || self.n_filter == 0 {
                return bad("cnn needs n_channel and n_filter".into());
            }
            if self.conv_lengths().last().copied().unwrap_or(0) == 0 {
                return bad(format!(
                    "input length {} too short for {} conv blocks (filter {}, pool {})",
                    self.n_k_psi, self.n_layer, self.n_filter, self.n_pool
                ));
            }
        }
        Ok(())
    }

    /// True when every size hyperparameter is a design-matrix grid value.
    pub fn on_grid(&self) -> bool {
        match self.arch {
            Arch::Mlp => MLP_LAYERS.contains(&self.n_layer) && MLP_WIDTHS.contains(&self.n_z),
            Arch::Rnn | Arch::Lstm => RECURRENT_LAYERS.contains(&self.n_layer) && RECURRENT_WIDTHS.contains(&self.n_z),
            Arch::Cnn => {
                CNN_LAYERS.contains(&self.n_layer)
                    && CNN_WIDTHS.contains(&self.n_z)
                    && CNN_CHANNELS.contains(&self.n_channel)
                    && CNN_FILTERS.contains(&self.n_filter)
                    && CNN_POOLS.contains(&self.n_pool)
            }
        }
    }

    /// Short identifier, e.g. `lstm-l1-z20-relu`.
    pub fn label(&self) -> String {
        match self.arch {
            Arch::Cnn => format!(
                "cnn-l{}-z{}-c{}-f{}-p{}-{}",
                self.n_layer,
                self.n_z,
                self.n_channel,
                self.n_filter,
                self.n_pool,
                self.activation.name()
            ),
            a => format!("{}-l{}-z{}-{}", a.name(), self.n_layer, self.n_z, self.activation.name()),
        }
    }

    pub fn layout(&self) -> Layout {
        Layout::for_spec(self)
    }

    pub fn param_count(&self) -> usize {
        self.layout().len()
    }
}

/// Every design-matrix cell of `arch` for the given input/output geometry.
/// CNN cells whose geometry does not fit the input length are skipped.
pub fn design_grid(arch: Arch, n_psi: usize, n_k_psi: usize, n_k_xi: usize) -> Vec<NetSpec> {
    let mut out = Vec::new();
    let (layers, widths): (&[usize], &[usize]) = match arch {
        Arch::Mlp => (&MLP_LAYERS, &MLP_WIDTHS),
        Arch::Rnn | Arch::Lstm => (&RECURRENT_LAYERS, &RECURRENT_WIDTHS),
        Arch::Cnn => (&CNN_LAYERS, &CNN_WIDTHS),
    };
    for &l in layers {
        for &z in widths {
            for act in Activation::ALL {
                let base = NetSpec::new(arch, l, z, act).with_io(n_psi, n_k_psi, n_k_xi);
                if arch != Arch::Cnn {
                    out.push(base);
                    continue;
                }
                for &c in &CNN_CHANNELS {
                    for &f in &CNN_FILTERS {
                        for &p in &CNN_POOLS {
                            let s = base.clone().with_conv(c, f, p);
                            if s.validate().is_ok() {
                                out.push(s);
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// One named parameter tensor inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
    /// Fan-in used for the initialization range.
    pub fan_in: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Ordered parameter blocks. Forward and backward passes walk the blocks in
/// this order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub blocks: Vec<Block>,
}

impl Layout {
    fn push(&mut self, name: String, rows: usize, cols: usize, fan_in: usize) {
        let offset = self.len();
        self.blocks.push(Block {
            name,
            rows,
            cols,
            offset,
            fan_in,
        });
    }

    pub fn len(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.offset + b.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    fn push_head(&mut self, n_in: usize, n_z: usize, n_out: usize) {
        self.push("head.w_h".into(), n_z, n_in, n_in);
        self.push("head.b_h".into(), n_z, 1, n_in);
        self.push("head.w_xi".into(), n_out, n_z, n_z);
        self.push("head.b_xi".into(), n_out, 1, n_z);
    }

    pub fn for_spec(spec: &NetSpec) -> Layout {
        let mut l = Layout { blocks: Vec::new() };
        let z = spec.n_z;
        match spec.arch {
            Arch::Mlp => {
                let mut n_in = spec.input_len();
                for i in 0..spec.n_layer {
                    l.push(format!("dense{i}.w"), z, n_in, n_in);
                    l.push(format!("dense{i}.b"), z, 1, n_in);
                    n_in = z;
                }
                l.push("out.w_xi".into(), spec.n_k_xi, z, z);
                l.push("out.b_xi".into(), spec.n_k_xi, 1, z);
            }
            Arch::Cnn => {
                let mut c_in = spec.n_psi;
                for i in 0..spec.n_layer {
                    let fan = c_in * spec.n_filter;
                    l.push(format!("conv{i}.k"), spec.n_channel, fan, fan);
                    l.push(format!("conv{i}.b"), spec.n_channel, 1, fan);
                    c_in = spec.n_channel;
                }
                let flat = spec.n_channel * spec.conv_lengths().last().copied().unwrap_or(0);
                l.push_head(flat, z, spec.n_k_xi);
            }
            Arch::Rnn | Arch::Lstm => {
                let g = if spec.arch == Arch::Lstm { 4 } else { 1 };
                let mut n_in = spec.n_psi;
                for i in 0..spec.n_layer {
                    l.push(format!("cell{i}.w_ih"), g * z, n_in, z);
                    l.push(format!("cell{i}.w_hh"), g * z, z, z);
                    l.push(format!("cell{i}.b_ih"), g * z, 1, z);
                    l.push(format!("cell{i}.b_hh"), g * z, 1, z);
                    n_in = z;
                }
                l.push_head(z, z, 1);
            }
        }
        l
    }
}
