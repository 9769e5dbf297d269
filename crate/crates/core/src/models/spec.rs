use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvSpec {
    pub channels: usize,
    pub kernel: usize,
    #[serde(default = "one")]
    pub stride: usize,
}

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ModelKind {
    Llr,
    Mlp,
    Cnn,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Llr => "LLR",
            ModelKind::Mlp => "MLP",
            ModelKind::Cnn => "CNN",
        })
    }
}

/// Architecture descriptor. Every model ends in a single logit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "UPPERCASE")]
pub enum ModelSpec {
    Llr {
        height: usize,
        width: usize,
    },
    Mlp {
        height: usize,
        width: usize,
        hidden: Vec<usize>,
        activation: Activation,
    },
    Cnn {
        height: usize,
        width: usize,
        conv: Vec<ConvSpec>,
        /// Max-pool window applied after each conv layer; 1 disables pooling.
        #[serde(default = "two")]
        pool: usize,
        /// Hidden dense widths between the flattened features and the logit.
        #[serde(default)]
        dense: Vec<usize>,
    },
}

impl ModelSpec {
    pub fn llr(height: usize, width: usize) -> Self {
        ModelSpec::Llr { height, width }
    }

    pub fn mlp(height: usize, width: usize) -> Self {
        ModelSpec::Mlp { height, width, hidden: vec![64], activation: Activation::Relu }
    }

    pub fn cnn(height: usize, width: usize) -> Self {
        ModelSpec::Cnn {
            height,
            width,
            conv: vec![ConvSpec { channels: 8, kernel: 3, stride: 1 }, ConvSpec { channels: 16, kernel: 3, stride: 1 }],
            pool: 2,
            dense: vec![32],
        }
    }

    pub fn default_for(kind: ModelKind, height: usize, width: usize) -> Self {
        match kind {
            ModelKind::Llr => Self::llr(height, width),
            ModelKind::Mlp => Self::mlp(height, width),
            ModelKind::Cnn => Self::cnn(height, width),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Llr { .. } => ModelKind::Llr,
            ModelSpec::Mlp { .. } => ModelKind::Mlp,
            ModelSpec::Cnn { .. } => ModelKind::Cnn,
        }
    }

    pub fn input_dims(&self) -> (usize, usize) {
        match *self {
            ModelSpec::Llr { height, width } | ModelSpec::Mlp { height, width, .. } | ModelSpec::Cnn { height, width, .. } => {
                (height, width)
            }
        }
    }

    /// Layer sequence and the named parameter tensors it reads.
    pub fn compile(&self) -> Result<(Vec<Layer>, Vec<ParamShape>)> {
        let (h, w) = self.input_dims();
        if h == 0 || w == 0 {
            return Err(Error::Config("model input must be non-empty".into()));
        }
        let mut layers = Vec::new();
        let mut params = Vec::new();
        let dense = |layers: &mut Vec<Layer>, params: &mut Vec<ParamShape>, name: &str, inputs: usize, outputs: usize| {
            if outputs == 0 {
                return Err(Error::Config(format!("{name} has no units")));
            }
            let weight = params.len();
            params.push(ParamShape { name: format!("{name}.weight"), shape: vec![outputs, inputs] });
            params.push(ParamShape { name: format!("{name}.bias"), shape: vec![outputs] });
            layers.push(Layer::Dense { inputs, outputs, weight, bias: weight + 1 });
            Ok(outputs)
        };
        match self {
            ModelSpec::Llr { .. } => {
                dense(&mut layers, &mut params, "linear", h * w, 1)?;
            }
            ModelSpec::Mlp { hidden, .. } => {
                let mut width = h * w;
                for (k, &units) in hidden.iter().enumerate() {
                    width = dense(&mut layers, &mut params, &format!("dense{k}"), width, units)?;
                    layers.push(Layer::Relu);
                }
                dense(&mut layers, &mut params, &format!("dense{}", hidden.len()), width, 1)?;
            }
            ModelSpec::Cnn { conv, pool, dense: head, .. } => {
                let (mut c, mut hh, mut ww) = (1, h, w);
                for (k, spec) in conv.iter().enumerate() {
                    if spec.channels == 0 || spec.kernel == 0 || spec.stride == 0 {
                        return Err(Error::Config(format!("conv{k} has a zero-sized field")));
                    }
                    let weight = params.len();
                    params.push(ParamShape {
                        name: format!("conv{k}.weight"),
                        shape: vec![spec.channels, c, spec.kernel, spec.kernel],
                    });
                    params.push(ParamShape { name: format!("conv{k}.bias"), shape: vec![spec.channels] });
                    let layer = Conv { in_ch: c, out_ch: spec.channels, height: hh, width: ww, kernel: spec.kernel, stride: spec.stride };
                    (c, hh, ww) = (spec.channels, layer.out_height(), layer.out_width());
                    layers.push(Layer::Conv { conv: layer, weight, bias: weight + 1 });
                    layers.push(Layer::Relu);
                    if *pool > 1 {
                        if hh < *pool || ww < *pool {
                            return Err(Error::Config(format!("{hh}x{ww} feature map is smaller than the pool window")));
                        }
                        layers.push(Layer::MaxPool { channels: c, height: hh, width: ww, size: *pool });
                        (hh, ww) = (hh / pool, ww / pool);
                    }
                }
                let mut width = c * hh * ww;
                for (k, &units) in head.iter().enumerate() {
                    width = dense(&mut layers, &mut params, &format!("dense{k}"), width, units)?;
                    layers.push(Layer::Relu);
                }
                dense(&mut layers, &mut params, &format!("dense{}", head.len()), width, 1)?;
            }
        }
        Ok((layers, params))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamShape {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ParamShape {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fan-in of a weight tensor (all dims after the first).
    pub fn fan_in(&self) -> usize {
        self.shape[1..].iter().product::<usize>().max(1)
    }
}

/// Same-padded cross-correlation on a `[in_ch, height, width]` volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv {
    pub in_ch: usize,
    pub out_ch: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv {
    pub fn pad(&self) -> usize {
        self.kernel / 2
    }

    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.pad() - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.pad() - self.kernel) / self.stride + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Dense { inputs: usize, outputs: usize, weight: usize, bias: usize },
    Conv { conv: Conv, weight: usize, bias: usize },
    Relu,
    MaxPool { channels: usize, height: usize, width: usize, size: usize },
}
