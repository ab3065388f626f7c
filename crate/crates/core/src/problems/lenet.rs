use std::str::FromStr;

use super::DataError;

/// One layer of a convolutional classifier, for parameter accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    /// `out` filters of size `kernel × kernel` over `in_channels`, one bias each.
    Conv {
        in_channels: usize,
        out: usize,
        kernel: usize,
    },
    /// Max pooling; no parameters.
    Pool { size: usize },
    /// Fully connected `inputs → outputs` with biases.
    Dense { inputs: usize, outputs: usize },
    /// Elementwise activation; no parameters.
    Relu,
}

impl Layer {
    pub fn param_count(&self) -> usize {
        match *self {
            Layer::Conv {
                in_channels,
                out,
                kernel,
            } => out * in_channels * kernel * kernel + out,
            Layer::Dense { inputs, outputs } => inputs * outputs + outputs,
            Layer::Pool { .. } | Layer::Relu => 0,
        }
    }
}

/// Parses `conv <in> <out> <k>`, `pool <k>`, `fc <in> <out>` or `relu`.
impl FromStr for Layer {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || DataError::UnknownLayer(s.to_string());
        let parts: Vec<&str> = s.split_whitespace().collect();
        let nums: Vec<usize> = parts
            .iter()
            .skip(1)
            .map(|p| p.parse().map_err(|_| unknown()))
            .collect::<Result<_, _>>()?;
        match (parts.first().copied(), nums.as_slice()) {
            (Some("conv"), &[in_channels, out, kernel]) => Ok(Layer::Conv {
                in_channels,
                out,
                kernel,
            }),
            (Some("pool"), &[size]) => Ok(Layer::Pool { size }),
            (Some("fc"), &[inputs, outputs]) => Ok(Layer::Dense { inputs, outputs }),
            (Some("relu"), &[]) => Ok(Layer::Relu),
            _ => Err(unknown()),
        }
    }
}

/// Total trainable weights and biases.
pub fn param_count(layers: &[Layer]) -> usize {
    layers.iter().map(Layer::param_count).sum()
}

/// LeNet-5 as used for 28×28 digits: two 5×5 convolutions (20 and 50
/// filters) each followed by 2×2 pooling, then 800 → 500 → 10.
pub fn lenet5() -> Vec<Layer> {
    vec![
        Layer::Conv {
            in_channels: 1,
            out: 20,
            kernel: 5,
        },
        Layer::Pool { size: 2 },
        Layer::Conv {
            in_channels: 20,
            out: 50,
            kernel: 5,
        },
        Layer::Pool { size: 2 },
        Layer::Dense {
            inputs: 800,
            outputs: 500,
        },
        Layer::Relu,
        Layer::Dense {
            inputs: 500,
            outputs: 10,
        },
    ]
}
