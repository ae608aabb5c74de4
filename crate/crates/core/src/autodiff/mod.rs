//! Reverse-mode automatic differentiation on a dense-tensor tape.
//!
//! Every differentiable computation in the crate (forward kinematics, graph
//! convolutions, losses) is recorded on a [`Tape`]. Nodes hold small dense
//! matrices; scalars are `1 x 1`. Matrix products are single nodes that keep
//! their operands, which is all the networks here need.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{check_gradient, check_gradient_with, GradCheckOptions, GradCheckReport};
pub use tape::{Checkpoint, OpKind, Tape, Var, LEAKY_SLOPE};
pub use tensor::Tensor;

/// Pointwise nonlinearity used by graph convolutions and the output bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    LeakyRelu,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Sigmoid,
        Activation::Tanh,
        Activation::Relu,
        Activation::LeakyRelu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::LeakyRelu => "leaky_relu",
        }
    }

    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Relu => tape.relu(x),
            Activation::LeakyRelu => tape.leaky_relu(x),
        }
    }
}

impl Default for Activation {
    fn default() -> Self {
        Activation::LeakyRelu
    }
}

impl std::str::FromStr for Activation {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        Activation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| crate::Error::Config(format!("unknown activation `{s}`")))
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
