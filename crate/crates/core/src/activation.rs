//! Scalar activation functions used inside the residual blocks.
//!
//! Each activation exposes its value and derivatives up to fourth order.
//! Fourth order is only reached when the derivative of an activation is
//! itself differentiated to second order (directional network derivatives).

use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    /// `max(x, 0)^2`
    ReQu,
    /// `max(x, 0)^3`
    ReCu,
    /// `x / (1 + exp(-x))`
    Swish,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::ReQu => {
                let r = x.max(0.0);
                r * r
            }
            Activation::ReCu => {
                let r = x.max(0.0);
                r * r * r
            }
            Activation::Swish => x * sigmoid(x),
        }
    }

    /// `[f, f', f'', f''', f'''']` at `x`.
    ///
    /// The rectified activations switch branches at exactly zero; the zero
    /// branch is taken there, so ReQu'' and ReCu''' vanish at the origin.
    #[inline(always)]
    pub fn derivs(self, x: f64) -> [f64; 5] {
        match self {
            Activation::ReQu => {
                if x > 0.0 {
                    [x * x, 2.0 * x, 2.0, 0.0, 0.0]
                } else {
                    [0.0; 5]
                }
            }
            Activation::ReCu => {
                if x > 0.0 {
                    [x * x * x, 3.0 * x * x, 6.0 * x, 6.0, 0.0]
                } else {
                    [0.0; 5]
                }
            }
            Activation::Swish => {
                let s0 = sigmoid(x);
                let s1 = s0 * (1.0 - s0);
                let k = 1.0 - 2.0 * s0;
                let s2 = s1 * k;
                let s3 = s2 * k - 2.0 * s1 * s1;
                let s4 = s3 * k - 6.0 * s1 * s2;
                [
                    x * s0,
                    x * s1 + s0,
                    x * s2 + 2.0 * s1,
                    x * s3 + 3.0 * s2,
                    x * s4 + 4.0 * s3,
                ]
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::ReQu => "requ",
            Activation::ReCu => "recu",
            Activation::Swish => "swish",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "requ" => Ok(Activation::ReQu),
            "recu" => Ok(Activation::ReCu),
            "swish" => Ok(Activation::Swish),
            other => Err(format!("unknown activation `{other}` (expected requ, recu or swish)")),
        }
    }
}
