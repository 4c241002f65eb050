//! Experiment identifiers and solver variants.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// The catalogued manufactured-solution problems.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExperimentId {
    /// `-Δu + u² = f` on the unit ball, `u = e^{‖x‖²}`, Dirichlet data.
    DirichletEllipticBall,
    /// `det ∇²u = f` on the unit ball, `u = e^{‖x‖²/d}`.
    MongeAmpere,
    /// `-Δu + u = f` on `[0,1]^d`, `u = Σ e^{x_k}`, Neumann data.
    NeumannCube,
    /// `-Δu - u = f` on the unit ball, `u = cos(‖x‖² - 1)`, zero flux.
    NeumannBall,
    /// `-Δu + π²u = f` on `[0,1]^d`, `u = sin(Σ x_k)`, Robin data,
    /// solved through the sum/difference split.
    RobinSumDiff,
    /// Same problem, solved through the augmented variable `r ≈ u ⊕ ∇u`.
    RobinAugmented,
    /// Poisson on `[0,1]^d`, Dirichlet on `x_1 ∈ {0,1}`, zero flux elsewhere.
    MixedSlab,
    /// Poisson on the notched pentagon times `(0,1)^(d-2)`.
    MixedComplex2d,
    /// Poisson on the annulus, Dirichlet inside, zero flux outside.
    MixedAnnulus,
    /// `-Δu + π²u = f` on `(-1,1)^d`, periodic, `u = Σ cos(πx_i) + cos(2πx_i)`.
    PeriodicSum,
    /// Same operator, `u = Σ cos(πx_i) cos(2πx_i)`.
    PeriodicProduct,
    /// Same operator in 1D, `u = cos(πx) + cos(2πx) + cos(4πx) + cos(8πx)`.
    Periodic1dHighFreq,
    /// `u_t - Δu = f` on `(0,1)^d × (0,1)`, `u = t Π sin(πx_i)`.
    Parabolic,
    /// `u_tt - Δu = f` on `(0,1)^d × (0,1)`, `u = t² Π sin(πx_i)`.
    Wave,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 14] = [
        ExperimentId::DirichletEllipticBall,
        ExperimentId::MongeAmpere,
        ExperimentId::NeumannCube,
        ExperimentId::NeumannBall,
        ExperimentId::RobinSumDiff,
        ExperimentId::RobinAugmented,
        ExperimentId::MixedSlab,
        ExperimentId::MixedComplex2d,
        ExperimentId::MixedAnnulus,
        ExperimentId::PeriodicSum,
        ExperimentId::PeriodicProduct,
        ExperimentId::Periodic1dHighFreq,
        ExperimentId::Parabolic,
        ExperimentId::Wave,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::DirichletEllipticBall => "dirichlet-elliptic-ball",
            ExperimentId::MongeAmpere => "monge-ampere",
            ExperimentId::NeumannCube => "neumann-cube",
            ExperimentId::NeumannBall => "neumann-ball",
            ExperimentId::RobinSumDiff => "robin-sumdiff",
            ExperimentId::RobinAugmented => "robin-augmented",
            ExperimentId::MixedSlab => "mixed-slab",
            ExperimentId::MixedComplex2d => "mixed-complex2d",
            ExperimentId::MixedAnnulus => "mixed-annulus",
            ExperimentId::PeriodicSum => "periodic-sum",
            ExperimentId::PeriodicProduct => "periodic-product",
            ExperimentId::Periodic1dHighFreq => "periodic-1d-highfreq",
            ExperimentId::Parabolic => "parabolic",
            ExperimentId::Wave => "wave",
        }
    }

    /// Solver variants run for this problem.
    pub fn methods(self) -> &'static [Variant] {
        use Variant::*;
        match self {
            ExperimentId::DirichletEllipticBall
            | ExperimentId::NeumannCube
            | ExperimentId::NeumannBall => &[Mim, Dgm],
            ExperimentId::Parabolic | ExperimentId::Wave => &[Dgm, Mim1, Mim2],
            _ => &[Mim],
        }
    }

    pub fn is_time_dependent(self) -> bool {
        matches!(self, ExperimentId::Parabolic | ExperimentId::Wave)
    }

    /// Spatial dimension is fixed for some problems.
    pub fn fixed_dim(self) -> Option<usize> {
        match self {
            ExperimentId::Periodic1dHighFreq => Some(1),
            _ => None,
        }
    }

    pub fn valid_names() -> String {
        ExperimentId::ALL.map(|e| e.name()).join(", ")
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        ExperimentId::ALL
            .into_iter()
            .find(|e| e.name() == s.trim())
            .ok_or_else(|| Error::UnknownExperiment {
                id: s.to_string(),
                valid: ExperimentId::valid_names(),
            })
    }
}

/// Loss/trial family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Strong-form residual of a single network.
    Dgm,
    /// First-order system with independent `u` and `p` networks.
    Mim,
    /// Time-dependent MIM with an auxiliary `v ≈ u_t` coupling residual.
    Mim1,
    /// Time-dependent MIM using `u_t` directly (parabolic) or an exactly
    /// initialised `v` (wave).
    Mim2,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Dgm => "dgm",
            Variant::Mim => "mim",
            Variant::Mim1 => "mim1",
            Variant::Mim2 => "mim2",
        }
    }

    pub fn is_mixed(self) -> bool {
        self != Variant::Dgm
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dgm" => Ok(Variant::Dgm),
            "mim" => Ok(Variant::Mim),
            "mim1" => Ok(Variant::Mim1),
            "mim2" => Ok(Variant::Mim2),
            other => Err(Error::InvalidConfig {
                field: "method".into(),
                message: format!("unknown method `{other}` (expected dgm, mim, mim1 or mim2)"),
            }),
        }
    }
}
