//! Phase-transition analysis and exact-score sampling for coupled two-block
//! Ornstein–Uhlenbeck diffusion models.
//!
//! The forward process is `dZ = M Z dt + Σ_W dW` on `Z = (X, Y) ∈ R^{2d}`,
//! where every matrix is a 2×2 block tensored with `I_d`. Symmetric coupling
//! `M = [[-β, g], [g, -β]]` splits into a common mode `u = (x+y)/√2` and a
//! difference mode `v = (x-y)/√2`; anisotropic coupling
//! `M = [[-β, 0], [g, -β]]` lets `x` drive `y` one way.

pub mod analysis;
pub mod blockmat;
pub mod collapse;
pub mod error;
pub mod moments;
pub mod rng;
pub mod roots;
pub mod sampler;
pub mod schedule;
pub mod speciation;

pub use blockmat::{Block2, ModeDecomposition};
pub use error::{Error, Result};
pub use moments::{Coupling, MeanPair, MeanSpec, MixtureInit, ModelSpec, MomentState};
pub use schedule::{ScheduleKind, ScheduleSpec};
