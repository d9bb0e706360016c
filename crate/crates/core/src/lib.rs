//! Generalized one-dimensional diffusions in natural scale and the
//! local-time embeddings of Brownian motion they correspond to.
//!
//! A diffusion here is a time change of Brownian motion by the inverse of
//! the additive functional `Γ_u = ∫ L_u^x m(dx)`, where `m` is a speed
//! measure. The crate connects three descriptions of the same object:
//!
//! * a target law μ together with its call/put transforms `C`, `P` and the
//!   kernel average `V` ([`law`]),
//! * a speed measure obtained from μ by the exponential-time decomposition
//!   `m(dx) = μ(dx) / (2λ·denominator(x))`, with boundary, minimality and
//!   martingale classification ([`speed`]),
//! * the eigenfunctions of `½ d²f/(dm dx) = λ f` and their Wronskian
//!   ([`eigen`]).
//!
//! A seeded random-walk engine with a local-time field realizes the two
//! stopping rules — the pathwise comparison `λκΓ > L^{x0}` and the
//! exponential-clock rule `Γ > T_λ` — so embedding identities can be
//! checked by simulation ([`simulate`], [`verify`]).

pub mod eigen;
pub mod error;
pub mod law;
pub mod presets;
mod quadrature;
pub mod report;
pub mod simulate;
pub mod speed;
pub mod verify;

pub use error::Error;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
