//! Linearized hard-sphere Boltzmann operators for a binary gas mixture.
//!
//! A heavy or light gas A diffuses through a background gas B at rest
//! (unit density and temperature). The crate discretizes velocity space,
//! assembles the single-species operator `L`, the cross operators `L_AB`
//! and `L_BA`, extracts fluid modes, dispersion branches and transport
//! coefficients, and evolves Green's functions of the coupled linear system
//! in a periodic spatial box.

pub mod coupled;
pub mod error;
pub mod fit;
pub mod greens;
pub mod grid;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod operator;
pub mod oracle3d;
pub mod quadrature;
pub mod radial;
pub mod spectral;

pub use error::{CacheError, KineticError, Result};
pub use grid::{build_grid, GridFunction, GridMode, GridRef, GridSpec, MixtureConfig, VelocityGrid};

pub type Real = f64;
pub type Complex = num_complex::Complex<f64>;

/// Lower-case hex SHA-256 of `bytes`.
pub fn digest_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let out = Sha256::digest(bytes);
    out.iter().map(|b| format!("{b:02x}")).collect()
}
