//! Passivity verification for rational scattering macromodels in
//! pole-residue form.
//!
//! The adaptive check ([`verifier::check_passivity`]) warps the frequency
//! axis into subbands around the model poles and samples each subband with a
//! budgeted tree search. [`hamiltonian`] holds the dense eigenvalue oracle
//! used to cross-check it.

pub mod compare;
pub mod corpus;
pub mod error;
pub mod hamiltonian;
pub mod io;
pub mod mnmso;
pub mod model;
pub mod verifier;
pub mod warp;

pub use error::{Error, Result};
pub use model::{Frequency, PoleResidueModel, PoleTerm, StateSpaceModel, GAMMA};
pub use verifier::{check_passivity, Mode, ModePreset, PassivityReport, ViolationBand};
