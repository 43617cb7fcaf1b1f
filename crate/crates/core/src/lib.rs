//! Abelian integrals and limit-cycle counts for the cubic Lotka-Volterra
//! families
//!
//! ```text
//! x' = x (1 + b x + x^2 - y^2) + ε f(x, y)
//! y' = y (-1 - c y + x^2 - y^2) + ε g(x, y)
//! ```
//!
//! with first integral `H = (1 + b x + c y + x^2 + y^2) / (x y)`. The
//! two-annulus family (`0 <= b < c < 2`) is [`Family::X29`]; the
//! one-annulus family (`b = c`) is [`Family::X210`].

pub mod certify;
pub mod closed_forms;
pub mod coeffs;
pub mod designer;
pub mod ect;
pub mod error;
pub mod geometry;
pub mod ode;
pub mod oracle;
pub mod quadrature;
pub mod zeros;

pub use closed_forms::{melnikov_n3_coeffs, melnikov_n3_eval, MelnikovN3};
pub use coeffs::{CoeffFile, PerturbationCoeffs};
pub use designer::{realize_configuration, realize_zero_count, Configuration, Realization};
pub use ect::{ect_verdict, EctVerdict, Verdict};
pub use error::{Error, Result};
pub use geometry::{annulus, AnnulusSpec, AnnulusTag, Family, SystemParams};
pub use ode::{detect_cycles, poincare_return, PerturbedField};
pub use oracle::oracle_melnikov;
pub use quadrature::QuadratureConfig;
pub use zeros::{count_zeros_n3, ZeroReport};
