//! Numerical toolkit for asymptotic LOCC: Kraus and Choi operator algebra,
//! zonoid membership, LOCC protocol trees and the worked two-qubit, W-state
//! and P-qubit examples.

pub mod casework;
pub mod channels;
pub mod error;
pub mod linalg;
pub mod locc;
pub mod quadrature;
pub mod report;
pub mod zonoid;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, PartyDims, C64};
