//! Inexact ADMM engines for semidefinite programming, together with a
//! classically emulated quantum subroutine layer.
//!
//! The crate is split along the structure of the solver:
//!
//! * [`symlin`] — symmetric-matrix linear algebra: `svec`/`smat` packing,
//!   the constraint map and its adjoint, the Gram matrix, eigendecomposition
//!   and every projection the solver uses.
//! * [`polyprox`] — construction and certification of the monotone polynomial
//!   that stands in for the PSD projection, its spectral application, and the
//!   virtual-barrier verification oracle.
//! * [`qemul`] — emulation of the quantum subroutines (linear solver, LCU
//!   combination, tomography) with calibrated error injection, plus the
//!   symbolic resource ledger.
//! * [`solver`] — the iteration engines: exact classical ADMM, the inexact
//!   quantum-emulated scheme, Douglas-Rachford splitting, averaging, residual
//!   tracking and stopping logic.
//! * [`problems`] — instance generation (planted optima, max-cut
//!   relaxations), validation and SDPA sparse-format text I/O.
//!
//! The crate is `no_std` (it requires `alloc`); file handling, the CLI and
//! serialization to disk live in the companion `qadmm-cli` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(any(test, feature = "std"))]
extern crate std;

mod fm;

pub mod polyprox;
pub mod problems;
pub mod qemul;
pub mod solver;
pub mod symlin;
