//! Anisotropic nonlocal operators with kernels comparable to
//! `c_σ / Σ|y_i|^{n+σ_i}`, together with the geometry, barrier, covering and
//! ABP apparatus needed to probe Harnack-type estimates numerically.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments, clippy::needless_range_loop, clippy::type_complexity)]
// `num_traits::Float` supplies the float methods; when a dependency links std its
// inherent methods shadow the trait and the import looks unused.
#![allow(unused_imports)]

extern crate alloc;

pub mod abp;
pub mod barrier;
pub mod covering;
pub mod cz;
pub mod dyadic;
pub mod envelope;
pub mod experiments;
pub mod field;
pub mod geometry;
pub mod hull;
pub mod kernel;
pub mod ops;
pub mod profile;
pub mod quadrature;
pub mod scaling;
pub mod solver;
pub mod stats;

pub use field::{BoundedField, Exterior, Grid};
pub use geometry::{AnisoSet, SetKind};
pub use kernel::{Kernel, KernelFamily, Multiplier};
pub use ops::Estimate;
pub use profile::{AnisotropyProfile, MatrixA, ProfileError};
pub use quadrature::{QuadratureScheme, QuadratureSettings};
pub use scaling::ScalingMap;
