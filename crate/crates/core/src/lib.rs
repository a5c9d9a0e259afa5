//! Rejection Monte Carlo sampling from user-supplied densities on bounded
//! boxes, indicator-screened integration, and goodness-of-fit checks for the
//! resulting samples.
//!
//! ```
//! use rmc_core::expression::VarOrder;
//! use rmc_core::model::{validate_target, BoundingBox, ScalarField};
//! use rmc_core::samplers::srmc_sample;
//!
//! let vars = VarOrder::new(["x"]).unwrap();
//! let density = ScalarField::parse("sin(x)/sqrt(2)", &vars).unwrap();
//! let support = BoundingBox::parse("pi/4:3*pi/4").unwrap();
//! let target = validate_target(density, support, Some(1.1)).unwrap();
//! let batch = srmc_sample(&target, 1000, 42).unwrap();
//! assert_eq!(batch.len(), 1000);
//! ```

pub mod expression;
pub mod integrator;
pub mod model;
pub mod randomness;
pub mod samplers;
pub mod stats;
