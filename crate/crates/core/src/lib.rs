//! One-vs-rest multi-label linear classification.
//!
//! Each label gets its own cost-weighted L2-regularized logistic regression
//! model. On top of that the crate provides
//!
//! * per-label selection of the regularization parameter by cross-validated F1,
//! * threshold calibration (midpoint sweep with the `fbr` floor, two-level CV),
//! * cost-sensitive `(C, t)` grids,
//! * prediction rules, including the leaky top-K_i rule kept for audits,
//! * Macro/Micro/Instance-F1, precision@k and the Micro-F1 size bound,
//! * seeded synthetic checks of the Micro-F1 results in [`theory`], and
//! * the repeated-split experiment runner in [`experiment`].
//!
//! The guide in `book/` walks through each piece with runnable snippets.
//!
//! ```
//! use ovrlab::data::SparseDataset;
//! use ovrlab::metrics::{confusion, macro_f1, micro_f1};
//! use ovrlab::predict::{decision_matrix, predict_no_empty};
//! use ovrlab::trainer::{train_ovr_basic, OvrOptions};
//!
//! let data = SparseDataset::from_rows(
//!     vec![
//!         vec![(0, 3.0)],
//!         vec![(1, 3.0)],
//!         vec![(0, 3.0), (1, 3.0)],
//!         vec![(2, 3.0)],
//!     ],
//!     vec![vec![0], vec![1], vec![0, 1], vec![2]],
//!     None,
//!     None,
//! )?;
//! let model = train_ovr_basic(&data, 10.0, &OvrOptions::default())?;
//! let pred = predict_no_empty(&decision_matrix(&model, &data)?);
//! assert_eq!(pred.predicted, data.label_sets());
//! let counts = confusion(data.label_sets(), &pred.predicted, data.n_labels())?;
//! assert_eq!((macro_f1(&counts), micro_f1(&counts)), (1.0, 1.0));
//! # Ok::<(), ovrlab::Error>(())
//! ```

pub mod calibration;
pub mod data;
mod error;
pub mod experiment;
pub mod metrics;
pub mod predict;
pub mod rng;
pub mod solver;
pub mod theory;
pub mod trainer;

pub use error::{Error, Result};
