//! Cascade-classifier object detection and an asymmetric-multicore
//! schedule/energy model, usable without `std`.
//!
//! The crate is split by concern:
//!
//! * [`image`]: grayscale images, plain and squared integral images,
//!   rectangle sums, window deviation and the nearest-neighbour pyramid.
//! * [`cascade`]: Haar features, weak/strong classifiers and early-exit
//!   cascade evaluation on a single window.
//! * [`detect`]: multi-scale sliding-window scanning, static column
//!   partitioning, grouping and the RIT ratio.
//! * [`train`]: AdaBoost stump selection, strong-classifier boosting and
//!   attentional cascade assembly.
//! * [`amp`]: detection task graphs, bottom-level scheduling, a
//!   discrete-event simulator and DVFS energy accounting.
//! * [`metrics`]: detection matching and precision/recall.
//!
//! File formats, threads, clocks and the CLI live in the `vjamp` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod amp;
pub mod cascade;
pub mod detect;
pub mod image;
pub mod metrics;
pub mod train;

pub use cascade::{Cascade, EvalCounters, HaarFeature, Stage, WeakClassifier, WeightedRect};
pub use detect::{DetectParams, Detection};
pub use image::{BoundsError, GrayImage, IntegralPair, Rect};

/// Binary point of the fixed-point thresholds and contributions.
pub const FIXED_SHIFT: u32 = 12;
/// `1.0` in fixed point.
pub const FIXED_ONE: i32 = 1 << FIXED_SHIFT;
