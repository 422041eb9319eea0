//! Multipath-based SLAM with two kinds of map features.
//!
//! A mobile agent observes multipath components (distance, angle of
//! departure, angle of arrival, normalized amplitude) that originate either
//! from virtual anchors (mirror images of the physical anchor) or from point
//! scatterers. The [`engine`] runs a particle-based belief propagation filter
//! that jointly tracks the agent state, a set of potential map features with
//! existence probabilities, their feature type, and the unknown data
//! association between features and measurements.
//!
//! Module map:
//!
//! * [`geometry`] – mirror images, path lengths, bearings.
//! * [`measurement_model`] – likelihoods, Fisher-information noise levels,
//!   detection probability, clutter densities.
//! * [`dynamics`] – state-transition models.
//! * [`association`] – probabilistic data association (BP and exact).
//! * [`engine`] – the filter.
//! * [`synth`] – synthetic scenario and measurement generation.
//! * [`metrics`] – RMSE and mode-belief evaluation.

pub mod association;
pub mod dynamics;
pub mod engine;
mod error;
pub mod geometry;
pub mod measurement_model;
pub mod metrics;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};

pub use association::{AssociationResult, AssociationWeights};
pub use dynamics::{AgentState, MotionParams, TypeTransition};
pub use engine::{SlamConfig, SlamState};
pub use geometry::{Environment, Point2, Vector2, WallSegment};
pub use measurement_model::{ClutterParams, FeatureType, Measurement, RadioParams};
