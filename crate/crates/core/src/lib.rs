//! Geometry-level tooling for video scene-text data.
//!
//! Two halves share one set of types:
//!
//! * synthesis: place text on a canonical image ([`textplace`]), carry it
//!   through deformation fields or frame-to-frame optical flow, and re-fit
//!   every frame with a RANSAC homography so quads stay projective images of
//!   their source ([`textprop`], [`homest`]);
//! * evaluation: DETR-style matching costs and set losses ([`assign`]), a
//!   rule-based stand-in for query tracking ([`trackersim`]), and the
//!   detection / end-to-end / CLEAR-MOT / IDF1 metric suite ([`metrics`]).
//!
//! [`scenegen`] produces analytic scenes whose flows, deformation fields and
//! ground truth are consistent by construction; most closure tests use it.

pub mod assign;
pub mod dataio;
pub mod geometry;
pub mod homest;
pub mod metrics;
pub mod rng;
pub mod scenegen;
pub mod textplace;
pub mod textprop;
pub mod trackersim;

pub use dataio::{CharBox, FrameRecord, TextInstance, VideoAnnotation};
pub use geometry::{AABox, FlowField, Homography, Point2, Polygon};
