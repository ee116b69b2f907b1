//! Toolkit for lifting 2D detection annotations into metric 3D bounding boxes,
//! generating 3D detection/grounding/spatial-reasoning QA with deterministic
//! reasoning chains, and evaluating predictions against those annotations.
//!
//! The crate is organized around the data flow of the pipeline:
//!
//! - [`geom`]: pinhole camera geometry, depth/point rasters, 3D boxes, IoU and
//!   projection primitives.
//! - [`lift`]: masked depth regions → filtered, plausibility-checked metric boxes.
//! - [`boxlang`]: the textual `bbox(...)` wire format for 3D boxes.
//! - [`spatial`]: deterministic spatial predicates and quantities (relations,
//!   distances, clock directions, orderings).
//! - [`qa`]: QA generation with deterministic chain-of-thought text.
//! - [`eval`]: detection matching, grounding metrics, and answer grading.
//! - [`encoding`]: 3D coordinate positional encoding and feature fusion math.
//! - [`pipeline`]: ingestion, JSONL persistence, config, and the CLI commands.

pub mod boxlang;
pub mod encoding;
pub mod eval;
pub mod geom;
pub mod lift;
pub mod pipeline;
pub mod qa;
pub mod spatial;
