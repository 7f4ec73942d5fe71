//! Library side of the comment-improvement pipeline.
//!
//! Stages, in the order a run executes them:
//!
//! 1. [`corpus`] extracts Java methods and their Javadoc into [`corpus::CodeUnit`]s
//!    and splits them into an AI-judged partition and a human-reserved partition.
//! 2. [`candidates`] asks a text generator for `n` candidate comments per unit.
//! 3. [`judge`] renders one best-of-n prompt per quality axis and parses the verdict.
//! 4. [`finetune`] assembles per-axis SFT files with an AI-first, human-last curriculum.
//! 5. [`metrics`] scores model outputs against held-out human selections.
//!
//! The seven quality axes live in [`axes`]; generation and embedding providers in
//! [`backends`].

pub mod axes;
pub mod backends;
pub mod candidates;
pub mod checkpoint;
pub mod clock;
pub mod corpus;
pub mod finetune;
pub mod fsutil;
pub mod judge;
pub mod metrics;

pub use axes::{AxialGroup, AxisKey, QualityAxis, Taxonomy};
pub use clock::Clock;
pub use corpus::{CodeUnit, UnitId};
