//! Point-source solver for the free-space 3D wave equation.
//!
//! The retarded potential of many point sources is split into a local part
//! (sources within the blending width of a target, summed directly) and a
//! smooth history part represented by truncated-kernel Fourier modes that
//! are marched in time with an exact harmonic-oscillator update.

pub mod engine;
pub mod error;
pub mod history;
pub mod local;
pub mod nudft;
pub mod oracle;
pub mod scenarios;
pub mod special;
pub mod spectrum;
pub mod window;

pub use engine::{simulate, ForcingMode, RunPlan, SimulationOutput, Slice};
pub use error::{Error, Result};
pub use nudft::{TransformMode, TransformPlan};
pub use scenarios::{Scenario, Signal, Source};
pub use spectrum::{select_params, ModeGrid, SchemeInputs, SchemeParams};
pub use window::BlendWindow;
