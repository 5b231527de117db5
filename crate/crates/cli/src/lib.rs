//! Library side of the bc-dyn command line tool: bundled scenario presets,
//! the run pipeline, preset verification, and the CSV/JSON writers. The
//! binary in main.rs is a thin argument dispatcher over these modules, and
//! the integration tests replay the presets through the same code paths.

pub mod output;
pub mod runner;
pub mod scenario;
pub mod verify;
