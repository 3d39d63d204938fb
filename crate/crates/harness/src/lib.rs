//! Experiment harness for the MISO broadcast channel toolkit: scenario
//! sweeps over correlation and SNR grids, validation oracles for the
//! closed-form identities, and CSV / plot-script emission.

pub mod emit;
pub mod oracles;
pub mod scenario;

pub use scenario::{run_scenario, PhasePolicy, ResultTable, Row, Scenario, Scheme};
