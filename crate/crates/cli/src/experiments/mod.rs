//! One module per subcommand; each returns its artifacts without touching disk.

pub mod bounds;
pub mod gap;
pub mod infomat;
pub mod limit_cycles;
pub mod similarity;
pub mod table;

use crate::config::{Experiment, RunConfig};
use crate::output::Artifacts;
use crate::CliError;

pub fn run(experiment: Experiment, cfg: &RunConfig) -> Result<Artifacts, CliError> {
    match experiment {
        Experiment::Table1 => table::run_table1(cfg),
        Experiment::Table2 => table::run_table2(cfg),
        Experiment::LimitCycles => limit_cycles::run(cfg),
        Experiment::Bounds => bounds::run(cfg),
        Experiment::Infomat => infomat::run(cfg),
        Experiment::Similarity => similarity::run(cfg),
        Experiment::Gap => gap::run(cfg),
    }
}
