pub mod compare;
pub mod dump;
pub mod evalcmd;
pub mod gendata;
pub mod gradcheck;
pub mod traincmd;

use std::path::Path;

use crate::errors::{CliError, CliResult};
use crate::runconfig::{serialize_config, RunConfig};

/// Creates the output directory and persists the effective run
/// configuration inside it; every run is reproducible from its artifacts.
pub fn prepare_out_dir(cfg: &RunConfig) -> CliResult<()> {
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::io(&format!("creating {}", cfg.out_dir.display()), e))?;
    write_text(&cfg.out_dir.join("run_config.cfg"), &serialize_config(cfg))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(&format!("writing {}", path.display()), e))
}
