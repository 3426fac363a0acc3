pub mod bench;
pub mod gen_dataset;
pub mod gen_scenarios;
pub mod plan;
pub mod render;
pub mod train;

use std::path::PathBuf;

use crate::config::AppConfig;

/// Resolved global flags shared by every command.
pub struct Context {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub config: AppConfig,
    pub threads: usize,
}
