//! `dynfield gen-scenarios`: validated scenario suites on disk.

use clap::Args;

use dynfield_core::bench::{generate_scenarios, save_scenario, Family, ALL_FAMILIES};

use super::Context;
use crate::manifest::{write_atomic, ManifestBuilder};
use crate::CliError;

#[derive(Debug, Args)]
pub struct GenScenariosArgs {
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    /// Comma-separated families: corridor-gap, doorway, crossing-room,
    /// head-on-corridor. Defaults to all four.
    #[arg(long)]
    pub families: Option<String>,
}

fn parse_families(spec: &str) -> Result<Vec<Family>, CliError> {
    spec.split(',')
        .map(|s| match s.trim() {
            "corridor-gap" => Ok(Family::CorridorGap),
            "doorway" => Ok(Family::Doorway),
            "crossing-room" => Ok(Family::CrossingRoom),
            "head-on-corridor" => Ok(Family::HeadOnCorridor),
            other => Err(CliError::Parse(format!("unknown family {other:?}"))),
        })
        .collect()
}

pub fn run(ctx: &Context, args: GenScenariosArgs) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new(
        "gen-scenarios",
        ctx.seed,
        serde_json::to_value(&ctx.config).unwrap_or_default(),
    );
    let families = match &args.families {
        Some(spec) => parse_families(spec)?,
        None => ALL_FAMILIES.to_vec(),
    };
    let scenarios = generate_scenarios(args.count, ctx.seed, &families)
        .map_err(|e| CliError::Other(anyhow::anyhow!(e)))?;

    let mut listing = Vec::new();
    for scenario in &scenarios {
        let map_name = format!("{}.pgm", scenario.spec.name);
        save_scenario(scenario, &ctx.out_dir, &map_name)
            .map_err(|e| CliError::Other(anyhow::anyhow!(e)))?;
        let toml_name = format!("{}.toml", scenario.spec.name);
        manifest.record_output(&ctx.out_dir.join(&map_name));
        manifest.record_output(&ctx.out_dir.join(&toml_name));
        listing.push(toml_name);
    }
    let suite = serde_json::to_string_pretty(&listing).map_err(|e| CliError::Other(e.into()))?;
    let suite_path = ctx.out_dir.join("suite.json");
    write_atomic(&suite_path, suite.as_bytes()).map_err(CliError::Other)?;
    manifest.record_output(&suite_path);
    manifest.write(&ctx.out_dir).map_err(CliError::Other)?;

    println!("gen-scenarios: wrote {} scenarios to {}", scenarios.len(), ctx.out_dir.display());
    Ok(())
}
