//! `gen-data`: materialize a scene dataset on disk.

use autoassign::rng::SplitMix64;
use autoassign::toydet::{dataset, generate_scene};

use super::prepare_out_dir;
use crate::errors::{CliError, CliResult};
use crate::runconfig::RunConfig;

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    prepare_out_dir(cfg)?;
    let mut scenes = Vec::with_capacity(cfg.data_scenes);
    let mut objects = 0usize;
    let mut failures = 0usize;
    for i in 0..cfg.data_scenes {
        let seed = SplitMix64::derive(cfg.data_seed, i as u64).next_u64();
        let scene = generate_scene(&cfg.bench.scene, seed);
        objects += scene.objects.len();
        failures += scene.placement_failures;
        scenes.push(scene);
    }
    dataset::save_dataset(&cfg.out_dir, &scenes).map_err(|e| CliError::io("saving dataset", e))?;
    println!(
        "wrote {} scenes ({} objects, {} placement failures) to {}",
        scenes.len(),
        objects,
        failures,
        cfg.out_dir.display()
    );
    Ok(())
}
