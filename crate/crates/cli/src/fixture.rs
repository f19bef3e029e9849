//! `imgspread fixture DIR`: write the synthetic corpus, annotations, events
//! and a ready-to-run config.

use std::path::Path;

use imgspread::fixture::{files, generate, GroundTruth};

use crate::error::PipelineError;
use crate::manifest::write_atomic;

pub const CONFIG_FILE: &str = "imgspread.toml";

pub fn fixture_config(truth: &GroundTruth, seed: u64) -> String {
    format!(
        r#"# Synthetic fixture pipeline
seed = {seed}

[paths]
corpus = "{corpus}"
cache = "cache"
output = "out"
events = "{events}"
tweets = "{tweets}"
entities = "{entities}"

[cluster]
eps = 8
min_samples = 2

[annotate]
provider = "fixture"
fixture = "{annotations}"
workers = 4

[graph]
threshold = 0.4
fraction = 0.3

[events]
window_start = {start}
window_end = {end}
communities = {communities:?}
min_occurrences = 5

[hawkes]
tau_hours = 1.0
delta_max_hours = 24.0
lambda0_prior = [1.0, 1.0]
w_prior = [1.0, 5.0]
burn_in = 500
samples = 1500
workers = 4

[report]
source = "Trolls"
top = 20
"#,
        corpus = files::CORPUS_DIR,
        events = files::EVENTS,
        tweets = files::TWEETS,
        entities = files::ENTITIES,
        annotations = files::ANNOTATIONS,
        start = truth.window.0,
        end = truth.window.1,
        communities = truth.communities,
    )
}

pub fn write_fixture(dir: &Path, seed: u64) -> Result<GroundTruth, PipelineError> {
    let fixture = generate(seed).map_err(PipelineError::data)?;
    fixture.write(dir).map_err(PipelineError::data)?;
    write_atomic(&dir.join(CONFIG_FILE), fixture_config(&fixture.truth, seed).as_bytes())?;
    Ok(fixture.truth)
}
