use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

use raikit::dataset::SyntheticParams;
use raikit::fairbatch::FairBatchConfig;
use raikit::frtrain::FRConfig;
use raikit::mlclean::CleanConfig;
use raikit::model::TrainConfig;
use raikit::slicefinder::SearchConfig;
use raikit::slicetuner::{PlannerConfig, SlicePoolParams};

/// Per-module sections of the `--config` file. Missing sections fall back to
/// module defaults; unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub gen_data: Option<SyntheticParams>,
    pub pool: Option<SlicePoolParams>,
    pub train: Option<TrainConfig>,
    pub fairbatch: Option<FairBatchConfig>,
    pub frtrain: Option<FRConfig>,
    pub tune: Option<PlannerConfig>,
    pub find_slices: Option<SearchConfig>,
    pub clean: Option<CleanConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn gen_data_params(&self) -> SyntheticParams {
        self.gen_data
            .clone()
            .unwrap_or_else(|| SyntheticParams::two_groups([400, 600], [0.25, 0.6], 2, 1.0))
    }

    pub fn pool_params(&self) -> SlicePoolParams {
        self.pool
            .clone()
            .unwrap_or_else(SlicePoolParams::four_slices)
    }
}
