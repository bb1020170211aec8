//! `synth`: materializes synthetic techniques as VPRD score files next to a
//! frame-aligned ground truth and a ready-to-run config.

use std::path::{Path, PathBuf};

use music_vpr::eval::GroundTruth;
use music_vpr::providers::vprd::save_vprd;
use music_vpr::providers::{
    DescriptorMatrix, MatrixRole, SyntheticProfile, SyntheticProvider, TechniqueProvider,
};
use music_vpr::scenarios;
use music_vpr::sic::SicConfig;
use serde::{Deserialize, Serialize};

use crate::config::{check_id, read_json, Pipeline, RunConfig, TechniqueSpec};
use crate::error::CliError;

/// Built-in routes; every technique sees `frames` references and queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    /// One technique `S` with a constant decoy-spike rate.
    Spiked { frames: usize, spike_rate: f64 },
    /// `A` right before `switch`, `B` right after it.
    Disjoint { frames: usize, switch: usize },
    /// `A` degrades and `B` takes over at `at`.
    Swap { frames: usize, at: usize },
    /// The swap route with no swap.
    Constant { frames: usize },
}

fn default_pipeline() -> Pipeline {
    Pipeline::Amusic
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    /// Scenario seed; for explicit techniques, technique `i` gets `seed + i`.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub scenario: Option<Scenario>,
    #[serde(default)]
    pub techniques: Vec<SyntheticProfile>,
    /// Pipeline written into the generated config.
    #[serde(default = "default_pipeline")]
    pub pipeline: Pipeline,
}

impl SynthSpec {
    pub fn profiles(&self) -> Result<Vec<SyntheticProfile>, CliError> {
        let seed = self.seed.unwrap_or(0);
        let profiles = match (&self.scenario, self.techniques.is_empty()) {
            (Some(s), true) => match *s {
                Scenario::Spiked { frames, spike_rate } => {
                    vec![scenarios::spiked("S", frames, spike_rate, seed)]
                }
                Scenario::Disjoint { frames, switch } => {
                    scenarios::disjoint(frames, switch.min(frames), seed)
                }
                Scenario::Swap { frames, at } => scenarios::swap(frames, at.min(frames), seed),
                Scenario::Constant { frames } => scenarios::constant(frames, seed),
            },
            (None, false) => {
                let mut t = self.techniques.clone();
                if let Some(seed) = self.seed {
                    for (i, p) in t.iter_mut().enumerate() {
                        p.seed = seed.wrapping_add(i as u64);
                    }
                }
                t
            }
            _ => {
                return Err(CliError::config(
                    "scenario",
                    "give exactly one of `scenario` or a non-empty `techniques` list",
                ))
            }
        };
        for (i, p) in profiles.iter().enumerate() {
            let field = if self.scenario.is_some() {
                "scenario".to_string()
            } else {
                format!("techniques[{i}]")
            };
            check_id(&p.id, format!("{field}.id"))?;
            p.validate().map_err(|e| CliError::config(field, e))?;
            if profiles[..i].iter().any(|o| o.id == p.id) {
                return Err(CliError::config(
                    format!("techniques[{i}].id"),
                    format!("duplicate id {:?}", p.id),
                ));
            }
        }
        Ok(profiles)
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub files: Vec<PathBuf>,
    pub config: PathBuf,
}

pub fn cmd_synth(profile: &Path, out: &Path, seed: Option<u64>) -> Result<SynthOutput, CliError> {
    let mut spec: SynthSpec = read_json(profile)?;
    if seed.is_some() {
        spec.seed = seed;
    }
    let profiles = spec.profiles()?;
    if profiles.len() > 1 && matches!(spec.pipeline, Pipeline::Baseline | Pipeline::Sic) {
        return Err(CliError::config(
            "pipeline",
            format!(
                "{} takes one technique, the profile has {}",
                spec.pipeline.name(),
                profiles.len()
            ),
        ));
    }
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::internal(format!("{}: {e}", out.display())))?;

    let mut files = Vec::new();
    let mut techniques = Vec::new();
    for p in profiles {
        let id = p.id.clone();
        let provider = SyntheticProvider::new(p).map_err(|e| CliError::config("techniques", e))?;
        let (rows, cols) = (provider.query_count(), provider.reference_count());
        let mut data = Vec::with_capacity(rows * cols);
        for q in 0..rows {
            let v = provider.score(q).map_err(CliError::internal)?;
            data.extend(v.as_slice().iter().map(|&x| x as f32));
        }
        let matrix = DescriptorMatrix::new(rows, cols, data).map_err(CliError::internal)?;
        let name = format!("{id}.vprd");
        let path = out.join(&name);
        save_vprd(&path, &matrix, MatrixRole::Scores)
            .map_err(|e| CliError::internal(format!("{}: {e}", path.display())))?;
        files.push(path);
        techniques.push(TechniqueSpec::Scores {
            id,
            path: PathBuf::from(name),
        });
    }

    let gt = GroundTruth::frame_aligned(0);
    write_json(&out.join("ground_truth.json"), &gt)?;
    let cfg = RunConfig {
        pipeline: spec.pipeline,
        techniques,
        sic: SicConfig::default(),
        adaptive: Default::default(),
        ground_truth: gt,
        output_dir: PathBuf::from("run"),
        seed: spec.seed.unwrap_or(0),
        queries: None,
    };
    let config = out.join("config.json");
    write_json(&config, &cfg)?;
    Ok(SynthOutput { files, config })
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::internal)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::internal(format!("{}: {e}", path.display())))
}
