//! Run configuration: a single JSON document. Relative paths inside it are
//! resolved against the directory holding the file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use music_vpr::adaptive::AdaptiveConfig;
use music_vpr::eval::GroundTruth;
use music_vpr::providers::{
    HogConfig, HogProvider, PrecomputedDescriptors, PrecomputedScores, SyntheticProfile,
    SyntheticProvider, TechniqueProvider,
};
use music_vpr::sic::SicConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// Plain argmax of one technique.
    Baseline,
    Sic,
    Music,
    Amusic,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Baseline => "baseline",
            Pipeline::Sic => "sic",
            Pipeline::Music => "music",
            Pipeline::Amusic => "amusic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TechniqueSpec {
    /// Q×N score matrix, VPRD (scores role) or headerless CSV.
    Scores { id: String, path: PathBuf },
    /// Reference and query descriptor matrices, compared by cosine.
    Descriptors {
        id: String,
        references: PathBuf,
        queries: PathBuf,
    },
    /// Folders of PGM images described with HOG.
    Hog {
        id: String,
        references: PathBuf,
        queries: PathBuf,
        #[serde(default)]
        hog: HogConfig,
    },
    /// Generated on the fly. The run seed is added to the profile seed.
    Synthetic { profile: SyntheticProfile },
}

impl TechniqueSpec {
    pub fn id(&self) -> &str {
        match self {
            TechniqueSpec::Scores { id, .. }
            | TechniqueSpec::Descriptors { id, .. }
            | TechniqueSpec::Hog { id, .. } => id,
            TechniqueSpec::Synthetic { profile } => &profile.id,
        }
    }
}

fn default_ground_truth() -> GroundTruth {
    GroundTruth::frame_aligned(0)
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub pipeline: Pipeline,
    pub techniques: Vec<TechniqueSpec>,
    #[serde(default)]
    pub sic: SicConfig,
    #[serde(default)]
    pub adaptive: AdaptiveConfig,
    #[serde(default = "default_ground_truth")]
    pub ground_truth: GroundTruth,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Process only the first `queries` frames.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queries: Option<usize>,
}

/// Parses JSON, reporting the path of the offending field on failure.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." {
            "config".to_string()
        } else {
            path
        };
        CliError::config(field, e.into_inner())
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config("config", format!("{}: {e}", path.display())))?;
    parse_json(&text)
}

/// Ids become file names and CSV column prefixes.
pub fn check_id(id: &str, field: String) -> Result<(), CliError> {
    let ok = !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !id.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(CliError::config(
            field,
            format!("technique id {id:?} must be non-empty ASCII letters, digits, '-', '_' or '.'"),
        ))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(Self, PathBuf), CliError> {
        let cfg: RunConfig = read_json(path)?;
        cfg.validate()?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.techniques.is_empty() {
            return Err(CliError::config(
                "techniques",
                "at least one technique is required",
            ));
        }
        if matches!(self.pipeline, Pipeline::Baseline | Pipeline::Sic) && self.techniques.len() != 1
        {
            return Err(CliError::config(
                "techniques",
                format!(
                    "pipeline {} takes exactly one technique, got {}",
                    self.pipeline.name(),
                    self.techniques.len()
                ),
            ));
        }
        for (i, t) in self.techniques.iter().enumerate() {
            let field = |name: &str| format!("techniques[{i}].{name}");
            check_id(t.id(), field("id"))?;
            if self.techniques[..i].iter().any(|o| o.id() == t.id()) {
                return Err(CliError::config(
                    field("id"),
                    format!("duplicate technique id {:?}", t.id()),
                ));
            }
            match t {
                TechniqueSpec::Synthetic { profile } => profile
                    .validate()
                    .map_err(|e| CliError::config(field("profile"), e))?,
                TechniqueSpec::Hog { hog, .. } => {
                    hog.descriptor_len()
                        .map_err(|e| CliError::config(field("hog"), e))?;
                }
                _ => {}
            }
        }
        if self.sic.top_k == 0 {
            return Err(CliError::config("sic.top_k", "must be >= 1"));
        }
        self.adaptive_config().validate()?;
        self.ground_truth.validate()?;
        if self.queries == Some(0) {
            return Err(CliError::config("queries", "must be >= 1"));
        }
        Ok(())
    }

    pub fn adaptive_config(&self) -> AdaptiveConfig {
        AdaptiveConfig {
            sic: self.sic,
            ..self.adaptive
        }
    }

    /// Opens every technique's data. Missing or unreadable files are data
    /// errors.
    pub fn build_providers(
        &self,
        base: &Path,
    ) -> Result<Vec<Arc<dyn TechniqueProvider>>, CliError> {
        let resolve = |p: &Path| base.join(p);
        self.techniques
            .iter()
            .map(|t| -> Result<Arc<dyn TechniqueProvider>, CliError> {
                let p: Arc<dyn TechniqueProvider> = match t {
                    TechniqueSpec::Scores { id, path } => Arc::new(
                        PrecomputedScores::from_file(id.as_str(), &resolve(path))
                            .map_err(CliError::data)?,
                    ),
                    TechniqueSpec::Descriptors {
                        id,
                        references,
                        queries,
                    } => Arc::new(
                        PrecomputedDescriptors::from_files(
                            id.as_str(),
                            &resolve(references),
                            &resolve(queries),
                        )
                        .map_err(CliError::data)?,
                    ),
                    TechniqueSpec::Hog {
                        id,
                        references,
                        queries,
                        hog,
                    } => Arc::new(
                        HogProvider::from_dirs(
                            id.as_str(),
                            *hog,
                            &resolve(references),
                            &resolve(queries),
                        )
                        .map_err(CliError::data)?,
                    ),
                    TechniqueSpec::Synthetic { profile } => {
                        let mut profile = profile.clone();
                        profile.seed = profile.seed.wrapping_add(self.seed);
                        Arc::new(
                            SyntheticProvider::new(profile)
                                .map_err(|e| CliError::config("techniques", e))?,
                        )
                    }
                };
                Ok(p)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(json: &str) -> Result<RunConfig, CliError> {
        let cfg: RunConfig = parse_json(json)?;
        cfg.validate()?;
        Ok(cfg)
    }

    const MIN: &str =
        r#"{"pipeline": "music", "techniques": [{"kind": "scores", "id": "A", "path": "a.vprd"}]}"#;

    #[test]
    fn defaults() {
        let cfg = parse(MIN).unwrap();
        assert_eq!(cfg.sic, SicConfig::new(50, 1000));
        assert_eq!(cfg.adaptive.coverage_threshold, 0.7);
        assert_eq!(cfg.adaptive.window, 10);
        assert_eq!(cfg.adaptive.alpha, 0.05);
        assert_eq!(cfg.ground_truth, GroundTruth::frame_aligned(0));
    }

    fn field_of(json: &str) -> String {
        match parse(json).unwrap_err() {
            CliError::Config { field, .. } => field,
            e => panic!("{e}"),
        }
    }

    #[test]
    fn errors_name_the_field() {
        let with = |extra: &str| MIN.replacen('{', &format!("{{{extra},"), 1);
        assert_eq!(
            field_of(&with(r#""adaptive": {"coverage_threshold": 1.5}"#)),
            "adaptive.coverage_threshold"
        );
        assert_eq!(
            field_of(&with(r#""adaptive": {"alpha": "x"}"#)),
            "adaptive.alpha"
        );
        assert_eq!(field_of(&with(r#""sic": {"top_k": 0}"#)), "sic.top_k");
        assert_eq!(
            field_of(r#"{"pipeline": "fast", "techniques": []}"#),
            "pipeline"
        );
        assert_eq!(
            field_of(r#"{"pipeline": "music", "techniques": []}"#),
            "techniques"
        );
        assert_eq!(
            field_of(&MIN.replace("\"A\"", "\"a/b\"")),
            "techniques[0].id"
        );
    }

    #[test]
    fn single_technique_pipelines() {
        let two = MIN.replace(
            "]}",
            r#", {"kind": "scores", "id": "B", "path": "b.csv"}]}"#,
        );
        assert!(parse(&two).is_ok());
        assert_eq!(field_of(&two.replace("music", "sic")), "techniques");
        assert_eq!(field_of(&two.replace("\"B\"", "\"A\"")), "techniques[1].id");
    }
}
