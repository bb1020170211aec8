//! Seeded synthetic technique for frame-aligned routes (query `q` truly
//! matches reference `q`).
//!
//! Each frame draws a uniform background in `[0, background)` for every
//! reference. With probability `competence` the true reference gets a unit
//! peak on top; otherwise a decoy reference (never the true one) gets the
//! peak and the true reference keeps only `truth_residual`. Every frame uses
//! its own ChaCha stream, so scoring is random-access and reproducible.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_query, ProviderError, ProviderKind, TechniqueId, TechniqueProvider};
use crate::score::ScoreVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    #[serde(default = "NoiseModel::default_background")]
    pub background: f64,
    #[serde(default)]
    pub truth_residual: f64,
}

impl NoiseModel {
    fn default_background() -> f64 {
        0.1
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            background: Self::default_background(),
            truth_residual: 0.0,
        }
    }
}

/// Frames `start..end` share one competence and noise model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub competence: f64,
    #[serde(default)]
    pub noise: NoiseModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticProfile {
    pub id: String,
    pub references: usize,
    pub queries: usize,
    pub seed: u64,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub offset: f64,
    pub segments: Vec<Segment>,
}

fn one() -> f64 {
    1.0
}

impl SyntheticProfile {
    /// One segment covering the whole route.
    pub fn constant(
        id: &str,
        frames: usize,
        competence: f64,
        noise: NoiseModel,
        seed: u64,
    ) -> Self {
        Self {
            id: id.to_string(),
            references: frames,
            queries: frames,
            seed,
            scale: 1.0,
            offset: 0.0,
            segments: vec![Segment {
                start: 0,
                end: frames,
                competence,
                noise,
            }],
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        let err = |m: String| Err(ProviderError::Profile(format!("{}: {m}", self.id)));
        if self.references < 2 {
            return err("at least 2 references are needed to place a decoy".into());
        }
        if self.queries == 0 || self.queries > self.references {
            return err(format!(
                "queries must be in 1..={} for a frame-aligned route, got {}",
                self.references, self.queries
            ));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) || !self.offset.is_finite() {
            return err("scale must be positive and offset finite".into());
        }
        for s in &self.segments {
            if s.start >= s.end {
                return err(format!("empty segment {}..{}", s.start, s.end));
            }
            if !(0.0..=1.0).contains(&s.competence) {
                return err(format!("competence {} is outside [0, 1]", s.competence));
            }
            let n = s.noise;
            if !(n.background >= 0.0 && n.background < 1.0) {
                return err(format!("background {} is outside [0, 1)", n.background));
            }
            if !(n.truth_residual >= 0.0 && n.truth_residual + n.background <= 1.0) {
                return err(format!(
                    "truth_residual {} must be >= 0 and leave the decoy on top (residual + background <= 1)",
                    n.truth_residual
                ));
            }
        }
        if let Some(q) = (0..self.queries).find(|&q| self.segment_for(q).is_none()) {
            return err(format!("frame {q} is not covered by any segment"));
        }
        Ok(())
    }

    fn segment_for(&self, q: usize) -> Option<&Segment> {
        self.segments.iter().find(|s| s.start <= q && q < s.end)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticProvider {
    id: TechniqueId,
    profile: SyntheticProfile,
}

impl SyntheticProvider {
    pub fn new(profile: SyntheticProfile) -> Result<Self, ProviderError> {
        profile.validate()?;
        Ok(Self {
            id: TechniqueId::new(profile.id.clone()),
            profile,
        })
    }

    pub fn profile(&self) -> &SyntheticProfile {
        &self.profile
    }
}

impl TechniqueProvider for SyntheticProvider {
    fn id(&self) -> &TechniqueId {
        &self.id
    }

    fn kind(&self) -> ProviderKind {
        ProviderKind::Synthetic
    }

    fn reference_count(&self) -> usize {
        self.profile.references
    }

    fn query_count(&self) -> usize {
        self.profile.queries
    }

    fn score(&self, q: usize) -> Result<ScoreVector, ProviderError> {
        check_query(q, self.profile.queries)?;
        let p = &self.profile;
        let seg = p
            .segment_for(q)
            .expect("validated profile covers every frame");
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        rng.set_stream(q as u64);

        let n = p.references;
        let mut s: Vec<f64> = (0..n)
            .map(|_| rng.gen::<f64>() * seg.noise.background)
            .collect();
        if rng.gen::<f64>() < seg.competence {
            s[q] += 1.0;
        } else {
            let mut decoy = rng.gen_range(0..n - 1);
            if decoy >= q {
                decoy += 1;
            }
            s[decoy] += 1.0;
            s[q] += seg.noise.truth_residual;
        }
        for v in &mut s {
            *v = p.offset + p.scale * *v;
        }
        Ok(ScoreVector::new(s)?)
    }
}
