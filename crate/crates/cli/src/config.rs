//! Pipeline configuration file: flat TOML keys plus an optional `[fixture]` table.

use std::path::Path;

use aerorecog_core::augment::view_count;
use aerorecog_core::detect::{DetectConfig, RegistrationConfig};
use aerorecog_core::motion::MotionModel;
use aerorecog_core::recognize::RecognitionConfig;
use aerorecog_core::subspace::SubspaceConfig;
use aerorecog_core::synthgen::FixtureConfig;
use aerorecog_core::track::{LkConfig, TrackConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,

    pub diff_threshold: f64,
    pub morph_radius: usize,
    pub close_radius: usize,
    pub min_area: usize,
    pub persistence: usize,
    /// 4 (similarity) or 6 (affine).
    pub registration_dof: usize,
    /// Shrink the seed box to the target's current position before tracking.
    pub refine_seed: bool,

    pub lk_max_iterations: usize,
    pub pyramid_levels: usize,
    pub corner_tolerance: f64,
    pub residual_cap: f64,
    pub seed_shrink: f64,

    pub template_size: usize,
    pub rotation_step: f64,

    pub energy: f64,
    pub d_max: usize,
    pub t: usize,

    /// Template-removal fractions for `sweep`.
    pub sweep_fractions: Vec<f64>,

    pub fixture: FixtureConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let d = DetectConfig::default();
        let k = TrackConfig::default();
        let r = RecognitionConfig::default();
        Self {
            seed: 1,
            diff_threshold: d.diff_threshold,
            morph_radius: d.morph_radius,
            close_radius: d.close_radius,
            min_area: d.min_area,
            persistence: d.persistence,
            registration_dof: 4,
            refine_seed: true,
            lk_max_iterations: k.lk.max_iterations,
            pyramid_levels: k.lk.pyramid_levels,
            corner_tolerance: k.lk.corner_tolerance,
            residual_cap: k.lk.residual_cap,
            seed_shrink: k.seed_shrink,
            template_size: r.template_size,
            rotation_step: r.rotation_step,
            energy: r.subspace.energy,
            d_max: r.subspace.d_max,
            t: r.t,
            sweep_fractions: vec![0.0, 0.2, 0.4, 0.6, 0.8],
            fixture: FixtureConfig::default(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::ConfigInvalid(msg.into())
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| invalid(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(invalid(format!("{name} = {v} must lie in (0, 1)")))
            }
        };
        let positive = |name: &str, v: usize| {
            if v > 0 {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be at least 1")))
            }
        };
        unit("diff_threshold", self.diff_threshold)?;
        positive("morph_radius", self.morph_radius)?;
        positive("min_area", self.min_area)?;
        positive("persistence", self.persistence)?;
        if self.registration_dof != 4 && self.registration_dof != 6 {
            return Err(invalid(format!(
                "registration_dof = {} must be 4 or 6",
                self.registration_dof
            )));
        }
        positive("lk_max_iterations", self.lk_max_iterations)?;
        if !(1..=8).contains(&self.pyramid_levels) {
            return Err(invalid(format!(
                "pyramid_levels = {} must lie in 1..=8",
                self.pyramid_levels
            )));
        }
        if !(self.corner_tolerance > 0.0 && self.corner_tolerance.is_finite()) {
            return Err(invalid("corner_tolerance must be positive"));
        }
        if !(self.residual_cap > 0.0 && self.residual_cap.is_finite()) {
            return Err(invalid("residual_cap must be positive"));
        }
        if !(self.seed_shrink > 0.0 && self.seed_shrink <= 1.0) {
            return Err(invalid("seed_shrink must lie in (0, 1]"));
        }
        if !(8..=512).contains(&self.template_size) {
            return Err(invalid(format!(
                "template_size = {} must lie in 8..=512",
                self.template_size
            )));
        }
        view_count(self.rotation_step).map_err(|e| invalid(format!("rotation_step: {e}")))?;
        if !(self.energy > 0.0 && self.energy <= 1.0) {
            return Err(invalid(format!(
                "energy = {} must lie in (0, 1]",
                self.energy
            )));
        }
        positive("d_max", self.d_max)?;
        positive("t", self.t)?;
        if let Some(f) = self
            .sweep_fractions
            .iter()
            .find(|f| !(0.0..1.0).contains(*f))
        {
            return Err(invalid(format!("sweep fraction {f} outside [0, 1)")));
        }
        let f = &self.fixture;
        if f.n_targets < 2 || f.bursts_per_target == 0 || f.frames < 2 {
            return Err(invalid("fixture needs 2+ targets, 1+ bursts and 2+ frames"));
        }
        Ok(())
    }

    pub fn detect_config(&self) -> DetectConfig {
        DetectConfig {
            diff_threshold: self.diff_threshold,
            morph_radius: self.morph_radius,
            close_radius: self.close_radius,
            min_area: self.min_area,
            persistence: self.persistence,
            registration: RegistrationConfig {
                model: if self.registration_dof == 6 {
                    MotionModel::Affine
                } else {
                    MotionModel::Similarity
                },
                ..RegistrationConfig::default()
            },
            ..DetectConfig::default()
        }
    }

    pub fn track_config(&self) -> TrackConfig {
        TrackConfig {
            lk: LkConfig {
                max_iterations: self.lk_max_iterations,
                pyramid_levels: self.pyramid_levels,
                corner_tolerance: self.corner_tolerance,
                residual_cap: self.residual_cap,
                ..LkConfig::default()
            },
            template_size: self.template_size,
            seed_shrink: self.seed_shrink,
            ..TrackConfig::default()
        }
    }

    pub fn recognition_config(&self) -> RecognitionConfig {
        RecognitionConfig {
            subspace: SubspaceConfig {
                energy: self.energy,
                d_max: self.d_max,
                ..SubspaceConfig::default()
            },
            t: self.t,
            template_size: self.template_size,
            rotation_step: self.rotation_step,
        }
    }

    pub fn fixture_config(&self) -> FixtureConfig {
        FixtureConfig {
            seed: self.seed,
            ..self.fixture.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(
            PipelineConfig::from_toml("").unwrap(),
            PipelineConfig::default()
        );
    }

    #[test]
    fn defaults_round_trip() {
        let c = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(
            PipelineConfig::from_toml("diff_treshold = 0.2"),
            Err(CliError::ConfigInvalid(_))
        ));
        assert!(matches!(
            PipelineConfig::from_toml("[fixture]\ncolour = 3"),
            Err(CliError::ConfigInvalid(_))
        ));
    }

    #[test]
    fn ranges_checked() {
        for bad in [
            "diff_threshold = 1.5",
            "registration_dof = 5",
            "rotation_step = 7.0",
            "energy = 0.0",
            "t = 0",
            "pyramid_levels = 0",
        ] {
            assert!(
                matches!(
                    PipelineConfig::from_toml(bad),
                    Err(CliError::ConfigInvalid(_))
                ),
                "{bad}"
            );
        }
    }

    #[test]
    fn stage_configs_follow_keys() {
        let c = PipelineConfig::from_toml(
            "registration_dof = 6\nt = 2\nenergy = 0.9\nlk_max_iterations = 12",
        )
        .unwrap();
        assert_eq!(c.detect_config().registration.model, MotionModel::Affine);
        assert_eq!(c.recognition_config().t, 2);
        assert_eq!(c.recognition_config().subspace.energy, 0.9);
        assert_eq!(c.track_config().lk.max_iterations, 12);
    }
}
