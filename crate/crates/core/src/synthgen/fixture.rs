//! Labeled multi-target dataset for end-to-end recognition runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scene::{ObjectSpec, SceneScript, Shape, Trajectory};
use super::texture::{disc_correlation, Background, Texture, TextureParams};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureConfig {
    pub seed: u64,
    pub n_targets: usize,
    pub bursts_per_target: usize,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub noise_sigma: f64,
    /// Object radius range in pixels; the box diagonal is `2 sqrt(2) r`.
    pub radius: (f64, f64),
    /// Object speed over the ground, pixels per frame.
    pub speed: (f64, f64),
    /// Largest object spin, radians per frame.
    pub max_spin: f64,
    /// Make the last two targets near-duplicates of each other.
    pub similar_pair: bool,
    /// Share of texture elements the similar target redraws.
    pub similar_share: f64,
    /// Pairwise correlation every two targets must stay below.
    pub max_correlation: f64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            n_targets: 6,
            bursts_per_target: 5,
            frames: 12,
            width: 1360,
            height: 1024,
            noise_sigma: 0.005,
            radius: (50.0, 66.0),
            speed: (3.0, 6.0),
            max_spin: 0.03,
            similar_pair: true,
            similar_share: 0.5,
            max_correlation: 0.8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub label: String,
    pub shape: Shape,
    pub texture: Texture,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledBurst {
    pub label: String,
    pub burst_id: String,
    pub script: SceneScript,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecognitionFixture {
    pub config: FixtureConfig,
    pub targets: Vec<TargetSpec>,
    /// Target-major order: every burst of `target-1`, then `target-2`, ...
    pub bursts: Vec<LabeledBurst>,
    pub similar_pair: Option<(String, String)>,
    /// Largest pairwise texture correlation among the targets.
    pub max_pair_correlation: f64,
}

pub fn target_label(i: usize) -> String {
    format!("target-{}", i + 1)
}

/// Default fixture with the given size.
pub fn make_recognition_fixture(
    seed: u64,
    n_targets: usize,
    bursts_per_target: usize,
) -> Result<RecognitionFixture> {
    make_fixture(&FixtureConfig {
        seed,
        n_targets,
        bursts_per_target,
        ..FixtureConfig::default()
    })
}

const CORRELATION_GRID: usize = 64;
const MAX_DRAWS: usize = 64;

pub fn make_fixture(cfg: &FixtureConfig) -> Result<RecognitionFixture> {
    if cfg.n_targets < 2 {
        return Err(Error::InvalidArgument(
            "a fixture needs at least two targets".into(),
        ));
    }
    if cfg.bursts_per_target == 0 || cfg.frames < 2 {
        return Err(Error::InvalidArgument(
            "bursts and frames must be positive".into(),
        ));
    }
    if !(cfg.radius.0 > 0.0 && cfg.radius.0 <= cfg.radius.1)
        || !(cfg.speed.0 >= 0.0 && cfg.speed.0 <= cfg.speed.1)
    {
        return Err(Error::InvalidArgument(
            "radius and speed ranges must be ordered and positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut targets: Vec<TargetSpec> = Vec::with_capacity(cfg.n_targets);
    let similar = cfg.similar_pair && cfg.n_targets >= 3;
    for i in 0..cfg.n_targets {
        let radius = rng.random_range(cfg.radius.0..=cfg.radius.1);
        let params = TextureParams {
            mean: rng.random_range(0.62..0.78),
            extent: radius,
            ..TextureParams::default()
        };
        let twin = (similar && i == cfg.n_targets - 1).then(|| &targets[i - 1]);
        let mut accepted = None;
        for _ in 0..MAX_DRAWS {
            let texture = match twin {
                Some(t) => t.texture.perturbed(&mut rng, &params, cfg.similar_share),
                None => Texture::random(&mut rng, &params),
            };
            if targets
                .iter()
                .all(|t| correlation(t, &texture, radius) < cfg.max_correlation)
            {
                accepted = Some(texture);
                break;
            }
        }
        let texture = accepted.ok_or_else(|| {
            Error::InvalidArgument(format!(
                "no texture for {} below correlation {}",
                target_label(i),
                cfg.max_correlation
            ))
        })?;
        let radius = twin.map_or(radius, |t| t.shape.half_extent().0);
        targets.push(TargetSpec {
            label: target_label(i),
            shape: Shape::Disc { radius },
            texture,
        });
    }
    let mut max_pair = f64::NEG_INFINITY;
    for (i, a) in targets.iter().enumerate() {
        for b in &targets[i + 1..] {
            max_pair = max_pair.max(correlation(a, &b.texture, b.shape.half_extent().0));
        }
    }

    let mut bursts = Vec::with_capacity(cfg.n_targets * cfg.bursts_per_target);
    for (ti, t) in targets.iter().enumerate() {
        for b in 0..cfg.bursts_per_target {
            let seed = burst_seed(cfg.seed, ti, b);
            bursts.push(LabeledBurst {
                label: t.label.clone(),
                burst_id: format!("{}-b{}", t.label, b + 1),
                script: burst_script(cfg, t, seed),
            });
        }
    }
    Ok(RecognitionFixture {
        config: cfg.clone(),
        similar_pair: similar.then(|| {
            (
                target_label(cfg.n_targets - 2),
                target_label(cfg.n_targets - 1),
            )
        }),
        targets,
        bursts,
        max_pair_correlation: max_pair,
    })
}

fn correlation(a: &TargetSpec, b: &Texture, radius: f64) -> f64 {
    disc_correlation(
        &a.texture,
        b,
        radius.min(a.shape.half_extent().0),
        CORRELATION_GRID,
    )
}

fn burst_seed(seed: u64, target: usize, burst: usize) -> u64 {
    let mut h = seed ^ 0x243f_6a88_85a3_08d3;
    for v in [target as u64, burst as u64] {
        h = (h ^ v).wrapping_mul(0x1000_0000_01b3).rotate_left(29) ^ 0x9e37_79b9_7f4a_7c15;
    }
    h
}

/// One flyover: a slowly panning camera and the target crossing part of the frame.
fn burst_script(cfg: &FixtureConfig, target: &TargetSpec, seed: u64) -> SceneScript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bg_mean = rng.random_range(0.28..0.4);
    let background = Background::random(&mut rng, bg_mean, 0.05, 80.0, 320.0, 6);

    let pan_dir = rng.random_range(0.0..std::f64::consts::TAU);
    let pan = rng.random_range(0.5..2.0);
    let camera = Trajectory {
        origin: (rng.random_range(0.0..400.0), rng.random_range(0.0..400.0)),
        velocity: (pan * pan_dir.cos(), pan * pan_dir.sin()),
        theta0: 0.0,
        omega: rng.random_range(-0.002..=0.002),
        growth: (0.0, 0.0),
        shear: 0.0,
    };

    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let r = target.shape.half_extent().0;
    // image motion combines the target's ground motion and the pan
    let span = (cfg.speed.1 + pan) * cfg.frames as f64 + 2.0 * r;
    let margin_x = (span + 10.0).min(0.45 * w);
    let margin_y = (span + 10.0).min(0.45 * h);
    let start = (
        rng.random_range(margin_x..=w - margin_x),
        rng.random_range(margin_y..=h - margin_y),
    );
    let dir = rng.random_range(0.0..std::f64::consts::TAU);
    let speed = rng.random_range(cfg.speed.0..=cfg.speed.1);
    let origin = camera.at(0).apply(start.0, start.1);
    let object = Trajectory {
        origin,
        velocity: (speed * dir.cos(), speed * dir.sin()),
        theta0: rng.random_range(0.0..std::f64::consts::TAU),
        omega: rng.random_range(-cfg.max_spin..=cfg.max_spin),
        growth: (0.0, 0.0),
        shear: 0.0,
    };

    SceneScript {
        seed,
        width: cfg.width,
        height: cfg.height,
        background,
        object: ObjectSpec {
            shape: target.shape,
            texture: target.texture.clone(),
            edge_softness: 1.0,
        },
        camera: camera.warps(cfg.frames),
        object_poses: object.warps(cfg.frames),
        noise_sigma: cfg.noise_sigma,
    }
}
