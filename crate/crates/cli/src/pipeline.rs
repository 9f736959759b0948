//! Stage wiring shared by the subcommands and the test suites.

use aerorecog_core::augment::rewarp_to_initial;
use aerorecog_core::detect::{
    detect_sequence, find_seed, refine_seed, Detection, SequenceDetections,
};
use aerorecog_core::imgcore::Image;
use aerorecog_core::recognize::BurstSamples;
use aerorecog_core::synthgen::{render, LabeledBurst, RecognitionFixture};
use aerorecog_core::track::{track_burst, BurstTrack};
use aerorecog_core::{Error, Result};

use crate::config::PipelineConfig;

/// Smallest share of the raw seed box the refined box must keep.
const SEED_MIN_OVERLAP: f64 = 0.3;

#[derive(Clone, Debug)]
pub struct BurstOutcome {
    pub detections: SequenceDetections,
    pub seed: Option<Detection>,
    pub track: Option<BurstTrack>,
    /// Tracked patches brought back to the first tracked frame's pose.
    pub templates: Vec<Image>,
}

/// Tracks the first persistent detection of a sequence.
pub fn track_from_seed(
    frames: &[Image],
    seed: &Detection,
    cfg: &PipelineConfig,
) -> Result<(BurstTrack, Vec<Image>)> {
    let track = track_burst(&frames[seed.frame_index..], seed, &cfg.track_config())?;
    let templates = track
        .templates
        .iter()
        .map(rewarp_to_initial)
        .collect::<Result<Vec<_>>>()?;
    Ok((track, templates))
}

/// Detection, seeding, tracking and re-warping of one sequence.
pub fn process_frames(frames: &[Image], cfg: &PipelineConfig) -> Result<BurstOutcome> {
    let dcfg = cfg.detect_config();
    let detections = detect_sequence(frames, &dcfg)?;
    let seed = find_seed(&detections.detections, &dcfg).map(|s| {
        if cfg.refine_seed {
            refine_seed(&detections, &s, SEED_MIN_OVERLAP)
        } else {
            s
        }
    });
    let (track, templates) = match &seed {
        Some(s) => {
            let (t, tpl) = track_from_seed(frames, s, cfg)?;
            (Some(t), tpl)
        }
        None => (None, Vec::new()),
    };
    Ok(BurstOutcome {
        detections,
        seed,
        track,
        templates,
    })
}

pub fn burst_samples(
    label: &str,
    burst_id: &str,
    frames: &[Image],
    cfg: &PipelineConfig,
) -> Result<BurstSamples> {
    let out = process_frames(frames, cfg)?;
    if out.templates.is_empty() {
        return Err(Error::EmptyBurst {
            reason: format!("no persistent detection in {burst_id}"),
        });
    }
    log::info!(
        "{burst_id}: seed at frame {}, {} templates",
        out.seed.as_ref().map_or(0, |s| s.frame_index),
        out.templates.len()
    );
    Ok(BurstSamples {
        label: label.to_string(),
        burst_id: burst_id.to_string(),
        templates: out.templates,
    })
}

/// Renders and processes one fixture burst; the frames are dropped afterwards.
pub fn fixture_burst(b: &LabeledBurst, cfg: &PipelineConfig) -> Result<BurstSamples> {
    let (frames, _) = render(&b.script)?;
    burst_samples(&b.label, &b.burst_id, &frames, cfg)
}

/// Processes the fixture's bursts one after another, so only one burst's
/// frames are held at a time.
pub fn fixture_samples(
    fixture: &RecognitionFixture,
    cfg: &PipelineConfig,
) -> Result<Vec<BurstSamples>> {
    fixture
        .bursts
        .iter()
        .map(|b| fixture_burst(b, cfg))
        .collect()
}
