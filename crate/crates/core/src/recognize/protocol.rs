//! Burst-level evaluation protocols.
//!
//! Every tracking burst is one unit of data. A query burst is matched against
//! a gallery in which its own label is rebuilt without it, so no frame of the
//! query ever contributes to the model it is compared with.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::confusion::ConfusionMatrix;
use super::gallery::{views_matrix, MatchReport, RecognitionConfig};
use crate::error::{Error, Result};
use crate::imgcore::Image;
use crate::subspace::{canonical_correlations, estimate_from_matrix, similarity, Subspace};

/// Re-warped templates of one burst, before augmentation.
#[derive(Clone, Debug)]
pub struct BurstSamples {
    pub label: String,
    pub burst_id: String,
    pub templates: Vec<Image>,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    /// One report per query burst, in input order, with its true label.
    pub reports: Vec<(String, MatchReport)>,
    pub confusion: ConfusionMatrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub fraction_removed: f64,
    pub recognition_rate: f64,
    pub correct: usize,
    pub total: usize,
}

pub fn labels_of(bursts: &[BurstSamples]) -> Vec<String> {
    let mut labels: Vec<String> = bursts.iter().map(|b| b.label.clone()).collect();
    labels.sort();
    labels.dedup();
    labels
}

fn check(bursts: &[BurstSamples], cfg: &RecognitionConfig) -> Result<Vec<String>> {
    cfg.validate()?;
    let labels = labels_of(bursts);
    if labels.is_empty() {
        return Err(Error::EmptyGallery);
    }
    for l in &labels {
        let n = bursts.iter().filter(|b| &b.label == l).count();
        if n < 2 {
            return Err(Error::InsufficientSamples { needed: 2, got: n });
        }
    }
    let size = cfg.template_size;
    for b in bursts {
        if b.templates.is_empty() {
            return Err(Error::InsufficientSamples { needed: 1, got: 0 });
        }
        if let Some(t) = b.templates.iter().find(|t| t.dims() != (size, size)) {
            return Err(Error::ConfigMismatch(format!(
                "burst {} has a {}x{} template, expected {size}x{size}",
                b.burst_id,
                t.width(),
                t.height()
            )));
        }
    }
    Ok(labels)
}

/// Subspace of the augmented views of the selected templates of several bursts.
fn pooled_subspace(
    parts: &[(&BurstSamples, &[usize])],
    cfg: &RecognitionConfig,
    source: &str,
) -> Result<Subspace> {
    let templates: Vec<&Image> = parts
        .iter()
        .flat_map(|(b, idx)| idx.iter().map(move |&i| &b.templates[i]))
        .collect();
    let x: DMatrix<f64> = views_matrix(&templates, cfg.rotation_step)?;
    estimate_from_matrix(x, &cfg.subspace, source)
}

struct Models {
    /// Per label, from every burst of the label.
    full: Vec<Subspace>,
    /// Per burst, its label's model without that burst.
    reduced: Vec<Subspace>,
}

fn build_models(
    bursts: &[BurstSamples],
    labels: &[String],
    selection: &[Vec<usize>],
    cfg: &RecognitionConfig,
) -> Result<Models> {
    let full = labels
        .par_iter()
        .map(|l| {
            let parts: Vec<(&BurstSamples, &[usize])> = bursts
                .iter()
                .zip(selection)
                .filter(|(b, _)| &b.label == l)
                .map(|(b, s)| (b, s.as_slice()))
                .collect();
            pooled_subspace(&parts, cfg, l)
        })
        .collect::<Result<Vec<_>>>()?;
    let reduced = (0..bursts.len())
        .into_par_iter()
        .map(|q| {
            let parts: Vec<(&BurstSamples, &[usize])> = bursts
                .iter()
                .zip(selection)
                .enumerate()
                .filter(|(i, (b, _))| *i != q && b.label == bursts[q].label)
                .map(|(_, (b, s))| (b, s.as_slice()))
                .collect();
            pooled_subspace(
                &parts,
                cfg,
                &format!("{} without {}", bursts[q].label, bursts[q].burst_id),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Models { full, reduced })
}

fn query_subspaces(bursts: &[BurstSamples], cfg: &RecognitionConfig) -> Result<Vec<Subspace>> {
    bursts
        .par_iter()
        .map(|b| {
            let all: Vec<usize> = (0..b.templates.len()).collect();
            pooled_subspace(&[(b, &all)], cfg, &b.burst_id)
        })
        .collect()
}

fn evaluate_with(
    bursts: &[BurstSamples],
    labels: &[String],
    models: &Models,
    queries: &[Subspace],
    cfg: &RecognitionConfig,
) -> Result<Evaluation> {
    let reports = bursts
        .par_iter()
        .enumerate()
        .map(|(q, b)| {
            let scores = labels
                .iter()
                .enumerate()
                .map(|(li, l)| {
                    let model = if *l == b.label {
                        &models.reduced[q]
                    } else {
                        &models.full[li]
                    };
                    Ok((
                        l.clone(),
                        similarity(&canonical_correlations(model, &queries[q])?, cfg.t),
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((b.label.clone(), MatchReport::new(&b.burst_id, scores)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut confusion = ConfusionMatrix::new(labels.iter().cloned());
    for (truth, r) in &reports {
        confusion.record(truth, &r.decision)?;
    }
    Ok(Evaluation { reports, confusion })
}

/// Leave-one-burst-out identification of every burst.
pub fn leave_one_burst_out(bursts: &[BurstSamples], cfg: &RecognitionConfig) -> Result<Evaluation> {
    let labels = check(bursts, cfg)?;
    let selection: Vec<Vec<usize>> = bursts
        .iter()
        .map(|b| (0..b.templates.len()).collect())
        .collect();
    let models = build_models(bursts, &labels, &selection, cfg)?;
    let queries = query_subspaces(bursts, cfg)?;
    evaluate_with(bursts, &labels, &models, &queries, cfg)
}

/// Templates kept from a burst of `n` when `fraction` of them is removed.
pub fn kept_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * (1.0 - fraction)).round() as usize).clamp(1, n.max(1))
}

/// Uniform template subsample of each burst, seeded by `(seed, fraction, burst)`.
pub fn subsample(bursts: &[BurstSamples], fraction: f64, seed: u64) -> Vec<Vec<usize>> {
    bursts
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let n = b.templates.len();
            let keep = kept_count(n, fraction);
            if keep == n {
                return (0..n).collect();
            }
            let mix = seed
                ^ fraction.to_bits().rotate_left(17)
                ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
            let mut rng = ChaCha8Rng::seed_from_u64(mix);
            let mut idx = sample(&mut rng, n, keep).into_vec();
            idx.sort_unstable();
            idx
        })
        .collect()
}

/// Recognition rate as training templates are removed. Query bursts always
/// use all their templates; only the models they are compared with shrink.
pub fn data_reduction_sweep(
    bursts: &[BurstSamples],
    fractions: &[f64],
    cfg: &RecognitionConfig,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    let labels = check(bursts, cfg)?;
    if let Some(f) = fractions.iter().find(|f| !(0.0..1.0).contains(*f)) {
        return Err(Error::InvalidArgument(format!(
            "fraction {f} outside [0, 1)"
        )));
    }
    let queries = query_subspaces(bursts, cfg)?;
    let mut out = Vec::with_capacity(fractions.len());
    for &f in fractions {
        let selection = subsample(bursts, f, seed);
        let models = build_models(bursts, &labels, &selection, cfg)?;
        let eval = evaluate_with(bursts, &labels, &models, &queries, cfg)?;
        log::info!(
            "fraction {f}: rate {:.3}",
            eval.confusion.recognition_rate()
        );
        out.push(SweepPoint {
            fraction_removed: f,
            recognition_rate: eval.confusion.recognition_rate(),
            correct: eval.confusion.correct(),
            total: eval.confusion.total(),
        });
    }
    Ok(out)
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut s = String::from("fraction_removed,recognition_rate\n");
    for p in points {
        s.push_str(&format!(
            "{},{:.6}\n",
            p.fraction_removed, p.recognition_rate
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(seed: f64, jitter: f64) -> Image {
        Image::from_fn(20, 20, |x, y| {
            let (x, y) = (x as f64, y as f64);
            0.5 + 0.2 * (seed * 0.3 * x + jitter).sin() * (0.25 * y * seed).cos()
                + 0.1 * (0.2 * (x - y) + seed).sin()
        })
    }

    fn dataset() -> Vec<BurstSamples> {
        let mut out = Vec::new();
        for (label, seed) in [("a", 1.0), ("b", 1.6), ("c", 2.4)] {
            for burst in 0..3 {
                let templates = (0..4)
                    .map(|k| pattern(seed, 0.01 * (burst * 4 + k) as f64))
                    .collect();
                out.push(BurstSamples {
                    label: label.into(),
                    burst_id: format!("{label}-{burst}"),
                    templates,
                });
            }
        }
        out
    }

    fn config() -> RecognitionConfig {
        RecognitionConfig {
            template_size: 20,
            rotation_step: 45.0,
            ..Default::default()
        }
    }

    #[test]
    fn separable_dataset_is_recognized() {
        let e = leave_one_burst_out(&dataset(), &config()).unwrap();
        assert_eq!(e.confusion.recognition_rate(), 1.0);
        assert_eq!(e.reports.len(), 9);
        for l in 0..3 {
            assert_eq!(e.confusion.row_total(l), 3);
        }
    }

    #[test]
    fn zero_fraction_matches_full_evaluation() {
        let data = dataset();
        let full = leave_one_burst_out(&data, &config()).unwrap();
        let sweep = data_reduction_sweep(&data, &[0.0, 0.5, 0.99], &config(), 3).unwrap();
        assert_eq!(sweep[0].recognition_rate, full.confusion.recognition_rate());
        assert_eq!(sweep.len(), 3);
        assert!(sweep_csv(&sweep).starts_with("fraction_removed,recognition_rate\n0,"));
    }

    #[test]
    fn subsample_sizes_and_determinism() {
        let data = dataset();
        let a = subsample(&data, 0.5, 9);
        assert!(a.iter().all(|s| s.len() == 2));
        assert_eq!(a, subsample(&data, 0.5, 9));
        assert!(subsample(&data, 0.99, 9).iter().all(|s| s.len() == 1));
        assert_eq!(kept_count(12, 0.4), 7);
    }

    #[test]
    fn single_burst_label_rejected() {
        let mut data = dataset();
        data.truncate(7);
        assert!(matches!(
            leave_one_burst_out(&data, &config()),
            Err(Error::InsufficientSamples { .. })
        ));
    }
}
