use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::augment::{rotate, view_count, ViewSet};
use crate::error::{Error, Result};
use crate::imgcore::Image;
use crate::subspace::{
    canonical_correlations, estimate_from_matrix, load_subspace, save_subspace, similarity,
    Subspace, SubspaceConfig,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecognitionConfig {
    pub subspace: SubspaceConfig,
    /// Number of leading canonical correlations averaged into the similarity.
    pub t: usize,
    pub template_size: usize,
    pub rotation_step: f64,
}

impl Default for RecognitionConfig {
    fn default() -> Self {
        Self {
            subspace: SubspaceConfig::default(),
            t: 3,
            template_size: 100,
            rotation_step: 10.0,
        }
    }
}

impl RecognitionConfig {
    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint {
            energy: self.subspace.energy,
            d_max: self.subspace.d_max,
            t: self.t,
            template_size: self.template_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.subspace.validate()?;
        view_count(self.rotation_step)?;
        if self.t == 0 || self.template_size == 0 {
            return Err(Error::InvalidArgument(
                "t and template_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Settings every entry of a gallery was built with.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub energy: f64,
    pub d_max: usize,
    pub t: usize,
    pub template_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub query: String,
    /// `(label, similarity)`, best first; equal similarities in label order.
    pub ranking: Vec<(String, f64)>,
    pub decision: String,
    /// True when the rank-1 similarity was shared with another label.
    pub tie: bool,
}

impl MatchReport {
    pub fn new(query: &str, scores: impl IntoIterator<Item = (String, f64)>) -> Result<Self> {
        let mut ranking: Vec<(String, f64)> = scores.into_iter().collect();
        if ranking.is_empty() {
            return Err(Error::EmptyGallery);
        }
        ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tie = ranking.len() > 1 && ranking[0].1 == ranking[1].1;
        Ok(Self {
            query: query.to_string(),
            decision: ranking[0].0.clone(),
            ranking,
            tie,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Gallery {
    pub config: RecognitionConfig,
    entries: BTreeMap<String, Subspace>,
}

#[derive(Serialize, Deserialize)]
struct GalleryFile {
    fingerprint: Fingerprint,
    config: RecognitionConfig,
    entries: Vec<GalleryEntry>,
}

#[derive(Serialize, Deserialize)]
struct GalleryEntry {
    label: String,
    file: String,
    dim: usize,
}

impl Gallery {
    pub fn new(config: RecognitionConfig) -> Self {
        Self {
            config,
            entries: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn get(&self, label: &str) -> Option<&Subspace> {
        self.entries.get(label)
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.config.fingerprint()
    }

    /// Pools every view of every set and enrolls the resulting subspace.
    pub fn enroll(&mut self, label: &str, views: &[ViewSet]) -> Result<()> {
        if self.entries.contains_key(label) {
            return Err(Error::DuplicateLabel(label.to_string()));
        }
        if views.is_empty() {
            return Err(Error::InsufficientSamples { needed: 1, got: 0 });
        }
        let s = self.subspace_of(views, label)?;
        self.entries.insert(label.to_string(), s);
        Ok(())
    }

    /// Inserts a precomputed subspace.
    pub fn insert(&mut self, label: &str, s: Subspace) -> Result<()> {
        if self.entries.contains_key(label) {
            return Err(Error::DuplicateLabel(label.to_string()));
        }
        if let Some(first) = self.entries.values().next() {
            if first.ambient() != s.ambient() {
                return Err(Error::AmbientMismatch {
                    left: first.ambient(),
                    right: s.ambient(),
                });
            }
        }
        let expected = self.config.template_size * self.config.template_size;
        if s.ambient() != expected {
            return Err(Error::ConfigMismatch(format!(
                "subspace ambient {} but template size implies {expected}",
                s.ambient()
            )));
        }
        self.entries.insert(label.to_string(), s);
        Ok(())
    }

    pub fn identify(&self, query_id: &str, query: &[ViewSet]) -> Result<MatchReport> {
        if self.entries.is_empty() {
            return Err(Error::EmptyGallery);
        }
        let q = self.subspace_of(query, query_id)?;
        self.identify_subspace(query_id, &q)
    }

    pub fn identify_subspace(&self, query_id: &str, q: &Subspace) -> Result<MatchReport> {
        if self.entries.is_empty() {
            return Err(Error::EmptyGallery);
        }
        let scores = self
            .entries
            .iter()
            .map(|(label, s)| {
                Ok((
                    label.clone(),
                    similarity(&canonical_correlations(s, q)?, self.config.t),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        MatchReport::new(query_id, scores)
    }

    fn subspace_of(&self, views: &[ViewSet], source: &str) -> Result<Subspace> {
        let size = self.config.template_size;
        let mut images: Vec<&Image> = Vec::new();
        for set in views {
            for v in &set.views {
                if v.dims() != (size, size) {
                    return Err(Error::ConfigMismatch(format!(
                        "view is {}x{}, gallery expects {size}x{size}",
                        v.width(),
                        v.height()
                    )));
                }
                images.push(v);
            }
        }
        let mut x = DMatrix::zeros(size * size, images.len());
        for (j, img) in images.iter().enumerate() {
            x.column_mut(j).copy_from_slice(img.data());
        }
        estimate_from_matrix(x, &self.config.subspace, source)
    }

    /// Writes `gallery.json` plus one `.ssb` file per entry into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut entries = Vec::new();
        for (i, (label, s)) in self.entries.iter().enumerate() {
            let file = format!("entry_{i:03}.ssb");
            save_subspace(dir.join(&file), s)?;
            entries.push(GalleryEntry {
                label: label.clone(),
                file,
                dim: s.dim(),
            });
        }
        let meta = GalleryFile {
            fingerprint: self.fingerprint(),
            config: self.config.clone(),
            entries,
        };
        let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(dir.join("gallery.json"), json)?;
        Ok(())
    }

    /// Loads a gallery and checks it was built with `expected`.
    pub fn load(dir: impl AsRef<Path>, expected: Option<&RecognitionConfig>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta: GalleryFile = serde_json::from_slice(&std::fs::read(dir.join("gallery.json"))?)
            .map_err(|e| Error::Format(format!("gallery.json: {e}")))?;
        if meta.fingerprint != meta.config.fingerprint() {
            return Err(Error::ConfigMismatch(
                "gallery fingerprint disagrees with its config".into(),
            ));
        }
        if let Some(cfg) = expected {
            if cfg.fingerprint() != meta.fingerprint {
                return Err(Error::ConfigMismatch(format!(
                    "gallery built with {:?}, current config is {:?}",
                    meta.fingerprint,
                    cfg.fingerprint()
                )));
            }
        }
        let mut g = Gallery::new(meta.config);
        for e in meta.entries {
            g.insert(&e.label, load_subspace(dir.join(&e.file))?)?;
        }
        Ok(g)
    }
}

/// Rotation views of each template written as matrix columns, template-major.
pub fn views_matrix(templates: &[&Image], step_degrees: f64) -> Result<DMatrix<f64>> {
    let count = view_count(step_degrees)?;
    let first = templates
        .first()
        .ok_or(Error::InsufficientSamples { needed: 1, got: 0 })?;
    let n = first.width() * first.height();
    let mut x = DMatrix::zeros(n, templates.len() * count);
    for (i, t) in templates.iter().enumerate() {
        first.ensure_same_dims(t)?;
        for k in 0..count {
            let col = i * count + k;
            if k == 0 {
                x.column_mut(col).copy_from_slice(t.data());
            } else {
                x.column_mut(col)
                    .copy_from_slice(rotate(t, k as f64 * step_degrees).data());
            }
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::generate_views;

    fn pattern(seed: f64, size: usize) -> Image {
        Image::from_fn(size, size, |x, y| {
            let (x, y) = (x as f64, y as f64);
            0.5 + 0.2 * (seed * 0.11 * x + 0.3 * seed).sin() * (0.07 * y * seed).cos()
                + 0.1 * (0.05 * (x - y) + seed).sin()
        })
    }

    fn small_config() -> RecognitionConfig {
        RecognitionConfig {
            template_size: 24,
            rotation_step: 30.0,
            ..Default::default()
        }
    }

    fn views(seed: f64) -> Vec<ViewSet> {
        vec![generate_views(&pattern(seed, 24), 30.0, "b").unwrap()]
    }

    #[test]
    fn enroll_and_duplicate() {
        let mut g = Gallery::new(small_config());
        g.enroll("a", &views(1.0)).unwrap();
        assert_eq!(g.len(), 1);
        assert!(matches!(
            g.enroll("a", &views(2.0)),
            Err(Error::DuplicateLabel(_))
        ));
    }

    #[test]
    fn self_match_wins() {
        let mut g = Gallery::new(small_config());
        for (label, seed) in [("a", 1.0), ("b", 1.7), ("c", 2.3)] {
            g.enroll(label, &views(seed)).unwrap();
        }
        let r = g.identify("q", &views(1.7)).unwrap();
        assert_eq!(r.decision, "b");
        assert!((r.ranking[0].1 - 1.0).abs() < 1e-9);
        assert!(r.ranking.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    #[test]
    fn single_entry_always_wins() {
        let mut g = Gallery::new(small_config());
        g.enroll("only", &views(1.0)).unwrap();
        assert_eq!(g.identify("q", &views(3.1)).unwrap().decision, "only");
    }

    #[test]
    fn empty_gallery_and_wrong_size() {
        let g = Gallery::new(small_config());
        assert!(matches!(
            g.identify("q", &views(1.0)),
            Err(Error::EmptyGallery)
        ));
        let mut g = Gallery::new(small_config());
        g.enroll("a", &views(1.0)).unwrap();
        let big = vec![generate_views(&pattern(1.0, 30), 30.0, "b").unwrap()];
        assert!(matches!(
            g.identify("q", &big),
            Err(Error::ConfigMismatch(_))
        ));
    }

    #[test]
    fn ties_are_lexicographic_and_flagged() {
        let r = MatchReport::new(
            "q",
            vec![
                ("zeta".into(), 0.9),
                ("alpha".into(), 0.9),
                ("mid".into(), 0.5),
            ],
        )
        .unwrap();
        assert_eq!(r.decision, "alpha");
        assert!(r.tie);
        let r = MatchReport::new("q", vec![("zeta".into(), 0.95), ("alpha".into(), 0.9)]).unwrap();
        assert_eq!(r.decision, "zeta");
        assert!(!r.tie);
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let mut g = Gallery::new(small_config());
        g.enroll("a", &views(1.0)).unwrap();
        g.enroll("b", &views(2.0)).unwrap();
        g.save(dir.path()).unwrap();
        let back = Gallery::load(dir.path(), Some(&small_config())).unwrap();
        assert_eq!(back.labels().collect::<Vec<_>>(), vec!["a", "b"]);
        assert_eq!(back.get("a"), g.get("a"));
        let other = RecognitionConfig {
            t: 2,
            ..small_config()
        };
        assert!(matches!(
            Gallery::load(dir.path(), Some(&other)),
            Err(Error::ConfigMismatch(_))
        ));
    }

    #[test]
    fn views_matrix_matches_generated_views() {
        let t = pattern(1.3, 24);
        let x = views_matrix(&[&t], 30.0).unwrap();
        let set = generate_views(&t, 30.0, "b").unwrap();
        for (j, v) in set.views.iter().enumerate() {
            assert_eq!(x.column(j).as_slice(), v.data());
        }
    }
}
