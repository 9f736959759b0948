use nalgebra::DMatrix;

use super::estimate::Subspace;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalCorrelations {
    /// Cosines of the principal angles, descending, clamped to `[0, 1]`.
    pub cosines: Vec<f64>,
    /// Canonical vectors as columns, when requested.
    pub left_vectors: Option<DMatrix<f64>>,
    pub right_vectors: Option<DMatrix<f64>>,
}

impl CanonicalCorrelations {
    /// Principal angles in radians, ascending.
    pub fn angles(&self) -> Vec<f64> {
        self.cosines.iter().map(|c| c.acos()).collect()
    }
}

pub fn canonical_correlations(a: &Subspace, b: &Subspace) -> Result<CanonicalCorrelations> {
    correlate(&a.basis, &b.basis, false)
}

/// Same as [`canonical_correlations`] with the canonical vector pairs.
pub fn canonical_correlations_with_vectors(
    a: &Subspace,
    b: &Subspace,
) -> Result<CanonicalCorrelations> {
    correlate(&a.basis, &b.basis, true)
}

/// Principal-angle cosines between the column spaces of two orthonormal bases.
pub fn correlate(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    vectors: bool,
) -> Result<CanonicalCorrelations> {
    if a.nrows() != b.nrows() {
        return Err(Error::AmbientMismatch {
            left: a.nrows(),
            right: b.nrows(),
        });
    }
    let d = a.ncols().min(b.ncols());
    if d == 0 {
        return Ok(CanonicalCorrelations {
            cosines: Vec::new(),
            left_vectors: vectors.then(|| DMatrix::zeros(a.nrows(), 0)),
            right_vectors: vectors.then(|| DMatrix::zeros(b.nrows(), 0)),
        });
    }
    let m = a.tr_mul(b);
    let svd = m.svd(vectors, vectors);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .total_cmp(&svd.singular_values[i])
            .then(i.cmp(&j))
    });
    order.truncate(d);
    let cosines = order
        .iter()
        .map(|&i| svd.singular_values[i].clamp(0.0, 1.0))
        .collect();
    let (left_vectors, right_vectors) = if vectors {
        let u = svd.u.as_ref().expect("requested");
        let vt = svd.v_t.as_ref().expect("requested");
        let mut left = DMatrix::zeros(a.nrows(), d);
        let mut right = DMatrix::zeros(b.nrows(), d);
        for (k, &i) in order.iter().enumerate() {
            left.set_column(k, &(a * u.column(i)));
            right.set_column(k, &(b * vt.row(i).transpose()));
        }
        (Some(left), Some(right))
    } else {
        (None, None)
    };
    Ok(CanonicalCorrelations {
        cosines,
        left_vectors,
        right_vectors,
    })
}

/// Mean of the `t` largest cosines; `t` is clamped to `[1, d']`.
pub fn similarity(c: &CanonicalCorrelations, t: usize) -> f64 {
    if c.cosines.is_empty() {
        return 0.0;
    }
    let t = t.clamp(1, c.cosines.len());
    c.cosines[..t].iter().sum::<f64>() / t as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn span(n: usize, axes: &[usize]) -> Subspace {
        let mut m = DMatrix::zeros(n, axes.len());
        for (j, &a) in axes.iter().enumerate() {
            m[(a, j)] = 1.0;
        }
        Subspace::from_basis(m, "axes").unwrap()
    }

    fn random_subspace(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Subspace {
        let m = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        Subspace::from_basis(m, "rand").unwrap()
    }

    fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        m.qr().q()
    }

    #[test]
    fn identical_subspaces_have_unit_cosines() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_subspace(20, 4, &mut rng);
        let c = canonical_correlations(&a, &a).unwrap();
        assert!(c.cosines.iter().all(|v| (v - 1.0).abs() < 1e-10));
        assert_eq!(similarity(&c, 3), c.cosines[..3].iter().sum::<f64>() / 3.0);
    }

    #[test]
    fn axis_aligned_cases() {
        let c = canonical_correlations(&span(4, &[0, 1]), &span(4, &[2, 3])).unwrap();
        assert_eq!(c.cosines, vec![0.0, 0.0]);
        let c = canonical_correlations(&span(4, &[0, 1]), &span(4, &[0, 2])).unwrap();
        assert_eq!(c.cosines, vec![1.0, 0.0]);
    }

    #[test]
    fn ambient_mismatch() {
        let r = canonical_correlations(&span(4, &[0]), &span(5, &[0]));
        assert!(matches!(
            r,
            Err(Error::AmbientMismatch { left: 4, right: 5 })
        ));
    }

    #[test]
    fn similarity_arithmetic() {
        let c = CanonicalCorrelations {
            cosines: vec![1.0, 0.5, 0.0],
            left_vectors: None,
            right_vectors: None,
        };
        assert_eq!(similarity(&c, 2), 0.75);
        assert_eq!(similarity(&c, 10), 0.5);
        let ones = CanonicalCorrelations {
            cosines: vec![1.0; 4],
            left_vectors: None,
            right_vectors: None,
        };
        for t in 1..=4 {
            assert_eq!(similarity(&ones, t), 1.0);
        }
    }

    #[test]
    fn canonical_vectors_satisfy_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_subspace(10, 3, &mut rng);
        let b = random_subspace(10, 4, &mut rng);
        let c = canonical_correlations_with_vectors(&a, &b).unwrap();
        let u = c.left_vectors.unwrap();
        let v = c.right_vectors.unwrap();
        let uu = u.tr_mul(&u);
        let vv = v.tr_mul(&v);
        let uv = u.tr_mul(&v);
        for i in 0..3 {
            for j in 0..3 {
                let delta = if i == j { 1.0 } else { 0.0 };
                assert!((uu[(i, j)] - delta).abs() < 1e-10);
                assert!((vv[(i, j)] - delta).abs() < 1e-10);
                let expected = if i == j { c.cosines[i] } else { 0.0 };
                assert!((uv[(i, j)] - expected).abs() < 1e-10);
            }
        }
    }

    proptest! {
        #[test]
        fn symmetric_and_basis_invariant(seed in any::<u64>(), n in 4usize..12, da in 1usize..4, db in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_subspace(n, da, &mut rng);
            let b = random_subspace(n, db, &mut rng);
            let ab = canonical_correlations(&a, &b).unwrap().cosines;
            let ba = canonical_correlations(&b, &a).unwrap().cosines;
            for (x, y) in ab.iter().zip(&ba) {
                prop_assert!((x - y).abs() < 1e-10);
            }
            let mut a2 = a.clone();
            a2.basis = &a.basis * random_orthogonal(da, &mut rng);
            let mut b2 = b.clone();
            b2.basis = &b.basis * random_orthogonal(db, &mut rng);
            let rotated = canonical_correlations(&a2, &b2).unwrap().cosines;
            for (x, y) in ab.iter().zip(&rotated) {
                prop_assert!((x - y).abs() < 1e-8);
            }
            for w in ab.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
            prop_assert!(ab.iter().all(|c| (0.0..=1.0).contains(c)));
        }

        #[test]
        fn extra_direction_never_lowers_top_cosine(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_subspace(9, 2, &mut rng);
            let b = random_subspace(9, 3, &mut rng);
            let before = canonical_correlations(&a, &b).unwrap().cosines[0];
            let extra = DMatrix::from_fn(9, 1, |_, _| rng.random_range(-1.0..1.0));
            let grown = Subspace::from_basis(
                DMatrix::from_columns(&[a.basis.column(0), a.basis.column(1), extra.column(0)]),
                "grown",
            ).unwrap();
            let after = canonical_correlations(&grown, &b).unwrap().cosines[0];
            prop_assert!(after >= before - 1e-12);
        }

        #[test]
        fn similarity_is_monotone(mut cos in proptest::collection::vec(0.0f64..1.0, 1..6), bump in 0.0f64..0.5, idx in 0usize..6, t in 1usize..6) {
            cos.sort_by(|a, b| b.total_cmp(a));
            let before = similarity(&CanonicalCorrelations { cosines: cos.clone(), left_vectors: None, right_vectors: None }, t);
            let i = idx % cos.len();
            cos[i] = (cos[i] + bump).min(1.0);
            cos.sort_by(|a, b| b.total_cmp(a));
            let after = similarity(&CanonicalCorrelations { cosines: cos, left_vectors: None, right_vectors: None }, t);
            prop_assert!(after >= before - 1e-15);
        }
    }
}
