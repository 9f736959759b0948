use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::Image;

/// Norm below which a data matrix counts as having no variation.
pub const ZERO_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubspaceConfig {
    /// Fraction of the centred data's energy the basis must retain.
    pub energy: f64,
    pub d_max: usize,
    /// Subtract the sample mean before the decomposition.
    pub center: bool,
    /// Largest `min(ambient, samples)` decomposed exactly; bigger problems use
    /// seeded randomized subspace iteration.
    pub exact_limit: usize,
    pub oversampling: usize,
    pub power_iterations: usize,
    pub seed: u64,
}

impl Default for SubspaceConfig {
    fn default() -> Self {
        Self {
            energy: 0.95,
            d_max: 10,
            center: true,
            exact_limit: 400,
            oversampling: 10,
            power_iterations: 5,
            seed: 0x5eed,
        }
    }
}

impl SubspaceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.energy > 0.0 && self.energy <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "energy {} outside (0, 1]",
                self.energy
            )));
        }
        if self.d_max == 0 {
            return Err(Error::InvalidArgument("d_max must be at least 1".into()));
        }
        Ok(())
    }
}

/// Orthonormal basis of a linear appearance manifold.
#[derive(Clone, Debug, PartialEq)]
pub struct Subspace {
    /// `N x d`, orthonormal columns.
    pub basis: DMatrix<f64>,
    pub mean: Option<DVector<f64>>,
    /// Fraction of the (centred) sample energy captured by the basis.
    pub energy: f64,
    pub samples: usize,
    pub source: String,
}

impl Subspace {
    /// Wraps a basis after orthonormalizing it; columns in its span are dropped.
    pub fn from_basis(basis: DMatrix<f64>, source: &str) -> Result<Self> {
        let mut basis = basis;
        let rank = orthonormalize(&mut basis);
        if rank == 0 {
            return Err(Error::RankDeficient);
        }
        let basis = basis.columns(0, rank).into_owned();
        Ok(Self {
            basis,
            mean: None,
            energy: 1.0,
            samples: rank,
            source: source.to_string(),
        })
    }

    pub fn ambient(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Squared distance of `v` from its projection onto the affine or linear manifold.
    pub fn residual_norm(&self, v: &DVector<f64>) -> f64 {
        let centred = match &self.mean {
            Some(m) => v - m,
            None => v.clone(),
        };
        let coeffs = self.basis.tr_mul(&centred);
        (centred - &self.basis * coeffs).norm()
    }

    /// Largest deviation of `BᵀB` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.basis.tr_mul(&self.basis);
        let mut worst: f64 = 0.0;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }
}

/// Vectorizes images row-major into the columns of a matrix.
pub fn data_matrix(samples: &[Image]) -> Result<DMatrix<f64>> {
    let first = samples
        .first()
        .ok_or(Error::InsufficientSamples { needed: 2, got: 0 })?;
    let n = first.width() * first.height();
    let mut x = DMatrix::zeros(n, samples.len());
    for (j, s) in samples.iter().enumerate() {
        first.ensure_same_dims(s)?;
        x.column_mut(j).copy_from_slice(s.data());
    }
    Ok(x)
}

pub fn estimate_subspace(
    samples: &[Image],
    cfg: &SubspaceConfig,
    source: &str,
) -> Result<Subspace> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    estimate_from_matrix(data_matrix(samples)?, cfg, source)
}

/// Subspace of the columns of `x` (one sample per column).
pub fn estimate_from_matrix(
    mut x: DMatrix<f64>,
    cfg: &SubspaceConfig,
    source: &str,
) -> Result<Subspace> {
    cfg.validate()?;
    let (n, m) = x.shape();
    if m < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: m });
    }
    let mean = if cfg.center {
        let mean = x.column_mean();
        for mut c in x.column_iter_mut() {
            c -= &mean;
        }
        Some(mean)
    } else {
        None
    };
    let total = x.norm_squared();
    if total.sqrt() < ZERO_TOLERANCE {
        return Err(Error::RankDeficient);
    }
    let want = cfg.d_max.min(n).min(m);
    let (mut u, sq) = if n.min(m) <= cfg.exact_limit {
        exact_leading(&x, want)
    } else {
        randomized_leading(&x, want, cfg)
    };
    // keep only genuine directions
    let floor = (ZERO_TOLERANCE * ZERO_TOLERANCE).max(sq.first().copied().unwrap_or(0.0) * 1e-24);
    let usable = sq.iter().take_while(|&&s| s > floor).count().min(want);
    if usable == 0 {
        return Err(Error::RankDeficient);
    }
    let mut d = usable;
    let mut acc = 0.0;
    for (i, s) in sq.iter().take(usable).enumerate() {
        acc += s;
        if acc >= (cfg.energy - 1e-12) * total {
            d = i + 1;
            break;
        }
    }
    let retained: f64 = sq.iter().take(d).sum::<f64>() / total;
    let mut basis = u.columns(0, d).into_owned();
    orthonormalize(&mut basis);
    orthonormalize(&mut basis);
    u = basis;
    Ok(Subspace {
        basis: u,
        mean,
        energy: retained.min(1.0),
        samples: m,
        source: source.to_string(),
    })
}

/// Leading left singular vectors and squared singular values, descending.
fn exact_leading(x: &DMatrix<f64>, want: usize) -> (DMatrix<f64>, Vec<f64>) {
    let (n, m) = x.shape();
    if m <= n {
        // Gram matrix of the samples; U = X V Σ⁻¹
        let g = x.tr_mul(x);
        let eig = SymmetricEigen::new(g);
        let order = descending(eig.eigenvalues.as_slice());
        let mut u = DMatrix::zeros(n, want);
        let mut sq = Vec::with_capacity(want);
        for (k, &i) in order.iter().take(want).enumerate() {
            let lambda = eig.eigenvalues[i].max(0.0);
            sq.push(lambda);
            if lambda > 0.0 {
                let col = x * eig.eigenvectors.column(i) / lambda.sqrt();
                u.set_column(k, &col);
            }
        }
        (u, sq)
    } else {
        let g = x * x.transpose();
        let eig = SymmetricEigen::new(g);
        let order = descending(eig.eigenvalues.as_slice());
        let mut u = DMatrix::zeros(n, want);
        let mut sq = Vec::with_capacity(want);
        for (k, &i) in order.iter().take(want).enumerate() {
            sq.push(eig.eigenvalues[i].max(0.0));
            u.set_column(k, &eig.eigenvectors.column(i));
        }
        (u, sq)
    }
}

fn randomized_leading(
    x: &DMatrix<f64>,
    want: usize,
    cfg: &SubspaceConfig,
) -> (DMatrix<f64>, Vec<f64>) {
    let (n, m) = x.shape();
    let block = (want + cfg.oversampling).min(n).min(m);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let omega = DMatrix::from_fn(m, block, |_, _| StandardNormal.sample(&mut rng));
    let mut q = x * omega;
    orthonormalize(&mut q);
    for _ in 0..cfg.power_iterations {
        let mut z = x.tr_mul(&q);
        orthonormalize(&mut z);
        q = x * z;
        orthonormalize(&mut q);
    }
    // B = Qᵀ X is small; its left singular vectors rotate Q onto the leading directions
    let b = q.tr_mul(x);
    let bbt = &b * b.transpose();
    let eig = SymmetricEigen::new(bbt);
    let order = descending(eig.eigenvalues.as_slice());
    let mut u = DMatrix::zeros(n, want);
    let mut sq = Vec::with_capacity(want);
    for (k, &i) in order.iter().take(want).enumerate() {
        sq.push(eig.eigenvalues[i].max(0.0));
        u.set_column(k, &(&q * eig.eigenvectors.column(i)));
    }
    (u, sq)
}

fn descending(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

/// Modified Gram-Schmidt in place. Columns that vanish against the earlier
/// ones are zeroed and moved to the end; returns the number kept.
pub fn orthonormalize(a: &mut DMatrix<f64>) -> usize {
    let cols = a.ncols();
    let scale = a.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut kept = 0;
    for j in 0..cols {
        let mut v = a.column(j).into_owned();
        for i in 0..kept {
            let qi = a.column(i);
            let r = qi.dot(&v);
            v.axpy(-r, &qi, 1.0);
        }
        let norm = v.norm();
        if norm > 1e-10 * scale.max(f64::MIN_POSITIVE) {
            a.set_column(kept, &(v / norm));
            kept += 1;
        }
    }
    for j in kept..cols {
        a.column_mut(j).fill(0.0);
    }
    kept
}
