use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::imgcore::Image;

/// One plane wave `amp * sin(kx u + ky v + phase)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    pub kx: f64,
    pub ky: f64,
    pub phase: f64,
    pub amp: f64,
}

/// Soft-edged elliptical spot, signed amplitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decal {
    pub cx: f64,
    pub cy: f64,
    pub rx: f64,
    pub ry: f64,
    pub angle: f64,
    pub amp: f64,
}

/// Band-limited procedural texture plus decals, evaluated analytically in
/// continuous coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    pub mean: f64,
    pub waves: Vec<Wave>,
    pub decals: Vec<Decal>,
    /// Width of the decal edge transition in texture units.
    pub softness: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextureParams {
    pub mean: f64,
    /// Peak amplitude shared among the waves.
    pub contrast: f64,
    pub min_wavelength: f64,
    pub max_wavelength: f64,
    pub waves: usize,
    pub decals: usize,
    pub decal_contrast: f64,
    /// Decals are placed within this radius of the origin.
    pub extent: f64,
}

impl Default for TextureParams {
    fn default() -> Self {
        Self {
            mean: 0.7,
            contrast: 0.3,
            min_wavelength: 6.0,
            max_wavelength: 24.0,
            waves: 12,
            decals: 8,
            decal_contrast: 0.25,
            extent: 60.0,
        }
    }
}

impl Texture {
    pub fn random(rng: &mut impl Rng, p: &TextureParams) -> Self {
        let waves = (0..p.waves).map(|_| random_wave(rng, p)).collect();
        let decals = (0..p.decals).map(|_| random_decal(rng, p)).collect();
        Self {
            mean: p.mean,
            waves,
            decals,
            softness: 1.5,
        }
    }

    /// Value at `(u, v)`, clamped to `[0, 1]`.
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        let mut s = self.mean;
        for w in &self.waves {
            s += w.amp * (w.kx * u + w.ky * v + w.phase).sin();
        }
        for d in &self.decals {
            let (sn, cs) = d.angle.sin_cos();
            let (du, dv) = (u - d.cx, v - d.cy);
            let a = (cs * du + sn * dv) / d.rx;
            let b = (-sn * du + cs * dv) / d.ry;
            // signed distance to the ellipse edge in units of the minor radius
            let rho = (a * a + b * b).sqrt();
            let dist = (rho - 1.0) * d.rx.min(d.ry);
            s += d.amp * smoothstep(0.5 - dist / self.softness);
        }
        s.clamp(0.0, 1.0)
    }

    /// Replaces a share of the waves and decals with fresh random ones.
    pub fn perturbed(&self, rng: &mut impl Rng, p: &TextureParams, share: f64) -> Self {
        let mut t = self.clone();
        for w in &mut t.waves {
            if rng.random_bool(share) {
                *w = random_wave(rng, p);
            }
        }
        for d in &mut t.decals {
            if rng.random_bool(share) {
                *d = random_decal(rng, p);
            }
        }
        t
    }
}

fn random_wave(rng: &mut impl Rng, p: &TextureParams) -> Wave {
    let lambda = rng.random_range(p.min_wavelength..=p.max_wavelength);
    let dir = rng.random_range(0.0..std::f64::consts::TAU);
    let k = std::f64::consts::TAU / lambda;
    Wave {
        kx: k * dir.cos(),
        ky: k * dir.sin(),
        phase: rng.random_range(0.0..std::f64::consts::TAU),
        amp: p.contrast / (p.waves.max(1) as f64).sqrt() * rng.random_range(0.6..1.4),
    }
}

fn random_decal(rng: &mut impl Rng, p: &TextureParams) -> Decal {
    let r = p.extent * rng.random_range(0.0f64..0.8).sqrt();
    let a = rng.random_range(0.0..std::f64::consts::TAU);
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    Decal {
        cx: r * a.cos(),
        cy: r * a.sin(),
        rx: p.extent * rng.random_range(0.08..0.3),
        ry: p.extent * rng.random_range(0.05..0.15),
        angle: rng.random_range(0.0..std::f64::consts::PI),
        amp: sign * p.decal_contrast * rng.random_range(0.6..1.0),
    }
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Smooth low-contrast background, a sum of separable products so a large
/// raster costs one table per axis and component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub mean: f64,
    pub components: Vec<(Wave, Wave)>,
}

impl Background {
    pub fn random(
        rng: &mut impl Rng,
        mean: f64,
        contrast: f64,
        min_wavelength: f64,
        max_wavelength: f64,
        n: usize,
    ) -> Self {
        let mut axis = || {
            let lambda = rng.random_range(min_wavelength..=max_wavelength);
            Wave {
                kx: std::f64::consts::TAU / lambda,
                ky: 0.0,
                phase: rng.random_range(0.0..std::f64::consts::TAU),
                amp: 1.0,
            }
        };
        let mut components = Vec::with_capacity(n);
        for _ in 0..n {
            let mut x = axis();
            let y = axis();
            x.amp = contrast / (n.max(1) as f64).sqrt();
            components.push((x, y));
        }
        Self { mean, components }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let mut s = self.mean;
        for (a, b) in &self.components {
            s += a.amp * (a.kx * x + a.phase).sin() * (b.kx * y + b.phase).sin();
        }
        s.clamp(0.0, 1.0)
    }

    /// Raster of `width x height` whose pixel `(i, j)` holds the value at
    /// world point `(x0 + i, y0 + j)`.
    pub fn rasterize(&self, x0: f64, y0: f64, width: usize, height: usize) -> Image {
        let tables: Vec<(Vec<f64>, Vec<f64>)> = self
            .components
            .iter()
            .map(|(a, b)| {
                let tx = (0..width)
                    .map(|i| a.amp * (a.kx * (x0 + i as f64) + a.phase).sin())
                    .collect();
                let ty = (0..height)
                    .map(|j| (b.kx * (y0 + j as f64) + b.phase).sin())
                    .collect();
                (tx, ty)
            })
            .collect();
        Image::from_fn(width, height, |i, j| {
            let mut s = self.mean;
            for (tx, ty) in &tables {
                s += tx[i] * ty[j];
            }
            s.clamp(0.0, 1.0)
        })
    }
}

/// Pearson correlation of two textures over the disc of radius `r`, sampled
/// on a `n x n` grid.
pub fn disc_correlation(a: &Texture, b: &Texture, r: f64, n: usize) -> f64 {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let u = -r + 2.0 * r * (i as f64 + 0.5) / n as f64;
            let v = -r + 2.0 * r * (j as f64 + 0.5) / n as f64;
            if u * u + v * v <= r * r {
                xs.push(a.eval(u, v));
                ys.push(b.eval(u, v));
            }
        }
    }
    pearson(&xs, &ys)
}

pub(crate) fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}
