//! Exact rejection sampling against the uniform law, and sample-set CSV I/O.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::DensityModel;
use crate::error::{Error, Result};
use crate::torus::TorusGeometry;

/// Relative safety margin on the sup-norm envelope.
pub const ENVELOPE_MARGIN: f64 = 1.000001;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    geometry: TorusGeometry,
    points: Vec<f64>,
    seed: u64,
    acceptance_rate: f64,
}

impl SampleSet {
    pub fn new(geometry: TorusGeometry, points: Vec<f64>, seed: u64) -> Result<Self> {
        let d = geometry.dim();
        if !points.len().is_multiple_of(d) {
            return Err(Error::Incompatible(format!(
                "{} coordinates do not split into points of dimension {d}",
                points.len()
            )));
        }
        for chunk in points.chunks(d) {
            for (x, &kappa) in chunk.iter().zip(geometry.side_lengths()) {
                if !(0.0..kappa).contains(x) {
                    return Err(Error::Incompatible(format!(
                        "coordinate {x} outside the fundamental domain [0, {kappa})"
                    )));
                }
            }
        }
        Ok(Self {
            geometry,
            points,
            seed,
            acceptance_rate: 1.0,
        })
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geometry
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.geometry.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.geometry.dim();
        &self.points[i * d..(i + 1) * d]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks(self.geometry.dim())
    }

    pub fn coords(&self) -> &[f64] {
        &self.points
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.acceptance_rate
    }

    /// Split into the first `n1` points and the remainder.
    pub fn split_at(&self, n1: usize) -> (SampleSet, SampleSet) {
        let d = self.geometry.dim();
        let cut = (n1 * d).min(self.points.len());
        let mk = |pts: &[f64]| SampleSet {
            geometry: self.geometry.clone(),
            points: pts.to_vec(),
            seed: self.seed,
            acceptance_rate: self.acceptance_rate,
        };
        (mk(&self.points[..cut]), mk(&self.points[cut..]))
    }

    pub fn subset(&self, indices: &[usize]) -> SampleSet {
        let mut pts = Vec::with_capacity(indices.len() * self.geometry.dim());
        for &i in indices {
            pts.extend_from_slice(self.point(i));
        }
        SampleSet {
            geometry: self.geometry.clone(),
            points: pts,
            seed: self.seed,
            acceptance_rate: self.acceptance_rate,
        }
    }

    /// One row per point with header `x1,…,xd`.
    pub fn to_csv(&self) -> String {
        let d = self.geometry.dim();
        let header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        let mut out = header.join(",");
        out.push('\n');
        for p in self.iter() {
            let row: Vec<String> = p.iter().map(|x| x.to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, geometry: TorusGeometry, seed: u64) -> Result<Self> {
        let d = geometry.dim();
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty sample file".into()))?;
        let expect: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        let got: Vec<&str> = header.split(',').map(str::trim).collect();
        if got != expect.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::Parse(format!("header {header:?}, expected {}", expect.join(","))));
        }
        let mut points = Vec::new();
        for line in lines {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != d {
                return Err(Error::Parse(format!("row {line:?} has {} columns", cols.len())));
            }
            for c in cols {
                points.push(c.parse::<f64>().map_err(|_| Error::Parse(format!("bad coordinate {c:?}")))?);
            }
        }
        Self::new(geometry, points, seed)
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `index`: `mix64(seed ⊕ mix64(index))`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index))
}

/// Draw `n` i.i.d. points from `f` by rejection from the uniform law.
pub fn sample(density: &DensityModel, n: usize, seed: u64) -> Result<SampleSet> {
    let geometry = density.geometry().clone();
    let d = geometry.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n * d);
    let mut x = vec![0.0; d];
    if density.is_constant() {
        for _ in 0..n {
            for (xi, &kappa) in x.iter_mut().zip(geometry.side_lengths()) {
                *xi = rng.random::<f64>() * kappa;
            }
            points.extend_from_slice(&x);
        }
        return Ok(SampleSet {
            geometry,
            points,
            seed,
            acceptance_rate: 1.0,
        });
    }
    // uniform proposal; accept with probability f(x)/sup f
    let envelope = density.sup_bound() * ENVELOPE_MARGIN;
    let mut proposals = 0usize;
    while points.len() < n * d {
        for (xi, &kappa) in x.iter_mut().zip(geometry.side_lengths()) {
            *xi = rng.random::<f64>() * kappa;
        }
        proposals += 1;
        let fx = density.evaluate(&x);
        if fx > envelope {
            return Err(Error::SamplerIntegrity { value: fx, envelope });
        }
        if rng.random::<f64>() * envelope < fx {
            points.extend_from_slice(&x);
        }
    }
    let acceptance_rate = if proposals == 0 { 1.0 } else { n as f64 / proposals as f64 };
    Ok(SampleSet {
        geometry,
        points,
        seed,
        acceptance_rate,
    })
}
