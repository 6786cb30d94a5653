//! Fourier-coefficient fields, grid fields and the transform pair between them.
//!
//! Coefficients follow `u_k = ∫ u(x) e^{-iω_k·x} dx`, so that
//! `u(x) = vol⁻¹ Σ_k u_k e^{iω_k·x}` and `∫ u v̄ = vol⁻¹ Σ_k u_k v̄_k`.

use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;

use super::fft::fft_nd;
use super::lattice::{FrequencySet, TorusGeometry};
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct FourierField {
    freqs: Arc<FrequencySet>,
    coeffs: Vec<Complex64>,
    real: bool,
}

impl FourierField {
    pub fn zeros(freqs: Arc<FrequencySet>, real: bool) -> Self {
        let n = freqs.len();
        Self {
            freqs,
            coeffs: vec![ZERO; n],
            real,
        }
    }

    /// Build from a coefficient vector; real fields are Hermitian-symmetrized.
    pub fn from_coeffs(freqs: Arc<FrequencySet>, coeffs: Vec<Complex64>, real: bool) -> Result<Self> {
        if coeffs.len() != freqs.len() {
            return Err(Error::Incompatible(format!(
                "{} coefficients for a lattice of {} modes",
                coeffs.len(),
                freqs.len()
            )));
        }
        let mut field = Self { freqs, coeffs, real };
        if real {
            field.enforce_hermitian();
        }
        Ok(field)
    }

    /// The constant function `c` (coefficient `c·vol` on the zero mode).
    pub fn constant(freqs: Arc<FrequencySet>, c: f64) -> Self {
        let mut f = Self::zeros(freqs, true);
        let z = f.freqs.zero_index();
        f.coeffs[z] = Complex64::new(c * f.freqs.geometry().volume(), 0.0);
        f
    }

    /// Plane wave `φ_k(x) = e^{iω_k·x}` (coefficient `vol` at `k`).
    pub fn plane_wave(freqs: Arc<FrequencySet>, idx: usize) -> Self {
        let mut f = Self::zeros(freqs, false);
        f.coeffs[idx] = Complex64::new(f.freqs.geometry().volume(), 0.0);
        f
    }

    /// Sample a real function on a `points^d` grid and analyze it.
    pub fn from_real_fn<F: Fn(&[f64]) -> f64>(
        freqs: Arc<FrequencySet>,
        points: usize,
        func: F,
    ) -> Result<Self> {
        let geometry = freqs.geometry().clone();
        let grid = GridField::from_fn(geometry, points, |x| Complex64::new(func(x), 0.0));
        let mut f = analyze_into(&grid, freqs)?;
        f.real = true;
        f.enforce_hermitian();
        Ok(f)
    }

    fn enforce_hermitian(&mut self) {
        let n = self.coeffs.len();
        for i in 0..=n / 2 {
            let j = n - 1 - i;
            let a = self.coeffs[i];
            let b = self.coeffs[j].conj();
            let m = (a + b) * 0.5;
            self.coeffs[i] = m;
            self.coeffs[j] = m.conj();
        }
    }

    pub fn freqs(&self) -> &Arc<FrequencySet> {
        &self.freqs
    }

    pub fn geometry(&self) -> &TorusGeometry {
        self.freqs.geometry()
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeff(&self, idx: usize) -> Complex64 {
        self.coeffs[idx]
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn cutoff(&self) -> usize {
        self.freqs.cutoff()
    }

    /// Zero-mode coefficient, i.e. `∫ u`.
    pub fn mass(&self) -> Complex64 {
        self.coeffs[self.freqs.zero_index()]
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Apply a mode-wise multiplier `m(k)`; reality is kept when `m(k) = m(-k)` is real.
    pub fn map_modes<F: Fn(usize) -> Complex64>(&self, m: F, keeps_real: bool) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * m(i))
            .collect();
        Self {
            freqs: Arc::clone(&self.freqs),
            coeffs,
            real: self.real && keeps_real,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map_modes(|_| Complex64::new(s, 0.0), true)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with<F: Fn(Complex64, Complex64) -> Complex64>(&self, other: &Self, op: F) -> Result<Self> {
        if !self.freqs.same_lattice(&other.freqs) {
            return Err(Error::Incompatible("fields live on different lattices".into()));
        }
        Ok(Self {
            freqs: Arc::clone(&self.freqs),
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(&a, &b)| op(a, b))
                .collect(),
            real: self.real && other.real,
        })
    }

    /// `∫ u v̄`.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        if !self.freqs.same_lattice(&other.freqs) {
            return Err(Error::Incompatible("fields live on different lattices".into()));
        }
        let s: Complex64 = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a * b.conj())
            .sum();
        Ok(s / self.geometry().volume())
    }

    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.coeffs.iter().map(|c| c.norm_sqr()).sum();
        (s / self.geometry().volume()).sqrt()
    }

    /// Copy onto another lattice over the same geometry, truncating or zero-padding.
    pub fn resample(&self, target: Arc<FrequencySet>) -> Result<Self> {
        if target.geometry() != self.geometry() {
            return Err(Error::Incompatible("resample across geometries".into()));
        }
        let mut out = Self::zeros(Arc::clone(&target), self.real);
        for idx in 0..self.freqs.len() {
            if let Some(j) = target.index_of(self.freqs.k(idx)) {
                out.coeffs[j] = self.coeffs[idx];
            }
        }
        Ok(out)
    }

    /// Pointwise evaluation by direct summation.
    pub fn evaluate(&self, x: &[f64]) -> Complex64 {
        let vol = self.geometry().volume();
        let mut acc = ZERO;
        for (idx, c) in self.coeffs.iter().enumerate() {
            if *c == ZERO {
                continue;
            }
            let phase: f64 = self
                .freqs
                .omega(idx)
                .iter()
                .zip(x)
                .map(|(w, xi)| w * xi)
                .sum();
            acc += c * Complex64::from_polar(1.0, phase);
        }
        acc / vol
    }

    pub fn evaluate_real(&self, x: &[f64]) -> f64 {
        self.evaluate(x).re
    }

    /// Smallest grid resolution that represents this field without aliasing.
    pub fn min_points(&self) -> usize {
        2 * self.cutoff() + 2
    }

    /// Flat CSV record: header `d,kappa_1..kappa_d,cutoff`, then `k_1..k_d,re,im` per mode.
    pub fn to_csv(&self) -> String {
        let g = self.geometry();
        let mut out = String::new();
        write!(out, "{}", g.dim()).unwrap();
        for k in g.side_lengths() {
            write!(out, ",{k}").unwrap();
        }
        writeln!(out, ",{}", self.cutoff()).unwrap();
        for (idx, c) in self.coeffs.iter().enumerate() {
            for k in self.freqs.k(idx) {
                write!(out, "{k},").unwrap();
            }
            writeln!(out, "{},{}", c.re, c.im).unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty field record".into()))?;
        let parts: Vec<&str> = header.split(',').map(str::trim).collect();
        let d: usize = parts[0]
            .parse()
            .map_err(|_| Error::Parse(format!("bad dimension {:?}", parts[0])))?;
        if parts.len() != d + 2 {
            return Err(Error::Parse(format!("header has {} fields, expected {}", parts.len(), d + 2)));
        }
        let kappas = parts[1..=d]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad side length {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let cutoff: usize = parts[d + 1]
            .parse()
            .map_err(|_| Error::Parse(format!("bad cutoff {:?}", parts[d + 1])))?;
        let freqs = FrequencySet::new(TorusGeometry::new(kappas)?, cutoff);
        let mut coeffs = vec![ZERO; freqs.len()];
        let mut seen = 0usize;
        for line in lines {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != d + 2 {
                return Err(Error::Parse(format!("row {line:?} has {} columns", cols.len())));
            }
            let k = cols[..d]
                .iter()
                .map(|s| s.parse::<i64>().map_err(|_| Error::Parse(format!("bad index {s:?}"))))
                .collect::<Result<Vec<_>>>()?;
            let re: f64 = cols[d].parse().map_err(|_| Error::Parse(format!("bad value {:?}", cols[d])))?;
            let im: f64 = cols[d + 1]
                .parse()
                .map_err(|_| Error::Parse(format!("bad value {:?}", cols[d + 1])))?;
            let idx = freqs
                .index_of(&k)
                .ok_or_else(|| Error::Parse(format!("mode {k:?} outside cutoff {cutoff}")))?;
            coeffs[idx] = Complex64::new(re, im);
            seen += 1;
        }
        if seen != freqs.len() {
            return Err(Error::Parse(format!("expected {} rows, found {seen}", freqs.len())));
        }
        let n = coeffs.len();
        let real = (0..n).all(|i| coeffs[i] == coeffs[n - 1 - i].conj());
        Ok(Self { freqs, coeffs, real })
    }
}

/// Values on the uniform tensor grid `x_j = (j_1 κ_1/G, …, j_d κ_d/G)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    geometry: TorusGeometry,
    points: usize,
    values: Vec<Complex64>,
}

impl GridField {
    pub fn new(geometry: TorusGeometry, points: usize, values: Vec<Complex64>) -> Result<Self> {
        let n = points.pow(geometry.dim() as u32);
        if values.len() != n {
            return Err(Error::Incompatible(format!("{} grid values, expected {n}", values.len())));
        }
        Ok(Self {
            geometry,
            points,
            values,
        })
    }

    pub fn from_fn<F: Fn(&[f64]) -> Complex64>(geometry: TorusGeometry, points: usize, func: F) -> Self {
        let d = geometry.dim();
        let n = points.pow(d as u32);
        let mut x = vec![0.0; d];
        let values = (0..n)
            .map(|flat| {
                node_coords(&geometry, points, flat, &mut x);
                func(&x)
            })
            .collect();
        Self {
            geometry,
            points,
            values,
        }
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geometry
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    /// Quadrature weight `vol / G^d` of every node.
    pub fn weight(&self) -> f64 {
        self.geometry.volume() / self.values.len() as f64
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.geometry.dim()];
        node_coords(&self.geometry, self.points, flat, &mut x);
        x
    }

    /// `∫ u` by the trapezoid rule.
    pub fn integrate(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() * self.weight()
    }

    pub fn map<F: Fn(Complex64) -> Complex64>(&self, f: F) -> Self {
        Self {
            geometry: self.geometry.clone(),
            points: self.points,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map<F: Fn(Complex64, Complex64) -> Complex64>(&self, other: &Self, f: F) -> Result<Self> {
        if self.points != other.points || self.geometry != other.geometry {
            return Err(Error::Incompatible("grid fields on different grids".into()));
        }
        Ok(Self {
            geometry: self.geometry.clone(),
            points: self.points,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }
}

fn node_coords(geometry: &TorusGeometry, points: usize, flat: usize, x: &mut [f64]) {
    let d = geometry.dim();
    let mut rem = flat;
    for axis in (0..d).rev() {
        let j = rem % points;
        rem /= points;
        x[axis] = j as f64 * geometry.side_lengths()[axis] / points as f64;
    }
}

fn grid_offset(k: &[i64], points: usize) -> usize {
    k.iter()
        .fold(0usize, |acc, &ki| acc * points + ki.rem_euclid(points as i64) as usize)
}

/// Evaluate a field on the `points^d` grid.
pub fn synthesize(field: &FourierField, points: usize) -> Result<GridField> {
    let needed = field.min_points();
    if points < needed {
        return Err(Error::Resolution {
            points,
            cutoff: field.cutoff(),
            needed,
        });
    }
    let geometry = field.geometry().clone();
    let d = geometry.dim();
    let vol = geometry.volume();
    let mut values = vec![ZERO; points.pow(d as u32)];
    for (idx, c) in field.coeffs().iter().enumerate() {
        values[grid_offset(field.freqs().k(idx), points)] += c / vol;
    }
    fft_nd(&mut values, points, d, false);
    if field.is_real() {
        for v in values.iter_mut() {
            v.im = 0.0;
        }
    }
    Ok(GridField {
        geometry,
        points,
        values,
    })
}

/// Fourier coefficients up to `cutoff` of a grid field.
pub fn analyze(grid: &GridField, cutoff: usize) -> Result<FourierField> {
    let freqs = FrequencySet::new(grid.geometry.clone(), cutoff);
    analyze_into(grid, freqs)
}

/// Like [`analyze`] but onto an existing lattice (shared `Arc`).
pub fn analyze_into(grid: &GridField, freqs: Arc<FrequencySet>) -> Result<FourierField> {
    if freqs.geometry() != &grid.geometry {
        return Err(Error::Incompatible("lattice and grid geometries differ".into()));
    }
    let needed = 2 * freqs.cutoff() + 2;
    if grid.points < needed {
        return Err(Error::Resolution {
            points: grid.points,
            cutoff: freqs.cutoff(),
            needed,
        });
    }
    let mut work = grid.values.clone();
    fft_nd(&mut work, grid.points, grid.geometry.dim(), true);
    let w = grid.weight();
    let coeffs = (0..freqs.len())
        .map(|idx| work[grid_offset(freqs.k(idx), grid.points)] * w)
        .collect();
    let real = grid.values.iter().all(|v| v.im == 0.0);
    FourierField::from_coeffs(freqs, coeffs, real)
}
