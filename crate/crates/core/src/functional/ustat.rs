//! U-statistics of projected point masses: kernels, naive and fast evaluation,
//! and the Hoeffding decomposition.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::density::SampleSet;
use crate::error::{Error, Result};
use crate::laplacian::CMatrix;
use crate::torus::{synthesize, FourierField, FrequencySet, ProjectionFamily};

/// Symmetric multilinear form `G` acting on real fields given by their coefficients.
#[derive(Debug, Clone)]
pub enum Form {
    /// `G ≡ value` (not multilinear; only the trivial identities apply).
    Constant { order: usize, value: f64 },
    /// `G[v_1, …, v_J] = ∫ v_1 ⋯ v_J w`.
    Product { order: usize, weight: FourierField },
    /// `G[u, v] = Re(uᴴ A v)` with `A` Hermitian on `lattice`.
    Matrix { lattice: Arc<FrequencySet>, matrix: CMatrix },
    /// `G[u, v, w] = Re Σ T_{abc} u_a v_b w_c` with `T` symmetric on `lattice`.
    Tensor3 { lattice: Arc<FrequencySet>, data: Vec<Complex64> },
}

impl Form {
    pub fn order(&self) -> usize {
        match self {
            Form::Constant { order, .. } | Form::Product { order, .. } => *order,
            Form::Matrix { .. } => 2,
            Form::Tensor3 { .. } => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Levels {
    Single(f64),
    /// `D_1 ≤ D_2 ≤ D_3` for the multiscale cubic kernel.
    Multi([f64; 3]),
}

/// Kernel `b(x_1, …, x_J)` built from `G` and projected (optionally centered) point masses.
#[derive(Debug, Clone)]
pub struct UStatKernel {
    form: Form,
    levels: Levels,
    family: ProjectionFamily,
    lattice: Arc<FrequencySet>,
    center: Option<FourierField>,
    /// Grid resolution and weight values for product forms.
    points: usize,
    weight_grid: Vec<f64>,
    cell: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UStatMode {
    Naive,
    Fast,
}

type Prepared = Vec<Complex64>;

impl UStatKernel {
    /// Single-scale kernel `G[π_D δ_{x_1}, …, π_D δ_{x_J}]`.
    pub fn single(form: Form, level: f64, family: ProjectionFamily, geometry: &crate::torus::TorusGeometry) -> Result<Self> {
        crate::torus::check_level(level)?;
        Self::build(form, Levels::Single(level), family, geometry)
    }

    /// Five-term multiscale cubic kernel at levels `D_1 ≤ D_2 ≤ D_3`.
    pub fn multiscale(form: Form, levels: [f64; 3], family: ProjectionFamily, geometry: &crate::torus::TorusGeometry) -> Result<Self> {
        for &l in &levels {
            crate::torus::check_level(l)?;
        }
        if !(levels[0] <= levels[1] && levels[1] <= levels[2]) {
            return Err(Error::Config(format!("levels {levels:?} must satisfy D1 <= D2 <= D3")));
        }
        if form.order() != 3 {
            return Err(Error::Config("the multiscale kernel needs a trilinear form".into()));
        }
        Self::build(form, Levels::Multi(levels), family, geometry)
    }

    fn build(form: Form, levels: Levels, family: ProjectionFamily, geometry: &crate::torus::TorusGeometry) -> Result<Self> {
        let top = match levels {
            Levels::Single(d) => d,
            Levels::Multi(l) => l[2],
        };
        let lattice = match &form {
            Form::Matrix { lattice, .. } | Form::Tensor3 { lattice, .. } => {
                if lattice.geometry() != geometry {
                    return Err(Error::Incompatible("form lattice and sample geometry differ".into()));
                }
                Arc::clone(lattice)
            }
            _ => family.band(geometry, top),
        };
        let (points, weight_grid, cell) = match &form {
            Form::Product { order, weight } => {
                if weight.geometry() != geometry {
                    return Err(Error::Incompatible("weight and sample geometry differ".into()));
                }
                let b = lattice.cutoff();
                let points = (order * b + weight.cutoff() + 1).max(2 * b.max(weight.cutoff()) + 2);
                let grid = synthesize(weight, points)?;
                let cell = grid.weight();
                (points, grid.values().iter().map(|v| v.re).collect(), cell)
            }
            _ => (0, Vec::new(), 0.0),
        };
        Ok(Self {
            form,
            levels,
            family,
            lattice,
            center: None,
            points,
            weight_grid,
            cell,
        })
    }

    /// Replace `δ_x` by `δ_x − g` in every argument.
    pub fn centered(mut self, g: &FourierField) -> Result<Self> {
        if g.geometry() != self.lattice.geometry() {
            return Err(Error::Incompatible("centering field lives on another torus".into()));
        }
        self.center = Some(g.clone());
        Ok(self)
    }

    pub fn order(&self) -> usize {
        self.form.order()
    }

    pub fn form(&self) -> &Form {
        &self.form
    }

    pub fn levels(&self) -> Levels {
        self.levels
    }

    pub fn lattice(&self) -> &Arc<FrequencySet> {
        &self.lattice
    }

    /// Coefficients of `π_D(δ_x − g)` (or `π_D δ_x`) on the kernel lattice.
    fn coeffs(&self, x: &[f64], level: f64) -> Vec<Complex64> {
        let mult = self.family.multipliers(&self.lattice, level);
        (0..self.lattice.len())
            .map(|k| {
                if mult[k] == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                let phase: f64 = self.lattice.omega(k).iter().zip(x).map(|(w, xi)| w * xi).sum();
                let mut c = Complex64::from_polar(1.0, -phase);
                if let Some(g) = &self.center {
                    c -= self.center_coeff(g, k);
                }
                c * mult[k]
            })
            .collect()
    }

    fn center_coeff(&self, g: &FourierField, k: usize) -> Complex64 {
        g.freqs().index_of(self.lattice.k(k)).map_or(Complex64::new(0.0, 0.0), |j| g.coeff(j))
    }

    /// Coefficients of `π_D g` on the kernel lattice.
    fn field_coeffs(&self, g: &FourierField, level: f64) -> Vec<Complex64> {
        let mult = self.family.multipliers(&self.lattice, level);
        (0..self.lattice.len()).map(|k| self.center_coeff(g, k) * mult[k]).collect()
    }

    fn prepare(&self, coeffs: Vec<Complex64>) -> Result<Prepared> {
        match &self.form {
            Form::Product { .. } => {
                let f = FourierField::from_coeffs(Arc::clone(&self.lattice), coeffs, true)?;
                Ok(synthesize(&f, self.points)?.values().to_vec())
            }
            _ => Ok(coeffs),
        }
    }

    fn eval(&self, args: &[&Prepared]) -> f64 {
        match &self.form {
            Form::Constant { value, .. } => *value,
            Form::Product { .. } => {
                let mut total = 0.0;
                for (x, w) in self.weight_grid.iter().enumerate() {
                    let mut p = *w;
                    for a in args {
                        p *= a[x].re;
                    }
                    total += p;
                }
                total * self.cell
            }
            Form::Matrix { matrix, .. } => {
                let (u, v) = (args[0], args[1]);
                let mut total = Complex64::new(0.0, 0.0);
                for (k, uk) in u.iter().enumerate() {
                    if uk.norm_sqr() == 0.0 {
                        continue;
                    }
                    let row: Complex64 = v.iter().enumerate().map(|(l, vl)| matrix[(k, l)] * vl).sum();
                    total += uk.conj() * row;
                }
                total.re
            }
            Form::Tensor3 { data, .. } => {
                let p = args[0].len();
                let mut total = Complex64::new(0.0, 0.0);
                for a in 0..p {
                    for b in 0..p {
                        let ab = args[0][a] * args[1][b];
                        for c in 0..p {
                            total += data[(a * p + b) * p + c] * ab * args[2][c];
                        }
                    }
                }
                total.re
            }
        }
    }

    /// Per-sample prepared arguments at the given level, in sample order.
    fn per_sample(&self, samples: &SampleSet, level: f64) -> Result<Vec<Prepared>> {
        let pts: Vec<&[f64]> = samples.iter().collect();
        pts.par_iter().map(|x| self.prepare(self.coeffs(x, level))).collect()
    }

    /// Families used by the kernel: one for single scale, `[a, b, c, e]` for multiscale.
    fn families(&self, samples: &SampleSet) -> Result<Vec<Vec<Prepared>>> {
        match self.levels {
            Levels::Single(d) => Ok(vec![self.per_sample(samples, d)?]),
            Levels::Multi([d1, d2, d3]) => {
                let p1 = self.per_sample(samples, d1)?;
                let p2 = self.per_sample(samples, d2)?;
                let p3 = self.per_sample(samples, d3)?;
                let diff = |x: &[Prepared], y: &[Prepared]| -> Vec<Prepared> {
                    x.iter().zip(y).map(|(a, b)| a.iter().zip(b).map(|(u, v)| u - v).collect()).collect()
                };
                let b = diff(&p2, &p1);
                let c = diff(&p3, &p1);
                let e = diff(&p3, &p2);
                Ok(vec![p1, b, c, e])
            }
        }
    }

    /// Kernel value on one tuple of family indices.
    fn kernel_value(&self, fam: &[Vec<Prepared>], idx: &[usize]) -> f64 {
        match self.levels {
            Levels::Single(_) => {
                let args: Vec<&Prepared> = idx.iter().map(|&i| &fam[0][i]).collect();
                self.eval(&args)
            }
            Levels::Multi(_) => {
                let (a, b, c, e) = (&fam[0], &fam[1], &fam[2], &fam[3]);
                let (i, j, k) = (idx[0], idx[1], idx[2]);
                self.eval(&[&a[i], &a[j], &a[k]])
                    + self.eval(&[&b[i], &b[j], &b[k]])
                    + self.eval(&[&a[i], &a[j], &c[k]])
                    + self.eval(&[&a[i], &c[j], &a[k]])
                    + self.eval(&[&c[i], &a[j], &a[k]])
                    + self.eval(&[&a[i], &c[j], &c[k]])
                    + self.eval(&[&c[i], &a[j], &c[k]])
                    + self.eval(&[&c[i], &c[j], &a[k]])
                    + self.eval(&[&b[i], &b[j], &e[k]])
                    + self.eval(&[&b[i], &e[j], &b[k]])
                    + self.eval(&[&e[i], &b[j], &b[k]])
            }
        }
    }

    /// `b(x_1, …, x_J)` evaluated directly from the points.
    pub fn eval_points(&self, xs: &[&[f64]]) -> Result<f64> {
        if xs.len() != self.order() {
            return Err(Error::Config(format!("kernel of order {} given {} points", self.order(), xs.len())));
        }
        let s = SampleSet::new(
            self.lattice.geometry().clone(),
            xs.iter().flat_map(|x| x.iter().copied()).collect(),
            0,
        )?;
        let fam = self.families(&s)?;
        let idx: Vec<usize> = (0..xs.len()).collect();
        Ok(self.kernel_value(&fam, &idx))
    }

    /// `Σ_i G[u_i, fixed…]`.
    fn ds1(&self, u: &[Prepared], fixed: &[&Prepared]) -> f64 {
        let terms: Vec<f64> = u
            .par_iter()
            .map(|ui| {
                let mut args = vec![ui];
                args.extend_from_slice(fixed);
                self.eval(&args)
            })
            .collect();
        tree_sum(&terms)
    }

    /// `Σ_{i≠j} G[u_i, v_j, fixed…]`.
    fn ds2(&self, u: &[Prepared], v: &[Prepared], fixed: &[&Prepared]) -> f64 {
        let su = sum_prepared(u);
        let sv = sum_prepared(v);
        let mut args = vec![&su, &sv];
        args.extend_from_slice(fixed);
        let whole = self.eval(&args);
        let diag: Vec<f64> = u
            .par_iter()
            .zip(v.par_iter())
            .map(|(ui, vi)| {
                let mut args = vec![ui, vi];
                args.extend_from_slice(fixed);
                self.eval(&args)
            })
            .collect();
        whole - tree_sum(&diag)
    }

    /// `Σ_{i,j,k distinct} G[u_i, v_j, w_k]`.
    fn ds3(&self, u: &[Prepared], v: &[Prepared], w: &[Prepared]) -> f64 {
        let (su, sv, sw) = (sum_prepared(u), sum_prepared(v), sum_prepared(w));
        let whole = self.eval(&[&su, &sv, &sw]);
        let per: Vec<[f64; 4]> = (0..u.len())
            .into_par_iter()
            .map(|i| {
                [
                    self.eval(&[&u[i], &v[i], &sw]),
                    self.eval(&[&u[i], &sv, &w[i]]),
                    self.eval(&[&su, &v[i], &w[i]]),
                    self.eval(&[&u[i], &v[i], &w[i]]),
                ]
            })
            .collect();
        let col = |c: usize| tree_sum(&per.iter().map(|r| r[c]).collect::<Vec<_>>());
        whole - col(0) - col(1) - col(2) + 2.0 * col(3)
    }

    /// Sum of `b` over ordered tuples of distinct indices.
    fn ordered_sum(&self, fam: &[Vec<Prepared>]) -> f64 {
        match (self.levels, self.order()) {
            (Levels::Single(_), 1) => self.ds1(&fam[0], &[]),
            (Levels::Single(_), 2) => self.ds2(&fam[0], &fam[0], &[]),
            (Levels::Single(_), _) => self.ds3(&fam[0], &fam[0], &fam[0]),
            (Levels::Multi(_), _) => {
                let (a, b, c, e) = (&fam[0], &fam[1], &fam[2], &fam[3]);
                self.ds3(a, a, a) + self.ds3(b, b, b) + 3.0 * self.ds3(a, a, c) + 3.0 * self.ds3(a, c, c)
                    + 3.0 * self.ds3(b, b, e)
            }
        }
    }
}

fn sum_prepared(v: &[Prepared]) -> Prepared {
    if v.is_empty() {
        return Vec::new();
    }
    let len = v[0].len();
    (0..len)
        .map(|x| tree_sum_c(&v.iter().map(|p| p[x]).collect::<Vec<_>>()))
        .collect()
}

/// Pairwise summation; the result depends only on the order of `xs`.
pub fn tree_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => tree_sum(&xs[..n / 2]) + tree_sum(&xs[n / 2..]),
    }
}

fn tree_sum_c(xs: &[Complex64]) -> Complex64 {
    match xs.len() {
        0 => Complex64::new(0.0, 0.0),
        1 => xs[0],
        n => tree_sum_c(&xs[..n / 2]) + tree_sum_c(&xs[n / 2..]),
    }
}

fn falling(n: usize, j: usize) -> f64 {
    (0..j).map(|i| (n - i) as f64).product()
}

fn for_each_subset(n: usize, j: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..j).collect();
    if j > n {
        return;
    }
    loop {
        f(&idx);
        let mut p = j;
        while p > 0 {
            p -= 1;
            if idx[p] != p + n - j {
                idx[p] += 1;
                for q in p + 1..j {
                    idx[q] = idx[q - 1] + 1;
                }
                break;
            }
            if p == 0 {
                return;
            }
        }
        if j == 0 {
            return;
        }
    }
}

/// `U_n b = binom(n, J)⁻¹ Σ_{i_1<…<i_J} b(X_{i_1}, …, X_{i_J})`.
pub fn ustat(kernel: &UStatKernel, samples: &SampleSet, mode: UStatMode) -> Result<f64> {
    let j = kernel.order();
    if samples.len() < j {
        return Err(Error::InsufficientSamples {
            needed: j,
            got: samples.len(),
        });
    }
    if let Form::Constant { value, .. } = kernel.form {
        return Ok(value);
    }
    let fam = kernel.families(samples)?;
    let n = samples.len();
    match mode {
        UStatMode::Fast => Ok(kernel.ordered_sum(&fam) / falling(n, j)),
        UStatMode::Naive => {
            let mut vals = Vec::new();
            for_each_subset(n, j, |idx| vals.push(kernel.kernel_value(&fam, idx)));
            Ok(tree_sum(&vals) / vals.len() as f64)
        }
    }
}

/// Terms of `U_n b = B[f, …, f] + Σ_j binom(J, j) U_n^{(j)} b_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct HoeffdingTerms {
    pub mean: f64,
    /// `U_n^{(j)} b_j` for `j = 1..=J` (without the binomial factor).
    pub components: Vec<f64>,
    pub ustat: f64,
}

impl HoeffdingTerms {
    pub fn reconstruction(&self) -> f64 {
        let j = self.components.len();
        self.mean
            + self
                .components
                .iter()
                .enumerate()
                .map(|(i, c)| binom(j, i + 1) * c)
                .sum::<f64>()
    }

    pub fn residual(&self) -> f64 {
        (self.ustat - self.reconstruction()).abs()
    }
}

fn binom(n: usize, k: usize) -> f64 {
    falling(n, k) / falling(k, k)
}

/// Hoeffding decomposition of a single-scale kernel around a known density `f`.
pub fn hoeffding_terms(kernel: &UStatKernel, samples: &SampleSet, f: &FourierField) -> Result<HoeffdingTerms> {
    let level = match kernel.levels {
        Levels::Single(d) => d,
        Levels::Multi(_) => return Err(Error::Config("Hoeffding terms need a single-scale kernel".into())),
    };
    if matches!(kernel.form, Form::Constant { .. }) {
        return Err(Error::Config("Hoeffding terms need a multilinear form".into()));
    }
    let j = kernel.order();
    let n = samples.len();
    if n < j {
        return Err(Error::InsufficientSamples { needed: j, got: n });
    }
    let raw = kernel.clone();
    let ustat_value = ustat(&raw, samples, UStatMode::Fast)?;
    let centered = raw.clone().centered(f)?;
    let c = centered.per_sample(samples, level)?;
    let big_f = raw.prepare(raw.field_coeffs(f, level))?;
    let mean = raw.eval(&vec![&big_f; j]);
    let mut components = Vec::with_capacity(j);
    for order in 1..=j {
        let fixed = vec![&big_f; j - order];
        let s = match order {
            1 => raw.ds1(&c, &fixed),
            2 => raw.ds2(&c, &c, &fixed),
            _ => raw.ds3(&c, &c, &c),
        };
        components.push(s / falling(n, order));
    }
    Ok(HoeffdingTerms {
        mean,
        components,
        ustat: ustat_value,
    })
}

/// Order-2 U-statistic of `G[π_D δ_x, π_D δ_y]`, optionally centered at `center`.
pub fn estimate_quadratic_form(
    form: Form,
    samples: &SampleSet,
    level: f64,
    family: ProjectionFamily,
    center: Option<&FourierField>,
) -> Result<f64> {
    if form.order() != 2 {
        return Err(Error::Config("quadratic estimator needs a bilinear form".into()));
    }
    let mut kernel = UStatKernel::single(form, level, family, samples.geometry())?;
    if let Some(g) = center {
        kernel = kernel.centered(g)?;
    }
    ustat(&kernel, samples, UStatMode::Fast)
}

/// Order-3 U-statistic of the multiscale kernel at `D_1 ≤ D_2 ≤ D_3`.
pub fn estimate_cubic_form(
    form: Form,
    samples: &SampleSet,
    levels: [f64; 3],
    family: ProjectionFamily,
    center: Option<&FourierField>,
) -> Result<f64> {
    let mut kernel = UStatKernel::multiscale(form, levels, family, samples.geometry())?;
    if let Some(g) = center {
        kernel = kernel.centered(g)?;
    }
    ustat(&kernel, samples, UStatMode::Fast)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{make_density, sample, DensitySpec};
    use crate::torus::TorusGeometry;

    fn unit() -> TorusGeometry {
        TorusGeometry::unit(1).unwrap()
    }

    #[test]
    fn subsets_enumerated() {
        let mut count = 0;
        for_each_subset(5, 3, |_| count += 1);
        assert_eq!(count, 10);
        let mut all = Vec::new();
        for_each_subset(3, 2, |s| all.push(s.to_vec()));
        assert_eq!(all, vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
    }

    #[test]
    fn constant_kernel_and_small_n() {
        let s = SampleSet::new(unit(), vec![0.1, 0.2], 0).unwrap();
        let k = UStatKernel::single(Form::Constant { order: 3, value: 1.0 }, 4.0, ProjectionFamily::default(), &unit()).unwrap();
        assert!(matches!(ustat(&k, &s, UStatMode::Fast), Err(Error::InsufficientSamples { .. })));
        let k2 = UStatKernel::single(Form::Constant { order: 2, value: 1.0 }, 4.0, ProjectionFamily::default(), &unit()).unwrap();
        assert_eq!(ustat(&k2, &s, UStatMode::Naive).unwrap(), 1.0);
    }

    #[test]
    fn order_two_with_two_points_is_kernel() {
        let f = make_density(&DensitySpec::cosine_1d(1, 0.5)).unwrap();
        let one = FourierField::constant(f.freqs().clone(), 1.0);
        let k = UStatKernel::single(Form::Product { order: 2, weight: one }, 20.0, ProjectionFamily::default(), &unit()).unwrap();
        let s = SampleSet::new(unit(), vec![0.15, 0.6], 0).unwrap();
        let u = ustat(&k, &s, UStatMode::Fast).unwrap();
        let b = k.eval_points(&[&[0.15], &[0.6]]).unwrap();
        assert!((u - b).abs() < 1e-12);
    }

    #[test]
    fn order_one_is_sample_mean() {
        let f = make_density(&DensitySpec::cosine_1d(1, 0.5)).unwrap();
        let s = sample(&f, 50, 4).unwrap();
        let k = UStatKernel::single(Form::Product { order: 1, weight: f.field().clone() }, 8.0, ProjectionFamily::default(), &unit()).unwrap();
        let mean = s.iter().map(|x| k.eval_points(&[x]).unwrap()).sum::<f64>() / 50.0;
        assert!((ustat(&k, &s, UStatMode::Fast).unwrap() - mean).abs() < 1e-12);
    }

    fn sym_tensor(p: usize, seed: u64) -> Vec<Complex64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<Complex64> = (0..p * p * p)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let mut t = vec![Complex64::new(0.0, 0.0); p * p * p];
        for a in 0..p {
            for b in 0..p {
                for c in 0..p {
                    let perms = [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)];
                    t[(a * p + b) * p + c] = perms.iter().map(|&(x, y, z)| raw[(x * p + y) * p + z]).sum::<Complex64>() / 6.0;
                }
            }
        }
        t
    }

    #[test]
    fn fast_matches_naive_for_dense_tensor() {
        let f = make_density(&DensitySpec::cosine_1d(1, 0.5)).unwrap();
        let lattice = FrequencySet::new(unit(), 3);
        let form = Form::Tensor3 { lattice, data: sym_tensor(7, 2) };
        let k = UStatKernel::single(form, 3.0, ProjectionFamily::default(), &unit()).unwrap();
        for n in [10, 30] {
            let s = sample(&f, n, n as u64).unwrap();
            let a = ustat(&k, &s, UStatMode::Fast).unwrap();
            let b = ustat(&k, &s, UStatMode::Naive).unwrap();
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-3), "{a} vs {b}");
        }
    }

    #[test]
    fn fast_matches_naive_for_products() {
        let f = make_density(&DensitySpec::cosine_1d(1, 0.5)).unwrap();
        for (order, n) in [(2, 10), (2, 30), (3, 10), (3, 30)] {
            let k = UStatKernel::single(Form::Product { order, weight: f.field().clone() }, 9.0, ProjectionFamily::default(), &unit())
                .unwrap()
                .centered(f.field())
                .unwrap();
            let s = sample(&f, n, 7 + n as u64).unwrap();
            let a = ustat(&k, &s, UStatMode::Fast).unwrap();
            let b = ustat(&k, &s, UStatMode::Naive).unwrap();
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-3), "J={order} n={n}: {a} vs {b}");
        }
    }

    #[test]
    fn multiscale_fast_matches_naive_and_collapses() {
        let f = make_density(&DensitySpec::cosine_1d(1, 0.5)).unwrap();
        let one = FourierField::constant(f.freqs().clone(), 1.0);
        let form = Form::Product { order: 3, weight: one };
        let s = sample(&f, 12, 5).unwrap();
        let multi = UStatKernel::multiscale(form.clone(), [7.0, 13.0, 20.0], ProjectionFamily::default(), &unit()).unwrap();
        let a = ustat(&multi, &s, UStatMode::Fast).unwrap();
        let b = ustat(&multi, &s, UStatMode::Naive).unwrap();
        assert!((a - b).abs() <= 1e-10 * b.abs(), "{a} vs {b}");
        let equal = UStatKernel::multiscale(form.clone(), [9.0; 3], ProjectionFamily::default(), &unit()).unwrap();
        let single = UStatKernel::single(form.clone(), 9.0, ProjectionFamily::default(), &unit()).unwrap();
        let c = ustat(&equal, &s, UStatMode::Fast).unwrap();
        let d = ustat(&single, &s, UStatMode::Fast).unwrap();
        assert!((c - d).abs() <= 1e-10 * d.abs());
        assert!(matches!(
            UStatKernel::multiscale(form, [9.0, 5.0, 12.0], ProjectionFamily::default(), &unit()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn kernel_is_symmetric() {
        let lattice = FrequencySet::new(unit(), 3);
        let form = Form::Tensor3 { lattice, data: sym_tensor(7, 9) };
        let k = UStatKernel::single(form, 3.0, ProjectionFamily::default(), &unit()).unwrap();
        let (x, y, z): (&[f64], &[f64], &[f64]) = (&[0.1], &[0.45], &[0.83]);
        let base = k.eval_points(&[x, y, z]).unwrap();
        for perm in [[y, x, z], [z, y, x], [x, z, y], [y, z, x]] {
            assert!((k.eval_points(&perm).unwrap() - base).abs() <= 1e-10 * base.abs().max(1.0));
        }
    }

    #[test]
    fn hoeffding_identity_small_sample() {
        let f = make_density(&DensitySpec::cosine_1d(1, 0.5)).unwrap();
        let one = FourierField::constant(f.freqs().clone(), 1.0);
        let s = sample(&f, 7, 21).unwrap();
        for order in [1, 2, 3] {
            let k = UStatKernel::single(Form::Product { order, weight: one.clone() }, 4.0, ProjectionFamily::default(), &unit()).unwrap();
            let h = hoeffding_terms(&k, &s, f.field()).unwrap();
            assert!(h.residual() <= 1e-10, "J={order}: {h:?}");
        }
    }

    #[test]
    fn pairing_kernel_equals_grid_integral() {
        // b(x, y) = ∫ π_D δ_x π_D δ_y = (1/vol) Σ ψ_k² e^{iω_k(y−x)}
        let one = FourierField::constant(FrequencySet::new(unit(), 0), 1.0);
        let k = UStatKernel::single(Form::Product { order: 2, weight: one }, 4.0, ProjectionFamily::default(), &unit()).unwrap();
        let fam = ProjectionFamily::default();
        let band = fam.band(&unit(), 4.0);
        let (x, y) = (0.2, 0.65);
        let direct: f64 = (0..band.len())
            .map(|i| fam.multiplier(&band, i, 4.0).powi(2) * (band.omega(i)[0] * (y - x)).cos())
            .sum();
        assert!((k.eval_points(&[&[x], &[y]]).unwrap() - direct).abs() < 1e-12);
    }
}
