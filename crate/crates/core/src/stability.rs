//! Linear stability of IMEX GLMs on `y' = ξy + ξ̂y`.
//!
//! With `w = hξ` and `ŵ = hξ̂` one step maps the external stages through
//! `M(w, ŵ) = V + (wB + ŵB̂)(I − wA − ŵÂ)⁻¹U`.

use std::io::Write;

use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dimsim::{dimsim_reduced, dimsim_transform};
use crate::error::{GlmError, Result};
use crate::matkernels::{max_abs, phi1_matrix, scaled_vandermonde, shift_matrix, solve_left, Abscissae};
use crate::tableau::{Family, ImexGlmTableau};

pub type C64 = Complex<f64>;

/// Stiff argument `ŵ`, possibly the point at infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StiffValue {
    Finite(C64),
    Infinite,
}

impl From<C64> for StiffValue {
    fn from(z: C64) -> Self {
        StiffValue::Finite(z)
    }
}

impl From<f64> for StiffValue {
    fn from(x: f64) -> Self {
        StiffValue::Finite(C64::new(x, 0.0))
    }
}

/// Accepted iff `ρ < 1 − STRICT_MARGIN`; points on the unit circle count as unstable.
pub const STRICT_MARGIN: f64 = 1e-9;

fn complexify(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|x| C64::new(x, 0.0))
}

/// Scalar weights `(a, b)` with `M = V + a·BU + b·B̂U` for a parallel tableau.
fn parallel_weights(lambda: f64, w: C64, what: StiffValue) -> Result<(C64, C64)> {
    match what {
        StiffValue::Infinite => {
            if lambda == 0.0 {
                return Err(GlmError::Singular("ŵ = ∞ with λ = 0".into()));
            }
            Ok((C64::new(0.0, 0.0), C64::new(-1.0 / lambda, 0.0)))
        }
        StiffValue::Finite(z) => {
            let denom = C64::new(1.0, 0.0) - z * lambda;
            if denom.norm() == 0.0 {
                return Err(GlmError::Singular(format!("1 − λŵ vanishes at ŵ = {z}")));
            }
            Ok((w / denom, z / denom))
        }
    }
}

/// `M(w, ŵ)` using the parallel shortcut when `A = 0`, `Â = λI`.
pub fn stability_matrix(t: &ImexGlmTableau, w: C64, what: StiffValue) -> Result<DMatrix<C64>> {
    if !t.is_parallel() {
        return stability_matrix_generic(t, w, what);
    }
    let (a, b) = parallel_weights(t.lambda(), w, what)?;
    let bu = complexify(&(t.b() * t.u()));
    let bhu = complexify(&(t.b_hat() * t.u()));
    Ok(complexify(t.v()) + bu * a + bhu * b)
}

/// `M(w, ŵ)` from the defining formula with an LU solve. At `ŵ = ∞` this is
/// the limit `V − B̂Â⁻¹U`, which needs `Â` invertible.
pub fn stability_matrix_generic(t: &ImexGlmTableau, w: C64, what: StiffValue) -> Result<DMatrix<C64>> {
    let s = t.stages();
    let u = complexify(t.u());
    let v = complexify(t.v());
    match what {
        StiffValue::Infinite => {
            let lu = complexify(t.a_hat()).lu();
            let x = lu
                .solve(&u)
                .ok_or_else(|| GlmError::Singular("Ahat is singular; M(w, ∞) undefined".into()))?;
            Ok(v - complexify(t.b_hat()) * x)
        }
        StiffValue::Finite(z) => {
            let lhs = DMatrix::<C64>::identity(s, s) - complexify(t.a()) * w - complexify(t.a_hat()) * z;
            let x = lhs
                .lu()
                .solve(&u)
                .ok_or_else(|| GlmError::Singular(format!("I − wA − ŵÂ singular at w = {w}, ŵ = {z}")))?;
            Ok(v + (complexify(t.b()) * w + complexify(t.b_hat()) * z) * x)
        }
    }
}

fn is_upper_triangular(m: &DMatrix<C64>) -> bool {
    (0..m.nrows()).all(|i| (0..i.min(m.ncols())).all(|j| m[(i, j)] == C64::new(0.0, 0.0)))
}

/// Eigenvalues of a square complex matrix. Triangular input is read off the
/// diagonal; otherwise a complex Schur decomposition is used.
pub fn eigenvalues(m: &DMatrix<C64>) -> Result<DVector<C64>> {
    if m.nrows() != m.ncols() {
        return Err(GlmError::DimensionMismatch(format!("{}x{} is not square", m.nrows(), m.ncols())));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(GlmError::NonFinite("stability matrix".into()));
    }
    if is_upper_triangular(m) || is_upper_triangular(&m.transpose()) {
        return Ok(m.diagonal());
    }
    let schur = nalgebra::Schur::try_new(m.clone(), f64::EPSILON, 10_000).ok_or(GlmError::Eigensolver(n))?;
    let (_, tri) = schur.unpack();
    Ok(tri.diagonal())
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<C64>) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Coefficient triple `(V₀, B₀, B̂₀)` similar to `(V, BU, B̂U)`, chosen so that
/// `V₀ + a B₀ + b B̂₀` is cheap and well conditioned for eigenvalues.
#[derive(Debug, Clone)]
pub struct StabilityPencil {
    lambda: f64,
    v: DMatrix<C64>,
    b: DMatrix<C64>,
    b_hat: DMatrix<C64>,
    reduced: bool,
    generic: Option<ImexGlmTableau>,
}

fn within(x: &DMatrix<f64>, y: &DMatrix<f64>, tol: f64) -> bool {
    max_abs(&(x - y)) <= tol
}

impl StabilityPencil {
    /// Use the structured form of a constructed family when the tableau
    /// matches it, otherwise fall back to the raw coefficients.
    pub fn new(t: &ImexGlmTableau) -> Result<Self> {
        if !t.is_parallel() {
            let s = t.external_stages();
            return Ok(StabilityPencil {
                lambda: t.lambda(),
                v: DMatrix::zeros(s, s),
                b: DMatrix::zeros(s, s),
                b_hat: DMatrix::zeros(s, s),
                reduced: false,
                generic: Some(t.clone()),
            });
        }
        if let Some(p) = Self::reduced_form(t)? {
            return Ok(p);
        }
        Ok(Self::raw(t))
    }

    /// The tableau's own coefficients, no change of basis.
    pub fn raw(t: &ImexGlmTableau) -> Self {
        StabilityPencil {
            lambda: t.lambda(),
            v: complexify(t.v()),
            b: complexify(&(t.b() * t.u())),
            b_hat: complexify(&(t.b_hat() * t.u())),
            reduced: false,
            generic: None,
        }
    }

    fn reduced_form(t: &ImexGlmTableau) -> Result<Option<Self>> {
        let s = t.stages();
        let Ok(c) = Abscissae::new(t.abscissae().to_vec()) else {
            return Ok(None);
        };
        let tol = 1e-8 * (1.0 + t.max_coefficient());
        let lambda = t.lambda();
        let candidate = match t.family() {
            Family::Ensemble => {
                let cs = scaled_vandermonde(&c, s)?;
                let phi = phi1_matrix(s)?;
                let damped = &phi * (DMatrix::identity(s, s) - shift_matrix(s)? * lambda);
                let tb = solve_left(&cs, &(t.b() * &cs))?;
                let tbh = solve_left(&cs, &(t.b_hat() * &cs))?;
                (within(&tb, &phi, tol) && within(&tbh, &damped, tol))
                    .then(|| (DMatrix::identity(s, s), phi, damped))
            }
            Family::Dimsim if lambda > 0.0 => {
                let tm = dimsim_transform(&c)?;
                let (vbar, b, b_hat) = dimsim_reduced(s, lambda)?;
                let back = |x: &DMatrix<f64>| solve_left(&tm, &(x * &tm));
                (within(&back(t.v())?, &vbar, tol)
                    && within(&back(t.b())?, &b, tol)
                    && within(&back(t.b_hat())?, &b_hat, tol))
                    .then_some((vbar, b, b_hat))
            }
            _ => None,
        };
        Ok(candidate.map(|(v, b, b_hat)| StabilityPencil {
            lambda,
            v: complexify(&v),
            b: complexify(&b),
            b_hat: complexify(&b_hat),
            reduced: true,
            generic: None,
        }))
    }

    /// True when the structured (c-independent) form is in use.
    pub fn is_reduced(&self) -> bool {
        self.reduced
    }

    /// A matrix similar to `M(w, ŵ)`.
    pub fn matrix(&self, w: C64, what: StiffValue) -> Result<DMatrix<C64>> {
        if let Some(t) = &self.generic {
            return stability_matrix_generic(t, w, what);
        }
        let (a, b) = parallel_weights(self.lambda, w, what)?;
        Ok(&self.v + &self.b * a + &self.b_hat * b)
    }

    pub fn spectral_radius(&self, w: C64, what: StiffValue) -> Result<f64> {
        spectral_radius(&self.matrix(w, what)?)
    }
}

/// Rectangular sampling of the `w` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub n_re: usize,
    pub n_im: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            re_min: -6.0,
            re_max: 1.0,
            im_min: -3.5,
            im_max: 3.5,
            n_re: 401,
            n_im: 401,
        }
    }
}

impl GridSpec {
    pub fn with_resolution(mut self, n_re: usize, n_im: usize) -> Self {
        self.n_re = n_re;
        self.n_im = n_im;
        self
    }

    fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
    }

    pub fn re_axis(&self) -> Vec<f64> {
        Self::axis(self.re_min, self.re_max, self.n_re)
    }

    pub fn im_axis(&self) -> Vec<f64> {
        Self::axis(self.im_min, self.im_max, self.n_im)
    }

    /// Area represented by one grid point.
    pub fn cell_area(&self) -> f64 {
        let step = |lo: f64, hi: f64, n: usize| if n > 1 { (hi - lo) / (n - 1) as f64 } else { hi - lo };
        step(self.re_min, self.re_max, self.n_re) * step(self.im_min, self.im_max, self.n_im)
    }

    fn validate(&self) -> Result<()> {
        if self.n_re == 0 || self.n_im == 0 {
            return Err(GlmError::Config("empty stability grid".into()));
        }
        let ok = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !ok(self.re_min, self.re_max) || !ok(self.im_min, self.im_max) {
            return Err(GlmError::Config("stability grid bounds must be finite and ordered".into()));
        }
        Ok(())
    }
}

/// Stiff probes standing in for the sector `|arg(−ŵ)| ≤ α`: the point at
/// infinity and `−10^k e^{±iθ}` for `k = −2..6`, `θ ∈ {0, α/2, α}`.
pub fn sector_probes(alpha: f64) -> Vec<StiffValue> {
    let mut probes = vec![StiffValue::Infinite];
    for k in -2..=6 {
        let r = 10f64.powi(k);
        for theta in [0.0, 0.5 * alpha, alpha] {
            for sign in [1.0, -1.0] {
                probes.push(StiffValue::Finite(-C64::from_polar(r, sign * theta)));
            }
        }
    }
    probes
}

/// Accepted `w` values of a constrained nonstiff stability region.
#[derive(Debug, Clone)]
pub struct StabilityGrid {
    pub alpha: f64,
    pub grid: GridSpec,
    pub probes: Vec<StiffValue>,
    /// `verdicts[i][j]` is the point `re_axis[j] + i·im_axis[i]`.
    pub verdicts: Vec<Vec<bool>>,
}

impl StabilityGrid {
    pub fn accepted_cells(&self) -> usize {
        self.verdicts.iter().flatten().filter(|&&v| v).count()
    }

    pub fn area(&self) -> f64 {
        self.accepted_cells() as f64 * self.grid.cell_area()
    }

    /// Verdict at the grid point nearest `w`.
    pub fn verdict_near(&self, w: C64) -> bool {
        let nearest = |axis: &[f64], x: f64| {
            axis.iter()
                .enumerate()
                .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
                .map(|(k, _)| k)
                .unwrap_or(0)
        };
        let j = nearest(&self.grid.re_axis(), w.re);
        let i = nearest(&self.grid.im_axis(), w.im);
        self.verdicts[i][j]
    }

    /// CSV with header `re,im,stable` and a trailing `# area=` comment row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "re,im,stable")?;
        let re = self.grid.re_axis();
        for (row, im) in self.verdicts.iter().zip(self.grid.im_axis()) {
            for (&v, &x) in row.iter().zip(&re) {
                writeln!(out, "{x},{im},{}", u8::from(v))?;
            }
        }
        writeln!(out, "# area={}", self.area())
    }
}

/// Scan the `w` grid and accept points whose stability matrix has
/// `ρ < 1 − STRICT_MARGIN` for every stiff probe.
pub fn constrained_region(
    t: &ImexGlmTableau,
    alpha: f64,
    grid: GridSpec,
    probes: Option<Vec<StiffValue>>,
) -> Result<StabilityGrid> {
    if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&alpha) {
        return Err(GlmError::Config(format!("sector angle {alpha} outside [0, π/2]")));
    }
    grid.validate()?;
    let probes = probes.unwrap_or_else(|| sector_probes(alpha));
    if probes.is_empty() {
        return Err(GlmError::Config("no stiff probes".into()));
    }
    let pencil = StabilityPencil::new(t)?;
    let re = grid.re_axis();
    let verdicts = grid
        .im_axis()
        .into_par_iter()
        .map(|im| {
            re.iter()
                .map(|&x| {
                    let w = C64::new(x, im);
                    for &p in &probes {
                        if pencil.spectral_radius(w, p)? >= 1.0 - STRICT_MARGIN {
                            return Ok(false);
                        }
                    }
                    Ok(true)
                })
                .collect::<Result<Vec<bool>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StabilityGrid {
        alpha,
        grid,
        probes,
        verdicts,
    })
}
