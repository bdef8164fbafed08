//! Artificial boundary damping: a variable-coefficient heat sponge solved
//! with Crank-Nicolson + conjugate gradient, and an exponential-decay mask
//! applied in physical space, plus the tanh profile functions that shape
//! where each mechanism acts.

use crate::evolution::{EvolveError, Rk4Stepper};
use crate::models::PdeModel;
use crate::spectral::{diff_symbol, DiagonalSymbol, Grid, SpectralField};
use num_complex::Complex64;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DampingError {
    #[error("conjugate gradient stalled after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("sigma samples must be finite and nonnegative")]
    BadSigma,
    #[error("gamma samples must be finite and lie in [0, 1]")]
    BadGamma,
    #[error("diffusion strength must be finite and nonnegative, got {0}")]
    BadDiffusion(f64),
    #[error("tolerance must be positive and finite, got {0}")]
    BadTolerance(f64),
    #[error("damping periods must be at least 1")]
    BadPeriod,
    #[error("expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("half-width {0} is too small for the standard damping layout (needs > 20)")]
    DomainTooSmall(f64),
}

/// Sponge shape: ~1 left of l1, ~0 between the edges, plus a bump rising to
/// ~2 in the last few units before -L where the left tail of the domain
/// wraps around. sigma(l1) = 1/2 exactly up to the far tail of the second
/// term.
pub fn sigma_profile(grid: &Grid, l1: f64, l2: f64) -> Vec<f64> {
    grid.points()
        .iter()
        .map(|&x| sigma_at(x, l1, l2))
        .collect()
}

fn sigma_at(x: f64, l1: f64, l2: f64) -> f64 {
    1.0 - 0.5 * ((x - l1).tanh() + 1.0) + 0.5 * ((-x - l2).tanh() + 1.0)
}

/// Right-sided decay mask gamma(x) = 1 - sigma(-x), literal and unclamped so
/// that gamma(x) + sigma(-x) = 1 holds exactly at every point. It dips
/// negative in the last few units before +L; `DampingProfile` clamps.
pub fn gamma_right(grid: &Grid, l1: f64, l2: f64) -> Vec<f64> {
    grid.points()
        .iter()
        .map(|&x| 1.0 - sigma_at(-x, l1, l2))
        .collect()
}

/// Two-sided decay mask gamma(x) = 1 - (sigma(x) + sigma(-x)), clamped to
/// [0, 1] (the tanh tails overlap slightly below 0 mid-domain and the edge
/// bumps push it to ~-1 in the outer slivers).
pub fn gamma_even(grid: &Grid, l1: f64, l2: f64) -> Vec<f64> {
    grid.points()
        .iter()
        .map(|&x| (1.0 - (sigma_at(x, l1, l2) + sigma_at(-x, l1, l2))).clamp(0.0, 1.0))
        .collect()
}

/// Which decay mask a standard profile carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GammaKind {
    /// Mask only the right edge; pairs with the heat sponge on the left.
    Right,
    /// Mask both edges symmetrically; used when no heat sponge runs.
    Even,
}

impl FromStr for GammaKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "right" => Ok(GammaKind::Right),
            "even" => Ok(GammaKind::Even),
            other => Err(format!("unknown gamma kind '{other}' (expected right|even)")),
        }
    }
}

/// Sampled damping geometry. Stored gamma is clamped to [0, 1] regardless of
/// kind so masking never amplifies; sigma is kept literal (its ~2 edge bump
/// is a stronger sponge, not an error).
#[derive(Clone, Debug)]
pub struct DampingProfile {
    sigma_samples: Vec<f64>,
    gamma_samples: Vec<f64>,
    /// Left sponge ramp location; None for custom profiles.
    l1: Option<f64>,
    /// Left-edge bump offset; None for custom profiles.
    l2: Option<f64>,
    inner_edge: f64,
    comparison_half_width: f64,
}

impl DampingProfile {
    /// The standard layout: sponge ramp at l1 = -L/2 - 10, edge bump offset
    /// l2 = L - 5, decay mask of the requested kind.
    pub fn standard(grid: &Grid, kind: GammaKind) -> Result<Self, DampingError> {
        let l = grid.half_width();
        if l <= 20.0 {
            return Err(DampingError::DomainTooSmall(l));
        }
        let l1 = -l / 2.0 - 10.0;
        let l2 = l - 5.0;
        let sigma = sigma_profile(grid, l1, l2);
        let gamma_raw = match kind {
            GammaKind::Right => gamma_right(grid, l1, l2),
            GammaKind::Even => gamma_even(grid, l1, l2),
        };
        let gamma: Vec<f64> = gamma_raw.iter().map(|&g| g.clamp(0.0, 1.0)).collect();
        debug_assert!(sigma.iter().all(|&s| (0.0..=2.0 + 1e-12).contains(&s)));
        let (p, r) = damping_geometry(grid, &sigma, &gamma);
        Ok(DampingProfile {
            sigma_samples: sigma,
            gamma_samples: gamma,
            l1: Some(l1),
            l2: Some(l2),
            inner_edge: p,
            comparison_half_width: r,
        })
    }

    /// No-op profile: zero sponge, unit mask. What "damping: none" carries.
    pub fn quiet(grid: &Grid) -> Self {
        let m = grid.modes();
        let l = grid.half_width();
        DampingProfile {
            sigma_samples: vec![0.0; m],
            gamma_samples: vec![1.0; m],
            l1: None,
            l2: None,
            inner_edge: l,
            comparison_half_width: l.min(100.0),
        }
    }

    /// Custom samples; sigma must be nonnegative, gamma within [0, 1].
    pub fn from_samples(
        grid: &Grid,
        sigma_samples: Vec<f64>,
        gamma_samples: Vec<f64>,
    ) -> Result<Self, DampingError> {
        let m = grid.modes();
        if sigma_samples.len() != m {
            return Err(DampingError::LengthMismatch {
                expected: m,
                got: sigma_samples.len(),
            });
        }
        if gamma_samples.len() != m {
            return Err(DampingError::LengthMismatch {
                expected: m,
                got: gamma_samples.len(),
            });
        }
        if !sigma_samples.iter().all(|s| s.is_finite() && *s >= 0.0) {
            return Err(DampingError::BadSigma);
        }
        if !gamma_samples
            .iter()
            .all(|g| g.is_finite() && (0.0..=1.0).contains(g))
        {
            return Err(DampingError::BadGamma);
        }
        let (p, r) = damping_geometry(grid, &sigma_samples, &gamma_samples);
        Ok(DampingProfile {
            sigma_samples,
            gamma_samples,
            l1: None,
            l2: None,
            inner_edge: p,
            comparison_half_width: r,
        })
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma_samples
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma_samples
    }

    pub fn l1(&self) -> Option<f64> {
        self.l1
    }

    pub fn l2(&self) -> Option<f64> {
        self.l2
    }

    /// Inner edge of the damping region (symmetric about the origin).
    pub fn inner_edge(&self) -> f64 {
        self.inner_edge
    }

    /// Half-width of the window on which solutions are trusted and compared.
    pub fn comparison_half_width(&self) -> f64 {
        self.comparison_half_width
    }
}

/// (inner damping edge, quiet radius): the smallest |x| at which either
/// mechanism reaches half strength, and the largest radius (capped at 100)
/// within which both are below 1e-6.
fn damping_geometry(grid: &Grid, sigma: &[f64], gamma: &[f64]) -> (f64, f64) {
    let l = grid.half_width();
    let mut edge = l;
    let mut quiet = l;
    for ((&x, &s), &g) in grid.points().iter().zip(sigma).zip(gamma) {
        let strength = s.max(1.0 - g);
        if strength >= 0.5 {
            edge = edge.min(x.abs());
        }
        if strength > 1e-6 {
            // One spacing inside the first active point is still quiet.
            quiet = quiet.min((x.abs() - grid.spacing()).max(0.0));
        }
    }
    (edge, quiet.min(100.0))
}

/// How the two mechanisms combine during evolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DampingMode {
    None,
    /// Decay masking only.
    Exp,
    /// Heat sponge only.
    Heat,
    /// Heat sponge and decay masking together.
    Both,
}

impl DampingMode {
    pub fn has_heat(self) -> bool {
        matches!(self, DampingMode::Heat | DampingMode::Both)
    }

    pub fn has_exp(self) -> bool {
        matches!(self, DampingMode::Exp | DampingMode::Both)
    }
}

impl FromStr for DampingMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(DampingMode::None),
            "exp" => Ok(DampingMode::Exp),
            "heat" => Ok(DampingMode::Heat),
            "both" => Ok(DampingMode::Both),
            other => Err(format!(
                "unknown damping mode '{other}' (expected none|exp|heat|both)"
            )),
        }
    }
}

/// Full damping parameter set for one evolution.
#[derive(Clone, Debug)]
pub struct DampingConfig {
    pub mode: DampingMode,
    /// Diffusion strength k1 of the heat sponge.
    pub k1: f64,
    /// Heat sponge fires on steps with n % f1 == 0.
    pub f1: usize,
    /// Decay mask fires on steps with n % f2 == 0.
    pub f2: usize,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    pub profile: DampingProfile,
}

impl DampingConfig {
    pub fn none(grid: &Grid) -> Self {
        DampingConfig {
            mode: DampingMode::None,
            k1: 0.0,
            f1: 1,
            f2: 1,
            cg_tol: 1e-10,
            cg_max_iters: 10 * grid.modes(),
            profile: DampingProfile::quiet(grid),
        }
    }

    /// Paper-style defaults: k1 = 1, heat every step, mask every 1000 steps,
    /// CG tolerance 1e-10 with a 10m iteration cap.
    pub fn standard(grid: &Grid, mode: DampingMode, kind: GammaKind) -> Result<Self, DampingError> {
        Ok(DampingConfig {
            mode,
            k1: 1.0,
            f1: 1,
            f2: 1000,
            cg_tol: 1e-10,
            cg_max_iters: 10 * grid.modes(),
            profile: DampingProfile::standard(grid, kind)?,
        })
    }

    pub fn validate(&self, grid: &Grid) -> Result<(), DampingError> {
        if !(self.k1.is_finite() && self.k1 >= 0.0) {
            return Err(DampingError::BadDiffusion(self.k1));
        }
        if self.f1 == 0 || self.f2 == 0 || self.cg_max_iters == 0 {
            return Err(DampingError::BadPeriod);
        }
        if !(self.cg_tol.is_finite() && self.cg_tol > 0.0) {
            return Err(DampingError::BadTolerance(self.cg_tol));
        }
        if self.profile.sigma_samples.len() != grid.modes() {
            return Err(DampingError::LengthMismatch {
                expected: grid.modes(),
                got: self.profile.sigma_samples.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct CgSolution {
    pub solution: Vec<Complex64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Plain conjugate gradient from a zero start, no preconditioner. `apply_b`
/// must be Hermitian positive definite; stops when the residual 2-norm
/// drops to `tol`.
pub fn cg_solve(
    apply_b: impl Fn(&[Complex64]) -> Vec<Complex64>,
    rhs: &[Complex64],
    tol: f64,
    max_iters: usize,
) -> Result<CgSolution, DampingError> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(DampingError::BadTolerance(tol));
    }
    let n = rhs.len();
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    // r* r is real: it is a sum of squared moduli.
    let mut rho: f64 = r.iter().map(|v| v.norm_sqr()).sum();
    let mut iterations = 0;
    while rho.sqrt() > tol {
        if iterations >= max_iters {
            return Err(DampingError::NotConverged {
                iterations,
                residual: rho.sqrt(),
            });
        }
        let q = apply_b(&p);
        let pq: Complex64 = p.iter().zip(&q).map(|(pi, qi)| pi.conj() * qi).sum();
        let alpha = Complex64::new(rho, 0.0) / pq;
        for (xi, &pi) in x.iter_mut().zip(&p) {
            *xi += alpha * pi;
        }
        for (ri, &qi) in r.iter_mut().zip(&q) {
            *ri -= alpha * qi;
        }
        let rho_next: f64 = r.iter().map(|v| v.norm_sqr()).sum();
        let beta = rho_next / rho;
        for (pi, &ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rho = rho_next;
        iterations += 1;
    }
    Ok(CgSolution {
        solution: x,
        iterations,
        residual: rho.sqrt(),
    })
}

/// One Crank-Nicolson step of q_t = k1 (sigma q_x)_x in coefficient space:
/// B c' = A c with B, A = I -/+ (k1 dt / 2) D fwd(sigma * inv(D .)).
/// B is Hermitian positive definite for sigma >= 0 (the inner operator is
/// minus a Gram form), so CG applies; eigenvalues of B^-1 A lie in (-1, 1],
/// making the step non-expansive.
pub struct HeatOperator {
    grid: Grid,
    sigma: Vec<f64>,
    d1: DiagonalSymbol,
    /// k1 * dt / 2.
    half_coef: f64,
    cg_tol: f64,
    cg_max_iters: usize,
}

impl HeatOperator {
    pub fn new(
        grid: &Grid,
        sigma: &[f64],
        k1: f64,
        dt: f64,
        cg_tol: f64,
        cg_max_iters: usize,
    ) -> Result<Self, DampingError> {
        if sigma.len() != grid.modes() {
            return Err(DampingError::LengthMismatch {
                expected: grid.modes(),
                got: sigma.len(),
            });
        }
        if !sigma.iter().all(|s| s.is_finite() && *s >= 0.0) {
            return Err(DampingError::BadSigma);
        }
        if !(k1.is_finite() && k1 >= 0.0) {
            return Err(DampingError::BadDiffusion(k1));
        }
        if !(dt.is_finite() && dt > 0.0) || !(cg_tol.is_finite() && cg_tol > 0.0) {
            return Err(DampingError::BadTolerance(cg_tol.min(dt)));
        }
        let op = HeatOperator {
            grid: grid.clone(),
            sigma: sigma.to_vec(),
            d1: diff_symbol(grid, 1).expect("order 1 is valid"),
            half_coef: k1 * dt / 2.0,
            cg_tol,
            cg_max_iters,
        };
        op.check_hermitian();
        Ok(op)
    }

    pub fn from_config(grid: &Grid, cfg: &DampingConfig, dt: f64) -> Result<Self, DampingError> {
        cfg.validate(grid)?;
        HeatOperator::new(
            grid,
            cfg.profile.sigma(),
            cfg.k1,
            dt,
            cfg.cg_tol,
            cfg.cg_max_iters,
        )
    }

    /// v -> v -/+ half_coef * D fwd(sigma * inv(D v)).
    fn apply_core(&self, v: &[Complex64], sign: f64) -> Vec<Complex64> {
        let mut w = v.to_vec();
        self.d1.apply_raw(&mut w);
        let mut phys = self.grid.inverse_raw(&w);
        for (p, &s) in phys.iter_mut().zip(&self.sigma) {
            *p *= s;
        }
        let mut back = self.grid.forward_raw(&phys);
        self.d1.apply_raw(&mut back);
        let c = sign * self.half_coef;
        v.iter()
            .zip(&back)
            .map(|(&vi, &bi)| vi + c * bi)
            .collect()
    }

    pub fn apply_b(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.apply_core(v, -1.0)
    }

    pub fn apply_a(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.apply_core(v, 1.0)
    }

    /// Hermitian self-check on two fixed pseudo-random vectors; the bound
    /// scales with the operator norm estimate 1 + half_coef * max(sigma) *
    /// max(k)^2. Active in debug builds.
    fn check_hermitian(&self) {
        if !cfg!(debug_assertions) {
            return;
        }
        let m = self.grid.modes();
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        let u: Vec<Complex64> = (0..m).map(|_| Complex64::new(next(), next())).collect();
        let v: Vec<Complex64> = (0..m).map(|_| Complex64::new(next(), next())).collect();
        let nu: f64 = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let nv: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let bu = self.apply_b(&u);
        let bv = self.apply_b(&v);
        let dot = |a: &[Complex64], b: &[Complex64]| -> Complex64 {
            a.iter().zip(b).map(|(ai, bi)| ai.conj() * bi).sum()
        };
        let asym = (dot(&bu, &v) - dot(&u, &bv)).norm();
        let kmax = self
            .grid
            .wavenumbers()
            .iter()
            .fold(0.0f64, |acc, k| acc.max(k.abs()));
        let smax = self.sigma.iter().fold(0.0f64, |acc, s| acc.max(*s));
        let scale = 1.0 + self.half_coef * smax * kmax * kmax;
        debug_assert!(
            asym <= 1e-10 * scale * nu * nv,
            "heat operator lost Hermitian symmetry: {asym:e}"
        );
    }

    /// Solve B c' = A c. k1 = 0 collapses both operators to the identity and
    /// returns the input unchanged without invoking CG.
    pub fn cn_step(&self, field: &SpectralField) -> Result<(SpectralField, usize), DampingError> {
        if field.coeffs().len() != self.grid.modes() {
            return Err(DampingError::LengthMismatch {
                expected: self.grid.modes(),
                got: field.coeffs().len(),
            });
        }
        if self.half_coef == 0.0 {
            return Ok((field.clone(), 0));
        }
        let rhs = self.apply_a(field.coeffs());
        let sol = cg_solve(|v| self.apply_b(v), &rhs, self.cg_tol, self.cg_max_iters)?;
        let out = SpectralField::from_coeffs(&self.grid, sol.solution)
            .expect("cg preserves length");
        Ok((out, sol.iterations))
    }
}

/// One sponge application per the config (builds the operator afresh; the
/// evolution driver caches one instead).
pub fn heat_step(
    field: &SpectralField,
    cfg: &DampingConfig,
    dt: f64,
) -> Result<(SpectralField, usize), DampingError> {
    let op = HeatOperator::from_config(field.grid(), cfg, dt)?;
    op.cn_step(field)
}

/// Mask in physical space: forward(gamma * inverse(field)). With gamma in
/// [0, 1] no physical sample's modulus grows.
pub fn apply_decay(
    field: &SpectralField,
    profile: &DampingProfile,
) -> Result<SpectralField, DampingError> {
    let gamma = profile.gamma();
    if gamma.len() != field.coeffs().len() {
        return Err(DampingError::LengthMismatch {
            expected: gamma.len(),
            got: field.coeffs().len(),
        });
    }
    let grid = field.grid();
    let mut phys = field.to_physical();
    for (p, &g) in phys.iter_mut().zip(gamma) {
        *p *= g;
    }
    Ok(grid.forward(&phys).expect("length preserved"))
}

/// The sponge branch of the damped driver: half RK4 step, full-dt
/// Crank-Nicolson heat solve, half RK4 step. Returns the new coefficients
/// and the CG iteration count.
pub fn strang_damped_step(
    field: &SpectralField,
    model: &PdeModel,
    cfg: &DampingConfig,
    dt: f64,
) -> Result<(SpectralField, usize), EvolveError> {
    let half = Rk4Stepper::new(model, dt / 2.0);
    let heat = HeatOperator::from_config(field.grid(), cfg, dt)?;
    strang_with(&half, &heat, field)
}

/// Shared implementation for `strang_damped_step` and the evolution driver
/// (which caches the stepper and operator across steps).
pub(crate) fn strang_with(
    half: &Rk4Stepper,
    heat: &HeatOperator,
    field: &SpectralField,
) -> Result<(SpectralField, usize), EvolveError> {
    let a = half.advance(field)?;
    let mid = half.unwind(&a);
    let (damped, iters) = heat.cn_step(&mid)?;
    let a2 = half.advance(&damped)?;
    Ok((half.unwind(&a2), iters))
}
