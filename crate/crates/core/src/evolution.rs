//! Time integration: integrating-factor RK4 on the coefficient ODE
//! a'(t) = e^{Mt} F(e^{-Mt} a), plus the damped evolution driver that
//! interleaves the heat sponge and the decay mask with the time stepping.
//!
//! All models are autonomous, so every step integrates from local time 0 to
//! dt and unwinds with e^{-M dt}; the absolute time never enters the
//! arithmetic.

use crate::damping::{apply_decay, strang_with, DampingConfig, DampingError, HeatOperator};
use crate::models::PdeModel;
use crate::spectral::{two_thirds_mask, Grid, SpectralError, SpectralField};
use num_complex::Complex64;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("non-finite values in RK4 stage {stage}")]
    NonFiniteStage { stage: usize },
    #[error("initial samples contain non-finite values")]
    NonFiniteInitial,
    #[error("solution blew up at step {step} (t = {time})")]
    BlowUp { step: usize, time: f64 },
    #[error("heat damping failed at step {step} (t = {time}): {source}")]
    Cg {
        step: usize,
        time: f64,
        source: DampingError,
    },
    #[error("t_final = {t_final} is not an integer multiple of dt = {dt}")]
    BadTimeGrid { dt: f64, t_final: f64 },
    #[error("snapshot time {0} lies outside [0, t_final]")]
    BadSnapshotTime(f64),
    #[error("comparison window [{lo}, {hi}] is empty or outside the domain")]
    BadWindow { lo: f64, hi: f64 },
    #[error(transparent)]
    Damping(#[from] DampingError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Integrating-factor RK4 with the e^{+-M tau} factors at offsets
/// {0, dt/2, dt} precomputed.
pub struct Rk4Stepper {
    model: PdeModel,
    dt: f64,
    e_half_plus: crate::spectral::DiagonalSymbol,
    e_half_minus: crate::spectral::DiagonalSymbol,
    e_full_plus: crate::spectral::DiagonalSymbol,
    e_full_minus: crate::spectral::DiagonalSymbol,
    keep: Option<Vec<bool>>,
}

impl Rk4Stepper {
    pub fn new(model: &PdeModel, dt: f64) -> Self {
        let m = model.linear();
        Rk4Stepper {
            model: model.clone(),
            dt,
            e_half_plus: m.exp(dt / 2.0),
            e_half_minus: m.exp(-dt / 2.0),
            e_full_plus: m.exp(dt),
            e_full_minus: m.exp(-dt),
            keep: None,
        }
    }

    /// Enable the 2/3-rule guard: every stage derivative has the top third
    /// of the mode range zeroed, so quadratic products never alias back
    /// into the retained band. Off by default.
    pub fn dealiased(mut self) -> Self {
        self.keep = Some(two_thirds_mask(self.model.grid()));
        self
    }

    fn drop_band(&self, f: &mut [Complex64]) {
        if let Some(keep) = &self.keep {
            for (z, &k) in f.iter_mut().zip(keep) {
                if !k {
                    *z = Complex64::new(0.0, 0.0);
                }
            }
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// One RK4 step of the integrated variable: takes c^n (= a^n at local
    /// time 0), returns a^{n+1}. Callers unwind with e^{-M dt} to recover
    /// c^{n+1}.
    pub fn advance(&self, c: &SpectralField) -> Result<SpectralField, EvolveError> {
        let grid = self.model.grid().clone();
        let dt = self.dt;
        let cv = c.coeffs();

        let mut f1 = self.model.nonlinear(c).into_coeffs();
        self.drop_band(&mut f1);
        check_stage(&f1, 1)?;

        let y2 = shifted(cv, dt / 2.0, &f1);
        let f2 = self.staged(&grid, y2, &self.e_half_minus, &self.e_half_plus, 2)?;

        let y3 = shifted(cv, dt / 2.0, &f2);
        let f3 = self.staged(&grid, y3, &self.e_half_minus, &self.e_half_plus, 3)?;

        let y4 = shifted(cv, dt, &f3);
        let f4 = self.staged(&grid, y4, &self.e_full_minus, &self.e_full_plus, 4)?;

        let sixth = dt / 6.0;
        let out: Vec<Complex64> = cv
            .iter()
            .enumerate()
            .map(|(i, &ci)| ci + sixth * (f1[i] + 2.0 * f2[i] + 2.0 * f3[i] + f4[i]))
            .collect();
        Ok(SpectralField::from_coeffs(&grid, out).expect("length preserved"))
    }

    /// e^{+tau M} F(e^{-tau M} y) for one stage.
    fn staged(
        &self,
        grid: &Grid,
        mut y: Vec<Complex64>,
        e_minus: &crate::spectral::DiagonalSymbol,
        e_plus: &crate::spectral::DiagonalSymbol,
        stage: usize,
    ) -> Result<Vec<Complex64>, EvolveError> {
        e_minus.apply_raw(&mut y);
        let yf = SpectralField::from_coeffs(grid, y).expect("length preserved");
        let mut f = self.model.nonlinear(&yf).into_coeffs();
        self.drop_band(&mut f);
        e_plus.apply_raw(&mut f);
        check_stage(&f, stage)?;
        Ok(f)
    }

    /// c^{n+1} = e^{-M dt} a^{n+1}.
    pub fn unwind(&self, a: &SpectralField) -> SpectralField {
        self.e_full_minus.apply(a).expect("same grid")
    }

    /// advance + unwind: c^n -> c^{n+1}.
    pub fn step(&self, c: &SpectralField) -> Result<SpectralField, EvolveError> {
        Ok(self.unwind(&self.advance(c)?))
    }
}

fn shifted(c: &[Complex64], h: f64, f: &[Complex64]) -> Vec<Complex64> {
    c.iter().zip(f).map(|(&ci, &fi)| ci + h * fi).collect()
}

fn check_stage(v: &[Complex64], stage: usize) -> Result<(), EvolveError> {
    if v.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(EvolveError::NonFiniteStage { stage })
    }
}

/// One integrating-factor RK4 step in the integrated variable (the caller
/// holds a^n = c^n at local time 0 and receives a^{n+1}). With F identically
/// zero the input is returned unchanged.
pub fn rk4_step(
    a: &SpectralField,
    dt: f64,
    model: &PdeModel,
) -> Result<SpectralField, EvolveError> {
    Rk4Stepper::new(model, dt).advance(a)
}

/// One full evolution: model, step size, horizon, damping, and optional
/// snapshot capture times (each rounded to the nearest step). `dealias`
/// (off by default) turns on the 2/3-rule guard for runs whose solutions
/// carry spectral content near the grid cutoff.
#[derive(Clone, Debug)]
pub struct EvolveSpec {
    pub model: PdeModel,
    pub dt: f64,
    pub t_final: f64,
    pub damping: DampingConfig,
    pub snapshot_times: Vec<f64>,
    pub dealias: bool,
}

impl EvolveSpec {
    pub fn new(model: PdeModel, dt: f64, t_final: f64, damping: DampingConfig) -> Self {
        EvolveSpec {
            model,
            dt,
            t_final,
            damping,
            snapshot_times: Vec::new(),
            dealias: false,
        }
    }

    /// Validates the time grid and damping parameters; returns the step
    /// count N with N dt = t_final to relative 1e-9.
    pub fn validate(&self) -> Result<usize, EvolveError> {
        if !(self.dt.is_finite() && self.dt > 0.0)
            || !(self.t_final.is_finite() && self.t_final > 0.0)
        {
            return Err(EvolveError::BadTimeGrid {
                dt: self.dt,
                t_final: self.t_final,
            });
        }
        let n = (self.t_final / self.dt).round();
        if n < 1.0 || (n * self.dt - self.t_final).abs() > 1e-9 * self.t_final {
            return Err(EvolveError::BadTimeGrid {
                dt: self.dt,
                t_final: self.t_final,
            });
        }
        for &t in &self.snapshot_times {
            if !(0.0..=self.t_final + self.dt / 2.0).contains(&t) {
                return Err(EvolveError::BadSnapshotTime(t));
            }
        }
        self.damping.validate(self.model.grid())?;
        Ok(n as usize)
    }
}

#[derive(Debug)]
pub struct EvolutionResult {
    pub final_field: SpectralField,
    /// Requested capture times paired with the field after the nearest step.
    pub snapshots: Vec<(f64, SpectralField)>,
    pub steps_taken: usize,
    pub cg_iterations_total: usize,
    pub wall_time: Duration,
}

/// Run the damped (or undamped) evolution from physical initial samples.
/// Step n (0-based) uses the Strang sponge branch when the mode includes
/// heat and n % f1 == 0, the plain step otherwise, and applies the decay
/// mask after the step when the mode includes exp and n % f2 == 0. With
/// `dealias` set, the 2/3-rule guard band is zeroed throughout.
pub fn evolve(
    initial_physical: &[Complex64],
    spec: &EvolveSpec,
) -> Result<EvolutionResult, EvolveError> {
    let start = Instant::now();
    let n_steps = spec.validate()?;
    if !initial_physical
        .iter()
        .all(|z| z.re.is_finite() && z.im.is_finite())
    {
        return Err(EvolveError::NonFiniteInitial);
    }
    let grid = spec.model.grid().clone();
    let mut c = grid.forward(initial_physical)?;

    // The guard band: dropped from the initial data, every stage derivative
    // (inside the steppers), and the decay-mask output. The heat sponge is a
    // linear solve and needs no guard.
    let keep = if spec.dealias {
        Some(two_thirds_mask(&grid))
    } else {
        None
    };
    let drop_band = |f: SpectralField, keep: &Option<Vec<bool>>| -> SpectralField {
        match keep {
            None => f,
            Some(keep) => {
                let g = f.grid().clone();
                let mut v = f.into_coeffs();
                for (z, &k) in v.iter_mut().zip(keep) {
                    if !k {
                        *z = Complex64::new(0.0, 0.0);
                    }
                }
                SpectralField::from_coeffs(&g, v).expect("length preserved")
            }
        }
    };
    c = drop_band(c, &keep);

    let mut full = Rk4Stepper::new(&spec.model, spec.dt);
    if spec.dealias {
        full = full.dealiased();
    }
    let heat_active = spec.damping.mode.has_heat();
    let exp_active = spec.damping.mode.has_exp();
    let machinery = if heat_active {
        let mut half = Rk4Stepper::new(&spec.model, spec.dt / 2.0);
        if spec.dealias {
            half = half.dealiased();
        }
        let heat = HeatOperator::from_config(&grid, &spec.damping, spec.dt)?;
        Some((half, heat))
    } else {
        None
    };

    let snap_steps: Vec<(usize, f64)> = spec
        .snapshot_times
        .iter()
        .map(|&t| ((t / spec.dt).round() as usize, t))
        .collect();
    let mut snapshots: Vec<(f64, SpectralField)> = snap_steps
        .iter()
        .filter(|&&(ns, _)| ns == 0)
        .map(|&(_, t)| (t, c.clone()))
        .collect();

    let mut cg_total = 0usize;
    for n in 0..n_steps {
        let time_after = (n as f64 + 1.0) * spec.dt;
        let wrap = |e: EvolveError| match e {
            EvolveError::NonFiniteStage { .. } => EvolveError::BlowUp {
                step: n,
                time: time_after,
            },
            EvolveError::Damping(source) => EvolveError::Cg {
                step: n,
                time: time_after,
                source,
            },
            other => other,
        };
        c = match &machinery {
            Some((half, heat)) if n % spec.damping.f1 == 0 => {
                let (next, iters) = strang_with(half, heat, &c).map_err(wrap)?;
                cg_total += iters;
                next
            }
            _ => full.step(&c).map_err(wrap)?,
        };
        if exp_active && n % spec.damping.f2 == 0 {
            c = drop_band(apply_decay(&c, &spec.damping.profile)?, &keep);
        }
        if !c.is_finite() {
            return Err(EvolveError::BlowUp {
                step: n,
                time: time_after,
            });
        }
        for &(ns, t) in &snap_steps {
            if ns == n + 1 {
                snapshots.push((t, c.clone()));
            }
        }
    }

    Ok(EvolutionResult {
        final_field: c,
        snapshots,
        steps_taken: n_steps,
        cg_iterations_total: cg_total,
        wall_time: start.elapsed(),
    })
}

/// Max pointwise difference between two sample vectors on one grid,
/// restricted to grid points inside [lo, hi].
pub fn compare_on_window(
    a: &[Complex64],
    b: &[Complex64],
    grid: &Grid,
    window: (f64, f64),
) -> Result<f64, EvolveError> {
    let (lo, hi) = window;
    let l = grid.half_width();
    if !(lo < hi) || lo < -l || hi > l {
        return Err(EvolveError::BadWindow { lo, hi });
    }
    if a.len() != grid.modes() || b.len() != grid.modes() {
        return Err(SpectralError::LengthMismatch {
            expected: grid.modes(),
            got: a.len().min(b.len()),
        }
        .into());
    }
    let mut seen = false;
    let mut max = 0.0f64;
    for ((&x, &ai), &bi) in grid.points().iter().zip(a).zip(b) {
        if (lo..=hi).contains(&x) {
            seen = true;
            max = max.max((ai - bi).norm());
        }
    }
    if !seen {
        return Err(EvolveError::BadWindow { lo, hi });
    }
    Ok(max)
}

/// Max pointwise difference between two fields on a window, allowing
/// different grids: the comparison runs on the finer grid's points inside
/// the window, with the coarser field evaluated there through its
/// trigonometric interpolant (exact for resolved fields).
pub fn compare_fields_on_window(
    a: &SpectralField,
    b: &SpectralField,
    window: (f64, f64),
) -> Result<f64, EvolveError> {
    if a.grid() == b.grid() {
        return compare_on_window(&a.to_physical(), &b.to_physical(), a.grid(), window);
    }
    let (lo, hi) = window;
    let la = a.grid().half_width();
    let lb = b.grid().half_width();
    if !(lo < hi) || lo < -la.min(lb) || hi > la.min(lb) {
        return Err(EvolveError::BadWindow { lo, hi });
    }
    let (fine, coarse) = if a.grid().spacing() <= b.grid().spacing() {
        (a, b)
    } else {
        (b, a)
    };
    let fine_phys = fine.to_physical();
    let pts: Vec<f64> = fine
        .grid()
        .points()
        .iter()
        .copied()
        .filter(|&x| (lo..=hi).contains(&x))
        .collect();
    if pts.is_empty() {
        return Err(EvolveError::BadWindow { lo, hi });
    }
    let vals_fine: Vec<Complex64> = fine
        .grid()
        .points()
        .iter()
        .zip(&fine_phys)
        .filter(|(&x, _)| (lo..=hi).contains(&x))
        .map(|(_, &v)| v)
        .collect();
    let vals_coarse = coarse.evaluate_on(&pts);
    Ok(vals_fine
        .iter()
        .zip(&vals_coarse)
        .map(|(f, c)| (f - c).norm())
        .fold(0.0, f64::max))
}
