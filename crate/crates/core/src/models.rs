//! The evolution equations, each written as c'(t) + M c(t) = F(c(t)) in
//! coefficient space with M a diagonal Fourier multiplier (the stiff linear
//! part) and F the bounded nonlinear remainder evaluated pseudospectrally.

use crate::antiderivative::AntiderivativeOperator;
use crate::spectral::{diff_symbol, DiagonalSymbol, Grid, SpectralField};
use num_complex::Complex64;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown model '{0}'")]
    UnknownModel(String),
    #[error("dispersion coefficient must be positive and finite, got {0}")]
    BadEpsilon(f64),
}

/// Whether the evolved field is physically real-valued.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Real,
    Complex,
}

/// Background state for the step-like initial data models: the field tends
/// to `c_minus` as x -> -inf, and the antiderivative inside the nonlinearity
/// is pinned to that value at the left edge.
#[derive(Clone, Copy, Debug)]
pub struct RiemannContext {
    pub c_minus: f64,
    /// Dispersion strength; only the small-dispersion model reads it.
    pub epsilon: f64,
}

type NonlinearFn = dyn Fn(&SpectralField) -> SpectralField + Send + Sync;

/// One evolution equation bound to a grid.
#[derive(Clone)]
pub struct PdeModel {
    name: &'static str,
    grid: Grid,
    linear: DiagonalSymbol,
    nonlinear: Arc<NonlinearFn>,
    field_kind: FieldKind,
    dealias: Option<Arc<DiagonalSymbol>>,
    primitive_left: Option<f64>,
}

impl std::fmt::Debug for PdeModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PdeModel")
            .field("name", &self.name)
            .field("field_kind", &self.field_kind)
            .field("dealias", &self.dealias.is_some())
            .finish()
    }
}

impl PdeModel {
    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// The diagonal symbol M. Purely imaginary for every model here, so
    /// exp(M t) is an isometry and the integrating factor never over- or
    /// under-flows.
    pub fn linear(&self) -> &DiagonalSymbol {
        &self.linear
    }

    pub fn field_kind(&self) -> FieldKind {
        self.field_kind
    }

    /// For models that evolve the x-derivative of the physical solution:
    /// the value the antiderivative is pinned to at the left edge. `None`
    /// when the evolved field is the solution itself.
    pub fn primitive_left(&self) -> Option<f64> {
        self.primitive_left
    }

    /// F(c). Panics if the field lives on a different grid: that is a
    /// programming error, not a runtime condition.
    pub fn nonlinear(&self, field: &SpectralField) -> SpectralField {
        assert!(
            field.grid() == &self.grid,
            "field evaluated under a model bound to a different grid"
        );
        let out = (self.nonlinear)(field);
        match &self.dealias {
            Some(mask) => mask.apply(&out).expect("mask length fixed at build"),
            None => out,
        }
    }

    /// Zero the upper third of the spectrum of F's output (the classical 2/3
    /// rule for quadratic products). Off by default.
    pub fn with_dealiasing(mut self, on: bool) -> Self {
        if on {
            let m = self.grid.modes();
            let entries = (0..m)
                .map(|idx| {
                    let j = if idx < m / 2 {
                        idx as i64
                    } else {
                        idx as i64 - m as i64
                    };
                    if 3 * j.unsigned_abs() as usize >= m {
                        Complex64::new(0.0, 0.0)
                    } else {
                        Complex64::new(1.0, 0.0)
                    }
                })
                .collect();
            self.dealias = Some(Arc::new(DiagonalSymbol::from_entries(entries)));
        } else {
            self.dealias = None;
        }
        self
    }
}

fn assert_imaginary(symbol: &DiagonalSymbol) {
    debug_assert!(
        symbol.entries().iter().all(|e| e.re == 0.0),
        "dispersive symbol must be purely imaginary"
    );
}

/// q_t = -q_xxx - 6 q q_x, i.e. M = D^3 and F(c) = -6 fwd(q * q_x).
pub fn kdv(grid: &Grid) -> PdeModel {
    let linear = diff_symbol(grid, 3).unwrap();
    assert_imaginary(&linear);
    let d1 = diff_symbol(grid, 1).unwrap();
    let g = grid.clone();
    let nonlinear = move |c: &SpectralField| -> SpectralField {
        let q = c.to_physical();
        let qx = d1.apply(c).expect("same grid").to_physical();
        let prod: Vec<Complex64> = q.iter().zip(&qx).map(|(&a, &b)| -6.0 * a * b).collect();
        g.forward(&prod).expect("same grid")
    };
    PdeModel {
        name: "kdv",
        grid: grid.clone(),
        linear,
        nonlinear: Arc::new(nonlinear),
        field_kind: FieldKind::Real,
        dealias: None,
        primitive_left: None,
    }
}

/// i q_t + q_xx + 2 q |q|^2 = 0, i.e. q_t = i q_xx + 2 i q |q|^2:
/// M = -i D^2 (entries i k^2) and F(c) = 2 i fwd(q |q|^2).
pub fn nls(grid: &Grid) -> PdeModel {
    let d2 = diff_symbol(grid, 2).unwrap();
    let linear = d2.scale(Complex64::new(0.0, -1.0));
    assert_imaginary(&linear);
    let g = grid.clone();
    let nonlinear = move |c: &SpectralField| -> SpectralField {
        let q = c.to_physical();
        let cubic: Vec<Complex64> = q
            .iter()
            .map(|&v| Complex64::new(0.0, 2.0) * v * v.norm_sqr())
            .collect();
        g.forward(&cubic).expect("same grid")
    };
    PdeModel {
        name: "nls",
        grid: grid.clone(),
        linear,
        nonlinear: Arc::new(nonlinear),
        field_kind: FieldKind::Complex,
        dealias: None,
        primitive_left: None,
    }
}

/// q_t = -q_xxx with no nonlinearity; F is identically zero.
pub fn linkdv(grid: &Grid) -> PdeModel {
    let linear = diff_symbol(grid, 3).unwrap();
    assert_imaginary(&linear);
    let g = grid.clone();
    let nonlinear = move |_c: &SpectralField| SpectralField::zero(&g);
    PdeModel {
        name: "linkdv",
        grid: grid.clone(),
        linear,
        nonlinear: Arc::new(nonlinear),
        field_kind: FieldKind::Real,
        dealias: None,
        primitive_left: None,
    }
}

/// u_t = -eps^2 u_xxx - ((d^-1 u) u_x + u^2) for the derivative form of the
/// step-data problem: M = eps^2 D^3 and F uses the mean-aware antiderivative
/// pinned to c_minus at the left edge.
pub fn riemann_kdv(grid: &Grid, ctx: &RiemannContext) -> Result<PdeModel, ModelError> {
    if !(ctx.epsilon.is_finite() && ctx.epsilon > 0.0) {
        return Err(ModelError::BadEpsilon(ctx.epsilon));
    }
    let e2 = ctx.epsilon * ctx.epsilon;
    let linear = diff_symbol(grid, 3).unwrap().scale(Complex64::new(e2, 0.0));
    assert_imaginary(&linear);
    let d1 = diff_symbol(grid, 1).unwrap();
    let anti = AntiderivativeOperator::new(grid, ctx.c_minus);
    let g = grid.clone();
    let nonlinear = move |c: &SpectralField| -> SpectralField {
        let u = c.to_physical();
        let ux = d1.apply(c).expect("same grid").to_physical();
        let q = anti.apply(c).expect("same grid");
        let prod: Vec<Complex64> = u
            .iter()
            .zip(&ux)
            .zip(&q)
            .map(|((&ui, &uxi), &qi)| -(qi * uxi + ui * ui))
            .collect();
        g.forward(&prod).expect("same grid")
    };
    Ok(PdeModel {
        name: "riemann-kdv",
        grid: grid.clone(),
        linear,
        nonlinear: Arc::new(nonlinear),
        field_kind: FieldKind::Real,
        dealias: None,
        primitive_left: Some(ctx.c_minus),
    })
}

/// u_t = -u_xxx - u_xxxxx - ((d^-1 u) u_x + u^2): M = D^3 + D^5 and the same
/// nonlinearity as the step-data third-order model.
pub fn kawahara(grid: &Grid, ctx: &RiemannContext) -> PdeModel {
    let d3 = diff_symbol(grid, 3).unwrap();
    let d5 = diff_symbol(grid, 5).unwrap();
    let linear = d3.add(&d5).unwrap();
    assert_imaginary(&linear);
    let d1 = diff_symbol(grid, 1).unwrap();
    let anti = AntiderivativeOperator::new(grid, ctx.c_minus);
    let g = grid.clone();
    let nonlinear = move |c: &SpectralField| -> SpectralField {
        let u = c.to_physical();
        let ux = d1.apply(c).expect("same grid").to_physical();
        let q = anti.apply(c).expect("same grid");
        let prod: Vec<Complex64> = u
            .iter()
            .zip(&ux)
            .zip(&q)
            .map(|((&ui, &uxi), &qi)| -(qi * uxi + ui * ui))
            .collect();
        g.forward(&prod).expect("same grid")
    };
    PdeModel {
        name: "kawahara",
        grid: grid.clone(),
        linear,
        nonlinear: Arc::new(nonlinear),
        field_kind: FieldKind::Real,
        dealias: None,
        primitive_left: Some(ctx.c_minus),
    }
}

/// i q_t + q_xx + (2 (|q|^2)_x + |q|^4) q = 0, i.e.
/// q_t = i q_xx + i (2 (|q|^2)_x + |q|^4) q: M = -i D^2 as for the cubic
/// Schroedinger flow; the potential term goes through one spectral
/// derivative of |q|^2.
pub fn eckhaus(grid: &Grid) -> PdeModel {
    let d2 = diff_symbol(grid, 2).unwrap();
    let linear = d2.scale(Complex64::new(0.0, -1.0));
    assert_imaginary(&linear);
    let d1 = diff_symbol(grid, 1).unwrap();
    let g = grid.clone();
    let nonlinear = move |c: &SpectralField| -> SpectralField {
        let q = c.to_physical();
        let mod2: Vec<f64> = q.iter().map(|v| v.norm_sqr()).collect();
        let mod2_hat = g.forward_real(&mod2).expect("same grid");
        let dmod2 = d1.apply(&mod2_hat).expect("same grid").to_physical();
        let out: Vec<Complex64> = q
            .iter()
            .zip(&dmod2)
            .map(|(&qi, &di)| {
                let m2 = qi.norm_sqr();
                Complex64::new(0.0, 1.0) * (2.0 * di + m2 * m2) * qi
            })
            .collect();
        g.forward(&out).expect("same grid")
    };
    PdeModel {
        name: "eckhaus",
        grid: grid.clone(),
        linear,
        nonlinear: Arc::new(nonlinear),
        field_kind: FieldKind::Complex,
        dealias: None,
        primitive_left: None,
    }
}

/// Names accepted by `model_by_name`.
pub const MODEL_NAMES: [&str; 6] = ["kdv", "nls", "linkdv", "riemann-kdv", "kawahara", "eckhaus"];

/// Build a model from its registry name. The step-data models take their
/// left state (and dispersion coefficient) from `ctx`; the rest ignore it.
pub fn model_by_name(
    name: &str,
    grid: &Grid,
    ctx: &RiemannContext,
) -> Result<PdeModel, ModelError> {
    match name {
        "kdv" => Ok(kdv(grid)),
        "nls" => Ok(nls(grid)),
        "linkdv" => Ok(linkdv(grid)),
        "riemann-kdv" => riemann_kdv(grid, ctx),
        "kawahara" => Ok(kawahara(grid, ctx)),
        "eckhaus" => Ok(eckhaus(grid)),
        other => Err(ModelError::UnknownModel(other.to_string())),
    }
}

impl Default for RiemannContext {
    fn default() -> Self {
        RiemannContext {
            c_minus: 1.0,
            epsilon: 10f64.powf(-1.5),
        }
    }
}
