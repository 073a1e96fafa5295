//! Ionic current I(v, w) and gating dynamics H(v, w).
//!
//! The model follows the generalized FitzHugh–Nagumo structure
//!
//! ```text
//! I(v, w) = I₁(v) + I₂(v)·w,   I₁(v) = v³ − (1+a)v² + a·v,   I₂(v) = c_{I,3} + c_{I,4}·v
//! H(v, w) = h(v) + c_{H,1}·w,  h(v) = ϵκ·v,                  c_{H,1} = −ϵγ
//! ```
//!
//! The structural constants used by the energy and monotonicity arguments
//! are not entered by hand: they are computed at construction by dense
//! sampling and then certified by [`MembraneModel::check_structural_bounds`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-width of the sampling box used to compute the structural constants.
pub const CERTIFICATE_RANGE: f64 = 10.0;

/// Lower quartic coefficient c̲_I asked of I₁(v)·v.
pub const QUARTIC_COERCIVITY: f64 = 0.5;

const SAFETY: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FhnParams {
    /// Excitation threshold, 0 < a < 1.
    pub a: f64,
    /// Excitability ϵ.
    pub eps: f64,
    pub kappa: f64,
    pub gamma: f64,
    /// Constant part of I₂.
    pub c_i3: f64,
    /// Linear part of I₂; zero for the classical model.
    pub c_i4: f64,
}

impl Default for FhnParams {
    fn default() -> Self {
        Self {
            a: 0.1,
            eps: 0.01,
            kappa: 1.0,
            gamma: 0.5,
            c_i3: 1.0,
            c_i4: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MembraneKind {
    FitzhughNagumo,
    /// I ≡ 0 and H ≡ 0; used to isolate the linear diffusion part.
    Passive,
}

/// Constants of the structural inequalities and of the dissipation bound
///
/// ```text
/// w·H(v,w) − v·I(v,w) ≤ −C₁v⁴ + C₂(v² + w²) + C₃
/// ```
///
/// plus the one-sided Lipschitz constant of (v, w) ↦ (−I, H).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructuralConstants {
    pub c_i1: f64,
    pub c_i2: f64,
    pub c_i3: f64,
    pub c_i4: f64,
    pub c_i_lower: f64,
    pub c_h1: f64,
    pub c_h2: f64,
    pub dissipation_c1: f64,
    pub dissipation_c2: f64,
    pub dissipation_c3: f64,
    pub one_sided_lipschitz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembraneModel {
    pub kind: MembraneKind,
    pub params: FhnParams,
    constants: StructuralConstants,
}

/// Worst margin of one inequality over a sample grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Margin {
    pub name: &'static str,
    pub min_margin: f64,
    pub at_v: f64,
    pub violated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StructuralReport {
    pub kind: MembraneKind,
    pub constants: StructuralConstants,
    pub v_range: (f64, f64),
    pub samples: usize,
    pub margins: Vec<Margin>,
    pub all_nonnegative: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DissipationReport {
    pub min_residual: f64,
    pub at: (f64, f64),
    pub samples: usize,
    pub nonnegative: bool,
}

type Check<'a> = (&'static str, Box<dyn Fn(f64) -> f64 + 'a>);

impl Default for MembraneModel {
    fn default() -> Self {
        Self::fitzhugh_nagumo(FhnParams::default()).expect("default parameters are valid")
    }
}

impl MembraneModel {
    pub fn fitzhugh_nagumo(params: FhnParams) -> Result<Self> {
        validate(&params)?;
        let constants = compute_constants(&params);
        Ok(Self {
            kind: MembraneKind::FitzhughNagumo,
            params,
            constants,
        })
    }

    pub fn passive() -> Self {
        Self {
            kind: MembraneKind::Passive,
            params: FhnParams::default(),
            constants: StructuralConstants {
                c_i1: 0.0,
                c_i2: 0.0,
                c_i3: 0.0,
                c_i4: 0.0,
                c_i_lower: 0.0,
                c_h1: 0.0,
                c_h2: 0.0,
                dissipation_c1: 0.0,
                dissipation_c2: 0.0,
                dissipation_c3: 0.0,
                one_sided_lipschitz: 0.0,
            },
        }
    }

    pub fn constants(&self) -> &StructuralConstants {
        &self.constants
    }

    /// Replaces the certified constants, e.g. to demonstrate that a wrong
    /// constant is caught by the checks.
    pub fn with_constants(mut self, constants: StructuralConstants) -> Self {
        self.constants = constants;
        self
    }

    pub fn is_passive(&self) -> bool {
        self.kind == MembraneKind::Passive
    }

    #[inline]
    pub fn i1(&self, v: f64) -> f64 {
        match self.kind {
            MembraneKind::Passive => 0.0,
            MembraneKind::FitzhughNagumo => {
                let a = self.params.a;
                v * (v * (v - (1.0 + a)) + a)
            }
        }
    }

    #[inline]
    pub fn i1_slope(&self, v: f64) -> f64 {
        match self.kind {
            MembraneKind::Passive => 0.0,
            MembraneKind::FitzhughNagumo => {
                let a = self.params.a;
                3.0 * v * v - 2.0 * (1.0 + a) * v + a
            }
        }
    }

    #[inline]
    pub fn i2(&self, v: f64) -> f64 {
        match self.kind {
            MembraneKind::Passive => 0.0,
            MembraneKind::FitzhughNagumo => self.params.c_i3 + self.params.c_i4 * v,
        }
    }

    #[inline]
    pub fn h(&self, v: f64) -> f64 {
        match self.kind {
            MembraneKind::Passive => 0.0,
            MembraneKind::FitzhughNagumo => self.params.eps * self.params.kappa * v,
        }
    }

    #[inline]
    pub fn c_h1(&self) -> f64 {
        match self.kind {
            MembraneKind::Passive => 0.0,
            MembraneKind::FitzhughNagumo => -self.params.eps * self.params.gamma,
        }
    }

    /// I(v, w) = I₁(v) + I₂(v)·w.
    #[inline]
    pub fn ion_current(&self, v: f64, w: f64) -> f64 {
        self.i1(v) + self.i2(v) * w
    }

    /// H(v, w) = ϵ(κv − γw).
    #[inline]
    pub fn gating_rhs(&self, v: f64, w: f64) -> f64 {
        self.h(v) + self.c_h1() * w
    }

    /// [−C₁v⁴ + C₂(v²+w²) + C₃] − [w·H(v,w) − v·I(v,w)]; nonnegative when
    /// the stored constants are valid.
    pub fn dissipation_bound(&self, v: f64, w: f64) -> f64 {
        let c = &self.constants;
        let bound = -c.dissipation_c1 * v.powi(4) + c.dissipation_c2 * (v * v + w * w) + c.dissipation_c3;
        bound - (w * self.gating_rhs(v, w) - v * self.ion_current(v, w))
    }

    /// Evaluates the three scalar inequalities
    ///
    /// ```text
    /// |I₁(v)| ≤ c_{I,1}(1 + |v|³)
    /// I₁(v)·v ≥ c̲_I·v⁴ − c_{I,2}·v²
    /// |h(v)|² ≤ c_{H,2}(1 + v²)
    /// ```
    ///
    /// on `samples` equispaced points of `v_range` and reports the worst margin
    /// of each.
    pub fn check_structural_bounds(&self, v_range: (f64, f64), samples: usize) -> Result<StructuralReport> {
        if samples < 2 {
            return Err(Error::param("samples", "need at least 2 sample points"));
        }
        let (lo, hi) = v_range;
        if !(lo.is_finite() && hi.is_finite()) || hi < lo {
            return Err(Error::param("v_range", format!("invalid interval [{lo}, {hi}]")));
        }
        let c = self.constants;
        let checks: [Check<'_>; 3] = [
            (
                "ionic_growth",
                Box::new(|v: f64| c.c_i1 * (1.0 + v.abs().powi(3)) - self.i1(v).abs()),
            ),
            (
                "ionic_coercivity",
                Box::new(|v: f64| self.i1(v) * v - (c.c_i_lower * v.powi(4) - c.c_i2 * v * v)),
            ),
            (
                "gating_growth",
                Box::new(|v: f64| c.c_h2 * (1.0 + v * v) - self.h(v).powi(2)),
            ),
        ];
        let grid: Vec<f64> = (0..samples)
            .map(|k| lo + (hi - lo) * k as f64 / (samples - 1) as f64)
            .collect();
        let margins: Vec<Margin> = checks
            .iter()
            .map(|(name, f)| {
                let (at_v, min_margin) = grid
                    .iter()
                    .map(|&v| (v, f(v)))
                    .fold((lo, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
                Margin {
                    name,
                    min_margin,
                    at_v,
                    violated: min_margin < 0.0,
                }
            })
            .collect();
        let all_nonnegative = margins.iter().all(|m| !m.violated);
        Ok(StructuralReport {
            kind: self.kind,
            constants: c,
            v_range,
            samples,
            margins,
            all_nonnegative,
        })
    }

    /// Minimum of [`dissipation_bound`](Self::dissipation_bound) over a
    /// `samples × samples` grid of the box `[−r, r]²`.
    pub fn check_dissipation(&self, r: f64, samples: usize) -> Result<DissipationReport> {
        if samples < 2 {
            return Err(Error::param("samples", "need at least 2 sample points"));
        }
        let pts: Vec<f64> = (0..samples)
            .map(|k| -r + 2.0 * r * k as f64 / (samples - 1) as f64)
            .collect();
        let mut min_residual = f64::INFINITY;
        let mut at = (0.0, 0.0);
        for &v in &pts {
            for &w in &pts {
                let res = self.dissipation_bound(v, w);
                if res < min_residual {
                    min_residual = res;
                    at = (v, w);
                }
            }
        }
        Ok(DissipationReport {
            min_residual,
            at,
            samples: samples * samples,
            nonnegative: min_residual >= 0.0,
        })
    }

    /// (H(v̄,w̄) − H(v̂,ŵ))(w̄ − ŵ) − (I(v̄,w̄) − I(v̂,ŵ))(v̄ − v̂).
    pub fn monotonicity_pairing(&self, bar: (f64, f64), hat: (f64, f64)) -> f64 {
        let dh = self.gating_rhs(bar.0, bar.1) - self.gating_rhs(hat.0, hat.1);
        let di = self.ion_current(bar.0, bar.1) - self.ion_current(hat.0, hat.1);
        dh * (bar.1 - hat.1) - di * (bar.0 - hat.0)
    }
}

fn validate(p: &FhnParams) -> Result<()> {
    let finite = [p.a, p.eps, p.kappa, p.gamma, p.c_i3, p.c_i4].iter().all(|x| x.is_finite());
    if !finite {
        return Err(Error::param("membrane", "parameters must be finite"));
    }
    if !(p.a > 0.0 && p.a < 1.0) {
        return Err(Error::param("membrane.a", format!("threshold must lie in (0,1), got {}", p.a)));
    }
    if p.eps <= 0.0 {
        return Err(Error::param("membrane.eps", "excitability must be positive"));
    }
    if p.gamma < 0.0 || p.kappa < 0.0 {
        return Err(Error::param("membrane", "kappa and gamma must be nonnegative"));
    }
    Ok(())
}

fn inflate(x: f64) -> f64 {
    x.max(0.0) * (1.0 + SAFETY) + 1e-12
}

/// Samples for the one-dimensional sup computations: a dense grid of the
/// certificate box plus far-field probes for ratios whose sup sits at ±∞.
fn scalar_samples() -> Vec<f64> {
    let r = CERTIFICATE_RANGE;
    let mut v: Vec<f64> = (0..=40_000).map(|k| -r + 2.0 * r * k as f64 / 40_000.0).collect();
    for far in [1e2, 1e3, 1e4, 1e6] {
        v.push(far);
        v.push(-far);
    }
    v
}

fn compute_constants(p: &FhnParams) -> StructuralConstants {
    let model = MembraneModel {
        kind: MembraneKind::FitzhughNagumo,
        params: *p,
        constants: MembraneModel::passive().constants,
    };
    let vs = scalar_samples();
    let sup = |f: &dyn Fn(f64) -> f64| vs.iter().map(|&v| f(v)).fold(f64::NEG_INFINITY, f64::max);

    let c_i1 = inflate(sup(&|v| model.i1(v).abs() / (1.0 + v.abs().powi(3))));
    let c_i_lower = QUARTIC_COERCIVITY;
    let c_i2 = inflate(sup(&|v| {
        if v == 0.0 {
            0.0
        } else {
            (c_i_lower * v.powi(4) - model.i1(v) * v) / (v * v)
        }
    }));
    let c_h2 = inflate(sup(&|v| model.h(v).powi(2) / (1.0 + v * v)));

    // Dissipation: keep half of the quartic coercivity, C₃ = 0, and take C₂
    // as the sup of the remaining ratio over a polar grid (the ratio is
    // homogeneous near the origin, so directions matter more than radii).
    let c1 = 0.5 * c_i_lower;
    let mut c2_raw = 0.0_f64;
    let radii = 400;
    let angles = 1440;
    for ri in 0..radii {
        let r = 1e-4 * (1.5 * CERTIFICATE_RANGE / 1e-4).powf(ri as f64 / (radii - 1) as f64);
        for ai in 0..angles {
            let th = std::f64::consts::TAU * ai as f64 / angles as f64;
            let (v, w) = (r * th.cos(), r * th.sin());
            let pairing = w * model.gating_rhs(v, w) - v * model.ion_current(v, w);
            c2_raw = c2_raw.max((pairing + c1 * v.powi(4)) / (v * v + w * w));
        }
    }
    let c2 = inflate(c2_raw);

    // One-sided Lipschitz bound: the cubic contributes L = −min I₁', the
    // affine cross terms contribute a 2×2 quadratic form whose top eigenvalue
    // is the constant.
    let l = -vs
        .iter()
        .filter(|v| v.abs() <= CERTIFICATE_RANGE)
        .map(|&v| model.i1_slope(v))
        .fold(f64::INFINITY, f64::min);
    let l = l.max(0.0);
    let box_c4 = p.c_i4.abs() * CERTIFICATE_RANGE;
    let b = (p.eps * p.kappa - p.c_i3).abs() + box_c4;
    let d11 = l + box_c4;
    let d22 = -p.eps * p.gamma;
    let k = 0.5 * (d11 + d22) + (0.25 * (d11 - d22).powi(2) + 0.25 * b * b).sqrt();

    StructuralConstants {
        c_i1,
        c_i2,
        c_i3: p.c_i3,
        c_i4: p.c_i4,
        c_i_lower,
        c_h1: -p.eps * p.gamma,
        c_h2,
        dissipation_c1: c1,
        dissipation_c2: c2,
        dissipation_c3: 0.0,
        one_sided_lipschitz: inflate(k),
    }
}
