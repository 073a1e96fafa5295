//! Rectangular domains, the Laplacian eigenbasis and Galerkin assembly.
//!
//! The basis is the closed-form eigenbasis of −Δ on a 1D interval or a 2D
//! rectangle with homogeneous Dirichlet data on the faces in Σ_D and
//! homogeneous Neumann data on the rest. Per axis the eigenfunctions are
//!
//! ```text
//!   Dirichlet–Dirichlet   √(2/L) sin(pπx/L)          p ≥ 1
//!   Dirichlet–Neumann     √(2/L) sin((p−½)πx/L)      p ≥ 1
//!   Neumann–Dirichlet     √(2/L) cos((p−½)πx/L)      p ≥ 1
//!   Neumann–Neumann       1/√L,  √(2/L) cos(qπx/L)   q ≥ 0
//! ```
//!
//! and 2D modes are tensor products, so the set is L²-orthonormal and
//! orthogonal in H¹_D with ∫∇e_ℓ·∇e_m = λ_ℓ δ_ℓm.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A face of the rectangle. In 1D only `XLow`/`XHigh` exist.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Face {
    XLow,
    XHigh,
    YLow,
    YHigh,
}

impl Face {
    pub fn axis(self) -> usize {
        match self {
            Face::XLow | Face::XHigh => 0,
            Face::YLow | Face::YHigh => 1,
        }
    }

    pub fn is_high(self) -> bool {
        matches!(self, Face::XHigh | Face::YHigh)
    }

    pub fn all(dim: usize) -> Vec<Face> {
        [Face::XLow, Face::XHigh, Face::YLow, Face::YHigh]
            .into_iter()
            .take(2 * dim)
            .collect()
    }
}

/// Boundary type pair on one axis, low face first.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AxisBoundary {
    DirichletDirichlet,
    DirichletNeumann,
    NeumannDirichlet,
    NeumannNeumann,
}

impl AxisBoundary {
    /// Smallest admissible mode index on this axis.
    pub fn first_index(self) -> usize {
        match self {
            AxisBoundary::NeumannNeumann => 0,
            _ => 1,
        }
    }

    /// Wavenumber k such that the 1D eigenvalue is k².
    pub fn wavenumber(self, index: usize, length: f64) -> f64 {
        let m = match self {
            AxisBoundary::DirichletDirichlet | AxisBoundary::NeumannNeumann => index as f64,
            AxisBoundary::DirichletNeumann | AxisBoundary::NeumannDirichlet => index as f64 - 0.5,
        };
        m * PI / length
    }

    pub fn value(self, index: usize, length: f64, x: f64) -> f64 {
        let k = self.wavenumber(index, length);
        let amp = (2.0 / length).sqrt();
        match self {
            AxisBoundary::DirichletDirichlet | AxisBoundary::DirichletNeumann => amp * (k * x).sin(),
            AxisBoundary::NeumannDirichlet => amp * (k * x).cos(),
            AxisBoundary::NeumannNeumann if index == 0 => 1.0 / length.sqrt(),
            AxisBoundary::NeumannNeumann => amp * (k * x).cos(),
        }
    }

    pub fn derivative(self, index: usize, length: f64, x: f64) -> f64 {
        let k = self.wavenumber(index, length);
        let amp = (2.0 / length).sqrt();
        match self {
            AxisBoundary::DirichletDirichlet | AxisBoundary::DirichletNeumann => amp * k * (k * x).cos(),
            AxisBoundary::NeumannDirichlet => -amp * k * (k * x).sin(),
            AxisBoundary::NeumannNeumann if index == 0 => 0.0,
            AxisBoundary::NeumannNeumann => -amp * k * (k * x).sin(),
        }
    }

    /// ∫₀ᴸ of the 1D eigenfunction.
    pub fn integral(self, index: usize, length: f64) -> f64 {
        let k = self.wavenumber(index, length);
        let amp = (2.0 / length).sqrt();
        match self {
            AxisBoundary::DirichletDirichlet | AxisBoundary::DirichletNeumann => {
                amp * (1.0 - (k * length).cos()) / k
            }
            AxisBoundary::NeumannDirichlet => amp * (k * length).sin() / k,
            AxisBoundary::NeumannNeumann if index == 0 => length.sqrt(),
            AxisBoundary::NeumannNeumann => 0.0,
        }
    }
}

/// Axis-aligned box `[0, L_x] (× [0, L_y])` with a Dirichlet/Neumann face split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    lengths: Vec<f64>,
    dirichlet_faces: BTreeSet<Face>,
}

impl Domain {
    pub fn new(lengths: Vec<f64>, dirichlet_faces: impl IntoIterator<Item = Face>) -> Result<Self> {
        let dim = lengths.len();
        if dim != 1 && dim != 2 {
            return Err(Error::Domain(format!("dimension must be 1 or 2, got {dim}")));
        }
        if let Some(bad) = lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::Domain(format!("axis lengths must be positive, got {bad}")));
        }
        let dirichlet_faces: BTreeSet<Face> = dirichlet_faces.into_iter().collect();
        if let Some(f) = dirichlet_faces.iter().find(|f| f.axis() >= dim) {
            return Err(Error::Domain(format!("face {f:?} does not exist in {dim}D")));
        }
        if dirichlet_faces.is_empty() {
            return Err(Error::Domain(
                "the Dirichlet part of the boundary must be nonempty".into(),
            ));
        }
        Ok(Self {
            lengths,
            dirichlet_faces,
        })
    }

    pub fn interval(length: f64, dirichlet_faces: impl IntoIterator<Item = Face>) -> Result<Self> {
        Self::new(vec![length], dirichlet_faces)
    }

    pub fn rectangle(
        lx: f64,
        ly: f64,
        dirichlet_faces: impl IntoIterator<Item = Face>,
    ) -> Result<Self> {
        Self::new(vec![lx, ly], dirichlet_faces)
    }

    /// The reference interval `[0,1]` with Dirichlet data at 0 and Neumann data at 1.
    pub fn unit_interval() -> Self {
        Self::interval(1.0, [Face::XLow]).expect("valid reference domain")
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn dirichlet_faces(&self) -> &BTreeSet<Face> {
        &self.dirichlet_faces
    }

    pub fn neumann_faces(&self) -> Vec<Face> {
        Face::all(self.dim())
            .into_iter()
            .filter(|f| !self.dirichlet_faces.contains(f))
            .collect()
    }

    pub fn measure(&self) -> f64 {
        self.lengths.iter().product()
    }

    pub fn axis_boundary(&self, axis: usize) -> AxisBoundary {
        let lo = self.dirichlet_faces.iter().any(|f| f.axis() == axis && !f.is_high());
        let hi = self.dirichlet_faces.iter().any(|f| f.axis() == axis && f.is_high());
        match (lo, hi) {
            (true, true) => AxisBoundary::DirichletDirichlet,
            (true, false) => AxisBoundary::DirichletNeumann,
            (false, true) => AxisBoundary::NeumannDirichlet,
            (false, false) => AxisBoundary::NeumannNeumann,
        }
    }

    /// Points sampled uniformly along a face (for boundary-trace checks).
    pub fn face_points(&self, face: Face, count: usize) -> Vec<Vec<f64>> {
        let axis = face.axis();
        let fixed = if face.is_high() { self.lengths[axis] } else { 0.0 };
        if self.dim() == 1 {
            return vec![vec![fixed]];
        }
        let other = 1 - axis;
        (0..count)
            .map(|i| {
                let s = self.lengths[other] * i as f64 / (count.max(2) - 1) as f64;
                let mut p = vec![0.0; 2];
                p[axis] = fixed;
                p[other] = s;
                p
            })
            .collect()
    }
}

/// Per-axis mode indices of one tensor-product eigenfunction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mode {
    pub indices: Vec<usize>,
}

/// Tensor Gauss–Legendre rule on the domain. Points are stored flat with
/// stride `dim`.
#[derive(Clone, Debug)]
pub struct Quadrature {
    dim: usize,
    orders: Vec<usize>,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Quadrature {
    pub fn tensor(domain: &Domain, orders: &[usize]) -> Result<Self> {
        let dim = domain.dim();
        if orders.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "quadrature orders",
                expected: dim,
                found: orders.len(),
            });
        }
        let axes: Vec<Vec<(f64, f64)>> = orders
            .iter()
            .zip(domain.lengths())
            .map(|(&order, &len)| {
                let order = NonZeroUsize::new(order)
                    .ok_or_else(|| Error::param("quad_order", "must be positive"))?;
                let rule = GaussLegendre::new(order);
                Ok(rule
                    .as_node_weight_pairs()
                    .iter()
                    .map(|&(x, w)| (0.5 * len * (x + 1.0), 0.5 * len * w))
                    .collect())
            })
            .collect::<Result<_>>()?;

        let mut points = Vec::new();
        let mut weights = Vec::new();
        if dim == 1 {
            for &(x, w) in &axes[0] {
                points.push(x);
                weights.push(w);
            }
        } else {
            for &(y, wy) in &axes[1] {
                for &(x, wx) in &axes[0] {
                    points.extend_from_slice(&[x, y]);
                    weights.push(wx * wy);
                }
            }
        }
        Ok(Self {
            dim,
            orders: orders.to_vec(),
            points,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn orders(&self) -> &[usize] {
        &self.orders
    }

    pub fn point(&self, q: usize) -> &[f64] {
        &self.points[q * self.dim..(q + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// ∫ f dx from samples at the quadrature points.
    pub fn integrate(&self, samples: &[f64]) -> f64 {
        self.weights.iter().zip(samples).map(|(w, f)| w * f).sum()
    }
}

/// L²-orthonormal, H¹_D-orthogonal Galerkin basis with its quadrature tables.
#[derive(Clone, Debug)]
pub struct BasisSet {
    domain: Domain,
    modes: Vec<Mode>,
    eigenvalues: Vec<f64>,
    quadrature: Quadrature,
    // n × Q, row-major by mode
    values: Vec<f64>,
    // values scaled by the quadrature weight, used for projections
    weighted: Vec<f64>,
    // one n × Q table per axis
    gradients: Vec<Vec<f64>>,
}

impl BasisSet {
    /// Builds the first `n` eigenfunctions ordered by eigenvalue, ties broken
    /// lexicographically on the per-axis indices.
    ///
    /// `quad_order` is the number of Gauss points per axis; the default is
    /// `4·k_max + 8` where `k_max` is the largest mode index on that axis,
    /// enough to integrate the cubic ionic term against the top mode.
    pub fn build(domain: &Domain, n: usize, quad_order: Option<usize>) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("n", "basis size must be at least 1"));
        }
        if domain.dirichlet_faces().is_empty() {
            return Err(Error::Domain("the Dirichlet part of the boundary must be nonempty".into()));
        }
        let dim = domain.dim();
        let bcs: Vec<AxisBoundary> = (0..dim).map(|a| domain.axis_boundary(a)).collect();

        let axis_candidates: Vec<Vec<usize>> = bcs
            .iter()
            .map(|bc| (bc.first_index()..bc.first_index() + n).collect())
            .collect();
        let mut candidates: Vec<(f64, Vec<usize>)> = Vec::new();
        let mut push = |indices: Vec<usize>| {
            let lambda: f64 = indices
                .iter()
                .enumerate()
                .map(|(a, &i)| bcs[a].wavenumber(i, domain.lengths()[a]).powi(2))
                .sum();
            candidates.push((lambda, indices));
        };
        if dim == 1 {
            axis_candidates[0].iter().for_each(|&i| push(vec![i]));
        } else {
            for &i in &axis_candidates[0] {
                for &j in &axis_candidates[1] {
                    push(vec![i, j]);
                }
            }
        }
        // Near-equal eigenvalues (e.g. (1,2) and (2,1) on a square) are
        // snapped to a common key so the lexicographic tie-break applies.
        let scale = candidates.iter().map(|c| c.0).fold(0.0, f64::max).max(1.0);
        let key = |l: f64| (l / scale * 1e12).round() as i128;
        candidates.sort_by(|a, b| key(a.0).cmp(&key(b.0)).then_with(|| a.1.cmp(&b.1)));
        candidates.truncate(n);

        let eigenvalues: Vec<f64> = candidates.iter().map(|c| c.0).collect();
        let modes: Vec<Mode> = candidates.into_iter().map(|c| Mode { indices: c.1 }).collect();

        let orders: Vec<usize> = match quad_order {
            Some(0) => return Err(Error::param("quad_order", "must be positive")),
            Some(q) => vec![q; dim],
            None => (0..dim)
                .map(|a| {
                    let kmax = modes.iter().map(|m| m.indices[a]).max().unwrap_or(0);
                    4 * kmax + 8
                })
                .collect(),
        };
        let quadrature = Quadrature::tensor(domain, &orders)?;

        let nq = quadrature.len();
        let mut values = vec![0.0; n * nq];
        let mut gradients = vec![vec![0.0; n * nq]; dim];
        for (l, mode) in modes.iter().enumerate() {
            for q in 0..nq {
                let x = quadrature.point(q);
                let (v, g) = eval_mode(&bcs, domain.lengths(), &mode.indices, x);
                values[l * nq + q] = v;
                for a in 0..dim {
                    gradients[a][l * nq + q] = g[a];
                }
            }
        }
        let weighted = values
            .chunks(nq)
            .flat_map(|row| row.iter().zip(quadrature.weights()).map(|(v, w)| v * w))
            .collect();

        Ok(Self {
            domain: domain.clone(),
            modes,
            eigenvalues,
            quadrature,
            values,
            weighted,
            gradients,
        })
    }

    pub fn n(&self) -> usize {
        self.modes.len()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quadrature
    }

    /// e_ℓ at quadrature point `q`.
    pub fn value_at(&self, l: usize, q: usize) -> f64 {
        self.values[l * self.quadrature.len() + q]
    }

    /// ∂e_ℓ/∂x_axis at quadrature point `q`.
    pub fn gradient_at(&self, axis: usize, l: usize, q: usize) -> f64 {
        self.gradients[axis][l * self.quadrature.len() + q]
    }

    fn bcs(&self) -> Vec<AxisBoundary> {
        (0..self.dim()).map(|a| self.domain.axis_boundary(a)).collect()
    }

    /// e_ℓ(x) and ∇e_ℓ(x) at an arbitrary point.
    pub fn eval_mode(&self, l: usize, x: &[f64]) -> (f64, [f64; 2]) {
        eval_mode(&self.bcs(), self.domain.lengths(), &self.modes[l].indices, x)
    }

    /// Exact ∫_Ω e_ℓ dx for every mode.
    pub fn mode_integrals(&self) -> Vec<f64> {
        let bcs = self.bcs();
        self.modes
            .iter()
            .map(|m| {
                m.indices
                    .iter()
                    .enumerate()
                    .map(|(a, &i)| bcs[a].integral(i, self.domain.lengths()[a]))
                    .product()
            })
            .collect()
    }

    /// Σ_ℓ coeffs[ℓ]·e_ℓ at arbitrary points.
    pub fn evaluate(&self, coeffs: &[f64], points: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check_len(coeffs.len())?;
        let bcs = self.bcs();
        points
            .iter()
            .map(|x| {
                if x.len() != self.dim() {
                    return Err(Error::DimensionMismatch {
                        what: "evaluation point",
                        expected: self.dim(),
                        found: x.len(),
                    });
                }
                Ok(self
                    .modes
                    .iter()
                    .zip(coeffs)
                    .map(|(m, c)| c * eval_mode(&bcs, self.domain.lengths(), &m.indices, x).0)
                    .sum())
            })
            .collect()
    }

    /// Σ_ℓ coeffs[ℓ]·e_ℓ at every quadrature point, written into `out`.
    pub fn synthesize_into(&self, coeffs: &[f64], out: &mut [f64]) {
        let nq = self.quadrature.len();
        out.iter_mut().for_each(|o| *o = 0.0);
        for (row, &c) in self.values.chunks_exact(nq).zip(coeffs) {
            if c != 0.0 {
                out.iter_mut().zip(row).for_each(|(o, v)| *o += c * v);
            }
        }
    }

    pub fn synthesize(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        self.check_len(coeffs.len())?;
        let mut out = vec![0.0; self.quadrature.len()];
        self.synthesize_into(coeffs, &mut out);
        Ok(out)
    }

    /// (⟨f, e_ℓ⟩)_ℓ from samples of f at the quadrature points, written into `out`.
    pub fn project_samples_into(&self, samples: &[f64], out: &mut [f64]) {
        let nq = self.quadrature.len();
        for (o, row) in out.iter_mut().zip(self.weighted.chunks_exact(nq)) {
            *o = row.iter().zip(samples).map(|(w, f)| w * f).sum();
        }
    }

    pub fn project_samples(&self, samples: &[f64]) -> Result<Vec<f64>> {
        if samples.len() != self.quadrature.len() {
            return Err(Error::DimensionMismatch {
                what: "quadrature samples",
                expected: self.quadrature.len(),
                found: samples.len(),
            });
        }
        let mut out = vec![0.0; self.n()];
        self.project_samples_into(samples, &mut out);
        Ok(out)
    }

    /// Π_n f: the L² projection coefficients of a field given as a sampler.
    pub fn project<F: Fn(&[f64]) -> f64>(&self, field: F) -> Vec<f64> {
        let samples: Vec<f64> = (0..self.quadrature.len())
            .map(|q| field(self.quadrature.point(q)))
            .collect();
        let mut out = vec![0.0; self.n()];
        self.project_samples_into(&samples, &mut out);
        out
    }

    /// Quadrature mass matrix ∫ e_ℓ e_m dx.
    pub fn mass_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        let nq = self.quadrature.len();
        DMatrix::from_fn(n, n, |l, m| {
            self.weighted[l * nq..(l + 1) * nq]
                .iter()
                .zip(&self.values[m * nq..(m + 1) * nq])
                .map(|(a, b)| a * b)
                .sum()
        })
    }

    /// Quadrature Dirichlet form ∫ ∇e_ℓ·∇e_m dx.
    pub fn gradient_gram(&self) -> DMatrix<f64> {
        let n = self.n();
        let nq = self.quadrature.len();
        let w = self.quadrature.weights();
        DMatrix::from_fn(n, n, |l, m| {
            (0..self.dim())
                .map(|a| {
                    let g = &self.gradients[a];
                    (0..nq).map(|q| w[q] * g[l * nq + q] * g[m * nq + q]).sum::<f64>()
                })
                .sum()
        })
    }

    /// Σ λ_ℓ u_ℓ², the exact Dirichlet energy ∫|∇u|² of a coefficient vector.
    pub fn dirichlet_energy(&self, coeffs: &[f64]) -> f64 {
        coeffs.iter().zip(&self.eigenvalues).map(|(c, l)| l * c * c).sum()
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n() {
            return Err(Error::DimensionMismatch {
                what: "coefficient vector",
                expected: self.n(),
                found: len,
            });
        }
        Ok(())
    }
}

fn eval_mode(bcs: &[AxisBoundary], lengths: &[f64], indices: &[usize], x: &[f64]) -> (f64, [f64; 2]) {
    match bcs.len() {
        1 => {
            let v = bcs[0].value(indices[0], lengths[0], x[0]);
            let d = bcs[0].derivative(indices[0], lengths[0], x[0]);
            (v, [d, 0.0])
        }
        _ => {
            let vx = bcs[0].value(indices[0], lengths[0], x[0]);
            let vy = bcs[1].value(indices[1], lengths[1], x[1]);
            let dx = bcs[0].derivative(indices[0], lengths[0], x[0]);
            let dy = bcs[1].derivative(indices[1], lengths[1], x[1]);
            (vx * vy, [dx * vy, vx * dy])
        }
    }
}

/// Which conductive medium a stiffness matrix belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Medium {
    Intra,
    Extra,
}

/// Fiber orientation as an angle field θ(x) measured from the x axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FiberField {
    /// θ ≡ angle.
    Uniform { angle: f64 },
    /// θ(x, y) = angle + rate·y: fibers rotating through the thickness.
    Rotating { angle: f64, rate: f64 },
}

impl FiberField {
    pub fn direction(&self, x: &[f64]) -> [f64; 2] {
        let theta = match *self {
            FiberField::Uniform { angle } => angle,
            FiberField::Rotating { angle, rate } => angle + rate * x.get(1).copied().unwrap_or(0.0),
        };
        [theta.cos(), theta.sin()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ConductivityKind {
    /// Constant tensors with the fiber along the x axis: M_j = diag(σ_l, σ_t).
    Constant,
    /// M_j(x) = σ_t I + (σ_l − σ_t) a(x) a(x)ᵀ with a unit fiber field a(x).
    Axisymmetric { fiber: FiberField },
}

/// The intra- and extracellular conductivity tensor fields (M_i, M_e).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConductivityField {
    pub dim: usize,
    pub kind: ConductivityKind,
    pub sigma_l_i: f64,
    pub sigma_t_i: f64,
    pub sigma_l_e: f64,
    pub sigma_t_e: f64,
}

/// Result of checking symmetry, ellipticity and the fiber normalization at
/// every quadrature point.
#[derive(Clone, Debug, Serialize)]
pub struct EllipticityReport {
    pub m: f64,
    pub big_m: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub max_asymmetry: f64,
    pub max_fiber_norm_error: f64,
    pub ok: bool,
}

impl ConductivityField {
    pub fn isotropic(dim: usize, sigma_i: f64, sigma_e: f64) -> Result<Self> {
        Self::new(dim, ConductivityKind::Constant, sigma_i, sigma_i, sigma_e, sigma_e)
    }

    pub fn new(
        dim: usize,
        kind: ConductivityKind,
        sigma_l_i: f64,
        sigma_t_i: f64,
        sigma_l_e: f64,
        sigma_t_e: f64,
    ) -> Result<Self> {
        let field = Self {
            dim,
            kind,
            sigma_l_i,
            sigma_t_i,
            sigma_l_e,
            sigma_t_e,
        };
        field.validate()?;
        Ok(field)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::param("conductivity.dim", "must be 1 or 2"));
        }
        for (name, s) in [
            ("sigma_l_i", self.sigma_l_i),
            ("sigma_t_i", self.sigma_t_i),
            ("sigma_l_e", self.sigma_l_e),
            ("sigma_t_e", self.sigma_t_e),
        ] {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::param(name, format!("conductivity must be positive, got {s}")));
            }
        }
        Ok(())
    }

    fn sigmas(&self, medium: Medium) -> (f64, f64) {
        match medium {
            Medium::Intra => (self.sigma_l_i, self.sigma_t_i),
            Medium::Extra => (self.sigma_l_e, self.sigma_t_e),
        }
    }

    /// M_j(x) as a 2×2 array; in 1D only the `[0][0]` entry is meaningful.
    pub fn tensor(&self, medium: Medium, x: &[f64]) -> [[f64; 2]; 2] {
        let (sl, st) = self.sigmas(medium);
        if self.dim == 1 {
            return [[sl, 0.0], [0.0, 0.0]];
        }
        let a = self.fiber_direction(x);
        let d = sl - st;
        let off = d * a[0] * a[1];
        [[st + d * a[0] * a[0], off], [off, st + d * a[1] * a[1]]]
    }

    pub fn fiber_direction(&self, x: &[f64]) -> [f64; 2] {
        match self.kind {
            ConductivityKind::Constant => [1.0, 0.0],
            ConductivityKind::Axisymmetric { fiber } => fiber.direction(x),
        }
    }

    /// Ellipticity constants (m, M) bounding ξᵀM_j(x)ξ/|ξ|² for both media.
    pub fn ellipticity(&self) -> (f64, f64) {
        let vals: Vec<f64> = if self.dim == 1 {
            vec![self.sigma_l_i, self.sigma_l_e]
        } else {
            vec![self.sigma_l_i, self.sigma_t_i, self.sigma_l_e, self.sigma_t_e]
        };
        let m = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let big_m = vals.iter().copied().fold(0.0, f64::max);
        (m, big_m)
    }

    /// λ with M_i = λ·M_e, if the two media are proportional.
    pub fn proportionality(&self) -> Option<f64> {
        let lambda = self.sigma_l_i / self.sigma_l_e;
        if self.dim == 1 {
            return Some(lambda);
        }
        let lt = self.sigma_t_i / self.sigma_t_e;
        ((lambda - lt).abs() <= 1e-12 * lambda.abs().max(1.0)).then_some(lambda)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            sigma_l_i: factor * self.sigma_l_i,
            sigma_t_i: factor * self.sigma_t_i,
            sigma_l_e: factor * self.sigma_l_e,
            sigma_t_e: factor * self.sigma_t_e,
            ..self.clone()
        }
    }

    /// Checks symmetry, (m, M) bounds and |a(x)| = 1 at every quadrature point.
    pub fn check(&self, basis: &BasisSet) -> Result<EllipticityReport> {
        self.check_dim(basis)?;
        let (m, big_m) = self.ellipticity();
        let quad = basis.quadrature();
        let mut report = EllipticityReport {
            m,
            big_m,
            min_eigenvalue: f64::INFINITY,
            max_eigenvalue: f64::NEG_INFINITY,
            max_asymmetry: 0.0,
            max_fiber_norm_error: 0.0,
            ok: true,
        };
        for q in 0..quad.len() {
            let x = quad.point(q);
            let a = self.fiber_direction(x);
            report.max_fiber_norm_error = report
                .max_fiber_norm_error
                .max(((a[0] * a[0] + a[1] * a[1]).sqrt() - 1.0).abs());
            for medium in [Medium::Intra, Medium::Extra] {
                let t = self.tensor(medium, x);
                let (lo, hi) = if self.dim == 1 {
                    (t[0][0], t[0][0])
                } else {
                    report.max_asymmetry = report.max_asymmetry.max((t[0][1] - t[1][0]).abs());
                    sym2_eigenvalues(t)
                };
                report.min_eigenvalue = report.min_eigenvalue.min(lo);
                report.max_eigenvalue = report.max_eigenvalue.max(hi);
            }
        }
        let tol = 1e-12 * big_m;
        report.ok = report.min_eigenvalue >= m - tol
            && report.max_eigenvalue <= big_m + tol
            && report.max_asymmetry == 0.0
            && report.max_fiber_norm_error <= 1e-12;
        Ok(report)
    }

    fn check_dim(&self, basis: &BasisSet) -> Result<()> {
        if self.dim != basis.dim() {
            return Err(Error::DimensionMismatch {
                what: "conductivity vs basis dimension",
                expected: basis.dim(),
                found: self.dim,
            });
        }
        Ok(())
    }
}

fn sym2_eigenvalues(t: [[f64; 2]; 2]) -> (f64, f64) {
    let tr = t[0][0] + t[1][1];
    let det = t[0][0] * t[1][1] - t[0][1] * t[1][0];
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    (0.5 * tr - disc, 0.5 * tr + disc)
}

/// Stiffness matrix K_j[ℓ, m] = ∫ M_j ∇e_m · ∇e_ℓ dx.
///
/// Only the upper triangle is integrated; the lower one is mirrored so the
/// result is exactly symmetric.
pub fn assemble_stiffness(
    basis: &BasisSet,
    conductivity: &ConductivityField,
    which: Medium,
) -> Result<DMatrix<f64>> {
    conductivity.check_dim(basis)?;
    let n = basis.n();
    let nq = basis.quadrature().len();
    let dim = basis.dim();
    let w = basis.quadrature().weights();

    // Weighted tensor entries per quadrature point.
    let tensors: Vec<[[f64; 2]; 2]> = (0..nq)
        .map(|q| {
            let t = conductivity.tensor(which, basis.quadrature().point(q));
            [[w[q] * t[0][0], w[q] * t[0][1]], [w[q] * t[1][0], w[q] * t[1][1]]]
        })
        .collect();

    let mut k = DMatrix::zeros(n, n);
    let mut flux = vec![[0.0; 2]; nq];
    for m in 0..n {
        for (q, f) in flux.iter_mut().enumerate() {
            let mut g = [0.0; 2];
            for (a, ga) in g.iter_mut().enumerate().take(dim) {
                *ga = basis.gradient_at(a, m, q);
            }
            let t = &tensors[q];
            *f = [t[0][0] * g[0] + t[0][1] * g[1], t[1][0] * g[0] + t[1][1] * g[1]];
        }
        for l in 0..=m {
            let mut s = 0.0;
            for (q, f) in flux.iter().enumerate() {
                for (a, fa) in f.iter().enumerate().take(dim) {
                    s += basis.gradient_at(a, l, q) * fa;
                }
            }
            k[(l, m)] = s;
            k[(m, l)] = s;
        }
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_1d(n: usize) -> BasisSet {
        BasisSet::build(&Domain::unit_interval(), n, None).unwrap()
    }

    #[test]
    fn first_mode_matches_sturm_liouville_pair() {
        let basis = unit_1d(1);
        assert_abs_diff_eq!(basis.eigenvalues()[0], (PI / 2.0).powi(2), epsilon = 1e-14);
        assert_abs_diff_eq!(basis.eigenvalues()[0], 2.4674011, epsilon = 1e-6);
        for &x in &[0.1, 0.37, 0.8] {
            let v = basis.evaluate(&[1.0], &[vec![x]]).unwrap()[0];
            assert_abs_diff_eq!(v, 2f64.sqrt() * (PI * x / 2.0).sin(), epsilon = 1e-14);
        }
        // high-order quadrature, independent of the basis tables
        let rule = GaussLegendre::new(NonZeroUsize::new(60).unwrap());
        let norm = rule.integrate(0.0, 1.0, |x| 2.0 * (PI * x / 2.0).sin().powi(2));
        assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-13);
    }

    #[test]
    fn second_mode_and_cross_gradient() {
        let basis = unit_1d(2);
        assert_abs_diff_eq!(basis.eigenvalues()[1], (1.5 * PI).powi(2), epsilon = 1e-12);
        assert_abs_diff_eq!(basis.eigenvalues()[1], 22.2066099, epsilon = 1e-6);
        let g = basis.gradient_gram();
        assert!(g[(0, 1)].abs() < 1e-10);
    }

    #[test]
    fn mass_and_stiffness_are_diagonal() {
        for domain in [
            Domain::unit_interval(),
            Domain::rectangle(1.0, 0.5, [Face::XLow, Face::YHigh]).unwrap(),
            Domain::rectangle(2.0, 1.0, [Face::XLow, Face::XHigh]).unwrap(),
        ] {
            let basis = BasisSet::build(&domain, 20, None).unwrap();
            let mass = basis.mass_matrix();
            let grad = basis.gradient_gram();
            for l in 0..basis.n() {
                for m in 0..basis.n() {
                    let id = if l == m { 1.0 } else { 0.0 };
                    assert!((mass[(l, m)] - id).abs() < 1e-10, "mass {l},{m}");
                    let lam = if l == m { basis.eigenvalues()[l] } else { 0.0 };
                    assert!((grad[(l, m)] - lam).abs() < 1e-10 * lam.max(1.0), "grad {l},{m}");
                }
            }
        }
    }

    #[test]
    fn modes_sorted_with_lexicographic_ties() {
        let domain = Domain::rectangle(1.0, 1.0, [Face::XLow, Face::XHigh, Face::YLow, Face::YHigh]).unwrap();
        let basis = BasisSet::build(&domain, 3, None).unwrap();
        let idx: Vec<Vec<usize>> = basis.modes().iter().map(|m| m.indices.clone()).collect();
        assert_eq!(idx, vec![vec![1, 1], vec![1, 2], vec![2, 1]]);
        assert!(basis.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn neumann_neumann_axis_includes_constant_mode() {
        let domain = Domain::rectangle(1.0, 1.0, [Face::YLow]).unwrap();
        let basis = BasisSet::build(&domain, 4, None).unwrap();
        assert_eq!(basis.modes()[0].indices, vec![0, 1]);
        assert_abs_diff_eq!(basis.eigenvalues()[0], (PI / 2.0).powi(2), epsilon = 1e-12);
    }

    #[test]
    fn basis_vanishes_on_dirichlet_faces() {
        let domain = Domain::rectangle(1.0, 2.0, [Face::XHigh, Face::YLow]).unwrap();
        let basis = BasisSet::build(&domain, 12, None).unwrap();
        let coeffs: Vec<f64> = (0..12).map(|i| 1.0 + i as f64).collect();
        for face in domain.dirichlet_faces() {
            let pts = domain.face_points(*face, 17);
            for v in basis.evaluate(&coeffs, &pts).unwrap() {
                assert!(v.abs() < 1e-12, "{face:?}: {v}");
            }
        }
    }

    #[test]
    fn rejects_bad_requests() {
        assert!(BasisSet::build(&Domain::unit_interval(), 0, None).is_err());
        assert!(Domain::interval(1.0, []).is_err());
        assert!(Domain::interval(-1.0, [Face::XLow]).is_err());
        assert!(Domain::interval(1.0, [Face::YLow]).is_err());
        let basis = unit_1d(3);
        assert!(basis.evaluate(&[1.0, 2.0], &[vec![0.5]]).is_err());
    }

    #[test]
    fn neumann_faces_complement_dirichlet() {
        let domain = Domain::rectangle(1.0, 1.0, [Face::XLow, Face::YHigh]).unwrap();
        assert_eq!(domain.neumann_faces(), vec![Face::XHigh, Face::YLow]);
    }

    #[test]
    fn projection_examples() {
        let basis = unit_1d(5);
        let e2 = |x: &[f64]| basis.eval_mode(1, x).0;
        let p = basis.project(e2);
        for (l, c) in p.iter().enumerate() {
            let want = if l == 1 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(*c, want, epsilon = 1e-10);
        }
        assert!(basis.project(|_| 0.0).iter().all(|c| *c == 0.0));
        let f = |x: &[f64]| 3.0 * basis.eval_mode(0, x).0 - 5.0 * basis.eval_mode(2, x).0;
        let p = basis.project(f);
        let want = [3.0, 0.0, -5.0, 0.0, 0.0];
        for (a, b) in p.iter().zip(want) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let basis = unit_1d(8);
        let f = |x: &[f64]| (-(x[0] - 0.4).powi(2) / 0.02).exp() + x[0];
        let p1 = basis.project(f);
        let samples = basis.synthesize(&p1).unwrap();
        let p2 = basis.project_samples(&samples).unwrap();
        for (a, b) in p1.iter().zip(&p2) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn mode_integrals_match_quadrature() {
        let domain = Domain::rectangle(1.5, 1.0, [Face::XLow, Face::YLow, Face::YHigh]).unwrap();
        let basis = BasisSet::build(&domain, 10, None).unwrap();
        let exact = basis.mode_integrals();
        let quad = basis.project(|_| 1.0);
        for (a, b) in exact.iter().zip(&quad) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn identity_conductivity_gives_eigenvalue_stiffness() {
        let domain = Domain::rectangle(1.0, 1.0, [Face::XLow]).unwrap();
        let basis = BasisSet::build(&domain, 10, None).unwrap();
        let cond = ConductivityField::isotropic(2, 1.0, 1.0).unwrap();
        let k = assemble_stiffness(&basis, &cond, Medium::Intra).unwrap();
        for l in 0..10 {
            for m in 0..10 {
                let want = if l == m { basis.eigenvalues()[l] } else { 0.0 };
                assert!((k[(l, m)] - want).abs() < 1e-9, "{l},{m}");
            }
        }
    }

    #[test]
    fn stiffness_is_bilinear_and_symmetric() {
        let domain = Domain::rectangle(1.0, 1.0, [Face::XLow, Face::YLow]).unwrap();
        let basis = BasisSet::build(&domain, 12, None).unwrap();
        let cond = ConductivityField::new(
            2,
            ConductivityKind::Axisymmetric {
                fiber: FiberField::Rotating { angle: 0.3, rate: 1.2 },
            },
            3.0,
            0.3,
            2.0,
            1.0,
        )
        .unwrap();
        for medium in [Medium::Intra, Medium::Extra] {
            let k = assemble_stiffness(&basis, &cond, medium).unwrap();
            let k2 = assemble_stiffness(&basis, &cond.scaled(2.0), medium).unwrap();
            assert_eq!(k, k.transpose());
            assert!((k2 - 2.0 * &k).abs().max() < 1e-12 * k.abs().max());
        }
    }

    #[test]
    fn stiffness_dimension_mismatch() {
        let basis = unit_1d(3);
        let cond = ConductivityField::isotropic(2, 1.0, 1.0).unwrap();
        assert!(matches!(
            assemble_stiffness(&basis, &cond, Medium::Intra),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn ellipticity_holds_at_quadrature_points() {
        let domain = Domain::rectangle(1.0, 1.0, [Face::XLow]).unwrap();
        let basis = BasisSet::build(&domain, 6, None).unwrap();
        let cond = ConductivityField::new(
            2,
            ConductivityKind::Axisymmetric {
                fiber: FiberField::Rotating { angle: -0.5, rate: 2.0 },
            },
            3.0,
            0.3,
            2.0,
            1.35,
        )
        .unwrap();
        let report = cond.check(&basis).unwrap();
        assert!(report.ok, "{report:?}");
        assert_eq!((report.m, report.big_m), (0.3, 3.0));
    }

    #[test]
    fn proportional_media_detected() {
        let c = ConductivityField::new(2, ConductivityKind::Constant, 3.0, 1.5, 1.0, 0.5).unwrap();
        assert_abs_diff_eq!(c.proportionality().unwrap(), 3.0);
        let c = ConductivityField::new(2, ConductivityKind::Constant, 3.0, 1.0, 1.0, 0.5).unwrap();
        assert!(c.proportionality().is_none());
    }
}
