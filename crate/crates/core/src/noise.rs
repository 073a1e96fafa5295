//! Truncated cylindrical Wiener processes and noise amplitudes.
//!
//! Amplitudes come from the family β_k(v) = γ_k(b₀ + b₁v) with γ_k = s₀/k.
//! With C_β = 2(b₀² + b₁²)·Σ_k γ_k² = (π²/3)(b₀² + b₁²)s₀² it satisfies
//!
//! ```text
//! Σ_k |β_k(v)|²              ≤ C_β (1 + v²)
//! Σ_k |β_k(v₁) − β_k(v₂)|²   ≤ C_β |v₁ − v₂|²
//! ```
//!
//! Increments for W^v and W^w are drawn from one seed. Mode k of W^v uses
//! ChaCha8 stream `4k + STREAM_V` and mode k of W^w uses `4k + STREAM_W`, so
//! no two processes share random numbers and the first n modes of a run
//! with more modes coincide with a run at n.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BasisSet;

/// ChaCha stream offset of the W^v increments.
pub const STREAM_V: u64 = 1;
/// ChaCha stream offset of the W^w increments.
pub const STREAM_W: u64 = 2;

pub fn mode_stream(offset: u64, k: usize) -> u64 {
    4 * k as u64 + offset
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Additive,
    MultiplicativeAffine,
}

/// Amplitude family β_k(v) = (s₀/k)(b₀ + b₁v), k = 1..truncation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub strength: f64,
    pub offset: f64,
    pub slope: f64,
    pub truncation: usize,
}

impl NoiseModel {
    pub fn affine(strength: f64, offset: f64, slope: f64, truncation: usize) -> Result<Self> {
        let model = Self {
            strength,
            offset,
            slope,
            truncation,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn additive(strength: f64, truncation: usize) -> Result<Self> {
        Self::affine(strength, 1.0, 0.0, truncation)
    }

    pub fn multiplicative(strength: f64, truncation: usize) -> Result<Self> {
        Self::affine(strength, 0.0, 1.0, truncation)
    }

    pub fn zero(truncation: usize) -> Self {
        Self {
            strength: 0.0,
            offset: 0.0,
            slope: 0.0,
            truncation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.truncation == 0 {
            return Err(Error::param("noise.truncation", "must be at least 1"));
        }
        if ![self.strength, self.offset, self.slope].iter().all(|x| x.is_finite()) {
            return Err(Error::param("noise", "coefficients must be finite"));
        }
        if self.strength < 0.0 {
            return Err(Error::param("noise.strength", "must be nonnegative"));
        }
        Ok(())
    }

    pub fn with_truncation(&self, truncation: usize) -> Self {
        Self {
            truncation,
            ..self.clone()
        }
    }

    pub fn kind(&self) -> NoiseKind {
        if self.slope == 0.0 {
            NoiseKind::Additive
        } else {
            NoiseKind::MultiplicativeAffine
        }
    }

    pub fn is_zero(&self) -> bool {
        self.strength == 0.0 || (self.offset == 0.0 && self.slope == 0.0)
    }

    /// γ_k for 1-based k.
    pub fn gamma(&self, k: usize) -> f64 {
        self.strength / k as f64
    }

    pub fn gammas(&self) -> Vec<f64> {
        (1..=self.truncation).map(|k| self.gamma(k)).collect()
    }

    /// β_k(v) for 1-based k.
    pub fn beta(&self, k: usize, v: f64) -> f64 {
        self.gamma(k) * (self.offset + self.slope * v)
    }

    /// Σ_{k ≤ truncation} γ_k².
    pub fn gamma_sq_sum(&self) -> f64 {
        (1..=self.truncation).map(|k| self.gamma(k).powi(2)).sum()
    }

    /// C_β of the growth and Lipschitz conditions, valid for every truncation.
    pub fn c_beta(&self) -> f64 {
        let full = self.strength.powi(2) * std::f64::consts::PI.powi(2) / 6.0;
        2.0 * (self.offset.powi(2) + self.slope.powi(2)) * full
    }

    pub fn growth_margin(&self, v: f64) -> f64 {
        let lhs: f64 = (1..=self.truncation).map(|k| self.beta(k, v).powi(2)).sum();
        self.c_beta() * (1.0 + v * v) - lhs
    }

    pub fn lipschitz_margin(&self, v1: f64, v2: f64) -> f64 {
        let lhs: f64 = (1..=self.truncation)
            .map(|k| (self.beta(k, v1) - self.beta(k, v2)).powi(2))
            .sum();
        self.c_beta() * (v1 - v2).powi(2) - lhs
    }

    /// p_ℓ = ∫ (b₀ + b₁v) e_ℓ dx from samples of v at the quadrature points,
    /// so that β_{k,ℓ}(v) = γ_k p_ℓ.
    pub fn spatial_profile_into(&self, v_samples: &[f64], basis: &BasisSet, scratch: &mut Vec<f64>, out: &mut [f64]) {
        scratch.clear();
        scratch.extend(v_samples.iter().map(|v| self.offset + self.slope * v));
        basis.project_samples_into(scratch, out);
    }

    /// The n × truncation matrix β_{k,ℓ}(v) = (β_k(v), e_ℓ), rows ℓ, columns k.
    pub fn projected_amplitudes(&self, v_coeffs: &[f64], basis: &BasisSet) -> Result<DMatrix<f64>> {
        let v = basis.synthesize(v_coeffs)?;
        let mut profile = vec![0.0; basis.n()];
        self.spatial_profile_into(&v, basis, &mut Vec::new(), &mut profile);
        let gammas = self.gammas();
        Ok(DMatrix::from_fn(basis.n(), self.truncation, |l, k| gammas[k] * profile[l]))
    }

    /// Squared Hilbert–Schmidt norm Σ_{k ≤ truncation} ‖β_k(v)‖²_{L²(Ω)} by quadrature.
    pub fn hs_norm_sq(&self, v_coeffs: &[f64], basis: &BasisSet) -> Result<f64> {
        let v = basis.synthesize(v_coeffs)?;
        let sq: Vec<f64> = v.iter().map(|x| (self.offset + self.slope * x).powi(2)).collect();
        Ok(self.gamma_sq_sum() * basis.quadrature().integrate(&sq))
    }
}

/// Norm of Σ a_k ψ_k in the auxiliary space U₀: (Σ a_k² b_k²)^{1/2}.
pub fn u0_norm(series_coeffs: &[f64], weights: &[f64]) -> Result<f64> {
    if weights.len() < series_coeffs.len() {
        return Err(Error::DimensionMismatch {
            what: "U0 weights",
            expected: series_coeffs.len(),
            found: weights.len(),
        });
    }
    if weights.contains(&0.0) {
        return Err(Error::param("b", "U0 weights must be nonzero"));
    }
    Ok(series_coeffs
        .iter()
        .zip(weights)
        .map(|(a, b)| (a * b).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// b_k = 1/k, k = 1..=n.
pub fn harmonic_weights(n: usize) -> Vec<f64> {
    (1..=n).map(|k| 1.0 / k as f64).collect()
}

/// Brownian increments ΔW^v_k, ΔW^w_k for k = 1..n over `steps` steps,
/// stored step-major: entry `[step * n + k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WienerIncrements {
    pub n: usize,
    pub steps: usize,
    pub dt: f64,
    pub seed: u64,
    dw_v: Vec<f64>,
    dw_w: Vec<f64>,
}

/// JSON sidecar describing a binary increment dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncrementManifest {
    pub format: String,
    pub version: u32,
    pub n: usize,
    pub steps: usize,
    pub dt: f64,
    pub seed: u64,
    pub stream_v: u64,
    pub stream_w: u64,
    pub layout: String,
    pub byte_order: String,
    pub value_type: String,
}

const INCREMENT_FORMAT: &str = "bidomain-wiener-increments";

impl WienerIncrements {
    pub fn sample(n: usize, steps: usize, dt: f64, seed: u64) -> Result<Self> {
        Self::check_shape(n, steps, dt)?;
        let scale = dt.sqrt();
        let draw = |offset: u64| -> Vec<f64> {
            let mut out = vec![0.0; n * steps];
            for k in 0..n {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(mode_stream(offset, k));
                for s in 0..steps {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    out[s * n + k] = scale * z;
                }
            }
            out
        };
        Ok(Self {
            n,
            steps,
            dt,
            seed,
            dw_v: draw(STREAM_V),
            dw_w: draw(STREAM_W),
        })
    }

    pub fn zeros(n: usize, steps: usize, dt: f64) -> Result<Self> {
        Self::check_shape(n, steps, dt)?;
        Ok(Self {
            n,
            steps,
            dt,
            seed: 0,
            dw_v: vec![0.0; n * steps],
            dw_w: vec![0.0; n * steps],
        })
    }

    fn check_shape(n: usize, steps: usize, dt: f64) -> Result<()> {
        if n == 0 {
            return Err(Error::param("n", "need at least one mode"));
        }
        if steps == 0 {
            return Err(Error::param("steps", "need at least one step"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::param("dt", "time step must be positive"));
        }
        Ok(())
    }

    pub fn step_v(&self, step: usize) -> &[f64] {
        &self.dw_v[step * self.n..(step + 1) * self.n]
    }

    pub fn step_w(&self, step: usize) -> &[f64] {
        &self.dw_w[step * self.n..(step + 1) * self.n]
    }

    pub fn dw_v(&self) -> &[f64] {
        &self.dw_v
    }

    pub fn dw_w(&self) -> &[f64] {
        &self.dw_w
    }

    /// W^v_k(t_m) for each step boundary m = 0..=steps.
    pub fn cumulative_v(&self, k: usize) -> Vec<f64> {
        let mut acc = 0.0;
        std::iter::once(0.0)
            .chain((0..self.steps).map(|s| {
                acc += self.dw_v[s * self.n + k];
                acc
            }))
            .collect()
    }

    pub fn manifest(&self) -> IncrementManifest {
        IncrementManifest {
            format: INCREMENT_FORMAT.into(),
            version: 1,
            n: self.n,
            steps: self.steps,
            dt: self.dt,
            seed: self.seed,
            stream_v: STREAM_V,
            stream_w: STREAM_W,
            layout: "dw_v[step][k] for all steps, then dw_w[step][k]; mode k on stream 4k + offset".into(),
            byte_order: "little-endian".into(),
            value_type: "f64".into(),
        }
    }

    /// Writes `<path>` (raw little-endian f64) and `<path>.json` (manifest).
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for x in self.dw_v.iter().chain(&self.dw_w) {
            out.write_all(&x.to_le_bytes())?;
        }
        out.flush()?;
        let sidecar = sidecar_path(path);
        serde_json::to_writer_pretty(File::create(sidecar)?, &self.manifest())?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let manifest: IncrementManifest =
            serde_json::from_reader(BufReader::new(File::open(sidecar_path(path))?))?;
        if manifest.format != INCREMENT_FORMAT || manifest.byte_order != "little-endian" {
            return Err(Error::IncrementMismatch(format!(
                "unsupported increment file `{}` ({})",
                manifest.format, manifest.byte_order
            )));
        }
        Self::check_shape(manifest.n, manifest.steps, manifest.dt)?;
        let count = manifest.n * manifest.steps;
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        if bytes.len() != 2 * count * 8 {
            return Err(Error::IncrementMismatch(format!(
                "expected {} bytes, found {}",
                2 * count * 8,
                bytes.len()
            )));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Self {
            n: manifest.n,
            steps: manifest.steps,
            dt: manifest.dt,
            seed: manifest.seed,
            dw_v: values[..count].to_vec(),
            dw_w: values[count..].to_vec(),
        })
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}
