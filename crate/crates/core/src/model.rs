//! Problem instances for blind calibration.
//!
//! The observation model is `Y = D₀ M₀ X₀`: a known Gaussian measurement
//! matrix `M₀` (m × N), unknown positive per-measure gains `D₀ = diag(d)`,
//! and `L` unknown `k`-sparse signals stacked as the columns of `X₀`.
//!
//! The naive blind formulation `min ‖X‖₁ s.t. Y = D M₀ X` is bilinear in
//! `(D, X)` and is never solved directly. The solver works with the inverse
//! gains `Δ = D⁻¹` instead, see [`crate::solver`].

use crate::error::{Error, Result};
use crate::matio;
use crate::rng::{self, Stream};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Problem sizes: ambient dimension `n`, measures `m`, sparsity `k`, signals `l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dimensions {
    #[serde(rename = "N")]
    pub n: usize,
    pub m: usize,
    pub k: usize,
    #[serde(rename = "L")]
    pub l: usize,
}

impl Dimensions {
    pub fn new(n: usize, m: usize, k: usize, l: usize) -> Result<Self> {
        let dims = Self { n, m, k, l };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.m > self.n {
            return Err(Error::InvalidDimensions(format!(
                "need 1 <= m <= N, got m={} N={}",
                self.m, self.n
            )));
        }
        if self.k > self.n {
            return Err(Error::InvalidDimensions(format!(
                "need k <= N, got k={} N={}",
                self.k, self.n
            )));
        }
        if self.l == 0 {
            return Err(Error::InvalidDimensions("need L >= 1".into()));
        }
        Ok(())
    }

    /// Undersampling ratio m/N.
    pub fn delta(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    /// Sparsity ratio k/m.
    pub fn rho(&self) -> f64 {
        self.k as f64 / self.m as f64
    }
}

/// Per-measure gains `dᵢ`, all nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct GainVector(DVector<f64>);

impl GainVector {
    pub fn new(d: DVector<f64>) -> Result<Self> {
        if let Some(i) = d.iter().position(|v| *v == 0.0 || !v.is_finite()) {
            return Err(Error::param(
                "gains",
                format!("gain {i} is {} (must be finite and nonzero)", d[i]),
            ));
        }
        Ok(Self(d))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }

    /// Elementwise reciprocal; the inverse gains `δᵢ = 1/dᵢ`.
    pub fn inverse(&self) -> GainVector {
        GainVector(self.0.map(|v| 1.0 / v))
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

/// Idealized measurement matrix `M₀` (m × N).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrix(DMatrix<f64>);

impl MeasurementMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("m0", "entries must be finite"));
        }
        Ok(Self(entries))
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }
}

/// Signals stacked column-wise (N × L) with their nominal support size.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    pub entries: DMatrix<f64>,
    pub support_size: usize,
}

/// One fully specified trial: `Y = diag(d) · M₀ · X₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceRecord", into = "InstanceRecord")]
pub struct ProblemInstance {
    pub dims: Dimensions,
    pub sigma: f64,
    pub m0: MeasurementMatrix,
    pub gains: GainVector,
    pub signals: SignalMatrix,
    pub observations: DMatrix<f64>,
    pub seed: u64,
}

/// Relative Frobenius tolerance for the construction identity.
pub const CONSTRUCTION_TOLERANCE: f64 = 1e-12;

/// Draw an m × N matrix of i.i.d. standard normal entries.
pub fn gen_measurement_matrix(dims: &Dimensions, rng: &mut Stream) -> MeasurementMatrix {
    let entries = DMatrix::from_fn(dims.m, dims.n, |_, _| rng.sample::<f64, _>(StandardNormal));
    MeasurementMatrix(entries)
}

/// Log-normal gains `dᵢ = exp(gᵢ)`, `gᵢ ~ N(0, sigma²)`.
pub fn gen_gains(m: usize, sigma: f64, rng: &mut Stream) -> Result<GainVector> {
    check_sigma(sigma)?;
    if m == 0 {
        return Err(Error::InvalidDimensions("need m >= 1".into()));
    }
    let d = DVector::from_fn(m, |_, _| {
        let g: f64 = StandardNormal.sample(rng);
        (sigma * g).exp()
    });
    GainVector::new(d)
}

/// `L` independent columns, each with a uniformly drawn `k`-subset support
/// holding i.i.d. standard normal values.
pub fn gen_sparse_signals(dims: &Dimensions, rng: &mut Stream) -> SignalMatrix {
    let mut entries = DMatrix::zeros(dims.n, dims.l);
    for mut col in entries.column_iter_mut() {
        let support = rand::seq::index::sample(rng, dims.n, dims.k);
        for i in support.iter() {
            col[i] = rng.sample(StandardNormal);
        }
    }
    SignalMatrix {
        entries,
        support_size: dims.k,
    }
}

pub fn make_instance(dims: Dimensions, sigma: f64, seed: u64) -> Result<ProblemInstance> {
    dims.validate()?;
    check_sigma(sigma)?;
    let m0 = gen_measurement_matrix(&dims, &mut rng::substream(seed, "measurement_matrix"));
    let gains = gen_gains(dims.m, sigma, &mut rng::substream(seed, "gains"))?;
    let signals = gen_sparse_signals(&dims, &mut rng::substream(seed, "signals"));
    let observations = apply_gains(gains.values(), &(m0.entries() * &signals.entries));
    let inst = ProblemInstance {
        dims,
        sigma,
        m0,
        gains,
        signals,
        observations,
        seed,
    };
    inst.check_construction()?;
    Ok(inst)
}

/// `diag(d) · a`
pub fn apply_gains(d: &DVector<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = a.clone();
    for (mut row, di) in out.row_iter_mut().zip(d.iter()) {
        row *= *di;
    }
    out
}

/// Spread of the per-measure gain error in decibels: `20σ / ln 10`.
pub fn decalibration_db(sigma: f64) -> f64 {
    20.0 * sigma / std::f64::consts::LN_10
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::param("sigma", format!("must be finite and >= 0, got {sigma}")));
    }
    Ok(())
}

impl ProblemInstance {
    /// `‖Y − diag(d)·M₀·X₀‖_F / ‖Y‖_F` (absolute when `Y = 0`).
    pub fn construction_error(&self) -> f64 {
        let rebuilt = apply_gains(self.gains.values(), &(self.m0.entries() * &self.signals.entries));
        let err = (&self.observations - rebuilt).norm();
        let scale = self.observations.norm();
        if scale > 0.0 {
            err / scale
        } else {
            err
        }
    }

    pub fn check_construction(&self) -> Result<()> {
        let e = self.construction_error();
        if e.is_nan() || e > CONSTRUCTION_TOLERANCE {
            return Err(Error::Construction(e));
        }
        Ok(())
    }

    /// Scale factor `α = m / Σ(1/dᵢ)` mapping the planted pair onto the trace-normalized one.
    pub fn scale_factor(&self) -> f64 {
        self.dims.m as f64 / self.gains.inverse().values().sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Serialize, Deserialize)]
struct InstanceRecord {
    dims: Dimensions,
    sigma: f64,
    seed: u64,
    #[serde(with = "matio::text")]
    m0: DMatrix<f64>,
    #[serde(with = "matio::text")]
    gains: DMatrix<f64>,
    #[serde(with = "matio::text")]
    signals: DMatrix<f64>,
    #[serde(with = "matio::text")]
    observations: DMatrix<f64>,
}

impl From<ProblemInstance> for InstanceRecord {
    fn from(p: ProblemInstance) -> Self {
        let gains = p.gains.into_inner();
        let m = gains.len();
        InstanceRecord {
            dims: p.dims,
            sigma: p.sigma,
            seed: p.seed,
            m0: p.m0.0,
            gains: DMatrix::from_column_slice(m, 1, gains.as_slice()),
            signals: p.signals.entries,
            observations: p.observations,
        }
    }
}

impl TryFrom<InstanceRecord> for ProblemInstance {
    type Error = Error;

    fn try_from(r: InstanceRecord) -> Result<Self> {
        let d = r.dims;
        d.validate()?;
        check_sigma(r.sigma)?;
        let expect = |name: &str, a: &DMatrix<f64>, rows: usize, cols: usize| {
            if a.shape() != (rows, cols) {
                Err(Error::shape(
                    format!("{name} {rows}x{cols}"),
                    format!("{}x{}", a.nrows(), a.ncols()),
                ))
            } else {
                Ok(())
            }
        };
        expect("m0", &r.m0, d.m, d.n)?;
        expect("gains", &r.gains, d.m, 1)?;
        expect("signals", &r.signals, d.n, d.l)?;
        expect("observations", &r.observations, d.m, d.l)?;
        let inst = ProblemInstance {
            dims: d,
            sigma: r.sigma,
            m0: MeasurementMatrix::new(r.m0)?,
            gains: GainVector::new(DVector::from_column_slice(r.gains.as_slice()))?,
            signals: SignalMatrix {
                entries: r.signals,
                support_size: d.k,
            },
            observations: r.observations,
            seed: r.seed,
        };
        inst.check_construction()?;
        Ok(inst)
    }
}
