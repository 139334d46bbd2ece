//! Learning the driver deviation function with Gaussian process regression.
//!
//! Inputs are historical speeds, targets are observed deviations from them.
//! Two posteriors are available behind one model type: a full GP and the
//! sparse DTC approximation, which conditions on a small set of inducing
//! inputs placed at equally spaced data quantiles. A fitted model is an
//! immutable snapshot; `predict` may be called concurrently and the mission
//! loop swaps snapshots between iterations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, thiserror::Error)]
pub enum GprError {
    #[error("need at least 2 observations to fit, got {0}")]
    InsufficientData(usize),
    #[error("invalid kernel configuration: {0}")]
    InvalidKernel(String),
    #[error("kernel matrix not positive definite even with jitter {max_jitter:e}")]
    Conditioning { max_jitter: f64 },
    #[error("inducing count {requested} outside 1..={max}")]
    InvalidInducingCount { requested: usize, max: usize },
}

/// How observations are retained as the mission progresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityPolicy {
    /// Keep everything (all data within a mission).
    Unbounded,
    /// Keep only the most recent observations.
    SlidingWindow(usize),
}

/// Input/target pairs: historical speeds and deviation observations.
#[derive(Debug, Clone)]
pub struct Dataset {
    xs: Vec<f64>,
    ys: Vec<f64>,
    capacity: CapacityPolicy,
}

impl Dataset {
    pub fn new(capacity: CapacityPolicy) -> Self {
        Self {
            xs: Vec::new(),
            ys: Vec::new(),
            capacity,
        }
    }

    pub fn from_pairs(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        assert_eq!(xs.len(), ys.len(), "inputs and targets must align");
        Self {
            xs,
            ys,
            capacity: CapacityPolicy::Unbounded,
        }
    }

    pub fn push(&mut self, x: f64, y: f64) {
        self.xs.push(x);
        self.ys.push(y);
        if let CapacityPolicy::SlidingWindow(w) = self.capacity {
            if self.xs.len() > w {
                let drop = self.xs.len() - w;
                self.xs.drain(..drop);
                self.ys.drain(..drop);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }
}

/// Matern smoothness, nu in {1/2, 3/2, 5/2}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaternSmoothness {
    #[serde(rename = "0.5", alias = "half")]
    Half,
    #[serde(rename = "1.5", alias = "three_halves")]
    ThreeHalves,
    #[serde(rename = "2.5", alias = "five_halves")]
    FiveHalves,
}

/// Matern kernel hyperparameters plus the observation noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub smoothness: MaternSmoothness,
    /// Length scale (m/s), > 0.
    pub length_scale: f64,
    /// Signal variance sigma_f^2 ((m/s)^2), > 0.
    pub signal_variance: f64,
    /// Observation noise variance sigma_n^2 ((m/s)^2), >= 0.
    pub noise_variance: f64,
}

impl KernelConfig {
    pub fn validate(&self) -> Result<(), GprError> {
        if !(self.length_scale > 0.0) {
            return Err(GprError::InvalidKernel(format!(
                "length_scale must be > 0, got {}",
                self.length_scale
            )));
        }
        if !(self.signal_variance > 0.0) {
            return Err(GprError::InvalidKernel(format!(
                "signal_variance must be > 0, got {}",
                self.signal_variance
            )));
        }
        if self.noise_variance < 0.0 {
            return Err(GprError::InvalidKernel(format!(
                "noise_variance must be >= 0, got {}",
                self.noise_variance
            )));
        }
        Ok(())
    }

    /// Kernel value for inputs `a`, `b`.
    pub fn eval(&self, a: f64, b: f64) -> f64 {
        let r = (a - b).abs() / self.length_scale;
        let shape = match self.smoothness {
            MaternSmoothness::Half => (-r).exp(),
            MaternSmoothness::ThreeHalves => {
                let s = 3.0_f64.sqrt() * r;
                (1.0 + s) * (-s).exp()
            }
            MaternSmoothness::FiveHalves => {
                let s = 5.0_f64.sqrt() * r;
                (1.0 + s + s * s / 3.0) * (-s).exp()
            }
        };
        self.signal_variance * shape
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GpKind {
    Full,
    Dtc,
}

enum Posterior {
    Full {
        train_x: Vec<f64>,
        chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
        alpha: DVector<f64>,
    },
    Dtc {
        inducing: Vec<f64>,
        chol_kuu: nalgebra::Cholesky<f64, nalgebra::Dyn>,
        chol_a: nalgebra::Cholesky<f64, nalgebra::Dyn>,
        weights: DVector<f64>,
    },
}

/// A fitted posterior over the deviation function.
pub struct GpModel {
    kind: GpKind,
    kernel: KernelConfig,
    /// Observed input interval [min X, max X].
    observed: (f64, f64),
    /// Jitter that was needed to factorize, 0 if none.
    jitter: f64,
    posterior: Posterior,
}

/// Jitter escalation ladder tried when a factorization fails.
const JITTERS: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Effective noise floor for the DTC weights when sigma_n = 0.
const DTC_NOISE_FLOOR: f64 = 1e-10;

impl GpModel {
    /// Fit a posterior of the requested kind. `n_inducing` is ignored for
    /// full models.
    pub fn fit(
        data: &Dataset,
        kernel: KernelConfig,
        kind: GpKind,
        n_inducing: usize,
    ) -> Result<Self, GprError> {
        kernel.validate()?;
        let m = data.len();
        if m < 2 {
            return Err(GprError::InsufficientData(m));
        }
        let observed = (
            data.xs().iter().copied().fold(f64::INFINITY, f64::min),
            data.xs().iter().copied().fold(f64::NEG_INFINITY, f64::max),
        );
        match kind {
            GpKind::Full => Self::fit_full(data, kernel, observed),
            GpKind::Dtc => {
                if n_inducing == 0 || n_inducing > m {
                    return Err(GprError::InvalidInducingCount {
                        requested: n_inducing,
                        max: m,
                    });
                }
                Self::fit_dtc(data, kernel, observed, n_inducing)
            }
        }
    }

    fn fit_full(data: &Dataset, kernel: KernelConfig, observed: (f64, f64)) -> Result<Self, GprError> {
        let m = data.len();
        let xs = data.xs();
        let mut gram = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let v = kernel.eval(xs[i], xs[j]);
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
        }
        let (chol, jitter) = factorize_with_jitter(&gram, kernel.noise_variance)?;
        let y = DVector::from_column_slice(data.ys());
        let alpha = chol.solve(&y);
        Ok(Self {
            kind: GpKind::Full,
            kernel,
            observed,
            jitter,
            posterior: Posterior::Full {
                train_x: xs.to_vec(),
                chol,
                alpha,
            },
        })
    }

    fn fit_dtc(
        data: &Dataset,
        kernel: KernelConfig,
        observed: (f64, f64),
        n_inducing: usize,
    ) -> Result<Self, GprError> {
        let inducing = inducing_quantiles(data.xs(), n_inducing);
        let u = inducing.len();
        let m = data.len();

        let mut kuu = DMatrix::zeros(u, u);
        for i in 0..u {
            for j in i..u {
                let v = kernel.eval(inducing[i], inducing[j]);
                kuu[(i, j)] = v;
                kuu[(j, i)] = v;
            }
        }
        let mut kuf = DMatrix::zeros(u, m);
        for i in 0..u {
            for (j, &x) in data.xs().iter().enumerate() {
                kuf[(i, j)] = kernel.eval(inducing[i], x);
            }
        }

        let noise = kernel.noise_variance.max(DTC_NOISE_FLOOR);
        let a = &kuu + (&kuf * kuf.transpose()) / noise;

        let mut result = None;
        for &jitter in &JITTERS {
            let eye = DMatrix::identity(u, u);
            let chol_kuu = nalgebra::Cholesky::new(&kuu + &eye * jitter);
            let chol_a = nalgebra::Cholesky::new(&a + &eye * jitter);
            if let (Some(chol_kuu), Some(chol_a)) = (chol_kuu, chol_a) {
                result = Some((chol_kuu, chol_a, jitter));
                break;
            }
        }
        let (chol_kuu, chol_a, jitter) = result.ok_or(GprError::Conditioning {
            max_jitter: *JITTERS.last().expect("ladder nonempty"),
        })?;

        let y = DVector::from_column_slice(data.ys());
        let weights = chol_a.solve(&(&kuf * y)) / noise;
        Ok(Self {
            kind: GpKind::Dtc,
            kernel,
            observed,
            jitter,
            posterior: Posterior::Dtc {
                inducing,
                chol_kuu,
                chol_a,
                weights,
            },
        })
    }

    pub fn kind(&self) -> GpKind {
        self.kind
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    /// Observed input interval [min X, max X].
    pub fn observed_set(&self) -> (f64, f64) {
        self.observed
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn inducing_points(&self) -> Option<&[f64]> {
        match &self.posterior {
            Posterior::Dtc { inducing, .. } => Some(inducing),
            Posterior::Full { .. } => None,
        }
    }

    /// Posterior mean and variance at `x_star`. Far outside the observed set
    /// both revert to the prior (0, sigma_f^2).
    pub fn predict(&self, x_star: f64) -> (f64, f64) {
        match &self.posterior {
            Posterior::Full { train_x, chol, alpha } => {
                let k_star =
                    DVector::from_iterator(train_x.len(), train_x.iter().map(|&x| self.kernel.eval(x, x_star)));
                let mean = k_star.dot(alpha);
                let solved = chol.solve(&k_star);
                let var = self.kernel.eval(x_star, x_star) - k_star.dot(&solved);
                (mean, var.max(0.0))
            }
            Posterior::Dtc {
                inducing,
                chol_kuu,
                chol_a,
                weights,
            } => {
                let k_u =
                    DVector::from_iterator(inducing.len(), inducing.iter().map(|&x| self.kernel.eval(x, x_star)));
                let mean = k_u.dot(weights);
                let q = k_u.dot(&chol_kuu.solve(&k_u));
                let r = k_u.dot(&chol_a.solve(&k_u));
                let var = self.kernel.eval(x_star, x_star) - q + r;
                (mean, var.max(0.0))
            }
        }
    }

    /// Model dump with the kernel config, inducing points and observed set.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": match self.kind { GpKind::Full => "full", GpKind::Dtc => "dtc" },
            "kernel": self.kernel,
            "observed_set": { "min": self.observed.0, "max": self.observed.1 },
            "jitter": self.jitter,
            "inducing_points": self.inducing_points(),
        })
    }
}

fn factorize_with_jitter(
    gram: &DMatrix<f64>,
    noise_variance: f64,
) -> Result<(nalgebra::Cholesky<f64, nalgebra::Dyn>, f64), GprError> {
    let n = gram.nrows();
    for &jitter in &JITTERS {
        let shifted = gram + DMatrix::identity(n, n) * (noise_variance + jitter);
        if let Some(chol) = nalgebra::Cholesky::new(shifted) {
            return Ok((chol, jitter));
        }
    }
    Err(GprError::Conditioning {
        max_jitter: *JITTERS.last().expect("ladder nonempty"),
    })
}

/// Inducing inputs at equally spaced quantiles of the sorted data, with
/// consecutive duplicates removed.
fn inducing_quantiles(xs: &[f64], m: usize) -> Vec<f64> {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let last = sorted.len() - 1;
    let mut picks: Vec<f64> = (0..m)
        .map(|i| {
            let q = if m == 1 {
                0.5
            } else {
                i as f64 / (m - 1) as f64
            };
            sorted[(q * last as f64).round() as usize]
        })
        .collect();
    picks.dedup();
    picks
}

/// Log marginal likelihood of a full GP under `kernel`.
pub fn log_marginal_likelihood(data: &Dataset, kernel: KernelConfig) -> Result<f64, GprError> {
    kernel.validate()?;
    let m = data.len();
    if m < 2 {
        return Err(GprError::InsufficientData(m));
    }
    let xs = data.xs();
    let mut gram = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = kernel.eval(xs[i], xs[j]);
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let (chol, _) = factorize_with_jitter(&gram, kernel.noise_variance)?;
    let y = DVector::from_column_slice(data.ys());
    let alpha = chol.solve(&y);
    let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    Ok(-0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * m as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Offline hyperparameter selection: pick the candidate maximizing the log
/// marginal likelihood. Intended for pre-mission tuning, not the online loop.
pub fn tune_hyperparameters(
    data: &Dataset,
    candidates: &[KernelConfig],
) -> Result<(KernelConfig, f64), GprError> {
    let mut best: Option<(KernelConfig, f64)> = None;
    for &cand in candidates {
        let lml = log_marginal_likelihood(data, cand)?;
        if best.map(|(_, b)| lml > b).unwrap_or(true) {
            best = Some((cand, lml));
        }
    }
    best.ok_or_else(|| GprError::InvalidKernel("no candidates supplied".into()))
}

/// One row of the fit benchmark.
#[derive(Debug, Clone, Copy)]
pub struct BenchRow {
    pub m: usize,
    pub full_median_s: f64,
    pub dtc_median_s: f64,
}

/// Median wall time of full and DTC fits over `reps` repetitions per size.
pub fn benchmark_fit(sizes: &[usize], n_inducing: usize, reps: usize) -> Vec<BenchRow> {
    let max = sizes.iter().copied().max().unwrap_or(0);
    let kernel = KernelConfig {
        smoothness: MaternSmoothness::ThreeHalves,
        length_scale: 0.5,
        signal_variance: 1.0,
        noise_variance: 0.0625,
    };
    // Deterministic synthetic stream shaped like the mission data.
    let xs: Vec<f64> = (0..max).map(|i| 8.0 + (i as f64 * 0.1 / 10.0).sin()).collect();
    let ys: Vec<f64> = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let wiggle = ((i as f64) * 0.7).sin() * 0.1;
            if x > 8.0 {
                1.0 + wiggle
            } else {
                -1.0 + wiggle
            }
        })
        .collect();

    let median = |mut times: Vec<f64>| -> f64 {
        times.sort_by(f64::total_cmp);
        times[times.len() / 2]
    };

    sizes
        .iter()
        .map(|&m| {
            let data = Dataset::from_pairs(xs[..m].to_vec(), ys[..m].to_vec());
            let mut full_times = Vec::with_capacity(reps);
            let mut dtc_times = Vec::with_capacity(reps);
            for _ in 0..reps {
                let t0 = std::time::Instant::now();
                let model = GpModel::fit(&data, kernel, GpKind::Full, 0).expect("full fit");
                std::hint::black_box(model.predict(8.0));
                full_times.push(t0.elapsed().as_secs_f64());

                let t0 = std::time::Instant::now();
                let model = GpModel::fit(&data, kernel, GpKind::Dtc, n_inducing.min(m)).expect("dtc fit");
                std::hint::black_box(model.predict(8.0));
                dtc_times.push(t0.elapsed().as_secs_f64());
            }
            BenchRow {
                m,
                full_median_s: median(full_times),
                dtc_median_s: median(dtc_times),
            }
        })
        .collect()
}
