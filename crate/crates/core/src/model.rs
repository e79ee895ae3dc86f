//! Parameter data model: single-qubit parameters, the ensemble attached to one
//! cavity, Gaussian disorder sampling and the ensemble file format.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sum;

/// Gap, bias and cavity coupling of one qubit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QubitParams {
    delta: f64,
    epsilon: f64,
    g: f64,
}

impl QubitParams {
    pub fn new(delta: f64, epsilon: f64, g: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(invalid(format!("delta must be finite and > 0, got {delta}")));
        }
        if !epsilon.is_finite() {
            return Err(invalid(format!("epsilon must be finite, got {epsilon}")));
        }
        if !(g.is_finite() && g >= 0.0) {
            return Err(invalid(format!("g must be finite and >= 0, got {g}")));
        }
        Ok(Self { delta, epsilon, g })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    /// ε/Δ
    pub fn bias_ratio(&self) -> f64 {
        self.epsilon / self.delta
    }
}

/// Cavity frequency plus the ordered list of qubits coupled to it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ensemble {
    omega: f64,
    qubits: Vec<QubitParams>,
}

impl Ensemble {
    pub fn new(omega: f64, qubits: Vec<QubitParams>) -> Result<Self> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(invalid(format!("omega must be finite and > 0, got {omega}")));
        }
        if qubits.is_empty() {
            return Err(invalid("ensemble needs at least one qubit"));
        }
        Ok(Self { omega, qubits })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn qubits(&self) -> &[QubitParams] {
        &self.qubits
    }

    pub fn len(&self) -> usize {
        self.qubits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qubits.is_empty()
    }

    /// Σ gᵢ
    pub fn total_coupling(&self) -> f64 {
        sum::sum(self.qubits.iter().map(|q| q.g))
    }

    pub fn mean_delta(&self) -> f64 {
        uniform_or_mean(self.qubits.iter().map(|q| q.delta))
    }

    pub fn mean_g(&self) -> f64 {
        uniform_or_mean(self.qubits.iter().map(|q| q.g))
    }

    pub fn mean_epsilon(&self) -> f64 {
        uniform_or_mean(self.qubits.iter().map(|q| q.epsilon))
    }

    /// Population standard deviation of the biases.
    pub fn epsilon_spread(&self) -> f64 {
        let mean = self.mean_epsilon();
        let var = sum::sum(self.qubits.iter().map(|q| (q.epsilon - mean).powi(2)))
            / self.len() as f64;
        var.sqrt()
    }

    /// Every qubit has the same Δ and g (biases may differ).
    pub fn has_uniform_gap_and_coupling(&self) -> bool {
        let first = self.qubits[0];
        self.qubits
            .iter()
            .all(|q| q.delta == first.delta && q.g == first.g)
    }

    /// Shifts every bias by the same amount (the global bias knob).
    pub fn shift_bias(&self, shift: f64) -> Result<Self> {
        let qubits = self
            .qubits
            .iter()
            .map(|q| QubitParams::new(q.delta, q.epsilon + shift, q.g))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.omega, qubits)
    }

    /// Multiplies every coupling by `scale`.
    pub fn scale_coupling(&self, scale: f64) -> Result<Self> {
        let qubits = self
            .qubits
            .iter()
            .map(|q| QubitParams::new(q.delta, q.epsilon, q.g * scale))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.omega, qubits)
    }
}

/// Mean of the values; returns the common value bit-exactly when all agree.
fn uniform_or_mean(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let mut it = values.clone();
    let first = it.next().unwrap_or(0.0);
    if it.all(|v| v == first) {
        return first;
    }
    let mut n = 0usize;
    let s = sum::sum(values.inspect(|_| n += 1));
    s / n as f64
}

/// Independent Gaussian disorder in Δ, ε and g.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisorderSpec {
    pub mean_delta: f64,
    pub sigma_delta: f64,
    pub mean_epsilon: f64,
    pub sigma_epsilon: f64,
    pub mean_g: f64,
    pub sigma_g: f64,
    pub seed: u64,
}

impl DisorderSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.mean_delta,
            self.sigma_delta,
            self.mean_epsilon,
            self.sigma_epsilon,
            self.mean_g,
            self.sigma_g,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(invalid("disorder parameters must be finite"));
        }
        if self.mean_delta <= 0.0 {
            return Err(invalid(format!("mean_delta must be > 0, got {}", self.mean_delta)));
        }
        if self.mean_g < 0.0 {
            return Err(invalid(format!("mean_g must be >= 0, got {}", self.mean_g)));
        }
        for (name, v) in [
            ("sigma_delta", self.sigma_delta),
            ("sigma_epsilon", self.sigma_epsilon),
            ("sigma_g", self.sigma_g),
        ] {
            if v < 0.0 {
                return Err(invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Draws qubit `index`. The draw depends only on the seed and the index.
    pub fn sample_qubit(&self, index: usize) -> QubitParams {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };

        // Truncated Gaussians: redraw until the sample is admissible.
        let delta = loop {
            let d = self.mean_delta + self.sigma_delta * normal();
            if d > 0.0 {
                break d;
            }
        };
        let epsilon = self.mean_epsilon + self.sigma_epsilon * normal();
        let g = loop {
            let g = self.mean_g + self.sigma_g * normal();
            if g >= 0.0 {
                break g;
            }
        };
        QubitParams { delta, epsilon, g }
    }
}

/// Temperature as the energy k_BT; zero means the ground state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThermalSpec {
    kt: f64,
}

impl ThermalSpec {
    pub fn new(kt: f64) -> Result<Self> {
        if !(kt.is_finite() && kt >= 0.0) {
            return Err(invalid(format!("kT must be finite and >= 0, got {kt}")));
        }
        Ok(Self { kt })
    }

    pub fn ground() -> Self {
        Self { kt: 0.0 }
    }

    pub fn kt(&self) -> f64 {
        self.kt
    }

    pub fn is_ground(&self) -> bool {
        self.kt == 0.0
    }

    /// α = Δ/(2k_BT); infinite at zero temperature.
    pub fn alpha(&self, delta: f64) -> f64 {
        if self.is_ground() {
            f64::INFINITY
        } else {
            delta / (2.0 * self.kt)
        }
    }

    /// tanh(Ω/2k_BT), identically 1 at zero temperature.
    pub fn polarization(&self, splitting: f64) -> f64 {
        if self.is_ground() {
            1.0
        } else {
            (splitting / (2.0 * self.kt)).tanh()
        }
    }
}

impl Default for ThermalSpec {
    fn default() -> Self {
        Self::ground()
    }
}

pub fn uniform_ensemble(n: usize, omega: f64, delta: f64, epsilon: f64, g: f64) -> Result<Ensemble> {
    if n == 0 {
        return Err(invalid("n must be >= 1"));
    }
    let q = QubitParams::new(delta, epsilon, g)?;
    Ensemble::new(omega, vec![q; n])
}

pub fn sample_ensemble(spec: &DisorderSpec, n: usize, omega: f64) -> Result<Ensemble> {
    spec.validate()?;
    if n == 0 {
        return Err(invalid("n must be >= 1"));
    }
    let qubits: Vec<QubitParams> = (0..n)
        .into_par_iter()
        .map(|i| spec.sample_qubit(i))
        .collect();
    Ensemble::new(omega, qubits)
}

#[derive(Serialize, Deserialize)]
struct QubitRecord {
    delta: f64,
    epsilon: f64,
    g: f64,
}

#[derive(Serialize, Deserialize)]
struct EnsembleRecord {
    omega: f64,
    qubits: Vec<QubitRecord>,
}

pub fn ensemble_to_json(e: &Ensemble) -> String {
    let record = EnsembleRecord {
        omega: e.omega,
        qubits: e
            .qubits
            .iter()
            .map(|q| QubitRecord {
                delta: q.delta,
                epsilon: q.epsilon,
                g: q.g,
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&record).expect("ensemble serializes");
    s.push('\n');
    s
}

pub fn ensemble_from_json(text: &str) -> Result<Ensemble> {
    let record: EnsembleRecord =
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    let qubits = record
        .qubits
        .iter()
        .enumerate()
        .map(|(i, q)| {
            QubitParams::new(q.delta, q.epsilon, q.g).map_err(|err| match err {
                Error::InvalidParameter(msg) => invalid(format!("qubits[{i}]: {msg}")),
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(record.omega, qubits)
}

pub fn save_ensemble(e: &Ensemble, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, ensemble_to_json(e))?;
    Ok(())
}

pub fn load_ensemble(path: impl AsRef<Path>) -> Result<Ensemble> {
    let text = fs::read_to_string(path)?;
    ensemble_from_json(&text)
}
