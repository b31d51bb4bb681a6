//! Synthetic temporal networks with planted communities and anomalous pairs.
//!
//! Edges at `t = 0` are thresholded Poisson draws (present iff the count is
//! at least one). Later snapshots follow the normalised two-state kernel:
//! from 0 an edge appears with probability `r d / (1 + r d)`, from 1 it
//! persists with probability `1 - d`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::network::TemporalNetwork;
use crate::numeric::bisect_increasing_expand;
use crate::rng::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MembershipStyle {
    /// Equal-size blocks, one-hot memberships.
    Hard,
    /// Each node keeps 0.8 of its weight on its block and spreads 0.2 onto one
    /// other randomly chosen community.
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub n_nodes: usize,
    pub n_communities: usize,
    pub n_steps: usize,
    /// Target mean out-degree at `t = 0`; the edge target is `E = N * avg_degree`.
    pub avg_degree: f64,
    pub rho_a: f64,
    pub beta: f64,
    pub phi: f64,
    pub ell: f64,
    /// Anomalous Poisson mean at `t = 0`. Used to derive `mu` when `mu` is unset.
    pub pi: f64,
    /// Anomaly prior. When set, `pi` is calibrated from it instead.
    pub mu: Option<f64>,
    pub membership: MembershipStyle,
    /// Diagonal to off-diagonal affinity ratio.
    pub assortativity: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_nodes: 300,
            n_communities: 8,
            n_steps: 20,
            avg_degree: 8.0,
            rho_a: 0.1,
            beta: 0.2,
            phi: 0.2,
            ell: 0.2,
            pi: 0.2,
            mu: None,
            membership: MembershipStyle::Hard,
            assortativity: 10.0,
            seed: 42,
        }
    }
}

impl GenConfig {
    pub fn target_edges(&self) -> f64 {
        self.n_nodes as f64 * self.avg_degree
    }

    pub fn ordered_pairs(&self) -> f64 {
        (self.n_nodes * self.n_nodes.saturating_sub(1)) as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 2 {
            return Err(Error::Config("need at least two nodes".into()));
        }
        if self.n_communities == 0 || self.n_communities > self.n_nodes {
            return Err(Error::Config(format!(
                "K must lie in 1..={}, got {}",
                self.n_nodes, self.n_communities
            )));
        }
        if !(self.avg_degree > 0.0) {
            return Err(Error::Config("avg_degree must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.rho_a) {
            return Err(Error::Config(format!(
                "rho_a must lie in [0, 1], got {}",
                self.rho_a
            )));
        }
        for (name, x) in [("beta", self.beta), ("phi", self.phi)] {
            if !(x > 0.0 && x <= 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1], got {x}")));
            }
        }
        if !(self.ell >= 0.0) || !(self.pi > 0.0) {
            return Err(Error::Config(
                "ell must be non-negative and pi positive".into(),
            ));
        }
        if let Some(mu) = self.mu {
            if !(0.0..=1.0).contains(&mu) {
                return Err(Error::Config(format!("mu must lie in [0, 1], got {mu}")));
            }
        }
        if !(self.assortativity > 0.0) {
            return Err(Error::Config("assortativity must be positive".into()));
        }
        Ok(())
    }

    /// `mu` as configured, or the value for which the calibrated Poisson mean
    /// equals `pi`.
    pub fn resolve_mu(&self) -> Result<f64> {
        if let Some(mu) = self.mu {
            return Ok(mu);
        }
        if self.rho_a == 0.0 {
            return Ok(0.0);
        }
        let mu = self.target_edges() * self.rho_a / (self.ordered_pairs() * -(-self.pi).exp_m1());
        if mu > 1.0 {
            return Err(Error::Calibration(format!(
                "{:.0} anomalous edges need mu = {mu:.3} > 1 at pi = {}; raise pi",
                self.target_edges() * self.rho_a,
                self.pi
            )));
        }
        Ok(mu)
    }
}

/// Planted labels and the parameters that produced the data.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub n_nodes: usize,
    /// Dense symmetric `N x N` anomaly labels.
    pub z: Vec<u8>,
    pub params: ModelParams,
    pub realized_rho_a: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthJson {
    pub n_nodes: usize,
    pub z_pairs: Vec<[usize; 2]>,
    pub params: ModelParams,
    pub realized_rho_a: f64,
    pub seed: u64,
}

impl GroundTruth {
    pub fn anomalous_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n_nodes;
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.z[i * n + j] == 1 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> GroundTruthJson {
        GroundTruthJson {
            n_nodes: self.n_nodes,
            z_pairs: self
                .anomalous_pairs()
                .into_iter()
                .map(|(i, j)| [i, j])
                .collect(),
            params: self.params.clone(),
            realized_rho_a: self.realized_rho_a,
            seed: self.seed,
        }
    }

    pub fn from_json(doc: GroundTruthJson) -> Result<Self> {
        let n = doc.n_nodes;
        let mut z = vec![0u8; n * n];
        for [i, j] in doc.z_pairs {
            if i >= n || j >= n || i == j {
                return Err(Error::Input(format!("invalid anomalous pair ({i}, {j})")));
            }
            z[i * n + j] = 1;
            z[j * n + i] = 1;
        }
        Ok(Self {
            n_nodes: n,
            z,
            params: doc.params,
            realized_rho_a: doc.realized_rho_a,
            seed: doc.seed,
        })
    }
}

/// Memberships for `n` nodes in `k` blocks: node `i` sits in block `⌊iK/N⌋`.
pub fn plant_memberships(n: usize, k: usize, style: MembershipStyle, seed: u64) -> Vec<f64> {
    let mut u = vec![0.0; n * k];
    let mut rng = rng::stream(seed, &[tag::MEMBERSHIP]);
    for i in 0..n {
        let b = i * k / n;
        match style {
            MembershipStyle::Hard => u[i * k + b] = 1.0,
            MembershipStyle::Mixed => {
                if k == 1 {
                    u[i * k] = 1.0;
                } else {
                    let mut other = rng.random_range(0..k - 1);
                    if other >= b {
                        other += 1;
                    }
                    u[i * k + b] = 0.8;
                    u[i * k + other] = 0.2;
                }
            }
        }
    }
    u
}

/// `K x K` affinity with 1 on the diagonal and `1 / ratio` elsewhere.
pub fn assortative_affinity(k: usize, ratio: f64) -> Vec<f64> {
    let mut w = vec![1.0 / ratio; k * k];
    for a in 0..k {
        w[a * k + a] = 1.0;
    }
    w
}

/// Solve for the anomalous Poisson mean `pi` and the regular-rate scale `c`.
///
/// `lambda0` is the unscaled dense `N x N` rate matrix (diagonal ignored).
pub fn calibrate_sparsity(config: &GenConfig, lambda0: &[f64], mu: f64) -> Result<(f64, f64)> {
    let n = config.n_nodes;
    if lambda0.len() != n * n {
        return Err(Error::Shape(format!(
            "lambda0 has {} entries, expected {}",
            lambda0.len(),
            n * n
        )));
    }
    let e = config.target_edges();
    let pairs = config.ordered_pairs();
    let anomalous = e * config.rho_a;
    let regular = e * (1.0 - config.rho_a);

    let pi = if anomalous > 0.0 {
        let cap = pairs * mu;
        if anomalous >= cap {
            return Err(Error::Calibration(format!(
                "anomalous edge target {anomalous:.1} is not below the {cap:.1} anomalous ordered pairs (N(N-1) mu)"
            )));
        }
        -(-anomalous / cap).ln_1p()
    } else {
        config.pi
    };

    let offdiag: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| i * n + j))
        .map(|o| lambda0[o])
        .collect();
    let c = if regular > 0.0 {
        let support = offdiag.iter().filter(|&&l| l > 0.0).count() as f64;
        let cap = (1.0 - mu) * support;
        if regular >= cap {
            return Err(Error::Calibration(format!(
                "regular edge target {regular:.1} is not below the {cap:.1} regular pairs with positive rate ((1 - mu) times support)"
            )));
        }
        let expected =
            |c: f64| (1.0 - mu) * offdiag.iter().map(|&l| -(-c * l).exp_m1()).sum::<f64>();
        bisect_increasing_expand(|c| expected(c) - regular, 1e-12, 1.0, 1e-10, 200)
            .ok_or_else(|| Error::Calibration("could not bracket the rate scale".into()))?
    } else {
        0.0
    };
    Ok((pi, c))
}

/// Draw symmetric labels `Z_ij ~ Bernoulli(mu)` for `i < j`.
pub fn sample_labels(n: usize, mu: f64, seed: u64) -> Vec<u8> {
    let mut z = vec![0u8; n * n];
    if mu <= 0.0 {
        return z;
    }
    let mut rng = rng::stream(seed, &[tag::ANOMALY_LABEL]);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < mu {
                z[i * n + j] = 1;
                z[j * n + i] = 1;
            }
        }
    }
    z
}

/// Labels plus the initial snapshot: each ordered pair is present with
/// probability `1 - e^{-rate}`, where the rate is `pi` for anomalous pairs and
/// `lambda_ij(0)` otherwise.
pub fn sample_initial(params: &ModelParams, seed: u64) -> (Vec<u8>, Vec<u8>) {
    let z = sample_labels(params.n_nodes, params.mu, seed);
    let a0 = sample_initial_given(params, &z, seed);
    (a0, z)
}

pub fn sample_initial_given(params: &ModelParams, z: &[u8], seed: u64) -> Vec<u8> {
    let n = params.n_nodes;
    let mut a0 = vec![0u8; n * n];
    a0.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let mut rng = rng::stream(seed, &[tag::INITIAL_EDGES, i as u64]);
        for (j, slot) in row.iter_mut().enumerate() {
            let draw: f64 = rng.random();
            if i == j {
                continue;
            }
            let rate = if z[i * n + j] == 1 {
                params.pi
            } else {
                params.lambda_fast(i, j, 0)
            };
            *slot = (draw < -(-rate).exp_m1()) as u8;
        }
    });
    a0
}

/// Snapshot `t` from snapshot `t - 1`.
pub fn sample_step(a_prev: &[u8], z: &[u8], params: &ModelParams, t: usize, seed: u64) -> Vec<u8> {
    let n = params.n_nodes;
    let mut out = vec![0u8; n * n];
    let anomalous_appear = appear_probability(params.ell, params.phi);
    out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let mut rng = rng::stream(seed, &[tag::STEP, t as u64, i as u64]);
        for (j, slot) in row.iter_mut().enumerate() {
            let draw: f64 = rng.random();
            if i == j {
                continue;
            }
            let o = i * n + j;
            let anomalous = z[o] == 1;
            let p = if a_prev[o] == 1 {
                1.0 - if anomalous { params.phi } else { params.beta }
            } else if anomalous {
                anomalous_appear
            } else {
                appear_probability(params.lambda_fast(i, j, t), params.beta)
            };
            *slot = (draw < p) as u8;
        }
    });
    out
}

/// `r d / (1 + r d)`.
#[inline]
pub fn appear_probability(rate: f64, disappear: f64) -> f64 {
    let x = rate * disappear;
    x / (1.0 + x)
}

/// Plant, calibrate and sample a full network.
pub fn generate(config: &GenConfig) -> Result<(TemporalNetwork, GroundTruth)> {
    config.validate()?;
    let (n, k, t_steps) = (config.n_nodes, config.n_communities, config.n_steps);
    let mu = config.resolve_mu()?;

    let memberships = plant_memberships(n, k, config.membership, config.seed);
    let w_raw = assortative_affinity(k, config.assortativity);
    let mut params = ModelParams::zeros(n, k, 0);
    params.u = memberships.clone();
    params.v = memberships;
    params.w = w_raw.clone();
    let lambda0: Vec<f64> = (0..n * n)
        .map(|o| params.lambda_fast(o / n, o % n, 0))
        .collect();
    let (pi, c) = calibrate_sparsity(config, &lambda0, mu)?;

    params.n_steps = t_steps;
    params.w = (0..=t_steps)
        .flat_map(|_| w_raw.iter().map(|x| x * c))
        .collect();
    params.beta = config.beta;
    params.phi = config.phi;
    params.ell = config.ell;
    params.mu = mu;
    params.pi = pi;

    let labels = (0..n).map(|i| i.to_string()).collect();
    let mut net = TemporalNetwork::empty(labels, t_steps)?;
    let (a0, z) = sample_initial(&params, config.seed);
    net.snapshot_mut(0).copy_from_slice(&a0);
    for t in 1..=t_steps {
        let next = sample_step(net.snapshot(t - 1), &z, &params, t, config.seed);
        net.snapshot_mut(t).copy_from_slice(&next);
    }

    let total = a0.iter().filter(|&&a| a == 1).count();
    let anomalous = a0
        .iter()
        .zip(&z)
        .filter(|(&a, &zz)| a == 1 && zz == 1)
        .count();
    let realized_rho_a = if total > 0 {
        anomalous as f64 / total as f64
    } else {
        0.0
    };
    Ok((
        net,
        GroundTruth {
            n_nodes: n,
            z,
            params,
            realized_rho_a,
            seed: config.seed,
        },
    ))
}
