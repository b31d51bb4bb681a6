//! Metrics and experiment protocols: AUC, recall@n, membership cosine
//! similarity, link prediction, anomaly injection and K selection.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{fit, EmConfig};
use crate::model::{AnomalyPosterior, ModelParams};
use crate::network::{connected_pairs, TemporalNetwork};
use crate::rng::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairKind {
    /// Anomaly scores, one entry per `i < j`.
    Unordered,
    /// Link scores, one entry per directed pair.
    Ordered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub i: usize,
    pub j: usize,
    pub score: f64,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPairs {
    pairs: Vec<ScoredPair>,
    kind: PairKind,
}

impl ScoredPairs {
    pub fn new(kind: PairKind, pairs: Vec<ScoredPair>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(pairs.len());
        for p in &pairs {
            if !p.score.is_finite() {
                return Err(Error::Input(format!(
                    "non-finite score for ({}, {})",
                    p.i, p.j
                )));
            }
            let key = match kind {
                PairKind::Unordered => (p.i.min(p.j), p.i.max(p.j)),
                PairKind::Ordered => (p.i, p.j),
            };
            if !seen.insert(key) {
                return Err(Error::Input(format!("duplicate pair ({}, {})", p.i, p.j)));
            }
        }
        Ok(Self { pairs, kind })
    }

    /// Scores `Q_ij` for every `i < j`, labelled by `truth(i, j)`.
    pub fn from_posterior(
        q: &AnomalyPosterior,
        truth: impl Fn(usize, usize) -> bool,
    ) -> Result<Self> {
        let n = q.n_nodes;
        let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                pairs.push(ScoredPair {
                    i,
                    j,
                    score: q.get(i, j),
                    label: truth(i, j),
                });
            }
        }
        Self::new(PairKind::Unordered, pairs)
    }

    pub fn pairs(&self) -> &[ScoredPair] {
        &self.pairs
    }

    pub fn kind(&self) -> PairKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.pairs.iter().filter(|p| p.label).count()
    }
}

/// Rank-statistic AUC; tied scores count one half.
pub fn auc(scored: &ScoredPairs) -> Result<f64> {
    auc_of(scored.pairs.iter().map(|p| (p.score, p.label)))
}

pub(crate) fn auc_of(items: impl Iterator<Item = (f64, bool)>) -> Result<f64> {
    let mut v: Vec<(f64, bool)> = items.collect();
    let pos = v.iter().filter(|x| x.1).count();
    let neg = v.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both classes ({pos} positive, {neg} negative)"
        )));
    }
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Sum of mid-ranks of the positives.
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < v.len() {
        let mut end = start;
        while end + 1 < v.len() && v[end + 1].0 == v[start].0 {
            end += 1;
        }
        let mid_rank = 0.5 * ((start + 1) + (end + 1)) as f64;
        let hits = v[start..=end].iter().filter(|x| x.1).count();
        rank_sum += mid_rank * hits as f64;
        start = end + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Fraction of positives among the `n` highest scores; ties at the cutoff
/// resolve by ascending `(i, j)`.
pub fn recall_at_n(scored: &ScoredPairs, n: usize) -> Result<f64> {
    let positives = scored.positives();
    if positives == 0 {
        return Err(Error::UndefinedMetric(
            "recall needs at least one positive".into(),
        ));
    }
    if n > scored.len() {
        return Err(Error::Config(format!(
            "n = {n} exceeds the {} scored pairs",
            scored.len()
        )));
    }
    let mut order: Vec<&ScoredPair> = scored.pairs.iter().collect();
    order.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then((a.i, a.j).cmp(&(b.i, b.j)))
    });
    let hits = order[..n].iter().filter(|p| p.label).count();
    Ok(hits as f64 / positives as f64)
}

/// Mean per-node cosine similarity after the best column permutation of `inferred`.
///
/// Both inputs are `N x K` row-major. Row norms are permutation invariant, so
/// the total is linear in the assignment and the optimum is an assignment
/// problem on `M_ab = Σ_i t_ia x_ib / (|t_i| |x_i|)`.
pub fn cosine_similarity(truth: &[f64], inferred: &[f64], k: usize) -> Result<f64> {
    if k == 0 || truth.len() != inferred.len() || !truth.len().is_multiple_of(k) {
        return Err(Error::Shape(format!(
            "membership shapes differ: {} vs {} entries with K = {k}",
            truth.len(),
            inferred.len()
        )));
    }
    let n = truth.len() / k;
    if n == 0 {
        return Err(Error::Shape("no nodes".into()));
    }
    let norm = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut m = vec![0.0; k * k];
    for i in 0..n {
        let t = &truth[i * k..(i + 1) * k];
        let x = &inferred[i * k..(i + 1) * k];
        let (nt, nx) = (norm(t), norm(x));
        if nt == 0.0 {
            return Err(Error::Input(format!("truth row {i} is all zero")));
        }
        if nx == 0.0 {
            continue;
        }
        for a in 0..k {
            for b in 0..k {
                m[a * k + b] += t[a] * x[b] / (nt * nx);
            }
        }
    }
    let assign = max_assignment(&m, k);
    let total: f64 = (0..k).map(|a| m[a * k + assign[a]]).sum();
    Ok(total / n as f64)
}

/// Assignment maximising `Σ_a m[a][σ(a)]` (Hungarian method with potentials).
pub fn max_assignment(m: &[f64], k: usize) -> Vec<usize> {
    // Minimise the negated matrix; 1-based arrays as in the classic formulation.
    let cost = |a: usize, b: usize| -m[(a - 1) * k + (b - 1)];
    let inf = f64::INFINITY;
    let mut u = vec![0.0; k + 1];
    let mut v = vec![0.0; k + 1];
    let mut p = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for row in 1..=k {
        p[0] = row;
        let mut j0 = 0;
        let mut minv = vec![inf; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=k {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=k {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; k];
    for j in 1..=k {
        assign[p[j] - 1] = j - 1;
    }
    assign
}

/// Expected `A(t)` given `A(t-1)`, mixing the regular and anomalous
/// predictions by the posterior: `Q E_a + (1 - Q) E_r`.
pub fn expected_adjacency(
    params: &ModelParams,
    q: &AnomalyPosterior,
    a_prev: &[u8],
    t: usize,
) -> Result<Vec<f64>> {
    let n = params.n_nodes;
    if t == 0 || t > params.n_steps {
        return Err(Error::Index {
            what: "t",
            index: t,
            limit: params.n_steps + 1,
        });
    }
    if a_prev.len() != n * n || q.n_nodes != n {
        return Err(Error::Shape(
            "previous snapshot or Q does not match the parameters".into(),
        ));
    }
    let anomalous_new = crate::generator::appear_probability(params.ell, params.phi);
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let o = i * n + j;
            let (ea, er) = if a_prev[o] == 1 {
                (1.0 - params.phi, 1.0 - params.beta)
            } else {
                (
                    anomalous_new,
                    crate::generator::appear_probability(params.lambda_fast(i, j, t), params.beta),
                )
            };
            let qij = q.q[o];
            out[o] = qij * ea + (1.0 - qij) * er;
        }
    }
    Ok(out)
}

/// Copy of `params` with `extra` more affinity slices, each equal to the last one.
pub fn extend_affinity(params: &ModelParams, extra: usize) -> ModelParams {
    let mut p = params.clone();
    let last = params.w_at(params.n_steps).to_vec();
    for _ in 0..extra {
        p.w.extend_from_slice(&last);
    }
    p.n_steps += extra;
    p
}

/// Fit on snapshots `0..t_test`, then score every directed pair of `A(t_test)`.
///
/// The affinity for the unseen step is carried over from the last fitted one.
pub fn link_prediction_auc(net: &TemporalNetwork, config: &EmConfig, t_test: usize) -> Result<f64> {
    if t_test == 0 || t_test > net.n_steps() {
        return Err(Error::Config(format!(
            "t_test must lie in 1..={}, got {t_test}",
            net.n_steps()
        )));
    }
    let train = net.truncated(t_test - 1)?;
    let result = fit(&train, config)?;
    let params = extend_affinity(&result.params, 1);
    let expected = expected_adjacency(&params, &result.q, net.snapshot(t_test - 1), t_test)?;
    let n = net.n_nodes();
    let target = net.snapshot(t_test);
    auc_of(
        (0..n * n)
            .filter(|o| o / n != o % n)
            .map(|o| (expected[o], target[o] == 1)),
    )
}

/// Inject `round(rho_a * P_conn)` symmetric anomalous pairs into pairs that
/// never carry an edge. Each injected pair is switched on at every `t` with
/// probability `p`, with at least one step forced on.
pub fn inject_anomalies(
    net: &TemporalNetwork,
    rho_a: f64,
    p: f64,
    seed: u64,
) -> Result<(TemporalNetwork, Vec<(usize, usize)>)> {
    if !(rho_a > 0.0 && rho_a <= 1.0) {
        return Err(Error::Config(format!(
            "rho_a must lie in (0, 1], got {rho_a}"
        )));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!(
            "per-step probability must lie in [0, 1], got {p}"
        )));
    }
    let n = net.n_nodes();
    let connected = connected_pairs(net);
    let count = (rho_a * connected.len() as f64).round() as usize;
    let mut empty: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if !connected.contains(&(i, j)) {
                empty.push((i, j));
            }
        }
    }
    if count > empty.len() {
        return Err(Error::Injection(format!(
            "{count} anomalous pairs requested but only {} unconnected pairs exist",
            empty.len()
        )));
    }
    let mut rng = rng::stream(seed, &[tag::INJECT]);
    let (chosen, _) = empty.partial_shuffle(&mut rng, count);
    let mut injected = chosen.to_vec();
    injected.sort_unstable();

    let mut out = net.clone();
    let snapshots = net.n_snapshots();
    for &(i, j) in &injected {
        let mut on: Vec<bool> = (0..snapshots).map(|_| rng.random::<f64>() < p).collect();
        if !on.iter().any(|&x| x) {
            let forced = rng.random_range(0..snapshots);
            on[forced] = true;
        }
        for (t, &bit) in on.iter().enumerate() {
            if bit {
                out.set(t, i, j, 1);
                out.set(t, j, i, 1);
            }
        }
    }
    Ok((out, injected))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k_candidates: Vec<usize>,
    /// `per_fold[c][f]`: held-out link AUC for candidate `c` on fold `f`;
    /// `None` when every step of the fold was single-class.
    pub per_fold: Vec<Vec<Option<f64>>>,
    pub mean_auc: Vec<Option<f64>>,
    pub chosen_k: usize,
}

/// Assign each unordered pair `i < j` to one of `folds` folds, balanced.
pub fn pair_folds(n: usize, folds: usize, seed: u64) -> Vec<Vec<(usize, usize)>> {
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let mut rng = rng::stream(seed, &[tag::FOLDS]);
    pairs.shuffle(&mut rng);
    let mut out = vec![Vec::new(); folds];
    for (idx, pair) in pairs.into_iter().enumerate() {
        out[idx % folds].push(pair);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    out
}

/// Held-out link AUC of one fitted model on the pairs of one fold, averaged
/// over the steps `t ≥ 1` at which both classes occur.
fn held_out_auc(
    net: &TemporalNetwork,
    params: &ModelParams,
    q: &AnomalyPosterior,
    fold: &[(usize, usize)],
) -> Result<Option<f64>> {
    // Masked pairs carry no evidence, so their posterior is the prior.
    let mut q = q.clone();
    for &(i, j) in fold {
        q.set_pair(i, j, params.mu);
    }
    let n = net.n_nodes();
    let mut aucs = Vec::new();
    for t in 1..=net.n_steps() {
        let expected = expected_adjacency(params, &q, net.snapshot(t - 1), t)?;
        let target = net.snapshot(t);
        let items = fold
            .iter()
            .flat_map(|&(i, j)| [i * n + j, j * n + i])
            .map(|o| (expected[o], target[o] == 1));
        match auc_of(items) {
            Ok(a) => aucs.push(a),
            Err(Error::UndefinedMetric(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(if aucs.is_empty() {
        None
    } else {
        Some(aucs.iter().sum::<f64>() / aucs.len() as f64)
    })
}

/// Pick `K` by `folds`-fold cross-validation over unordered pairs.
pub fn cross_validate_k(
    net: &TemporalNetwork,
    k_candidates: &[usize],
    folds: usize,
    config: &EmConfig,
    seed: u64,
) -> Result<CvReport> {
    if k_candidates.is_empty() {
        return Err(Error::Config("no K candidates".into()));
    }
    if folds < 2 {
        return Err(Error::Config("need at least two folds".into()));
    }
    let n = net.n_nodes();
    if let Some(&k) = k_candidates.iter().find(|&&k| k == 0 || k > n) {
        return Err(Error::Config(format!("K = {k} is outside 1..={n}")));
    }
    let fold_pairs = pair_folds(n, folds, seed);
    let mut per_fold = Vec::with_capacity(k_candidates.len());
    for &k in k_candidates {
        let mut row = Vec::with_capacity(folds);
        for fold in &fold_pairs {
            let mut cfg = config.clone();
            cfg.n_communities = k;
            cfg.mask = Some(fold.iter().flat_map(|&(i, j)| [(i, j), (j, i)]).collect());
            let result = fit(net, &cfg)?;
            row.push(held_out_auc(net, &result.params, &result.q, fold)?);
        }
        per_fold.push(row);
    }
    let mean_auc: Vec<Option<f64>> = per_fold
        .iter()
        .map(|row| {
            let vals: Vec<f64> = row.iter().flatten().copied().collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect();
    let mut chosen: Option<(usize, f64)> = None;
    for (&k, m) in k_candidates.iter().zip(&mean_auc) {
        if let Some(m) = *m {
            let better = match chosen {
                None => true,
                Some((ck, cm)) => m > cm || (m == cm && k < ck),
            };
            if better {
                chosen = Some((k, m));
            }
        }
    }
    let chosen_k = chosen
        .map(|c| c.0)
        .ok_or_else(|| Error::UndefinedMetric("no fold produced a held-out AUC".into()))?;
    Ok(CvReport {
        k_candidates: k_candidates.to_vec(),
        per_fold,
        mean_auc,
        chosen_k,
    })
}
