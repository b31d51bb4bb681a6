//! Independent reference computations shared by the oracle tests and the
//! acceptance suite. Everything here is written from the model definition with
//! plain loops and never calls into the fast paths it checks.

#![allow(dead_code)]

use dynacd::inference::{
    m_step_affinity, m_step_memberships, m_step_scalars, rate_equation, solve_rate, RateKind,
};
use dynacd::model::{log_f, log_posterior, EdgeKind};
use dynacd::network::hat_transform;
use dynacd::{AnomalyPosterior, ModelParams, TemporalNetwork};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

/// `λ_ij(t) = Σ_kq u_ik v_jq w_kq(t)` as a plain double loop.
pub fn lambda_loop(p: &ModelParams, i: usize, j: usize, t: usize) -> f64 {
    let k = p.n_communities;
    let mut s = 0.0;
    for a in 0..k {
        for b in 0..k {
            s += p.u[i * k + a] * p.v[j * k + b] * p.w[(t * k + a) * k + b];
        }
    }
    s
}

/// Unnormalised transition factor from `prev` to `curr` with rate `r` and
/// disappearance `d`.
pub fn transition_factor(prev: u8, curr: u8, r: f64, d: f64) -> f64 {
    let e = (-d * r).exp();
    match (prev, curr) {
        (0, 0) => e,
        (0, 1) => d * r * e,
        (1, 0) => d * e,
        _ => (1.0 - d) * e,
    }
}

/// Poisson probability of a count of 0 or 1.
pub fn poisson(a: u8, mean: f64) -> f64 {
    if a == 0 {
        (-mean).exp()
    } else {
        mean * (-mean).exp()
    }
}

pub fn random_params(rng: &mut ChaCha8Rng, n: usize, k: usize, t: usize) -> ModelParams {
    let mut p = ModelParams::zeros(n, k, t);
    p.u.iter_mut().for_each(|x| *x = rng.random::<f64>());
    p.v.iter_mut().for_each(|x| *x = rng.random::<f64>());
    p.w.iter_mut().for_each(|x| *x = rng.random::<f64>());
    p.beta = rng.random_range(0.05..0.95);
    p.phi = rng.random_range(0.05..0.95);
    p.mu = rng.random_range(0.01..0.9);
    p.pi = rng.random_range(0.1..2.0);
    p.ell = rng.random_range(0.1..2.0);
    p
}

pub fn random_network(rng: &mut ChaCha8Rng, n: usize, t: usize, density: f64) -> TemporalNetwork {
    let mut net = TemporalNetwork::with_size(n, t);
    for s in 0..=t {
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.random::<f64>() < density {
                    net.set(s, i, j, 1);
                }
            }
        }
    }
    net
}

pub fn random_posterior(rng: &mut ChaCha8Rng, n: usize) -> AnomalyPosterior {
    let mut q = AnomalyPosterior::zeros(n);
    for i in 0..n {
        for j in (i + 1)..n {
            q.set_pair(i, j, rng.random::<f64>());
        }
    }
    q
}

/// `exp(log_f)` against the direct product of transition factors over every
/// trajectory of length `T + 1`, for `T ≤ 4`.
pub fn log_f_trajectories() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for t_steps in 0..=4 {
        for _ in 0..5 {
            let k = rng.random_range(1..=3);
            let p = random_params(&mut rng, 3, k, t_steps);
            let mut net = TemporalNetwork::with_size(3, t_steps);
            for bits in 0u32..(1 << (t_steps + 1)) {
                for t in 0..=t_steps {
                    net.set(t, 0, 2, ((bits >> t) & 1) as u8);
                }
                for kind in [EdgeKind::Regular, EdgeKind::Anomalous] {
                    let mut direct = 1.0;
                    for t in 1..=t_steps {
                        let (prev, curr) = (net.get(t - 1, 0, 2), net.get(t, 0, 2));
                        direct *= match kind {
                            EdgeKind::Regular => {
                                transition_factor(prev, curr, lambda_loop(&p, 0, 2, t), p.beta)
                            }
                            EdgeKind::Anomalous => transition_factor(prev, curr, p.ell, p.phi),
                        };
                    }
                    let got = log_f(kind, &p, &net, 0, 2)
                        .map_err(|e| e.to_string())?
                        .exp();
                    let rel = ((got - direct) / direct).abs();
                    worst = worst.max(rel);
                    cases += 1;
                    if rel >= 1e-12 {
                        return Err(format!(
                            "T = {t_steps}, trajectory {bits:b}, {kind:?}: {got} vs {direct}"
                        ));
                    }
                }
            }
        }
    }
    Ok(format!("{cases} trajectories, worst rel err {worst:.1e}"))
}

/// `Q_ij` by direct evaluation of the two-hypothesis posterior with
/// probabilities multiplied out, no logs.
pub fn direct_q(p: &ModelParams, net: &TemporalNetwork, i: usize, j: usize) -> f64 {
    let mut anom = p.mu;
    let mut reg = 1.0 - p.mu;
    for (a, b) in [(i, j), (j, i)] {
        anom *= poisson(net.get(0, a, b), p.pi);
        reg *= poisson(net.get(0, a, b), lambda_loop(p, a, b, 0));
        for t in 1..=net.n_steps() {
            let (prev, curr) = (net.get(t - 1, a, b), net.get(t, a, b));
            anom *= transition_factor(prev, curr, p.ell, p.phi);
            reg *= transition_factor(prev, curr, lambda_loop(p, a, b, t), p.beta);
        }
    }
    anom / (anom + reg)
}

/// `e_step_q` against [`direct_q`] on `N ≤ 6`, `T ≤ 3`.
pub fn e_step_direct() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    for case in 0..60 {
        let n = rng.random_range(2..=6);
        let t = rng.random_range(0..=3);
        let k = rng.random_range(1..=3);
        let density = rng.random_range(0.1..0.7);
        let net = random_network(&mut rng, n, t, density);
        let p = random_params(&mut rng, n, k, t);
        let q = dynacd::inference::e_step_q(&p, &net).map_err(|e| e.to_string())?;
        for i in 0..n {
            for j in (i + 1)..n {
                let want = direct_q(&p, &net, i, j);
                let err = (q.get(i, j) - want).abs();
                worst = worst.max(err);
                if err >= 1e-10 || q.get(j, i) != q.get(i, j) {
                    return Err(format!(
                        "case {case}, pair ({i}, {j}): {} vs {want}",
                        q.get(i, j)
                    ));
                }
            }
        }
    }
    Ok(format!("60 instances, worst abs err {worst:.1e}"))
}

/// Roots of both rate equations: residual below `1e-8` and no worse than the
/// best point of a 10⁶-point grid over the search interval.
pub fn rate_roots_vs_grid() -> Check {
    const GRID: usize = 1_000_000;
    let (lo, hi) = (1e-6, 1.0 - 1e-6);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst: f64 = 0.0;
    for case in 0..6 {
        let n = rng.random_range(5..=15);
        let t = rng.random_range(1..=5);
        let k = rng.random_range(1..=3);
        let density = rng.random_range(0.1..0.5);
        let net = random_network(&mut rng, n, t, density);
        let p = random_params(&mut rng, n, k, t);
        let q = random_posterior(&mut rng, n);
        let hat = hat_transform(&net);
        for kind in [RateKind::Beta, RateKind::Phi] {
            let eq = rate_equation(kind, &p, &net, &hat, &q).map_err(|e| e.to_string())?;
            let root = solve_rate(kind, &p, &net, &hat, &q).map_err(|e| e.to_string())?;
            let residual = eq.eval(root).abs();
            let best_grid = (0..GRID)
                .map(|g| lo + (hi - lo) * g as f64 / (GRID - 1) as f64)
                .map(|x| eq.eval(x).abs())
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(residual);
            if residual >= 1e-8 || residual > best_grid {
                return Err(format!(
                    "case {case}, {kind:?}: |f(root)| = {residual:.2e}, grid best {best_grid:.2e}"
                ));
            }
        }
    }
    Ok(format!("12 equations, worst |f(root)| {worst:.1e}"))
}

fn monotone(name: &str, case: usize, before: f64, after: f64) -> Result<(), String> {
    if after >= before - 1e-9 {
        Ok(())
    } else {
        Err(format!(
            "{name} lowered the objective on instance {case}: {before} -> {after}"
        ))
    }
}

/// Every closed-form update, applied alone, never lowers the objective.
pub fn m_steps_monotone() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let err = |e: dynacd::Error| e.to_string();
    for case in 0..20 {
        let n = rng.random_range(4..=20);
        let t = rng.random_range(1..=5);
        let k = rng.random_range(1..=4);
        let density = rng.random_range(0.05..0.6);
        let net = random_network(&mut rng, n, t, density);
        let p = random_params(&mut rng, n, k, t);
        let q = random_posterior(&mut rng, n);
        let hat = hat_transform(&net);
        let obj = |p: &ModelParams| log_posterior(p, &q, &net);

        let base = obj(&p).map_err(err)?;
        let (u, v) = m_step_memberships(&p, &net, &hat, &q).map_err(err)?;
        let mut x = p.clone();
        x.u = u;
        let after_u = obj(&x).map_err(err)?;
        monotone("u", case, base, after_u)?;
        x.v = v;
        monotone("v", case, after_u, obj(&x).map_err(err)?)?;

        let mut x = p.clone();
        x.w = m_step_affinity(&p, &net, &hat, &q).map_err(err)?;
        monotone("w", case, base, obj(&x).map_err(err)?)?;

        let s = m_step_scalars(&p, &net, &hat, &q).map_err(err)?;
        for (name, set) in [
            (
                "mu",
                Box::new(|x: &mut ModelParams| x.mu = s.mu) as Box<dyn Fn(&mut ModelParams)>,
            ),
            ("pi", Box::new(|x: &mut ModelParams| x.pi = s.pi)),
            ("ell", Box::new(|x: &mut ModelParams| x.ell = s.ell)),
        ] {
            let mut x = p.clone();
            set(&mut x);
            monotone(name, case, base, obj(&x).map_err(err)?)?;
        }

        for kind in [RateKind::Beta, RateKind::Phi] {
            let mut x = p.clone();
            let r = solve_rate(kind, &p, &net, &hat, &q).map_err(err)?;
            match kind {
                RateKind::Beta => x.beta = r,
                RateKind::Phi => x.phi = r,
            }
            monotone(&format!("{kind:?}"), case, base, obj(&x).map_err(err)?)?;
        }
    }
    Ok("20 instances, 8 updates each".into())
}

/// `expected_adjacency` against the empirical frequency of `sample_step` over
/// 10⁵ draws, with the posterior set to the true labels.
pub fn expected_adjacency_monte_carlo() -> Check {
    const DRAWS: u64 = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let n = 4;
    let mut p = random_params(&mut rng, n, 2, 1);
    p.w.iter_mut().for_each(|x| *x *= 0.5);
    p.beta = 0.3;
    p.phi = 0.4;
    p.ell = 0.7;
    let mut z = vec![0u8; n * n];
    let mut q = AnomalyPosterior::zeros(n);
    for (i, j) in [(0, 1), (2, 3)] {
        z[i * n + j] = 1;
        z[j * n + i] = 1;
        q.set_pair(i, j, 1.0);
    }
    let mut a_prev = vec![0u8; n * n];
    for (i, j) in [(0, 1), (1, 2), (2, 0), (3, 1)] {
        a_prev[i * n + j] = 1;
    }
    let expected =
        dynacd::evaluation::expected_adjacency(&p, &q, &a_prev, 1).map_err(|e| e.to_string())?;
    let mut hits = vec![0u64; n * n];
    for seed in 0..DRAWS {
        let next = dynacd::generator::sample_step(&a_prev, &z, &p, 1, seed);
        for (h, &a) in hits.iter_mut().zip(&next) {
            *h += a as u64;
        }
    }
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let o = i * n + j;
            let e = expected[o];
            let freq = hits[o] as f64 / DRAWS as f64;
            let sigma = (e * (1.0 - e) / DRAWS as f64).sqrt();
            let z_score = (freq - e).abs() / sigma;
            worst = worst.max(z_score);
            if z_score > 3.0 {
                return Err(format!("({i}, {j}): expected {e:.5}, sampled {freq:.5}"));
            }
        }
    }
    Ok(format!(
        "12 ordered pairs, worst deviation {worst:.2} sigma"
    ))
}
