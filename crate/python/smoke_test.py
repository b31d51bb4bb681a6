"""Smoke test for the Python bindings.

Build and install first, for example:

    pip install --no-build-isolation ./crates/python
"""

import json

import dynacd


def main():
    net_json, truth_json = dynacd.generate(
        n_nodes=60, n_communities=3, n_steps=4, avg_degree=5.0, rho_a=0.2, seed=7
    )
    net = json.loads(net_json)
    truth = json.loads(truth_json)
    assert net["n_nodes"] == 60 and net["n_steps"] == 4

    fit_json = dynacd.fit(net_json, 3, restarts=2, max_iter=100, seed=7)
    again = dynacd.fit(net_json, 3, restarts=2, max_iter=100, seed=7)
    assert fit_json == again, "fit is not deterministic"
    result = json.loads(fit_json)
    trace = result["objective_trace"]
    assert all(b >= a - 1e-6 for a, b in zip(trace, trace[1:])), "objective went down"

    scores = dynacd.anomaly_scores(fit_json)
    assert len(scores) == 60 * 59 // 2
    assert all(a[2] >= b[2] for a, b in zip(scores, scores[1:]))

    anomalous = {tuple(p) for p in truth["z_pairs"]}
    auc = dynacd.auc([s[2] for s in scores], [(s[0], s[1]) in anomalous for s in scores])
    cs = dynacd.cosine_similarity(truth["params"]["u"], result["params"]["u"], 3)
    assert 0.0 <= auc <= 1.0 and 0.0 <= cs <= 1.0

    injected_json, pairs = dynacd.inject(net_json, 0.1, seed=3)
    assert pairs and json.loads(injected_json)["n_nodes"] == 60

    try:
        dynacd.fit(net_json, 0)
    except ValueError:
        pass
    else:
        raise AssertionError("K = 0 should be rejected")

    print(f"dynacd {dynacd.__version__}: AUC(Z) {auc:.3f}, CS {cs:.3f}, {len(pairs)} injected")


if __name__ == "__main__":
    main()
