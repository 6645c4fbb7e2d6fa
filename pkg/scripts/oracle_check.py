"""Linear-decoder oracle for the synthetic generator.

Trains an L2-regularized logistic regression on tangent-space covariance
features, once within each subject (5-fold CV) and once across subjects
(train on all others, test on the held-out one), with and without per-run
whitening. Whitening here goes through scipy's fractional matrix power and
shares no code with easr.alignment.

    python scripts/oracle_check.py --seed 0 --trials-per-class 50
"""
import argparse
import json

import numpy as np
from scipy.linalg import fractional_matrix_power
from sklearn.linear_model import LogisticRegression
from sklearn.model_selection import cross_val_score

from easr.synthgen import GeneratorConfig, generate


def tangent_features(X):
    iu = np.triu_indices(X.shape[1])
    feats = []
    for x in X:
        w, v = np.linalg.eigh(x @ x.T / x.shape[1])
        feats.append(((v * np.log(w)) @ v.T)[iu])
    return np.array(feats)


def whiten_runs(X, subject, run):
    out = X.copy()
    for s in np.unique(subject):
        for r in np.unique(run):
            m = (subject == s) & (run == r)
            ref = np.einsum("nct,ndt->cd", X[m], X[m]) / m.sum()
            out[m] = np.einsum("ij,njt->nit", fractional_matrix_power(ref, -0.5).real, X[m])
    return out


def stitch(X, y, rng, n_segments=12):
    """One segment-stitched copy per trial, donors drawn per segment within its class."""
    edges = np.linspace(0, X.shape[-1], n_segments + 1).astype(int)
    out = np.empty_like(X)
    for i, label in enumerate(y):
        pool = np.flatnonzero(y == label)
        for lo, hi in zip(edges[:-1], edges[1:]):
            out[i, :, lo:hi] = X[rng.choice(pool), :, lo:hi]
    return out


def oracle(cfg: GeneratorConfig, target: int | None = None, stitched: bool = False) -> dict:
    ts, _ = generate(cfg)
    clf = lambda: LogisticRegression(C=1.0, max_iter=5000)
    white = whiten_runs(ts.X, ts.subject, ts.run)
    feats = {"none": tangent_features(ts.X), "ea": tangent_features(white)}
    within = {s: float(cross_val_score(clf(), feats["none"][ts.subject == s],
                                       ts.y[ts.subject == s], cv=5).mean())
              for s in ts.subjects()}
    targets = ts.subjects() if target is None else [target]
    cross = {}
    for name, F in feats.items():
        accs = {}
        for t in targets:
            train = ts.subject != t
            accs[t] = float(clf().fit(F[train], ts.y[train]).score(F[~train], ts.y[~train]))
        cross[name] = accs
    out = {"within": within, "cross_none": cross["none"], "cross_ea": cross["ea"]}
    if stitched:
        accs = {}
        for t in targets:
            train = ts.subject != t
            extra = stitch(white[train], ts.y[train], np.random.default_rng(t))
            F = np.concatenate([feats["ea"][train], tangent_features(extra)])
            yy = np.concatenate([ts.y[train], ts.y[train]])
            accs[t] = float(clf().fit(F, yy).score(feats["ea"][~train], ts.y[~train]))
        out["cross_ea_stitched"] = accs
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--trials-per-class", type=int, default=50)
    ap.add_argument("--target", type=int, help="held-out subject (default: every subject)")
    ap.add_argument("--stitched", action="store_true",
                    help="also train on whitened data plus segment-stitched copies")
    args = ap.parse_args()
    cfg = GeneratorConfig(seed=args.seed, trials_per_class_per_session=args.trials_per_class)
    res = oracle(cfg, args.target, args.stitched)
    summary = {k: round(float(np.mean(list(v.values()))), 4) for k, v in res.items()}
    summary["within_min"] = round(min(res["within"].values()), 4)
    print(json.dumps({"summary": summary, "per_subject": res}, indent=2))


if __name__ == "__main__":
    main()
