"""Seeded streams, learner dispatch and the experiment runner behind the CLI.

All randomness flows from one root seed. A named stream is seeded with
the root plus the SHA-256 digest of its label, so adding or reordering
runs never perturbs another run's draws. Stream labels used here:

* ``gen``: the ``gen`` subcommand's spec generator
* ``learn/target``, ``learn/learner``: the ``learn`` subcommand
* ``<run>/<trial>/spec``, ``<run>/<trial>/target``, ``<run>/<trial>/learner``:
  one experiment trial
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .asum_oracle import asum_exact_pmf, random_spec
from .learners import (
    Hypothesis,
    LearnerConfig,
    SampleSource,
    Trace,
    audit_tv,
    learn_general_k,
    learn_k3,
    learn_sparse,
    learn_unknown_support_enum,
    learn_unknown_support_k2,
)

ALGOS = ("sparse", "k3", "generalk", "unknown2", "unknownk")
CSV_COLUMNS = ("trial", "seed", "algo", "eps", "samples_used", "tv_audit", "wall_ms")


def stream_seed(root: int, label: str) -> np.random.SeedSequence:
    digest = hashlib.sha256(label.encode()).digest()
    words = np.frombuffer(digest[:16], dtype="<u4").tolist()
    return np.random.SeedSequence([int(root), *words])


def stream(root: int, label: str) -> np.random.Generator:
    return np.random.default_rng(stream_seed(root, label))


def derived_seed(root: int, label: str) -> int:
    return int(stream_seed(root, label).generate_state(1)[0])


def run_learner(algo: str, target: Callable[[int], np.ndarray], cfg: LearnerConfig, rng: np.random.Generator,
                trace: Trace, support: tuple[int, ...] | None = None, n: int = 0, amax: int | None = None,
                k: int | None = None) -> Hypothesis:
    """Dispatch to one learner; `support`, `amax` and `k` are needed by some algos only."""
    if algo == "sparse":
        return Hypothesis.from_law(learn_sparse(target, cfg.sparse_support, cfg.eps, cfg.delta), "empirical")
    if algo in ("k3", "generalk"):
        if support is None:
            raise ValueError(f"--algo {algo} needs a known support")
        fn = learn_k3 if algo == "k3" else learn_general_k
        return fn(target, n, support, cfg, rng, trace)
    if amax is None:
        raise ValueError(f"--algo {algo} needs --amax")
    if algo == "unknown2":
        return learn_unknown_support_k2(target, amax, cfg=cfg, rng=rng, trace=trace)
    if algo == "unknownk":
        if k is None:
            raise ValueError("--algo unknownk needs --k")
        return learn_unknown_support_enum(target, amax, k, cfg=cfg, rng=rng, trace=trace)
    raise ValueError(f"unknown algo {algo!r}; choose from {', '.join(ALGOS)}")


# -- experiments -----------------------------------------------------------------


@dataclass
class RunConfig:
    name: str
    algo: str
    k: int
    n: int
    amax: int
    eps: float
    delta: float = 0.1
    trials: int = 1
    profile: str = "uniform"
    support: tuple[int, ...] | None = None
    templates: int | None = None
    learner: dict | None = None

    @classmethod
    def from_json_obj(cls, obj: dict) -> "RunConfig":
        obj = dict(obj)
        if obj.get("algo") not in ALGOS:
            raise ValueError(f"run {obj.get('name')!r}: algo must be one of {ALGOS}")
        if obj.get("support") is not None:
            obj["support"] = tuple(int(a) for a in obj["support"])
        known = set(cls.__dataclass_fields__)
        extra = set(obj) - known
        if extra:
            raise ValueError(f"unknown run keys: {sorted(extra)}")
        return cls(**obj)


def load_experiment(obj: dict) -> tuple[int, list[RunConfig], bool]:
    """(root seed, runs, record_wall) from an experiment config object."""
    extra = set(obj) - {"seed", "runs", "record_wall", "description"}
    if extra:
        raise ValueError(f"unknown experiment keys: {sorted(extra)}")
    runs = [RunConfig.from_json_obj(r) for r in obj["runs"]]
    names = [r.name for r in runs]
    if len(set(names)) != len(names):
        raise ValueError("run names must be unique")
    return int(obj.get("seed", 0)), runs, bool(obj.get("record_wall", False))


def run_trial(root: int, run: RunConfig, i: int, record_wall: bool = False) -> tuple[dict, dict]:
    """One seeded trial: build a random spec, learn it, audit the output exactly."""
    label = f"{run.name}/{i}"
    spec = random_spec(run.k, run.n, run.amax, run.profile, stream(root, f"{label}/spec"),
                       support=run.support, templates=run.templates)
    truth = asum_exact_pmf(spec)
    src = SampleSource.from_dist(truth, stream(root, f"{label}/target"))
    seed = derived_seed(root, label)
    cfg = LearnerConfig(**{"eps": run.eps, "delta": run.delta, "seed": seed, **(run.learner or {})})
    trace = Trace()
    t0 = time.perf_counter()
    h = run_learner(run.algo, src, cfg, stream(root, f"{label}/learner"), trace,
                    support=spec.support, n=spec.n, amax=run.amax, k=spec.k)
    wall = (time.perf_counter() - t0) * 1000 if record_wall else 0.0
    tv = audit_tv(truth, h)
    row = {
        "trial": f"{run.name}:{i:03d}",
        "seed": seed,
        "algo": run.algo,
        "eps": run.eps,
        "samples_used": src.draws,
        "tv_audit": float(f"{tv:.12g}"),
        "wall_ms": round(wall),
    }
    detail = {"trial": row["trial"], "run": run.name, "support": list(spec.support), "family": h.family,
              "sampler_calls": src.calls, **_jsonable(trace.to_json_obj())}
    return row, detail


def run_experiment(obj: dict, progress: Callable[[str], None] | None = None) -> tuple[list[dict], list[dict]]:
    root, runs, record_wall = load_experiment(obj)
    rows, details = [], []
    for run in runs:
        for i in range(run.trials):
            row, detail = run_trial(root, run, i, record_wall)
            rows.append(row)
            details.append(detail)
            if progress is not None:
                progress(f"{row['trial']} tv={row['tv_audit']:.4f} draws={row['samples_used']}")
    rows.sort(key=lambda r: r["trial"])
    details.sort(key=lambda d: d["trial"])
    return rows, details


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({**r, "eps": repr(float(r["eps"])), "tv_audit": repr(float(r["tv_audit"]))})
    return buf.getvalue()


def _jsonable(x: Any) -> Any:
    """Plain JSON types; numpy scalars and tuples converted, infinities kept as strings."""
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else repr(x)
    return x


def dump_json(obj: Any) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"
