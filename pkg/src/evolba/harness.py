"""Batch experiments, checkpoint reports and oracle construction from specs."""
from __future__ import annotations

import csv
import json
import logging
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import spectral
from .attack import AttackConfig, load_config_file, run
from .baseline import BaConfig, run_ba
from .oracle import HighFreqOracle, LinearOracle, Oracle, SphereOracle
from .tensor import load_image
from .trace import AttackTrace

log = logging.getLogger(__name__)

DEFAULT_CHECKPOINTS = (2_000, 10_000, 20_000, 30_000)
DESK_SIZE = (32, 32)


def synthetic_image(seed: int, width: int = DESK_SIZE[0], height: int = DESK_SIZE[1],
                    low: float = 0.1, high: float = 0.5) -> np.ndarray:
    """Random image with a 1/f amplitude spectrum, rescaled into ``[low, high]``."""
    rng = np.random.default_rng(seed)
    f = spectral.dft2(rng.uniform(0.0, 1.0, (height, width, 3)))
    radius = spectral._distance_grid(height, width)
    x = spectral.idft2(f / np.maximum(radius, 1.0)[:, :, None], clamp=False)
    x = (x - x.min()) / (x.max() - x.min())
    return low + (high - low) * x


def resolve_image(entry, size: tuple[int, int] | None = None) -> np.ndarray:
    """An image entry is a path, or ``{"synthetic": seed, "size": [w, h]}``."""
    if isinstance(entry, dict):
        w, h = entry.get("size", DESK_SIZE)
        return synthetic_image(int(entry["synthetic"]), w, h)
    if isinstance(entry, str) and entry.startswith("synthetic:"):
        w, h = size or DESK_SIZE
        return synthetic_image(int(entry.split(":", 1)[1]), w, h)
    return load_image(entry, size)


def build_oracle(spec: dict | str, image: np.ndarray) -> Oracle:
    """Construct an oracle positioned relative to ``image`` (analytic kinds) or connect to one."""
    if isinstance(spec, str):
        spec = parse_oracle_arg(spec)
    kind = spec["kind"]
    if kind == "linear":
        return LinearOracle.around(image, spec.get("distance", 2.0), seed=spec.get("seed", 0))
    if kind == "sphere":
        return SphereOracle.around(image, spec.get("distance", 2.0), offset=spec.get("offset", 8.0),
                                   seed=spec.get("seed", 0))
    if kind == "highfreq":
        h, w, _ = image.shape
        cutoff = spec.get("cutoff", min(w, h) // 4)
        threshold = spec.get("threshold")
        if threshold is None:
            threshold = spectral.highpass_energy_ratio(image, cutoff) + spec.get("margin", 0.05)
        return HighFreqOracle(cutoff, threshold, shape=image.shape)
    if kind == "remote":
        from .remote import RemoteOracle

        return RemoteOracle.connect(spec["host"], int(spec["port"]), timeout=spec.get("timeout", 10.0))
    raise ValueError(f"unknown oracle kind {kind!r}")


def parse_oracle_arg(text: str) -> dict:
    if text.startswith("remote:"):
        _, host, port = text.split(":")
        return {"kind": "remote", "host": host, "port": int(port)}
    if text not in ("linear", "sphere", "highfreq"):
        raise ValueError(f"unknown oracle {text!r}")
    return {"kind": text}


def oracle_name(spec: dict | str) -> str:
    if isinstance(spec, str):
        return spec
    return spec.get("name", spec["kind"])


def derived_seed(base: int, image: int, oracle: int, algorithm: int, repetition: int) -> int:
    return int(np.random.SeedSequence([base, image, oracle, algorithm, repetition]).generate_state(1)[0])


def run_algorithm(algo: dict, image: np.ndarray, oracle: Oracle, seed: int):
    """Dispatch one attack run; ``algo`` is ``{"name", "algo": "evolba"|"ba", "config": {...}}``."""
    kind = algo.get("algo", "evolba")
    cfg = dict(algo.get("config", {}))
    if kind == "evolba":
        cfg["rng_seed"] = seed
        return run(image, oracle, AttackConfig.from_dict(cfg))
    if kind == "ba":
        budget = cfg.pop("budget", 30_000)
        return run_ba(image, oracle, budget, BaConfig.from_dict(cfg), seed=seed)
    raise ValueError(f"unknown algorithm {kind!r}")


@dataclass
class ExperimentSpec:
    images: list
    oracles: list
    algorithms: list
    repetitions: int = 1
    seed: int = 0
    checkpoints: tuple[int, ...] = DEFAULT_CHECKPOINTS

    def __post_init__(self):
        if not (self.images and self.oracles and self.algorithms):
            raise ValueError("an experiment needs images, oracles and algorithms")
        self.checkpoints = tuple(int(c) for c in self.checkpoints)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentSpec":
        return cls(**load_config_file(path))


@dataclass
class RunRecord:
    algorithm: str
    oracle: str
    image: int
    repetition: int
    seed: int
    final_l2: float
    queries: int
    at_checkpoints: list[float]
    trace_path: str | None = None


@dataclass
class Report:
    checkpoints: tuple[int, ...]
    runs: list[RunRecord] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)

    def algorithms(self) -> list[str]:
        return list(dict.fromkeys(r.algorithm for r in self.runs))

    def oracles(self) -> list[str]:
        return list(dict.fromkeys(r.oracle for r in self.runs))

    def mean_at(self, algorithm: str, oracle: str, checkpoint: int, image: int | None = None) -> float:
        k = self.checkpoints.index(checkpoint)
        vals = [r.at_checkpoints[k] for r in self.runs
                if r.algorithm == algorithm and r.oracle == oracle and (image is None or r.image == image)]
        return float(np.mean(vals)) if vals else math.nan

    def table(self) -> list[list]:
        """Rows per algorithm; columns ``oracle@q=K``."""
        header = ["algorithm"] + [f"{o}@q={k}" for o in self.oracles() for k in self.checkpoints]
        rows = [header]
        for a in self.algorithms():
            rows.append([a] + [self.mean_at(a, o, k) for o in self.oracles() for k in self.checkpoints])
        return rows

    def write(self, out_dir: str | Path) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "table.csv", "w", newline="") as fh:
            csv.writer(fh).writerows(self.table())
        summary = {
            "checkpoints": list(self.checkpoints),
            "runs": [r.__dict__ for r in self.runs],
            "failures": self.failures,
        }
        (out_dir / "report.json").write_text(json.dumps(summary, indent=2))


def _run_stem(algorithm: str, oracle: str, image: int, rep: int) -> str:
    return f"{algorithm}__{oracle}__img{image}__rep{rep}"


def run_experiment(spec: ExperimentSpec, out_dir: str | Path | None = None) -> Report:
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        (out / "runs").mkdir(parents=True, exist_ok=True)
    report = Report(spec.checkpoints)
    images = [resolve_image(entry) for entry in spec.images]
    for i, image in enumerate(images):
        for j, ospec in enumerate(spec.oracles):
            oname = oracle_name(ospec)
            for k, algo in enumerate(spec.algorithms):
                aname = algo.get("name", algo.get("algo", "evolba"))
                for rep in range(spec.repetitions):
                    seed = derived_seed(spec.seed, i, j, k, rep)
                    try:
                        oracle = build_oracle(ospec, image)
                        ae, trace = run_algorithm(algo, image, oracle, seed)
                        if ae is None:
                            raise RuntimeError("no adversarial example found")
                    except Exception as exc:  # one bad run must not sink the batch
                        msg = f"{aname}/{oname}/image {i}/rep {rep}: {exc}"
                        warnings.warn(f"run excluded from means: {msg}")
                        report.failures.append({"algorithm": aname, "oracle": oname, "image": i,
                                                "repetition": rep, "error": str(exc)})
                        continue
                    path = None
                    if out is not None:
                        stem = _run_stem(aname, oname, i, rep)
                        path = str(out / "runs" / f"{stem}.csv")
                        trace.to_csv(path)
                        (out / "runs" / f"{stem}.json").write_text(json.dumps({
                            "algorithm": aname, "oracle": oname, "image": i, "repetition": rep,
                            "seed": seed, "final_l2": trace.final_l2, "queries_used": trace.queries_used,
                        }, indent=2))
                    report.runs.append(RunRecord(aname, oname, i, rep, seed, trace.final_l2,
                                                 trace.queries_used,
                                                 [trace.best_at(c) for c in spec.checkpoints], path))
                    log.info("%s/%s image %d rep %d: final L2 %.4f", aname, oname, i, rep, trace.final_l2)
    if report.failures:
        log.warning("%d run(s) excluded from the means", len(report.failures))
    if out is not None:
        report.write(out)
    return report


def report_from_dir(out_dir: str | Path, checkpoints=DEFAULT_CHECKPOINTS) -> Report:
    """Rebuild a report purely from the per-run CSV traces and JSON summaries."""
    runs_dir = Path(out_dir) / "runs"
    report = Report(tuple(int(c) for c in checkpoints))
    for meta_path in sorted(runs_dir.glob("*.json")):
        meta = json.loads(meta_path.read_text())
        trace = AttackTrace.from_csv(meta_path.with_suffix(".csv"))
        report.runs.append(RunRecord(meta["algorithm"], meta["oracle"], meta["image"], meta["repetition"],
                                     meta["seed"], trace.final_l2, trace.queries_used,
                                     [trace.best_at(c) for c in report.checkpoints],
                                     str(meta_path.with_suffix(".csv"))))
    report.runs.sort(key=lambda r: (r.image, r.oracle, r.algorithm, r.repetition))
    return report


def desk_suite(n_images: int = 10, budget: int = 30_000, with_init_variant: bool = False) -> ExperimentSpec:
    """Ten synthetic 32x32 images against a linear and a high-frequency oracle, EvolBA vs BA."""
    algorithms = [
        {"name": "EvolBA", "algo": "evolba", "config": {"budget": budget}},
        {"name": "BA", "algo": "ba", "config": {"budget": budget}},
    ]
    if with_init_variant:
        # appended so the other algorithms keep their derived seeds
        algorithms.append({"name": "EvolBA+I", "algo": "evolba",
                           "config": {"budget": budget, "use_init_operator": True}})
    return ExperimentSpec(
        images=[{"synthetic": s, "size": list(DESK_SIZE)} for s in range(n_images)],
        oracles=[{"kind": "linear", "distance": 2.0}, {"kind": "highfreq", "margin": 0.05}],
        algorithms=algorithms,
    )


def serve_oracle(oracle: Oracle, host: str = "127.0.0.1", port: int = 0, stdio: bool = False) -> None:
    """Serve ``oracle`` until interrupted (TCP) or until stdin closes (stdio)."""
    from .remote import OracleServer, serve_stdio

    if stdio:
        serve_stdio(oracle, sys.stdin.buffer, sys.stdout.buffer)
        return
    try:
        server = OracleServer(oracle, host, port)
    except OSError as exc:
        raise RuntimeError(f"cannot bind {host}:{port}: {exc}") from exc
    log.info("serving oracle on %s:%d", *server.address)
    try:
        server.serve_forever()
    finally:
        server.server_close()
        log.info("served %d queries in total", oracle.budget.used)
