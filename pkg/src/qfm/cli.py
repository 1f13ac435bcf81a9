"""Command-line driver: JSON config + flag overrides, CSV/JSON outputs.

Exit status is 0 on success, 2 when the configuration is invalid and 1 when
the computation itself fails. Outputs are written to a temporary file and
moved into place only once complete.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

import numpy as np

from qfm import fourier, moments, theory, trainer
from qfm.circuit import (
    ANSATZE,
    BrickwiseLayout,
    Circuit,
    build_brickwise,
    build_model_circuit,
    extract_lightcone,
    local_blocks,
    make_block,
)
from qfm.simulator import Observable
from qfm.spectrum import build_encoding, full_redundancy, layer_spectrum, partial_redundancy

COMMANDS = ("spectrum", "variance-mc", "variance-theory", "bounds", "epsilon", "lightcone", "train", "norm-check")


class ConfigError(ValueError):
    pass


@dataclass
class EncodingSection:
    strategy: str = "pauli"
    n: int = 1
    L: int = 1
    eigenvalues: list | None = None
    repeat_layers: bool = False


@dataclass
class AnsatzSection:
    kind: str = "strongly_entangling"
    reps: int = 1
    m: int | None = None


@dataclass
class BrickwiseSection:
    m: int | None = None
    L1: int = 1
    L2: int = 1
    site: int = 0


@dataclass
class ObservableSection:
    kind: str = "global_zero_projector"
    rank: int = 1


@dataclass
class RunSection:
    samples: int = 10000
    seed: int | None = None
    threads: int | None = None
    output: str | None = None
    method: str = "exact"


@dataclass
class BoundsSection:
    eps_m: float | None = None
    eps_inf: float | None = None
    eps_diamond: float | None = None


@dataclass
class EpsilonSection:
    spectral: bool = False


@dataclass
class TrainSection:
    omega: float | None = None
    amplitude: float = 0.5
    offset: float = 0.0
    epochs: int = 300
    lr: float = 0.05
    optimizer: str = "adam"
    snapshot_every: int = 10


@dataclass
class ExperimentConfig:
    command: str = "spectrum"
    encoding: EncodingSection = field(default_factory=EncodingSection)
    ansatz: AnsatzSection = field(default_factory=AnsatzSection)
    brickwise: BrickwiseSection = field(default_factory=BrickwiseSection)
    observable: ObservableSection = field(default_factory=ObservableSection)
    run: RunSection = field(default_factory=RunSection)
    bounds: BoundsSection = field(default_factory=BoundsSection)
    epsilon: EpsilonSection = field(default_factory=EpsilonSection)
    train: TrainSection = field(default_factory=TrainSection)

    def resolved(self) -> dict:
        """Everything that determines the output (thread count and paths excluded)."""
        d = dataclasses.asdict(self)
        d["run"].pop("threads")
        d["run"].pop("output")
        return d


SECTIONS = {f.name: f.type for f in dataclasses.fields(ExperimentConfig) if f.name != "command"}


def _section_cls(name: str):
    return type(getattr(ExperimentConfig(), name))


def load_config(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    cfg = ExperimentConfig()
    for key, value in data.items():
        if key == "command":
            cfg.command = value
            continue
        if key not in SECTIONS:
            raise ConfigError(f"unknown config section {key!r}")
        if not isinstance(value, dict):
            raise ConfigError(f"section {key!r} must be an object")
        cls = _section_cls(key)
        names = {f.name for f in dataclasses.fields(cls)}
        extra = sorted(set(value) - names)
        if extra:
            raise ConfigError(f"unknown field(s) in {key!r}: {', '.join(extra)}")
        setattr(cfg, key, cls(**{**dataclasses.asdict(getattr(cfg, key)), **value}))
    return cfg


# flag -> (section, field, type)
FLAGS: dict[str, tuple[str, str, Callable]] = {
    "--encoding": ("encoding", "strategy", str),
    "-n": ("encoding", "n", int),
    "-L": ("encoding", "L", int),
    "--ansatz": ("ansatz", "kind", str),
    "--reps": ("ansatz", "reps", int),
    "-m": ("ansatz", "m", int),
    "--brick-m": ("brickwise", "m", int),
    "--L1": ("brickwise", "L1", int),
    "--L2": ("brickwise", "L2", int),
    "--site": ("brickwise", "site", int),
    "--observable": ("observable", "kind", str),
    "--rank": ("observable", "rank", int),
    "--samples": ("run", "samples", int),
    "--seed": ("run", "seed", int),
    "--threads": ("run", "threads", int),
    "--output": ("run", "output", str),
    "--method": ("run", "method", str),
    "--eps-m": ("bounds", "eps_m", float),
    "--eps-inf": ("bounds", "eps_inf", float),
    "--eps-diamond": ("bounds", "eps_diamond", float),
    "--omega": ("train", "omega", float),
    "--amplitude": ("train", "amplitude", float),
    "--offset": ("train", "offset", float),
    "--epochs": ("train", "epochs", int),
    "--lr": ("train", "lr", float),
    "--optimizer": ("train", "optimizer", str),
    "--snapshot-every": ("train", "snapshot_every", int),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise ConfigError(message)


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qfm", description="Quantum Fourier model spectra, coefficient statistics and bounds.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON experiment config; flags override it")
    p.add_argument("--eigenvalues", help="custom encoding eigenvalues as JSON (list of per-layer lists)")
    p.add_argument("--repeat-layers", action="store_true", default=None, help="reuse layer-1 exponential scalings")
    p.add_argument("--spectral", action="store_true", default=None, help="also estimate the spectral-norm distance")
    for flag, (sec, name, typ) in FLAGS.items():
        p.add_argument(flag, dest=f"{sec}__{name}", type=typ, default=None)
    return p


def parse_config(argv: list[str]) -> ExperimentConfig:
    args = make_parser().parse_args(argv)
    data: dict[str, Any] = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    cfg = load_config(data)
    if "command" in data and data["command"] != args.command:
        raise ConfigError(f"config is for {data['command']!r}, not {args.command!r}")
    cfg.command = args.command
    for key, value in vars(args).items():
        if "__" in key and value is not None:
            sec, name = key.split("__")
            setattr(getattr(cfg, sec), name, value)
    if args.eigenvalues is not None:
        try:
            cfg.encoding.eigenvalues = json.loads(args.eigenvalues)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--eigenvalues: {exc}") from exc
    if args.repeat_layers:
        cfg.encoding.repeat_layers = True
    if args.spectral:
        cfg.epsilon.spectral = True
    if cfg.run.seed is None:
        env = os.environ.get("QFM_SEED")
        try:
            cfg.run.seed = int(env) if env is not None else 0
        except ValueError as exc:
            raise ConfigError(f"QFM_SEED must be an integer, got {env!r}") from exc
    if cfg.run.threads is None:
        cfg.run.threads = os.cpu_count() or 1
    if cfg.run.threads < 1:
        raise ConfigError("threads must be positive")
    if cfg.run.samples < 1:
        raise ConfigError("samples must be positive")
    if cfg.run.seed < 0:
        raise ConfigError("seed must be nonnegative")
    return cfg


def fmt(v) -> str:
    """Shortest round-trip decimal."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, Fraction):
        return str(v.numerator) if v.denominator == 1 else repr(float(v))
    if isinstance(v, str):
        return v
    x = float(v)
    if x.is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(x)


def physical(w: int, scale: Fraction) -> str:
    return fmt(Fraction(int(w)) / scale)


# ---------------------------------------------------------------- outputs


class Output:
    """Collects files and commits them together after the job succeeds."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.files: dict[str, str] = {}

    def header(self) -> str:
        return "# config: " + json.dumps(self.cfg.resolved(), sort_keys=True, separators=(",", ":")) + "\n"

    def csv(self, name: str, columns: list[str], rows) -> None:
        lines = [self.header(), ",".join(columns) + "\n"]
        lines += [",".join(fmt(v) for v in row) + "\n" for row in rows]
        self.files[name] = "".join(lines)

    def json(self, name: str, obj: dict) -> None:
        obj = {"config": self.cfg.resolved(), **obj}
        self.files[name] = json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"

    def commit(self, default_name: str) -> list[str]:
        target = self.cfg.run.output
        if target is None:
            for text in self.files.values():
                sys.stdout.write(text)
            return ["<stdout>"]
        written = []
        if len(self.files) == 1 and not target.endswith(os.sep) and not os.path.isdir(target):
            paths = {name: Path(target) for name in self.files}
        else:
            Path(target).mkdir(parents=True, exist_ok=True)
            paths = {name: Path(target) / name for name in self.files}
        for name, text in self.files.items():
            path = paths[name]
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".qfm-")
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            os.replace(tmp, path)
            written.append(str(path))
        return written


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, (tuple, np.ndarray)):
        return list(o)
    raise TypeError(type(o))


# ---------------------------------------------------------------- builders


def build_spec(cfg: ExperimentConfig):
    e = cfg.encoding
    return build_encoding(e.strategy, e.n, e.L, e.eigenvalues, repeat_layers=e.repeat_layers)


def brickwise_layout(cfg: ExperimentConfig) -> BrickwiseLayout | None:
    b = cfg.brickwise
    if b.m is None:
        return None
    return BrickwiseLayout(b.m, b.L1, b.L2, b.site, cfg.ansatz.kind, cfg.ansatz.reps)


def trainable_block(cfg: ExperimentConfig, n: int):
    a = cfg.ansatz
    if a.kind not in ANSATZE:
        raise ConfigError(f"unknown ansatz {a.kind!r}; expected one of {ANSATZE}")
    if a.m is not None and a.m < n:
        return local_blocks(a.kind, n, a.m, a.reps)
    return make_block(a.kind, n, a.reps)


def build_circuit(cfg: ExperimentConfig) -> Circuit:
    spec = build_spec(cfg)
    layout = brickwise_layout(cfg)
    if layout is not None:
        return build_brickwise(layout, spec)
    return build_model_circuit(spec, trainable_block(cfg, spec.n_qubits))


def build_observable(cfg: ExperimentConfig, circuit: Circuit) -> Observable:
    o = cfg.observable
    site: tuple[int, ...] = (0,)
    if circuit.layout is not None:
        site = circuit.layout.site_qubits(circuit.n_qubits)
    return Observable.build(o.kind, circuit.n_qubits, site, o.rank)


def _check_method(cfg: ExperimentConfig) -> None:
    if cfg.run.method not in ("exact", "dft"):
        raise ConfigError(f"unknown method {cfg.run.method!r}")


# ---------------------------------------------------------------- commands
# Each prepare_* validates and returns a job; the job does the computing.


def prepare_spectrum(cfg: ExperimentConfig):
    spec = build_spec(cfg)
    table = full_redundancy(spec)

    def job(out: Output) -> str:
        total = table.total_paths
        rows = [(physical(w, table.lattice_scale), c, Fraction(c, total)) for w, c in sorted(table.entries.items())]
        out.csv("spectrum.csv", ["omega", "redundancy", "normalized_redundancy"], rows)
        return f"{len(rows)} frequencies, {total} path pairs"

    return job


def _mc(cfg: ExperimentConfig, circuit: Circuit, obs: Observable):
    return fourier.coefficient_statistics(
        circuit, cfg.run.samples, cfg.run.seed, obs, method=cfg.run.method, threads=cfg.run.threads
    )


def prepare_variance_mc(cfg: ExperimentConfig):
    _check_method(cfg)
    if cfg.run.samples < 2:
        raise ConfigError("variance-mc needs at least two samples")
    circuit = build_circuit(cfg)
    obs = build_observable(cfg, circuit)
    fourier.sampling_grid(full_redundancy(circuit.spec))

    def job(out: Output) -> str:
        st = _mc(cfg, circuit, obs)
        rows = [
            (physical(w, st.lattice_scale), r, m.real, m.imag, v, s)
            for w, r, m, v, s in zip(st.freqs, st.redundancy, st.mean, st.variance, st.stderr)
            if r
        ]
        out.csv("variance_mc.csv", ["omega", "redundancy", "mean_re", "mean_im", "var_mc", "stderr"], rows)
        return f"{len(rows)} frequencies from {st.count} samples"

    return job


def prepare_variance_theory(cfg: ExperimentConfig):
    spec = build_spec(cfg)
    n = spec.n_qubits
    obs = Observable.build(cfg.observable.kind, n, (0,), cfg.observable.rank)
    ti = theory.TheoryInputs.from_observable(obs)
    table = full_redundancy(spec)
    partials = [partial_redundancy(spec, j, spec.n_layers) for j in range(1, spec.n_layers + 1)]

    def job(out: Output) -> str:
        exact = theory.var_2design_reuploading_exact(ti, [layer_spectrum(l, spec.lattice_scale) for l in spec.layers])
        rows = []
        for w, r in sorted(table.entries.items()):
            tv = theory.var_2design_reuploading_detail(ti, w, [p[w] for p in partials])
            rows.append((physical(w, table.lattice_scale), r, tv.value, tv.flag or "exact", exact.get(w, 0.0)))
        out.csv("variance_theory.csv", ["omega", "redundancy", "var_theory", "flag", "var_exact"], rows)
        return f"{len(rows)} frequencies, d={ti.d}"

    return job


def prepare_bounds(cfg: ExperimentConfig):
    spec = build_spec(cfg)
    b = cfg.bounds
    eps = {"monomial": b.eps_m, "spectral": b.eps_inf, "diamond": b.eps_diamond}
    eps = {k: v for k, v in eps.items() if v is not None}
    for k, v in eps.items():
        if not math.isfinite(v) or v < 0:
            raise ConfigError(f"eps for {k} must be a nonnegative number")
    layout = brickwise_layout(cfg)
    if not eps and layout is None:
        raise ConfigError("bounds needs --eps-m/--eps-inf/--eps-diamond or a brickwise section")
    rows_src = []
    if eps:
        if spec.n_layers != 1:
            raise ConfigError("approximate-2-design bounds need L = 1")
        obs = Observable.build(cfg.observable.kind, spec.n_qubits, (0,), cfg.observable.rank)
        ti = theory.TheoryInputs.from_observable(obs)
        table = full_redundancy(spec)
        rows_src.append(("approx", ti, table))
    if layout is not None:
        if cfg.observable.kind != "local_site_projector":
            raise ConfigError("local 2-design bounds need the local_site_projector observable")
        circuit = build_brickwise(layout, spec)
        cone = extract_lightcone(circuit)
        if not 1 <= cfg.observable.rank <= 2**layout.m:
            raise ConfigError("rank out of range for the brick width")
        rows_src.append(("local", layout, cone))

    def job(out: Output) -> str:
        rows = []
        for kind, a, t in rows_src:
            if kind == "approx":
                for w, r in sorted(t.entries.items()):
                    for norm in theory.NORMS:
                        if norm in eps:
                            rows.append((physical(w, t.lattice_scale), norm, theory.bound_approx_2design(a, norm, eps[norm], w, r)))
            else:
                for w, r in sorted(t.redundancy.entries.items()):
                    v = theory.bound_local_2design("projector", a.m, a.L2, r, rank=cfg.observable.rank)
                    rows.append((physical(w, t.redundancy.lattice_scale), "local_projector", v))
        out.csv("bounds.csv", ["omega", "bound_kind", "value"], rows)
        return f"{len(rows)} bound values"

    return job


def prepare_epsilon(cfg: ExperimentConfig):
    n = cfg.encoding.n
    if n < 1:
        raise ConfigError("n must be positive")
    block = trainable_block(cfg, n)
    if 2**n > 16:
        raise ConfigError("epsilon estimation supports d <= 16")
    if cfg.epsilon.spectral and 2**n > 8:
        raise ConfigError("spectral distance needs d <= 8")

    def job(out: Output) -> str:
        rep = moments.empirical_epsilon_monomial(block, cfg.run.samples, cfg.run.seed)
        if cfg.epsilon.spectral:
            rep.epsilon_inf = moments.empirical_epsilon_spectral(block, cfg.run.samples, cfg.run.seed)
        out.json("epsilon.json", rep.as_dict())
        return f"epsilon_m={fmt(rep.epsilon_m)} (stderr {fmt(rep.stderr)})"

    return job


def prepare_lightcone(cfg: ExperimentConfig):
    _check_method(cfg)
    layout = brickwise_layout(cfg)
    if layout is None:
        raise ConfigError("lightcone needs a brickwise section (--brick-m)")
    if cfg.observable.kind != "local_site_projector":
        raise ConfigError("lightcone needs the local_site_projector observable")
    spec = build_spec(cfg)
    circuit = build_brickwise(layout, spec)
    cone = extract_lightcone(circuit)
    obs = Observable.local_site_projector(cone.circuit.n_qubits, cone.site, cfg.observable.rank)
    fourier.sampling_grid(cone.redundancy)
    r = cfg.observable.rank

    def job(out: Output) -> str:
        st = _mc(cfg, cone.circuit, obs)
        rows = []
        for w, red, v, s in zip(st.freqs, st.redundancy, st.variance, st.stderr):
            if not red:
                continue
            lc = theory.var_2design_lightcone(layout.m, layout.L1, layout.L2, r, r, red, int(w)) if w else ""
            bound = theory.bound_local_2design("projector", layout.m, layout.L2, red, rank=r)
            rows.append((physical(w, st.lattice_scale), red, v, s, lc, bound))
        out.csv(
            "lightcone.csv", ["omega", "redundancy_cone", "var_mc", "stderr", "var_lightcone", "bound_local"], rows
        )
        return f"cone on {len(cone.support)} qubits, encoding support {len(cone.encoding_support)}"

    return job


def prepare_train(cfg: ExperimentConfig):
    t = cfg.train
    circuit = build_circuit(cfg)
    obs = build_observable(cfg, circuit)
    table = full_redundancy(circuit.spec)
    if t.omega is None:
        raise ConfigError("train needs a target frequency (--omega)")
    trainer.lattice_frequency(table, t.omega)
    tc = trainer.TrainConfig(
        omega=t.omega,
        amplitude=t.amplitude,
        offset=t.offset,
        epochs=t.epochs,
        lr=t.lr,
        optimizer=t.optimizer,
        seed=cfg.run.seed,
        snapshot_every=t.snapshot_every,
    )

    def job(out: Output) -> str:
        tr = trainer.train(circuit, tc, obs)
        out.csv("loss.csv", ["epoch", "loss"], enumerate(tr.loss))
        rows = [
            (e, physical(w, tr.lattice_scale), a)
            for e, snap in zip(tr.snapshot_epochs, tr.snapshots)
            for w, a in zip(tr.freqs, snap)
        ]
        out.csv("coeffs.csv", ["epoch", "omega", "abs_c"], rows)
        return f"final loss {fmt(tr.final_loss)} after {t.epochs} epochs"

    return job


def prepare_norm_check(cfg: ExperimentConfig):
    _check_method(cfg)
    circuit = build_circuit(cfg)
    obs = build_observable(cfg, circuit)
    fourier.sampling_grid(full_redundancy(circuit.spec))

    def job(out: Output) -> str:
        theta, haar = fourier.draw(circuit, cfg.run.seed, 0, cfg.run.samples)
        rows = []
        for i in range(cfg.run.samples):
            cs = fourier.extract_coefficients(circuit, theta[i], obs, [h[i] for h in haar] or None, cfg.run.method)
            rep = fourier.norm_bound_check(cs, obs)
            rows.append((i, rep["sum_sq"], rep["bound"], rep["pass"]))
        out.csv("norm_check.csv", ["sample", "sum_sq", "bound", "pass"], rows)
        ok = sum(r[3] for r in rows)
        return f"{ok}/{len(rows)} pass"

    return job


PREPARE = {
    "spectrum": prepare_spectrum,
    "variance-mc": prepare_variance_mc,
    "variance-theory": prepare_variance_theory,
    "bounds": prepare_bounds,
    "epsilon": prepare_epsilon,
    "lightcone": prepare_lightcone,
    "train": prepare_train,
    "norm-check": prepare_norm_check,
}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = parse_config(argv)
        job = PREPARE[cfg.command](cfg)
    except (ValueError, TypeError, OverflowError) as exc:
        print(f"qfm: invalid configuration: {exc}", file=sys.stderr)
        return 2
    out = Output(cfg)
    try:
        summary = job(out)
        written = out.commit(cfg.command)
    except Exception as exc:  # noqa: BLE001 - report any runtime failure as status 1
        print(f"qfm: {cfg.command} failed: {exc}", file=sys.stderr)
        return 1
    print(f"qfm {cfg.command}: {summary} -> {', '.join(written)}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
