"""Offline/online orchestration, run configuration and result tables.

Output files (all inside ``RunConfig.out``)
------------------------------------------
``snapshots.bin``, ``basis.bin``
    Binary matrix containers (see :mod:`sbmrom.io`); both carry the training
    parameters.
``eigenvalues.csv``
    ``index, eigenvalue, ratio`` for every POD eigenvalue above the rank cutoff.
``offline_times.csv``
    ``mu, wall_time_s`` per training solve.
``samples.csv``
    One line per (test parameter, mode count): ``mu, modes,
    projection_error, rom_error, online_time_s, online_time_dense_s,
    fom_time_s, status``.
``online.json``
    Aggregated rows and the test parameters, read back by ``report``.
``errors.csv``
    ``modes, projection_error, rom_error, status`` (means over the test set).
``eigdecay.csv``
    ``index, ratio`` with ``ratio = lambda_i / lambda_1``.
``timing.csv``
    ``modes, online_time_s, fom_time_s, savings_percent, speedup,
    online_time_dense_s, speedup_dense, status``.
``fields_mu<value>.vtk``
    Nodal fields ``T`` (full order), ``T_rom`` and ``abs_error``.
``convergence.csv``
    ``h, n_dofs, error, rate``.

Timing
------
The full-order time of a test parameter covers classification, assembly and
the sparse solve; the online time covers classification, assembly, the
Galerkin projection and the reduced solve. Each is the best of
``timing_repeats`` runs. Savings are ``(t_fom - t_online) / t_fom``.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import io
from .assembly import ProblemData, assemble
from .geometry import AspectRectangle, FixedDisc, YCenterRectangle
from .mesh import BackgroundMesh, Box, build_structured_mesh
from .pod import (
    PodBasis,
    SnapshotSet,
    l2_projection_error,
    pod,
    project,
    reconstruct,
    relative_l2_error,
    solve_reduced,
)
from .solver import ConvergenceRow, convergence_study, solve
from .surrogate import classify

__all__ = [
    "EXPERIMENTS",
    "RunConfig",
    "Artifacts",
    "ReportRow",
    "SampleRecord",
    "OnlineResult",
    "sample_parameters",
    "offline",
    "load_artifacts",
    "online",
    "report",
    "convergence",
]

log = logging.getLogger(__name__)

EXPERIMENTS = ("rect_ycenter", "rect_aspect", "disc_convergence")

_PRESETS: dict[str, dict] = {
    "rect_ycenter": dict(box=(-2.0, 2.0, -1.0, 1.0), mu_range=(-0.5, 0.5), report_mu=(0.403, -0.015)),
    "rect_aspect": dict(
        box=(-0.7, 0.7, -0.7, 0.7),
        mu_range=(0.29, 6.67),
        modes=(2, 5, 10, 20, 30, 40, 50, 100),
        report_mu=(0.5, 4.0),
    ),
    "disc_convergence": dict(box=(-2.0, 2.0, -1.0, 1.0), mu_range=(0.0, 0.0)),
}


@dataclass(frozen=True)
class RunConfig:
    """Everything that defines a run; fully determines its outputs given ``seed``.

    Missing keys take the defaults of the chosen experiment.
    """

    experiment: str
    box: tuple[float, float, float, float] = (-2.0, 2.0, -1.0, 1.0)
    h: float = 0.035
    mu_range: tuple[float, float] = (-0.5, 0.5)
    n_snapshots: int = 400
    n_test: int = 50
    modes: tuple[int, ...] = (2, 5, 10, 20, 30, 40, 50, 100, 200, 300)
    alpha: float = 4.0
    quad_order: int = 3
    seed: int = 0
    out: str = "results"
    solver: str = "direct"
    projection: str = "split"
    timing_repeats: int = 3
    time_dense_projection: bool = True
    report_mu: tuple[float, ...] = ()
    report_modes: int = 20
    h_list: tuple[float, ...] = (0.14, 0.07, 0.035)
    disc_radius: float = 0.5

    def __post_init__(self):
        # normalise sequences coming from JSON lists
        for name in ("box", "mu_range", "modes", "report_mu", "h_list"):
            value = getattr(self, name)
            conv = int if name == "modes" else float
            object.__setattr__(self, name, tuple(conv(v) for v in value))
        self.validate()

    # construction ---------------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        exp = data.get("experiment")
        if exp not in EXPERIMENTS:
            raise ValueError(f"experiment must be one of {EXPERIMENTS}, got {exp!r}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown configuration keys: {unknown}")
        merged = {**_PRESETS[exp], **data}
        return cls(**merged)

    @classmethod
    def preset(cls, experiment: str, **overrides) -> "RunConfig":
        return cls.from_dict({"experiment": experiment, **overrides})

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()}

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def override(self, seed: int | None = None, modes=None, out: str | None = None) -> "RunConfig":
        changes: dict = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if modes is not None:
            changes["modes"] = tuple(int(m) for m in modes)
        if out is not None:
            changes["out"] = str(out)
        return dataclasses.replace(self, **changes)

    # validation -----------------------------------------------------------
    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if len(self.box) != 4 or not (self.box[1] > self.box[0] and self.box[3] > self.box[2]):
            raise ValueError(f"invalid box {self.box}")
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.quad_order not in (1, 2, 3):
            raise ValueError("quad_order must be 1, 2 or 3")
        if self.solver not in ("direct", "cg"):
            raise ValueError("solver must be 'direct' or 'cg'")
        if self.projection not in ("split", "dense"):
            raise ValueError("projection must be 'split' or 'dense'")
        if self.timing_repeats < 1:
            raise ValueError("timing_repeats must be at least 1")
        if self.experiment == "disc_convergence":
            if len(self.h_list) < 3:
                raise ValueError("a convergence run needs at least three mesh sizes")
            if not self.disc_radius > 0:
                raise ValueError("disc_radius must be positive")
            return
        lo, hi = self.mu_range
        if not lo < hi:
            raise ValueError(f"parameter range {self.mu_range} is empty")
        shape = self.shape()
        for mu in (lo, hi, *self.report_mu):
            shape.check(mu)
        if self.n_snapshots < 1 or self.n_test < 1:
            raise ValueError("n_snapshots and n_test must be positive")
        if not self.modes or min(self.modes) < 1:
            raise ValueError("mode counts must be positive integers")
        if self.n_snapshots < max(self.modes):
            raise ValueError(
                f"n_snapshots={self.n_snapshots} is smaller than the largest mode count {max(self.modes)}"
            )
        if self.report_modes < 1:
            raise ValueError("report_modes must be positive")

    # derived objects ------------------------------------------------------
    def shape(self):
        if self.experiment == "rect_ycenter":
            return YCenterRectangle()
        if self.experiment == "rect_aspect":
            return AspectRectangle()
        return FixedDisc(radius=self.disc_radius)

    def problem(self) -> ProblemData:
        return ProblemData(source=1.0, dirichlet=0.0, alpha=self.alpha, outer=0.0)

    def mesh(self) -> BackgroundMesh:
        return build_structured_mesh(Box.from_sequence(self.box), self.h)

    @property
    def out_dir(self) -> Path:
        return Path(self.out)


def sample_parameters(config: RunConfig) -> tuple[np.ndarray, np.ndarray]:
    """Seeded uniform training and test parameters from independent streams.

    Test values that coincide with a training value are redrawn.
    """
    train_seq, test_seq = np.random.SeedSequence(config.seed).spawn(2)
    lo, hi = config.mu_range
    train = np.random.default_rng(train_seq).uniform(lo, hi, config.n_snapshots)
    rng = np.random.default_rng(test_seq)
    test = rng.uniform(lo, hi, config.n_test)
    seen = set(train.tolist())
    for i in range(test.size):
        while test[i] in seen:
            test[i] = rng.uniform(lo, hi)
        seen.add(float(test[i]))
    return train, test


def _best_of(fn: Callable[[], object], repeats: int):
    best = math.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return out, best


@dataclass(eq=False)
class Artifacts:
    """Offline products: training parameters, snapshots (when kept) and the basis."""

    config: RunConfig
    mesh: BackgroundMesh
    train_mu: np.ndarray
    basis: PodBasis
    snapshots: np.ndarray | None = None
    fom_times: np.ndarray | None = None


def _fom(mesh, shape, mu, problem, config: RunConfig):
    smap = classify(mesh, shape, mu, order=config.quad_order)
    return solve(assemble(mesh, smap, problem), method=config.solver)


def offline(config: RunConfig, write: bool = True) -> Artifacts:
    """Snapshot sweep over the seeded training set followed by POD."""
    if config.experiment == "disc_convergence":
        raise ValueError("the disc_convergence experiment has no offline stage")
    mesh = config.mesh()
    shape = config.shape()
    problem = config.problem()
    train, _ = sample_parameters(config)
    S = np.empty((mesh.n_nodes, train.size))
    times = np.empty(train.size)
    for j, mu in enumerate(train):
        t0 = time.perf_counter()
        try:
            sol = _fom(mesh, shape, mu, problem, config)
        except Exception as exc:
            raise RuntimeError(f"offline full-order solve failed at mu={mu!r}: {exc}") from exc
        times[j] = time.perf_counter() - t0
        S[:, j] = sol.T
        log.debug("snapshot %d/%d mu=%.6f time=%.4fs", j + 1, train.size, mu, times[j])
    log.info("offline: %d snapshots, mean solve %.4fs", train.size, times.mean())
    basis = pod(SnapshotSet(S, train, mesh.mass_matrix))
    log.info("offline: numerical rank %d", basis.n_modes)
    art = Artifacts(config, mesh, train, basis, snapshots=S, fom_times=times)
    if write:
        out = config.out_dir
        out.mkdir(parents=True, exist_ok=True)
        io.write_matrix(out / "snapshots.bin", S, train)
        io.write_matrix(out / "basis.bin", basis.L, train)
        io.write_eigenvalues(out / "eigenvalues.csv", basis.eigenvalues)
        io.write_table(out / "offline_times.csv", ["mu", "wall_time_s"], zip(train, times))
        config.to_json(out / "config.json")
    return art


def load_artifacts(config: RunConfig, snapshots: bool = False) -> Artifacts:
    """Read the offline products of ``config`` back from its output directory."""
    out = config.out_dir
    mesh = config.mesh()
    L, train = io.read_matrix(out / "basis.bin")
    if L.shape[0] != mesh.n_nodes:
        raise ValueError(f"basis in {out} has {L.shape[0]} rows, mesh has {mesh.n_nodes} nodes")
    lam = io.read_eigenvalues(out / "eigenvalues.csv")
    S = io.read_matrix(out / "snapshots.bin")[0] if snapshots else None
    return Artifacts(config, mesh, train, PodBasis(L=L, eigenvalues=lam, mass=mesh.mass_matrix), snapshots=S)


@dataclass(frozen=True)
class SampleRecord:
    mu: float
    modes: int
    projection_error: float
    rom_error: float
    online_time: float
    online_time_dense: float
    fom_time: float
    status: str = "ok"


@dataclass(frozen=True)
class ReportRow:
    """Means over the test set for one mode count."""

    modes: int
    projection_error: float
    rom_error: float
    online_time: float
    fom_time: float
    online_time_dense: float = math.nan
    status: str = "ok"

    @property
    def speedup(self) -> float:
        return self.fom_time / self.online_time

    @property
    def savings(self) -> float:
        """Saved fraction of the full-order time, in percent."""
        return 100.0 * (self.fom_time - self.online_time) / self.fom_time

    @property
    def speedup_dense(self) -> float:
        return self.fom_time / self.online_time_dense


@dataclass
class OnlineResult:
    rows: list[ReportRow]
    samples: list[SampleRecord]
    test_mu: np.ndarray
    fom_times: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def row(self, modes: int) -> ReportRow:
        for r in self.rows:
            if r.modes == modes:
                return r
        raise KeyError(modes)

    def to_json(self, path) -> None:
        payload = {
            "test_mu": [float(m) for m in self.test_mu],
            "fom_times": [float(t) for t in self.fom_times],
            "rows": [dataclasses.asdict(r) for r in self.rows],
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")

    @classmethod
    def from_json(cls, path) -> "OnlineResult":
        data = json.loads(Path(path).read_text())
        rows = [ReportRow(**r) for r in data["rows"]]
        return cls(rows=rows, samples=[], test_mu=np.array(data["test_mu"]),
                   fom_times=np.array(data.get("fom_times", [])))


_SAMPLE_HEADER = ["mu", "modes", "projection_error", "rom_error", "online_time_s",
                  "online_time_dense_s", "fom_time_s", "status"]


def online(config: RunConfig, artifacts: Artifacts | None = None, modes=None, test_mu=None,
           write: bool = True) -> OnlineResult:
    """Query the ROM at the test parameters and compare with full-order solves."""
    art = artifacts if artifacts is not None else load_artifacts(config)
    mesh, basis = art.mesh, art.basis
    shape = config.shape()
    problem = config.problem()
    M = mesh.mass_matrix
    modes = tuple(config.modes if modes is None else modes)
    if test_mu is None:
        _, test_mu = sample_parameters(config)
    test_mu = np.asarray(test_mu, dtype=float)
    overlap = np.intersect1d(test_mu, art.train_mu)
    if overlap.size:
        raise ValueError(f"test parameters overlap the training set: {overlap[:5]}")
    reps = config.timing_repeats

    def rom_query(mu, k, method):
        smap = classify(mesh, shape, mu, order=config.quad_order)
        reduced = project(assemble(mesh, smap, problem), basis, k, method=method)
        return solve_reduced(reduced)

    samples: list[SampleRecord] = []
    fom_times = np.empty(test_mu.size)
    for i, mu in enumerate(test_mu):
        sol, t_fom = _best_of(lambda: _fom(mesh, shape, mu, problem, config), reps)
        fom_times[i] = t_fom
        for k in modes:
            if k > basis.n_modes:
                msg = f"mode count {k} exceeds the basis rank {basis.n_modes}"
                samples.append(SampleRecord(float(mu), k, math.nan, math.nan, math.nan, math.nan, t_fom, msg))
                continue
            a, t_on = _best_of(lambda: rom_query(mu, k, config.projection), reps)
            t_dense = math.nan
            if config.time_dense_projection:
                t_dense = _best_of(lambda: rom_query(mu, k, "dense"), reps)[1]
            Tr = reconstruct(basis, a)
            samples.append(
                SampleRecord(
                    mu=float(mu),
                    modes=k,
                    projection_error=l2_projection_error(sol.T, basis, k),
                    rom_error=relative_l2_error(sol.T, Tr, M),
                    online_time=t_on,
                    online_time_dense=t_dense,
                    fom_time=t_fom,
                )
            )
        log.debug("online: test %d/%d mu=%.6f fom=%.4fs", i + 1, test_mu.size, mu, t_fom)

    rows = []
    for k in modes:
        recs = [s for s in samples if s.modes == k]
        ok = [s for s in recs if s.status == "ok"]
        if not ok:
            rows.append(ReportRow(k, math.nan, math.nan, math.nan, float(fom_times.mean()),
                                  math.nan, recs[0].status))
            continue
        rows.append(
            ReportRow(
                modes=k,
                projection_error=float(np.mean([s.projection_error for s in ok])),
                rom_error=float(np.mean([s.rom_error for s in ok])),
                online_time=float(np.mean([s.online_time for s in ok])),
                fom_time=float(fom_times.mean()),
                online_time_dense=float(np.mean([s.online_time_dense for s in ok])),
            )
        )
        r = rows[-1]
        log.info("modes=%3d proj=%.3e rom=%.3e speedup=%.2f", k, r.projection_error, r.rom_error, r.speedup)
    result = OnlineResult(rows=rows, samples=samples, test_mu=test_mu, fom_times=fom_times)
    if write:
        out = config.out_dir
        out.mkdir(parents=True, exist_ok=True)
        io.write_table(out / "samples.csv", _SAMPLE_HEADER, (dataclasses.astuple(s) for s in samples))
        result.to_json(out / "online.json")
    return result


def _mu_tag(mu: float) -> str:
    return f"{mu:+.3f}".replace("+", "p").replace("-", "m")


def report(config: RunConfig, artifacts: Artifacts | None = None,
           result: OnlineResult | None = None) -> list[Path]:
    """Write the error, eigenvalue-decay and timing tables and the VTK field triples."""
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    art = artifacts if artifacts is not None else load_artifacts(config)
    if result is None:
        result = OnlineResult.from_json(out / "online.json")
    written = []

    path = out / "errors.csv"
    io.write_table(path, ["modes", "projection_error", "rom_error", "status"],
                   ((r.modes, r.projection_error, r.rom_error, r.status) for r in result.rows))
    written.append(path)

    lam = art.basis.eigenvalues
    path = out / "eigdecay.csv"
    io.write_table(path, ["index", "ratio"], ((i + 1, float(v / lam[0])) for i, v in enumerate(lam)))
    written.append(path)

    path = out / "timing.csv"
    header = ["modes", "online_time_s", "fom_time_s", "savings_percent", "speedup",
              "online_time_dense_s", "speedup_dense", "status"]
    rows = []
    for r in result.rows:
        if r.status != "ok":
            rows.append((r.modes, math.nan, r.fom_time, math.nan, math.nan, math.nan, math.nan, r.status))
        else:
            rows.append((r.modes, r.online_time, r.fom_time, r.savings, r.speedup,
                         r.online_time_dense, r.speedup_dense, r.status))
    io.write_table(path, header, rows)
    written.append(path)

    mesh, basis = art.mesh, art.basis
    shape = config.shape()
    problem = config.problem()
    k = min(config.report_modes, basis.n_modes)
    for mu in config.report_mu:
        T = _fom(mesh, shape, mu, problem, config).T
        smap = classify(mesh, shape, mu, order=config.quad_order)
        a = solve_reduced(project(assemble(mesh, smap, problem), basis, k, method=config.projection))
        Tr = reconstruct(basis, a)
        err = np.abs(T - Tr)
        if err.max() > np.abs(T).max():
            raise RuntimeError(f"reduced solution at mu={mu} is off by more than the field itself")
        path = out / f"fields_mu{_mu_tag(mu)}.vtk"
        io.write_vtk(path, mesh, {"T": T, "T_rom": Tr, "abs_error": err},
                     title=f"{config.experiment} mu={mu!r} modes={k}")
        written.append(path)
    return written


def _paraboloid(p):
    return p[..., 0] ** 2 + p[..., 1] ** 2


def _paraboloid_grad(p):
    return 2.0 * p


def convergence(config: RunConfig, write: bool = True) -> list[ConvergenceRow]:
    """Manufactured-solution study ``T = x^2 + y^2`` around a disc hole."""
    if config.experiment != "disc_convergence":
        raise ValueError("convergence runs need experiment='disc_convergence'")
    rows = convergence_study(
        config.shape(),
        0.0,
        exact=_paraboloid,
        exact_grad=_paraboloid_grad,
        source=-4.0,
        h_list=config.h_list,
        box=Box.from_sequence(config.box),
        alpha=config.alpha,
        order=config.quad_order,
    )
    if write:
        out = config.out_dir
        out.mkdir(parents=True, exist_ok=True)
        io.write_table(out / "convergence.csv", ["h", "n_dofs", "error", "rate"],
                       ((r.h, r.n_dofs, r.error, r.rate) for r in rows))
    return rows
