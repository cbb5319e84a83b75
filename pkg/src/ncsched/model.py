"""Problem instances, periodic schedules and their JSON file formats.

Instance document::

    {
      "channels": 1,
      "plants": [
        {"id": 0,
         "A": [[...], [...]], "B": [[...]], "C": [[...]],
         "Q": [[...]], "Qf": [[...]], "R": [[...]],
         "W": [[...]], "V": [[...]],
         "x0_mean": [...], "x0_cov": [[...]]},
        ...
      ]
    }

Matrices are nested lists in row-major order.  ``Qf`` may be omitted, in
which case it defaults to ``Q``.

Schedule document::

    {"period": 5, "alloc": [[1, 0, 1, 1, 1], [1, 1, 0, 0, 1], [0, 1, 1, 1, 0]]}

Plants are indexed from 0 everywhere in the library.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

SYM_TOL = 1e-9
PSD_TOL = 1e-9

_MATRIX_FIELDS = ("A", "B", "C", "Q", "Qf", "R", "W", "V", "x0_cov")


class ModelError(ValueError):
    """Base class for invalid instances and schedules."""


class DimensionMismatch(ModelError):
    pass


class NotPSD(ModelError):
    def __init__(self, name: str, detail: str):
        self.matrix = name
        super().__init__(f"{name}: {detail}")


class BadChannelCount(ModelError):
    pass


class SlotBudgetViolation(ModelError):
    def __init__(self, slot: int, total: int, budget: int):
        self.slot = slot
        super().__init__(f"slot {slot}: {total} loops scheduled, expected exactly {budget}")


class RowLengthMismatch(ModelError):
    pass


def _frozen(x: Any, ndim: int) -> np.ndarray:
    arr = np.array(x, dtype=float)
    if arr.ndim != ndim:
        raise DimensionMismatch(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _symmetrize(x: np.ndarray) -> np.ndarray:
    return (x + x.T) / 2


def _check_sym(name: str, x: np.ndarray, definite: bool) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(x)))) if x.size else 1.0
    if np.max(np.abs(x - x.T), initial=0.0) > SYM_TOL * scale:
        raise NotPSD(name, "not symmetric")
    xs = _symmetrize(x)
    lam = np.linalg.eigvalsh(xs)
    if definite and not lam.min() > 0:
        raise NotPSD(name, f"not positive definite (min eigenvalue {lam.min():.3g})")
    if not definite and lam.min() < -PSD_TOL * scale:
        raise NotPSD(name, f"not positive semi-definite (min eigenvalue {lam.min():.3g})")
    return xs


@dataclass(frozen=True, eq=False)
class PlantSpec:
    """One LTI feedback loop with its quadratic weights and noise model."""

    id: int
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    Qf: np.ndarray
    R: np.ndarray
    W: np.ndarray
    V: np.ndarray
    x0_mean: np.ndarray
    x0_cov: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @classmethod
    def build(cls, id: int = 0, *, A, B, C, Q, R, W, V, Qf=None, x0_mean=None, x0_cov=None) -> "PlantSpec":
        """Construct and validate a plant from array-likes.

        ``Qf`` defaults to ``Q``, ``x0_mean`` to zero and ``x0_cov`` to ``W``.
        """
        A = np.atleast_2d(np.asarray(A, dtype=float))
        n = A.shape[0]
        raw = {
            "id": id, "A": A, "B": B, "C": C, "Q": Q, "R": R, "W": W, "V": V,
            "Qf": Q if Qf is None else Qf,
            "x0_mean": np.zeros(n) if x0_mean is None else x0_mean,
            "x0_cov": W if x0_cov is None else x0_cov,
        }
        raw = {k: (np.atleast_2d(np.asarray(v, dtype=float)) if k in _MATRIX_FIELDS else v)
               for k, v in raw.items()}
        raw["x0_mean"] = np.atleast_1d(np.asarray(raw["x0_mean"], dtype=float))
        return _validate_plant(raw, id)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PlantSpec):
            return NotImplemented
        return self.id == other.id and all(
            np.array_equal(getattr(self, f), getattr(other, f)) for f in _MATRIX_FIELDS + ("x0_mean",)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class Instance:
    plants: tuple[PlantSpec, ...]
    channels: int

    @property
    def N(self) -> int:
        return len(self.plants)

    @property
    def M(self) -> int:
        return self.channels


@dataclass(frozen=True)
class Schedule:
    """A T0-periodic allocation table; ``alloc[i][m]`` is sigma for plant i in slot m."""

    period: int
    alloc: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if not isinstance(self.period, (int, np.integer)) or self.period < 1:
            raise ModelError(f"period must be a positive integer, got {self.period!r}")
        rows = tuple(tuple(int(v) for v in row) for row in self.alloc)
        for row in rows:
            if any(v not in (0, 1) for v in row):
                raise ModelError(f"allocation entries must be 0 or 1, got row {row}")
        object.__setattr__(self, "alloc", rows)
        object.__setattr__(self, "period", int(self.period))

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]]) -> "Schedule":
        rows = [list(r) for r in rows]
        return cls(period=len(rows[0]) if rows else 1, alloc=tuple(tuple(r) for r in rows))

    @classmethod
    def from_actions(cls, actions: Sequence[Sequence[int]], n_plants: int) -> "Schedule":
        """Build from per-slot member sets, e.g. ``[(0,), (2,), (1,)]``."""
        rows = [[0] * len(actions) for _ in range(n_plants)]
        for m, members in enumerate(actions):
            for i in members:
                rows[i][m] = 1
        return cls(period=len(actions), alloc=tuple(tuple(r) for r in rows))

    @property
    def n_plants(self) -> int:
        return len(self.alloc)

    def sigma(self, i: int, t: int) -> int:
        return self.alloc[i][t % self.period]

    def shift(self, k: int) -> "Schedule":
        """Cyclic shift so that new slot m holds old slot (m + k) mod T0."""
        k %= self.period
        return Schedule(self.period, tuple(row[k:] + row[:k] for row in self.alloc))

    def repeat(self, times: int) -> "Schedule":
        return Schedule(self.period * times, tuple(row * times for row in self.alloc))


@dataclass(frozen=True)
class ScheduleCoverage:
    covered: tuple[bool, ...]


def _validate_plant(raw: dict, idx: int) -> PlantSpec:
    try:
        mats = {k: _frozen(raw[k], 2) for k in _MATRIX_FIELDS if k != "Qf"}
        mats["Qf"] = _frozen(raw.get("Qf", raw["Q"]), 2)
        x0_mean = _frozen(raw["x0_mean"], 1)
    except KeyError as exc:
        raise ModelError(f"plant {idx}: missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ModelError):
            raise DimensionMismatch(f"plant {idx}: {exc}") from None
        raise DimensionMismatch(f"plant {idx}: ragged or non-numeric matrix ({exc})") from None

    A, B, C = mats["A"], mats["B"], mats["C"]
    n = A.shape[0]
    m = B.shape[1]
    p = C.shape[0]
    expected = {
        "A": (n, n), "B": (n, m), "C": (p, n), "Q": (n, n), "Qf": (n, n),
        "R": (m, m), "W": (n, n), "V": (p, p), "x0_cov": (n, n),
    }
    for k, shape in expected.items():
        if mats[k].shape != shape:
            raise DimensionMismatch(f"plant {idx}: {k} has shape {mats[k].shape}, expected {shape} (n={n}, m={m}, p={p})")
    if x0_mean.shape != (n,):
        raise DimensionMismatch(f"plant {idx}: x0_mean has length {x0_mean.shape[0]}, expected {n}")
    for arr in list(mats.values()) + [x0_mean]:
        if not np.all(np.isfinite(arr)):
            raise ModelError(f"plant {idx}: non-finite entries")

    for k in ("Q", "Qf", "W", "x0_cov"):
        mats[k] = _frozen(_check_sym(k, mats[k], definite=False), 2)
    for k in ("R", "V"):
        mats[k] = _frozen(_check_sym(k, mats[k], definite=True), 2)
    return PlantSpec(id=int(raw.get("id", idx)), x0_mean=x0_mean, **mats)


def validate_instance(raw: dict) -> Instance:
    """Validate a parsed instance document and return an immutable ``Instance``."""
    if not isinstance(raw, dict) or "plants" not in raw or "channels" not in raw:
        raise ModelError("instance document needs 'plants' and 'channels'")
    plants = [_validate_plant(p, k) for k, p in enumerate(raw["plants"])]
    ids = sorted(p.id for p in plants)
    if ids != list(range(len(plants))):
        raise ModelError(f"plant ids must be 0..{len(plants) - 1} without duplicates, got {ids}")
    plants.sort(key=lambda p: p.id)
    M = raw["channels"]
    if isinstance(M, bool) or not isinstance(M, (int, np.integer)):
        raise BadChannelCount(f"channels must be an integer, got {M!r}")
    if not 1 <= M < len(plants):
        raise BadChannelCount(f"need 1 <= M < N, got M={M}, N={len(plants)}")
    return Instance(plants=tuple(plants), channels=int(M))


def validate_schedule(instance: Instance, sched: Schedule) -> ScheduleCoverage:
    if len(sched.alloc) != instance.N:
        raise RowLengthMismatch(f"schedule has {len(sched.alloc)} rows, instance has {instance.N} plants")
    for i, row in enumerate(sched.alloc):
        if len(row) != sched.period:
            raise RowLengthMismatch(f"row {i} has length {len(row)}, period is {sched.period}")
    for m in range(sched.period):
        total = sum(row[m] for row in sched.alloc)
        if total != instance.M:
            raise SlotBudgetViolation(m, total, instance.M)
    return ScheduleCoverage(covered=tuple(any(row) for row in sched.alloc))


def instance_to_dict(inst: Instance) -> dict:
    plants = []
    for p in inst.plants:
        d: dict[str, Any] = {"id": p.id}
        for k in _MATRIX_FIELDS:
            d[k] = getattr(p, k).tolist()
        d["x0_mean"] = p.x0_mean.tolist()
        plants.append(d)
    return {"channels": inst.channels, "plants": plants}


def schedule_to_dict(sched: Schedule) -> dict:
    return {"period": sched.period, "alloc": [list(r) for r in sched.alloc]}


def schedule_from_dict(raw: dict) -> Schedule:
    try:
        return Schedule(period=raw["period"], alloc=tuple(tuple(r) for r in raw["alloc"]))
    except (KeyError, TypeError) as exc:
        raise ModelError(f"schedule document needs 'period' and 'alloc' ({exc})") from None


def dumps(doc: dict) -> str:
    # json emits repr(float), which round-trips float64 exactly
    return json.dumps(doc, indent=1) + "\n"


def _tag(exc: Exception, path) -> Exception:
    exc.path = str(path)  # type: ignore[attr-defined]
    return exc


def load_instance(path: str | Path) -> Instance:
    with open(path, encoding="utf-8") as fh:
        try:
            return validate_instance(json.load(fh))
        except (ModelError, json.JSONDecodeError) as exc:
            raise _tag(exc, path)


def save_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(dumps(instance_to_dict(inst)), encoding="utf-8")


def load_schedule(path: str | Path) -> Schedule:
    with open(path, encoding="utf-8") as fh:
        try:
            return schedule_from_dict(json.load(fh))
        except (ModelError, json.JSONDecodeError) as exc:
            raise _tag(exc, path)


def save_schedule(sched: Schedule, path: str | Path) -> None:
    Path(path).write_text(dumps(schedule_to_dict(sched)), encoding="utf-8")


GEN_EPS = 1e-6


def _project(x: np.ndarray, eps: float = GEN_EPS) -> np.ndarray:
    """Symmetrize, clip negative eigenvalues, and add eps*I if the result is nearly singular."""
    lam, U = np.linalg.eigh(_symmetrize(x))
    if lam.min() >= eps:
        return _symmetrize(x)
    y = (U * np.clip(lam, 0.0, None)) @ U.T + eps * np.eye(x.shape[0])
    return _symmetrize(y)


def random_instance(N: int, M: int, n: int = 2, m: int = 1, p: int = 1, seed: int = 0) -> Instance:
    """Instance with every matrix entry drawn i.i.d. from Uni(0, 1).

    Q, R, W, V and the initial covariance are projected onto the positive
    (semi-)definite cone; Qf is set equal to Q.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    plants = []
    for i in range(N):
        A = rng.uniform(size=(n, n))
        B = rng.uniform(size=(n, m))
        C = rng.uniform(size=(p, n))
        Q = _project(rng.uniform(size=(n, n)))
        R = _project(rng.uniform(size=(m, m)))
        W = _project(rng.uniform(size=(n, n)))
        V = _project(rng.uniform(size=(p, p)))
        x0_mean = rng.uniform(size=n)
        X0 = _project(rng.uniform(size=(n, n)))
        plants.append({"id": i, "A": A, "B": B, "C": C, "Q": Q, "Qf": Q, "R": R,
                       "W": W, "V": V, "x0_mean": x0_mean, "x0_cov": X0})
    return validate_instance({"channels": M, "plants": plants})
