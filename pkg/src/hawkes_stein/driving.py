"""Two-parameter Poisson random measure on R x R+ with unit intensity.

The measure is never materialized globally: the plane is tiled into cells
``[i*dt, (i+1)*dt) x [j*dtheta, (j+1)*dtheta)`` and the atoms of a cell are a
pure function of ``(seed, i, j)`` via a counter-based stream.  Two queries of
the same cell, in any order, from any thread, return identical atoms, which
is what makes shifted-path couplings and parallel replications exact.

Time-cell indices may be negative (stationary burn-in windows live on
negative time).  Mark strips below a caller-declared ceiling are the only
ones ever generated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

from .bitstream import Stream, mix_key


@dataclass(frozen=True, order=True)
class Atom:
    """One point (t, theta) of a configuration."""

    t: float
    theta: float

    def __post_init__(self):
        if not self.theta >= 0.0:
            raise ValueError(f"atom mark must be >= 0, got {self.theta}")


@dataclass(frozen=True)
class CellIndex:
    """Grid address of the rectangle [i*dt, (i+1)*dt) x [j*dth, (j+1)*dth)."""

    i: int
    j: int

    def __post_init__(self):
        if self.j < 0:
            raise ValueError("mark-strip index must be >= 0")


@lru_cache(maxsize=1 << 15)
def _cell_atoms(seed: int, cell_dt: float, cell_dtheta: float,
                i: int, j: int) -> tuple[Atom, ...]:
    """Atoms of one cell, sorted by (t, theta).

    Draw order is pinned (count, then per atom one time-uniform and one
    mark-uniform); the compiled engine replays the identical sequence.
    """
    rng = Stream(mix_key(seed, i, j))
    n = rng.poisson(cell_dt * cell_dtheta)
    t_lo, t_hi = i * cell_dt, (i + 1.0) * cell_dt
    th_lo, th_hi = j * cell_dtheta, (j + 1.0) * cell_dtheta
    atoms = []
    for _ in range(n):
        t = (i + rng.uniform()) * cell_dt
        th = (j + rng.uniform()) * cell_dtheta
        # rounding can push a sample onto the upper cell edge; pull it back
        if t >= t_hi:
            t = math.nextafter(t_hi, t_lo)
        if th >= th_hi:
            th = math.nextafter(th_hi, th_lo)
        atoms.append(Atom(t, th))
    atoms.sort()
    return tuple(atoms)


@dataclass(frozen=True)
class DrivingMeasure:
    """Seeded lazy Poisson random measure with unit (Lebesgue) intensity."""

    seed: int
    cell_dt: float = 1.0
    cell_dtheta: float = 1.0

    def __post_init__(self):
        if not (self.cell_dt > 0.0 and self.cell_dtheta > 0.0):
            raise ValueError("cell sizes must be positive")

    def cell_atoms(self, i: int, j: int) -> tuple[Atom, ...]:
        return _cell_atoms(self.seed, self.cell_dt, self.cell_dtheta, i, j)

    def empty_config(self) -> "Configuration":
        return Configuration(self)


@dataclass(frozen=True)
class Configuration:
    """A realization of the measure plus finitely many explicitly added atoms."""

    measure: DrivingMeasure
    added: tuple[Atom, ...] = ()

    def shift(self, atom: Atom) -> "Configuration":
        """Add one atom (the shift operator); adding twice equals adding once."""
        if atom in self.added:
            return self
        return Configuration(self.measure, tuple(sorted(self.added + (atom,))))

    def atoms_in(self, t_lo: float, t_hi: float, theta_hi: float) -> list[Atom]:
        """All atoms in [t_lo, t_hi) x [0, theta_hi], in (t, theta) order."""
        if not t_lo < t_hi:
            if t_lo == t_hi:
                return []
            raise ValueError("need t_lo < t_hi")
        if theta_hi < 0.0:
            raise ValueError("need theta_hi >= 0")
        m = self.measure
        i_lo = math.floor(t_lo / m.cell_dt)
        i_hi = math.ceil(t_hi / m.cell_dt)
        j_hi = math.floor(theta_hi / m.cell_dtheta)
        out: list[Atom] = []
        for i in range(i_lo, i_hi):
            for j in range(j_hi + 1):
                for a in m.cell_atoms(i, j):
                    if t_lo <= a.t < t_hi and a.theta <= theta_hi:
                        out.append(a)
        extra = [a for a in self.added
                 if t_lo <= a.t < t_hi and a.theta <= theta_hi]
        if extra:
            # shift is idempotent: an added atom equal to a lazy one counts once
            seen = set(out)
            out.extend(a for a in extra if a not in seen)
        out.sort()
        return out


@dataclass(frozen=True)
class BoxStep:
    """Deterministic step process: a finite sum of indicator boxes.

    ``boxes`` holds (t0, t1, th0, th1, coefficient) rectangles.  The process
    vanishes above ``mark_ceiling`` by construction, so its divergence over a
    finite horizon is proper.
    """

    boxes: tuple[tuple[float, float, float, float, float], ...]

    def __post_init__(self):
        for t0, t1, th0, th1, _ in self.boxes:
            if not (t0 <= t1 and 0.0 <= th0 <= th1):
                raise ValueError("malformed box")

    @property
    def mark_ceiling(self) -> float:
        return max((b[3] for b in self.boxes), default=0.0)

    def __call__(self, t: float, theta: float) -> float:
        v = 0.0
        for t0, t1, th0, th1, c in self.boxes:
            if t0 <= t < t1 and th0 <= theta <= th1:
                v += c
        return v

    def integral(self, t_hi: float, t_lo: float = 0.0) -> float:
        """Exact integral of the process over [t_lo, t_hi] x R+."""
        s = 0.0
        for t0, t1, th0, th1, c in self.boxes:
            w = max(0.0, min(t1, t_hi) - max(t0, t_lo))
            s += c * w * (th1 - th0)
        return s

    def restrict_time(self, t_min: float) -> "BoxStep":
        """The process multiplied by 1_{t >= t_min}."""
        kept = []
        for t0, t1, th0, th1, c in self.boxes:
            if t1 > t_min:
                kept.append((max(t0, t_min), t1, th0, th1, c))
        return BoxStep(tuple(kept))


def box_inner_l2(u: BoxStep, v: BoxStep, t_min: float = -math.inf) -> float:
    """Exact integral of u*v over [t_min, inf) x R+ (theta-overlap is closed/closed,
    consistent with the zero-measure boundary)."""
    s = 0.0
    for a0, a1, am0, am1, ca in u.boxes:
        for b0, b1, bm0, bm1, cb in v.boxes:
            w = max(0.0, min(a1, b1) - max(a0, b0, t_min))
            h = max(0.0, min(am1, bm1) - max(am0, bm0))
            s += ca * cb * w * h
    return s


def divergence(config: Configuration, u, T: float) -> float:
    """Pathwise divergence of a step process over [0, T] x R+.

    Returns ``sum over atoms of u(t, theta) - integral of u dt dtheta``.  The
    process must declare a finite ``mark_ceiling`` above which it vanishes;
    otherwise the Lebesgue part would be improper.
    """
    ceiling = getattr(u, "mark_ceiling", None)
    if ceiling is None or not math.isfinite(ceiling):
        raise ValueError("step process must declare a finite mark ceiling")
    total = 0.0
    for a in config.atoms_in(0.0, T, ceiling):
        total += u(a.t, a.theta)
    return total - u.integral(T)
