"""Monte-Carlo singular-value moments of standard Gaussian matrices.

``S_j = E[d_j^2(Z)]`` for a q x m matrix Z of i.i.d. N(0, 1) entries drives the
self-tuning updates and the BSW threshold; ``(E ||G||_(2,k))^2`` with
``||G||_(2,k)^2 = sum_{i<=k} d_i^2(G)`` drives the KF penalty. Both tables are
deterministic given ``(q, m, mc_draws, seed)`` and cached on disk as CSV.
"""

from __future__ import annotations

import csv
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng

CACHE_ENV = "RRR_MOMENTS_CACHE"
DEFAULT_MC_DRAWS = 500
DEFAULT_SEED = 20190101
_BATCH = 64

MOMENTS_HEADER = ("q", "m", "j", "S_j", "mc_draws", "seed")
KF_HEADER = ("q", "m", "k", "g_norm_sq", "mc_draws", "seed")


@dataclass(frozen=True)
class SingularMoments:
    q: int
    m: int
    S: np.ndarray  # S[j-1] = E d_j^2(Z), j = 1..N
    mc_draws: int
    seed: int

    @property
    def N(self) -> int:
        return len(self.S)

    def s(self, j: int) -> float:
        """1-based ``S_j``, zero for ``j > N``."""
        return float(self.S[j - 1]) if 1 <= j <= self.N else 0.0

    def tail(self, start: int) -> float:
        """``sum_{j >= start} S_j`` (1-based)."""
        return float(np.sum(self.S[max(start, 1) - 1 :]))

    @property
    def S1(self) -> float:
        return float(self.S[0])


def _singular_draws(q: int, m: int, mc_draws: int, gen: np.random.Generator) -> np.ndarray:
    out = np.empty((mc_draws, min(q, m)))
    for start in range(0, mc_draws, _BATCH):
        b = min(_BATCH, mc_draws - start)
        Z = gen.standard_normal((b, q, m))
        out[start : start + b] = np.linalg.svd(Z, compute_uv=False)
    return out


def estimate_moments(q: int, m: int, mc_draws: int = DEFAULT_MC_DRAWS, seed: int = DEFAULT_SEED) -> SingularMoments:
    if mc_draws < 1:
        raise ValueError("mc_draws must be at least 1")
    if q < 1 or m < 1:
        return SingularMoments(q, m, np.zeros(0), mc_draws, seed)
    d = _singular_draws(q, m, mc_draws, rng.stream(seed, rng.MOMENTS, q, m))
    return SingularMoments(q, m, np.mean(d**2, axis=0), mc_draws, seed)


def estimate_kf_norms(q: int, m: int, mc_draws: int = DEFAULT_MC_DRAWS, seed: int = DEFAULT_SEED) -> np.ndarray:
    """``(E ||G||_(2,k))^2`` for ``k = 1..q∧m``; the mean is taken before squaring."""
    d = _singular_draws(q, m, mc_draws, rng.stream(seed, rng.KF, q, m))
    norms = np.sqrt(np.cumsum(d**2, axis=1))
    return np.maximum.accumulate(np.mean(norms, axis=0) ** 2)


# ---------------------------------------------------------------------------
# CSV cache
# ---------------------------------------------------------------------------


def default_cache_path() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "rankselect" / "moments.csv"


def _kf_path(path: Path) -> Path:
    return path.with_name(path.stem + "-kf" + path.suffix)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _read_table(path: Path, q: int, m: int, mc_draws: int, seed: int) -> np.ndarray | None:
    if not path.exists():
        return None
    vals = {}
    with path.open(newline="") as fh:
        for row in csv.DictReader(fh):
            if (int(row["q"]), int(row["m"]), int(row["mc_draws"]), int(row["seed"])) == (q, m, mc_draws, seed):
                key = next(k for k in row if k in ("j", "k"))
                val = next(k for k in row if k in ("S_j", "g_norm_sq"))
                vals[int(row[key])] = float(row[val])
    if not vals:
        return None
    return np.array([vals[j] for j in sorted(vals)])


def _append_table(path: Path, header: tuple, q: int, m: int, values: np.ndarray, mc_draws: int, seed: int) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    existing = path.read_text() if path.exists() else ",".join(header) + "\n"
    rows = [",".join([str(q), str(m), str(j), _fmt(v), str(mc_draws), str(seed)]) for j, v in enumerate(values, 1)]
    # write-then-rename so concurrent readers never see a partial file
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(existing + "\n".join(rows) + "\n")
    os.replace(tmp, path)


def write_moments_csv(moments: SingularMoments, path: Path) -> None:
    _append_table(Path(path), MOMENTS_HEADER, moments.q, moments.m, moments.S, moments.mc_draws, moments.seed)


def read_moments_csv(path: Path, q: int, m: int, mc_draws: int, seed: int) -> SingularMoments | None:
    S = _read_table(Path(path), q, m, mc_draws, seed)
    return None if S is None else SingularMoments(q, m, S, mc_draws, seed)


_memo: dict[tuple, object] = {}


def get_moments(
    q: int, m: int, mc_draws: int = DEFAULT_MC_DRAWS, seed: int = DEFAULT_SEED, cache: Path | None | bool = True
) -> SingularMoments:
    """Cached :func:`estimate_moments`. ``cache=False`` skips the disk cache."""
    key = ("S", q, m, mc_draws, seed)
    if key in _memo:
        return _memo[key]
    path = default_cache_path() if cache is True else (Path(cache) if cache else None)
    mom = read_moments_csv(path, q, m, mc_draws, seed) if path else None
    if mom is None:
        mom = estimate_moments(q, m, mc_draws, seed)
        if path:
            write_moments_csv(mom, path)
    _memo[key] = mom
    return mom


def get_kf_norms(
    q: int, m: int, mc_draws: int = DEFAULT_MC_DRAWS, seed: int = DEFAULT_SEED, cache: Path | None | bool = True
) -> np.ndarray:
    key = ("KF", q, m, mc_draws, seed)
    if key in _memo:
        return _memo[key]
    path = _kf_path(default_cache_path() if cache is True else Path(cache)) if cache else None
    g = _read_table(path, q, m, mc_draws, seed) if path else None
    if g is None:
        g = estimate_kf_norms(q, m, mc_draws, seed)
        if path:
            _append_table(path, KF_HEADER, q, m, g, mc_draws, seed)
    _memo[key] = g
    return g


def clear_memo() -> None:
    _memo.clear()
