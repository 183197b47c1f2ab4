"""Discrete space-time fields on the periodic unit circle x [t0, t1].

Fields carry a valid time window that shrinks under mollification, so
boundary-polluted data can never be consumed silently.  x-derivatives are
spectral, t-derivatives are 4th-order finite differences.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

MASS_TOL = 1e-12
MEAN_TOL = 1e-8
TAIL_TOL = 1e-8


class InsufficientPadError(ValueError):
    """Mollification would consume more time margin than the field has."""


class NonZeroMeanError(ValueError):
    """x-antiderivative requested for a field with nonzero x-mean."""


class UnderResolvedWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform grid: nx periodic points in x, padded uniform t-axis.

    The declared window is [t0, t1]; pad_t extra margin is kept on both
    sides so mollified fields remain valid on the declared window.
    """

    nx: int
    nt: int
    t0: float
    t1: float
    pad_t: float = 0.0

    def __post_init__(self):
        if self.nx < 4 or self.nx & (self.nx - 1):
            raise ValueError("nx must be a power of two, at least 4")
        if self.nt < 2:
            raise ValueError("nt must be at least 2")

    @property
    def dx(self):
        return 1.0 / self.nx

    @property
    def x(self):
        return np.arange(self.nx) / self.nx

    @property
    def dt(self):
        return (self.t1 - self.t0) / (self.nt - 1)

    @property
    def n_pad(self):
        return int(np.ceil(self.pad_t / self.dt - 1e-12)) if self.pad_t > 0 else 0

    @property
    def nt_total(self):
        return self.nt + 2 * self.n_pad

    @property
    def t(self):
        return self.t0 + (np.arange(self.nt_total) - self.n_pad) * self.dt

    @property
    def core(self):
        """Index range (inclusive) of the declared [t0, t1] window."""
        return self.n_pad, self.n_pad + self.nt - 1

    def meta(self):
        return {"nx": self.nx, "nt": self.nt, "t0": self.t0, "t1": self.t1,
                "pad_t": self.pad_t}


@dataclass
class Field:
    """Grid values with a valid time-index window [lo, hi] (inclusive).

    values has shape (nt_total, nx) for scalars or (nt_total, nx, 2) for
    2-vector fields.
    """

    grid: SpaceTimeGrid
    values: np.ndarray
    lo: int = 0
    hi: int = -1

    def __post_init__(self):
        if self.hi < 0:
            self.hi = self.grid.nt_total - 1
        if self.values.shape[0] != self.grid.nt_total or self.values.shape[1] != self.grid.nx:
            raise ValueError("field shape does not match grid")

    @property
    def ncomp(self):
        return 1 if self.values.ndim == 2 else self.values.shape[-1]

    def window_times(self):
        return self.grid.t[self.lo], self.grid.t[self.hi]

    def valid_values(self):
        return self.values[self.lo:self.hi + 1]

    def restrict(self, lo, hi):
        if lo < self.lo or hi > self.hi:
            raise ValueError("cannot grow a valid window")
        return Field(self.grid, self.values, lo, hi)

    def max_norm(self):
        return float(np.max(np.abs(self.valid_values())))

    def copy(self):
        return Field(self.grid, self.values.copy(), self.lo, self.hi)


def const_field(grid, value):
    value = np.asarray(value, dtype=float)
    if value.ndim == 0:
        vals = np.full((grid.nt_total, grid.nx), float(value))
    else:
        vals = np.broadcast_to(value, (grid.nt_total, grid.nx, value.shape[0])).copy()
    return Field(grid, vals)


def sample_field(grid, fn):
    """Evaluate fn(t, x_array) on every slice; fn returns (nx,) or (nx, 2)."""
    x = grid.x
    first = np.asarray(fn(grid.t[0], x), dtype=float)
    out = np.empty((grid.nt_total,) + first.shape)
    out[0] = first
    for it in range(1, grid.nt_total):
        out[it] = fn(grid.t[it], x)
    return Field(grid, out)


# ---------------------------------------------------------------------------
# Mollification

def bump(s):
    """The standard smooth bump exp(-1/(1-s^2)) on |s|<1, zero outside."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    si = s[inside]
    out[inside] = np.exp(-1.0 / (1.0 - si * si))
    return out


@dataclass(frozen=True)
class Mollifier:
    """Tensor-product bump kernel on a space-time cube of side delta.

    Discrete weights are renormalized to unit mass exactly, so constants
    are fixed points of the convolution.
    """

    delta: float
    grid: SpaceTimeGrid

    def _weights(self, spacing):
        half = self.delta / 2.0
        k = int(np.floor(half / spacing - 1e-15))
        offs = np.arange(-k, k + 1) * spacing
        w = bump(offs / half) if half > 0 else np.array([1.0])
        if w.sum() == 0.0:
            w = np.zeros_like(w)
            w[len(w) // 2] = 1.0
        return w / w.sum(), k

    def weights_t(self):
        return self._weights(self.grid.dt)

    def weights_x(self):
        return self._weights(self.grid.dx)


def mollify(field, mollifier):
    """Discrete convolution: periodic in x, window-shrinking in t."""
    wt, kt = mollifier.weights_t()
    wx, kx = mollifier.weights_x()
    lo, hi = field.lo + kt, field.hi - kt
    if lo > hi:
        raise InsufficientPadError(
            f"window of {field.hi - field.lo + 1} slices cannot absorb delta="
            f"{mollifier.delta:.3e} ({2 * kt} slices)")
    vals = field.values
    flat = vals.reshape(vals.shape[0], vals.shape[1], -1)
    out = np.zeros((hi - lo + 1, flat.shape[1], flat.shape[2]))
    # t-convolution: gather shifted slices of the valid region
    for w, off in zip(wt, range(-kt, kt + 1)):
        out += w * flat[lo + off:hi + 1 + off]
    if kx > 0:
        spec = np.fft.rfft(out, axis=1)
        # periodic convolution with the (symmetric) x-kernel via its DFT
        kern = np.zeros(field.grid.nx)
        kern[0] = wx[kx]
        for j in range(1, kx + 1):
            kern[j] = wx[kx + j]
            kern[-j] = wx[kx - j]
        spec *= np.fft.rfft(kern)[None, :, None]
        out = np.fft.irfft(spec, n=field.grid.nx, axis=1)
    full = np.full_like(flat, np.nan)
    full[lo:hi + 1] = out
    result = full.reshape(vals.shape)
    return Field(field.grid, result, lo, hi)


# ---------------------------------------------------------------------------
# Derivatives

def _spectral_tail_fraction(vals):
    spec = np.fft.rfft(vals, axis=1)
    power = np.abs(spec) ** 2
    total = power.sum()
    if total == 0.0:
        return 0.0
    cut = (spec.shape[1] * 3) // 4
    return float(power[:, cut:].sum() / total)


def deriv_x(field, check_resolution=True):
    """Spectral x-derivative (exact on resolvable modes)."""
    vals = field.values
    flat = vals.reshape(vals.shape[0], vals.shape[1], -1)
    region = flat[field.lo:field.hi + 1]
    if check_resolution:
        for c in range(region.shape[2]):
            tail = _spectral_tail_fraction(region[..., c])
            if tail > TAIL_TOL:
                warnings.warn(
                    f"x-spectrum tail fraction {tail:.2e} beyond {TAIL_TOL:.0e}",
                    UnderResolvedWarning)
                break
    nx = field.grid.nx
    k = 2.0 * np.pi * np.fft.rfftfreq(nx, d=1.0 / nx)
    spec = np.fft.rfft(region, axis=1)
    spec *= 1j * k[None, :, None]
    dvals = np.fft.irfft(spec, n=nx, axis=1)
    full = np.full_like(flat, np.nan)
    full[field.lo:field.hi + 1] = dvals
    return Field(field.grid, full.reshape(vals.shape), field.lo, field.hi)


_CENTRAL5 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_FWD5 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_FWD5_OFF1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0


def deriv_t(field):
    """4th-order t-derivative: central inside, one-sided at window ends."""
    lo, hi = field.lo, field.hi
    n = hi - lo + 1
    if n < 5:
        raise ValueError("need at least 5 valid slices for the t-stencil")
    vals = field.values
    v = vals[lo:hi + 1]
    dt = field.grid.dt
    out = np.empty_like(v)
    out[2:-2] = (_CENTRAL5[0] * v[:-4] + _CENTRAL5[1] * v[1:-3]
                 + _CENTRAL5[3] * v[3:-1] + _CENTRAL5[4] * v[4:])
    out[0] = sum(c * v[i] for i, c in enumerate(_FWD5))
    out[1] = sum(c * v[i] for i, c in enumerate(_FWD5_OFF1))
    out[-1] = -sum(c * v[-1 - i] for i, c in enumerate(_FWD5))
    out[-2] = -sum(c * v[-1 - i] for i, c in enumerate(_FWD5_OFF1))
    out /= dt
    full = np.full_like(vals, np.nan)
    full[lo:hi + 1] = out
    return Field(field.grid, full, lo, hi)


def antideriv_x(field):
    """Spectral antiderivative in x with zero-mean output.

    Requires every time slice of the input to have x-mean below MEAN_TOL.
    """
    vals = field.values
    flat = vals.reshape(vals.shape[0], vals.shape[1], -1)
    region = flat[field.lo:field.hi + 1]
    means = np.abs(region.mean(axis=1))
    if means.size and means.max() > MEAN_TOL:
        raise NonZeroMeanError(f"slice x-mean up to {means.max():.3e}")
    nx = field.grid.nx
    k = 2.0 * np.pi * np.fft.rfftfreq(nx, d=1.0 / nx)
    k[0] = 1.0
    spec = np.fft.rfft(region, axis=1)
    spec /= 1j * k[None, :, None]
    spec[:, 0] = 0.0
    avals = np.fft.irfft(spec, n=nx, axis=1)
    full = np.full_like(flat, np.nan)
    full[field.lo:field.hi + 1] = avals
    return Field(field.grid, full.reshape(vals.shape), field.lo, field.hi)


# ---------------------------------------------------------------------------
# Dumps: one JSON header line + little-endian float64 payload,
# row-major (t, x, component).

def write_field(path, field, name="field"):
    header = {"name": name, "grid": field.grid.meta(),
              "lo": field.lo, "hi": field.hi,
              "shape": list(field.values.shape), "dtype": "<f8",
              "order": "t,x,component"}
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode())
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def read_field(path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        payload = fh.read()
    grid = SpaceTimeGrid(**header["grid"])
    values = np.frombuffer(payload, dtype="<f8").reshape(header["shape"]).copy()
    return Field(grid, values, header["lo"], header["hi"]), header


def write_csv(path, field, name="field"):
    """Plain CSV export for small grids: t, x, components..."""
    grid = field.grid
    with open(path, "w") as fh:
        comps = field.ncomp
        cols = ",".join(f"c{i}" for i in range(comps))
        fh.write(f"t,x,{cols}\n")
        for it in range(field.lo, field.hi + 1):
            for ix in range(grid.nx):
                val = field.values[it, ix]
                vals = ",".join(f"{float(v):.17g}" for v in np.atleast_1d(val))
                fh.write(f"{grid.t[it]:.17g},{grid.x[ix]:.17g},{vals}\n")
