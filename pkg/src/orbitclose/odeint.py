"""Adaptive embedded Runge-Kutta 5(4) integration (Dormand-Prince pair) with
quartic dense output.

One integrator, one error policy: absolute/relative tolerances default to
1e-10 and every ODE solve in the package routes through here. The tableau and
the dense-output interpolant are the standard DOPRI5 coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BlowUp, ToleranceFailure

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200,
               22 / 525, -1 / 40])
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608,
     -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933,
     87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304,
     -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408,
     701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883,
     -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

_SAFETY, _MIN_FACTOR, _MAX_FACTOR = 0.9, 0.2, 10.0


class DenseSolution:
    """Piecewise-quartic interpolant over the accepted steps.

    Evaluation at a breakpoint returns the stored state bit-exactly.
    """

    def __init__(self, ts, ys, hs, qs, direction):
        self.ts = np.asarray(ts)          # step left endpoints + final time
        self.ys = np.asarray(ys)
        self.hs = np.asarray(hs)          # signed step sizes, len = len(ts)-1
        self.qs = qs                      # per-step (n, 4) dense coefficients
        self.direction = direction

    @property
    def t_min(self):
        return min(self.ts[0], self.ts[-1])

    @property
    def t_max(self):
        return max(self.ts[0], self.ts[-1])

    def _segment(self, t):
        td = self.ts * self.direction
        k = int(np.searchsorted(td, t * self.direction, side="right")) - 1
        return min(max(k, 0), len(self.hs) - 1)

    def __call__(self, t):
        t = float(t)
        if t == self.ts[0]:
            return self.ys[0].copy()
        k = self._segment(t)
        if t == self.ts[k + 1]:
            return self.ys[k + 1].copy()
        theta = (t - self.ts[k]) / self.hs[k]
        powers = np.array([theta, theta**2, theta**3, theta**4])
        return self.ys[k] + self.hs[k] * (self.qs[k] @ powers)

    def eval_many(self, ts):
        ts = np.asarray(ts, dtype=float)
        td = self.ts * self.direction
        ks = np.clip(np.searchsorted(td, ts * self.direction, side="right") - 1,
                     0, len(self.hs) - 1)
        out = np.empty((len(ts), self.ys.shape[1]))
        for k in np.unique(ks):
            m = ks == k
            theta = (ts[m] - self.ts[k]) / self.hs[k]
            powers = np.stack([theta, theta**2, theta**3, theta**4])
            out[m] = self.ys[k] + self.hs[k] * (self.qs[k] @ powers).T
        return out


@dataclass
class OdeResult:
    t: np.ndarray
    y: np.ndarray
    sol: DenseSolution
    nfev: int
    nsteps: int
    event_time: float = None
    event_state: np.ndarray = None


def _initial_step(rhs, t0, y0, f0, direction, rtol, atol):
    scale = atol + rtol * np.abs(y0)
    d0 = np.linalg.norm(y0 / scale) / math.sqrt(y0.size)
    d1 = np.linalg.norm(f0 / scale) / math.sqrt(y0.size)
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    y1 = y0 + h0 * direction * f0
    f1 = np.asarray(rhs(t0 + h0 * direction, y1))
    d2 = np.linalg.norm((f1 - f0) / scale) / math.sqrt(y0.size) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1)


def integrate_ode(rhs, t_span, y0, rtol=1e-10, atol=1e-10, max_norm=1e6,
                  event=None, event_direction=1, max_steps=10_000_000,
                  first_step=None):
    """Integrate y' = rhs(t, y) over t_span with dense output.

    ``event``, if given, is a scalar function g(t, y); integration stops at
    the first sign crossing of g in ``event_direction`` (the crossing time is
    located on the dense interpolant and recorded in the result).
    Raises BlowUp when |y| exceeds max_norm, ToleranceFailure when the step
    size underflows or the step budget is exhausted.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    y = np.array(y0, dtype=float)
    n = y.size
    direction = 1.0 if t1 >= t0 else -1.0
    span = abs(t1 - t0)
    if span == 0.0:
        sol = DenseSolution([t0, t0], [y, y], [1.0], [np.zeros((n, 4))], direction)
        return OdeResult(t=np.array([t0]), y=y[None, :], sol=sol, nfev=1, nsteps=0)

    f = np.asarray(rhs(t0, y), dtype=float)
    nfev = 1
    h = first_step if first_step is not None else _initial_step(
        rhs, t0, y, f, direction, rtol, atol)
    nfev += 0 if first_step is not None else 1
    h = min(h, span)

    ts, ys, hs, qs = [t0], [y.copy()], [], []
    t = t0
    g_old = event(t0, y) if event is not None else None
    event_time = event_state = None
    K = np.empty((7, n))
    nsteps = 0

    while (t1 - t) * direction > 0:
        if nsteps >= max_steps:
            raise ToleranceFailure(f"step budget {max_steps} exhausted at t={t}")
        h = min(h, (t1 - t) * direction)
        if h < 1e-14 * max(1.0, abs(t)):
            raise ToleranceFailure(f"step size underflow at t={t}")

        hd = h * direction
        K[0] = f
        for s in range(5):
            ysub = y + hd * (K[:s + 1].T @ _A[s])
            K[s + 1] = rhs(t + _C[s + 1] * hd, ysub)
        y_new = y + hd * (K[:6].T @ _B)
        t_new = t + hd
        K[6] = rhs(t_new, y_new)
        nfev += 6

        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = np.linalg.norm(hd * (K.T @ _E) / scale) / math.sqrt(n)

        if err <= 1.0:
            factor = _MAX_FACTOR if err == 0.0 else min(
                _MAX_FACTOR, max(1.0, _SAFETY * err ** -0.2))
            Q = K.T @ _P
            ts.append(t_new)
            ys.append(y_new.copy())
            hs.append(hd)
            qs.append(Q)
            nsteps += 1

            if np.max(np.abs(y_new)) > max_norm:
                raise BlowUp(f"|y| exceeded {max_norm} at t={t_new}")

            if event is not None:
                g_new = event(t_new, y_new)
                crossed = (g_old < 0.0 <= g_new) if event_direction > 0 else \
                          (g_old > 0.0 >= g_new) if event_direction < 0 else \
                          (g_old * g_new < 0.0 or (g_old != 0.0 and g_new == 0.0))
                if crossed:
                    from scipy.optimize import brentq
                    seg = DenseSolution(ts[-2:], ys[-2:], hs[-1:], qs[-1:], direction)
                    if g_old * g_new < 0:
                        te = brentq(lambda s: event(s, seg(s)), t, t_new,
                                    xtol=1e-13, rtol=8.9e-16)
                    else:
                        te = t_new
                    event_time, event_state = te, seg(te)
                    t, y, f = t_new, y_new, K[6]
                    break
                g_old = g_new

            t, y, f = t_new, y_new, K[6].copy()
            h *= factor
        else:
            h *= max(_MIN_FACTOR, _SAFETY * err ** -0.2)

    sol = DenseSolution(ts, ys, hs, qs, direction)
    return OdeResult(t=np.array(ts), y=np.array(ys), sol=sol, nfev=nfev,
                     nsteps=nsteps, event_time=event_time, event_state=event_state)
