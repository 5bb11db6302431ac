"""Pure-python kernel for the block-based stopping-rule walk simulator.

The compiled extension implements the same contract operation for operation:
per path, standard normals come from a counter-based stream keyed by
(seed, path), drawn in fixed blocks, so outputs are identical across
backends, thread counts, and total path counts.
"""

from __future__ import annotations

import numpy as np

BLOCK = 4096


def _lookup_array(tm: np.ndarray, tx: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Boundary level at running max M: -inf left of the table, linear
    continuation of the last segment to the right."""
    xi = np.interp(M, tm, tx)
    if tm.size >= 2:
        above = M > tm[-1]
        if np.any(above):
            slope = (tx[-1] - tx[-2]) / (tm[-1] - tm[-2])
            xi = np.where(above, tx[-1] + slope * (M - tm[-1]), xi)
    xi = np.where(M < tm[0], -np.inf, xi)
    return xi


def _lookup_scalar(tm: np.ndarray, tx: np.ndarray, M: float) -> float:
    return float(_lookup_array(tm, tx, np.asarray([M]))[0])


def simulate_paths(
    mcat,
    xicat,
    offsets,
    dt,
    cap,
    seed,
    path_lo,
    path_hi,
    n_labels,
    block,
    antithetic,
    bridge,
    out_vals,
    out_maxs,
    out_taus,
    out_trunc,
):
    """Run scaled random walks and stop each at a ladder of boundaries.

    Boundary k is the piecewise-linear table (mcat, xicat)[offsets[k]:
    offsets[k+1]] mapping the running max to a stop level; a label stops the
    first time the walk value is at or below its level, and labels fire in
    order (several may fire on the same step).  Rows [path_lo, path_hi) of
    the outputs are filled with stop value, running max at the stop, and step
    count per label; paths exhausting ``cap`` steps are flagged truncated.

    With ``bridge`` enabled, each step also draws the exact within-step peak
    of a Brownian bridge between its endpoints and folds it into the running
    max, and a crossing of the active label's level inside a step is accepted
    with the exact bridge-hitting probability.  Without it, the running max
    of a path whose first excursion is downward stays pinned at 0, where the
    boundary tables have no support, and such paths wander far below before
    they can stop.
    With ``bridge``, a stop may also fire inside a step, with probability
    given by the hitting chance of the straddling endpoints, in which case
    the recorded value is the boundary level itself.
    """
    tables = []
    for k in range(n_labels):
        lo, hi = int(offsets[k]), int(offsets[k + 1])
        tables.append((np.asarray(mcat[lo:hi]), np.asarray(xicat[lo:hi])))
    sqdt = np.sqrt(dt)
    for p in range(path_lo, path_hi):
        p_eff = (p >> 1) if antithetic else p
        gen = np.random.Generator(
            np.random.Philox(key=np.array([seed, p_eff], dtype=np.uint64))
        )
        sign = -1.0 if (antithetic and (p & 1)) else 1.0
        w = 0.0
        M = 0.0
        k = 0
        step = 0
        while k < n_labels and w <= _lookup_scalar(*tables[k], M):
            out_vals[p, k] = w
            out_maxs[p, k] = M
            out_taus[p, k] = 0
            k += 1
        while k < n_labels and step < cap:
            z = gen.standard_normal(block)
            u = gen.random(block) if bridge else None
            nuse = min(block, int(cap - step))
            walk = w + np.cumsum((sign * sqdt) * z[:nuse])
            wprev = np.concatenate(([w], walk[:-1]))
            if bridge:
                lpk = np.log(np.maximum(gen.random(block), 1e-300))[:nuse]
                dw = walk - wprev
                peaks = 0.5 * (wprev + walk + np.sqrt(dw * dw - (2.0 * dt) * lpk))
                Ms = np.maximum(np.maximum.accumulate(peaks), M)
            else:
                Ms = np.maximum(np.maximum.accumulate(walk), M)
            Mprev = np.concatenate(([M], Ms[:-1]))
            i0 = 0
            fresh_step = True  # block entry begins a step for the active label
            while k < n_labels and i0 < nuse:
                tm, tx = tables[k]
                xi = _lookup_array(tm, tx, Ms[i0:nuse])
                hits = walk[i0:nuse] <= xi
                if bridge:
                    L = _lookup_array(tm, tx, Mprev[i0:nuse])
                    wp = wprev[i0:nuse]
                    wc = walk[i0:nuse]
                    elig = np.isfinite(L) & (wp > L) & (wc > L)
                    ph = np.zeros(L.shape)
                    if np.any(elig):
                        ph[elig] = np.exp(-2.0 * (wp[elig] - L[elig]) * (wc[elig] - L[elig]) / dt)
                    bhits = elig & (u[i0:nuse] < ph)
                    if not fresh_step:
                        # A label reached mid-step only gets the end-of-step check
                        # on the step it became active.
                        bhits[0] = False
                    combined = hits | bhits
                else:
                    combined = hits
                if not np.any(combined):
                    break
                j = int(np.argmax(combined))
                gi = i0 + j
                if bridge and bhits[j]:
                    value = float(L[j])
                else:
                    value = float(walk[gi])
                out_vals[p, k] = value
                out_maxs[p, k] = float(Ms[gi])
                out_taus[p, k] = step + gi + 1
                k += 1
                i0 = gi
                fresh_step = False
            if k >= n_labels:
                break
            w = float(walk[nuse - 1])
            M = float(Ms[nuse - 1])
            step += nuse
        if k < n_labels:
            # Settle still-running labels on their boundary at the final max;
            # carrying the unstopped walk value would inflate upper-tail
            # statistics of the recorded marginals.
            out_trunc[p] = 1
            while k < n_labels:
                fill = _lookup_scalar(*tables[k], M)
                if not np.isfinite(fill) or fill > w:
                    fill = w
                out_vals[p, k] = fill
                out_maxs[p, k] = M
                out_taus[p, k] = step
                k += 1
        else:
            out_trunc[p] = 0
