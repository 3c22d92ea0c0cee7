"""Figure emission.

The bound-curve SVG is assembled by hand so the bytes are stable across
environments: fixed viewBox, fixed coordinate formatting, exactly two
curve polylines. PNG renderings for bundled reports go through matplotlib
with the Agg backend.
"""

from __future__ import annotations

import os
import tempfile

import numpy as np

from .ioutil import atomic_write_text

VIEWBOX = "0 0 640 480"
_PLOT = (72.0, 24.0, 616.0, 420.0)   # x0, y0, x1, y1 of the data region


def _map(vals, lo, hi, out_lo, out_hi):
    vals = np.asarray(vals, dtype=float)
    span = hi - lo if hi > lo else 1.0
    return out_lo + (vals - lo) * (out_hi - out_lo) / span


def _polyline(xs, ys, color):
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    return (f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
            f'points="{pts}"/>')


def bounds_svg(alphas, l_vals, j_vals, path: str) -> None:
    """Two-curve plot of the dimension bounds against alpha.

    Exactly two polyline elements (the upper and the improved bound);
    axes, ticks and labels use line and text elements so the curve count
    stays unambiguous for downstream checks.
    """
    alphas = np.asarray(alphas, dtype=float)
    l_vals = np.asarray(l_vals, dtype=float)
    j_vals = np.asarray(j_vals, dtype=float)
    x0, y0, x1, y1 = _PLOT
    a_lo, a_hi = float(alphas.min()), float(alphas.max())
    v_hi = float(max(l_vals.max(), j_vals.max()))
    v_lo = 0.0
    xs = _map(alphas, a_lo, a_hi, x0, x1)
    y_l = _map(l_vals, v_lo, v_hi, y1, y0)
    y_j = _map(j_vals, v_lo, v_hi, y1, y0)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{VIEWBOX}">',
        '<rect width="640" height="480" fill="white"/>',
        f'<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
    ]
    for frac in (0.0, 0.5, 1.0):
        ax = x0 + frac * (x1 - x0)
        av = a_lo + frac * (a_hi - a_lo)
        parts.append(f'<line x1="{ax:.2f}" y1="{y1}" x2="{ax:.2f}" '
                     f'y2="{y1 + 5}" stroke="black"/>')
        parts.append(f'<text x="{ax:.2f}" y="{y1 + 20:.2f}" '
                     f'font-size="12" text-anchor="middle">{av:.3f}</text>')
        vy = y1 - frac * (y1 - y0)
        vv = v_lo + frac * (v_hi - v_lo)
        parts.append(f'<line x1="{x0 - 5}" y1="{vy:.2f}" x2="{x0}" '
                     f'y2="{vy:.2f}" stroke="black"/>')
        parts.append(f'<text x="{x0 - 8:.2f}" y="{vy + 4:.2f}" '
                     f'font-size="12" text-anchor="end">{vv:.2f}</text>')
    parts.append(f'<text x="{(x0 + x1) / 2:.2f}" y="460" font-size="14" '
                 f'text-anchor="middle">alpha</text>')
    parts.append(f'<text x="18" y="{(y0 + y1) / 2:.2f}" font-size="14" '
                 f'text-anchor="middle" '
                 f'transform="rotate(-90 18 {(y0 + y1) / 2:.2f})">'
                 f'dim_B(S)</text>')
    parts.append(_polyline(xs, y_l, "#1f4e8c"))
    parts.append(_polyline(xs, y_j, "#b03a2e"))
    parts.append(f'<text x="{x1 - 8:.2f}" y="{y0 + 16:.2f}" font-size="12" '
                 f'text-anchor="end" fill="#1f4e8c">upper bound</text>')
    parts.append(f'<text x="{x1 - 8:.2f}" y="{y0 + 32:.2f}" font-size="12" '
                 f'text-anchor="end" fill="#b03a2e">improved bound</text>')
    parts.append("</svg>")
    atomic_write_text(path, "\n".join(parts) + "\n")


def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _atomic_savefig(fig, path: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".png")
    try:
        with os.fdopen(fd, "wb") as fh:
            fig.savefig(fh, format="png", dpi=120)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def bounds_png(alphas, l_vals, j_vals, path: str) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    ax.plot(alphas, l_vals, label="upper bound", color="#1f4e8c")
    ax.plot(alphas, j_vals, label="improved bound", color="#b03a2e")
    ax.set_xlabel("alpha")
    ax.set_ylabel("dim_B(S)")
    ax.legend()
    ax.grid(alpha=0.3)
    _atomic_savefig(fig, path)
    plt.close(fig)


def energy_png(times, energies, path: str) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    ax.plot(times, energies, marker="o", markersize=3, color="#1f4e8c")
    ax.set_xlabel("time")
    ax.set_ylabel("kinetic energy")
    ax.grid(alpha=0.3)
    _atomic_savefig(fig, path)
    plt.close(fig)


def covering_png(radii, counts, dimension, path: str) -> None:
    plt = _plt()
    radii = np.asarray(radii, dtype=float)
    counts = np.asarray(counts, dtype=float)
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    ax.loglog(radii, counts, marker="o", markersize=4, color="#1f4e8c",
              label="covering counts")
    ax.set_xlabel("r")
    ax.set_ylabel("N(r)")
    ax.set_title(f"slope estimate {dimension:.3f}")
    ax.legend()
    ax.grid(alpha=0.3, which="both")
    _atomic_savefig(fig, path)
    plt.close(fig)
