"""CSV and SVG artifact emitters for runs, baselines, and sweeps.

Plots are generated directly as SVG markup (no plotting dependency):
reward curves as polyline charts, queue traces as link x time heatmaps.
All CSV floats are written with repr so identical runs produce
byte-identical files.
"""

import os
from xml.sax.saxutils import escape

import numpy as np


def fmt_float(x):
    return repr(float(x))


def write_csv(path, header, rows):
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(str(c) if not isinstance(c, float) else fmt_float(c) for c in row) + "\n")


def read_csv(path):
    with open(path) as f:
        lines = f.read().splitlines()
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:] if line]


# -- trace files -----------------------------------------------------------------


def write_trace_csv(path, queues, link_names, interval_s, warmup_s):
    """Long-form ground-truth queue trace: time_s,link_id,queue."""
    rows = []
    for step in range(queues.shape[0]):
        t = warmup_s + (step + 1) * interval_s
        for j, name in enumerate(link_names):
            rows.append((t, name, int(queues[step, j])))
    write_csv(path, ["time_s", "link_id", "queue"], rows)


def write_splits_csv(path, splits, interval_s, warmup_s):
    rows = []
    for step in range(splits.shape[0]):
        t = warmup_s + (step + 1) * interval_s
        for m in range(splits.shape[1]):
            rows.append((t, m + 1, int(splits[step, m])))
    write_csv(path, ["time_s", "intersection", "split_s"], rows)


def read_trace_csv(path):
    """Back to wide form: (times, link_names, queues[steps, links])."""
    _, rows = read_csv(path)
    times = sorted({int(r[0]) for r in rows})
    links = list(dict.fromkeys(r[1] for r in rows))
    t_index = {t: i for i, t in enumerate(times)}
    l_index = {l: j for j, l in enumerate(links)}
    queues = np.zeros((len(times), len(links)), dtype=np.int64)
    for r in rows:
        queues[t_index[int(r[0])], l_index[r[1]]] = int(float(r[2]))
    return np.array(times), links, queues


def write_heatmap_csv(path, times, link_names, queues):
    header = ["time_s"] + list(link_names)
    rows = [[int(t)] + [int(q) for q in queues[i]] for i, t in enumerate(times)]
    write_csv(path, header, rows)


# -- SVG ---------------------------------------------------------------------------


def _svg_header(width, height, title):
    return (
        f'<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
        f'<title>{escape(title)}</title>\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n'
    )


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, n)


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def svg_line_plot(series, title, xlabel, ylabel, width=720, height=440):
    """series: list of (x array, y array, label). Returns SVG markup."""
    ml, mr, mt, mb = 70, 20, 40, 55
    pw, ph = width - ml - mr, height - mt - mb
    xs = np.concatenate([np.asarray(s[0], dtype=float) for s in series])
    ys = np.concatenate([np.asarray(s[1], dtype=float) for s in series])
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(ys.min()), float(ys.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def px(x):
        return ml + (x - x_lo) / (x_hi - x_lo) * pw

    def py(y):
        return mt + ph - (y - y_lo) / (y_hi - y_lo) * ph

    out = [_svg_header(width, height, title)]
    out.append(f'<text x="{width / 2}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>\n')
    out.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#888"/>\n')
    for tx in _ticks(x_lo, x_hi):
        out.append(
            f'<line x1="{px(tx):.1f}" y1="{mt + ph}" x2="{px(tx):.1f}" y2="{mt + ph + 5}" stroke="#555"/>\n'
            f'<text x="{px(tx):.1f}" y="{mt + ph + 18}" text-anchor="middle" font-size="10">{tx:.4g}</text>\n'
        )
    for ty in _ticks(y_lo, y_hi):
        out.append(
            f'<line x1="{ml - 5}" y1="{py(ty):.1f}" x2="{ml}" y2="{py(ty):.1f}" stroke="#555"/>\n'
            f'<text x="{ml - 8}" y="{py(ty):.1f}" text-anchor="end" font-size="10" dy="3">{ty:.4g}</text>\n'
        )
    out.append(
        f'<text x="{ml + pw / 2}" y="{height - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>\n'
    )
    out.append(
        f'<text x="18" y="{mt + ph / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 18 {mt + ph / 2})">{escape(ylabel)}</text>\n'
    )
    for i, (x, y, label) in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{px(float(a)):.1f},{py(float(b)):.1f}" for a, b in zip(x, y))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>\n')
        out.append(
            f'<text x="{ml + 8}" y="{mt + 16 + 14 * i}" font-size="11" fill="{color}">{escape(str(label))}</text>\n'
        )
    out.append("</svg>\n")
    return "".join(out)


def _heat_color(v):
    """0 -> white, 1 -> dark red, piecewise through orange."""
    v = min(max(float(v), 0.0), 1.0)
    if v < 0.5:
        t = v / 0.5
        r, g, b = 255, int(255 - 90 * t), int(255 - 200 * t)
    else:
        t = (v - 0.5) / 0.5
        r, g, b = int(255 - 120 * t), int(165 - 140 * t), int(55 - 25 * t)
    return f"rgb({r},{g},{b})"

def svg_heatmap(times, link_names, queues, title, vmax=None, width=860, height=None):
    """Link x time queue heatmap; one rect per (link, control interval)."""
    n_t, n_l = queues.shape
    ml, mr, mt, mb = 80, 90, 40, 50
    cell_h = 22
    height = height or (mt + mb + cell_h * n_l)
    pw = width - ml - mr
    cw = pw / n_t
    vmax = float(vmax if vmax is not None else max(queues.max(), 1))
    out = [_svg_header(width, height, title)]
    out.append(f'<text x="{width / 2}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>\n')
    for j, name in enumerate(link_names):
        y = mt + j * cell_h
        out.append(
            f'<text x="{ml - 6}" y="{y + cell_h / 2 + 3}" text-anchor="end" font-size="10">{escape(name)}</text>\n'
        )
        for i in range(n_t):
            color = _heat_color(queues[i, j] / vmax)
            out.append(
                f'<rect x="{ml + i * cw:.2f}" y="{y}" width="{cw + 0.05:.2f}" height="{cell_h}" fill="{color}"/>\n'
            )
    for k in range(5):
        idx = int(round(k * (n_t - 1) / 4)) if n_t > 1 else 0
        x = ml + (idx + 0.5) * cw
        out.append(
            f'<text x="{x:.1f}" y="{mt + n_l * cell_h + 16}" text-anchor="middle" font-size="10">{int(times[idx])}</text>\n'
        )
    out.append(
        f'<text x="{ml + pw / 2}" y="{height - 10}" text-anchor="middle" font-size="12">simulation time (s)</text>\n'
    )
    # color bar
    bar_x = width - mr + 20
    for i in range(60):
        v = 1.0 - i / 59
        out.append(
            f'<rect x="{bar_x}" y="{mt + i * (n_l * cell_h) / 60:.2f}" width="14" '
            f'height="{(n_l * cell_h) / 60 + 0.1:.2f}" fill="{_heat_color(v)}"/>\n'
        )
    out.append(f'<text x="{bar_x + 18}" y="{mt + 8}" font-size="10">{vmax:.0f}</text>\n')
    out.append(f'<text x="{bar_x + 18}" y="{mt + n_l * cell_h}" font-size="10">0</text>\n')
    out.append("</svg>\n")
    return "".join(out)


# -- per-run report ------------------------------------------------------------------


def emit_run_report(run_dir, out_dir):
    """Reward-curve CSV + SVGs for one run directory holding metrics.csv."""
    header, rows = read_csv(os.path.join(run_dir, "metrics.csv"))
    idx = {name: i for i, name in enumerate(header)}
    episodes = np.array([int(r[idx["episode"]]) for r in rows])
    wall = np.array([float(r[idx["wall_clock_s"]]) for r in rows])
    env_steps = np.array([int(r[idx["env_steps"]]) for r in rows])
    reward = np.array([float(r[idx["episode_reward"]]) for r in rows])
    name = os.path.basename(os.path.normpath(run_dir))
    os.makedirs(out_dir, exist_ok=True)
    curve_path = os.path.join(out_dir, f"{name}_reward_curve.csv")
    write_csv(
        curve_path,
        ["episode", "wall_clock_s", "env_steps", "episode_reward"],
        [(int(e), float(w), int(s), float(r)) for e, w, s, r in zip(episodes, wall, env_steps, reward)],
    )
    for xs, xlabel, suffix in (
        (wall, "wall clock (s)", "vs_wallclock"),
        (env_steps, "environment steps", "vs_envsteps"),
    ):
        svg = svg_line_plot(
            [(xs, reward, name)], f"episode reward ({name})", xlabel, "episode reward"
        )
        with open(os.path.join(out_dir, f"{name}_reward_{suffix}.svg"), "w") as f:
            f.write(svg)
    return curve_path


def emit_trace_report(trace_path, out_dir, label):
    """Heatmap CSV + SVG from a long-form queue trace file."""
    times, links, queues = read_trace_csv(trace_path)
    os.makedirs(out_dir, exist_ok=True)
    heat_csv = os.path.join(out_dir, f"{label}_queue_heatmap.csv")
    write_heatmap_csv(heat_csv, times, links, queues)
    svg = svg_heatmap(times, links, queues, f"queue length by link ({label})")
    with open(os.path.join(out_dir, f"{label}_queue_heatmap.svg"), "w") as f:
        f.write(svg)
    return heat_csv
