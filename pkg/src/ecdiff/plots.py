"""Figure rendering for the report path.

Each curve CSV gets a matplotlib rendering saved next to it.  Inference
time flows left to right, so the timestep axis is inverted.  PNG metadata
is stripped to keep outputs byte-stable.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_SOURCE_COLORS = {"model": "tab:blue", "approximated": "tab:orange", "corrected": "tab:red"}
_SAVE_KWARGS = {"dpi": 120, "metadata": {"Software": None}}


def render_noise_differences(rows, path, title="Consecutive-step noise difference"):
    """rows: (step, mean_abs_diff, variance); variance shown as a band."""
    steps = [r[0] for r in rows]
    mean = [r[1] for r in rows]
    std = [r[2] ** 0.5 for r in rows]
    fig, ax = plt.subplots(figsize=(6.0, 3.4))
    ax.plot(steps, mean, lw=1.5, color="tab:blue")
    ax.fill_between(steps, [m - s for m, s in zip(mean, std)],
                    [m + s for m, s in zip(mean, std)],
                    alpha=0.25, color="tab:blue", linewidth=0)
    ax.set_xlabel("timestep")
    ax.set_ylabel("mean |Δ noise|")
    ax.set_title(title)
    ax.invert_xaxis()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def render_latent_errors(rows, path, title="Latent error vs reference"):
    """rows: (step, l2_error, source_flag); markers colored by step source."""
    steps = [r[0] for r in rows]
    errors = [r[1] for r in rows]
    fig, ax = plt.subplots(figsize=(6.0, 3.4))
    ax.plot(steps, errors, lw=1.0, color="0.6", zorder=1)
    for source, color in _SOURCE_COLORS.items():
        xs = [r[0] for r in rows if r[2] == source]
        ys = [r[1] for r in rows if r[2] == source]
        if xs:
            ax.scatter(xs, ys, s=12, color=color, label=source, zorder=2)
    ax.set_xlabel("timestep")
    ax.set_ylabel("L2 latent error")
    ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    ax.invert_xaxis()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
