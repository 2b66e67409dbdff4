"""CSV and figure output for solver runs.

All floating CSV fields use 17 significant digits so a round trip through
text preserves the double exactly; figures are rendered headless.
"""
import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def _f(x):
    return f"{float(x):.17g}"


def write_convergence_csv(path, rows):
    """Rows of (dof, capacitance, relative error)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dof", "C_farad", "rel_error"])
        for dof, c, err in rows:
            w.writerow([int(dof), _f(c), _f(err)])


def write_charges_csv(path, mesh, q):
    """Per-element charge table with areas and surface densities."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["element", "patch", "domain", "area_m2", "charge_C",
                    "density_C_m2"])
        for i in range(mesh.n_elements):
            a = float(mesh.areas[i])
            w.writerow([i + 1, int(mesh.patch_index[i]) + 1,
                        int(mesh.domains[i]), _f(a), _f(q[i]), _f(q[i] / a)])


def write_capacitance_csv(path, dof, c_total, per_domain):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        tags = sorted(per_domain)
        w.writerow(["dof", "C_total_farad"] + [f"Q_{d}_C" for d in tags])
        w.writerow([int(dof), _f(c_total)] + [_f(per_domain[d]) for d in tags])


def render_convergence_figure(path, series, reference=None):
    """Log-log error-vs-dof plot.

    ``series`` maps a label to rows (dof, C, rel_error); an optional
    ``reference`` maps a label to (dofs, errors) guide data.
    """
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    markers = ("o", "s", "^", "d")
    for k, (label, rows) in enumerate(series.items()):
        dofs = [r[0] for r in rows]
        errs = [r[2] for r in rows]
        ax.loglog(dofs, errs, marker=markers[k % len(markers)], label=label)
    for label, (dofs, errs) in (reference or {}).items():
        ax.loglog(dofs, errs, "--", color="0.5", label=label)
    ax.set_xlabel("degrees of freedom")
    ax.set_ylabel("relative error in C")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
