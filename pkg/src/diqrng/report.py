"""Report composition: machine-readable JSON summaries with provenance,
delimited rate-curve / mu-sweep outputs, and the matplotlib figures
rendered alongside them.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .rates import RateCurvePoint

TOOLKIT_VERSION = "0.1.0"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def provenance(config: dict) -> dict:
    return {"toolkit_version": TOOLKIT_VERSION, "config_sha256": config_hash(config)}


def write_json(path, payload: dict):
    """Deterministic JSON artifact (sorted keys, no timestamps)."""
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_sidecar_meta(artifact_path, config: dict, extra: dict | None = None):
    """Provenance sidecar for binary artifacts whose format is pinned."""
    meta = provenance(config)
    if extra:
        meta.update(extra)
    write_json(str(artifact_path) + ".meta.json", meta)


def write_rate_curve_csv(points: Sequence[RateCurvePoint], path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "rate", "total_bits"])
        for p in points:
            writer.writerow([p.n, f"{p.rate:.12e}", p.total_bits])


def plot_rate_curve(points: Sequence[RateCurvePoint], asymptotic_rate: float, path):
    """Certified output versus trial count, against the asymptotic line."""
    ns = [p.n for p in points]
    bits = [p.total_bits for p in points]
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.loglog(ns, [max(b, 1e-1) for b in bits], "o-", ms=4, label="certified bits")
    ax.loglog(ns, [n * asymptotic_rate for n in ns], "--", color="gray",
              label="asymptotic limit")
    ax.set_xlabel("experimental trials n")
    ax.set_ylabel("extractable random bits")
    ax.legend(frameon=False)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_mu_sweep_csv(mu_values, predicted, measured, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mu", "predicted_jbar", "measured_jbar"])
        for mu, pj, mj in zip(mu_values, predicted, measured):
            writer.writerow([mu, f"{pj:.8e}", "" if mj is None else f"{mj:.8e}"])


def plot_mu_sweep(mu_values, predicted, measured, path):
    """Model game value versus mean photon number, with measured points."""
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.plot(mu_values, [p * 1e4 for p in predicted], "-", label="model")
    if measured is not None:
        ax.plot(mu_values, [m * 1e4 for m in measured], "s", ms=4,
                color="firebrick", label="measured")
    ax.set_xlabel(r"mean photon number $\mu$")
    ax.set_ylabel(r"game value $\bar{J}$ ($\times 10^{-4}$)")
    ax.legend(frameon=False)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
