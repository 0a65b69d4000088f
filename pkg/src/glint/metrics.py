"""Evaluation metrics and diagnostics: MAPE, MAE, DSSIM, chain-state
histograms, and MCMC-vs-uniform comparison reports.

Report paths emit CSV plus a plain-text summary, and render matplotlib
figures next to the delimited output (metric curves, histogram heatmaps).
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .imgio import write_pfm
from .net import loss as training_loss

MAPE_EPS = 0.01  # linear-radiance guard against zero references


def mape(pred: np.ndarray, ref: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if pred.shape != ref.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {ref.shape}")
    if not np.isfinite(ref).all():
        raise ValueError("reference must be finite")
    return float((np.abs(pred - ref) / (np.abs(ref) + MAPE_EPS)).mean())


def mae(pred: np.ndarray, ref: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if pred.shape != ref.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {ref.shape}")
    return float(np.abs(pred - ref).mean())


def dssim(pred: np.ndarray, ref: np.ndarray) -> float:
    return training_loss(pred, ref).dssim


@dataclass
class MetricReport:
    frames: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add_frame(self, name: str, pred: np.ndarray, ref: np.ndarray) -> dict:
        row = {"frame": name, "mape": mape(pred, ref), "mae": mae(pred, ref),
               "dssim": dssim(pred, ref)}
        self.frames.append(row)
        return row

    def aggregate(self) -> dict:
        if not self.frames:
            return {"mape": 0.0, "mae": 0.0, "dssim": 0.0}
        return {k: float(np.mean([f[k] for f in self.frames]))
                for k in ("mape", "mae", "dssim")}

    def write_csv(self, path: str) -> None:
        agg = self.aggregate()
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["frame", "mape", "mae", "dssim"])
            for row in self.frames:
                w.writerow([row["frame"], f"{row['mape']:.6g}", f"{row['mae']:.6g}",
                            f"{row['dssim']:.6g}"])
            w.writerow(["aggregate", f"{agg['mape']:.6g}", f"{agg['mae']:.6g}",
                        f"{agg['dssim']:.6g}"])

    def write_summary(self, path: str) -> None:
        agg = self.aggregate()
        lines = [f"frames: {len(self.frames)}"]
        for k, v in self.meta.items():
            lines.append(f"{k}: {v}")
        for k in ("mape", "mae", "dssim"):
            lines.append(f"mean {k}: {agg[k]:.6g}")
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")

    def write_figure(self, path: str) -> None:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        if not self.frames:
            return
        names = [f["frame"] for f in self.frames]
        fig, axes = plt.subplots(1, 3, figsize=(12, 3.2))
        for ax, key in zip(axes, ("mape", "mae", "dssim")):
            ax.bar(range(len(names)), [f[key] for f in self.frames], color="#4878a8")
            ax.axhline(self.aggregate()[key], color="#c44e52", lw=1, ls="--")
            ax.set_title(key.upper())
            ax.set_xlabel("frame")
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)


# ---------------------------------------------------------------------------
# Chain diagnostics.


def load_chain_states(csv_path: str):
    """Rows of a chain diagnostics CSV -> (iterations, kinds, accepted, f, states)."""
    iters, kinds, accepted, fs, states = [], [], [], [], []
    with open(csv_path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or len(header) < 6 or header[0] != "iteration":
            raise ValueError(f"{csv_path}: not a chain diagnostics CSV")
        for row in reader:
            if len(row) != len(header):
                raise ValueError(f"{csv_path}: malformed row {row!r}")
            iters.append(int(row[0]))
            kinds.append(row[2])
            accepted.append(row[3] == "1")
            fs.append(float(row[4]))
            states.append([float(x) for x in row[5:]])
    return (np.array(iters), kinds, np.array(accepted), np.array(fs),
            np.array(states, dtype=np.float64))


def chain_histogram(csv_path: str, dims: tuple[int, int], bins: int,
                    warmup_iters: int = 0) -> np.ndarray:
    """2D occupancy of post-warmup chain states over components (i, j)."""
    iters, _, _, _, states = load_chain_states(csv_path)
    if states.size == 0:
        return np.zeros((bins, bins))
    keep = iters >= warmup_iters
    i, j = dims
    if max(i, j) >= states.shape[1]:
        raise ValueError(f"dims {dims} out of range for {states.shape[1]} components")
    hist, _, _ = np.histogram2d(states[keep, i], states[keep, j], bins=bins,
                                range=[[0.0, 1.0], [0.0, 1.0]])
    return hist


def write_histogram(hist: np.ndarray, path_prefix: str) -> None:
    """Histogram as grayscale PFM grid plus a PNG heatmap figure."""
    write_pfm(path_prefix + ".pfm", hist.astype(np.float32))
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4.5, 4))
    im = ax.imshow(hist.T, origin="lower", extent=[0, 1, 0, 1], cmap="viridis",
                   aspect="auto")
    fig.colorbar(im, ax=ax, label="visits")
    ax.set_xlabel("component i")
    ax.set_ylabel("component j")
    fig.tight_layout()
    fig.savefig(path_prefix + ".png", dpi=120)
    plt.close(fig)


# ---------------------------------------------------------------------------
# Run comparison (table/graph data behind MCMC-vs-uniform studies).


def read_train_log(path: str) -> dict[str, np.ndarray]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = [row for row in reader]
    cols = {}
    for k, name in enumerate(header):
        vals = [row[k] for row in rows]
        if name in ("decision",):
            cols[name] = np.array(vals)
        else:
            cols[name] = np.array([float(v) if v != "" else np.nan for v in vals])
    return cols


def compare_runs(run_a: str, run_b: str, out_dir: str,
                 labels: tuple[str, str] = ("run_a", "run_b")) -> dict:
    """Validation-loss trajectories of two runs side by side: CSV + figure."""
    os.makedirs(out_dir, exist_ok=True)
    logs = [read_train_log(os.path.join(r, "log.csv")) for r in (run_a, run_b)]
    summary = {}
    for label, log in zip(labels, logs):
        mask = ~np.isnan(log["val_loss"])
        summary[label] = {
            "final_loss": float(log["loss"][-1]),
            "final_val_loss": float(log["val_loss"][mask][-1]) if mask.any() else None,
            "iterations": int(log["iteration"][-1]),
        }
    with open(os.path.join(out_dir, "compare.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iteration", f"{labels[0]}_val_loss", f"{labels[1]}_val_loss"])
        marks = [np.where(~np.isnan(log["val_loss"]))[0] for log in logs]
        for ia, ib in zip(marks[0], marks[1]):
            w.writerow([int(logs[0]["iteration"][ia]),
                        f"{logs[0]['val_loss'][ia]:.6g}", f"{logs[1]['val_loss'][ib]:.6g}"])
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3.6))
    for label, log, color in zip(labels, logs, ("#4878a8", "#c44e52")):
        m = np.where(~np.isnan(log["val_loss"]))[0]
        ax.plot(log["iteration"][m], log["val_loss"][m], label=label, color=color)
    ax.set_xlabel("iteration")
    ax.set_ylabel("validation loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "compare.png"), dpi=120)
    plt.close(fig)
    return summary
