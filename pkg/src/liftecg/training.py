"""Loss assembly, Adam optimization, the training loop and evaluation.

The total loss is the per-sample mean absolute error plus alpha times the
multi-resolution spectral loss (both normalized to means so alpha weighs
the terms independently of signal length).  Ablation variants swap the
spectral term for a single-window version or drop it entirely; the
time-domain-only variant never touches the spectrogram path.

Training is deterministic for a fixed seed: per-epoch shuffles come from
one seeded generator, batches are stacked in shuffle order, and gradient
reduction happens inside fixed-order vectorized ops.  A non-finite loss or
gradient aborts the run, keeping the last good checkpoint.
"""

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import stft as sp
from .checkpoint import save_checkpoint
from .metrics import (ChunkResult, EvalReport, VitalsPair, detect_r_peaks,
                      mre, pearson, vitals_from_peaks, vitals_mae)


class NonFiniteGradientError(RuntimeError):
    """Raised when a loss or gradient stops being finite; training aborts."""

    def __init__(self, what):
        super().__init__(f"non-finite values in {what}; step aborted")
        self.what = what


@dataclass
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 256
    learning_rate: float = 1e-4
    alpha: float = 0.1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    checkpoint_interval: int = 100
    loss_variant: str = "multi_resolution"   # "temporal" | "single_window" | "multi_resolution"
    single_window: int = None                # required for the single_window variant
    stft_windows: tuple = (800, 400, 200)
    grad_clip: float = None                  # off by default; max-norm when set

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.loss_variant not in ("temporal", "single_window", "multi_resolution"):
            raise ValueError(f"unknown loss variant {self.loss_variant!r}")
        if self.loss_variant == "single_window" and not self.single_window:
            raise ValueError("single_window variant requires a window length")

    def spectral_config(self):
        if self.loss_variant == "single_window":
            return sp.LossConfig(alpha=self.alpha, windows=(self.single_window,))
        return sp.LossConfig(alpha=self.alpha, windows=tuple(self.stft_windows))


@dataclass
class TrainLog:
    entries: list = field(default_factory=list)   # one dict per epoch
    checkpoints: list = field(default_factory=list)
    aborted: bool = False
    abort_reason: str = None

    def append(self, **kv):
        if self.entries and kv["epoch"] <= self.entries[-1]["epoch"]:
            raise ValueError("epoch index must increase")
        self.entries.append(kv)

    def to_jsonl(self, path):
        import json
        with open(path, "w") as fh:
            for e in self.entries:
                fh.write(json.dumps(e) + "\n")
            if self.aborted:
                fh.write(json.dumps({"aborted": True, "reason": self.abort_reason}) + "\n")


# ---------------------------------------------------------------------------
# losses


def temporal_loss(pred, target):
    """Mean absolute difference between two equal-length signals."""
    pred = ad.as_tensor(pred)
    target = ad.as_tensor(target)
    if pred.data.shape != target.data.shape:
        raise ValueError(f"pred/target shape mismatch: {pred.data.shape} "
                         f"vs {target.data.shape}")
    return ad.tmean(ad.absval(ad.sub(pred, ad.Tensor(target.data))))


def _loss_terms(pred, target, cfg):
    """(total, temporal value, spectral value); spectral is None when unused."""
    lt = temporal_loss(pred, target)
    if cfg.loss_variant == "temporal" or cfg.alpha == 0.0:
        return lt, float(lt.data), None
    lms = sp.mr_stft_loss(pred, target, cfg.spectral_config())
    total = ad.add(lt, ad.scale(lms, cfg.alpha))
    return total, float(lt.data), float(lms.data)


def total_loss(pred, target, cfg):
    """Temporal term plus alpha times the configured spectral term."""
    total, _, _ = _loss_terms(pred, target, cfg)
    return total


# ---------------------------------------------------------------------------
# optimizer


def adam_step(params, t, cfg):
    """One Adam update with bias correction over all parameters.

    t is the 1-based step count.  Parameters never reached by backward
    carry zero gradient (their moments decay).  Non-finite gradients abort
    the step before any parameter is touched.
    """
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    b1, b2, eps, lr = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.learning_rate

    grads = []
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.value)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"gradient of {p.name}")
        grads.append(g)

    if cfg.grad_clip is not None:
        norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
        if norm > cfg.grad_clip:
            grads = [g * (cfg.grad_clip / norm) for g in grads]

    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g in zip(params, grads):
        p.adam_m *= b1
        p.adam_m += (1.0 - b1) * g
        p.adam_v *= b2
        p.adam_v += (1.0 - b2) * g * g
        update = (p.adam_m / c1) / (np.sqrt(p.adam_v / c2) + eps)
        p.value = p.value - lr * update


# ---------------------------------------------------------------------------
# training loop


def _stack_batch(chunks, idx, dtype):
    radar = np.stack([chunks[i].radar for i in idx]).astype(dtype)[..., None]
    ecg = np.stack([chunks[i].ecg for i in idx]).astype(dtype)[..., None]
    return radar, ecg


def train(model, dataset, cfg, out_dir=None, val_dataset=None):
    """Optimize the model on paired chunks; returns (model, TrainLog).

    Checkpoints are written under out_dir (when given) every
    cfg.checkpoint_interval epochs and always at the end; evaluation on the
    held-out split runs at each checkpoint.  When no explicit validation
    set is passed, the last tenth of the dataset (rounded down) is held
    out, so small desk fixtures train on everything.
    """
    ad.tune_malloc_for_large_arrays()
    log = TrainLog()
    dataset = [c for c in dataset if c.ecg is not None]
    if not dataset:
        raise ValueError("training dataset has no chunks with ground-truth ecg")
    for c in dataset:
        if c.radar.size != model.config.input_length:
            raise ValueError(f"chunk {c.source!r} length {c.radar.size} != "
                             f"model input length {model.config.input_length}")

    if val_dataset is None:
        holdout = len(dataset) // 10
        train_set = dataset[:len(dataset) - holdout] if holdout else dataset
        val_set = dataset[len(dataset) - holdout:] if holdout else []
    else:
        train_set, val_set = dataset, list(val_dataset)

    rng = np.random.default_rng(cfg.seed)
    dtype = model.config.np_dtype
    n = len(train_set)
    step = 0
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    def write_checkpoint(tag):
        if out_dir is None:
            return None
        path = out_dir / f"checkpoint_{tag}.json"
        save_checkpoint(path, model, optimizer_step=step)
        log.checkpoints.append(str(path))
        return path

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.time()
        perm = rng.permutation(n)
        ep_total, ep_lt, ep_lms, batches = 0.0, 0.0, 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            radar, ecg = _stack_batch(train_set, idx, dtype)
            try:
                out = model.forward(radar)
                loss, lt_val, lms_val = _loss_terms(out, ecg, cfg)
            except ValueError as exc:
                # engine guards reject non-finite activations once a step blows up
                if "non-finite" not in str(exc):
                    raise
                log.aborted = True
                log.abort_reason = f"{exc} (epoch {epoch})"
                return model, log
            if not np.isfinite(loss.data):
                log.aborted = True
                log.abort_reason = f"non-finite loss at epoch {epoch}"
                return model, log
            model.zero_grads()
            loss.backward()
            try:
                adam_step(model.params(), step + 1, cfg)
            except NonFiniteGradientError as exc:
                log.aborted = True
                log.abort_reason = f"{exc} (epoch {epoch})"
                return model, log
            step += 1
            ep_total += float(loss.data)
            ep_lt += lt_val
            ep_lms += lms_val if lms_val is not None else 0.0
            batches += 1

        entry = {
            "epoch": epoch,
            "loss": ep_total / batches,
            "loss_temporal": ep_lt / batches,
            "loss_spectral": (ep_lms / batches
                              if cfg.loss_variant != "temporal" and cfg.alpha > 0
                              else None),
            "wall_time_s": time.time() - t0,
        }
        if cfg.checkpoint_interval and epoch % cfg.checkpoint_interval == 0:
            write_checkpoint(f"{epoch:05d}")
            if val_set:
                report = evaluate(model, val_set)
                entry["val_pearson"] = report.mean_pearson
                entry["val_mre"] = report.mean_mre
        log.append(**entry)

    write_checkpoint("final")
    return model, log


# ---------------------------------------------------------------------------
# evaluation


def evaluate(model, dataset, batch_size=8):
    """Fidelity and vitals metrics per chunk plus aggregates.

    Chunks without ground-truth ECG are skipped and counted.  Vitals sides
    with too few peaks (fewer than 2 for HR, 3 for RMSSD) are excluded from
    the corresponding MAE and counted as missing.
    """
    report = EvalReport()
    usable = []
    for c in dataset:
        if c.ecg is None:
            report.n_skipped_no_ground_truth += 1
        else:
            usable.append(c)
    if not usable:
        return report

    dtype = model.config.np_dtype
    preds = []
    for start in range(0, len(usable), batch_size):
        group = usable[start:start + batch_size]
        radar = np.stack([c.radar for c in group]).astype(dtype)[..., None]
        out = model.forward(radar).data[..., 0]
        preds.extend(out)

    rhos, mres = [], []
    pairs = []
    for chunk, pred in zip(usable, preds):
        gt = chunk.ecg
        rho = pearson(gt, pred)
        rel = mre(gt, pred)
        gt_peaks = detect_r_peaks(gt, chunk.fs)
        pred_peaks = detect_r_peaks(pred, chunk.fs)
        hr_gt, rmssd_gt = vitals_from_peaks(gt_peaks)
        hr_pred, rmssd_pred = vitals_from_peaks(pred_peaks)
        vitals = VitalsPair(hr_gt=hr_gt, hr_pred=hr_pred,
                            rmssd_gt=rmssd_gt, rmssd_pred=rmssd_pred)
        pairs.append(vitals)
        rhos.append(rho)
        if rel is not None:
            mres.append(rel)
        gstd = float(np.std(gt))
        pstd = float(np.std(pred))
        report.chunks.append(ChunkResult(
            source=chunk.source,
            pearson_r=rho,
            mre=rel,
            vitals=vitals,
            gt_peak_indices=[int(i) for i in gt_peaks.indices],
            pred_peak_indices=[int(i) for i in pred_peaks.indices],
            degenerate_pearson=(gstd < 1e-12 or pstd < 1e-12),
        ))

    report.n_evaluated = len(usable)
    report.mean_pearson = float(np.mean(rhos))
    report.mean_mre = float(np.mean(mres)) if mres else None
    agg = vitals_mae(pairs)
    report.mae_hr_bpm = agg["mae_hr_bpm"]
    report.mae_rmssd_ms = agg["mae_rmssd_ms"]
    report.n_missing_hr = agg["n_missing_hr"]
    report.n_missing_rmssd = agg["n_missing_rmssd"]
    return report
