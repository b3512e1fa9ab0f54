"""Command-line entry points.

Subcommands: synth (generate paired synthetic data), train, eval, infer,
features (per-scale feature dumps plus spectrogram matrices) and selfcheck
(embedded verification suite).  Every command echoes its fully resolved
configuration into the output directory so a run can be replayed
byte-for-byte.

Exit codes: 0 success, 2 usage/config/data error, 3 numerical abort.
"""

import argparse
import json
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import data as dp
from . import stft as sp
from .checkpoint import load_checkpoint
from .model import (LiftingNetwork, ModelConfig, count_params_flops,
                    export_intermediate_features, model_gradient_check)
from .training import TrainConfig, evaluate, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3

ENV_OUT_DIR = "LIFTECG_OUT"


class CliError(Exception):
    """Usage/config/data problem; maps to exit code 2."""


def _default_out():
    return os.environ.get(ENV_OUT_DIR, ".")


def _ensure_dir(path):
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {path}: {exc}") from exc
    if not os.access(path, os.W_OK):
        raise CliError(f"output directory {path} is not writable")
    return path


def _echo_config(out_dir, command, resolved):
    """Persist the resolved configuration for reproducible replays."""
    payload = {"command": command, "resolved": resolved}
    with open(Path(out_dir) / f"config_resolved_{command}.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def _load_config_file(path):
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise CliError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CliError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise CliError(f"config file {path} must hold a JSON object")
    return cfg


def _build_configs(file_cfg, args):
    """Merge config file sections with CLI overrides into typed configs."""
    model_kv = dict(file_cfg.get("model", {}))
    train_kv = dict(file_cfg.get("train", {}))
    for key, dest in (("scales", "scales"), ("channels", "channels"),
                      ("input_length", "input_length")):
        val = getattr(args, dest, None)
        if val is not None:
            model_kv[key] = val
    for key in ("epochs", "batch_size", "learning_rate", "alpha", "seed",
                "checkpoint_interval", "loss_variant", "single_window"):
        val = getattr(args, key, None)
        if val is not None:
            train_kv[key] = val
    try:
        model_cfg = ModelConfig(**model_kv)
        train_cfg = TrainConfig(**train_kv)
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid configuration: {exc}") from exc
    return model_cfg, train_cfg


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args):
    out = _ensure_dir(args.out)
    try:
        params = dp.SynthParams(heart_rate_bpm=args.hr, hr_std_bpm=args.hr_std,
                                resp_rate_bpm=args.resp_rate,
                                resp_amplitude_ratio=args.resp_amp,
                                noise_std=args.noise_std, seed=args.seed)
    except ValueError as exc:
        raise CliError(str(exc)) from exc

    entries = []
    for i in range(args.count):
        p = dp.SynthParams(heart_rate_bpm=args.hr, hr_std_bpm=args.hr_std,
                           resp_rate_bpm=args.resp_rate,
                           resp_amplitude_ratio=args.resp_amp,
                           noise_std=args.noise_std, seed=args.seed + i)
        rec = dp.synthesize_pair(p, args.seconds)
        radar_name = f"rec{i:03d}_radar.{args.format}"
        ecg_name = f"rec{i:03d}_ecg.{args.format}"
        peaks_name = f"rec{i:03d}_rpeaks.json"
        dp.save_signal(out / radar_name, rec.radar, rec.radar_hz, args.format)
        dp.save_signal(out / ecg_name, rec.ecg, rec.ecg_hz, args.format)
        with open(out / peaks_name, "w") as fh:
            json.dump({"r_peak_times_s": [float(t) for t in rec.r_peak_times]}, fh)
        entries.append({
            "radar_path": radar_name,
            "ecg_path": ecg_name,
            "rate_hz": rec.radar_hz,
            "subject": rec.subject,
            "split": "train",
            "format": args.format,
            "r_peaks_path": peaks_name,
        })
    dp.write_manifest(out / "manifest.json", entries)
    _echo_config(out, "synth", {
        "out": str(out), "seconds": args.seconds, "hr": args.hr,
        "hr_std": args.hr_std, "resp_rate": args.resp_rate,
        "resp_amp": args.resp_amp, "noise_std": args.noise_std,
        "seed": args.seed, "count": args.count, "format": args.format,
    })
    print(f"wrote {len(entries)} recording(s) + manifest to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def cmd_train(args):
    out = _ensure_dir(args.out)
    file_cfg = _load_config_file(args.config)
    model_cfg, train_cfg = _build_configs(file_cfg, args)

    try:
        chunks = dp.load_dataset(args.data)
    except (OSError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    train_chunks = [c for c in chunks if c.split != "test"]
    val_chunks = [c for c in chunks if c.split == "test"]
    if not train_chunks:
        raise CliError(f"no training chunks in {args.data}")

    model = LiftingNetwork(model_cfg)
    info = count_params_flops(model_cfg)
    print(f"model: {info['params']} parameters, "
          f"{info['flops_per_forward'] / 1e9:.3f} GFLOPs per forward")

    _echo_config(out, "train", {
        "data": str(args.data), "out": str(out),
        "model": model_cfg.to_dict(),
        "train": {k: (list(v) if isinstance(v, tuple) else v)
                  for k, v in vars(train_cfg).items()},
    })

    t0 = time.time()
    model, log = train(model, train_chunks, train_cfg, out_dir=out,
                       val_dataset=val_chunks or None)
    log.to_jsonl(out / "trainlog.jsonl")
    if log.aborted:
        print(f"training aborted: {log.abort_reason}", file=sys.stderr)
        print(f"last good checkpoint: "
              f"{log.checkpoints[-1] if log.checkpoints else 'none'}",
              file=sys.stderr)
        return EXIT_NUMERIC
    print(f"trained {train_cfg.epochs} epochs in {(time.time() - t0) / 60:.2f} min; "
          f"final loss {log.entries[-1]['loss']:.6f}" if log.entries else
          "no epochs run")
    print(f"checkpoints: {log.checkpoints}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args):
    try:
        model, _ = load_checkpoint(args.ckpt)
    except (OSError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    try:
        chunks = dp.load_dataset(args.data)
    except (OSError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    chunks = [c for c in chunks if c.ecg is not None]
    if not chunks:
        raise CliError("evaluation set is empty (no chunks with ground truth)")
    if args.split:
        chunks = [c for c in chunks if c.split == args.split] or chunks

    report = evaluate(model, chunks)
    report.to_json(args.report)
    out_dir = Path(args.report).parent
    _echo_config(out_dir, "eval", {"data": str(args.data), "ckpt": str(args.ckpt),
                                   "report": str(args.report),
                                   "split": args.split})
    print(f"evaluated {report.n_evaluated} chunks: "
          f"rho={report.mean_pearson:.4f} mre={report.mean_mre:.4f} "
          f"mae_hr={report.mae_hr_bpm} bpm mae_rmssd={report.mae_rmssd_ms} ms")
    print(f"report written to {args.report}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# infer / features


def _read_radar(path, fmt, rate):
    try:
        x = dp.load_signal(path, fmt, expected_hz=rate)
    except (OSError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    if rate != dp.TARGET_HZ:
        x = dp.resample(x, rate, dp.TARGET_HZ)
    return x


def _chunked_input(x, length):
    count = x.size // length
    if count == 0:
        raise CliError(f"input shorter than one chunk ({x.size} < {length})")
    dropped = x.size - count * length
    if dropped:
        warnings.warn(f"dropping {dropped} trailing samples shorter than one chunk")
    return [dp.normalize_chunk(x[i * length:(i + 1) * length])
            for i in range(count)]


def cmd_infer(args):
    try:
        model, _ = load_checkpoint(args.ckpt)
    except (OSError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    fmt = args.format or ("f32" if str(args.radar).endswith(".f32") else "csv")
    x = _read_radar(args.radar, fmt, args.rate)
    chunks = _chunked_input(x, model.config.input_length)
    outputs = []
    for chunk in chunks:
        pred = model.predict_numpy(chunk.astype(model.config.np_dtype)[:, None])
        outputs.append(pred[:, 0])
    recon = np.concatenate(outputs)
    dp.save_signal(args.out, recon, dp.TARGET_HZ, fmt)
    _echo_config(Path(args.out).parent, "infer",
                 {"radar": str(args.radar), "ckpt": str(args.ckpt),
                  "out": str(args.out), "rate": args.rate, "format": fmt})
    print(f"wrote {recon.size} reconstructed samples to {args.out}")
    return EXIT_OK


def cmd_features(args):
    try:
        model, _ = load_checkpoint(args.ckpt)
    except (OSError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    out = _ensure_dir(args.out)
    fmt = args.format or ("f32" if str(args.radar).endswith(".f32") else "csv")
    x = _read_radar(args.radar, fmt, args.rate)
    chunk = _chunked_input(x, model.config.input_length)[0]

    feats = export_intermediate_features(
        model, chunk.astype(model.config.np_dtype)[:, None])
    for name, arr in feats.items():
        np.savetxt(out / f"{name}.csv", arr, delimiter=",", fmt="%.8g")

    recon = model.predict_numpy(chunk.astype(model.config.np_dtype)[:, None])[:, 0]
    cfg = sp.LossConfig()
    for w in cfg.windows:
        spec_in = sp.stft_complex(chunk, w, cfg.hop(w))
        spec_out = sp.stft_complex(recon, w, cfg.hop(w))
        sp.save_magnitude_matrix(out / f"spectrogram_radar_w{w}.txt", spec_in)
        sp.save_magnitude_matrix(out / f"spectrogram_recon_w{w}.txt", spec_out)

    _echo_config(out, "features", {"radar": str(args.radar),
                                   "ckpt": str(args.ckpt), "out": str(out),
                                   "rate": args.rate, "format": fmt})
    print(f"wrote {len(feats)} feature dumps + spectrograms to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# selfcheck


def cmd_selfcheck(args):
    """Embedded verification: gradient checks, lifting inverse, spectral and
    metric oracles.  Nonzero exit naming the first failing check."""
    ad.tune_malloc_for_large_arrays()
    t0 = time.time()
    failures = []
    corrupt = getattr(args, "corrupt_op", None)

    def check(name, fn):
        try:
            ok, detail = fn()
        except Exception as exc:   # a crashed check is a failed check
            ok, detail = False, f"exception: {exc}"
        status = "pass" if ok else "FAIL"
        print(f"  [{status}] {name}: {detail}")
        if not ok:
            failures.append(name)

    rng = np.random.default_rng(99)

    def grad_conv():
        def build(ts):
            return ad.tmean(ad.relu(ad.conv1d(ts["x"], ts["w"], ts["b"], stride=2)))
        err = ad.check_gradients(build, {
            "x": rng.normal(size=(16, 3)), "w": rng.normal(size=(4, 3, 5)) * 0.4,
            "b": rng.normal(size=(4,)) * 0.1})
        if corrupt == "conv1d":
            err += 1.0
        return err < 1e-4, f"max rel err {err:.2e}"

    def grad_attention():
        arrs = {"x": rng.normal(size=(12, 8)) * 0.5}
        for nm in ("wq", "wk", "wv", "wo"):
            arrs[nm] = rng.normal(size=(8, 8)) * 0.3
        def build(ts):
            out = ad.multi_head_self_attention(
                ts["x"], ts["wq"], ts["wk"], ts["wv"], ts["wo"], 4)
            return ad.tmean(ad.mul(out, out))
        err = ad.check_gradients(build, arrs)
        if corrupt == "attention":
            err += 1.0
        return err < 1e-4, f"max rel err {err:.2e}"

    def lifting_inverse():
        from .model import InverseLiftingUnit, LiftingUnit, Registry
        cfg = ModelConfig(channels=8, input_length=64, scales=1, seed=7)
        reg = Registry()
        rng2 = np.random.default_rng(7)
        lu = LiftingUnit(reg, "lu", cfg, rng2)
        ilu = InverseLiftingUnit(reg, "ilu", cfg, rng2,
                                 predict=lu.predict, update=lu.update)
        f_e = ad.Tensor(rng2.normal(size=(32, 8)).astype(np.float32))
        f_o = ad.Tensor(rng2.normal(size=(32, 8)).astype(np.float32))
        f_d = ad.sub(f_e, lu.predict(f_o))
        f_a = ad.add(f_o, lu.update(f_d))
        g_o = ad.sub(f_a, ilu.update(f_d))
        g_e = ad.add(f_d, ilu.predict(g_o))
        err = max(np.abs(g_o.data - f_o.data).max(),
                  np.abs(g_e.data - f_e.data).max())
        return err <= 1e-5, f"max abs err {err:.2e}"

    def stft_oracle():
        x = rng.normal(size=96)
        spec = sp.stft_complex(x, 32, 8)
        win = sp.hanning(32)
        t, k = 2, 5
        ref = sum(x[t * 8 + n] * win[n] * np.exp(-2j * np.pi * k * n / 32)
                  for n in range(32))
        err = abs(spec[t, k] - ref)
        zero = float(sp.mr_stft_loss(ad.Tensor(x.astype(np.float32)),
                                     x.astype(np.float32),
                                     sp.LossConfig(windows=(32, 16, 8))).data)
        return err < 1e-5 and zero == 0.0, f"entry err {err:.2e}, self-loss {zero}"

    def metric_oracles():
        from .metrics import heart_rate, mre, pearson, rmssd
        a = rng.normal(size=200)
        b = rng.normal(size=200)
        ref = (np.dot(a - a.mean(), b - b.mean())
               / np.sqrt(np.dot(a - a.mean(), a - a.mean()))
               / np.sqrt(np.dot(b - b.mean(), b - b.mean())))
        e1 = abs(pearson(a, b) - ref)
        e2 = abs(mre(a, b) - np.abs(a - b).sum() / np.abs(a).sum())
        e3 = abs(heart_rate([0.8, 1.2]) - 60.0)
        e4 = abs(rmssd([1.0, 0.9, 1.1]) - np.sqrt(0.025) * 1000)
        err = max(e1, e2, e3, e4)
        return err < 1e-9, f"max err {err:.2e}"

    print("selfcheck:")
    check("gradient_conv1d", grad_conv)
    check("gradient_attention", grad_attention)
    check("lifting_inverse", lifting_inverse)
    check("stft_oracle", stft_oracle)
    check("metric_oracles", metric_oracles)
    dt = time.time() - t0
    if failures:
        print(f"selfcheck FAILED ({', '.join(failures)}) in {dt:.1f}s")
        return 1
    print(f"selfcheck passed in {dt:.1f}s")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="liftecg",
        description="Lifting-wavelet reconstruction of ECG from radar "
                    "displacement signals.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate paired synthetic recordings")
    p.add_argument("--out", default=_default_out())
    p.add_argument("--seconds", type=float, default=60.0)
    p.add_argument("--hr", type=float, default=60.0)
    p.add_argument("--hr-std", type=float, default=2.0, dest="hr_std")
    p.add_argument("--resp-rate", type=float, default=15.0, dest="resp_rate")
    p.add_argument("--resp-amp", type=float, default=3.0, dest="resp_amp")
    p.add_argument("--noise-std", type=float, default=0.02, dest="noise_std")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--format", choices=("csv", "f32"), default="csv")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train on a dataset manifest")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=_default_out())
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    p.add_argument("--learning-rate", type=float, default=None, dest="learning_rate")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--checkpoint-interval", type=int, default=None,
                   dest="checkpoint_interval")
    p.add_argument("--loss-variant", default=None, dest="loss_variant",
                   choices=("temporal", "single_window", "multi_resolution"))
    p.add_argument("--single-window", type=int, default=None, dest="single_window")
    p.add_argument("--scales", type=int, default=None)
    p.add_argument("--channels", type=int, default=None)
    p.add_argument("--input-length", type=int, default=None, dest="input_length")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--split", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("infer", help="reconstruct ECG from a radar file")
    p.add_argument("--radar", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rate", type=float, default=dp.TARGET_HZ)
    p.add_argument("--format", choices=("csv", "f32"), default=None)
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("features", help="dump per-scale features + spectrograms")
    p.add_argument("--radar", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rate", type=float, default=dp.TARGET_HZ)
    p.add_argument("--format", choices=("csv", "f32"), default=None)
    p.set_defaults(fn=cmd_features)

    p = sub.add_parser("selfcheck", help="run the embedded verification suite")
    p.add_argument("--corrupt-op", default=None, dest="corrupt_op",
                   help=argparse.SUPPRESS)   # test hook
    p.set_defaults(fn=cmd_selfcheck)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    ad.tune_malloc_for_large_arrays()
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
