"""Training, evaluation, noise sweeps, ablation grid and map export.

Every CSV written here starts with ``#`` comment lines echoing the full run
configuration; :func:`read_table` skips them.
"""
import csv
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from . import losses as L
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, config_digest, dump_config
from .errors import InvalidInputError, NumericalError
from .metrics import STRUCTURES, build_report, dice_score
from .model import build_model
from .pgm import write_pgm
from .synthdata import SPLITS, add_gaussian_noise, make_dataset, split_fingerprint

log = logging.getLogger(__name__)

CHECKPOINT_NAME = "best.ckpt"
SWEEP_COLUMNS = ["sigma", "ACC", "F1", "DI_disc", "ASSD_disc", "DI_cup", "ASSD_cup", "mean_Uc", "mean_Us"]
CURVE_TERMS = ("L_m", "L_c", "L_s", "total")
ABLATION_GRID = (
    ("MD", dict(md_only=True, use_un=False, use_ui=False)),
    ("MD+UN", dict(md_only=False, use_un=True, use_ui=False)),
    ("MD+UI", dict(md_only=False, use_un=False, use_ui=True)),
    ("MD+UN+UI", dict(md_only=False, use_un=True, use_ui=True)),
)


@dataclass
class RunRecord:
    config: str
    train_curves: dict
    val_curves: dict
    metrics: dict  # split -> sigma (str) -> MetricsReport dict
    best_epoch: int
    checkpoint: str
    wall_clock: float
    split_hash: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)


# ---------------------------------------------------------------- tables


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_table(path, columns, rows, config_text=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if config_text:
            for line in config_text.splitlines():
                fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def _parse_cell(text):
    if text == "":
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if text in ("True", "False"):
        return text == "True"
    return text


def read_table(path):
    """Rows of a table written by :func:`write_table`, numbers parsed back."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(lines)
    return [{k: _parse_cell(v) for k, v in row.items()} for row in reader]


# ---------------------------------------------------------------- helpers


def configure_threads(n):
    torch.set_num_threads(n)


def stack_samples(samples, sigma=0.0):
    images = [add_gaussian_noise(s.image, sigma, s.seed) for s in samples]
    x = torch.from_numpy(np.stack(images).astype(np.float32)).unsqueeze(1)
    masks = torch.from_numpy(np.stack([s.mask for s in samples]).astype(np.int64))
    labels = torch.tensor([s.label for s in samples], dtype=torch.int64)
    return x, masks, labels


def _loss_terms(out, masks, labels, lam, weights):
    terms = {
        "L_m": L.mutual_loss(out.seg_alpha_map, masks, lam * weights.lambda_m1, weights.lambda_m2),
        "L_c": L.classification_loss(out.cls_alpha, labels, lam * weights.lambda_c),
        "L_s": L.deep_supervision_loss(out.decoder_outputs, masks),
    }
    terms["total"] = L.total_loss(terms["L_m"], terms["L_c"], terms["L_s"], weights)
    return terms


def _param_groups(model, weight_decay):
    decay, no_decay = [], []
    for _, p in model.named_parameters():
        (decay if p.dim() > 1 else no_decay).append(p)
    return [{"params": decay, "weight_decay": weight_decay}, {"params": no_decay, "weight_decay": 0.0}]


@torch.no_grad()
def predict(model, x, batch_size=32):
    """Forward in eval mode; returns numpy predictions and uncertainties."""
    model.eval()
    cls, seg, uc, us = [], [], [], []
    for i in range(0, len(x), batch_size):
        xb = x[i : i + batch_size].contiguous(memory_format=torch.channels_last)
        out = model(xb)
        cls.append(out.cls_pred.numpy())
        seg.append(out.final_seg.numpy().astype(np.uint8))
        uc.append(out.cls_opinion.uncertainty.double().numpy())
        us.append(out.seg_uncertainty.double().mean(dim=(1, 2)).numpy())
    return np.concatenate(cls), np.concatenate(seg), np.concatenate(uc), np.concatenate(us)


def evaluate_model(model, samples, sigma=0.0, batch_size=32):
    x, masks, labels = stack_samples(samples, sigma)
    cls, seg, uc, us = predict(model, x, batch_size)
    return build_report(cls, labels.numpy(), list(seg), list(masks.numpy()), uc=uc, us=us, sigma=sigma)


def _selection_score(model, samples, x):
    cls, seg, _, _ = predict(model, x)
    acc = float(np.mean(cls == np.array([s.label for s in samples])))
    dice = [
        math.fsum(dice_score(p, s.mask, ids) for p, s in zip(seg, samples)) / len(samples)
        for ids in STRUCTURES.values()
    ]
    return (acc + sum(dice) / len(dice)) / 2


def _check_finite(terms, epoch):
    for name, value in terms.items():
        if not torch.isfinite(value):
            raise NumericalError(f"epoch {epoch}: loss term {name} is {value.item()}", epoch=epoch, term=name)


def _check_gradients(model, epoch):
    """Every parameter reached by backprop must have a finite gradient.

    Parameters outside the loss graph (the reliable-mask conv in MD-only mode)
    have no gradient and are skipped.
    """
    if all(p.grad is None for p in model.parameters()):
        raise NumericalError(f"epoch {epoch}: no gradients reached the model", epoch=epoch, term="total")
    for name, p in model.named_parameters():
        if p.grad is not None and not bool(torch.isfinite(p.grad).all()):
            raise NumericalError(f"epoch {epoch}: non-finite gradient for {name}", epoch=epoch, term=name)


def report_row(report):
    return {
        "sigma": report.sigma,
        "ACC": report.acc,
        "F1": report.f1,
        "DI_disc": report.dice_per_class["disc"],
        "ASSD_disc": report.assd_per_class["disc"],
        "DI_cup": report.dice_per_class["cup"],
        "ASSD_cup": report.assd_per_class["cup"],
        "mean_Uc": report.mean_uc,
        "mean_Us": report.mean_us,
    }


# ---------------------------------------------------------------- train


def train(cfg=RunConfig(), data=None):
    """Fit the model for ``cfg.epochs`` epochs and evaluate the best checkpoint.

    Writes ``best.ckpt``, ``loss_curves.csv``, ``metrics.csv``, ``run_record.json``
    and ``run_config.txt`` into ``cfg.out_dir``.
    """
    started = time.perf_counter()
    configure_threads(cfg.threads)
    os.makedirs(cfg.out_dir, exist_ok=True)
    config_text = dump_config(cfg)
    with open(os.path.join(cfg.out_dir, "run_config.txt"), "w", encoding="utf-8") as fh:
        fh.write(config_text)

    train_set, val_set, test_set = data if data is not None else make_dataset(cfg.data, cfg.data_workers)
    splits = dict(zip(SPLITS, (train_set, val_set, test_set)))
    x_tr, m_tr, y_tr = stack_samples(train_set)
    x_va, m_va, y_va = stack_samples(val_set) if val_set else (None, None, None)

    model = build_model(cfg.model_config(), seed=cfg.seed).to(memory_format=torch.channels_last)
    optimizer = torch.optim.AdamW(_param_groups(model, cfg.weight_decay), lr=cfg.lr)
    shuffler = torch.Generator().manual_seed(cfg.seed)
    ckpt_path = os.path.join(cfg.out_dir, CHECKPOINT_NAME)

    train_curves = {k: [] for k in CURVE_TERMS}
    val_curves = {k: [] for k in CURVE_TERMS}
    best_score, best_epoch = -math.inf, -1
    save_checkpoint(ckpt_path, model, cfg, meta={"epoch": -1})

    for epoch in range(cfg.epochs):
        lam = L.anneal(epoch, cfg.anneal)
        model.train()
        sums = {k: 0.0 for k in CURVE_TERMS}
        order = torch.randperm(len(train_set), generator=shuffler)
        n_batches = 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if len(idx) < 2:  # batch norm needs two samples
                continue
            xb = x_tr[idx].contiguous(memory_format=torch.channels_last)
            try:
                terms = _loss_terms(model(xb), m_tr[idx], y_tr[idx], lam, cfg.weights)
            except InvalidInputError as exc:
                raise NumericalError(f"epoch {epoch}: {exc}", epoch=epoch, term="evidence") from exc
            _check_finite(terms, epoch)
            optimizer.zero_grad(set_to_none=True)
            terms["total"].backward()
            if epoch == 0 and n_batches == 0:
                _check_gradients(model, epoch)
            optimizer.step()
            for k in CURVE_TERMS:
                sums[k] += terms[k].item()
            n_batches += 1
        for k in CURVE_TERMS:
            train_curves[k].append(sums[k] / max(n_batches, 1))

        if val_set:
            model.eval()
            with torch.no_grad():
                vsums = {k: 0.0 for k in CURVE_TERMS}
                nb = 0
                for start in range(0, len(val_set), 32):
                    sl = slice(start, start + 32)
                    out = model(x_va[sl].contiguous(memory_format=torch.channels_last))
                    terms = _loss_terms(out, m_va[sl], y_va[sl], lam, cfg.weights)
                    for k in CURVE_TERMS:
                        vsums[k] += terms[k].item()
                    nb += 1
            for k in CURVE_TERMS:
                val_curves[k].append(vsums[k] / nb)
            score = _selection_score(model, val_set, x_va)
        else:
            score = -train_curves["total"][-1]
        if score > best_score:
            best_score, best_epoch = score, epoch
            save_checkpoint(ckpt_path, model, cfg, meta={"epoch": epoch, "selection_score": score})
        log.info(
            "epoch %d/%d  train %.4f  val %s  score %.4f",
            epoch + 1, cfg.epochs, train_curves["total"][-1],
            f"{val_curves['total'][-1]:.4f}" if val_set else "-", score,
        )

    best_model, _, _ = load_checkpoint(ckpt_path)
    metrics, rows = {}, []
    for split in ("val", "test"):
        if not splits[split]:
            continue
        metrics[split] = {}
        for sigma in cfg.eval_sigmas:
            report = evaluate_model(best_model, splits[split], sigma)
            metrics[split][repr(float(sigma))] = report.to_dict()
            rows.append({"split": split, **report_row(report)})

    write_table(
        os.path.join(cfg.out_dir, "loss_curves.csv"),
        ["epoch"] + [f"train_{k}" for k in CURVE_TERMS] + [f"val_{k}" for k in CURVE_TERMS],
        [
            {"epoch": e, **{f"train_{k}": train_curves[k][e] for k in CURVE_TERMS},
             **{f"val_{k}": (val_curves[k][e] if val_curves[k] else None) for k in CURVE_TERMS}}
            for e in range(len(train_curves["total"]))
        ],
        config_text,
    )
    write_table(os.path.join(cfg.out_dir, "metrics.csv"), ["split"] + SWEEP_COLUMNS, rows, config_text)
    record = RunRecord(
        config=config_text,
        train_curves=train_curves,
        val_curves=val_curves,
        metrics=metrics,
        best_epoch=best_epoch,
        checkpoint=ckpt_path,
        wall_clock=time.perf_counter() - started,
        split_hash={name: split_fingerprint(s) for name, s in splits.items()},
    )
    with open(os.path.join(cfg.out_dir, "run_record.json"), "w", encoding="utf-8") as fh:
        fh.write(record.to_json())
    return record


# ---------------------------------------------------------------- evaluation


def _split_samples(cfg, split):
    if split not in SPLITS:
        raise InvalidInputError(f"unknown split {split!r}; choose from {SPLITS}")
    return make_dataset(cfg.data, cfg.data_workers)[SPLITS.index(split)]


def evaluate(checkpoint, split="test", sigma=0.0):
    model, cfg, _ = load_checkpoint(checkpoint)
    configure_threads(cfg.threads)
    return evaluate_model(model, _split_samples(cfg, split), sigma)


def noise_sweep(checkpoint, sigmas=(0.0, 0.03, 0.05), split="test", out_csv=None):
    model, cfg, _ = load_checkpoint(checkpoint)
    configure_threads(cfg.threads)
    samples = _split_samples(cfg, split)
    rows = [report_row(evaluate_model(model, samples, float(s))) for s in sigmas]
    if out_csv:
        write_table(out_csv, SWEEP_COLUMNS, rows, dump_config(cfg))
    return rows


def ablate(cfg=RunConfig(), out_csv=None):
    """Train and test the four mutual-decoder / UN / UI combinations on one shared split."""
    data = make_dataset(cfg.data, cfg.data_workers)
    split_hash = split_fingerprint([s for split in data for s in split])
    rows = []
    for name, flags in ABLATION_GRID:
        run_cfg = cfg.replace(out_dir=os.path.join(cfg.out_dir, name.replace("+", "_")), **flags)
        log.info("ablation: training %s", name)
        record = train(run_cfg, data=data)
        test0 = record.metrics["test"][repr(0.0)]
        rows.append({
            "variant": name,
            "MD": True,
            "UN": flags["use_un"],
            "UI": flags["use_ui"],
            "proposed": name == "MD+UN+UI",
            "ACC": test0["acc"],
            "F1": test0["f1"],
            "DI_disc": test0["dice_per_class"]["disc"],
            "ASSD_disc": test0["assd_per_class"]["disc"],
            "DI_cup": test0["dice_per_class"]["cup"],
            "ASSD_cup": test0["assd_per_class"]["cup"],
            "mean_Uc": test0["mean_uc"],
            "mean_Us": test0["mean_us"],
            "split_hash": split_hash,
            "config_digest": config_digest(run_cfg),
            "checkpoint": record.checkpoint,
        })
    columns = list(rows[0])
    out_csv = out_csv or os.path.join(cfg.out_dir, "ablation.csv")
    write_table(out_csv, columns, rows, dump_config(cfg))
    return rows


# ---------------------------------------------------------------- export


def round_masses(masses, decimals=4):
    """Round opinion masses so the rounded values still sum to one (largest remainder)."""
    unit = 10**decimals
    scaled = np.asarray(masses, dtype=np.float64) * unit
    floors = np.floor(scaled)
    short = int(round(unit - floors.sum()))
    order = np.argsort(-(scaled - floors), kind="stable")
    floors[order[: max(short, 0)]] += 1
    return floors / unit


def _gray(values, scale):
    return np.clip(np.round(np.asarray(values, dtype=np.float64) * scale), 0, 255).astype(np.uint8)


def _normalise(channel):
    lo, hi = float(channel.min()), float(channel.max())
    return (channel - lo) / (hi - lo) if hi > lo else np.zeros_like(channel)


@torch.no_grad()
def export_maps(checkpoint, split="test", sigma=0.0, out_dir="maps", limit=None, dump_channels=False):
    """Write input, predicted mask and pixel uncertainty as PGM plus a per-sample CSV.

    Uncertainty maps are ``round(255 * U)``; masks are ``127 * class``. With
    ``dump_channels`` three random channels of ``f_c4`` and ``r_c`` are saved too.
    """
    model, cfg, _ = load_checkpoint(checkpoint)
    configure_threads(cfg.threads)
    samples = _split_samples(cfg, split)
    if limit is not None:
        samples = samples[:limit]
    os.makedirs(out_dir, exist_ok=True)
    config_text = dump_config(cfg)
    comment = f"sigma={sigma!r} config={config_digest(cfg)}"
    x, _, _ = stack_samples(samples, sigma)
    rng = torch.Generator().manual_seed(cfg.seed)
    channels = torch.randperm(cfg.model.widths[-1], generator=rng)[:3].tolist()
    rows, files = [], []
    model.eval()
    for i, sample in enumerate(samples):
        out = model(x[i : i + 1])
        stem = f"{split}_{i:05d}"
        paths = {
            "image": os.path.join(out_dir, stem + "_image.pgm"),
            "mask": os.path.join(out_dir, stem + "_pred.pgm"),
            "uncertainty": os.path.join(out_dir, stem + "_uncertainty.pgm"),
        }
        write_pgm(paths["image"], _gray(x[i, 0].numpy(), 255), comment)
        write_pgm(paths["mask"], out.final_seg[0].numpy().astype(np.uint8) * 127, comment)
        write_pgm(paths["uncertainty"], _gray(out.seg_uncertainty[0].numpy(), 255), comment)
        files += paths.values()
        if dump_channels:
            for tag, feat in (("fc4", out.cls_feature), ("rc", out.reliable_cls_feature)):
                for c in channels:
                    path = os.path.join(out_dir, f"{stem}_{tag}_ch{c:03d}.pgm")
                    write_pgm(path, _gray(_normalise(feat[0, c].numpy()), 255), comment)
                    files.append(path)
        masses = round_masses(
            list(out.cls_opinion.beliefs[0].double().numpy()) + [float(out.cls_opinion.uncertainty[0])]
        )
        rows.append({
            "filename": os.path.basename(paths["image"]),
            "true_label": sample.label,
            "pred_label": int(out.cls_pred[0]),
            "beliefs": " ".join(f"{b:.4f}" for b in masses[:-1]),
            "U_c": f"{masses[-1]:.4f}",
        })
    table = os.path.join(out_dir, "predictions.csv")
    write_table(table, ["filename", "true_label", "pred_label", "beliefs", "U_c"], rows, config_text)
    files.append(table)
    return files
