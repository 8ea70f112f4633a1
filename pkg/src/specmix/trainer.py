"""Training orchestration: AN training, two-stage AP+SP training, end-to-end unmixing."""

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from specmix import eea as eea_mod
from specmix.diffcore import Adam, no_grad
from specmix.diffcore import tensor as T
from specmix.errors import ConfigError, TrainingDivergedError
from specmix.fsnet import AbundancePredictor, AttentionNeighborhood, SignaturePredictor
from specmix.geometry import pca_fit, simplex_volume
from specmix.io import save_checkpoint
from specmix.neighborhood import NeighborhoodSpec, neighbor_offsets, neighbor_table
from specmix.objectives import LossWeights, mse_loss, stage_loss

log = logging.getLogger(__name__)

PREDICT_CHUNK = 4096


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 400
    epochs_an: int = 50
    epochs_stage1: int = 300
    epochs_stage2: int = 100
    weights: LossWeights = field(default_factory=LossWeights)
    nbhd: NeighborhoodSpec = field(default_factory=NeighborhoodSpec)
    heads_an: int | None = None
    heads_ap: int | None = None
    heads_sp: int | None = None
    param_seed: int = 0
    shuffle_seed: int = 1
    eea_seed: int = 2

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        for name in ("epochs_an", "epochs_stage1", "epochs_stage2"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")


@dataclass
class TrainReport:
    an_loss: list = field(default_factory=list)
    stage1_loss: list = field(default_factory=list)
    stage2_loss: list = field(default_factory=list)
    stage2_volume: list = field(default_factory=list)
    batch_volume: list = field(default_factory=list)  # stage 2, one entry per batch
    batch_minvol: list = field(default_factory=list)  # unweighted min-vol term per batch
    control_volume: float | None = None
    timings: dict = field(default_factory=dict)

    def merge(self, other):
        for k, v in asdict(other).items():
            if isinstance(v, dict):
                self.timings.update(v)
            elif isinstance(v, list):
                if v:
                    setattr(self, k, v)
            elif v is not None:
                setattr(self, k, v)
        return self

    def to_json(self):
        return json.dumps(asdict(self), indent=2)


@dataclass
class UnmixResult:
    abundances: np.ndarray  # (M, N)
    signatures: np.ndarray  # (L, M)
    report: TrainReport
    ensemble: eea_mod.EndmemberEnsemble
    an: AttentionNeighborhood
    ap: AbundancePredictor
    sp: SignaturePredictor


def _batches(n, size, rng):
    """Shuffle without replacement; the last partial batch is kept."""
    order = rng.permutation(n)
    return [order[i : i + size] for i in range(0, n, size)]


def _checked(loss, stage, epoch, params, checkpoint_dir):
    value = float(loss.data)
    if math.isfinite(value):
        return value
    dump = None
    if checkpoint_dir is not None:
        dump = Path(checkpoint_dir) / "diverged.ckpt"
        save_checkpoint({k: p.data for k, p in params.items()}, dump)
    raise TrainingDivergedError(
        f"non-finite loss in {stage} at epoch {epoch + 1}; last good parameters in {dump}", dump
    )


def _model_state(*nets):
    params, meta = {}, {}
    for net in nets:
        params.update({k: p.data for k, p in net.named_parameters().items()})
        meta.update(net.meta())
        if isinstance(net, SignaturePredictor):
            params.update(net.state_groups())
    return params, meta


def _save(checkpoint_dir, name, *nets, **extra):
    if checkpoint_dir is None:
        return
    params, meta = _model_state(*nets)
    meta.update(extra)
    save_checkpoint(params, Path(checkpoint_dir) / name, meta=meta)


def context_pixels(an, pixels, table):
    """Run the AN over all pixels without recording a graph; returns (N, L)."""
    out = np.empty_like(pixels)
    with no_grad():
        for s in range(0, len(pixels), PREDICT_CHUNK):
            idx = np.arange(s, min(s + PREDICT_CHUNK, len(pixels)))
            out[idx] = an(pixels[idx], pixels[table[idx]]).data
    return out


def train_an(img, cfg, checkpoint_dir=None):
    """Train the attention neighborhood on MSE(context pixel, pixel); return context pixels (L x N)."""
    if img.n_pixels == 0:
        raise ConfigError("image has no pixels")
    pixels = np.ascontiguousarray(img.data.T)
    table = neighbor_table(img, neighbor_offsets(cfg.nbhd))
    an = AttentionNeighborhood(img.bands, cfg.heads_an)
    opt = Adam(an.parameters(), lr=cfg.lr)
    rng = np.random.default_rng([cfg.shuffle_seed, 0])
    report = TrainReport()
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs_an):
        total = 0.0
        for idx in _batches(img.n_pixels, cfg.batch_size, rng):
            y = pixels[idx]
            loss = mse_loss(an(y, pixels[table[idx]]), y)
            total += _checked(loss, "AN training", epoch, an.named_parameters(), checkpoint_dir) * len(idx)
            opt.zero_grad()
            loss.backward()
            opt.step()
        report.an_loss.append(total / img.n_pixels)
    report.timings["an_training"] = time.perf_counter() - t0
    ybar = context_pixels(an, pixels, table)
    _save(checkpoint_dir, "an.ckpt", an)
    return an, ybar.T.copy(), report


def _predict_abundances(ap, xbar):
    out = np.empty((len(xbar), ap.w2.shape[1]))
    with no_grad():
        for s in range(0, len(xbar), PREDICT_CHUNK):
            out[s : s + PREDICT_CHUNK] = ap(xbar[s : s + PREDICT_CHUNK]).data
    return out.T.copy()


def control_volume(sp, proj):
    """Simplex volume of the current SP output under ``proj``."""
    with no_grad():
        return simplex_volume(sp().data, proj)


def train_ap_sp(ybar, Y, ensemble, proj, cfg, checkpoint_dir=None, on_epoch=None):
    """Two-stage training of the abundance and signature predictors.

    Stage 1 updates the AP and the SP queries with the SP projections frozen at
    the identity. The SP volume at the end of stage 1 becomes the control
    volume. Stage 2 frees the projections and adds the min-volume term.
    ``on_epoch(stage, epoch, ap, sp)`` is called after every epoch.
    Returns ``(A_hat (M x N), S_hat (L x M), report, ap, sp)``.
    """
    L, N = Y.shape
    M = ensemble.M
    xbar = np.ascontiguousarray(ybar.T)
    target = np.ascontiguousarray(Y.T)
    rng = np.random.default_rng(cfg.param_seed)
    ap = AbundancePredictor(L, M, rng, cfg.heads_ap)
    sp = SignaturePredictor(ensemble.groups, rng, cfg.heads_sp)
    shuffle = np.random.default_rng([cfg.shuffle_seed, 1])
    report = TrainReport()

    def run_stage(stage, epochs, params, trace, v_t=None):
        opt = Adam(params, lr=cfg.lr)
        named = {**ap.named_parameters(), **sp.named_parameters()}
        for epoch in range(epochs):
            total = 0.0
            for idx in _batches(N, cfg.batch_size, shuffle):
                a_hat = ap(xbar[idx])
                s_hat = sp()
                y_hat = T.matmul(a_hat, T.transpose(s_hat))
                terms = {}
                loss = stage_loss(y_hat, target[idx], s_hat, cfg.weights, stage, v_t, proj, terms)
                total += _checked(loss, f"stage {stage}", epoch, named, checkpoint_dir) * len(idx)
                if stage == 2:
                    report.batch_volume.append(simplex_volume(s_hat.data, proj))
                    report.batch_minvol.append(terms["minvol"])
                opt.zero_grad()
                loss.backward()
                opt.step()
            trace.append(total / N)
            if stage == 2:
                report.stage2_volume.append(control_volume(sp, proj))
            if on_epoch is not None:
                on_epoch(stage, epoch, ap, sp)

    t0 = time.perf_counter()
    run_stage(1, cfg.epochs_stage1, ap.parameters() + [sp.omega], report.stage1_loss)
    report.timings["stage1"] = time.perf_counter() - t0
    v_t = control_volume(sp, proj)
    report.control_volume = v_t
    _save(checkpoint_dir, "stage1.ckpt", ap, sp, control_volume=v_t)

    t0 = time.perf_counter()
    if cfg.epochs_stage2 > 0:
        sp.expand_heads()
        params = ap.parameters() + [sp.omega] + sp.phi_parameters()
        run_stage(2, cfg.epochs_stage2, params, report.stage2_loss, v_t)
        _save(checkpoint_dir, "stage2.ckpt", ap, sp, control_volume=v_t)
    report.timings["stage2"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    A_hat = _predict_abundances(ap, xbar)
    report.timings["ap_prediction"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    with no_grad():
        S_hat = sp().data.copy()
    report.timings["sp_prediction"] = time.perf_counter() - t0
    return A_hat, S_hat, report, ap, sp


def unmix(img, n_endmembers, cfg, eeas=eea_mod.ALGORITHMS, checkpoint_dir=None):
    """EEAs -> aligned ensembles -> AN training -> two-stage AP+SP training."""
    if not eeas:
        raise ConfigError("at least one endmember extraction algorithm is required")
    if checkpoint_dir is not None:
        Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    sets = [eea_mod.extract(img.data, n_endmembers, name, seed=cfg.eea_seed) for name in eeas]
    ensemble = eea_mod.build_ensembles(sets, n_endmembers)
    proj = pca_fit(img.data, n_endmembers - 1)
    eea_time = time.perf_counter() - t0
    an, ybar, report = train_an(img, cfg, checkpoint_dir)
    A_hat, S_hat, rep2, ap, sp = train_ap_sp(ybar, img.data, ensemble, proj, cfg, checkpoint_dir)
    report.merge(rep2)
    report.timings["eea"] = eea_time
    _save(checkpoint_dir, "model.ckpt", an, ap, sp, control_volume=report.control_volume)
    log.info("unmixing finished: control volume %.4g", report.control_volume)
    return UnmixResult(A_hat, S_hat, report, ensemble, an, ap, sp)
