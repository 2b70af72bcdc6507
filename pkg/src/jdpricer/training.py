"""Training loops for the hybrid pricing model.

``train`` runs seeded minibatch epochs with a one-cycle learning rate, an
Adam-style adaptive step, hard clamping of the physics scalars after each
update, and early stopping that restores the best-validation snapshot.
``tune_coefficients`` searches the two loss weights with a tree-structured
Parzen estimator; ``pretrain_transfer`` trains on synthetic data first,
freezes the hidden layers, then fine-tunes on the (scarce) real set.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .analytical import DEFAULT_N_TERMS, paper_series
from .core import (CALL, PUT, Metrics, ParamBounds, QuoteDataset,
                   ValidationError, compute_metrics)
from .neuralnet import Batch, PinnModel, backward, clamp_physics, forward

DEEP_OTM_THRESHOLD = 10.0  # deep out-of-the-money filter keeps price < 10

HISTORY_COLUMNS = ("epoch", "train_loss", "val_loss",
                   "physics_loss", "data_loss", "lr")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 256
    max_lr: float = 1e-2
    pct_start: float = 0.3
    div_factor: float = 25.0
    final_div_factor: float = 1e4
    patience: int = 50
    min_delta: float = 0.0
    alpha: float = 1.0
    beta: float = 1.0
    seed: int = 42
    freeze_hidden: bool = False
    cycles: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.alpha < 0 or self.beta < 0:
            raise ValidationError("loss coefficients must be nonnegative")
        if self.patience < 1:
            raise ValidationError("patience must be >= 1")
        if self.batch_size < 1 or self.cycles < 1:
            raise ValidationError("batch_size and cycles must be >= 1")


@dataclass(frozen=True)
class TuneConfig:
    n_trials: int = 50
    epochs_per_trial: int = 100
    alpha_bounds: tuple[float, float] = (0.01, 1.0)
    beta_bounds: tuple[float, float] = (0.01, 1.0)
    gamma_split: float = 0.25
    n_startup: int = 10
    n_candidates: int = 64
    seed: int = 42

    def __post_init__(self):
        if not self.n_trials >= self.n_startup >= 2:
            raise ValidationError("need n_trials >= n_startup >= 2")
        if self.alpha_bounds[0] <= 0 or self.beta_bounds[0] <= 0:
            raise ValidationError("coefficient bounds must be positive")
        if not 0 < self.gamma_split < 1:
            raise ValidationError("gamma_split must lie in (0, 1)")


def onecycle_lr(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Cosine rise from max_lr/div_factor to max_lr over the first
    pct_start of a cycle, then cosine decay to max_lr/final_div_factor."""
    if not 0 <= step < total_steps:
        raise ValidationError("step must lie in [0, total_steps)")
    cycle_len = max(1, total_steps // cfg.cycles)
    s = step % cycle_len
    last = cycle_len - 1
    if last == 0:
        return cfg.max_lr
    peak = min(max(1, int(math.floor(cfg.pct_start * cycle_len))), last)
    lr_start = cfg.max_lr / cfg.div_factor
    lr_end = cfg.max_lr / cfg.final_div_factor
    if s <= peak:
        t = s / peak
        return lr_start + (cfg.max_lr - lr_start) * 0.5 * (1 - math.cos(math.pi * t))
    t = (s - peak) / (last - peak)
    return lr_end + (cfg.max_lr - lr_end) * 0.5 * (1 + math.cos(math.pi * t))


def compute_physics_refs(dataset: QuoteDataset, params,
                         n_terms: int = DEFAULT_N_TERMS,
                         cache_path=None) -> np.ndarray:
    """Frozen analytical European reference prices, one per dataset row,
    using each row's own rate. Optionally cached beside the dataset."""
    if cache_path is not None:
        try:
            return np.load(cache_path)
        except (OSError, ValueError):
            pass
    refs = np.empty(len(dataset))
    for kind in (CALL, PUT):
        mask = dataset.kind == kind
        if not np.any(mask):
            continue
        refs[mask] = paper_series(
            dataset.spot[mask], dataset.strike[mask], dataset.tau[mask],
            dataset.rate[mask], params.sigma, params.lam, params.mu_y,
            params.sigma_y, kind, n_terms)
    if cache_path is not None:
        np.save(cache_path, refs)
    return refs


def _adam_step(params, grads, state, lr, names,
               beta1=0.9, beta2=0.999, eps=1e-8):
    state["t"] += 1
    t = state["t"]
    for name in names:
        g = grads[name]
        m, v = state["m"][name], state["v"][name]
        m += (1 - beta1) * (g - m)
        v += (1 - beta2) * (g * g - v)
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        params[name] -= lr * m_hat / (np.sqrt(v_hat) + eps)


def _eval_losses(model, feats, targets, refs, alpha, beta, chunk=4096):
    """Eval-mode total/physics/data losses over a full array set."""
    n = len(targets)
    sq_d = 0.0
    sq_p = 0.0
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        batch = Batch(feats[lo:hi], targets[lo:hi])
        v_tilde, v_e, _ = forward(model, batch, training=False)
        sq_d += float(np.sum((v_tilde - targets[lo:hi]) ** 2))
        sq_p += float(np.sum((v_e - refs[lo:hi]) ** 2))
    l_d = sq_d / n
    l_p = sq_p / n
    return alpha * l_p + beta * l_d, l_p, l_d


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    physics_loss: float
    data_loss: float
    lr: float


@dataclass
class TrainResult:
    model: PinnModel
    history: list[EpochRecord] = field(default_factory=list)
    best_val_loss: float = math.inf
    best_epoch: int = 0
    stopped_early: bool = False
    diverged: bool = False

    @property
    def initial_val_loss(self) -> float:
        return self.history[0].val_loss


def train(model: PinnModel, data: QuoteDataset, v_e_ref: np.ndarray,
          cfg: TrainConfig, bounds: ParamBounds | None = None) -> TrainResult:
    """Train in place on the train split, validating on the val split.

    Epoch 0 of the history is the untouched model's evaluation, so a
    patience trip on epoch 1 returns the initial model. Physics scalars
    are clamped into ``bounds`` after every optimizer step. On a
    non-finite loss the run aborts and the best finite snapshot wins.
    """
    bounds = bounds or ParamBounds()
    v_e_ref = np.asarray(v_e_ref, dtype=float).ravel()
    if len(v_e_ref) != len(data):
        raise ValidationError("v_e_ref must align with the dataset rows")
    tr_mask = data.split == "train"
    va_mask = data.split == "val"
    if not (np.any(tr_mask) and np.any(va_mask)):
        raise ValidationError("dataset needs nonempty train and val splits")
    tr_feats = data.features()[tr_mask]
    tr_targets = data.price[tr_mask]
    tr_refs = v_e_ref[tr_mask]
    va_feats = data.features()[va_mask]
    va_targets = data.price[va_mask]
    va_refs = v_e_ref[va_mask]

    if not cfg.freeze_hidden:
        model.set_normalization(tr_feats)
    rng = np.random.default_rng(cfg.seed)
    names = model.trainable_names(cfg.freeze_hidden)
    state = {"t": 0,
             "m": {n: np.zeros_like(model.params[n]) for n in names},
             "v": {n: np.zeros_like(model.params[n]) for n in names}}

    n_train = len(tr_targets)
    n_batches = max(1, math.ceil(n_train / cfg.batch_size))
    total_steps = cfg.epochs * n_batches

    result = TrainResult(model=model)
    val0, lp0, ld0 = _eval_losses(model, va_feats, va_targets, va_refs,
                                  cfg.alpha, cfg.beta)
    tr0, _, _ = _eval_losses(model, tr_feats, tr_targets, tr_refs,
                             cfg.alpha, cfg.beta)
    result.history.append(EpochRecord(0, tr0, val0, lp0, ld0,
                                      onecycle_lr(0, total_steps, cfg)))
    best_val = val0
    best_snapshot = model.copy()
    best_epoch = 0
    wait = 0
    step = 0

    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n_train)
        sum_tot = sum_lp = sum_ld = 0.0
        lr = onecycle_lr(step, total_steps, cfg)
        finite = True
        for b in range(n_batches):
            idx = perm[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            batch = Batch(tr_feats[idx], tr_targets[idx])
            lr = onecycle_lr(step, total_steps, cfg)
            try:
                grads, (tot, l_p, l_d) = backward(
                    model, batch, tr_refs[idx], cfg.alpha, cfg.beta,
                    training=True, rng=rng)
            except ValidationError:
                # overflow in activations or gradients counts as divergence
                finite = False
                break
            if not math.isfinite(tot):
                finite = False
                break
            _adam_step(model.params, grads, state, lr, names)
            clamp_physics(model, bounds)
            w = len(idx)
            sum_tot += tot * w
            sum_lp += l_p * w
            sum_ld += l_d * w
            step += 1
        if not finite:
            result.diverged = True
            break
        train_loss = sum_tot / n_train
        val_loss, val_lp, val_ld = _eval_losses(
            model, va_feats, va_targets, va_refs, cfg.alpha, cfg.beta)
        result.history.append(EpochRecord(
            epoch, train_loss, val_loss, sum_lp / n_train, sum_ld / n_train, lr))
        if not math.isfinite(val_loss):
            result.diverged = True
            break
        if val_loss < best_val - cfg.min_delta:
            best_val = val_loss
            best_snapshot = model.copy()
            best_epoch = epoch
            wait = 0
        else:
            wait += 1
            if wait >= cfg.patience:
                result.stopped_early = True
                break

    model.params = best_snapshot.params
    model.rm1, model.rv1 = best_snapshot.rm1, best_snapshot.rv1
    model.rm2, model.rv2 = best_snapshot.rm2, best_snapshot.rv2
    model.feat_mean, model.feat_std = best_snapshot.feat_mean, best_snapshot.feat_std
    result.best_val_loss = best_val
    result.best_epoch = best_epoch
    return result


def write_history_csv(history: list[EpochRecord], path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HISTORY_COLUMNS)
        for rec in history:
            w.writerow([rec.epoch, repr(rec.train_loss), repr(rec.val_loss),
                        repr(rec.physics_loss), repr(rec.data_loss),
                        repr(rec.lr)])


@dataclass
class Trial:
    number: int
    alpha: float
    beta: float
    value: float


def tune_coefficients(data: QuoteDataset | None, model_factory, cfg: TuneConfig,
                      train_cfg: TrainConfig | None = None,
                      v_e_ref: np.ndarray | None = None,
                      objective=None) -> tuple[float, float, list[Trial]]:
    """TPE search over the loss coefficients (alpha, beta).

    The first ``n_startup`` trials sample uniformly inside the bounds;
    afterwards trials are split at the gamma_split quantile of validation
    loss into good/bad groups, per-coordinate Gaussian KDEs (Silverman
    bandwidth, log coordinates) are fit to each group, and the candidate
    with the best good/bad density ratio among ``n_candidates`` draws from
    the good model is evaluated next. Pass ``objective(alpha, beta)`` to
    bypass training (used by tests); otherwise each trial trains a fresh
    model for ``epochs_per_trial`` epochs and scores its best val loss.
    """
    if objective is None:
        if data is None or model_factory is None or v_e_ref is None:
            raise ValidationError(
                "tune_coefficients needs data, model_factory and v_e_ref "
                "unless an objective is supplied")
        base = train_cfg or TrainConfig()

        def objective(alpha, beta):
            trial_cfg = replace(base, alpha=alpha, beta=beta,
                                epochs=cfg.epochs_per_trial)
            return train(model_factory(), data, v_e_ref, trial_cfg).best_val_loss

    rng = np.random.default_rng(cfg.seed)
    lo = np.log([cfg.alpha_bounds[0], cfg.beta_bounds[0]])
    hi = np.log([cfg.alpha_bounds[1], cfg.beta_bounds[1]])
    points = np.empty((cfg.n_trials, 2))
    values = np.empty(cfg.n_trials)
    trials: list[Trial] = []

    for t in range(cfg.n_trials):
        if t < cfg.n_startup:
            alpha = rng.uniform(*cfg.alpha_bounds)
            beta = rng.uniform(*cfg.beta_bounds)
        else:
            alpha, beta = _tpe_propose(points[:t], values[:t], lo, hi, cfg, rng)
        value = float(objective(alpha, beta))
        points[t] = np.log([alpha, beta])
        values[t] = value
        trials.append(Trial(number=t, alpha=alpha, beta=beta, value=value))

    if not np.any(np.isfinite(values)):
        raise ValidationError("all tuning trials diverged")
    best = int(np.nanargmin(np.where(np.isfinite(values), values, np.nan)))
    return trials[best].alpha, trials[best].beta, trials


def _parzen_bandwidths(centers: np.ndarray, width: float) -> np.ndarray:
    """Per-kernel bandwidths scaled by the nearest-neighbour spacing.

    A global (Silverman-style) bandwidth collapses once the observations
    cluster, which traps the search; neighbour-scaled kernels keep lone
    points wide and dense clusters sharp. Clipped to [3%, 100%] of the
    domain width.
    """
    n = len(centers)
    if n == 1:
        return np.array([width])
    gaps = np.abs(centers[:, None] - centers[None, :])
    np.fill_diagonal(gaps, np.inf)
    return np.clip(1.5 * gaps.min(axis=1), 0.03 * width, width)


def _kde_logpdf(x: np.ndarray, centers: np.ndarray, bws: np.ndarray,
                width: float) -> np.ndarray:
    """Log density of the Parzen mixture, smoothed with one uniform
    pseudo-observation over the domain."""
    z = (x[:, None] - centers[None, :]) / bws[None, :]
    log_k = -0.5 * z**2 - np.log(bws * math.sqrt(2 * math.pi))[None, :]
    m = log_k.max(axis=1)
    dens = np.exp(m) * np.mean(np.exp(log_k - m[:, None]), axis=1)
    n = len(centers)
    return np.log((n * dens + 1.0 / width) / (n + 1))


def _tpe_propose(points, values, lo, hi, cfg: TuneConfig, rng):
    order = np.argsort(values, kind="stable")
    n_good = max(1, int(math.ceil(cfg.gamma_split * len(values))))
    good = points[order[:n_good]]
    bad = points[order[n_good:]]
    if len(bad) == 0:
        bad = points
    cand = np.empty((cfg.n_candidates, 2))
    score = np.zeros(cfg.n_candidates)
    n_uniform = cfg.n_candidates // 2
    for d in range(2):
        width = hi[d] - lo[d]
        bw_g = _parzen_bandwidths(good[:, d], width)
        bw_b = _parzen_bandwidths(bad[:, d], width)
        pick = rng.integers(0, len(good), size=cfg.n_candidates)
        draw = good[pick, d] + bw_g[pick] * rng.standard_normal(cfg.n_candidates)
        # half the candidates come from the uniform prior, and out-of-domain
        # draws are redrawn uniformly rather than clipped (clipping piles an
        # atom onto the boundary that the ratio then keeps re-proposing)
        oob = (draw < lo[d]) | (draw > hi[d])
        draw[oob] = rng.uniform(lo[d], hi[d], size=int(oob.sum()))
        draw[:n_uniform] = rng.uniform(lo[d], hi[d], size=n_uniform)
        cand[:, d] = draw
        score += _kde_logpdf(cand[:, d], good[:, d], bw_g, width)
        score -= _kde_logpdf(cand[:, d], bad[:, d], bw_b, width)
    alpha, beta = np.exp(cand[int(np.argmax(score))])
    return float(alpha), float(beta)


def pretrain_transfer(synthetic: QuoteDataset, real: QuoteDataset,
                      ref_params, model: PinnModel,
                      pretrain_cfg: TrainConfig, finetune_cfg: TrainConfig,
                      bounds: ParamBounds | None = None
                      ) -> tuple[PinnModel, TrainResult, TrainResult]:
    """Two-stage transfer: train on synthetic data, freeze the hidden
    layers, then fine-tune on the real set. Returns the stage-2 model and
    both stage results (stage-2 history row 0 is the transferred model's
    starting validation loss)."""
    if len(synthetic) == 0 or len(real) == 0:
        raise ValidationError("both datasets must be nonempty")
    refs_syn = compute_physics_refs(synthetic, ref_params, model.n_terms)
    refs_real = compute_physics_refs(real, ref_params, model.n_terms)
    stage1 = train(model, synthetic, refs_syn, pretrain_cfg, bounds)
    fine_cfg = replace(finetune_cfg, freeze_hidden=True)
    stage2 = train(model, real, refs_real, fine_cfg, bounds)
    return model, stage1, stage2


def predict(model: PinnModel, data: QuoteDataset, chunk: int = 4096) -> np.ndarray:
    """Eval-mode hybrid prices for every row of ``data``."""
    feats = data.features()
    out = np.empty(len(data))
    for lo in range(0, len(data), chunk):
        hi = min(lo + chunk, len(data))
        batch = Batch(feats[lo:hi], np.zeros(hi - lo))
        out[lo:hi], _, _ = forward(model, batch, training=False)
    return out


def evaluate(model: PinnModel, data: QuoteDataset, split: str = "test",
             filter: str = "all") -> Metrics:
    """Metrics of the model on one split; ``filter='deep_otm'`` keeps only
    rows whose observed price is strictly below 10 currency units."""
    subset = data.by_split(split)
    if filter == "deep_otm":
        subset = subset.subset(subset.price < DEEP_OTM_THRESHOLD)
    elif filter != "all":
        raise ValidationError(f"unknown filter {filter!r}")
    if len(subset) == 0:
        raise ValidationError(f"split {split!r} is empty after filtering")
    return compute_metrics(predict(model, subset), subset.price)
