"""Hybrid American option pricing model.

The price is a learned convex mix of two parts:

    V~ = a * V~_E + (1 - a) * Pi^

where V~_E is the paper-variant analytical European price evaluated with
five trainable physics scalars (rate, sigma, lam, mu_y, sigma_y) and Pi^
is a feedforward premium network (4 -> 128 -> 128 -> 1, batch norm + ReLU
+ dropout 0.3 on the hidden layers, Softplus head so the premium is never
negative). The mixing weight a is the sigmoid of a trainable logit.

Gradients: exact reverse-mode for every network parameter and the mixing
logit; central finite differences (relative step 1e-5) for the five
physics scalars, which only enter through the analytical series.

Physics mode "bs" pins lam to zero inside the series and freezes the
three jump scalars, reducing V~_E to plain Black-Scholes.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field

import numpy as np

from .analytical import DEFAULT_N_TERMS, paper_series
from .core import CALL, PUT, MertonParams, ParamBounds, ValidationError

MODEL_FORMAT_VERSION = 1
HIDDEN = 128
BN_EPS = 1e-5
FD_REL_STEP = 1e-5

PHYS_NAMES = ("rate", "sigma", "lam", "mu_y", "sigma_y")
_JUMP_SLOTS = (2, 3, 4)  # lam, mu_y, sigma_y: frozen in "bs" mode
HIDDEN_PARAMS = ("w1", "b1", "gamma1", "beta1", "w2", "b2", "gamma2", "beta2")


@dataclass
class Batch:
    """Feature rows (S, K, T, r) and observed prices."""

    features: np.ndarray   # [n, 4]
    targets: np.ndarray    # [n]

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float).ravel()
        if self.features.ndim != 2 or self.features.shape[1] != 4:
            raise ValidationError("features must be [n, 4] = (S, K, T, r)")
        if self.features.shape[0] != self.targets.shape[0] or len(self.targets) < 1:
            raise ValidationError("need n >= 1 rows with matching targets")
        if not (np.all(np.isfinite(self.features))
                and np.all(np.isfinite(self.targets))):
            raise ValidationError("batch contains non-finite values")
        if np.any(self.features[:, 2] <= 0):
            raise ValidationError("tau must be positive for the pricing series")

    def __len__(self) -> int:
        return len(self.targets)


@dataclass
class PinnModel:
    kind: str
    physics_mode: str                       # "merton" | "bs"
    params: dict[str, np.ndarray]           # trainable parameters by name
    rm1: np.ndarray
    rv1: np.ndarray
    rm2: np.ndarray
    rv2: np.ndarray
    feat_mean: np.ndarray
    feat_std: np.ndarray
    dropout: float = 0.3
    bn_momentum: float = 0.1
    n_terms: int = DEFAULT_N_TERMS

    @classmethod
    def new(cls, kind: str, physics: MertonParams, rate: float,
            physics_mode: str = "merton", seed: int = 42,
            mix_logit: float = 2.0) -> "PinnModel":
        """Fresh model with He-initialised hidden layers and physics
        scalars seeded from calibrated parameters."""
        if kind not in (CALL, PUT):
            raise ValidationError(f"kind must be 'C' or 'P', got {kind!r}")
        if physics_mode not in ("merton", "bs"):
            raise ValidationError(f"unknown physics mode {physics_mode!r}")
        rng = np.random.default_rng(seed)
        params = {
            "w1": rng.normal(0.0, np.sqrt(2.0 / 4), size=(4, HIDDEN)),
            "b1": np.zeros(HIDDEN),
            "gamma1": np.ones(HIDDEN),
            "beta1": np.zeros(HIDDEN),
            "w2": rng.normal(0.0, np.sqrt(2.0 / HIDDEN), size=(HIDDEN, HIDDEN)),
            "b2": np.zeros(HIDDEN),
            "gamma2": np.ones(HIDDEN),
            "beta2": np.zeros(HIDDEN),
            "w3": rng.normal(0.0, np.sqrt(2.0 / HIDDEN), size=(HIDDEN, 1)),
            "b3": np.zeros(1),
            "mix_logit": np.array(float(mix_logit)),
            "phys": np.array([rate, physics.sigma, physics.lam,
                              physics.mu_y, physics.sigma_y]),
        }
        return cls(kind=kind, physics_mode=physics_mode, params=params,
                   rm1=np.zeros(HIDDEN), rv1=np.ones(HIDDEN),
                   rm2=np.zeros(HIDDEN), rv2=np.ones(HIDDEN),
                   feat_mean=np.zeros(4), feat_std=np.ones(4))

    def set_normalization(self, features: np.ndarray):
        """Store train-set feature mean/std used to standardise inputs."""
        feats = np.asarray(features, dtype=float)
        self.feat_mean = feats.mean(axis=0)
        self.feat_std = feats.std(axis=0) + 1e-8

    @property
    def mixing_weight(self) -> float:
        return float(_sigmoid(self.params["mix_logit"]))

    def physics_params(self) -> np.ndarray:
        """Effective (rate, sigma, lam, mu_y, sigma_y); lam is pinned to
        zero in BS mode."""
        p = self.params["phys"].copy()
        if self.physics_mode == "bs":
            p[2] = 0.0
        return p

    def trainable_names(self, freeze_hidden: bool = False) -> list[str]:
        names = [n for n in self.params if not freeze_hidden or n not in HIDDEN_PARAMS]
        return names

    def copy(self) -> "PinnModel":
        return PinnModel(
            kind=self.kind, physics_mode=self.physics_mode,
            params={k: v.copy() for k, v in self.params.items()},
            rm1=self.rm1.copy(), rv1=self.rv1.copy(),
            rm2=self.rm2.copy(), rv2=self.rv2.copy(),
            feat_mean=self.feat_mean.copy(), feat_std=self.feat_std.copy(),
            dropout=self.dropout, bn_momentum=self.bn_momentum,
            n_terms=self.n_terms)


def _sigmoid(x):
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-x)),
                    np.exp(x) / (1.0 + np.exp(x)))


def _softplus(x):
    return np.logaddexp(0.0, x)


def _check_finite(name: str, arr: np.ndarray):
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"non-finite activation in {name}")


def _physics_price(model: PinnModel, feats: np.ndarray,
                   phys: np.ndarray | None = None) -> np.ndarray:
    """Paper-variant series price per row using the trainable scalars;
    the row rate enters only as a network feature, not here."""
    p = model.physics_params() if phys is None else phys
    v = paper_series(feats[:, 0], feats[:, 1], feats[:, 2], p[0],
                     p[1], p[2], p[3], p[4], model.kind, model.n_terms)
    _check_finite("physics series", v)
    return v


def forward(model: PinnModel, batch: Batch, training: bool = False,
            rng: np.random.Generator | None = None, cache: dict | None = None):
    """Evaluate the hybrid model on a batch.

    Returns (v_tilde, v_e, premium). Training mode draws dropout masks
    from ``rng`` and advances the batch-norm running statistics; eval mode
    is a pure function of (model, batch). Pass a dict as ``cache`` to
    capture intermediates for the backward pass.
    """
    p = model.params
    feats = batch.features
    z = (feats - model.feat_mean) / model.feat_std
    _check_finite("standardised input", z)

    keep = 1.0 - model.dropout
    if training and model.dropout > 0.0:
        if rng is None:
            raise ValidationError("training-mode forward needs an rng for dropout")
        mask1 = (rng.random((len(batch), HIDDEN)) < keep) / keep
        mask2 = (rng.random((len(batch), HIDDEN)) < keep) / keep
    else:
        mask1 = mask2 = None

    h1 = z @ p["w1"] + p["b1"]
    _check_finite("linear1", h1)
    y1, bn1 = _bn_forward(h1, p["gamma1"], p["beta1"], model.rm1, model.rv1,
                          training, model.bn_momentum)
    r1 = np.maximum(y1, 0.0)
    d1 = r1 * mask1 if mask1 is not None else r1

    h2 = d1 @ p["w2"] + p["b2"]
    _check_finite("linear2", h2)
    y2, bn2 = _bn_forward(h2, p["gamma2"], p["beta2"], model.rm2, model.rv2,
                          training, model.bn_momentum)
    r2 = np.maximum(y2, 0.0)
    d2 = r2 * mask2 if mask2 is not None else r2

    z3 = (d2 @ p["w3"] + p["b3"]).ravel()
    _check_finite("linear3", z3)
    premium = _softplus(z3)

    v_e = _physics_price(model, feats)
    a = model.mixing_weight
    v_tilde = a * v_e + (1.0 - a) * premium

    if cache is not None:
        cache.update(z=z, mask1=mask1, mask2=mask2, h1=h1, bn1=bn1, y1=y1,
                     d1=d1, h2=h2, bn2=bn2, y2=y2, d2=d2, z3=z3,
                     premium=premium, v_e=v_e, a=a, v_tilde=v_tilde)
    return v_tilde, v_e, premium


def _bn_forward(h, gamma, beta, running_mean, running_var, training, momentum):
    if training:
        mean = h.mean(axis=0)
        var = h.var(axis=0)
        running_mean += momentum * (mean - running_mean)
        running_var += momentum * (var - running_var)
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (h - mean) * inv_std
    return gamma * xhat + beta, {"xhat": xhat, "inv_std": inv_std,
                                 "batch_stats": training}


def loss(model: PinnModel, batch: Batch, v_e_ref: np.ndarray,
         alpha: float, beta: float, training: bool = False,
         rng: np.random.Generator | None = None):
    """Total loss alpha * L_p + beta * L_d with its two components."""
    v_e_ref = np.asarray(v_e_ref, dtype=float).ravel()
    if v_e_ref.shape != batch.targets.shape:
        raise ValidationError("v_e_ref length must match the batch")
    v_tilde, v_e, _ = forward(model, batch, training=training, rng=rng)
    l_d = float(np.mean((v_tilde - batch.targets) ** 2))
    l_p = float(np.mean((v_e - v_e_ref) ** 2))
    return alpha * l_p + beta * l_d, l_p, l_d


def backward(model: PinnModel, batch: Batch, v_e_ref: np.ndarray,
             alpha: float, beta: float, training: bool = True,
             rng: np.random.Generator | None = None):
    """Gradients of the total loss for every trainable parameter.

    Network weights, batch-norm parameters and the mixing logit get exact
    reverse-mode gradients; the five physics scalars get central finite
    differences of the loss (the premium and mixing weight are held fixed,
    as they do not depend on the scalars). The dropout masks drawn for the
    forward pass are also the ones differentiated through.

    Returns (grads, (total, l_p, l_d)).
    """
    v_e_ref = np.asarray(v_e_ref, dtype=float).ravel()
    if v_e_ref.shape != batch.targets.shape:
        raise ValidationError("v_e_ref length must match the batch")
    p = model.params
    cache: dict = {}
    forward(model, batch, training=training, rng=rng, cache=cache)
    n = len(batch)
    a = cache["a"]
    v_e, premium, v_tilde = cache["v_e"], cache["premium"], cache["v_tilde"]

    resid_d = v_tilde - batch.targets
    resid_p = v_e - v_e_ref
    l_d = float(np.mean(resid_d**2))
    l_p = float(np.mean(resid_p**2))
    total = alpha * l_p + beta * l_d

    grads: dict[str, np.ndarray] = {}
    g_vt = 2.0 * beta * resid_d / n

    # mixing logit
    g_a = float(np.sum(g_vt * (v_e - premium)))
    grads["mix_logit"] = np.array(g_a * a * (1.0 - a))

    # premium network
    g_prem = g_vt * (1.0 - a)
    dz3 = (g_prem * _sigmoid(cache["z3"]))[:, None]
    grads["w3"] = cache["d2"].T @ dz3
    grads["b3"] = dz3.sum(axis=0)
    g_d2 = dz3 @ p["w3"].T
    if cache["mask2"] is not None:
        g_d2 = g_d2 * cache["mask2"]
    g_y2 = g_d2 * (cache["y2"] > 0.0)
    g_h2, grads["gamma2"], grads["beta2"] = _bn_backward(
        g_y2, p["gamma2"], cache["bn2"])
    grads["w2"] = cache["d1"].T @ g_h2
    grads["b2"] = g_h2.sum(axis=0)
    g_d1 = g_h2 @ p["w2"].T
    if cache["mask1"] is not None:
        g_d1 = g_d1 * cache["mask1"]
    g_y1 = g_d1 * (cache["y1"] > 0.0)
    g_h1, grads["gamma1"], grads["beta1"] = _bn_backward(
        g_y1, p["gamma1"], cache["bn1"])
    grads["w1"] = cache["z"].T @ g_h1
    grads["b1"] = g_h1.sum(axis=0)

    # physics scalars by central differences of the loss
    grads["phys"] = np.zeros(5)
    phys = model.physics_params()
    frozen = set(_JUMP_SLOTS) if model.physics_mode == "bs" else set()
    targets = batch.targets
    for slot in range(5):
        if slot in frozen:
            continue
        h = FD_REL_STEP * max(abs(phys[slot]), 1.0)
        lo, hi = phys.copy(), phys.copy()
        lo[slot] -= h
        hi[slot] += h
        f_hi = _loss_of_series(model, batch, hi, a, premium, targets,
                               v_e_ref, alpha, beta)
        f_lo = _loss_of_series(model, batch, lo, a, premium, targets,
                               v_e_ref, alpha, beta)
        grads["phys"][slot] = (f_hi - f_lo) / (2.0 * h)

    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise ValidationError(f"non-finite gradient for parameter {name!r}")
    return grads, (total, l_p, l_d)


def _loss_of_series(model, batch, phys, a, premium, targets, v_e_ref,
                    alpha, beta) -> float:
    v_e = _physics_price(model, batch.features, phys=phys)
    l_p = float(np.mean((v_e - v_e_ref) ** 2))
    l_d = float(np.mean((a * v_e + (1.0 - a) * premium - targets) ** 2))
    return alpha * l_p + beta * l_d


def _bn_backward(g_out, gamma, bn):
    xhat, inv_std = bn["xhat"], bn["inv_std"]
    g_gamma = np.sum(g_out * xhat, axis=0)
    g_beta = np.sum(g_out, axis=0)
    g_xhat = g_out * gamma
    if bn["batch_stats"]:
        n = g_out.shape[0]
        g_h = (inv_std / n) * (n * g_xhat - g_xhat.sum(axis=0)
                               - xhat * np.sum(g_xhat * xhat, axis=0))
    else:
        g_h = g_xhat * inv_std
    return g_h, g_gamma, g_beta


def clamp_physics(model: PinnModel, bounds: ParamBounds) -> PinnModel:
    """Project the physics scalars into the bounds box, in place. The
    drift slot of the bounds constrains the trainable rate."""
    model.params["phys"][:] = bounds.clip(model.params["phys"])
    return model


def serialize(model: PinnModel) -> bytes:
    """Versioned JSON snapshot; floats round-trip exactly."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "architecture": {"inputs": 4, "hidden": HIDDEN, "layers": 2},
        "kind": model.kind,
        "physics_mode": model.physics_mode,
        "dropout": model.dropout,
        "bn_momentum": model.bn_momentum,
        "n_terms": model.n_terms,
        "params": {k: v.ravel().tolist() for k, v in model.params.items()},
        "shapes": {k: list(v.shape) for k, v in model.params.items()},
        "running": {"rm1": model.rm1.tolist(), "rv1": model.rv1.tolist(),
                    "rm2": model.rm2.tolist(), "rv2": model.rv2.tolist()},
        "normalization": {"mean": model.feat_mean.tolist(),
                          "std": model.feat_std.tolist()},
    }
    payload = json.dumps(doc).encode()
    return payload + b"\n#crc:" + format(zlib.crc32(payload), "08x").encode()


def deserialize(blob: bytes) -> PinnModel:
    try:
        payload, crc = blob.rsplit(b"\n#crc:", 1)
        if format(zlib.crc32(payload), "08x").encode() != crc.strip():
            raise ValueError("checksum mismatch")
        doc = json.loads(payload)
    except (ValueError, json.JSONDecodeError) as exc:
        raise ValidationError(f"corrupt model payload: {exc}") from None
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValidationError(
            f"unsupported model format {version!r}, expected {MODEL_FORMAT_VERSION}")
    params = {k: np.array(v, dtype=float).reshape(doc["shapes"][k])
              for k, v in doc["params"].items()}
    params["mix_logit"] = params["mix_logit"].reshape(())
    run = doc["running"]
    norm = doc["normalization"]
    return PinnModel(
        kind=doc["kind"], physics_mode=doc["physics_mode"], params=params,
        rm1=np.array(run["rm1"]), rv1=np.array(run["rv1"]),
        rm2=np.array(run["rm2"]), rv2=np.array(run["rv2"]),
        feat_mean=np.array(norm["mean"]), feat_std=np.array(norm["std"]),
        dropout=doc["dropout"], bn_momentum=doc["bn_momentum"],
        n_terms=doc["n_terms"])
