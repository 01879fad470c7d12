"""Dictionary learning by alternating minimization.

Each training step infers sparse coefficients for a batch of point pairs
with the dictionary held fixed, then takes one gradient step on every
generator with the coefficients held fixed. The per-step health monitor
records the drop in the batch reconstruction term across the generator
update (positive for an effective step) together with the objective terms
and operator magnitudes, mirroring the failure checklist that guides
hyperparameter selection: magnitudes decaying to zero, coefficients all
zero, many negative-progress steps, or magnitudes exploding.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, DivergedError
from .inference import InferenceConfig, infer_batch
from .numerics import expm, expm_frechet, expm_stack
from .operators import OperatorDictionary, PointPair
from .rng import derive_seed, make_rng

_MAGNITUDE_LIMIT = 1e6


@dataclass(frozen=True)
class TrainerConfig:
    """Dictionary-training settings.

    ``latent_scale`` multiplies every latent vector once before training
    (entries near [-1, 1] keep inference well conditioned); record it in the
    model file so deployment-time inference applies the same scale.
    ``inference`` supplies the solver schedule; its zeta is overridden by
    the trainer's ``zeta``.
    """

    lr_psi: float = 1e-3
    epochs: int = 10
    batch_size: int = 250
    gamma: float = 2e-6
    zeta: float = 0.1
    init_variance_psi: float = 0.05
    latent_scale: float = 1.0
    seed: int = 0
    inference: InferenceConfig = field(default_factory=InferenceConfig)

    def __post_init__(self):
        if not (self.lr_psi >= 0):
            raise ValueError(f"lr_psi must be nonnegative, got {self.lr_psi}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")
        if not (self.latent_scale > 0):
            raise ValueError(f"latent_scale must be positive, got {self.latent_scale}")
        if self.init_variance_psi < 0:
            raise ValueError(
                f"init_variance_psi must be nonnegative, got {self.init_variance_psi}"
            )


@dataclass(frozen=True)
class TrainStepRecord:
    """Per-step objective terms, health value, and post-step magnitudes."""

    step: int
    objective: float
    recon: float
    frobenius: float
    l1: float
    e_psi_diff: float
    magnitudes: np.ndarray


@dataclass
class TrainLog:
    records: list[TrainStepRecord] = field(default_factory=list)

    def e_psi_diffs(self) -> np.ndarray:
        return np.array([r.e_psi_diff for r in self.records])

    def final_magnitudes(self) -> np.ndarray:
        return self.records[-1].magnitudes

    def csv_header(self) -> list[str]:
        m = len(self.records[0].magnitudes) if self.records else 0
        return [
            "step",
            "objective",
            "recon",
            "frobenius",
            "l1",
            "e_psi_diff",
            *[f"magnitude_{i}" for i in range(m)],
        ]

    def csv_rows(self) -> list[list]:
        return [
            [r.step, r.objective, r.recon, r.frobenius, r.l1, r.e_psi_diff,
             *r.magnitudes.tolist()]
            for r in self.records
        ]


@dataclass(frozen=True)
class HealthReport:
    """Failure-sign summary of a training log."""

    negative_e_psi_diff_fraction: float
    all_magnitudes_decayed: bool
    all_coefficients_zero: bool
    diverged: bool


def dictionary_gradient(dictionary: OperatorDictionary, c, z0, z1) -> np.ndarray:
    """Gradient of the objective with respect to each generator at fixed c.

    For operator m this is c_m L*(A, -r z0^T) + gamma Psi_m, with
    A = sum_j Psi_j c_j, r = z1 - expm(A) z0, and L* the adjoint of the
    expm Frechet derivative under the Frobenius inner product.
    """
    c = dictionary.coefficients(c)
    z0 = np.asarray(z0, dtype=float)
    z1 = np.asarray(z1, dtype=float)
    if z0.shape != (dictionary.dim,) or z1.shape != (dictionary.dim,):
        raise DimensionMismatch(
            f"points must have shape ({dictionary.dim},), got {z0.shape}, {z1.shape}"
        )
    a = dictionary.generator(c)
    r = z1 - expm(a) @ z0
    _, adj = expm_frechet(a.T, -np.outer(r, z0))
    return c[:, None, None] * adj[None] + dictionary.gamma * dictionary.psi


def _batch_recon(psi, coeffs, z0s, z1s) -> np.ndarray:
    """Per-pair reconstruction term (1/2)||z1 - expm(A(c)) z0||^2."""
    a = np.einsum("bm,mij->bij", coeffs, psi)
    expa = expm_stack(a)
    r = z1s - np.einsum("bij,bj->bi", expa, z0s)
    return 0.5 * np.einsum("bi,bi->b", r, r)


def _batch_dictionary_gradient(dictionary, coeffs, z0s, z1s) -> np.ndarray:
    """Mean over the batch of dictionary_gradient, computed stacked."""
    psi = dictionary.psi
    nb = coeffs.shape[0]
    d = dictionary.dim
    a = np.einsum("bm,mij->bij", coeffs, psi)
    expa = expm_stack(a)
    r = z1s - np.einsum("bij,bj->bi", expa, z0s)
    cotangent = -np.einsum("bi,bj->bij", r, z0s)
    blocks = np.zeros((nb, 2 * d, 2 * d))
    at = np.swapaxes(a, 1, 2)
    blocks[:, :d, :d] = at
    blocks[:, d:, d:] = at
    blocks[:, :d, d:] = cotangent
    adj = expm_stack(blocks)[:, :d, d:]
    smooth = np.einsum("bm,bij->mij", coeffs, adj) / nb
    return smooth + dictionary.gamma * psi


def train_dictionary(
    pairs: Sequence[PointPair], m: int, cfg: TrainerConfig = TrainerConfig()
) -> tuple[OperatorDictionary, TrainLog]:
    """Alternating minimization over a fixed pair list.

    Generators start from entrywise N(0, init_variance_psi); each batch runs
    coefficient inference per pair (position-derived seeds, so training is
    deterministic given pair order, config, and seed) followed by one
    batch-mean gradient step on every generator. Raises DivergedError when
    any operator magnitude exceeds 1e6 or goes non-finite.
    """
    if len(pairs) == 0:
        raise ValueError("need at least one training pair")
    d = pairs[0].dim
    for i, p in enumerate(pairs):
        if p.dim != d:
            raise DimensionMismatch(f"pair {i}: dim {p.dim} != expected {d}")
    if m < 1:
        raise ValueError(f"operator count must be >= 1, got {m}")

    s = cfg.latent_scale
    scaled = [PointPair(s * p.z0, s * p.z1) for p in pairs]
    z0_all = np.stack([p.z0 for p in scaled])
    z1_all = np.stack([p.z1 for p in scaled])

    rng = make_rng(cfg.seed, 0)
    psi = rng.normal(0.0, float(np.sqrt(cfg.init_variance_psi)), size=(m, d, d))
    icfg = replace(cfg.inference, zeta=cfg.zeta)

    log = TrainLog()
    step = 0
    n = len(scaled)
    for _epoch in range(cfg.epochs):
        for start in range(0, n, cfg.batch_size):
            idx = np.arange(start, min(start + cfg.batch_size, n))
            batch = [scaled[i] for i in idx]
            dictionary = OperatorDictionary(psi, cfg.gamma)
            reports = infer_batch(
                dictionary, batch, icfg, derive_seed(cfg.seed, 1, step)
            )
            coeffs = np.stack([r.coefficients for r in reports])
            recon_before = np.array([r.recon_error for r in reports])
            grad = _batch_dictionary_gradient(
                dictionary, coeffs, z0_all[idx], z1_all[idx]
            )
            psi_new = psi - cfg.lr_psi * grad
            recon_after = _batch_recon(psi_new, coeffs, z0_all[idx], z1_all[idx])
            magnitudes = np.linalg.norm(psi_new, axis=(1, 2))

            frob = 0.5 * cfg.gamma * float(np.sum(psi * psi))
            l1 = cfg.zeta * float(np.abs(coeffs).sum(axis=1).mean())
            recon_mean = float(recon_before.mean())
            log.records.append(
                TrainStepRecord(
                    step=step,
                    objective=recon_mean + frob + l1,
                    recon=recon_mean,
                    frobenius=frob,
                    l1=l1,
                    e_psi_diff=recon_mean - float(recon_after.mean()),
                    magnitudes=magnitudes,
                )
            )
            if not np.all(np.isfinite(psi_new)) or np.any(
                magnitudes > _MAGNITUDE_LIMIT
            ):
                raise DivergedError(
                    f"operator magnitudes diverged at step {step}: "
                    f"max {np.nanmax(magnitudes):.3e}"
                )
            psi = psi_new
            step += 1
    return OperatorDictionary(psi, cfg.gamma), log


def health_report(log: TrainLog, decay_threshold: float = 1e-8) -> HealthReport:
    """Failure-sign flags computed from a training log."""
    if not log.records:
        raise ValueError("health report requires a non-empty log")
    diffs = log.e_psi_diffs()
    final = log.final_magnitudes()
    all_mags = np.concatenate([r.magnitudes for r in log.records])
    objectives = np.array([r.objective for r in log.records])
    return HealthReport(
        negative_e_psi_diff_fraction=float(np.mean(diffs < 0)),
        all_magnitudes_decayed=bool(np.all(final < decay_threshold)),
        all_coefficients_zero=bool(all(r.l1 == 0.0 for r in log.records)),
        diverged=bool(
            np.any(~np.isfinite(all_mags))
            or np.any(all_mags > _MAGNITUDE_LIMIT)
            or np.any(~np.isfinite(objectives))
        ),
    )
