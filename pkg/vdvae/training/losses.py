"""Training objectives for the two KL phases."""
from __future__ import annotations

import numpy as np

from .. import autodiff as F
from ..autodiff import Tensor
from ..dist import DmolParams, ElboResult, GaussianParams, elbo, gaussian_kl, subpixel_count
from ..errors import ShapeError
from ..model import TopDownState
from .config import KLPhase


def kl_phase_loss(state: TopDownState, phase: KLPhase, normalizer: float = 1.0) -> Tensor:
    """Summed KL term used for gradients, divided by normalizer.

    STANDARD_PRIOR fits the posterior to N(0, I) and the prior to a detached
    posterior. The prior-fitting term enters as t - detach(t): it contributes
    gradients but no value, so the reported loss is the ELBO under a standard
    normal prior. TRUE_KL is KL(q || p). No step-dependent weighting in either.
    """
    total = None
    for record in state.records:
        if record.q is None:
            raise ShapeError(f"layer {record.index} has no posterior")
        if phase is KLPhase.STANDARD_PRIOR:
            standard = GaussianParams.standard_normal_like(record.q)
            prior_fit = F.sum(gaussian_kl(record.q.detach(), record.p))
            kl = F.sum(gaussian_kl(record.q, standard)) + (prior_fit - F.detach(prior_fit))
        else:
            kl = F.sum(record.kl if record.kl is not None else gaussian_kl(record.q, record.p))
        total = kl if total is None else total + kl
    if total is None:
        raise ShapeError("no stochastic layers")
    return F.scale(total, 1.0 / normalizer)


def training_loss(x: np.ndarray, state: TopDownState, dmol_params: DmolParams,
                  phase: KLPhase = KLPhase.TRUE_KL, check_finite: bool = True) -> tuple[Tensor, ElboResult]:
    """(loss to differentiate, ELBO report). The report always carries the true KL."""
    report = elbo(x, state, dmol_params, check_finite=check_finite)
    if phase is KLPhase.TRUE_KL:
        return report.loss, report
    normalizer = float(subpixel_count(x))
    return report.nll + kl_phase_loss(state, phase, normalizer), report
