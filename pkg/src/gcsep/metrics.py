"""SNR training objective, SI-SDR evaluation metric, permutation-invariant loss.

Both ratios carry an eps-cap inside the log so that they stay within about
+-80 dB: perfect reconstruction gives 10*log10(1/eps) instead of infinity.
"""
from __future__ import annotations

from itertools import permutations

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError
from .tensor import Tensor

EPS = 1e-8
_DB = 10.0 / np.log(10.0)


def _check_pair(est: np.ndarray, ref: np.ndarray):
    if est.shape != ref.shape:
        raise DimensionError(f"estimate {est.shape} and reference {ref.shape} differ")


def snr_db(est, ref, eps: float = EPS) -> float:
    """10*log10(|ref|^2 / (|ref - est|^2 + eps*|ref|^2))."""
    est, ref = np.asarray(est, np.float64), np.asarray(ref, np.float64)
    _check_pair(est, ref)
    power = np.sum(ref * ref)
    if power == 0:
        raise ContractError("SNR needs a nonzero reference")
    err = np.sum((ref - est) ** 2)
    return float(10 * np.log10(power / (err + eps * power)))


def si_sdr_db(est, ref, eps: float = EPS) -> float:
    """Scale-invariant SDR of zero-mean signals.

    The target is the projection of ``est`` on ``ref``. Both terms get
    ``eps*|est|^2``, so an orthogonal estimate bottoms out near -80 dB.
    """
    est, ref = np.asarray(est, np.float64), np.asarray(ref, np.float64)
    _check_pair(est, ref)
    est = est - est.mean()
    ref = ref - ref.mean()
    ref_power = np.sum(ref * ref)
    est_power = np.sum(est * est)
    if ref_power == 0 or est_power == 0:
        raise ContractError("SI-SDR needs nonzero (after mean removal) signals")
    target = (np.dot(est, ref) / ref_power) * ref
    noise = est - target
    floor = eps * est_power
    return float(10 * np.log10((np.sum(target * target) + floor) /
                               (np.sum(noise * noise) + floor)))


def best_permutation(scores: np.ndarray) -> tuple[tuple[int, ...], float]:
    """Permutation of estimates maximizing the mean of ``scores[est, ref]``.

    Ties go to the earliest permutation in lexicographic order (identity first).
    """
    n = scores.shape[0]
    best, best_val = None, -np.inf
    for perm in permutations(range(n)):
        val = float(np.mean([scores[perm[j], j] for j in range(n)]))
        if val > best_val:
            best, best_val = perm, val
    return best, best_val


def pit_si_sdr(estimates, references) -> dict:
    """Best-permutation SI-SDR of ``[n_spk, L]`` estimates against references."""
    estimates = np.asarray(estimates, np.float64)
    references = np.asarray(references, np.float64)
    _check_pair(estimates, references)
    n = estimates.shape[0]
    scores = np.array([[si_sdr_db(estimates[i], references[j]) for j in range(n)]
                       for i in range(n)])
    perm, mean = best_permutation(scores)
    per_source = [float(scores[perm[j], j]) for j in range(n)]
    return {"permutation": perm, "per_source": per_source, "mean": mean}


def snr_tensor(est: Tensor, ref: np.ndarray, eps: float = EPS) -> Tensor:
    """Differentiable SNR in dB over the last axis; ``ref`` is a constant."""
    ref = np.asarray(ref, dtype=est.data.dtype)
    if est.shape != ref.shape:
        raise DimensionError(f"estimate {est.shape} and reference {ref.shape} differ")
    power = np.sum(ref.astype(np.float64) ** 2, axis=-1)
    if np.any(power == 0):
        raise ContractError("SNR needs a nonzero reference")
    diff = T.Tensor(ref) - est
    err = T.sum_(diff * diff, axis=-1)
    floor = T.Tensor((eps * power).astype(est.data.dtype))
    ratio = T.log(err + floor)
    return (T.Tensor(np.log(power).astype(est.data.dtype)) - ratio) * _DB


def pit_loss(estimates: Tensor, references) -> Tensor:
    """Negative best-permutation mean SNR, averaged over any batch axes.

    ``estimates`` is ``[..., 2, L]``. The gradient flows through the selected
    permutation only; ties keep the identity assignment.
    """
    references = np.asarray(references)
    if estimates.shape != references.shape:
        raise DimensionError(
            f"estimates {estimates.shape} and references {references.shape} differ")
    if estimates.shape[-2] != 2:
        raise ContractError("pit_loss is defined for two sources")
    straight = T.mean(snr_tensor(estimates, references), axis=-1)  # [...]
    swapped_ref = references[..., ::-1, :]
    swapped = T.mean(snr_tensor(estimates, swapped_ref), axis=-1)
    pick_swap = swapped.data > straight.data
    # select per item with constant 0/1 weights
    w_swap = T.Tensor(pick_swap.astype(estimates.data.dtype))
    w_keep = T.Tensor((~pick_swap).astype(estimates.data.dtype))
    best = straight * w_keep + swapped * w_swap
    return -T.mean(best)


def pit_loss_enumerated(estimates, references) -> float:
    """Reference implementation: enumerate every assignment explicitly."""
    estimates = np.asarray(estimates, np.float64)
    references = np.asarray(references, np.float64)
    n = estimates.shape[0]
    best = max(np.mean([snr_db(estimates[p[j]], references[j]) for j in range(n)])
               for p in permutations(range(n)))
    return -float(best)
