"""Consistency and independence treatments over fused representations.

A window and its band-noise-augmented twin are encoded with shared
parameters; a cosine loss pulls the two representations together, their
average is the conditioning representation, and an orthogonality penalty
on its factor rows discourages redundant factors.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .factors import MinerParams, embed, extract_pyramid
from .fusion import FusionParams, fuse
from .spectral import intervene


@dataclass
class CausalBundle:
    clean: Tensor
    augmented: Tensor
    conditioning: Tensor
    similarity: Tensor
    independence: Tensor


def _as_batch(x) -> Tensor:
    t = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
    return ad.reshape(t, (1,) + t.shape) if t.ndim == 2 else t


def similarity_loss(a, b) -> Tensor:
    """1 - cosine similarity between flattened representations, averaged
    over the batch. Zero iff the two are positive scalar multiples."""
    at, bt = _as_batch(a), _as_batch(b)
    if at.shape != bt.shape:
        raise ValueError(f"similarity_loss: shapes differ, {at.shape} vs {bt.shape}")
    bsz = at.shape[0]
    flat_a = ad.reshape(at, (bsz, at.shape[1] * at.shape[2]))
    flat_b = ad.reshape(bt, (bsz, bt.shape[1] * bt.shape[2]))
    norm_a = np.sqrt(np.sum(flat_a.data ** 2, axis=1))
    norm_b = np.sqrt(np.sum(flat_b.data ** 2, axis=1))
    if np.any(norm_a < 1e-12) or np.any(norm_b < 1e-12):
        raise ValueError("similarity_loss: representation norm below 1e-12")
    dot = ad.tsum(flat_a * flat_b, axis=1)
    na = ad.sqrt(ad.tsum(flat_a * flat_a, axis=1))
    nb = ad.sqrt(ad.tsum(flat_b * flat_b, axis=1))
    cos = dot / (na * nb)
    return ad.tmean(Tensor(np.ones(bsz)) - cos)


def independence_loss(c) -> Tensor:
    """Squared Frobenius distance between the factor-row Gram matrix and
    the identity, averaged over the batch. Zero iff rows are orthonormal."""
    ct = _as_batch(c)
    bsz, n, _ = ct.shape
    gram = ad.bmm(ct, ad.transpose(ct, (0, 2, 1)))
    eye = Tensor(np.broadcast_to(np.eye(n), (bsz, n, n)).copy())
    diff = gram - eye
    return ad.tmean(ad.tsum(diff * diff, axis=(1, 2)))


def encode(x, miner: MinerParams, fusion_params: FusionParams, k: int,
           periods=None):
    """Embed, extract the period pyramid, and fuse. x is (T,D) or (B,T,D)."""
    h = embed(_as_batch(x), miner)
    pyramid = extract_pyramid(h, k, miner, periods=periods)
    return fuse(pyramid, fusion_params), pyramid


def causal_forward(x: np.ndarray, miner: MinerParams, fusion_params: FusionParams,
                   k: int, sigma: float, k_h_frac: float, noise: str,
                   rng: np.random.Generator) -> CausalBundle:
    """Clean and augmented encodings of one (T, D) window with shared
    parameters, plus both treatment losses.

    sigma == 0 short-circuits the augmentation so both paths are
    bitwise identical.
    """
    x = np.asarray(x, dtype=np.float64)
    clean_rep, _ = encode(x, miner, fusion_params, k)
    if sigma == 0.0:
        aug_rep = clean_rep
    else:
        x_aug = intervene(x, k_h_frac=k_h_frac, sigma=sigma, noise=noise, rng=rng)
        aug_rep, _ = encode(x_aug, miner, fusion_params, k)
    conditioning = (clean_rep.values + aug_rep.values) * 0.5
    sim = similarity_loss(clean_rep.values, aug_rep.values)
    ind = independence_loss(conditioning)
    return CausalBundle(clean_rep.values, aug_rep.values, conditioning, sim, ind)
