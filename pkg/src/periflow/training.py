"""End-to-end training: joint objective, fit loop, checkpoints, scoring.

The objective combines the flow negative log-likelihood on clean windows
(conditioned on the averaged clean/augmented representation) with the
consistency and orthogonality treatment losses:

    total = nll + alpha * similarity + beta * independence

Windows inside a batch are grouped by their selected period set so the
grid folding can run batched; results are scattered back to batch order,
which keeps the math identical to a window-at-a-time composition of the
module-level operations.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .causal import independence_loss, similarity_loss
from .factors import MinerParams, embed, extract_pyramid, init_miner
from .flow import FlowModel, condition, anomaly_score, init_flow, nll_loss
from .fusion import FusionParams, fuse, init_fusion
from .optim import ParamStore
from .series import MultivariateSeries, SplitSpec, Standardization, WindowBatch, \
    make_windows, standardize
from .spectral import discover_global_period, intervene, top_k_periods

CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, batch_index: int):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch_index}")
        self.epoch = epoch
        self.batch_index = batch_index


@dataclass
class TrainConfig:
    lr: float = 0.001
    epochs: int = 30
    batch_size: int = 32
    window_length: int = 60
    train_stride: int = 1
    alpha: float = 0.1
    beta: float = 0.1
    k_periods: int = 3
    n_factors: int = 4
    hidden: int = 32
    num_layers: int = 2
    num_blocks: int = 2
    sigma: float = 0.1
    k_h_frac: float = 0.25
    noise: str = "gaussian"
    seed: int = 0
    patience: int = 10
    context_radius: int = -1  # -1: use the mask period
    use_periodic_mask: bool = True  # False: fixed half/half split mask
    apply_standardization: bool = True

    def __post_init__(self):
        if self.lr <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("lr, epochs and batch_size must be positive")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("loss weights must be non-negative")
        if self.noise not in ("gaussian", "laplace"):
            raise ValueError(f"unknown noise type {self.noise!r}")


@dataclass
class ModelBundle:
    """Everything needed to score: parameter groups, period, input stats."""

    miner: MinerParams
    fusion: FusionParams
    flow: FlowModel
    global_period: int
    d_in: int
    config: TrainConfig
    stats: Standardization | None = None

    def named_params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        out.update(self.miner.named())
        out.update(self.fusion.named())
        out.update(self.flow.named())
        return out


def build_models(config: TrainConfig, d_in: int, global_period: int,
                 rng: np.random.Generator) -> ModelBundle:
    miner = init_miner(d_in, config.hidden, config.n_factors, rng)
    fusion = init_fusion(config.hidden, rng)
    half = int(np.ceil(config.window_length / 2))
    clamped = global_period if global_period < config.window_length else half
    mask_period = clamped if config.use_periodic_mask else half
    # the receptive field of the coupling nets always spans one global
    # period per side, so the half/half mask ablation changes the mask only
    radius = clamped if config.context_radius < 0 else config.context_radius
    flow = init_flow(d_in, config.hidden, config.n_factors, mask_period,
                     config.window_length, config.num_layers, config.num_blocks,
                     rng, context_radius=radius)
    return ModelBundle(miner, fusion, flow, global_period, d_in, config)


def make_store(bundle: ModelBundle) -> ParamStore:
    store = ParamStore()
    for name, tensor in bundle.named_params().items():
        store.register(name, tensor)
    return store


def encode_batch(windows: np.ndarray, bundle: ModelBundle):
    """Clean-path representation (B, N, D_h) for a stack of windows.

    Windows are grouped by their selected period set, processed per group,
    and scattered back to batch order. Returns the representation tensor
    and one diagnostics dict per window (periods, softmaxed amplitude
    weights, attention scores).
    """
    cfg = bundle.config
    b = windows.shape[0]
    h_np = windows @ bundle.miner.embed_w.data + bundle.miner.embed_b.data
    groups: dict[tuple, list[int]] = {}
    period_sets = {}
    for i in range(b):
        ps = top_k_periods(h_np[i], cfg.k_periods)
        key = ps.frequencies
        groups.setdefault(key, []).append(i)
        period_sets.setdefault(key, ps)

    parts = []
    order: list[int] = []
    diags: list[dict | None] = [None] * b
    n, dh = cfg.n_factors, cfg.hidden
    for key, idx in groups.items():
        ps = period_sets[key]
        h_group = embed(windows[idx], bundle.miner)
        pyramid = extract_pyramid(h_group, cfg.k_periods, bundle.miner, periods=ps)
        rep = fuse(pyramid, bundle.fusion)
        parts.append(ad.reshape(rep.values, (len(idx), n * dh)))
        for row, i in enumerate(idx):
            diags[i] = {
                "periods": ps.periods,
                "frequencies": ps.frequencies,
                "amp_weights": tuple(rep.amp_softmax.data[row]),
                "attention": tuple(rep.attention.data[row]),
            }
        order.extend(idx)

    stacked = parts[0] if len(parts) == 1 else ad.concat(parts, axis=0)
    if order != list(range(b)):
        perm = np.zeros((b, b))
        for j, orig in enumerate(order):
            perm[orig, j] = 1.0
        stacked = ad.matmul(Tensor(perm), stacked)
    return ad.reshape(stacked, (b, n, dh)), diags


def total_loss(windows: np.ndarray, bundle: ModelBundle,
               rng: np.random.Generator):
    """Joint objective on one batch; returns the scalar tensor and the
    component values (nll, similarity, independence) as floats."""
    cfg = bundle.config
    clean_rep, diags = encode_batch(windows, bundle)
    if cfg.sigma == 0.0:
        aug_rep = clean_rep
    else:
        augmented = np.stack([
            intervene(w, k_h_frac=cfg.k_h_frac, sigma=cfg.sigma,
                      noise=cfg.noise, rng=rng) for w in windows])
        aug_rep, _ = encode_batch(augmented, bundle)
    conditioning = (clean_rep + aug_rep) * 0.5
    l_sim = similarity_loss(clean_rep, aug_rep)
    l_ind = independence_loss(conditioning)
    h_c = condition(conditioning, bundle.flow)
    l_nf = nll_loss(windows, h_c, bundle.flow)

    total = l_nf
    if cfg.alpha != 0.0:
        total = total + l_sim * cfg.alpha
    if cfg.beta != 0.0:
        total = total + l_ind * cfg.beta
    components = {"nll": l_nf.item(), "similarity": l_sim.item(),
                  "independence": l_ind.item()}
    return total, components, diags


def _clean_nll(windows: np.ndarray, bundle: ModelBundle,
               batch_size: int = 256) -> float:
    """Deterministic NLL with clean-path conditioning (the scoring path)."""
    total, count = 0.0, 0
    for lo in range(0, windows.shape[0], batch_size):
        chunk = windows[lo:lo + batch_size]
        rep, _ = encode_batch(chunk, bundle)
        h_c = condition(rep, bundle.flow)
        total += nll_loss(chunk, h_c, bundle.flow).item() * chunk.shape[0]
        count += chunk.shape[0]
    return total / count


def evaluate_objective(windows: np.ndarray, bundle: ModelBundle,
                       rng: np.random.Generator, batch_size: int = 256) -> dict:
    """Loss components averaged over the given windows, without updates."""
    sums = {"nll": 0.0, "similarity": 0.0, "independence": 0.0}
    count = 0
    for lo in range(0, windows.shape[0], batch_size):
        chunk = windows[lo:lo + batch_size]
        _, comps, _ = total_loss(chunk, bundle, rng)
        for key in sums:
            sums[key] += comps[key] * chunk.shape[0]
        count += chunk.shape[0]
    return {key: sums[key] / count for key in sums}


def fit(train: WindowBatch, val: WindowBatch, config: TrainConfig,
        global_period: int, stats: Standardization | None = None,
        checkpoint_path=None):
    """Mini-batch Adam over shuffled windows with early stopping.

    Returns (bundle, history, store); the bundle holds the parameters of
    the best validation epoch. History row 0 is the pre-training state.
    """
    if train.count == 0 or val.count == 0:
        raise ValueError("fit needs non-empty train and validation batches")
    d_in = train.windows.shape[2]
    seeds = np.random.SeedSequence(config.seed).spawn(4)
    init_rng, shuffle_rng, noise_rng, eval_rng = map(np.random.default_rng, seeds)

    bundle = build_models(config, d_in, global_period, init_rng)
    bundle.stats = stats
    store = make_store(bundle)

    history: list[dict] = []
    row0 = evaluate_objective(train.windows, bundle, eval_rng)
    row0.update(epoch=0, val_nll=_clean_nll(val.windows, bundle))
    history.append(row0)

    best_val = row0["val_nll"]
    best_snap = store.snapshot()
    best_epoch = 0
    stale = 0

    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(train.count)
        sums = {"nll": 0.0, "similarity": 0.0, "independence": 0.0}
        seen = 0
        for bi, lo in enumerate(range(0, train.count, config.batch_size)):
            idx = order[lo:lo + config.batch_size]
            try:
                loss, comps, _ = total_loss(train.windows[idx], bundle, noise_rng)
                finite = np.isfinite(loss.item())
            except ad.NumericOverflow:
                finite = False
            if not finite:
                store.restore(best_snap)  # keep the last good parameters
                if checkpoint_path is not None:
                    save_checkpoint(checkpoint_path, bundle)
                raise TrainingDiverged(epoch, bi)
            store.zero_grad()
            loss.backward()
            store.adam_step(config.lr)
            for key in sums:
                sums[key] += comps[key] * len(idx)
            seen += len(idx)
        row = {key: sums[key] / seen for key in sums}
        row.update(epoch=epoch, val_nll=_clean_nll(val.windows, bundle))
        history.append(row)

        if row["val_nll"] < best_val:
            best_val = row["val_nll"]
            best_snap = store.snapshot()
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    store.restore(best_snap)
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, bundle)
    for row in history:
        row["best"] = 1 if row["epoch"] == best_epoch else 0
    return bundle, history, store


def score_windows(bundle: ModelBundle, windows: np.ndarray,
                  batch_size: int = 256):
    """Anomaly scores for standardized windows.

    Conditioning uses the clean path only, so scoring is deterministic.
    Returns (tau (B,), tau_t (B, T), diagnostics list).
    """
    taus, tau_ts, diags = [], [], []
    for lo in range(0, windows.shape[0], batch_size):
        chunk = windows[lo:lo + batch_size]
        rep, d = encode_batch(chunk, bundle)
        h_c = condition(rep, bundle.flow)
        tau, tau_t = anomaly_score(chunk, h_c, bundle.flow)
        taus.append(tau)
        tau_ts.append(tau_t)
        diags.extend(d)
    return np.concatenate(taus), np.concatenate(tau_ts), diags


def prepare_series(series: MultivariateSeries, config: TrainConfig,
                   split: SplitSpec = SplitSpec()):
    """Standardize (train statistics only), split chronologically, window,
    and discover the global period on the training split."""
    if config.apply_standardization:
        prepared, stats = standardize(series, split)
    else:
        prepared, stats = series, None
    train_s, val_s, test_s = prepared.split(split)
    global_period = discover_global_period(train_s)
    train_w = make_windows(train_s, config.window_length, config.train_stride)
    val_w = make_windows(val_s, config.window_length, config.train_stride)
    test_w = make_windows(test_s, config.window_length, 1)
    return {
        "train": train_w, "val": val_w, "test": test_w,
        "train_series": train_s, "val_series": val_s, "test_series": test_s,
        "stats": stats, "global_period": global_period,
    }


def history_to_csv(history: list[dict], path) -> None:
    cols = ["epoch", "nll", "similarity", "independence", "val_nll", "best"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for row in history:
            fh.write(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c])
                              for c in cols) + "\n")


def save_checkpoint(path, bundle: ModelBundle) -> None:
    """Versioned npz container: every parameter tensor under a named path,
    plus mask period, input statistics and the training configuration."""
    arrays = {f"param/{name}": t.data for name, t in bundle.named_params().items()}
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(bundle.config),
        "global_period": bundle.global_period,
        "mask_period": bundle.flow.mask.period,
        "d_in": bundle.d_in,
        "context_radius": bundle.flow.context_radius,
    }
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    if bundle.stats is not None:
        arrays["stats/mean"] = bundle.stats.mean
        arrays["stats/std"] = bundle.stats.std
    with open(path, "wb") as fh:  # keep the exact filename, no .npz suffixing
        np.savez(fh, **arrays)


def load_checkpoint(path) -> ModelBundle:
    """Rebuild the bundle; any shape mismatch fails loudly."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta["format_version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['format_version']}")
        config = TrainConfig(**meta["config"])
        rng = np.random.default_rng(0)
        bundle = build_models(config, meta["d_in"], meta["global_period"], rng)
        for name, tensor in bundle.named_params().items():
            key = f"param/{name}"
            if key not in data:
                raise ValueError(f"checkpoint missing parameter {name}")
            arr = data[key]
            if arr.shape != tensor.data.shape:
                raise ValueError(
                    f"checkpoint shape mismatch for {name}: "
                    f"{arr.shape} vs expected {tensor.data.shape}")
            tensor.data = arr.astype(np.float64)
        if "stats/mean" in data:
            bundle.stats = Standardization(data["stats/mean"].copy(),
                                           data["stats/std"].copy())
    return bundle
