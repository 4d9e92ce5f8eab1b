"""Random hyperparameter search over embedding, decoder and encoder sizes."""
from dataclasses import dataclass, replace

from ..numerics import Rng
from .loop import train

# embedding size m, decoder state |h_t|, encoder state |v_j| (per direction D)
SEARCH_RANGES = {"m": (300, 700), "H": (1000, 3000), "D": (100, 2100)}


@dataclass
class TrialResult:
    trial: int
    hyperparams: dict
    best_bleu: float
    updates: int
    result: object = None


def scale_ranges(ranges, factor):
    """Multiply every bound by ``factor`` (rounded, at least 1)."""
    if factor <= 0:
        raise ValueError(f"scale factor must be positive, got {factor}")
    return {k: (max(1, round(lo * factor)), max(1, round(hi * factor))) for k, (lo, hi) in ranges.items()}


def check_ranges(ranges):
    if not ranges:
        raise ValueError("no hyperparameter ranges given")
    for k, (lo, hi) in ranges.items():
        if lo > hi:
            raise ValueError(f"invalid range for {k}: lo={lo} > hi={hi}")
        if lo < 1:
            raise ValueError(f"invalid range for {k}: sizes must be >= 1")


def sample_hyperparams(rng, ranges):
    return {k: int(rng.integers(lo, hi)) for k, (lo, hi) in sorted(ranges.items())}


def random_search(config, ranges, trials, train_set, val_set, on_trial=None):
    """Train ``trials`` models with uniformly sampled sizes; best validation BLEU first."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    check_ranges(ranges)
    rng = Rng(config.seed)
    results = []
    for k in range(trials):
        hp = sample_hyperparams(rng, ranges)
        trial_seed = int(rng.integers(0, 2**31 - 1))
        res = train(replace(config, seed=trial_seed, **hp), train_set, val_set)
        tr = TrialResult(k, hp, res.best_bleu, res.updates, res)
        results.append(tr)
        if on_trial is not None:
            on_trial(tr)
    return sorted(results, key=lambda r: (-r.best_bleu, r.trial))
