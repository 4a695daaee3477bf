"""Hybrid trainer: a population of hill climbers sharing one network.

Each epoch every climber runs the same mini-batch sequence from the current
survivor's weights. One climber follows stochastic gradient descent with
momentum; the others move by greedy random proposals or by probing fixed
random "detector" directions and repeating whatever move last worked. The
climber with the highest validation accuracy survives the epoch and seeds
the next population. Training stops when the best validation accuracy has
not improved for `patience` epochs or when `max_epochs` is reached.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .evaluation import epoch_split
from .network import evaluate_loss, forward, get_free_params, loss_and_grad, set_free_params

MODE_SGDM = "sgdm"
MODE_MOVEMENT = "random_movement"
MODE_DETECTION = "random_detection"
_RANDOM_MODES = (MODE_MOVEMENT, MODE_DETECTION)

PRESETS = {
    "googlenet-like": dict(learning_rate=1e-3, max_epochs=60, iters_per_epoch=6),
    "inception-resnet-v2-like": dict(learning_rate=7e-4, max_epochs=100, iters_per_epoch=6),
    "vgg19-like": dict(learning_rate=1e-4, max_epochs=30, iters_per_epoch=6),
    "densenet201-like": dict(learning_rate=1e-3, max_epochs=30, iters_per_epoch=6),
    "nasnet-like": dict(learning_rate=1e-3, max_epochs=20, iters_per_epoch=22),
}


@dataclass
class ClimberConfig:
    population: int = 5
    epsilon: float = 1e-4
    step_sigma: float = 0.02
    num_detectors: int = 8
    probe_step: float = 0.01
    momentum: float = 0.9
    learning_rate: float = 1e-3
    batch_size: int = 64
    iters_per_epoch: int = 6
    max_epochs: int = 30
    patience: int | None = 3
    seed: int = 0

    def validate(self):
        if self.population < 1:
            raise ValueError("population must be at least 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.step_sigma <= 0 or self.probe_step <= 0:
            raise ValueError("step sizes must be positive")
        if self.num_detectors < 1:
            raise ValueError("num_detectors must be at least 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.iters_per_epoch < 1:
            raise ValueError("batch settings must be at least 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be at least 1 (or None)")


def preset_config(name: str, **overrides) -> ClimberConfig:
    """Named hyper-parameter presets; explicit overrides win."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r} (have {sorted(PRESETS)})")
    merged = dict(PRESETS[name])
    merged.update(overrides)
    return ClimberConfig(**merged)


@dataclass
class Climber:
    """One population member and its mode-specific state."""

    mode: str
    params: np.ndarray
    rng: np.random.Generator
    epsilon: float = 1e-4
    step_sigma: float = 0.02
    probe_step: float = 0.01
    velocity: np.ndarray | None = None
    last_move: np.ndarray | None = None
    detectors: np.ndarray | None = None
    last_loss: float = float("nan")
    last_accepted: bool = False
    last_detector_evals: int = 0
    skipped_steps: int = 0


@dataclass
class ClimberReport:
    climber_id: int
    mode: str
    val_accuracy: float
    val_loss: float
    survivor: bool
    skipped_steps: int


@dataclass
class EpochReport:
    epoch: int
    climbers: list
    survivor_id: int
    survivor_mode: str
    best_accuracy: float
    stopped: bool = False
    stop_reason: str = ""


class ArrayDataset:
    """In-memory dataset of model-ready feature rows (no augmentation)."""

    def __init__(self, features, labels):
        self.features = np.asarray(features, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=int)
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels must have equal length")

    def __len__(self):
        return self.labels.shape[0]

    def epoch_view(self, rng):
        return self

    def train_features(self, indices, rng):
        return self.features[indices]

    def eval_features(self, indices):
        return self.features[indices]


def _rms(vector) -> float:
    if vector.size == 0:
        return 1.0
    value = float(np.sqrt(np.mean(vector * vector)))
    return value if value > 0 else 1.0


def sgdm_step(c: Climber, grad, lr: float, mu: float) -> Climber:
    """v <- mu*v - lr*grad; params <- params + v. Non-finite gradients skip
    the step and bump the climber's skipped counter."""
    if c.mode != MODE_SGDM:
        raise ValueError("sgdm_step requires an sgdm climber")
    grad = np.asarray(grad, dtype=np.float64)
    if not np.isfinite(grad).all():
        c.skipped_steps += 1
        c.last_accepted = False
        return c
    if c.velocity is None:
        c.velocity = np.zeros_like(c.params)
    c.velocity = mu * c.velocity - lr * grad
    c.params = c.params + c.velocity
    c.last_accepted = True
    return c


def random_movement_step(c: Climber, batch_loss) -> Climber:
    """Propose a Gaussian move scaled to the parameter RMS; keep it only if
    the current-batch loss does not increase."""
    base = batch_loss(c.params)
    sigma = c.step_sigma * _rms(c.params)
    delta = c.rng.normal(0.0, sigma, size=c.params.size)
    candidate = c.params + delta
    cand_loss = batch_loss(candidate)
    if np.isfinite(cand_loss) and cand_loss <= base:
        c.params = candidate
        c.last_loss = float(cand_loss)
        c.last_accepted = True
    else:
        c.last_loss = float(base)
        c.last_accepted = False
    return c


def random_detection_step(c: Climber, batch_loss) -> Climber:
    """Repeat the previous move while it keeps paying off; otherwise probe
    detectors in random order and take the first direction whose improvement
    beats epsilon. If every detector fails, halve this climber's probe step
    and fall back to one random-movement proposal."""
    if c.mode != MODE_DETECTION:
        raise ValueError("random_detection_step requires a random_detection climber")
    c.last_detector_evals = 0
    base = batch_loss(c.params)

    if c.last_move is not None:
        candidate = c.params + c.last_move
        cand_loss = batch_loss(candidate)
        if np.isfinite(cand_loss) and base - cand_loss > c.epsilon:
            c.params = candidate
            c.last_loss = float(cand_loss)
            c.last_accepted = True
            return c

    step_len = c.probe_step * _rms(c.params)
    for i in c.rng.permutation(c.detectors.shape[0]):
        move = step_len * c.detectors[i]
        c.last_detector_evals += 1
        probe_loss = batch_loss(c.params + move)
        if np.isfinite(probe_loss) and base - probe_loss > c.epsilon:
            c.params = c.params + move
            c.last_move = move
            c.last_loss = float(probe_loss)
            c.last_accepted = True
            return c

    c.probe_step *= 0.5
    c.last_move = None
    before = c.params
    random_movement_step(c, batch_loss)
    if c.last_accepted:
        c.last_move = c.params - before
    return c


def _batch_plan(indices, iters, batch_size, rng):
    """Shared shuffled batch order; reshuffles whenever the pool runs out."""
    plan = []
    buf = np.zeros(0, dtype=int)
    while len(plan) < iters:
        if buf.size < batch_size:
            fresh = np.asarray(indices, dtype=int).copy()
            rng.shuffle(fresh)
            buf = np.concatenate([buf, fresh])
        plan.append(buf[:batch_size].copy())
        buf = buf[batch_size:]
    return plan


def _climb_one_epoch(c: Climber, plan, view, labels, cfg, net):
    for batch_idx in plan:
        x = view.train_features(batch_idx, c.rng)
        y = labels[batch_idx]
        if c.mode == MODE_SGDM:
            set_free_params(net, c.params)
            loss, grad = loss_and_grad(net, x, y)
            c.last_loss = loss
            sgdm_step(c, grad, cfg.learning_rate, cfg.momentum)
        else:
            def batch_loss(v):
                set_free_params(net, v)
                return evaluate_loss(net, x, y)

            if c.mode == MODE_MOVEMENT:
                random_movement_step(c, batch_loss)
            else:
                random_detection_step(c, batch_loss)


def _validate(net, params, features, labels):
    set_free_params(net, params)
    probs = forward(net, features)
    preds = probs.argmax(axis=1)
    acc = float(np.mean(preds == labels))
    loss = evaluate_loss(net, features, labels)
    return acc, loss


def run_epoch(pop, data, train_indices, val_indices, cfg, net, order_rng, epoch=0):
    """Run every climber over a shared batch order, then pick the survivor
    by validation accuracy (ties: lower loss, then lower climber id)."""
    if not pop:
        raise ValueError("population is empty")
    if sum(c.mode == MODE_SGDM for c in pop) != 1:
        raise ValueError("population must contain exactly one sgdm climber")
    train_indices = np.asarray(train_indices, dtype=int)
    val_indices = np.asarray(val_indices, dtype=int)
    if train_indices.size == 0 or val_indices.size == 0:
        raise ValueError("train and validation sets must be non-empty")

    plan = _batch_plan(train_indices, cfg.iters_per_epoch, cfg.batch_size, order_rng)
    val_x = data.eval_features(val_indices)
    val_y = data.labels[val_indices]

    results = []
    for c in pop:
        view = data.epoch_view(c.rng)
        _climb_one_epoch(c, plan, view, data.labels, cfg, net)
        acc, loss = _validate(net, c.params, val_x, val_y)
        results.append((acc, loss))

    survivor_id = min(
        range(len(pop)), key=lambda i: (-results[i][0], results[i][1], i)
    )
    reports = [
        ClimberReport(
            climber_id=i,
            mode=c.mode,
            val_accuracy=results[i][0],
            val_loss=results[i][1],
            survivor=(i == survivor_id),
            skipped_steps=c.skipped_steps,
        )
        for i, c in enumerate(pop)
    ]
    report = EpochReport(
        epoch=epoch,
        climbers=reports,
        survivor_id=survivor_id,
        survivor_mode=pop[survivor_id].mode,
        best_accuracy=results[survivor_id][0],
    )
    return pop[survivor_id], report


def _spawn_population(cfg, base_params, prev_survivor, seed_keys, mode_rng):
    pop = []
    n_free = base_params.size
    for i in range(cfg.population):
        rng = np.random.default_rng(seed_keys[i])
        mode = MODE_SGDM if i == 0 else _RANDOM_MODES[int(mode_rng.integers(2))]
        c = Climber(
            mode=mode,
            params=base_params.copy(),
            rng=rng,
            epsilon=cfg.epsilon,
            step_sigma=cfg.step_sigma,
            probe_step=cfg.probe_step,
        )
        if mode == MODE_SGDM:
            carry = (
                prev_survivor is not None
                and prev_survivor.mode == MODE_SGDM
                and prev_survivor.velocity is not None
            )
            c.velocity = prev_survivor.velocity.copy() if carry else np.zeros(n_free)
        elif mode == MODE_DETECTION:
            if n_free == 0:
                c.detectors = np.zeros((cfg.num_detectors, 0))
            else:
                d = rng.standard_normal((cfg.num_detectors, n_free))
                c.detectors = d / np.linalg.norm(d, axis=1, keepdims=True)
        pop.append(c)
    return pop


def train(net, data, cfg: ClimberConfig, aug=None):
    """Train the network on the dataset; returns (net, history).

    Each epoch re-splits the pool 80/20 into train/validation, spawns a
    fresh population around the current survivor's weights, runs it, and
    tracks the best validation accuracy ever seen. The returned network
    holds the best-ever survivor's parameters.
    """
    cfg.validate()
    labels = np.asarray(data.labels)
    if np.unique(labels).size < 2:
        raise ValueError("dataset must contain both classes")
    if aug is not None:
        if not hasattr(data, "with_augment"):
            raise ValueError("this dataset does not support augmentation")
        data = data.with_augment(aug)

    ss = np.random.SeedSequence(cfg.seed)
    pool = np.arange(labels.shape[0])
    survivor_params = get_free_params(net)
    best_params = survivor_params.copy()
    best_acc = -np.inf
    since_improved = 0
    prev_survivor = None
    history = []

    for epoch in range(cfg.max_epochs):
        keys = ss.spawn(cfg.population + 3)
        split_rng = np.random.default_rng(keys[0])
        order_rng = np.random.default_rng(keys[1])
        mode_rng = np.random.default_rng(keys[2])

        train_idx, val_idx = epoch_split(pool, 0.8, split_rng)
        pop = _spawn_population(cfg, survivor_params, prev_survivor, keys[3:], mode_rng)
        survivor, report = run_epoch(
            pop, data, train_idx, val_idx, cfg, net, order_rng, epoch=epoch
        )
        prev_survivor = survivor
        survivor_params = survivor.params

        acc = report.climbers[report.survivor_id].val_accuracy
        if acc > best_acc:
            best_acc = acc
            best_params = survivor.params.copy()
            since_improved = 0
        else:
            since_improved += 1
        report.best_accuracy = best_acc

        if cfg.patience is not None and since_improved >= cfg.patience:
            report.stopped = True
            report.stop_reason = "validation_plateau"
        elif epoch == cfg.max_epochs - 1:
            report.stopped = True
            report.stop_reason = "max_epochs"
        history.append(report)
        if report.stopped:
            break

    set_free_params(net, best_params)
    return net, history


def history_to_csv(history) -> str:
    """Six-column epoch history; the stop reason rides on a '#' comment."""
    lines = ["epoch,climber_id,mode,val_accuracy,val_loss,survivor_flag"]
    for rep in history:
        for c in rep.climbers:
            lines.append(
                f"{rep.epoch},{c.climber_id},{c.mode},"
                f"{c.val_accuracy:.6f},{c.val_loss:.6f},{int(c.survivor)}"
            )
    if history and history[-1].stopped:
        lines.append(f"# stopped: {history[-1].stop_reason}")
    return "\n".join(lines) + "\n"
