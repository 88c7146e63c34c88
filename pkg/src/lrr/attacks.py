"""Gradient attacks against the toy tracker.

All attacks operate on a search patch in [0,1], take a scalar loss
closure over a patch tensor, and respect an L-inf budget exactly. The
iterative variant mirrors the per-frame 10-step / 10-255 setup of
response-manipulation attacks; the incremental variant carries its
perturbation across frames and drifts the target, iterating 10 times
every 30 frames and 2 times elsewhere with a 0.3 budget.
"""

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nm
from .errors import DomainError
from .numerics import Tensor
from .tracker import patch_to_peak, response_map, tracker_loss


@dataclass(frozen=True)
class AttackBudget:
    eps: float
    steps: int
    step_size: float = None  # defaults to eps / 4
    period: int = 30         # incremental schedule: major step every `period`
    minor_steps: int = 2

    def __post_init__(self):
        if self.eps < 0 or self.steps < 0:
            raise DomainError("attack budget must be non-negative")

    @property
    def alpha(self):
        return self.eps / 4.0 if self.step_size is None else self.step_size


PGD_BUDGET = AttackBudget(eps=10 / 255, steps=10)
SPARK_BUDGET = AttackBudget(eps=0.3, steps=10, period=30, minor_steps=2)
FGSM_TRAIN_EPS = 8 / 255


@dataclass
class PerturbationState:
    """Perturbation carried across frames by the incremental attack."""
    delta: np.ndarray = None

    def get(self, shape):
        if self.delta is None or self.delta.shape != shape:
            return np.zeros(shape, dtype=np.float32)
        return self.delta


def project_linf(delta, eps):
    """Componentwise clip into the L-inf ball; inside points unchanged."""
    return np.clip(delta, -eps, eps)


def _patch_grad(patch, loss_fn):
    t = Tensor(patch, requires_grad=True)
    grads = nm.backward(loss_fn(t))
    return grads.get(t, np.zeros_like(patch))


def fgsm(patch, loss_fn, eps):
    """One-shot signed-gradient ascent of the loss, clipped to [0,1]."""
    if eps == 0:
        return patch.astype(np.float32, copy=True)
    g = _patch_grad(patch, loss_fn)
    return np.clip(patch + np.float32(eps) * np.sign(g), 0.0, 1.0)


def pgd_attack(patch, loss_fn, budget=PGD_BUDGET):
    """Iterative signed-gradient ascent with projection after every step."""
    x0 = patch.astype(np.float32)
    delta = np.zeros_like(x0)
    for _ in range(budget.steps):
        g = _patch_grad(np.clip(x0 + delta, 0.0, 1.0), loss_fn)
        delta = project_linf(delta + np.float32(budget.alpha) * np.sign(g), budget.eps)
        delta = np.clip(x0 + delta, 0.0, 1.0) - x0
    return np.clip(x0 + delta, 0.0, 1.0)


def spark_attack(patch, pstate, loss_fn, frame_idx, budget=SPARK_BUDGET):
    """Incremental targeted attack: descend the loss toward a drifted
    target, warm-starting from the carried perturbation."""
    x0 = patch.astype(np.float32)
    delta = pstate.get(x0.shape)
    steps = budget.steps if frame_idx % budget.period == 0 else budget.minor_steps
    for _ in range(steps):
        g = _patch_grad(np.clip(x0 + delta, 0.0, 1.0), loss_fn)
        delta = project_linf(delta - np.float32(budget.alpha) * np.sign(g), budget.eps)
        delta = np.clip(x0 + delta, 0.0, 1.0) - x0
    out = np.clip(x0 + delta, 0.0, 1.0)
    return out, PerturbationState(delta=delta)


# ------------------------------------------------------------ harness glue

def make_patch_loss(tracker_params, template_features, target_uv):
    """Tracker loss at a response position, as a closure over the patch."""

    def loss_fn(patch_t):
        resp = response_map(tracker_params, template_features, patch_t)
        return tracker_loss(resp, target_uv)

    return loss_fn


class Attacker:
    """Per-episode attacker interface used by the evaluation harness.

    Implementations receive the raw search patch plus the context needed
    to build a loss (tracker, template features, ground-truth position
    in patch coordinates) and return the perturbed patch. Query-based
    attacks can plug in here as well.
    """

    name = "none"

    def reset(self, rng):
        pass

    def __call__(self, patch, frame_idx, ctx):
        raise NotImplementedError


class NoAttack(Attacker):
    def __call__(self, patch, frame_idx, ctx):
        return patch


class FgsmAttacker(Attacker):
    name = "fgsm"

    def __init__(self, eps=FGSM_TRAIN_EPS):
        self.eps = eps

    def __call__(self, patch, frame_idx, ctx):
        loss = make_patch_loss(ctx["tracker_params"], ctx["template_features"],
                               ctx["gt_uv"])
        return fgsm(patch, loss, self.eps)


class PgdAttacker(Attacker):
    name = "pgd"

    def __init__(self, budget=PGD_BUDGET):
        self.budget = budget

    def __call__(self, patch, frame_idx, ctx):
        loss = make_patch_loss(ctx["tracker_params"], ctx["template_features"],
                               ctx["gt_uv"])
        return pgd_attack(patch, loss, self.budget)


class SparkAttacker(Attacker):
    name = "spark"

    def __init__(self, budget=SPARK_BUDGET, drift_per_frame=2.0):
        self.budget = budget
        self.drift_per_frame = drift_per_frame
        self.state = PerturbationState()
        self.direction = np.array([1.0, 1.0]) / np.sqrt(2.0)
        self._frames_seen = 0

    def reset(self, rng):
        self.state = PerturbationState()
        theta = rng.uniform(0, 2 * np.pi)
        self.direction = np.array([np.cos(theta), np.sin(theta)])
        self._frames_seen = 0

    def __call__(self, patch, frame_idx, ctx):
        self._frames_seen += 1
        drift = self.direction * self.drift_per_frame * self._frames_seen
        resp_shape = ctx["response_shape"]
        tpl = ctx["template_size"]
        gt_patch = ctx["gt_patch_xy"]
        target = patch_to_peak((gt_patch[0] + drift[0], gt_patch[1] + drift[1]),
                               tpl, resp_shape)
        loss = make_patch_loss(ctx["tracker_params"], ctx["template_features"], target)
        out, self.state = spark_attack(patch, self.state, loss, frame_idx, self.budget)
        return out


ATTACKERS = {
    "none": lambda: NoAttack(),
    "fgsm": lambda: FgsmAttacker(),
    "fgsm2": lambda: FgsmAttacker(eps=2 / 255),
    "pgd": lambda: PgdAttacker(),
    "spark": lambda: SparkAttacker(),
}
