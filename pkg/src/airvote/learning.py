"""End-to-end distributed sign-vote training on synthetic tasks.

Every round, each user computes a minibatch gradient of its local loss,
sends only the componentwise signs, and the fusion center aggregates them
with a pluggable scheme (ideal majority, over-the-air superposition, or
cluster-cooperative relaying).  All users then apply the common update
``w <- w - eta * aggregate``, so the parameter step is exactly +-eta per
component.

The default task is two-blob logistic regression (convex, converges within
a few hundred rounds); a one-hidden-layer ReLU perceptron is available
behind the same interface, and a quadratic consensus task serves as a
stationary-point probe target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import CellConfig, path_loss, sample_distance, sample_rayleigh_amplitude
from .errors import ConfigError
from .relay import ClusterLayout, select_batch
from .rng import (
    SCOPE_AGG,
    SCOPE_CHANNEL,
    SCOPE_NOISE,
    SCOPE_PROBE,
    SCOPE_RELAY,
    SCOPE_ROUND,
    SCOPE_TASK,
    SCOPE_TIE,
    substream,
)
from .voting import sign_vector

METRIC_COLUMNS = ("round", "scheme", "train_loss", "test_acc", "mean_p_loc", "failure_fraction")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class LogisticModel:
    """Binary logistic regression with a bias term; labels are +-1."""

    def __init__(self, n_features: int):
        self.n_features = n_features
        self.dim = n_features + 1

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        return np.zeros(self.dim)

    def scores(self, w: np.ndarray, X: np.ndarray) -> np.ndarray:
        return X @ w[:-1] + w[-1]

    def loss(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        z = y * self.scores(w, X)
        return float(np.logaddexp(0.0, -z).mean())

    def grad(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        z = y * self.scores(w, X)
        coeff = -y * _sigmoid(-z) / X.shape[0]
        g = np.empty(self.dim)
        g[:-1] = X.T @ coeff
        g[-1] = coeff.sum()
        return g

    def accuracy(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        pred = np.where(self.scores(w, X) >= 0.0, 1.0, -1.0)
        return float((pred == y).mean())


class MlpModel:
    """One hidden ReLU layer of ``n_hidden`` units with a scalar output score."""

    def __init__(self, n_features: int, n_hidden: int = 64):
        self.n_features = n_features
        self.n_hidden = n_hidden
        self.dim = n_features * n_hidden + n_hidden + n_hidden + 1

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        w1 = rng.normal(0.0, math.sqrt(2.0 / self.n_features), (self.n_features, self.n_hidden))
        w2 = rng.normal(0.0, math.sqrt(1.0 / self.n_hidden), self.n_hidden)
        return np.concatenate([w1.ravel(), np.zeros(self.n_hidden), w2, np.zeros(1)])

    def _unpack(self, w: np.ndarray):
        f, h = self.n_features, self.n_hidden
        w1 = w[: f * h].reshape(f, h)
        b1 = w[f * h : f * h + h]
        w2 = w[f * h + h : f * h + 2 * h]
        b2 = w[-1]
        return w1, b1, w2, b2

    def scores(self, w: np.ndarray, X: np.ndarray) -> np.ndarray:
        w1, b1, w2, b2 = self._unpack(w)
        hidden = np.maximum(X @ w1 + b1, 0.0)
        return hidden @ w2 + b2

    def loss(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        z = y * self.scores(w, X)
        return float(np.logaddexp(0.0, -z).mean())

    def grad(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        w1, b1, w2, b2 = self._unpack(w)
        pre = X @ w1 + b1
        hidden = np.maximum(pre, 0.0)
        z = y * (hidden @ w2 + b2)
        dscore = -y * _sigmoid(-z) / X.shape[0]
        g_w2 = hidden.T @ dscore
        g_b2 = dscore.sum()
        dhidden = np.outer(dscore, w2) * (pre > 0.0)
        g_w1 = X.T @ dhidden
        g_b1 = dhidden.sum(axis=0)
        return np.concatenate([g_w1.ravel(), g_b1, g_w2, [g_b2]])

    def accuracy(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        pred = np.where(self.scores(w, X) >= 0.0, 1.0, -1.0)
        return float((pred == y).mean())


class QuadraticModel:
    """Mean squared distance to per-sample targets: f(w) = mean ||w - x||^2 / 2.

    The minibatch gradient is ``w - mean(targets)``; the global stationary
    point is the grand mean of all targets.  Used as a probe target where a
    classification accuracy is meaningless (it reports NaN).
    """

    def __init__(self, n_features: int):
        self.n_features = n_features
        self.dim = n_features

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        return np.zeros(self.dim)

    def loss(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        diff = w[None, :] - X
        return float(0.5 * (diff * diff).sum(axis=1).mean())

    def grad(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        return w - X.mean(axis=0)

    def accuracy(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        return float("nan")


@dataclass
class FederatedTask:
    """K disjoint user datasets, a shared test set, and the loss model."""

    model: object
    user_features: list
    user_labels: list
    test_features: np.ndarray
    test_labels: np.ndarray
    batch_size: int

    def __post_init__(self) -> None:
        if len(self.user_features) != len(self.user_labels) or not self.user_features:
            raise ConfigError("need matching, nonempty per-user feature/label lists")
        sizes = {len(x) for x in self.user_features}
        if self.batch_size < 1 or self.batch_size > min(sizes):
            raise ConfigError(
                f"batch size {self.batch_size} must lie in [1, {min(sizes)}]"
            )

    @property
    def num_users(self) -> int:
        return len(self.user_features)

    @property
    def dim(self) -> int:
        return self.model.dim

    def user_grad(self, k: int, w: np.ndarray, idx=None) -> np.ndarray:
        X, y = self.user_features[k], self.user_labels[k]
        if idx is not None:
            X, y = X[idx], y[idx]
        return self.model.grad(w, X, y)

    def user_loss(self, k: int, w: np.ndarray) -> float:
        return self.model.loss(w, self.user_features[k], self.user_labels[k])

    def global_loss(self, w: np.ndarray) -> float:
        return float(np.mean([self.user_loss(k, w) for k in range(self.num_users)]))

    def global_grad(self, w: np.ndarray) -> np.ndarray:
        g = np.zeros(self.dim)
        for k in range(self.num_users):
            g += self.user_grad(k, w)
        return g / self.num_users

    def test_accuracy(self, w: np.ndarray) -> float:
        return self.model.accuracy(w, self.test_features, self.test_labels)


def make_blobs_task(
    num_users: int,
    n_per_user: int = 40,
    n_features: int = 64,
    separation: float = 3.0,
    test_size: int = 2000,
    master_seed: int = 0,
    model: str = "logistic",
    batch_size: int = 16,
    n_hidden: int = 64,
    profile_decay: float = 0.75,
) -> FederatedTask:
    """Two Gaussian blobs with a decaying per-feature separation profile.

    ``separation`` is the distance between class means, so the Bayes
    accuracy is Phi(separation / 2) regardless of the profile.  With
    ``profile_decay > 0`` the offset mass decays like (1 + j)^-decay across
    (permuted) feature axes: the many weak features carry a sizable share of
    the attainable accuracy but yield tiny per-round gradients, which keeps
    the run improving over hundreds of rounds instead of one step.
    ``profile_decay = 0`` gives the classic isotropic blob pair.
    """
    gen = substream(master_seed, SCOPE_TASK)
    profile = (1.0 + np.arange(n_features)) ** -profile_decay
    profile *= separation / np.linalg.norm(profile)
    axis_signs = np.where(gen.random(n_features) < 0.5, 1.0, -1.0)
    shift = 0.5 * axis_signs * profile[gen.permutation(n_features)]

    def draw_split(n: int):
        labels = np.where(gen.random(n) < 0.5, 1.0, -1.0)
        feats = gen.normal(size=(n, n_features)) + labels[:, None] * shift
        return feats, labels

    user_features, user_labels = [], []
    for _ in range(num_users):
        X, y = draw_split(n_per_user)
        user_features.append(X)
        user_labels.append(y)
    test_X, test_y = draw_split(test_size)
    if model == "logistic":
        m = LogisticModel(n_features)
    elif model == "mlp":
        m = MlpModel(n_features, n_hidden)
    else:
        raise ConfigError(f"unknown model {model!r}, expected 'logistic' or 'mlp'")
    return FederatedTask(
        model=m,
        user_features=user_features,
        user_labels=user_labels,
        test_features=test_X,
        test_labels=test_y,
        batch_size=batch_size,
    )


def make_xor_blobs_task(
    num_users: int,
    n_per_user: int = 100,
    n_features: int = 32,
    offset: float = 1.5,
    test_size: int = 4000,
    master_seed: int = 0,
    batch_size: int = 8,
    n_hidden: int = 32,
) -> FederatedTask:
    """Four Gaussian blobs in two informative dimensions, labeled by quadrant.

    The label is the sign product of the two offset coordinates, so no
    linear classifier can beat chance and the perceptron must coordinate its
    hidden layer over many rounds; this makes aggregation quality visible in
    the accuracy trajectory, unlike linearly separable blobs where the
    decision direction forms almost immediately.
    """
    gen = substream(master_seed, SCOPE_TASK)

    def draw_split(n: int):
        feats = gen.normal(size=(n, n_features))
        quadrant = gen.integers(0, 4, size=n)
        s1 = np.where(quadrant % 2 == 0, 1.0, -1.0)
        s2 = np.where(quadrant < 2, 1.0, -1.0)
        feats[:, 0] += offset * s1
        feats[:, 1] += offset * s2
        return feats, s1 * s2

    user_features, user_labels = [], []
    for _ in range(num_users):
        X, y = draw_split(n_per_user)
        user_features.append(X)
        user_labels.append(y)
    test_X, test_y = draw_split(test_size)
    return FederatedTask(
        model=MlpModel(n_features, n_hidden),
        user_features=user_features,
        user_labels=user_labels,
        test_features=test_X,
        test_labels=test_y,
        batch_size=batch_size,
    )


def make_quadratic_task(
    num_users: int,
    n_per_user: int = 32,
    n_features: int = 8,
    master_seed: int = 0,
    batch_size: int = 8,
) -> FederatedTask:
    """Quadratic consensus task; rows of the feature matrix are targets."""
    gen = substream(master_seed, SCOPE_TASK)
    feats = [gen.normal(size=(n_per_user, n_features)) for _ in range(num_users)]
    labels = [np.ones(n_per_user) for _ in range(num_users)]
    return FederatedTask(
        model=QuadraticModel(n_features),
        user_features=feats,
        user_labels=labels,
        test_features=gen.normal(size=(4, n_features)),
        test_labels=np.ones(4),
        batch_size=batch_size,
    )


# --- aggregators -----------------------------------------------------------
#
# Per round, an aggregator derives a fresh substream per purpose (fading,
# fusion ties, decode) and draws all components from it in one vectorized
# call; results are deterministic in (master_seed, round).

class IdealAggregator:
    """Error-free per-component majority vote."""

    name = "ideal"

    def aggregate(self, votes: np.ndarray, master_seed: int, round_index: int) -> np.ndarray:
        sums = votes.sum(axis=0).astype(float)
        return sign_vector(sums, substream(master_seed, SCOPE_AGG, round_index))


class AircompAggregator:
    """Full-power phase-corrected superposition over per-round fading.

    With ``cell=None`` the channel is ideal (unit gains, no noise): the
    aggregator then consumes only decode tie coins and is bit-identical to
    :class:`IdealAggregator`.
    """

    def __init__(self, cell: CellConfig | None):
        self.cell = cell
        self.name = "aircomp_pc"

    def aggregate(self, votes: np.ndarray, master_seed: int, round_index: int) -> np.ndarray:
        k, d = votes.shape
        tie_rng = substream(master_seed, SCOPE_AGG, round_index)
        if self.cell is None:
            return sign_vector(votes.sum(axis=0).astype(float), tie_rng)
        chan = substream(master_seed, SCOPE_CHANNEL, round_index)
        r = sample_distance(chan, self.cell, k)
        # Distances hold for the round; fading is i.i.d. per (user, component).
        gains = np.sqrt(path_loss(r, self.cell))[:, None] * sample_rayleigh_amplitude(chan, (k, d))
        y = (gains * votes).sum(axis=0)
        nv = self.cell.noise_var
        if nv > 0.0:
            y = y + substream(master_seed, SCOPE_NOISE, round_index).normal(0.0, math.sqrt(nv), size=d)
        return sign_vector(y, tie_rng)


class ClusterAggregator:
    """Perfect in-cluster fusion, then relay selection and superposition.

    Users are assigned to clusters contiguously: cluster c holds rows
    [c * K_C, (c+1) * K_C).  Relay gains are redrawn per round with one
    distance per cluster, and selection runs independently per component.
    """

    def __init__(self, cell: CellConfig, layout: ClusterLayout, selector: str = "greedy-exact"):
        self.cell = cell
        self.layout = layout
        self.selector = selector
        self.name = f"cluster-{selector}"

    def aggregate(self, votes: np.ndarray, master_seed: int, round_index: int) -> np.ndarray:
        k, d = votes.shape
        lay = self.layout
        if k != lay.num_users:
            raise ConfigError(f"layout covers {lay.num_users} users but got {k} vote rows")
        chan = substream(master_seed, SCOPE_RELAY, round_index)
        r = sample_distance(chan, self.cell, lay.C)
        root_pl = np.sqrt(path_loss(r, self.cell))
        gains = root_pl[None, :, None] * sample_rayleigh_amplitude(chan, (d, lay.C, lay.L))
        margins = votes.reshape(lay.C, lay.K_C, d).sum(axis=1).astype(float)  # (C, d)
        fused = sign_vector(margins.ravel(), substream(master_seed, SCOPE_TIE, round_index))
        fused = fused.reshape(lay.C, d)
        chosen = select_batch(gains, self.selector)  # (d, C)
        y = (chosen.T * fused).sum(axis=0)
        nv = self.cell.noise_var
        if nv > 0.0:
            y = y + substream(master_seed, SCOPE_NOISE, round_index).normal(0.0, math.sqrt(nv), size=d)
        return sign_vector(y, substream(master_seed, SCOPE_AGG, round_index))


# --- training loop ---------------------------------------------------------

@dataclass
class TrainState:
    w: np.ndarray
    round: int
    eta: float


@dataclass
class TrainResult:
    state: TrainState
    metrics: list = field(default_factory=list)

    @property
    def final_test_accuracy(self) -> float:
        return self.metrics[-1]["test_acc"] if self.metrics else float("nan")

    @property
    def final_train_loss(self) -> float:
        return self.metrics[-1]["train_loss"] if self.metrics else float("nan")


def minibatch_indices(
    master_seed: int, round_index: int, user: int, dataset_size: int, batch_size: int
) -> np.ndarray:
    """The minibatch drawn by ``user`` in ``round_index``; exposed so an
    external reference loop can replay the exact same batches."""
    gen = substream(master_seed, SCOPE_ROUND, round_index, user)
    return gen.choice(dataset_size, size=batch_size, replace=False)


def train(
    task: FederatedTask,
    aggregator,
    rounds: int,
    eta: float,
    master_seed: int,
) -> TrainResult:
    """Run sign-vote training for ``rounds`` rounds.

    Per round: minibatch gradient signs per user, one aggregate sign vector
    from the aggregator, the common update ``w <- w - eta * aggregate``.
    Metrics per round: global train loss, test accuracy, the fraction of
    (user, component) votes matching the full-batch gradient sign
    (``mean_p_loc``), and the fraction of components where the aggregate
    disagrees with it (``failure_fraction``).
    """
    if rounds < 1:
        raise ConfigError(f"rounds must be >= 1, got {rounds}")
    if eta <= 0.0:
        raise ConfigError(f"learning rate must be positive, got {eta}")
    w = task.model.init_params(substream(master_seed, SCOPE_TASK, 1))
    d = task.dim
    votes = np.empty((task.num_users, d), dtype=np.int8)
    result = TrainResult(state=TrainState(w=w, round=0, eta=eta))
    for n in range(1, rounds + 1):
        true_grad = task.global_grad(w)
        true_sign = sign_vector(true_grad, substream(master_seed, SCOPE_ROUND, n))
        for k in range(task.num_users):
            idx = minibatch_indices(
                master_seed, n, k, len(task.user_features[k]), task.batch_size
            )
            g = task.user_grad(k, w, idx)
            votes[k] = sign_vector(g, substream(master_seed, SCOPE_ROUND, n, k, 1))
        agg = aggregator.aggregate(votes, master_seed, n)
        w = w - eta * agg.astype(float)
        train_loss = task.global_loss(w)
        if not math.isfinite(train_loss):
            raise RuntimeError(
                f"training diverged at round {n}: loss={train_loss!r} (eta={eta})"
            )
        result.metrics.append(
            {
                "round": n,
                "scheme": aggregator.name,
                "train_loss": train_loss,
                "test_acc": task.test_accuracy(w),
                "mean_p_loc": float((votes == true_sign[None, :]).mean()),
                "failure_fraction": float((agg != true_sign).mean()),
            }
        )
        result.state = TrainState(w=w, round=n, eta=eta)
    return result


@dataclass(frozen=True)
class ProbeResult:
    """Per-component local success probabilities and their mean."""

    per_component: np.ndarray
    mean: float


def probe_local_success(
    task: FederatedTask,
    w: np.ndarray,
    batch_size: int,
    samples: int,
    master_seed: int,
) -> ProbeResult:
    """Empirical probability that a minibatch gradient sign is correct.

    For every (user, resample) pair, draws a minibatch, takes gradient
    signs, and compares against the signs of the full-batch global gradient.
    Sign comparisons are invariant to any positive rescaling of the loss.
    """
    if samples < 1:
        raise ConfigError(f"samples must be >= 1, got {samples}")
    true_sign = sign_vector(task.global_grad(w), substream(master_seed, SCOPE_PROBE))
    matches = np.zeros(task.dim)
    total = 0
    for k in range(task.num_users):
        size = len(task.user_features[k])
        if batch_size > size:
            raise ConfigError(f"batch size {batch_size} exceeds user {k} dataset ({size})")
        for s in range(samples):
            gen = substream(master_seed, SCOPE_PROBE, 1, k, s)
            idx = gen.choice(size, size=batch_size, replace=False)
            g = task.user_grad(k, w, idx)
            votes = sign_vector(g, substream(master_seed, SCOPE_PROBE, 2, k, s))
            matches += votes == true_sign
            total += 1
    per_component = matches / total
    return ProbeResult(per_component=per_component, mean=float(per_component.mean()))
