"""Deterministic multi-client FL simulator with pluggable transport.

One communication round: the server broadcasts W_t; every client runs
tau - 1 local SGD steps, evaluates one fresh stochastic gradient at the
final local iterate, clips it, partitions it into N = ceil(m / n)
zero-padded subvectors, and ships them through the configured mechanism.
The server reconstructs each client's gradient (through lockstep tapes for
the quantized mechanisms), aggregates with the client weights, and applies
the update anchored at W_t:

    W_{t + tau} = W_t - eta_{t + tau - 1} * sum_k p_k * Xhat_k

i.e. local iterates never enter the global model except through the final
gradient.  All randomness is derived from the experiment seed, so a rerun
is bitwise identical.

Mechanisms:

* ``plain``           -- gradients pass through untouched (no clipping).
* ``sdq``             -- clip, then subtractive dithered quantization only.
* ``noise_then_sdq``  -- clip, add client-local privacy noise, then SDQ.
* ``cepam_gaussian``  -- clip, then layered RSUQ simulating N(0, sigma^2 I_n),
                         serialized through the codec.
* ``cepam_laplace``   -- same with Laplace(0, b), n = 1.

Reported bits are the actual payload record lengths from the codec
(baselines without an entropy-coded stream report zero).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import codec
from .lattice import LatticeSpec, nearest_lattice_point
from .noise import make_noise_family
from .randomness import RandomTape


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the field."""


# ---------------------------------------------------------------------------
# configuration


@dataclass
class MechanismSpec:
    kind: str
    dim: int = 1
    alpha: float = 1e-3
    sigma: float | None = None
    b: float | None = None
    noise: str | None = None  # for noise_then_sdq: "gaussian" or "laplace"

    KINDS = ("plain", "sdq", "noise_then_sdq", "cepam_gaussian", "cepam_laplace")

    def validate(self) -> None:
        if self.kind not in self.KINDS:
            raise ConfigError(f"mechanism.kind must be one of {self.KINDS}, got {self.kind!r}")
        if self.kind != "plain":
            if self.dim < 1:
                raise ConfigError("mechanism.dim must be >= 1")
            if not (self.alpha > 0):
                raise ConfigError("mechanism.alpha must be positive")
        if self.kind == "cepam_gaussian" and not (self.sigma and self.sigma > 0):
            raise ConfigError("mechanism.sigma must be positive for cepam_gaussian")
        if self.kind == "cepam_laplace":
            if not (self.b and self.b > 0):
                raise ConfigError("mechanism.b must be positive for cepam_laplace")
            if self.dim != 1:
                raise ConfigError("mechanism.dim must be 1 for cepam_laplace")
        if self.kind == "noise_then_sdq":
            if self.noise not in ("gaussian", "laplace"):
                raise ConfigError("mechanism.noise must be 'gaussian' or 'laplace'")
            if self.noise == "gaussian" and not (self.sigma and self.sigma > 0):
                raise ConfigError("mechanism.sigma must be positive")
            if self.noise == "laplace" and not (self.b and self.b > 0):
                raise ConfigError("mechanism.b must be positive")

    def noise_family(self):
        if self.kind == "cepam_gaussian":
            return make_noise_family("gaussian", dim=self.dim, sigma=self.sigma)
        if self.kind == "cepam_laplace":
            return make_noise_family("laplace", dim=self.dim, b=self.b)
        return None

    def noise_variance(self) -> float:
        """Total per-subvector error variance contributed by the mechanism."""
        cell = self.dim * self.alpha**2 / 12.0
        if self.kind == "plain":
            return 0.0
        if self.kind == "sdq":
            return cell
        if self.kind == "cepam_gaussian":
            return self.dim * self.sigma**2
        if self.kind == "cepam_laplace":
            return 2.0 * self.b**2
        per_coord = self.sigma**2 if self.noise == "gaussian" else 2.0 * self.b**2
        return self.dim * per_coord + cell


@dataclass
class LRSchedule:
    kind: str = "fixed"  # "fixed" or "inverse_time"
    eta: float = 0.1

    def validate(self) -> None:
        if self.kind not in ("fixed", "inverse_time"):
            raise ConfigError(f"lr.kind must be 'fixed' or 'inverse_time', got {self.kind!r}")
        if self.kind == "fixed" and not (self.eta > 0):
            raise ConfigError("lr.eta must be positive")


@dataclass
class TaskConfig:
    kind: str = "least_squares"  # or "logistic"
    dim: int = 12
    samples_per_client: int = 32
    heterogeneity: float = 0.5
    data_seed: int = 0
    l2_reg: float = 1e-3  # logistic only

    def validate(self, clients: int) -> None:
        if self.kind not in ("least_squares", "logistic"):
            raise ConfigError(f"task.kind must be 'least_squares' or 'logistic', got {self.kind!r}")
        if self.kind == "least_squares":
            if self.dim < 1:
                raise ConfigError("task.dim must be >= 1")
            if self.samples_per_client < self.dim:
                raise ConfigError("task.samples_per_client must be >= task.dim for full rank")
        if self.heterogeneity < 0:
            raise ConfigError("task.heterogeneity must be nonnegative")


@dataclass
class FLConfig:
    clients: int
    tau: int
    total_iters: int
    clip_radius: float
    mechanism: MechanismSpec
    lr: LRSchedule = field(default_factory=LRSchedule)
    task: TaskConfig = field(default_factory=TaskConfig)
    weights: list | None = None  # defaults to uniform
    seed: int = 0

    def validate(self) -> None:
        if self.clients < 1:
            raise ConfigError("clients must be >= 1")
        if self.tau < 2:
            raise ConfigError("tau must be >= 2 (one aggregation per tau iterations)")
        if self.total_iters < self.tau or self.total_iters % self.tau != 0:
            raise ConfigError("total_iters must be a positive multiple of tau")
        if not (self.clip_radius > 0):
            raise ConfigError("clip_radius must be positive")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape != (self.clients,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                raise ConfigError("weights must be a length-K nonnegative vector summing to 1")
        self.mechanism.validate()
        self.lr.validate()
        self.task.validate(self.clients)

    def weight_vector(self) -> np.ndarray:
        if self.weights is None:
            return np.full(self.clients, 1.0 / self.clients)
        return np.asarray(self.weights, dtype=np.float64)

    @classmethod
    def from_dict(cls, raw: dict) -> "FLConfig":
        try:
            cfg = cls(
                clients=int(raw["clients"]),
                tau=int(raw["tau"]),
                total_iters=int(raw["total_iters"]),
                clip_radius=float(raw["clip_radius"]),
                mechanism=MechanismSpec(**raw["mechanism"]),
                lr=LRSchedule(**raw.get("lr", {})),
                task=TaskConfig(**raw.get("task", {})),
                weights=raw.get("weights"),
                seed=int(raw.get("seed", 0)),
            )
        except KeyError as exc:
            raise ConfigError(f"missing config field: {exc.args[0]}") from None
        except TypeError as exc:
            raise ConfigError(f"bad config structure: {exc}") from None
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "FLConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(raw)


# ---------------------------------------------------------------------------
# synthetic tasks


class LeastSquaresTask:
    """Heterogeneous least squares with known curvature and minimizers.

    Client k holds rows A_k and consistent targets y_k = A_k w_k0, so each
    per-client minimum value is exactly zero and the heterogeneity knob
    (the spread of the w_k0) moves the global optimum value F(w*) away
    from zero.  Singular values of each A_k are reshaped onto a fixed
    well-conditioned profile, so the smoothness / strong-convexity pair
    (L, C) is controlled by construction and computed exactly from the
    per-client Hessians.
    """

    kind = "least_squares"
    has_accuracy = False

    # per-client Hessian spectrum, before heterogeneity shifts
    _EIG_LO = 0.75
    _EIG_HI = 1.5

    def __init__(self, cfg: TaskConfig, clients: int, weights: np.ndarray):
        self.dim = cfg.dim
        self.clients = clients
        self.weights = weights
        rng = np.random.default_rng([cfg.data_seed, 2024])
        m, s = cfg.dim, cfg.samples_per_client

        profile = np.sqrt(np.linspace(self._EIG_LO, self._EIG_HI, m) * s)
        self.features = []  # A_k, shape (s, m)
        self.targets = []
        self._targets_w = []
        base = rng.normal(size=m)
        base /= np.linalg.norm(base)
        for k in range(clients):
            raw = rng.normal(size=(s, m))
            u_mat, _, vt = np.linalg.svd(raw, full_matrices=False)
            a_k = u_mat @ np.diag(profile) @ vt
            shift = rng.normal(size=m)
            shift /= np.linalg.norm(shift)
            w_k0 = base + cfg.heterogeneity * shift
            self.features.append(a_k)
            self.targets.append(a_k @ w_k0)
            self._targets_w.append(w_k0)

        self.hessians = [a.T @ a / s for a in self.features]
        eigs = [np.linalg.eigvalsh(h) for h in self.hessians]
        self.smoothness = float(max(e[-1] for e in eigs))
        self.strong_convexity = float(min(e[0] for e in eigs))

        h_bar = sum(w * h for w, h in zip(weights, self.hessians))
        rhs = sum(w * h @ w0 for w, h, w0 in zip(weights, self.hessians, self._targets_w))
        self.w_star = np.linalg.solve(h_bar, rhs)
        self.optimum_value = self.objective(self.w_star)
        self.client_min_values = np.zeros(clients)

    def initial_point(self) -> np.ndarray:
        return np.zeros(self.dim)

    def client_objective(self, k: int, w: np.ndarray) -> float:
        r = self.features[k] @ w - self.targets[k]
        return 0.5 * float(r @ r) / self.features[k].shape[0]

    def objective(self, w: np.ndarray) -> float:
        return float(sum(p * self.client_objective(k, w) for k, p in enumerate(self.weights)))

    def sample_count(self, k: int) -> int:
        return self.features[k].shape[0]

    def stochastic_gradient(self, k: int, w: np.ndarray, idx: int) -> np.ndarray:
        a = self.features[k][idx]
        return a * (a @ w - self.targets[k][idx])

    def full_gradient(self, k: int, w: np.ndarray) -> np.ndarray:
        a = self.features[k]
        return a.T @ (a @ w - self.targets[k]) / a.shape[0]

    def gradient_second_moment_bound(self, k: int, radius: float) -> float:
        """Certified upper bound on E_j ||grad_j(w)||^2 over ||w|| <= radius.

        The moment is the quadratic w^T S w - 2 c^T w + d with
        S = mean ||a_j||^2 a_j a_j^T; the bound is its eigenvalue/norm
        relaxation on the ball.
        """
        a = self.features[k]
        y = self.targets[k]
        sq = np.sum(a * a, axis=1)
        s_mat = (a * sq[:, None]).T @ a / a.shape[0]
        c = (a * (sq * y)[:, None]).mean(axis=0)
        d = float(np.mean(sq * y * y))
        lam = float(np.linalg.eigvalsh(s_mat)[-1])
        return lam * radius**2 + 2.0 * float(np.linalg.norm(c)) * radius + d


class LogisticTask:
    """Two-class digits classification with L2-regularized logistic loss."""

    kind = "logistic"
    has_accuracy = True

    def __init__(self, cfg: TaskConfig, clients: int, weights: np.ndarray):
        from sklearn.datasets import load_digits

        digits = load_digits()
        mask = digits.target <= 1
        x = digits.data[mask] / 16.0
        y = np.where(digits.target[mask] == 1, 1.0, -1.0)
        rng = np.random.default_rng([cfg.data_seed, 4096])
        order = rng.permutation(len(y))
        x, y = x[order], y[order]

        n_test = len(y) // 4
        self.test_x = np.hstack([x[:n_test], np.ones((n_test, 1))])
        self.test_y = y[:n_test]
        train_x, train_y = x[n_test:], y[n_test:]

        self.dim = train_x.shape[1] + 1
        self.clients = clients
        self.weights = weights
        self.l2_reg = cfg.l2_reg
        splits_x = np.array_split(train_x, clients)
        splits_y = np.array_split(train_y, clients)
        self.features = [np.hstack([sx, np.ones((len(sx), 1))]) for sx in splits_x]
        self.targets = splits_y
        self._w_star = None

    def initial_point(self) -> np.ndarray:
        return np.zeros(self.dim)

    def client_objective(self, k: int, w: np.ndarray) -> float:
        margins = self.targets[k] * (self.features[k] @ w)
        loss = np.mean(np.logaddexp(0.0, -margins))
        return float(loss + 0.5 * self.l2_reg * (w @ w))

    def objective(self, w: np.ndarray) -> float:
        return float(sum(p * self.client_objective(k, w) for k, p in enumerate(self.weights)))

    @property
    def optimum_value(self) -> float:
        if self._w_star is None:
            from scipy.optimize import minimize

            def grad(w):
                return sum(
                    p * self.full_gradient(k, w) for k, p in enumerate(self.weights)
                )

            res = minimize(self.objective, self.initial_point(), jac=grad, method="L-BFGS-B",
                           tol=1e-12, options={"maxiter": 2000})
            self._w_star = res.x
        return self.objective(self._w_star)

    def sample_count(self, k: int) -> int:
        return len(self.targets[k])

    def stochastic_gradient(self, k: int, w: np.ndarray, idx: int) -> np.ndarray:
        a = self.features[k][idx]
        yv = self.targets[k][idx]
        sig = 1.0 / (1.0 + math.exp(min(yv * float(a @ w), 500.0)))
        return -yv * sig * a + self.l2_reg * w

    def full_gradient(self, k: int, w: np.ndarray) -> np.ndarray:
        a = self.features[k]
        yv = self.targets[k]
        sig = 1.0 / (1.0 + np.exp(np.minimum(yv * (a @ w), 500.0)))
        return -(a * (yv * sig)[:, None]).mean(axis=0) + self.l2_reg * w

    def accuracy(self, w: np.ndarray) -> float:
        pred = np.sign(self.test_x @ w)
        pred[pred == 0] = 1.0
        return float(np.mean(pred == self.test_y))


def build_task(config: FLConfig):
    weights = config.weight_vector()
    if config.task.kind == "least_squares":
        return LeastSquaresTask(config.task, config.clients, weights)
    return LogisticTask(config.task, config.clients, weights)


# ---------------------------------------------------------------------------
# round mechanics


def clip_gradient(x: np.ndarray, clip_radius: float) -> np.ndarray:
    """Scale to L2 norm at most clip_radius, direction preserved."""
    if not (clip_radius > 0):
        raise ValueError(f"clip radius must be positive, got {clip_radius}")
    norm = float(np.linalg.norm(x))
    return x / max(1.0, norm / clip_radius)


def snr_db(signal_power: float, error_power: float) -> float:
    """10 log10 of signal power over reconstruction error power."""
    if signal_power <= 0.0:
        raise ValueError("signal power must be positive for an SNR")
    if error_power == 0.0:
        return math.inf
    return 10.0 * math.log10(signal_power / error_power)


def local_steps(task, k: int, w: np.ndarray, t: int, tau: int, lr_fn, rng, full_batch=False):
    """tau - 1 SGD steps from w, then one fresh gradient at the final iterate.

    Returns (final iterate, gradient there, max iterate norm seen).
    """
    w = w.copy()
    max_norm = float(np.linalg.norm(w))
    for t_prime in range(1, tau):
        if full_batch:
            g = task.full_gradient(k, w)
        else:
            g = task.stochastic_gradient(k, w, int(rng.integers(task.sample_count(k))))
        w = w - lr_fn(t + t_prime - 1) * g
        max_norm = max(max_norm, float(np.linalg.norm(w)))
    if full_batch:
        grad = task.full_gradient(k, w)
    else:
        grad = task.stochastic_gradient(k, w, int(rng.integers(task.sample_count(k))))
    return w, grad, max_norm


@dataclass
class MetricsRecord:
    round_index: int
    objective_gap: float
    accuracy: float | None
    snr_db: float
    bits: int
    elapsed_ms: int = 0  # outputs are reproducible artifacts; wall time goes to logs

    CSV_FIELDS = ("round", "objective_gap", "accuracy", "snr_db", "bits", "elapsed_ms")

    def csv_row(self) -> list:
        acc = "" if self.accuracy is None else repr(self.accuracy)
        s = "inf" if math.isinf(self.snr_db) else repr(self.snr_db)
        return [self.round_index, repr(self.objective_gap), acc, s, self.bits, self.elapsed_ms]


@dataclass
class RoundDetail:
    """Per-round vectors kept for distortion and convergence checks."""

    t: int
    eta: float
    raw_aggregate: np.ndarray      # sum_k p_k X_k (no clip, no transport)
    clipped_aggregate: np.ndarray  # sum_k p_k Xtilde_k
    decoded_aggregate: np.ndarray  # sum_k p_k Xhat_k
    transport_sq_errors: np.ndarray  # per client ||Xhat - Xtilde||^2 over all N*n coords
    record_bits: list              # per client list of per-record bit lengths
    signal_power: float            # sum_k ||Xtilde_k||^2, padding excluded
    error_power: float             # sum_k ||Xhat_k - Xtilde_k||^2, padding excluded


class Simulator:
    """One seeded run of the configured experiment."""

    def __init__(self, config: FLConfig, task, rep_seed: int):
        config.validate()
        self.config = config
        self.task = task
        self.rep_seed = rep_seed
        self.weights = config.weight_vector()
        self.mech = config.mechanism
        self.fam = self.mech.noise_family()
        self.spec = (
            LatticeSpec(dim=self.mech.dim, alpha=self.mech.alpha)
            if self.mech.kind != "plain"
            else None
        )
        self.w = task.initial_point()
        self.sample_rngs = [
            np.random.default_rng([rep_seed, 11, k]) for k in range(config.clients)
        ]
        self.noise_rngs = [
            np.random.default_rng([rep_seed, 13, k]) for k in range(config.clients)
        ]
        self.max_iterate_norm = float(np.linalg.norm(self.w))
        if config.lr.kind == "inverse_time":
            if not hasattr(task, "strong_convexity"):
                raise ConfigError("lr.kind 'inverse_time' needs a task with known curvature")
            ratio = task.smoothness / task.strong_convexity
            self.lr_offset = config.tau * max(4.0 * ratio, 1.0)

    def learning_rate(self, t: int) -> float:
        if self.config.lr.kind == "fixed":
            return self.config.lr.eta
        return self.config.tau / (self.task.strong_convexity * (t + self.lr_offset))

    def _pad(self, x: np.ndarray) -> np.ndarray:
        n = self.spec.dim
        n_sub = -(-x.size // n)
        padded = np.zeros(n_sub * n)
        padded[: x.size] = x
        return padded.reshape(n_sub, n)

    def _transport(self, k: int, t: int, grad: np.ndarray):
        """Client-side mechanism; returns (Xhat, ||Xhat - Xtilde||^2, bits, record_bits, Xtilde)."""
        mech = self.mech
        if mech.kind == "plain":
            return grad, 0.0, 0, [], grad

        clipped = clip_gradient(grad, self.config.clip_radius)
        m = clipped.size

        if mech.kind in ("sdq", "noise_then_sdq"):
            payload = clipped
            if mech.kind == "noise_then_sdq":
                rng = self.noise_rngs[k]
                if mech.noise == "gaussian":
                    payload = clipped + rng.normal(0.0, mech.sigma, size=m)
                else:
                    payload = clipped + rng.laplace(0.0, mech.b, size=m)
            sub = self._pad(payload)
            out = np.empty_like(sub)
            for j in range(sub.shape[0]):
                tape = RandomTape.derive(self.rep_seed, k, t, j)
                w_draw = tape.next_uniforms(self.spec.dim)
                dither = self.spec.alpha * (0.5 - w_draw)
                coords = nearest_lattice_point(sub[j] - dither, self.spec)
                out[j] = self.spec.alpha * coords + dither
            sq = float(np.sum((out - self._pad(clipped)) ** 2))
            return out.reshape(-1)[:m], sq, 0, [], clipped

        sub = self._pad(clipped)
        data, record_bits, _, _ = codec.encode_client_round(
            sub, self.fam, self.spec, self.config.clip_radius, self.rep_seed, k, t
        )
        _, y, _ = codec.decode_client_round(data, self.rep_seed, k, t)
        sq = float(np.sum((y - sub) ** 2))
        return y.reshape(-1)[:m], sq, sum(record_bits), record_bits, clipped

    def run_round(self, t: int) -> tuple[MetricsRecord, RoundDetail]:
        cfg = self.config
        eta_update = self.learning_rate(t + cfg.tau - 1)
        raw_agg = np.zeros(self.task.dim)
        clip_agg = np.zeros(self.task.dim)
        dec_agg = np.zeros(self.task.dim)
        sq_errors = np.zeros(cfg.clients)
        bits_total = 0
        record_bits_all = []
        signal_power = 0.0
        error_power = 0.0

        for k in range(cfg.clients):
            _, grad, seen = local_steps(
                self.task, k, self.w, t, cfg.tau, self.learning_rate, self.sample_rngs[k]
            )
            self.max_iterate_norm = max(self.max_iterate_norm, seen)
            xhat, sq, bits, record_bits, xtilde = self._transport(k, t, grad)
            p = self.weights[k]
            raw_agg += p * grad
            clip_agg += p * xtilde
            dec_agg += p * xhat
            sq_errors[k] = sq
            bits_total += bits
            record_bits_all.append(record_bits)
            signal_power += float(xtilde @ xtilde)
            error_power += float(np.sum((xhat - xtilde) ** 2))

        self.w = self.w - eta_update * dec_agg
        self.max_iterate_norm = max(self.max_iterate_norm, float(np.linalg.norm(self.w)))

        gap = self.task.objective(self.w) - self.task.optimum_value
        acc = self.task.accuracy(self.w) if self.task.has_accuracy else None
        record = MetricsRecord(
            round_index=t + cfg.tau,
            objective_gap=gap,
            accuracy=acc,
            snr_db=snr_db(signal_power, error_power) if signal_power > 0 else math.inf,
            bits=bits_total,
        )
        detail = RoundDetail(
            t=t,
            eta=eta_update,
            raw_aggregate=raw_agg,
            clipped_aggregate=clip_agg,
            decoded_aggregate=dec_agg,
            transport_sq_errors=sq_errors,
            record_bits=record_bits_all,
            signal_power=signal_power,
            error_power=error_power,
        )
        return record, detail

    def run(self) -> tuple[list, list]:
        records, details = [], []
        for t in range(0, self.config.total_iters, self.config.tau):
            record, detail = self.run_round(t)
            records.append(record)
            details.append(detail)
        return records, details


@dataclass
class ExperimentResult:
    config: FLConfig
    seeds: list
    records: list        # per rep: list[MetricsRecord]
    details: list        # per rep: list[RoundDetail]
    task: object
    iterate_norms: list  # per rep: max L2 norm over all visited iterates

    def summary(self) -> dict:
        from scipy import stats as sstats

        def mean_ci(values):
            values = np.asarray(values, dtype=np.float64)
            mean = float(values.mean())
            if len(values) < 2 or np.all(values == values[0]):
                return {"mean": mean, "ci95": 0.0}
            half = float(
                sstats.t.ppf(0.975, len(values) - 1) * values.std(ddof=1) / math.sqrt(len(values))
            )
            return {"mean": mean, "ci95": half}

        final = [r[-1] for r in self.records]
        out = {
            "repetitions": len(self.records),
            "seeds": list(self.seeds),
            "final_objective_gap": mean_ci([f.objective_gap for f in final]),
            "total_bits": mean_ci([sum(rec.bits for rec in r) for r in self.records]),
        }
        finite_snr = [f.snr_db for f in final if math.isfinite(f.snr_db)]
        if finite_snr:
            out["final_snr_db"] = mean_ci(finite_snr)
        if final[0].accuracy is not None:
            out["final_accuracy"] = mean_ci([f.accuracy for f in final])
        return out


def run_experiment(config: FLConfig, repetitions: int, base_seed: int | None = None) -> ExperimentResult:
    """Run ``repetitions`` seeded replicas over shared task data."""
    if repetitions < 1:
        raise ConfigError("repetitions must be >= 1")
    config.validate()
    task = build_task(config)
    start = config.seed if base_seed is None else base_seed
    seeds = [start + r for r in range(repetitions)]
    records, details, norms = [], [], []
    for s in seeds:
        sim = Simulator(config, task, rep_seed=s)
        rec, det = sim.run()
        records.append(rec)
        details.append(det)
        norms.append(sim.max_iterate_norm)
    return ExperimentResult(
        config=config,
        seeds=seeds,
        records=records,
        details=details,
        task=task,
        iterate_norms=norms,
    )


def records_to_csv(records: list) -> str:
    lines = [",".join(MetricsRecord.CSV_FIELDS)]
    for rec in records:
        lines.append(",".join(str(v) for v in rec.csv_row()))
    return "\n".join(lines) + "\n"
