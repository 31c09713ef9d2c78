"""Training loops for regularized distributional optimization.

Two methods share a critic (dual witness) that is re-estimated from samples
every iteration:

* "myvt": a generator network V(eps, theta) is trained through a primal-dual
  loop. Each iteration draws a noise mini-batch, pushes it through V to get
  particles, runs T inner steps where each particle follows
  delta = grad_x h(x) + (alpha/lam) (x - prox(g, x, lam)) and theta absorbs
  the same directions through a vector-Jacobian product, then runs T' ascent
  steps on the critic against a fresh target mini-batch.

* "vt": a plain particle method. A fixed population of particles is stored
  explicitly; each iteration first refreshes the critic on the current
  particles, then moves every particle along -grad_x h. No regularizer term
  and no generator.

All randomness flows from substreams of TrainConfig.seed, so a fixed seed
reproduces the metrics stream exactly. Wall-clock per iteration is recorded
as a diagnostic and is the one metrics column that is not reproducible.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .data import SyntheticSpec
from .divergence import (
    DualCritic,
    critic_update,
    dual_objective,
    witness_values_and_grads,
)
from .nn import AdamState, Mlp, NumericalError, Rng, adam_step, mlp_init, save_mlp, sgd_step
from .prox import Regularizer, envelope_value, prox, reg_value

__all__ = [
    "TrainConfig",
    "TrainState",
    "MetricsRow",
    "METRICS_HEADER",
    "init_state",
    "init_particles",
    "particle_delta",
    "myvt_iteration",
    "vt_iteration",
    "evaluate_metrics",
    "smoothed_objective_estimate",
    "run_training",
    "max_abs_param",
    "case_study_config",
    "case_study_spec",
]

METRICS_HEADER = "iter,mse,avg_l1,avg_tv,dual_obj,wall_ms"

# rng substream keys
_GEN_INIT, _CRITIC_INIT, _TRAIN_DRAWS, _PARTICLE_INIT, _EVAL_DRAWS = 1, 2, 3, 4, 5


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one run. eta_* split the single step size of the
    update rules into particle / generator / critic roles."""

    method: str = "myvt"            # "myvt" | "vt"
    divergence: str = "kl"          # "kl" | "js"
    regularizer: Regularizer = field(default_factory=lambda: Regularizer("l1"))
    alpha: float = 0.1
    lam: float = 1e-4
    eta_particle: float = 1e-4
    eta_generator: float = 1e-4
    eta_critic: float = 1e-2
    iters: int = 2000               # outer iterations K
    inner_steps: int = 5            # particle/generator steps T per iteration
    critic_steps: int = 2           # critic ascent steps T'
    batch_size: int = 100           # noise mini-batch m
    n_particles: int = 500
    noise_dim: int = 100
    seed: int = 0
    optimizer: str = "sgd"          # "sgd" | "adam"
    gen_hidden: tuple = (100, 100, 100)
    critic_hidden: tuple = (100, 100)

    def __post_init__(self):
        if self.method not in ("myvt", "vt"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.divergence not in ("kl", "js"):
            raise ValueError(f"unknown divergence {self.divergence!r}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if min(self.iters, self.inner_steps, self.critic_steps, self.batch_size) < 1:
            raise ValueError("iters, inner_steps, critic_steps, batch_size must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.lam <= 0:
            raise ValueError("lam must be > 0")


@dataclass
class TrainState:
    """Mutable training state: networks, optimizer moments, rng streams."""

    generator: Mlp
    critic: DualCritic
    gen_opt: AdamState | None
    critic_opt: AdamState | None
    rng: Rng          # training draws: noise batches, target mini-batches
    eval_rng: Rng     # diagnostic draws; separate so diagnostics do not
                      # perturb the training stream
    iteration: int = 0


@dataclass
class MetricsRow:
    """Per-iteration record. wall_ms is measured, everything else is a pure
    function of config and seed."""

    iteration: int
    mse: float
    avg_l1: float
    avg_tv: float
    dual_obj: float
    wall_ms: float

    def to_csv(self):
        return ",".join(
            [str(self.iteration)]
            + [repr(float(v)) for v in (self.mse, self.avg_l1, self.avg_tv,
                                        self.dual_obj, self.wall_ms)]
        )


def init_state(config, d):
    """Build networks and rng substreams for data dimension d."""
    root = Rng(config.seed)
    gen_dims = [config.noise_dim, *config.gen_hidden, d]
    gen_acts = ["relu"] * (len(gen_dims) - 2) + ["identity"]
    generator = mlp_init(gen_dims, gen_acts, root.split(_GEN_INIT))
    critic_dims = [d, *config.critic_hidden, 1]
    final = "sigmoid" if config.divergence == "js" else "identity"
    critic_acts = ["tanh"] * (len(critic_dims) - 2) + [final]
    critic_net = mlp_init(critic_dims, critic_acts, root.split(_CRITIC_INIT))
    critic = DualCritic(kind=config.divergence, net=critic_net)
    gen_opt = critic_opt = None
    if config.optimizer == "adam":
        gen_opt = AdamState.for_params(generator.params())
        critic_opt = AdamState.for_params(critic_net.params())
    return TrainState(
        generator=generator,
        critic=critic,
        gen_opt=gen_opt,
        critic_opt=critic_opt,
        rng=root.split(_TRAIN_DRAWS),
        eval_rng=root.split(_EVAL_DRAWS),
    )


def init_particles(config, d):
    """Standard-normal particle population for the particle baseline."""
    return Rng(config.seed).split(_PARTICLE_INIT).normal((config.n_particles, d))


def particle_delta(critic, g, x, alpha, lam):
    """Transport direction grad_x h(x) + (alpha/lam) (x - prox(g, x, lam)).

    The prox is evaluated at scale lam; alpha enters only as the outer
    factor. Accepts a vector or a stack of vectors.
    """
    if lam <= 0:
        raise ValueError("lam must be > 0")
    _, gh = witness_values_and_grads(critic, x)
    delta = gh
    if alpha != 0.0:
        X = np.asarray(x, dtype=np.float64)
        delta = gh + (alpha / lam) * (X - prox(g, X, lam))
    if not np.all(np.isfinite(delta)):
        raise NumericalError("non-finite particle direction")
    return delta


def _apply_descent(params, grads, eta, optimizer, opt_state):
    if optimizer == "sgd":
        sgd_step(params, grads, eta)
    else:
        adam_step(params, grads, opt_state, eta)


def _target_minibatch(rng, target_samples, m):
    idx = rng.integers(0, len(target_samples), m)
    return target_samples[idx]


def evaluate_metrics(samples, truth, g_l1, g_tv):
    """(mse, avg_l1, avg_tv): squared error to truth averaged over samples
    and normalized by dimension, plus batch means of the two penalties."""
    X = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if X.shape[0] == 0:
        raise ValueError("empty sample batch")
    truth = np.asarray(truth, dtype=np.float64)
    if X.shape[1] != truth.shape[0]:
        raise ValueError(f"sample dim {X.shape[1]} != truth dim {truth.shape[0]}")
    mse = float(np.mean(np.sum((X - truth) ** 2, axis=1)) / truth.shape[0])
    return mse, float(np.mean(reg_value(g_l1, X))), float(np.mean(reg_value(g_tv, X)))


def myvt_iteration(state, config, target_samples, truth, g_l1, g_tv):
    """One outer iteration of the generator method. Mutates state."""
    if len(target_samples) == 0:
        raise ValueError("target_samples must be nonempty")
    t0 = time.perf_counter()
    cfg = config
    eps = state.rng.normal((cfg.batch_size, cfg.noise_dim))
    x, tape = state.generator.forward(eps)
    gen_params = state.generator.params()
    for _ in range(cfg.inner_steps):
        delta = particle_delta(state.critic, cfg.regularizer, x, cfg.alpha, cfg.lam)
        # theta absorbs the same directions: sum_i VJP(V, eps_i, delta_i)
        theta_grads, _ = state.generator.backward(tape, delta)
        x = x - cfg.eta_particle * delta
        _apply_descent(gen_params, theta_grads, cfg.eta_generator,
                       cfg.optimizer, state.gen_opt)
        # re-tape at the updated theta for the next inner step
        _, tape = state.generator.forward(eps)
    pi_batch = _target_minibatch(state.rng, target_samples, cfg.batch_size)
    dual = critic_update(state.critic, x, pi_batch, cfg.critic_steps,
                         cfg.eta_critic, cfg.optimizer, state.critic_opt)
    mse, avg_l1, avg_tv = evaluate_metrics(x, truth, g_l1, g_tv)
    state.iteration += 1
    wall_ms = (time.perf_counter() - t0) * 1e3
    return MetricsRow(state.iteration, mse, avg_l1, avg_tv, dual, wall_ms)


def vt_iteration(state, particles, config, target_samples, truth, g_l1, g_tv):
    """One iteration of the particle baseline: refresh the critic on the
    current particles, then move each particle along -grad_x h. Returns
    (particles, row); mutates state."""
    if len(target_samples) == 0:
        raise ValueError("target_samples must be nonempty")
    t0 = time.perf_counter()
    cfg = config
    pi_batch = _target_minibatch(state.rng, target_samples, cfg.batch_size)
    dual = critic_update(state.critic, particles, pi_batch, cfg.critic_steps,
                         cfg.eta_critic, cfg.optimizer, state.critic_opt)
    _, gh = witness_values_and_grads(state.critic, particles)
    if not np.all(np.isfinite(gh)):
        raise NumericalError("non-finite particle direction")
    particles = particles - cfg.eta_particle * gh
    mse, avg_l1, avg_tv = evaluate_metrics(particles, truth, g_l1, g_tv)
    state.iteration += 1
    wall_ms = (time.perf_counter() - t0) * 1e3
    return particles, MetricsRow(state.iteration, mse, avg_l1, avg_tv, dual, wall_ms)


def smoothed_objective_estimate(state, config, target_samples, n_eval):
    """Diagnostic estimate of the smoothed objective: current dual objective
    plus alpha times the mean envelope over n_eval fresh generator samples.

    Draws come from the dedicated eval stream, so calling this does not
    change the training trajectory.
    """
    if n_eval < 1:
        raise ValueError("n_eval must be >= 1")
    eps = state.eval_rng.normal((n_eval, config.noise_dim))
    xs, _ = state.generator.forward(eps)
    est = dual_objective(state.critic, xs, target_samples)
    if config.alpha != 0.0:
        est += config.alpha * float(
            np.mean(envelope_value(config.regularizer, xs, config.lam))
        )
    return est


def max_abs_param(state):
    vals = [np.abs(p).max() for p in state.generator.params()]
    vals += [np.abs(p).max() for p in state.critic.net.params()]
    return float(max(vals))


def run_training(config, dataset, metrics_path=None, checkpoint_path=None,
                 checkpoint_interval=0, progress_every=0):
    """Run config.iters iterations against dataset; returns
    (state, rows, particles) where particles is None for the generator method.

    Writes one CSV row per iteration to metrics_path as training progresses.
    The checkpointed network is the generator for "myvt" and the critic for
    "vt"; on a numerical abort the exception message carries the path of the
    last checkpoint written.
    """
    d = dataset.truth.shape[0]
    state = init_state(config, d)
    g_l1 = Regularizer("l1")
    g_tv = Regularizer("tv1d") if d >= 2 else Regularizer("l1")
    particles = init_particles(config, d) if config.method == "vt" else None
    rows = []
    last_checkpoint = None

    def checkpoint():
        nonlocal last_checkpoint
        if checkpoint_path:
            net = state.generator if config.method == "myvt" else state.critic.net
            save_mlp(net, checkpoint_path)
            last_checkpoint = checkpoint_path

    fh = open(metrics_path, "w", encoding="utf-8", newline="\n") if metrics_path else None
    try:
        if fh:
            fh.write(METRICS_HEADER + "\n")
        checkpoint()
        for k in range(config.iters):
            try:
                if config.method == "myvt":
                    row = myvt_iteration(state, config, dataset.examples,
                                         dataset.truth, g_l1, g_tv)
                else:
                    particles, row = vt_iteration(state, particles, config,
                                                  dataset.examples, dataset.truth,
                                                  g_l1, g_tv)
            except NumericalError as err:
                raise NumericalError(
                    f"{err} at iteration {k + 1}; last checkpoint: "
                    f"{last_checkpoint or 'none'}"
                ) from err
            rows.append(row)
            if fh:
                fh.write(row.to_csv() + "\n")
            if checkpoint_interval and (k + 1) % checkpoint_interval == 0:
                checkpoint()
            if progress_every and (k + 1) % progress_every == 0:
                print(f"iter {k + 1}/{config.iters}  mse={row.mse:.4f}  "
                      f"l1={row.avg_l1:.2f}  tv={row.avg_tv:.2f}", flush=True)
        checkpoint()
    finally:
        if fh:
            fh.close()
    return state, rows, particles


# ---------------------------------------------------------------------------
# canonical experiment settings
# ---------------------------------------------------------------------------


def case_study_spec(study, seed=0):
    """Synthetic dataset settings for the two case studies.

    Amplitudes are wider than the SyntheticSpec defaults so the truth carries
    a penalty mass comparable to the reference trajectories (the generated
    dataset header declares the actual values either way).
    """
    if study == 1:
        return SyntheticSpec(case="sparse", amp_low=2.0, amp_high=4.0, seed=seed)
    if study == 2:
        return SyntheticSpec(case="pwc", amp_low=-4.0, amp_high=4.0, seed=seed)
    raise ValueError("study must be 1 or 2")


def case_study_config(study, divergence="kl", method="myvt", seed=0):
    """Tuned settings for the sparse (study 1) and piecewise-constant
    (study 2) experiments. Step sizes are the values recorded in the run
    metadata of the acceptance suite."""
    if study not in (1, 2):
        raise ValueError("study must be 1 or 2")
    reg = Regularizer("l1") if study == 1 else Regularizer("tv1d")
    iters = 2000 if study == 1 else 4000
    base = TrainConfig(
        method=method,
        divergence=divergence,
        regularizer=reg,
        lam=1e-4,
        iters=iters,
        inner_steps=5,
        critic_steps=2,
        batch_size=100,
        n_particles=500,
        noise_dim=100,
        seed=seed,
        optimizer="sgd",
    )
    if divergence == "kl":
        alpha = 0.1
        eta_c = 0.05
    else:
        alpha = 0.01 if study == 1 else 0.1
        eta_c = 0.05
    if method == "vt":
        return replace(base, alpha=0.0, eta_particle=0.01, eta_critic=eta_c)
    return replace(base, alpha=alpha, eta_particle=1e-4,
                   eta_generator=1e-4, eta_critic=eta_c)
