"""Central finite-difference verification of every differentiated loss.

For a loss L and parameter set P, each coordinate p is perturbed by +-h and
``(L(p + h) - L(p - h)) / 2h`` is compared with the reverse-mode gradient.
The error for one loss is

    max_i |g_i - n_i| / max(max_i |g_i|, max_i |n_i|)

(an infinity-norm relative error). If a perturbation flips any relu/min
branch, the probe is retried with h/10 and skipped if it still crosses.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Optional

import numpy as np

from ..diffcore import Tensor, gradients, record_branches
from ..gac import Batch, actor_loss, critic_loss, deterministic_actor_loss
from ..mmd import KERNELS, KernelSpec, mmd_estimate, uniform_reference
from ..nets import MLP, ActorNet, QEnsemble

TOLERANCE = 1e-4
STEP = 1e-5
DEFAULT_SEEDS = tuple(range(20))
HIDDEN = (8, 8)


@dataclass
class CheckResult:
    loss: str
    seed: int
    rel_error: float
    coords: int
    skipped: int

    @property
    def passed(self) -> bool:
        return self.rel_error < TOLERANCE


def _same_branches(a: list, b: list) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def _probe(build, p: Tensor, idx, base: np.ndarray, base_log, h: float) -> Optional[float]:
    vals = []
    for sign in (1.0, -1.0):
        arr = base.copy()
        arr[idx] += sign * h
        p.data = arr
        with record_branches() as log:
            vals.append(build().item())
        if not _same_branches(log, base_log):
            return None
    return (vals[0] - vals[1]) / (2.0 * h)


def check_loss(name: str, seed: int, build: Callable[[], Tensor], params: Mapping[str, Tensor],
               h: float = STEP, corrupt: bool = False) -> CheckResult:
    """Compare reverse-mode and finite-difference gradients of ``build()`` w.r.t. ``params``.

    ``build`` must read the parameter tensors afresh on every call.
    """
    with record_branches() as base_log:
        loss = build()
    analytic = gradients(loss, params)
    if corrupt:  # negative control: perturb one gradient entry
        first = next(iter(analytic))
        analytic[first] = analytic[first].copy()
        analytic[first].flat[0] += 1.0
    got, want, skipped = [], [], 0
    for key, p in params.items():
        base = p.data
        try:
            for idx in np.ndindex(base.shape):
                fd = _probe(build, p, idx, base, base_log, h)
                if fd is None:
                    fd = _probe(build, p, idx, base, base_log, h / 10)
                if fd is None:
                    skipped += 1
                    continue
                got.append(analytic[key][idx])
                want.append(fd)
        finally:
            p.data = base
    got_a, want_a = np.array(got), np.array(want)
    scale = max(np.abs(got_a).max(initial=0.0), np.abs(want_a).max(initial=0.0))
    err = float(np.abs(got_a - want_a).max(initial=0.0) / scale) if scale > 0 else 0.0
    return CheckResult(name, seed, err, len(got), skipped)


# -- suites ----------------------------------------------------------------------

def _problem(seed: int):
    rng = np.random.default_rng(seed)
    sd, ad, nd, b, n = 3, 2, 2, 5, 4
    actor = ActorNet(sd, ad, nd, HIDDEN, rng)
    ens = QEnsemble(sd, ad, HIDDEN, rng)
    # Targets differ from online critics so the bootstrap term is non-trivial.
    for p in list(ens.q2a.params.values()) + list(ens.q2b.params.values()):
        p.data = p.data + 0.1 * rng.standard_normal(p.data.shape)
    batch = Batch(rng.standard_normal((b, sd)), rng.uniform(-1, 1, (b, ad)), rng.standard_normal(b),
                  rng.standard_normal((b, sd)), (rng.random(b) < 0.3).astype(float))
    z = rng.standard_normal((b, n, nd))
    ref = uniform_reference(rng, b, n, ad)
    next_a = rng.uniform(-1, 1, (b, ad))
    return rng, actor, ens, batch, z, ref, next_a


def suite(seed: int, corrupt: Optional[str] = None) -> list[CheckResult]:
    rng, actor, ens, batch, z, ref, next_a = _problem(seed)
    results = []

    def run(name, build, params):
        results.append(check_loss(name, seed, build, params, corrupt=(name == corrupt)))

    mlp = MLP([3, *HIDDEN, 2], rng, tanh_out=True)
    x = rng.standard_normal((6, 3))
    run("mlp", lambda: (mlp(x) * mlp(x)).sum(), mlp.params)

    for fam in KERNELS:
        k = KernelSpec(fam, 0.8)
        X = {"X": Tensor(rng.standard_normal((5, 2)), requires_grad=True)}
        Y = rng.standard_normal((6, 2))
        run(f"mmd/{fam}", lambda k=k, X=X: mmd_estimate(X["X"], Y, k), X)

    run("critic_loss", lambda: critic_loss(batch, ens, next_a, 0.9), ens.online_params())

    for fam in KERNELS:
        k = KernelSpec(fam, 0.8)
        run(f"actor_loss/{fam}", lambda k=k: actor_loss(batch.s, actor, ens, 1.3, k, z, ref)[0], actor.params)

    run("deterministic_actor_loss", lambda: deterministic_actor_loss(batch.s, actor, ens), actor.params)

    # alpha objective: log(alpha) * (beta - MMD), MMD held constant
    mmd_value = actor_loss(batch.s, actor, ens, 1.0, KernelSpec(), z, ref)[1].item()
    beta = float(rng.uniform(0.05, 0.5))
    la = {"log_alpha": Tensor(np.array(float(rng.normal())), requires_grad=True)}
    run("alpha_objective", lambda: la["log_alpha"] * (beta - mmd_value), la)
    return results


def run_suites(seeds: Iterable[int] = DEFAULT_SEEDS, corrupt: Optional[str] = None) -> dict[str, CheckResult]:
    """Worst result per loss across ``seeds``."""
    worst: dict[str, CheckResult] = {}
    for seed in seeds:
        for r in suite(seed, corrupt):
            if r.loss not in worst or r.rel_error > worst[r.loss].rel_error:
                worst[r.loss] = r
    return worst


def format_report(worst: Mapping[str, CheckResult]) -> str:
    lines = [f"{'loss':<28}{'worst rel err':>15}{'seed':>6}{'coords':>8}{'skipped':>9}  status"]
    for name, r in worst.items():
        lines.append(f"{name:<28}{r.rel_error:>15.3e}{r.seed:>6}{r.coords:>8}{r.skipped:>9}  "
                     f"{'ok' if r.passed else 'FAIL'}")
    return "\n".join(lines)
