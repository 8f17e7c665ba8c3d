"""One KAM step, the truncated iteration and frequency freezing.

The perturbation is carried in classified form between steps: the
J-quadratic part is never reconstructed and reclassified, so float round-off
cannot leak back into the J-free and J-linear classes.  Only the new
Lie-series contributions are classified each step.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping

import mpmath
import numpy as np

from . import backend as bk
from .algebra import (BracketCaps, BracketStats, build_nls, flow_guard, lie_transform,
                      normal_form_hamiltonian, vector_field)
from .classify import R0, R1, R2, ClassifiedPerturbation, class_norms, classify, reconstruct
from .divisors import (RHO0, Schedule, divisor, eliminable, key_floor, schedule,
                       schedule_inequalities)
from .hamiltonian import ActionVector, Hamiltonian, SequenceState, weighted_norm
from .keys import MonomialKey, mi_add
from .weights import SigmaWeight

CONTRACTION_EXPONENT = 1.4


class ResonanceError(ArithmeticError):
    """A key passing the truncation filter has ``|D| < gamma * lambda_s``."""

    def __init__(self, key, js, D: float, floor: float, s: int):
        super().__init__(f"step {s}: |D| = {abs(D):.3e} < {floor:.3e} for J{list(js)} * {key}")
        self.key, self.js, self.D, self.floor, self.s = key, js, D, floor, s


class ContractFailure(RuntimeError):
    """Post-step norms missed their targets; the new state is still attached."""

    def __init__(self, state: "KamState", report: "StepReport"):
        failed = [k for k, ok in report.targets.items() if not ok]
        super().__init__(f"step {report.s}: targets failed: {failed}")
        self.state, self.report = state, report


@dataclass(frozen=True)
class NormalForm:
    """``N = sum (n^2 + Vtilde_n)|q_n|^2`` plus an inert accumulated constant."""

    Vtilde: Mapping[int, float]
    constant: float = 0.0

    def hamiltonian(self, w: SigmaWeight, window: int, backend: str = bk.FLOAT64) -> Hamiltonian:
        return normal_form_hamiltonian(w, window, self.Vtilde, backend)

    def shifted(self, shift: Mapping[int, float], constant: float = 0.0) -> "NormalForm":
        V = {n: v + shift.get(n, 0.0) for n, v in self.Vtilde.items()}
        return NormalForm(V, self.constant + constant)

    def bounded(self, bound: float = 2.0) -> bool:
        return all(abs(v) <= bound for v in self.Vtilde.values())


@dataclass(frozen=True)
class StepReport:
    s: int
    rho_s: float
    rho_next: float
    eps_s: float
    eps_next: float
    lambda_s: float
    norms_before: dict
    norms_after_rho_s: dict
    norms_after: dict
    worst_divisor: float
    divisor_guard: float
    worst_floor_ratio: float
    solved: int
    deferred: int
    resonant: int
    shift: dict
    shift_sup: float
    shift_imag_sup: float
    constant: float
    lie_tails: dict
    dropped_terms: int
    dropped_mass: float
    pruned_terms: int
    flow_guard: dict
    f_norms: dict
    schedule_checks: dict
    targets: dict
    theory_ladder: dict
    diagnostics: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.targets.values())

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class KamState:
    """Snapshot between steps (immutable)."""

    s: int
    normal: NormalForm
    pert: ClassifiedPerturbation
    schedule: Schedule
    V_star: Mapping[int, float]
    i0: ActionVector
    eps0: float
    history: tuple = ()

    @property
    def weight(self) -> SigmaWeight:
        return self.pert.weight

    @property
    def window(self) -> int:
        return self.pert.window


# --------------------------------------------------------------------------

def _i0_power(a, i0: ActionVector, backend: str):
    v = bk.coerce(1, backend)
    for n, e in a:
        v = v * bk.coerce(i0[n], backend) ** e
    return v


def _real(x) -> float:
    re, _ = bk.real_imag(x)
    return float(re)


def _imag(x) -> float:
    return float(bk.real_imag(x)[1])


def resonant_part(P: ClassifiedPerturbation, i0: ActionVector):
    """``([R0], shift)``: the ``k = k' = 0`` parts evaluated at ``I(0)``.

    Returns the constant and the shift map as backend numbers (complex for
    float64, exact for rational); real parts are the physical values.
    """
    zero = bk.zero(P.backend)
    const = zero
    shift: dict = {}
    for key, c in P.r0.items():
        if not key.k and not key.kp:
            const = const + c * _i0_power(key.a, i0, P.backend)
    for (m, key), c in P.r1.items():
        if not key.k and not key.kp:
            shift[m] = shift.get(m, zero) + c * _i0_power(key.a, i0, P.backend)
    return const, shift


def strip_resonant(P: ClassifiedPerturbation) -> ClassifiedPerturbation:
    r0 = {k: c for k, c in P.r0.items() if k.k or k.kp}
    r1 = {(m, k): c for (m, k), c in P.r1.items() if k.k or k.kp}
    return P.replace(r0=r0, r1=r1)


def _with_j(key: MonomialKey, js) -> MonomialKey:
    extra = tuple((m, 1) for m in js)
    return MonomialKey(mi_add(key.a, extra), key.k, key.kp)


@dataclass
class HomologicalInfo:
    solved: int = 0
    deferred: int = 0
    resonant: int = 0
    worst_divisor: float = math.inf
    worst_floor_ratio: float = math.inf
    divisors: list = field(default_factory=list)


def solve_homological(P: ClassifiedPerturbation, normal: NormalForm, sched: Schedule, gamma: float,
                      info: HomologicalInfo | None = None):
    """Generator ``F = -i B / D`` for every eliminable nonresonant R0/R1 key.

    Returns
    -------
    (F, deferred) : pair of ClassifiedPerturbation
        ``deferred`` holds the nonresonant keys failing the truncation filter.

    Raises
    ------
    ResonanceError
        If an eliminable key has ``|D| < gamma * lambda_s``.
    """
    info = info if info is not None else HomologicalInfo()
    w = P.weight
    guard = gamma * sched.lambda_s
    iu = bk.imag_unit(P.backend)
    V = {n: bk.coerce(v, P.backend) for n, v in normal.Vtilde.items()} if P.backend != bk.FLOAT64 \
        else normal.Vtilde
    F0, F1, D0, D1 = {}, {}, {}, {}

    def handle(key, js, c, F, Dout):
        if key.resonant:
            info.resonant += 1
            return
        if not eliminable(_with_j(key, js), sched, w):
            Dout[(js[0], key) if js else key] = c
            info.deferred += 1
            return
        D = _exact_divisor(key, V, P.backend)
        mag = bk.magnitude(D) if P.backend != bk.FLOAT64 else abs(D)
        if mag < guard:
            raise ResonanceError(key, js, float(mag), guard, sched.s)
        info.solved += 1
        info.worst_divisor = min(info.worst_divisor, mag)
        info.worst_floor_ratio = min(info.worst_floor_ratio, key_floor(key, gamma) / sched.lambda_s)
        info.divisors.append(mag)
        F[(js[0], key) if js else key] = -iu * c / D

    for key, c in P.r0.items():
        handle(key, (), c, F0, D0)
    for (m, key), c in P.r1.items():
        handle(key, (m,), c, F1, D1)
    mk = lambda r0, r1: ClassifiedPerturbation(P.weight, P.window, P.backend, r0, r1, {}, P.i0)
    return mk(F0, F1), mk(D0, D1)


def _exact_divisor(key: MonomialKey, V, backend: str):
    if backend == bk.FLOAT64:
        return divisor(key, V)
    zero = bk.coerce(0, backend)
    d = zero
    for n, e in key.k:
        d = d + bk.coerce(e * n * n, backend) + V.get(n, zero) * e
    for n, e in key.kp:
        d = d - bk.coerce(e * n * n, backend) - V.get(n, zero) * e
    return d


def solved_part(P: ClassifiedPerturbation, F: ClassifiedPerturbation) -> ClassifiedPerturbation:
    """Entries of ``P`` whose keys were solved into ``F``."""
    return P.replace(r0={k: P.r0[k] for k in F.r0}, r1={k: P.r1[k] for k in F.r1}, r2={})


def _audit(P: ClassifiedPerturbation) -> bool:
    return all(key.conserving for _, _, key, _ in P.entries())


def _shift_bound(eps_next: float, sigma: float) -> float:
    return eps_next * math.exp(18.0 * math.exp(4.0 ** (1.0 / (sigma - 1.0))))


def kam_step(state: KamState, gamma: float, caps: BracketCaps | None = None, *,
             raise_on_failure: bool = True):
    """Eliminate the nonresonant R0/R1 part and re-route every produced term.

    Returns
    -------
    (KamState, StepReport)

    Raises
    ------
    ResonanceError
        Propagated from :func:`solve_homological`.
    ContractFailure
        If a desk target fails (the new state and report are attached).
    """
    caps = caps or BracketCaps()
    sched = state.schedule
    P = state.pert
    w = P.weight
    backend = P.backend
    rho, rho_next = sched.rho_s, sched.rho_next
    before = class_norms(P, rho)

    info = HomologicalInfo()
    F, deferred = solve_homological(P, state.normal, sched, gamma, info)
    solved = solved_part(P, F)
    Fh = reconstruct(F)
    f_norms = class_norms(F, rho)

    guard = flow_guard(Fh, rho + sched.delta_s, sched.delta_s)
    stats = BracketStats()
    if Fh:
        N = state.normal.hamiltonian(w, state.window, backend)
        # {N, F} = -(solved part) exactly; orders >= 2 of the N-series remain
        from_N, tail_N = lie_transform(N, Fh, caps, rho=rho, start=2, first_order=-reconstruct(solved),
                                       stats=stats)
        from_R, tail_R = lie_transform(reconstruct(P), Fh, caps, rho=rho, start=1, stats=stats)
        produced = classify(from_N + from_R, state.i0)
        tails = {"N": asdict(tail_N), "R": asdict(tail_R)}
    else:
        produced = ClassifiedPerturbation(w, state.window, backend, i0=state.i0)
        tails = {}
    kept = P.replace(r0={k: c for k, c in P.r0.items() if k not in F.r0},
                     r1={k: c for k, c in P.r1.items() if k not in F.r1})
    new = kept + produced
    const, shift_raw = resonant_part(new, state.i0)
    new = strip_resonant(new)
    shift = {m: _real(v) for m, v in shift_raw.items()}
    shift_imag = max((abs(_imag(v)) for v in shift_raw.values()), default=0.0)
    normal = state.normal.shifted(shift, _real(const))
    shift_sup = max((abs(v) for v in shift.values()), default=0.0)

    after_rho = class_norms(new, rho)
    after = class_norms(new, rho_next)
    eps0 = state.eps0
    eps_next = sched.eps_next
    next_sched = schedule(sched.s + 1, w.sigma, eps0, state.window)
    d_next = next_sched.d_s
    targets = {
        "r0_contraction": after[R0] <= before[R0] ** CONTRACTION_EXPONENT,
        "r1_bound": after[R1] <= eps_next ** 0.6,
        "r2_bound": after[R2] <= (1.0 + d_next) * eps0,
        "shift": shift_sup < 0.9 * eps_next,
        "conservation": _audit(new),
        "normal_form_bounded": normal.bounded(),
    }
    ladder = {
        "r0": after[R0] <= eps_next,
        "r1": after[R1] <= eps_next ** 0.6,
        "r2": after[R2] <= (1.0 + d_next) * eps0,
        "shift_m16": shift_sup <= sched.eps_s ** 0.5,
    }
    f_bound = 1.0 / (gamma * sched.eps_s ** 0.01)
    report = StepReport(
        s=sched.s, rho_s=rho, rho_next=rho_next, eps_s=sched.eps_s, eps_next=eps_next,
        lambda_s=sched.lambda_s, norms_before=before, norms_after_rho_s=after_rho, norms_after=after,
        worst_divisor=info.worst_divisor if info.solved else None,
        divisor_guard=gamma * sched.lambda_s,
        worst_floor_ratio=info.worst_floor_ratio if info.solved else None,
        solved=info.solved, deferred=info.deferred, resonant=info.resonant,
        shift={str(m): v for m, v in sorted(shift.items())}, shift_sup=shift_sup, shift_imag_sup=shift_imag,
        constant=_real(const), lie_tails=tails,
        dropped_terms=stats.dropped, dropped_mass=stats.dropped_mass, pruned_terms=stats.pruned,
        flow_guard={"passed": guard.passed, "log_lhs": _mp_str(guard.log_lhs), "overridden": not guard.passed},
        f_norms={"F0": f_norms[R0], "F1": f_norms[R1],
                 "F0_ok": f_norms[R0] <= f_bound * before[R0] * (1 + 1e-12),
                 "F1_ok": f_norms[R1] <= f_bound * before[R1] * (1 + 1e-12)},
        schedule_checks=schedule_inequalities(sched),
        targets=targets, theory_ladder=ladder,
        diagnostics={"shift_m15_bound": _shift_bound(eps_next, w.sigma),
                     "shift_m15_ok": shift_sup <= _shift_bound(eps_next, w.sigma),
                     "all_divisors_above_guard": all(d >= gamma * sched.lambda_s for d in info.divisors),
                     "terms": {R0: len(new.r0), R1: len(new.r1), R2: len(new.r2)}},
    )
    nxt = KamState(sched.s + 1, normal, new, next_sched, state.V_star, state.i0, eps0,
                   state.history + (report,))
    if raise_on_failure and not report.ok:
        raise ContractFailure(nxt, report)
    return nxt, report


def _mp_str(x) -> str:
    return mpmath.nstr(x, 12)


# --------------------------------------------------------------------------
# run configuration and pipeline

@dataclass(frozen=True)
class RunConfig:
    """Parameters of a desk run.

    Exactly one of ``eps`` and ``r0_target`` is used: with ``r0_target`` the
    nonlinearity is scaled so that the initial R0 plus-norm equals it.
    """

    sigma: float = 2.5
    gamma: float = 1e-3
    eps: float | None = None
    r0_target: float | None = 1e-8
    window: int = 3
    steps: int = 3
    degree_cap: int = 12
    order_cap: int = 12
    drop_threshold: float = 1e-16
    c_override: float | None = math.e
    backend: str = bk.FLOAT64
    freeze: bool = True
    freeze_tol: float = 1e-14
    freeze_max_outer: int = 8
    omega: Mapping[int, float] | None = None
    seed: int = 0
    threads: int = 1
    torus_samples: int = 100

    def validate(self) -> "RunConfig":
        if not self.sigma > 2:
            raise ValueError("sigma must exceed 2")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if (self.eps is None) == (self.r0_target is None):
            raise ValueError("give exactly one of eps and r0_target")
        if self.eps is not None and not 0 <= self.eps < 1:
            raise ValueError("eps must lie in [0, 1)")
        if self.r0_target is not None and not 0 < self.r0_target < 1:
            raise ValueError("r0_target must lie in (0, 1)")
        if self.c_override is not None and self.c_override < math.e:
            raise ValueError("c_override must be >= e")
        bk.check(self.backend)
        if self.freeze_tol <= 0 or self.freeze_max_outer < 1:
            raise ValueError("freeze_tol must be positive and freeze_max_outer >= 1")
        if self.torus_samples < 1:
            raise ValueError("torus_samples must be >= 1")
        self.caps()
        if self.omega is not None:
            missing = set(range(-self.window, self.window + 1)) - set(self.omega)
            if missing:
                raise ValueError(f"omega misses modes {sorted(missing)}")
        return self

    def caps(self) -> BracketCaps:
        return BracketCaps(self.degree_cap, self.order_cap, self.drop_threshold, self.threads)

    def weight(self) -> SigmaWeight:
        return SigmaWeight(self.sigma, self.c_override)

    def frequencies(self) -> dict[int, float]:
        """Prescribed ``omega``: explicit, or uniform on ``[0, 1]`` from ``seed``."""
        if self.omega is not None:
            return {int(n): float(v) for n, v in self.omega.items()}
        rng = np.random.default_rng(self.seed)
        vals = rng.random(2 * self.window + 1)
        return {n: float(v) for n, v in zip(range(-self.window, self.window + 1), vals)}


@dataclass(frozen=True)
class Prepared:
    """V-independent data: perturbation, its classification and ``eps``."""

    weight: SigmaWeight
    i0: ActionVector
    eps: float
    pert: ClassifiedPerturbation
    initial_const: object
    initial_shift: dict
    initial_norms: dict
    plain_norm: float


def prepare(config: RunConfig) -> Prepared:
    """Build the sextic part, classify it and move its resonant part aside."""
    w = config.weight()
    M = config.window
    i0 = ActionVector.torus(w, M)
    zeros = {n: 0.0 for n in range(-M, M + 1)}

    def sextic(eps):
        H = build_nls(M, eps, zeros, w, config.backend)
        return H.filter(lambda k: k.degree == 6)

    if config.r0_target is not None:
        unit = strip_resonant(classify(sextic(1.0), i0))
        base = class_norms(unit, RHO0)[R0]
        eps = config.r0_target / base
    else:
        eps = config.eps
    R = sextic(eps)
    P_full = classify(R, i0)
    const, shift = resonant_part(P_full, i0)
    P = strip_resonant(P_full)
    return Prepared(w, i0, eps, P, const, shift, class_norms(P, RHO0), weighted_norm(R, RHO0))


@dataclass
class PipelineResult:
    state: KamState
    status: str
    error: str | None
    initial: dict


def pipeline(config: RunConfig, V: Mapping[int, float], prep: Prepared | None = None) -> PipelineResult:
    """Initial normalisation plus ``config.steps`` KAM steps from parameter ``V``."""
    prep = prep or prepare(config)
    P = prep.pert
    shift0 = {m: _real(v) for m, v in prep.initial_shift.items()}
    normal = NormalForm(dict(V)).shifted(shift0, _real(prep.initial_const))
    eps0 = max(prep.plain_norm, *prep.initial_norms.values())
    initial = {"eps": prep.eps, "eps0": eps0, "norms": dict(prep.initial_norms), "plain_norm": prep.plain_norm,
               "initial_shift_sup": max((abs(v) for v in shift0.values()), default=0.0)}
    if eps0 == 0.0:
        eps0_sched = 0.5  # schedule needs eps0 in (0, 1); nothing to eliminate anyway
    else:
        eps0_sched = eps0
    state = KamState(0, normal, P, schedule(0, prep.weight.sigma, eps0_sched, config.window),
                     dict(V), prep.i0, eps0_sched)
    caps = config.caps()
    status, err = "ok", None
    for _ in range(config.steps):
        try:
            state, _rep = kam_step(state, config.gamma, caps)
        except ContractFailure as exc:
            state, status, err = exc.state, "contract_failure", str(exc)
            break
        except ResonanceError as exc:
            status, err = "resonance", str(exc)
            break
    return PipelineResult(state, status, err, initial)


@dataclass
class FreezeResult:
    V_star: dict
    residual: float
    residuals: list
    converged: bool
    result: PipelineResult


def freeze_frequencies(config: RunConfig, omega: Mapping[int, float], tol: float, max_outer: int,
                       prep: Prepared | None = None) -> FreezeResult:
    """Fixed point ``V <- V + (omega - Vtilde_S(V))`` with ``Vtilde_S`` from a full pipeline."""
    prep = prep or prepare(config)
    V = dict(omega)
    residuals = []
    res = None
    for _ in range(max_outer):
        res = pipeline(config, V, prep)
        Vt = res.state.normal.Vtilde
        r = max(abs(Vt[n] - omega[n]) for n in omega)
        residuals.append(r)
        if r <= tol or res.status != "ok":
            break
        V = {n: V[n] + (omega[n] - Vt[n]) for n in omega}
    return FreezeResult(V, residuals[-1], residuals, residuals[-1] <= tol, res)


def torus_residual(state: KamState, i0: ActionVector, samples: int, seed: int = 0) -> float:
    """``sup_n |X_H(q)_n - i(n^2+Vtilde_n) q_n| e^{w(n)}`` over random torus phases."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    w = state.weight
    M = state.window
    H = state.normal.hamiltonian(w, M, bk.FLOAT64) + reconstruct(state.pert).to_backend(bk.FLOAT64)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        th = rng.uniform(0.0, 2.0 * math.pi, 2 * M + 1)
        q = SequenceState.on_torus(i0, dict(zip(range(-M, M + 1), th.tolist())))
        X = vector_field(H, q, i0)
        for n in range(-M, M + 1):
            lin = 1j * (n * n + state.normal.Vtilde[n]) * q[n]
            worst = max(worst, abs(X[n] - lin) * math.exp(w(n)))
    return worst


@dataclass
class RunReport:
    config: RunConfig
    omega: dict
    status: str
    error: str | None
    initial: dict
    steps: list
    final: dict
    freeze: dict | None


def run(config: RunConfig) -> RunReport:
    """build -> classify -> S steps (inside frequency freezing when enabled)."""
    config.validate()
    omega = config.frequencies()
    prep = prepare(config)
    if config.freeze and config.steps > 0:
        fr = freeze_frequencies(config, omega, config.freeze_tol, config.freeze_max_outer, prep)
        res = fr.result
        freeze = {"V_star": {str(n): v for n, v in sorted(fr.V_star.items())}, "residual": fr.residual,
                  "residuals": fr.residuals, "converged": fr.converged,
                  "V_star_dist": max(abs(fr.V_star[n] - omega[n]) for n in omega)}
    else:
        res = pipeline(config, omega, prep)
        freeze = None
    st = res.state
    final = {
        "s": st.s,
        "Vtilde": {str(n): v for n, v in sorted(st.normal.Vtilde.items())},
        "constant": st.normal.constant,
        "norms": class_norms(st.pert, st.schedule.rho_s),
        "eps_S": st.schedule.eps_s,
        "terms": {R0: len(st.pert.r0), R1: len(st.pert.r1), R2: len(st.pert.r2)},
    }
    if config.steps > 0:
        final["torus_residual"] = torus_residual(st, st.i0, config.torus_samples, config.seed)
    return RunReport(config, {str(n): v for n, v in sorted(omega.items())}, res.status, res.error,
                     res.initial, [r.to_dict() for r in st.history], final, freeze)
