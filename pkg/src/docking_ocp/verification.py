"""Oracle checks run by ``docking-ocp verify`` and the test suite."""

from typing import NamedTuple

import numpy as np

from .dynamics import Q_T, TRANS, W_T, make_state
from .propagation import propagate_analytic, propagate_reference, propagate_trapezoidal
from .solver import derivative_check
from .transcription import initial_guess, transcribe


class Check(NamedTuple):
    name: str
    passed: bool
    value: float
    limit: float

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: {self.value:.3e} (limit {self.limit:g})"


def random_translational_states(count, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(-10.0, 10.0, (count, 6))


def cw_oracle(p, count=100, t_end=400.0, seed=0):
    """Worst relative gap between analytic CW and the reference integrator."""
    times = np.linspace(0.0, t_end, 41)
    worst = 0.0
    for s0 in random_translational_states(count, seed):
        x0 = make_state(s0[:3], s0[3:])
        ref = propagate_reference(x0, p, times)[:, TRANS]
        ana = propagate_analytic(x0, p, times)
        worst = max(worst, float(np.max(np.abs(ref - ana)) / np.max(np.abs(ana))))
    return worst


def conservation_oracle(scenario, t_end=400.0):
    """Relative drift of target energy and angular-momentum norm."""
    p = scenario.body_params
    times = np.linspace(0.0, t_end, 201)
    x0 = scenario.initial_state()
    # a tumbling rate exercises the gyroscopic coupling, unlike the pure spin
    x0[W_T] = [0.01, 0.052359, -0.02]
    X = propagate_reference(x0, p, times)
    j = p.inertia_t.as_array()
    w = X[:, W_T]
    energy = 0.5 * np.sum(j * w * w, axis=1)
    momentum = np.linalg.norm(j * w, axis=1)
    return max(float(np.max(np.abs(energy / energy[0] - 1))),
               float(np.max(np.abs(momentum / momentum[0] - 1))))


def convergence_ratio(scenario, t_end=100.0, dt=1.0):
    """Global-error ratio of the trapezoidal propagator under step halving."""
    p = scenario.body_params
    x0 = scenario.initial_state()
    x0[3:6] = [0.01, -0.02, 0.005]
    x0[6:9] = [0.02, -0.01, 0.03]
    errors = []
    for h in (dt, dt / 2):
        times = np.linspace(0.0, t_end, int(round(t_end / h)) + 1)
        ref = propagate_reference(x0, p, times)
        trap = propagate_trapezoidal(x0, p, times)
        errors.append(float(np.max(np.abs(trap[-1] - ref[-1]))))
    return errors[0] / errors[1]


def derivative_gate(scenario, steps=None, z=None):
    nlp = transcribe(scenario, steps)
    if z is None:
        z = initial_guess(scenario, nlp.steps)
    return derivative_check(nlp.as_problem(), z).max_error


def run_oracles(scenario, steps=20):
    """The fast part of the verification suite."""
    p = scenario.body_params
    ratio = convergence_ratio(scenario)
    spin = propagate_reference(scenario.initial_state(), p, np.linspace(0, 400, 5))[:, W_T]
    quat = propagate_reference(scenario.initial_state(), p, np.linspace(0, 400, 5))[:, Q_T]
    return [
        Check("CW analytic vs reference, 100 states, 400 s", *_le(cw_oracle(p), 1e-8)),
        Check("target energy/momentum conservation, 400 s", *_le(conservation_oracle(scenario), 1e-8)),
        Check("trapezoidal step-halving error ratio - 4", *_le(abs(ratio - 4.0), 0.5)),
        Check("stable target spin preserved", *_le(float(np.max(np.abs(spin - spin[0]))), 1e-9)),
        Check("target quaternion stays unit", *_le(float(np.max(np.abs(np.sum(quat**2, 1) - 1))), 1e-8)),
        Check(f"derivative check at initial guess (N={steps})",
              *_le(derivative_gate(scenario, steps), 1e-5)),
    ]


def _le(value, limit):
    return bool(value <= limit), float(value), float(limit)

