"""Smoke test of the mpqi Python extension.

Build and install first:
    cd crates/py && maturin build --release -o dist && pip install dist/*.whl
"""

import math

import mpqi_py as m


def close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    comb = m.Comb.fiber()
    assert close(comb.phase_step(), 2 * math.pi * 200e3 / 100e6, 1e-12)
    step = 1e-3
    comb = comb.with_phase_step(step)

    # composed train agrees with the closed form
    p = m.Protocol("2B", 100, delay=10)
    assert p.phase_gain() == 1000
    u_model = p.unitary(step)
    u_train = p.compose(comb)
    overlap = abs(sum(u_model[i][j].conjugate() * u_train[i][j] for i in range(2) for j in range(2))) / 2
    assert overlap > 1 - 1e-9, overlap

    # sample, estimate, compare against the bound
    p = m.Protocol("1B", 1000)
    truth = (math.pi / 2, 2e-4)
    xi = m.best_reference_phase(p, *truth, 10_000, fit_theta=False)
    p = p.with_reference_phase(xi)
    rec = m.sample(p, *truth, shots=10_000, seed=7)
    est = m.estimate(p, rec, truth[0], truth[1], fit_theta=False)
    _, bound = m.cramer_rao(p, *truth, 10_000, fit_theta=False)
    assert abs(est.phase_step - truth[1]) < 5 * bound, (est, bound)

    # errors map to Python exceptions
    try:
        m.Protocol("1B", 7)
    except ValueError:
        pass
    else:
        raise AssertionError("odd 1B length accepted")
    assert issubclass(m.AmbiguityError, m.MpqiError)

    assert m.visibility_budget(1 / 8e-9, 100e-12, 0.1) == 184
    assert close(m.offset_resolution(100e6, 5e5, 5e5), 4e-4, 1e-12)
    assert m.doppler_phase(10e-12, copropagating=True) == 0.0
    assert m.best_pairing_phase([0.1, 0.4, 0.2, 0.3]) > 0
    assert m.rwa_infidelity(math.pi / 4, 30) < m.rwa_infidelity(math.pi / 4, 10)

    s = m.scan("1B", [(10, 0), (100, 0), (1000, 0)], shots=10_000, seeds=100, base_seed=1)
    assert abs(s.slope + 1) < 0.1, s
    print("python smoke test: ok", s)


if __name__ == "__main__":
    main()
