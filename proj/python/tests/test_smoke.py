import math
import os

import numpy as np
import pytest

import kinsobol

MODELS = os.environ.get("KINSOBOL_MODEL_DIR", os.path.join(os.path.dirname(__file__), "..", "..", "models"))


@pytest.fixture(scope="module")
def mm():
    return kinsobol.load_model(os.path.join(MODELS, "michaelis_menten.model"))


def test_model_metadata(mm):
    assert mm.species == ["S", "E", "C", "P"]
    assert mm.parameters == ["k1", "k2", "k3"]
    nu = mm.stoichiometry()
    assert nu.shape == (4, 3)
    assert list(nu[:, 0]) == [-1, -1, 1, 0]
    assert mm.rates([1.0, 0.0, -1.0]) == pytest.approx([1.1e6, 1e-4, 0.09])


def test_parse_error_is_value_error():
    with pytest.raises(ValueError):
        kinsobol.parse_model("species: A\nx0: 1\nreaction k: A -> B\n")


def test_simulate_conserves(mm):
    times, states = kinsobol.simulate(mm, multiplier=1.0, master_seed=3, omega=2)
    assert times[0] == 0.0
    assert np.all(np.diff(times) > 0)
    assert np.all(states[:, 0] + states[:, 2] + states[:, 3] == states[0, 0] + states[0, 2] + states[0, 3])
    again_t, again_s = kinsobol.simulate(mm, multiplier=1.0, master_seed=3, omega=2)
    assert np.array_equal(times, again_t) and np.array_equal(states, again_s)


def test_rre_product_is_monotone(mm):
    z = kinsobol.solve_rre(mm, list(np.linspace(0.0, 50.0, 101)))
    assert z.shape == (101, 4)
    assert np.all(np.diff(z[:, 3]) >= 0)


def test_exponential_decay_qoi():
    model = kinsobol.parse_model(
        "species: A\nx0: 1\nvnom: 1\ntfinal: 1\nreaction k: A -> 0\nrate k = 1 pm 10%\nqoi: timeavg A\n"
    )
    assert kinsobol.deterministic_qoi(model, [0.0], rtol=1e-10, atol=1e-12) == pytest.approx(1 - math.exp(-1), rel=1e-8)


def test_estimator_on_additive_function():
    a, b = kinsobol.saltelli_design(2, 2048, 7)
    f = lambda x: x[:, 0] + 2.0 * x[:, 1]
    fab = []
    for i in range(2):
        ab = a.copy()
        ab[:, i] = b[:, i]
        fab.append(list(f(ab)))
    est = kinsobol.estimate_indices(list(f(a)), list(f(b)), fab)
    assert est["total"] == pytest.approx([0.2, 0.8], abs=0.05)
    assert kinsobol.estimate_indices([1.0, 1.0], [1.0, 1.0], [[1.0, 1.0]]) is None


def test_sobol_and_command(mm, tmp_path):
    est = kinsobol.deterministic_sobol(mm, 256, design_seed=2)
    assert est["total"][2] > est["total"][0] > est["total"][1]
    ens = kinsobol.stochastic_sobol(mm, 1.0, 16, 3)
    assert len(ens["per_omega"]) == 3
    code, message, files = kinsobol.run_command("rre", os.path.join(MODELS, "michaelis_menten.model"), str(tmp_path))
    assert code == 0, message
    assert (tmp_path / "rre.csv").exists()
    with pytest.raises(TypeError):
        kinsobol.run_command("rre", "x", str(tmp_path), bogus=1)
