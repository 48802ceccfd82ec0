import numpy as np
import pytest

from boundedmcmc.checks import (
    CheckReport,
    integrator_suite,
    mutation_suite,
    reference_log_likelihood,
    run_suite,
    stationarity_suite,
)
from boundedmcmc.reservoir import PRESETS, build_synthetic_model, generate_synthetic_observations, log_likelihood


class TestChecks:
    def test_report_accumulates(self):
        rep = CheckReport("x")
        rep.add("a", True)
        rep.add("b", False, "detail")
        assert not rep.passed
        assert str(rep).splitlines() == ["x: FAIL", "  [PASS] a", "  [FAIL] b: detail"]

    def test_integrators_small(self):
        rep = integrator_suite(n_states=300)
        assert rep.passed, str(rep)
        assert rep.data["endpoint_rule_failures"] > 0

    def test_stationarity_short_chains(self):
        rep = stationarity_suite(n_steps=100_000, threshold=4.0)
        assert rep.passed, str(rep)

    def test_broken_acceptance_rule_detected(self):
        rep = mutation_suite()
        assert rep.passed, str(rep)

    def test_reference_likelihood_agrees(self):
        model = build_synthetic_model(PRESETS["desk"])
        obs = generate_synthetic_observations(model, noise_seed=2)
        ref = float(reference_log_likelihood(model, obs, model.parameters()))
        assert log_likelihood(model, obs) == pytest.approx(ref, rel=1e-10)

    def test_unknown_suite(self):
        with pytest.raises(ValueError):
            run_suite("nope")
