import numpy as np
import pytest

from boqc.angles import DyadicAngle
from boqc.calculus import isometry_matrix
from boqc.protocol import (
    ANGLE_OFFSET_PI,
    AliceInputs,
    CONSTANT_ZERO,
    HONEST,
    OscarInputs,
    public_info_for,
)
from boqc.qsim import ForcedOutcomes, fidelity, maximally_mixed
from boqc.security import (
    StructuralMismatchError,
    _kernel_view,
    _runner_ensemble,
    chi_square_uniform_p,
    compare_views,
    real_view,
    reference_output,
    run_simulator_boqc,
    run_simulator_boqco,
    simulator_view,
)

B = 2
BEHAVIORS = (HONEST, CONSTANT_ZERO, ANGLE_OFFSET_PI)


def dya(k, b=B):
    return DyadicAngle(k, b)


@pytest.fixture
def path_setup(path_graph_q):
    pub = public_info_for(path_graph_q, B)
    phi = {1: dya(1), 2: dya(3)}
    alice_in = AliceInputs(phi=phi, input_state=np.array([0.6, 0.8j]))
    return pub, alice_in, OscarInputs(psi={})


@pytest.fixture
def cc_setup(path_graph):
    pub = public_info_for(path_graph, B)
    phi = {1: dya(1), 2: dya(3), 3: dya(2)}
    return pub, AliceInputs(phi=phi, input_bits={1: 1}), OscarInputs(psi={})


# -- the relaxation as a state machine -----------------------------------------


def test_simulator_reproduces_the_computation(path_setup):
    pub, alice_in, oscar_in = path_setup
    V = isometry_matrix(pub.graph, alice_in.phi)
    ref = V @ alice_in.input_state
    for sim in (run_simulator_boqc, run_simulator_boqco):
        for seed in range(25):
            res, view = sim(pub, alice_in, oscar_in, "qq", seeds=seed)
            assert fidelity(res.output_state, ref) > 1 - 1e-9


def test_simulator_classical_output_channel(cc_setup):
    pub, alice_in, oscar_in = cc_setup
    ref = reference_output(pub, "cc", alice_in, oscar_in)
    counts = np.zeros(2)
    shots = 3000
    rng = np.random.default_rng(0)
    for _ in range(shots):
        res, _ = run_simulator_boqc(pub, alice_in, oscar_in, "cc",
                                    seeds=int(rng.integers(2 ** 31)))
        counts[res.output_bits[3]] += 1
    assert abs(counts[0] / shots - ref[0]) < 0.05


def test_simulator_view_schedule_matches_real(path_setup):
    pub, alice_in, oscar_in = path_setup
    rv = real_view(pub, alice_in, oscar_in, "qq", HONEST, "boqco",
                   engine="runner")
    iv = simulator_view(pub, alice_in, oscar_in, "qq", HONEST, "boqco",
                        engine="runner")
    assert rv.schedule == iv.schedule
    assert rv.measured_nodes == iv.measured_nodes


def test_simulator_teleported_input_is_padded_form(path_setup):
    # the leaf-wise received input state reads Z(.) X^t rho X^t Z(.)^dag
    pub, alice_in, oscar_in = path_setup
    forced = {1: 0, 2: 1, ("s", 1): 1, ("in", 1): 1, ("s", 2): 0}
    deltas = {1: dya(2), 2: dya(1)}
    res, view = run_simulator_boqc(pub, alice_in, oscar_in, "qq",
                                   deltas=deltas,
                                   outcome_source=ForcedOutcomes(forced))
    rho = view.received[1].matrix
    assert abs(np.trace(rho) - 1) < 1e-12
    vin = alice_in.input_state
    x = np.array([[0, 1], [1, 0]])
    base = x @ np.outer(vin, vin.conj()) @ x  # t = 1 branch forced
    # some Z rotation of the flipped input: equal diagonals, same moduli
    assert np.allclose(np.diag(rho), np.diag(base), atol=1e-12)
    assert np.allclose(np.abs(rho), np.abs(base), atol=1e-12)


# -- exhaustive view equality ----------------------------------------------------


@pytest.mark.parametrize("protocol", ["boqc", "boqco"])
@pytest.mark.parametrize("behavior", BEHAVIORS, ids=lambda b: b.name)
def test_blindness_path_graph_runner(path_setup, protocol, behavior):
    pub, alice_in, oscar_in = path_setup
    rv = real_view(pub, alice_in, oscar_in, "qq", behavior, protocol,
                   engine="runner")
    iv = simulator_view(pub, alice_in, oscar_in, "qq", behavior, protocol,
                        engine="runner")
    dist = compare_views(rv, iv)
    assert dist.classical_tvd < 1e-9
    assert dist.quantum_trace_distance < 1e-9


def test_negative_control_distinguishes(path_setup):
    pub, alice_in, oscar_in = path_setup
    rv = real_view(pub, alice_in, oscar_in, "qq", HONEST, "boqc",
                   engine="runner", randomness_off=True)
    iv = simulator_view(pub, alice_in, oscar_in, "qq", HONEST, "boqc",
                        engine="runner")
    dist = compare_views(rv, iv)
    assert dist.classical_tvd > 0.1


def test_kernel_matches_runner_both_worlds(path_setup):
    pub, alice_in, oscar_in = path_setup
    for world in ("real", "ideal"):
        for behavior in BEHAVIORS:
            kv = _kernel_view(pub, "qq", alice_in, oscar_in, behavior, world,
                              "boqc")
            rv = _runner_ensemble(pub, "qq", alice_in, oscar_in, behavior,
                                  world, "boqc", want_cond=False)
            assert np.abs(kv.classical - rv.classical).max() < 1e-12
            assert kv.meta["prob_max_err"] < 1e-12


def test_kernel_matches_runner_classical_input(cc_setup):
    # exercises the classical-bit phase handling in both engines
    pub, alice_in, oscar_in = cc_setup
    ref = reference_output(pub, "cc", alice_in, oscar_in)
    for world in ("real", "ideal"):
        kv = _kernel_view(pub, "cc", alice_in, oscar_in, HONEST, world,
                          "boqc", reference=ref)
        rv = _runner_ensemble(pub, "cc", alice_in, oscar_in, HONEST, world,
                              "boqc", want_cond=False)
        assert np.abs(kv.classical - rv.classical).max() < 1e-12
        assert kv.meta["channel_max_err"] < 1e-9


def test_kernel_blindness_path(path_setup):
    pub, alice_in, oscar_in = path_setup
    for behavior in BEHAVIORS:
        kv = _kernel_view(pub, "qq", alice_in, oscar_in, behavior, "real", "boqc")
        iv = _kernel_view(pub, "qq", alice_in, oscar_in, behavior, "ideal", "boqc")
        dist = compare_views(kv, iv)
        assert dist.classical_tvd < 1e-9
        assert dist.quantum_trace_distance < 1e-9


# -- pad statistics ----------------------------------------------------------------


def test_received_qubits_maximally_mixed(path_setup, cc_setup):
    for (pub, alice_in, oscar_in), mode in ((path_setup, "qq"),
                                            (cc_setup, "cc")):
        for world in ("real", "ideal"):
            view = (real_view if world == "real" else simulator_view)(
                pub, alice_in, oscar_in, mode, HONEST, "boqc", engine="runner")
            for node, mat in view.qubit_avg.items():
                assert np.abs(mat - np.eye(2) / 2).max() < 1e-10
            target = maximally_mixed(view.joint_avg.nodes)
            assert view.joint_avg.trace_distance(target) < 1e-10


def test_conditional_received_states_maximally_mixed(path_setup):
    pub, alice_in, oscar_in = path_setup
    for world in ("real", "ideal"):
        view = _runner_ensemble(pub, "qq", alice_in, oscar_in, HONEST, world,
                                "boqc", want_cond=True)
        for (node, delta_k), mat in view.cond_avg.items():
            assert np.abs(mat - np.eye(2) / 2).max() < 1e-10


def test_delta_histograms_exactly_uniform(path_setup):
    pub, alice_in, oscar_in = path_setup
    view = real_view(pub, alice_in, oscar_in, "qq", HONEST, "boqc",
                     engine="runner")
    for node in view.measured_nodes:
        hist = view.delta_histogram(node)
        assert np.abs(hist - 0.25).max() < 1e-12


# -- comparison plumbing -------------------------------------------------------------


def test_structural_mismatch_rejected(path_setup, cc_setup):
    pub, alice_in, oscar_in = path_setup
    ccpub, cc_in, cc_os = cc_setup
    a = real_view(pub, alice_in, oscar_in, "qq", HONEST, "boqc", engine="runner")
    b = real_view(ccpub, cc_in, cc_os, "cc", HONEST, "boqc", engine="runner")
    with pytest.raises(StructuralMismatchError):
        compare_views(a, b)


def test_identical_views_compare_to_zero(path_setup):
    pub, alice_in, oscar_in = path_setup
    v = real_view(pub, alice_in, oscar_in, "qq", HONEST, "boqc", engine="runner")
    dist = compare_views(v, v)
    assert dist == type(dist)(0.0, 0.0)
    assert dist.passes()


def test_sampled_views_are_statistically_close(path_setup):
    pub, alice_in, oscar_in = path_setup
    rv = real_view(pub, alice_in, oscar_in, "qq", HONEST, "boqc",
                   enumeration="sampled", shots=1500, seed=1)
    iv = simulator_view(pub, alice_in, oscar_in, "qq", HONEST, "boqc",
                        enumeration="sampled", shots=1500, seed=2)
    dist = compare_views(rv, iv)
    assert dist.classical_tvd < 0.25
    for node in rv.measured_nodes:
        p = chi_square_uniform_p(rv.delta_histogram(node) * 1500)
        assert p > 1e-4


def test_chi_square_reference_values():
    # classic table entries for the survival function
    from boqc.security import _chi2_sf

    assert _chi2_sf(3.841, 1) == pytest.approx(0.05, abs=2e-3)
    assert _chi2_sf(7.815, 3) == pytest.approx(0.05, abs=2e-3)
    assert _chi2_sf(0.0, 5) == 1.0
    skewed = chi_square_uniform_p(np.array([100, 0, 0, 0]))
    assert skewed < 1e-10
    flat = chi_square_uniform_p(np.array([25, 25, 25, 25]))
    assert flat > 0.99


def test_simulator_peak_qubits_bounded(lazy7, lazy7_total_order):
    # resource-side EPR bookkeeping stays within the lazy budget plus the
    # resource's own kept halves
    pub = public_info_for(lazy7, B, lazy7_total_order)
    phi = {i: dya(1) for i in lazy7.vertices}
    alice_in = AliceInputs(phi=phi, input_bits={1: 0, 2: 0})
    lazy_res, _ = run_simulator_boqco(pub, alice_in, OscarInputs(psi={}),
                                      "cc", seeds=0)
    big_res, _ = run_simulator_boqc(pub, alice_in, OscarInputs(psi={}),
                                    "cc", seeds=0)
    assert lazy_res.peak_live_qubits <= big_res.peak_live_qubits


def test_simulator_transcript_shape_matches_real(lazy7, lazy7_total_order):
    # the relaxation follows the lazy schedule event for event
    from boqc.protocol import run_boqco

    pub = public_info_for(lazy7, B, lazy7_total_order)
    phi = {i: dya(1) for i in lazy7.vertices}
    alice_in = AliceInputs(phi=phi, input_bits={1: 0, 2: 0})
    real = run_boqco(pub, alice_in, OscarInputs(psi={}), "cc", seeds=3)
    ideal, _ = run_simulator_boqco(pub, alice_in, OscarInputs(psi={}), "cc",
                                   seeds=3)
    shape = lambda t: [(type(e.message).__name__, getattr(e.message, "node", None))
                       for e in t.entries]
    assert shape(real.transcript) == shape(ideal.transcript)


def test_kernel_matches_runner_quantum_input_classical_output():
    # qc mode drives the teleport bits with every node measured; the
    # reference distribution is strongly biased, so errors would show
    from boqc.graphstate import OpenGraph

    g = OpenGraph(vertices={1, 2, 3}, edges={(1, 2), (2, 3)}, inputs={1},
                  outputs={3}, quantum_inputs={1})
    pub = public_info_for(g, B)
    phi = {1: dya(1), 2: dya(3), 3: dya(2)}
    alice_in = AliceInputs(phi=phi, input_state=np.array([0.6, 0.8j]))
    oscar_in = OscarInputs(psi={})
    ref = reference_output(pub, "qc", alice_in, oscar_in)
    assert ref.min() < 0.1 < ref.max()  # genuinely biased
    for world in ("real", "ideal"):
        kv = _kernel_view(pub, "qc", alice_in, oscar_in, HONEST, world,
                          "boqc", reference=ref)
        rv = _runner_ensemble(pub, "qc", alice_in, oscar_in, HONEST, world,
                              "boqc", want_cond=False)
        assert np.abs(kv.classical - rv.classical).max() < 1e-12
        assert kv.meta["channel_max_err"] < 1e-9
