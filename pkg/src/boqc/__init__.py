"""Blind oracular quantum computation at desk scale.

Exact simulation of the two-client/one-server delegated-computation
protocols on graph states with flow: the measurement-calculus engine, the
lazy qubit scheduler, the three-party protocol state machines, and the
blindness harness that compares the server's view against the ideal-world
relaxations by exhaustive enumeration.
"""

from .angles import DyadicAngle, PrecisionMismatchError, add, correct_angle, to_radians
from .graphstate import (
    ClientGraphSpec,
    Flow,
    GraphError,
    InvalidConnectionError,
    OpenGraph,
    Slot,
    TotalOrder,
    assignment_set,
    brute_force_flow,
    find_flow,
    join_graphs,
    linearize,
    verify_flow,
)
from .calculus import (
    Pattern,
    PatternError,
    SizeError,
    build_lazy_pattern,
    build_p2_pattern,
    build_standard_pattern,
    channel_of_pattern,
    isometry_matrix,
    max_concurrent_qubits,
    run_pattern,
    runnability_check,
)
from .qsim import DensityMatrix, ForcedOutcomes, QuantumRegister, SeededOutcomes
from .protocol import (
    ANGLE_OFFSET_PI,
    AliceInputs,
    AlicePreSpec,
    BobBehavior,
    CONSTANT_ZERO,
    HONEST,
    IOMode,
    Keys,
    OscarInputs,
    OscarPreSpec,
    ProtocolError,
    PublicInfo,
    Seeds,
    Transcript,
    bob_custom,
    bob_honest,
    pre_protocol,
    public_info_for,
    run_boqc,
    run_boqco,
)
from .security import (
    BobView,
    StructuralMismatchError,
    ViewDistance,
    compare_views,
    real_view,
    run_simulator_boqc,
    run_simulator_boqco,
    simulator_view,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
