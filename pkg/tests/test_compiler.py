"""Circuit compilation and serialization.

The QASM2 output is checked by translating it back into the internal gate
vocabulary here in the test (a deliberately separate reader) and simulating
both circuits, so the rxx expansion is verified rather than assumed.
"""

import re

import numpy as np
import pytest

from fermiborn.compiler import (
    Gate,
    GateList,
    compile_flo,
    compile_input_prep,
    compile_model,
    export,
    measured_qubits,
    parse_native,
    to_native,
    to_openqasm2,
)
from fermiborn.engine import FbmModel, ZString, all_zstrings, zstring_expectation
from fermiborn.errors import InvalidInputError
from fermiborn.flo import FloAnsatz, angles_per_layer
from fermiborn.magic import MagicAngles
from fermiborn.oracle import simulate_circuit


@pytest.mark.parametrize("gate", [
    Gate("rx", 0.1, (0,)),       # unknown name
    Gate("ry", None, (0,)),      # missing angle
    Gate("cnot", 0.1, (0, 1)),   # angle on an unparametrized gate
    Gate("cnot", None, (0, 0)),  # duplicate qubits
    Gate("ry", 0.1, (0, 1)),     # wrong arity
])
def test_gate_validation(gate):
    with pytest.raises(InvalidInputError):
        GateList(2, [gate])


def test_gatelist_rejects_out_of_range_and_bad_measure_order():
    with pytest.raises(InvalidInputError):
        GateList(2, [Gate("ry", 0.1, (2,))])
    with pytest.raises(InvalidInputError):
        GateList(2, [Gate("measure", None, (0,)), Gate("ry", 0.1, (1,))])
    with pytest.raises(InvalidInputError):
        GateList(2, [Gate("measure", None, (0,)), Gate("measure", None, (0,))])


def test_input_prep_gate_counts():
    circuit = compile_input_prep(MagicAngles(2, np.array([0.3, 0.9])))
    names = [g.name for g in circuit.gates]
    assert names.count("ry") == 2
    assert names.count("cnot") == 6
    assert circuit.gates[0].angle == pytest.approx(0.6)  # ry(2 alpha)


def test_prep_structure_per_register():
    circuit = compile_input_prep(MagicAngles(1, np.array([np.pi / 4])))
    spec = [(g.name, g.qubits) for g in circuit.gates]
    assert spec == [("ry", (0,)), ("cnot", (0, 1)), ("cnot", (1, 2)), ("cnot", (2, 3))]


def test_flo_rotation_gate_mapping():
    d = 2
    ansatz = FloAnsatz.random(d, 1, np.random.default_rng(0))
    circuit = compile_flo(ansatz)
    assert len(circuit.gates) == angles_per_layer(d)
    # even Majorana pairs (intra-mode) become rz, odd ones become rxx
    kinds = {g.name for g in circuit.gates}
    assert kinds == {"rz", "rxx"}
    rz = [g for g in circuit.gates if g.name == "rz"]
    rxx = [g for g in circuit.gates if g.name == "rxx"]
    assert all(len(g.qubits) == 1 for g in rz)
    assert all(g.qubits[1] == g.qubits[0] + 1 for g in rxx)


def test_flo_gate_count_scales_with_layers():
    d = 4
    for layers in (1, 3):
        circuit = compile_flo(FloAnsatz.identity(d, layers))
        assert len(circuit.gates) == layers * angles_per_layer(d)


def test_measured_qubits_layout():
    assert measured_qubits(1) == (0, 1, 2)
    assert measured_qubits(3) == (0, 1, 2, 4, 5, 6, 8, 9, 10)


def test_compiled_model_reproduces_engine_expectations():
    rng = np.random.default_rng(1)
    model = FbmModel.random(1, 1, rng)
    sv = simulate_circuit(compile_model(model))
    probs = np.abs(sv.amplitudes) ** 2
    for z in all_zstrings(model.n, 2):
        signs = np.ones(16)
        for idx in range(16):
            parity = sum((idx >> (3 - v)) & 1 for v in z.indices)
            signs[idx] = (-1.0) ** parity
        assert zstring_expectation(model, z) == pytest.approx(
            float(signs @ probs), abs=1e-9)


def test_native_round_trip_is_byte_identical():
    model = FbmModel.random(2, 2, np.random.default_rng(3))
    text = export(model, "native")
    assert to_native(parse_native(text)) == text


def test_native_parse_reports_line_numbers():
    with pytest.raises(InvalidInputError, match="line 3"):
        parse_native("qubits 2\nry 0.5 0\nwat 1\n")
    with pytest.raises(InvalidInputError, match="line 1"):
        parse_native("cubits 2\n")


def test_native_parse_ignores_comments_and_blank_lines():
    circuit = parse_native("# header\nqubits 2\n\nry 0.25 0  # inline\nmeasure 0\n")
    assert [g.name for g in circuit.gates] == ["ry", "measure"]


def test_qasm_header_and_footer():
    model = FbmModel.random(1, 1, np.random.default_rng(4))
    text = export(model, "openqasm2")
    lines = text.splitlines()
    assert lines[0] == "OPENQASM 2.0;"
    assert lines[1] == 'include "qelib1.inc";'
    assert "qreg q[4];" in lines and "creg c[3];" in lines
    assert sum(1 for ln in lines if ln.startswith("measure")) == 3


_QASM_LINE = re.compile(
    r"(?P<name>[a-z]+)(\((?P<angle>[^)]+)\))?\s+q\[(?P<a>\d+)\](,q\[(?P<b>\d+)\])?;"
)


def _parse_qasm_body(text):
    """Minimal independent QASM reader for round-trip simulation."""
    gates = []
    qubits = None
    for line in text.splitlines():
        line = line.strip()
        if line.startswith("qreg"):
            qubits = int(re.search(r"\[(\d+)\]", line).group(1))
            continue
        if (not line or line.startswith(("OPENQASM", "include", "creg", "measure",
                                         "barrier"))):
            continue
        m = _QASM_LINE.fullmatch(line.replace(" ", "", 0))
        assert m, f"unparsed qasm line: {line!r}"
        name = {"cx": "cnot"}.get(m.group("name"), m.group("name"))
        angle = float(m.group("angle")) if m.group("angle") else None
        qs = (int(m.group("a")),) + ((int(m.group("b")),) if m.group("b") else ())
        gates.append(Gate(name, angle, qs))
    return GateList(qubits, gates)


def test_qasm_expansion_simulates_identically():
    model = FbmModel.random(1, 2, np.random.default_rng(5))
    native = compile_model(model)
    qasm = _parse_qasm_body(to_openqasm2(native))
    sv1 = simulate_circuit(native)
    sv2 = simulate_circuit(qasm)
    fidelity = abs(np.vdot(sv1.amplitudes, sv2.amplitudes)) ** 2
    assert fidelity >= 1 - 1e-10


def test_qasm_prep_reaches_bell_like_state():
    prep = compile_input_prep(MagicAngles(1, np.array([np.pi / 4])))
    qasm = _parse_qasm_body(to_openqasm2(prep))
    sv = simulate_circuit(qasm)
    expect = np.zeros(16, dtype=complex)
    expect[0b0000] = expect[0b1111] = 1 / np.sqrt(2)
    assert abs(np.vdot(expect, sv.amplitudes)) ** 2 >= 1 - 1e-10


def test_export_rejects_unknown_format():
    model = FbmModel.random(1, 1, np.random.default_rng(6))
    with pytest.raises(InvalidInputError):
        export(model, "qasm3")
