"""Compilation of a trained model into a qubit gate sequence.

Under the Jordan-Wigner mapping (mode j on qubit j), the adjacent-pair
Majorana rotations of the FLO ansatz become 1- and 2-local matchgates:
pair (2j, 2j+1) is an Rz on qubit j, pair (2j+1, 2j+2) an Rxx on (j, j+1).
The input state needs one Ry and three CNOTs per register. This module emits
that circuit as a gate list and serializes it (a plain native text format and
OpenQASM 2.0), which is all a quantum device needs to sample from the model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InvalidInputError
from .flo import FloAnsatz, brickwork_layout
from .magic import MagicAngles

#: name -> (number of qubit operands, takes an angle). "h" is never emitted by
#: the compile passes; it appears when the Rxx-expanded QASM form is read back
#: for simulation.
GATE_ARITY: dict[str, tuple[int, bool]] = {
    "ry": (1, True),
    "rz": (1, True),
    "rxx": (2, True),
    "cnot": (2, False),
    "h": (1, False),
    "measure": (1, False),
}


@dataclass(frozen=True)
class Gate:
    name: str
    angle: float | None
    qubits: tuple[int, ...]


@dataclass
class GateList:
    """An ordered qubit circuit; measure gates must form the tail."""

    qubits: int
    gates: list[Gate] = field(default_factory=list)

    def __post_init__(self):
        if self.qubits < 1:
            raise InvalidInputError(f"qubit count must be positive, got {self.qubits}")
        seen_measure = False
        measured = set()
        for g in self.gates:
            if g.name not in GATE_ARITY:
                raise InvalidInputError(f"unknown gate name {g.name!r}")
            arity, takes_angle = GATE_ARITY[g.name]
            if len(g.qubits) != arity:
                raise InvalidInputError(
                    f"gate {g.name} expects {arity} qubit(s), got {g.qubits}"
                )
            if takes_angle != (g.angle is not None):
                raise InvalidInputError(
                    f"gate {g.name} angle mismatch: angle={g.angle!r}"
                )
            if any(not 0 <= q < self.qubits for q in g.qubits):
                raise InvalidInputError(
                    f"gate {g.name} qubits {g.qubits} out of range for {self.qubits}"
                )
            if len(set(g.qubits)) != len(g.qubits):
                raise InvalidInputError(f"gate {g.name} repeats a qubit: {g.qubits}")
            if g.name == "measure":
                seen_measure = True
                if g.qubits[0] in measured:
                    raise InvalidInputError(f"qubit {g.qubits[0]} measured twice")
                measured.add(g.qubits[0])
            elif seen_measure:
                raise InvalidInputError("non-measure gate after a measure gate")

    @property
    def measured_qubits(self) -> tuple[int, ...]:
        return tuple(g.qubits[0] for g in self.gates if g.name == "measure")

    def extend(self, other: "GateList") -> "GateList":
        if other.qubits != self.qubits:
            raise InvalidInputError("cannot concatenate circuits of different width")
        return GateList(self.qubits, self.gates + other.gates)


def compile_input_prep(magic: MagicAngles) -> GateList:
    """Circuit preparing the product of magic registers from |0...0>.

    Register j: ry(2*alpha_j) on qubit 4j, then a CNOT chain down the
    register, giving cos(a)|0000> + sin(a)|1111> on qubits 4j..4j+3.
    """
    gates = []
    for j in range(magic.N):
        q = 4 * j
        gates.append(Gate("ry", 2.0 * float(magic.alpha[j]), (q,)))
        for t in range(3):
            gates.append(Gate("cnot", None, (q + t, q + t + 1)))
    return GateList(4 * magic.N, gates)


def compile_flo(ansatz: FloAnsatz) -> GateList:
    """Matchgate sequence realizing the brickwork of Majorana rotations.

    A rotation by theta on Majorana pair (p, p+1) compiles to rz(-theta) on
    qubit p/2 when p is even, and rxx(-theta) on qubits ((p-1)/2, (p+1)/2)
    when p is odd; gate order follows sublayer application order.
    """
    d = ansatz.d
    pairs, offsets = brickwork_layout(d)
    gates = []
    for layer in range(ansatz.layers):
        flat = ansatz.angles[layer]
        for s in range(2 * d):
            for k, p in enumerate(pairs[s]):
                theta = float(flat[offsets[s] + k])
                if p % 2 == 0:
                    gates.append(Gate("rz", -theta, (p // 2,)))
                else:
                    gates.append(Gate("rxx", -theta, ((p - 1) // 2, (p + 1) // 2)))
    return GateList(d, gates)


def measured_qubits(N: int, k: int = 3) -> tuple[int, ...]:
    """Qubits carrying data variables: the first k of each 4-qubit register."""
    return tuple(4 * r + i for r in range(N) for i in range(k))


def compile_model(model) -> GateList:
    """Full sampling circuit: preparation, FLO matchgates, measurements."""
    prep = compile_input_prep(model.magic)
    flo = compile_flo(model.ansatz)
    meas = GateList(model.d, [Gate("measure", None, (q,))
                              for q in measured_qubits(model.N, model.k)])
    return prep.extend(flo).extend(meas)


# -- serialization -----------------------------------------------------------


def export(model, fmt: str = "native") -> str:
    """Serialize the compiled model circuit as text."""
    circuit = compile_model(model)
    if fmt == "native":
        return to_native(circuit)
    if fmt == "openqasm2":
        return to_openqasm2(circuit)
    raise InvalidInputError(f"unknown export format {fmt!r}")


def to_native(circuit: GateList) -> str:
    """Native text form: a qubits header, one gate per line, measures last."""
    lines = [f"qubits {circuit.qubits}"]
    for g in circuit.gates:
        parts = [g.name]
        if g.angle is not None:
            parts.append(repr(float(g.angle)))
        parts.extend(str(q) for q in g.qubits)
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def parse_native(text: str) -> GateList:
    """Inverse of to_native; '#' comments and blank lines are skipped."""
    qubits = None
    gates = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if qubits is None:
            if tokens[0] != "qubits" or len(tokens) != 2:
                raise InvalidInputError(
                    f"line {lineno}: expected 'qubits <int>' header, got {raw!r}"
                )
            qubits = _parse_int(tokens[1], lineno)
            continue
        name = tokens[0]
        if name not in GATE_ARITY:
            raise InvalidInputError(f"line {lineno}: unknown gate {name!r}")
        arity, takes_angle = GATE_ARITY[name]
        expected = 1 + (1 if takes_angle else 0) + arity
        if len(tokens) != expected:
            raise InvalidInputError(
                f"line {lineno}: gate {name} takes {expected - 1} arguments"
            )
        pos = 1
        angle = None
        if takes_angle:
            try:
                angle = float(tokens[pos])
            except ValueError:
                raise InvalidInputError(
                    f"line {lineno}: bad angle {tokens[pos]!r}"
                ) from None
            pos += 1
        qs = tuple(_parse_int(t, lineno) for t in tokens[pos:])
        gates.append(Gate(name, angle, qs))
    if qubits is None:
        raise InvalidInputError("missing 'qubits' header")
    return GateList(qubits, gates)


def _parse_int(token: str, lineno: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise InvalidInputError(f"line {lineno}: expected integer, got {token!r}") from None


def to_openqasm2(circuit: GateList) -> str:
    """OpenQASM 2.0 with the qelib1 gate set; rxx is expanded in place.

    rxx(t) = (H x H) cnot (1 x rz(t)) cnot (H x H), the standard basis-change
    of the ZZ rotation, so only library gates appear in the output.
    """
    meas = circuit.measured_qubits
    lines = [
        "OPENQASM 2.0;",
        'include "qelib1.inc";',
        f"qreg q[{circuit.qubits}];",
    ]
    if meas:
        lines.append(f"creg c[{len(meas)}];")
    clbit = {q: i for i, q in enumerate(meas)}
    for g in circuit.gates:
        if g.name == "ry":
            lines.append(f"ry({repr(float(g.angle))}) q[{g.qubits[0]}];")
        elif g.name == "rz":
            lines.append(f"rz({repr(float(g.angle))}) q[{g.qubits[0]}];")
        elif g.name == "cnot":
            lines.append(f"cx q[{g.qubits[0]}],q[{g.qubits[1]}];")
        elif g.name == "h":
            lines.append(f"h q[{g.qubits[0]}];")
        elif g.name == "rxx":
            a, b = g.qubits
            ang = repr(float(g.angle))
            lines.extend([
                f"h q[{a}];",
                f"h q[{b}];",
                f"cx q[{a}],q[{b}];",
                f"rz({ang}) q[{b}];",
                f"cx q[{a}],q[{b}];",
                f"h q[{a}];",
                f"h q[{b}];",
            ])
        elif g.name == "measure":
            q = g.qubits[0]
            lines.append(f"measure q[{q}] -> c[{clbit[q]}];")
    return "\n".join(lines) + "\n"
