"""Case files: JSON description of a test system and its disturbance scenario."""

from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
import hashlib
import json

from .machine import MachineError, MachineParams
from .network import FaultSpec, NetworkError

__all__ = [
    "SCHEMA_VERSION",
    "CaseError",
    "CaseParseError",
    "CaseValidationError",
    "CaseBus",
    "CaseBranch",
    "CaseLoad",
    "CaseMachine",
    "BreakerOp",
    "Case",
    "load_case",
    "parse_case",
    "builtin_case_path",
]

SCHEMA_VERSION = 1
_DATA = Path(__file__).with_name("data")
BUILTIN_CASES = {"wscc9": _DATA / "wscc9.json"}


class CaseError(Exception):
    pass


class CaseParseError(CaseError):
    pass


class CaseValidationError(CaseError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid case:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class CaseBus:
    id: str
    v_nom_kv: float = 1.0


@dataclass(frozen=True)
class CaseBranch:
    id: str
    from_bus: str
    to_bus: str
    r: float
    x: float
    b: float = 0.0
    kind: str = "line"


@dataclass(frozen=True)
class CaseLoad:
    bus: str
    p: float
    q: float
    k: float = 0.0


@dataclass(frozen=True)
class CaseMachine:
    id: str
    bus: str
    params: MachineParams
    p: float
    v_set: float


@dataclass(frozen=True)
class BreakerOp:
    branch: str
    t: float
    action: str  # open | close


@dataclass(frozen=True)
class Case:
    name: str
    base_mva: float
    frequency: float
    buses: tuple
    branches: tuple
    loads: tuple
    machines: tuple
    slack: str
    faults: tuple = ()
    breaker_ops: tuple = ()
    recording: dict = field(default_factory=dict, compare=False, hash=False)
    provenance: str = field(default="", compare=False)

    @property
    def omega_s(self):
        import math
        return 2 * math.pi * self.frequency

    def bus_ids(self):
        return [b.id for b in self.buses]

    def with_allocation(self, k):
        """Copy with every load's allocation factor set to `k`."""
        return replace(self, loads=tuple(replace(ld, k=float(k)) for ld in self.loads))

    def without_events(self):
        return replace(self, faults=(), breaker_ops=())

    def to_dict(self):
        return {
            "schema": SCHEMA_VERSION,
            "name": self.name,
            "provenance": self.provenance,
            "system": {"base_mva": self.base_mva, "frequency_hz": self.frequency},
            "slack": self.slack,
            "buses": [{"id": b.id, "v_nom_kv": b.v_nom_kv} for b in self.buses],
            "branches": [{"id": b.id, "from": b.from_bus, "to": b.to_bus, "r": b.r,
                          "x": b.x, "b": b.b, "kind": b.kind} for b in self.branches],
            "loads": [asdict(ld) for ld in self.loads],
            "machines": [{"id": m.id, "bus": m.bus, "p": m.p, "v_set": m.v_set,
                          "params": asdict(m.params)} for m in self.machines],
            "events": {
                "faults": [{"bus": f.bus, "phases": "".join(f.phases), "r_fault": f.r_fault,
                            "t_apply": f.t_apply, "t_clear": f.t_clear} for f in self.faults],
                "breakers": [asdict(op) for op in self.breaker_ops],
            },
            "recording": dict(self.recording),
        }

    @property
    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def validate(self):
        problems = []
        ids = self.bus_ids()
        seen = set()
        for i, b in enumerate(self.buses):
            if b.id in seen:
                problems.append(f"buses[{i}].id: duplicate bus {b.id!r}")
            seen.add(b.id)
        for i, br in enumerate(self.branches):
            for end in ("from_bus", "to_bus"):
                if getattr(br, end) not in seen:
                    problems.append(f"branches[{i}] ({br.id}).{end}: unknown bus "
                                    f"{getattr(br, end)!r}")
            if br.x <= 0 or br.r < 0 or br.b < 0:
                problems.append(f"branches[{i}] ({br.id}): need x > 0, r >= 0, b >= 0")
        if len({br.id for br in self.branches}) != len(self.branches):
            problems.append("branches: duplicate branch ids")
        for i, ld in enumerate(self.loads):
            if ld.bus not in seen:
                problems.append(f"loads[{i}].bus: unknown bus {ld.bus!r}")
            if not abs(ld.k) < 1:
                problems.append(f"loads[{i}].k: allocation factor must satisfy |k| < 1")
            if ld.p <= 0 or ld.q < 0:
                problems.append(f"loads[{i}]: need p > 0 and q >= 0")
        gen_buses = set()
        for i, m in enumerate(self.machines):
            if m.bus not in seen:
                problems.append(f"machines[{i}].bus: unknown bus {m.bus!r}")
            if m.bus in gen_buses:
                problems.append(f"machines[{i}].bus: second machine at bus {m.bus!r}")
            gen_buses.add(m.bus)
            try:
                m.params.validate()
            except MachineError as exc:
                problems.append(f"machines[{i}].params: {exc}")
            if not m.v_set > 0:
                problems.append(f"machines[{i}].v_set: must be positive")
        if self.slack not in gen_buses:
            problems.append(f"slack: bus {self.slack!r} has no machine")
        for i, f in enumerate(self.faults):
            if f.bus not in seen:
                problems.append(f"events.faults[{i}].bus: unknown bus {f.bus!r}")
        names = {br.id for br in self.branches}
        for i, op in enumerate(self.breaker_ops):
            if op.branch not in names:
                problems.append(f"events.breakers[{i}].branch: unknown branch {op.branch!r}")
            if op.action not in ("open", "close"):
                problems.append(f"events.breakers[{i}].action: must be open or close")
        if not (self.base_mva > 0 and self.frequency > 0):
            problems.append("system: base_mva and frequency_hz must be positive")
        if problems:
            raise CaseValidationError(problems)
        return self


def _req(d, key, path):
    if key not in d:
        raise CaseValidationError([f"{path}.{key}: missing"])
    return d[key]


def parse_case(data):
    """Build and validate a Case from its decoded JSON mapping."""
    if not isinstance(data, dict):
        raise CaseParseError("case file must hold a JSON object")
    if data.get("schema") != SCHEMA_VERSION:
        raise CaseValidationError([f"schema: expected {SCHEMA_VERSION}, got {data.get('schema')!r}"])
    problems = []
    slack = _req(data, "slack", "")
    if isinstance(slack, list):
        if len(slack) != 1:
            raise CaseValidationError([f"slack: exactly one slack bus is required, got {slack}"])
        slack = slack[0]
    try:
        sysd = _req(data, "system", "")
        buses = tuple(CaseBus(str(_req(b, "id", f"buses[{i}]")), float(b.get("v_nom_kv", 1.0)))
                      for i, b in enumerate(_req(data, "buses", "")))
        branches = tuple(
            CaseBranch(str(_req(b, "id", f"branches[{i}]")), str(_req(b, "from", f"branches[{i}]")),
                       str(_req(b, "to", f"branches[{i}]")), float(b.get("r", 0.0)),
                       float(_req(b, "x", f"branches[{i}]")), float(b.get("b", 0.0)),
                       str(b.get("kind", "line")))
            for i, b in enumerate(data.get("branches", [])))
        loads = tuple(CaseLoad(str(_req(ld, "bus", f"loads[{i}]")), float(_req(ld, "p", f"loads[{i}]")),
                               float(ld.get("q", 0.0)), float(ld.get("k", 0.0)))
                      for i, ld in enumerate(data.get("loads", [])))
        machines = []
        for i, m in enumerate(data.get("machines", [])):
            praw = _req(m, "params", f"machines[{i}]")
            try:
                params = MachineParams(**{k: float(v) for k, v in praw.items()})
            except TypeError as exc:
                problems.append(f"machines[{i}].params: {exc}")
                continue
            machines.append(CaseMachine(str(_req(m, "id", f"machines[{i}]")),
                                        str(_req(m, "bus", f"machines[{i}]")), params,
                                        float(m.get("p", 0.0)), float(m.get("v_set", 1.0))))
        events = data.get("events", {})
        faults = []
        for i, f in enumerate(events.get("faults", [])):
            try:
                faults.append(FaultSpec(str(f["bus"]), tuple(str(f["phases"]).upper()),
                                        float(f["r_fault"]), float(f["t_apply"]),
                                        float(f["t_clear"])))
            except (KeyError, NetworkError) as exc:
                problems.append(f"events.faults[{i}]: {exc}")
        breakers = tuple(BreakerOp(str(op["branch"]), float(op["t"]), str(op["action"]))
                         for op in events.get("breakers", []))
        case = Case(
            name=str(data.get("name", "case")),
            base_mva=float(sysd.get("base_mva", 100.0)),
            frequency=float(sysd.get("frequency_hz", 60.0)),
            buses=buses, branches=branches, loads=loads, machines=tuple(machines),
            slack=str(slack), faults=tuple(faults), breaker_ops=breakers,
            recording=dict(data.get("recording", {})),
            provenance=str(data.get("provenance", "")),
        )
    except (TypeError, ValueError, AttributeError, KeyError) as exc:
        raise CaseValidationError([f"malformed field: {exc}"]) from exc
    if problems:
        raise CaseValidationError(problems)
    return case.validate()


def builtin_case_path(name):
    return BUILTIN_CASES[name]


def load_case(path):
    """Read a case file (or the name of a shipped case) and validate it."""
    p = BUILTIN_CASES.get(str(path), Path(path))
    try:
        text = Path(p).read_text()
    except OSError as exc:
        raise CaseParseError(f"cannot read case {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseParseError(f"{path}: {exc}") from exc
    return parse_case(data)
