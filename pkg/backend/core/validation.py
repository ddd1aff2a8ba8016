import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Literal

from core.errors import ModelError
from core.model import Owner, Stg, enabled_set
from core.regions import build_region_stg

logger = logging.getLogger(__name__)

Severity = Literal["error", "warning", "info"]


@dataclass(frozen=True)
class Finding:
    severity: Severity
    code: str
    subject: str
    message: str

    def to_json(self) -> dict:
        return {"severity": self.severity, "code": self.code, "subject": self.subject, "message": self.message}

    def __str__(self) -> str:
        return f"[{self.severity}] {self.code} {self.subject}: {self.message}"


@dataclass
class ValidationReport:
    model: str
    findings: list[Finding] = field(default_factory=list)

    def add(self, severity: Severity, code: str, subject: str, message: str) -> None:
        self.findings.append(Finding(severity, code, subject, message))

    @property
    def errors(self) -> list[Finding]:
        return [finding for finding in self.findings if finding.severity == "error"]

    @property
    def ok(self) -> bool:
        return not self.errors

    def codes(self) -> set[str]:
        return {finding.code for finding in self.findings}

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "ok": self.ok,
            "errors": len(self.errors),
            "findings": [finding.to_json() for finding in self.findings],
        }


def _check_names(stg: Stg, report: ValidationReport) -> None:
    for name, count in Counter(location.name for location in stg.locations).items():
        if count > 1:
            report.add("error", "duplicate-location", name, f"location declared {count} times")
    for edge_id, count in Counter(edge.id for edge in stg.edges).items():
        if count > 1:
            report.add("error", "duplicate-edge", edge_id, f"edge id used {count} times")


def _check_references(stg: Stg, report: ValidationReport) -> None:
    for edge in stg.edges:
        for role, name in (("source", edge.source), ("target", edge.target)):
            if not stg.has_location(name):
                report.add("error", "dangling-reference", edge.id, f"{role} {name!r} is not a location")
    for name in stg.distributions:
        if not stg.has_location(name):
            report.add("error", "dangling-reference", name, "distribution attached to an unknown location")
    for name in sorted(stg.targets):
        if not stg.has_location(name):
            report.add("error", "dangling-reference", name, "target is not a location")
    if not stg.has_location(stg.initial.location):
        report.add("error", "dangling-reference", stg.initial.location, "initial location is not a location")


def _check_clocks(stg: Stg, report: ValidationReport) -> None:
    known = set(stg.clocks)
    for location in stg.locations:
        unknown = location.invariant.clocks() - known
        if unknown:
            report.add("error", "unknown-clock", location.name, f"invariant uses {sorted(unknown)}")
        elif not location.invariant.is_satisfiable():
            report.add("error", "unsatisfiable-invariant", location.name, f"invariant {location.invariant}")
    for edge in stg.edges:
        unknown = (edge.guard.clocks() | edge.resets) - known
        if unknown:
            report.add("error", "unknown-clock", edge.id, f"guard or resets use {sorted(unknown)}")
        elif not edge.guard.is_satisfiable():
            report.add("error", "unsatisfiable-guard", edge.id, f"guard {edge.guard}")
    unknown = set(stg.initial.valuation) - known
    if unknown:
        report.add("error", "unknown-clock", "initial", f"valuation names {sorted(unknown)}")


def _check_distributions(stg: Stg, report: ValidationReport) -> None:
    for location in stg.locations:
        has_spec = location.name in stg.distributions
        if location.owner is Owner.STOCHASTIC and not has_spec:
            report.add("error", "missing-distribution", location.name, "stochastic location has no distribution")
        elif location.owner.is_player and has_spec:
            report.add("warning", "distribution-on-player", location.name, "distribution is ignored")
    for edge in stg.edges:
        if edge.weight != 1 and stg.has_location(edge.source) and stg.owner(edge.source).is_player:
            report.add("info", "ignored-weight", edge.id, "weights only matter on stochastic edges")


def _check_structure(stg: Stg, report: ValidationReport) -> None:
    for location in stg.locations:
        if not stg.outgoing(location.name) and not stg.is_target(location.name):
            report.add("error", "blocking-location", location.name, "non-target location has no outgoing edge")
    if stg.has_location(stg.initial.location):
        state = stg.initial_state()
        if not stg.location(state.location).invariant.holds(state.valuation):
            report.add("error", "initial-invariant", state.location, f"initial valuation {state} violates it")


def _check_regions(stg: Stg, report: ValidationReport) -> None:
    try:
        rg = build_region_stg(stg)
    except ModelError as exc:
        report.add("error", "region-graph", stg.name or "model", str(exc))
        return
    for node in rg.nodes:
        if rg.is_target(node):
            continue
        state = rg.state(node)
        enabled = enabled_set(stg, state).union
        if enabled.is_empty:
            report.add("error", "blocked-region", str(node), "no edge can ever be taken from this region")
            continue
        spec = stg.distributions.get(node.location)
        if rg.owner(node) is Owner.STOCHASTIC and spec is not None and not spec.is_exponential:
            if not enabled.is_bounded:
                report.add("error", "unbounded-uniform", str(node), f"uniform delay over unbounded {enabled}")
    report.add("info", "region-checks", stg.name or "model", f"{len(rg.nodes)} reachable region nodes checked")


def _check_initial_state(stg: Stg, report: ValidationReport) -> None:
    state = stg.initial_state()
    if stg.is_target(state.location):
        return
    enabled = enabled_set(stg, state).union
    if enabled.is_empty:
        report.add("error", "blocked-region", str(state), "no edge can be taken from the initial state")
    elif stg.owner(state.location) is Owner.STOCHASTIC:
        spec = stg.distributions.get(state.location)
        if spec is not None and not spec.is_exponential and not enabled.is_bounded:
            report.add("error", "unbounded-uniform", str(state), f"uniform delay over unbounded {enabled}")


def check_wellformed(stg: Stg) -> ValidationReport:
    report = ValidationReport(stg.name or "model")
    _check_names(stg, report)
    _check_references(stg, report)
    _check_clocks(stg, report)
    _check_distributions(stg, report)
    if report.ok:
        _check_structure(stg, report)
    if report.ok:
        if len(stg.clocks) == 1:
            _check_regions(stg, report)
        else:
            report.add(
                "info",
                "region-checks-skipped",
                stg.name or "model",
                f"region-level checks need one clock, model has {len(stg.clocks)}",
            )
            _check_initial_state(stg, report)
    logger.info("Validated %r: %d errors, %d findings", report.model, len(report.errors), len(report.findings))
    return report
