"""Analysis report structures shared by the decision layer and the serializers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

INF = float("inf")


def _sigma_json(vec) -> list:
    return ["inf" if v == INF else int(v) for v in vec]


@dataclass
class SigmaStep:
    """One k-step of the sigma recursion of a single initialization."""

    k: int
    sigma_delta: Tuple
    sigma_gamma_delta: Tuple
    witness_l: Optional[Dict[str, int]]
    box: int

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "sigma_delta": _sigma_json(self.sigma_delta),
            "sigma_gamma_delta": _sigma_json(self.sigma_gamma_delta),
            "witness_l": self.witness_l,
            "box": self.box,
        }


@dataclass
class InitTrace:
    """Outcome of one initialization (kept-channel subset + start variant)."""

    kept: Tuple[int, ...]
    variant: str
    steps: List[SigmaStep] = field(default_factory=list)
    outcome: str = "candidate"     # candidate | infinite | rank_deficient | pruned | budget
    candidate: Optional[Tuple[int, ...]] = None
    failure_k: Optional[int] = None
    failure_note: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "kept_channels": list(self.kept),
            "variant": self.variant,
            "steps": [s.to_json() for s in self.steps],
            "outcome": self.outcome,
            "candidate": list(self.candidate) if self.candidate else None,
            "failure_k": self.failure_k,
            "failure_note": self.failure_note,
        }


@dataclass
class AnalysisReport:
    """Final verdict plus the trace material needed to replay the analysis."""

    verdict: str                     # p2_flat | not_p2_flat | inconclusive
    j_min: Optional[Tuple[int, ...]]
    input_permutation: Optional[Tuple[int, ...]]
    k_star: Optional[int]
    kappa: Optional[Tuple[int, ...]]
    flat_outputs: Optional[List[str]]
    sigma_trace: List[SigmaStep]
    singular_locus: List[str]
    seed: int
    witness: Optional[dict] = None
    initializations: List[InitTrace] = field(default_factory=list)
    system: str = ""
    warnings: List[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "j_min": list(self.j_min) if self.j_min is not None else None,
            "input_permutation": (list(self.input_permutation)
                                  if self.input_permutation is not None else None),
            "k_star": self.k_star,
            "kappa": list(self.kappa) if self.kappa is not None else None,
            "flat_outputs": self.flat_outputs,
            "sigma_trace": [s.to_json() for s in self.sigma_trace],
            "singular_locus": self.singular_locus,
            "seed": self.seed,
            "timings_ms": None,
            "witness": self.witness,
            "initializations": [t.to_json() for t in self.initializations],
            "system": self.system,
            "warnings": self.warnings,
        }
