"""Exact entropy and mutual information over small discrete joints.

Joint distributions are dense numpy tables (product space capped at 10^6
cells), so every quantity here is computed by direct marginalization with
base-2 logarithms and the 0*log(0) = 0 convention. The headline check,
``verify_ensemble_bound``, confirms on a four-variable joint over
{Q, A, E_i, E_rest} that conditioning the answer on more evidence never
increases its entropy: H(A | Q, E_i, E_rest) <= H(A | Q, E_i).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import OverlappingSubsets, UnknownVariable, WrongVariableSet

MAX_CELLS = 10**6
_SUM_TOL = 1e-12
BOUND_TOL = 1e-12

ENSEMBLE_VARIABLES = ("Q", "A", "E_i", "E_rest")


@dataclass(frozen=True)
class DiscreteJoint:
    variables: tuple[str, ...]
    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", probs)
        if len(self.variables) != probs.ndim:
            raise ValueError(
                f"{len(self.variables)} variables for a table of rank {probs.ndim}"
            )
        if len(set(self.variables)) != len(self.variables):
            raise ValueError("variable names must be unique")
        if any(not name for name in self.variables):
            raise ValueError("variable names must be non-empty")
        if probs.size == 0 or any(dim < 1 for dim in probs.shape):
            raise ValueError("every variable needs cardinality >= 1")
        if probs.size > MAX_CELLS:
            raise ValueError(f"table has {probs.size} cells, limit is {MAX_CELLS}")
        if np.any(probs < 0):
            raise ValueError("probabilities must be non-negative")
        total = float(probs.sum())
        if abs(total - 1.0) > _SUM_TOL:
            raise ValueError(f"probabilities sum to {total!r}, expected 1")

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(self.probs.shape)

    @classmethod
    def from_json(cls, source: str | Path | dict) -> "DiscreteJoint":
        if isinstance(source, (str, Path)):
            obj = json.loads(Path(source).read_text(encoding="utf-8"))
        else:
            obj = source
        variables = tuple(obj["variables"])
        cardinalities = tuple(int(c) for c in obj["cardinalities"])
        flat = np.asarray(obj["probs"], dtype=float)
        if flat.size != int(np.prod(cardinalities)):
            raise ValueError(
                f"{flat.size} probabilities for cardinalities {cardinalities}"
            )
        return cls(variables=variables, probs=flat.reshape(cardinalities))


def _axes(joint: DiscreteJoint, names) -> list[int]:
    positions = {name: i for i, name in enumerate(joint.variables)}
    axes = []
    for name in names:
        if name not in positions:
            raise UnknownVariable(name)
        axes.append(positions[name])
    return axes


def marginal(joint: DiscreteJoint, names) -> np.ndarray:
    """Marginal table over ``names``, axes ordered as in ``joint.variables``."""
    keep = sorted(set(_axes(joint, names)))
    drop = tuple(i for i in range(joint.probs.ndim) if i not in keep)
    return joint.probs.sum(axis=drop) if drop else joint.probs


def _entropy_of_table(table: np.ndarray) -> float:
    p = table.reshape(-1)
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def entropy(joint: DiscreteJoint, names) -> float:
    """H over the marginal of ``names``, in bits."""
    names = list(names)
    if not names:
        return 0.0
    if len(set(names)) != len(names):
        raise ValueError("variable subset contains duplicates")
    return _entropy_of_table(marginal(joint, names))


def conditional_entropy(joint: DiscreteJoint, target: str, given) -> float:
    """H(target | given) = H(target, given) - H(given), in bits."""
    given = list(given)
    _axes(joint, [target])
    if target in given:
        raise ValueError(f"target {target!r} cannot appear in the conditioning set")
    if not given:
        return entropy(joint, [target])
    return entropy(joint, [target] + given) - entropy(joint, given)


def mutual_information(joint: DiscreteJoint, a_vars, b_vars) -> float:
    """I(A; B) = H(A) + H(B) - H(A, B), in bits, clamped at zero."""
    a_vars, b_vars = list(a_vars), list(b_vars)
    if not a_vars or not b_vars:
        raise ValueError("both variable subsets must be non-empty")
    if set(a_vars) & set(b_vars):
        raise OverlappingSubsets(f"subsets share {sorted(set(a_vars) & set(b_vars))}")
    value = (
        entropy(joint, a_vars) + entropy(joint, b_vars) - entropy(joint, a_vars + b_vars)
    )
    return max(value, 0.0)


def conditional_mutual_information(joint: DiscreteJoint, a_vars, b_vars, given) -> float:
    """I(A; B | C) = H(A | C) - H(A | C, B) generalized to variable sets."""
    a_vars, b_vars, given = list(a_vars), list(b_vars), list(given)
    if set(a_vars) & set(b_vars) or set(a_vars) & set(given) or set(b_vars) & set(given):
        raise OverlappingSubsets("variable subsets must be pairwise disjoint")
    value = (
        entropy(joint, a_vars + given)
        + entropy(joint, b_vars + given)
        - entropy(joint, a_vars + b_vars + given)
        - entropy(joint, given)
    )
    return max(value, 0.0)


@dataclass(frozen=True)
class BoundReport:
    holds: bool
    lhs: float
    rhs: float
    decomposition_residual: float

    def to_dict(self) -> dict:
        return {
            "holds": self.holds,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "decomposition_residual": self.decomposition_residual,
        }


def verify_ensemble_bound(joint: DiscreteJoint) -> BoundReport:
    """Check H(A | Q, E_i, E_rest) <= H(A | Q, E_i) on a four-variable joint.

    The joint must be over exactly {Q, A, E_i, E_rest}: the question, the
    answer, one system's evidence and the pooled evidence of the remaining
    systems. The report also carries the residual of the chain-rule
    decomposition I(Q,E_i,E_rest; A) = I(Q,E_i; A) + I(E_rest; A | Q,E_i),
    which should be zero up to float noise.
    """
    if set(joint.variables) != set(ENSEMBLE_VARIABLES):
        raise WrongVariableSet(
            f"expected variables {sorted(ENSEMBLE_VARIABLES)}, got {sorted(joint.variables)}"
        )
    lhs = conditional_entropy(joint, "A", ["Q", "E_i", "E_rest"])
    rhs = conditional_entropy(joint, "A", ["Q", "E_i"])
    mi_all = mutual_information(joint, ["Q", "E_i", "E_rest"], ["A"])
    mi_partial = mutual_information(joint, ["Q", "E_i"], ["A"])
    mi_extra = conditional_mutual_information(joint, ["E_rest"], ["A"], ["Q", "E_i"])
    residual = abs(mi_all - mi_partial - mi_extra)
    return BoundReport(
        holds=lhs <= rhs + BOUND_TOL,
        lhs=lhs,
        rhs=rhs,
        decomposition_residual=residual,
    )
