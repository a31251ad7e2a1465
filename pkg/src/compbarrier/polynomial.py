"""Sparse multivariate polynomial arithmetic.

Polynomials are the common currency of the whole package: vector fields,
jump maps, set constraints, barriers and multipliers are all stored as
sparse coefficient maps over a shared variable space.  Coefficients are
double precision floats (everything downstream runs on a floating-point
SDP solver, so exact rational arithmetic would buy nothing).

Monomials are ordered graded-lexicographically with x0 > x1 > ... so that
Gram matrix indexing is reproducible run to run.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "VariableSpace",
    "Variable",
    "Monomial",
    "Polynomial",
    "monomial_basis",
]


class VariableSpace:
    """An ordered set of named scalar variables.

    Two spaces with the same variable names compare equal, so polynomials
    built independently over equal spaces can be combined freely.
    """

    __slots__ = ("names", "_index")

    def __init__(self, names):
        names = tuple(str(n) for n in names)
        if len(set(names)) != len(names):
            raise ValueError("variable names must be distinct")
        self.names = names
        self._index = {n: i for i, n in enumerate(names)}

    @property
    def dim(self) -> int:
        return len(self.names)

    def variable(self, name) -> "Variable":
        if isinstance(name, int):
            return Variable(self, name)
        try:
            return Variable(self, self._index[name])
        except KeyError:
            raise KeyError(f"unknown variable {name!r} in space {self.names}") from None

    def variables(self) -> list["Variable"]:
        return [Variable(self, i) for i in range(self.dim)]

    def poly(self, terms=(), constant=0.0) -> "Polynomial":
        """Build a polynomial from (exponent-tuple, coefficient) pairs."""
        data = {}
        if constant:
            data[(0,) * self.dim] = float(constant)
        for exps, coeff in terms:
            exps = tuple(int(e) for e in exps)
            if len(exps) != self.dim:
                raise ValueError(f"exponent vector {exps} does not match dimension {self.dim}")
            if any(e < 0 for e in exps):
                raise ValueError(f"negative exponent in {exps}")
            data[exps] = data.get(exps, 0.0) + float(coeff)
        return Polynomial(self, data)

    def zero(self) -> "Polynomial":
        return Polynomial(self, {})

    def one(self) -> "Polynomial":
        return self.poly(constant=1.0)

    def __eq__(self, other):
        return isinstance(other, VariableSpace) and self.names == other.names

    def __hash__(self):
        return hash(self.names)

    def __repr__(self):
        return f"VariableSpace({list(self.names)})"


@dataclass(frozen=True)
class Variable:
    """A single variable: a name plus its index within a space."""

    space: VariableSpace
    index: int

    @property
    def name(self) -> str:
        return self.space.names[self.index]

    def as_poly(self) -> "Polynomial":
        exps = [0] * self.space.dim
        exps[self.index] = 1
        return self.space.poly([(tuple(exps), 1.0)])

    def __repr__(self):
        return f"Variable({self.name})"


def _grlex_key(exps):
    # graded order, ties broken so that x0 beats x1 beats x2 ...
    return (sum(exps), exps[::-1])


@dataclass(frozen=True)
class Monomial:
    """A monomial, stored as a dense exponent tuple over its space."""

    exps: tuple

    @property
    def degree(self) -> int:
        return sum(self.exps)

    @property
    def exponents(self) -> dict:
        """Sparse view: variable index -> positive exponent."""
        return {i: e for i, e in enumerate(self.exps) if e > 0}

    def __mul__(self, other: "Monomial") -> "Monomial":
        return Monomial(tuple(a + b for a, b in zip(self.exps, other.exps)))

    def sort_key(self):
        return _grlex_key(self.exps)

    def __repr__(self):
        if not any(self.exps):
            return "1"
        parts = []
        for i, e in enumerate(self.exps):
            if e == 1:
                parts.append(f"x{i}")
            elif e > 1:
                parts.append(f"x{i}^{e}")
        return "*".join(parts)


def monomial_basis(space: VariableSpace, max_degree: int, indices=None) -> list[Monomial]:
    """All monomials of total degree <= max_degree, graded-lex ordered.

    `indices` optionally restricts the participating variables; exponents
    of the remaining variables are zero.
    """
    if max_degree < 0:
        raise ValueError("max_degree must be >= 0")
    if indices is None:
        indices = range(space.dim)
    indices = list(indices)
    out = []
    for deg in range(max_degree + 1):
        # stars and bars over the selected indices
        for combo in itertools.combinations_with_replacement(indices, deg):
            exps = [0] * space.dim
            for i in combo:
                exps[i] += 1
            out.append(Monomial(tuple(exps)))
    out.sort(key=Monomial.sort_key)
    return out


class Polynomial:
    """Sparse polynomial: map from exponent tuple to float coefficient.

    Instances are immutable by convention; every operation returns a new
    object, so polynomials can be shared freely across workers.
    """

    __slots__ = ("space", "_terms", "_cache")

    def __init__(self, space: VariableSpace, terms: dict, prune: float = 0.0):
        self.space = space
        if prune > 0.0:
            self._terms = {e: c for e, c in terms.items() if abs(c) > prune}
        else:
            self._terms = {e: c for e, c in terms.items() if c != 0.0}
        self._cache = None

    # -- construction helpers ------------------------------------------------

    @staticmethod
    def constant(space: VariableSpace, value: float) -> "Polynomial":
        return space.poly(constant=value)

    @staticmethod
    def from_monomial(space: VariableSpace, mono: Monomial, coeff: float = 1.0) -> "Polynomial":
        return Polynomial(space, {mono.exps: float(coeff)})

    def to_terms(self) -> list:
        """Serialize as [(exponent list, coefficient)] in graded order."""
        keys = sorted(self._terms, key=_grlex_key)
        return [[list(k), self._terms[k]] for k in keys]

    # -- basic queries --------------------------------------------------------

    @property
    def terms(self) -> dict:
        return dict(self._terms)

    def monomials(self) -> list[Monomial]:
        return [Monomial(e) for e in sorted(self._terms, key=_grlex_key)]

    def coefficient(self, mono: Monomial) -> float:
        return self._terms.get(mono.exps, 0.0)

    @property
    def num_terms(self) -> int:
        return len(self._terms)

    def degree(self) -> int:
        if not self._terms:
            return 0
        return max(sum(e) for e in self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    # -- arithmetic -----------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Polynomial):
            if other.space != self.space:
                raise ValueError("polynomials live in different variable spaces")
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(self.space, float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        out = dict(self._terms)
        for e, c in other._terms.items():
            v = out.get(e, 0.0) + c
            if v == 0.0:
                out.pop(e, None)
            else:
                out[e] = v
        return Polynomial(self.space, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.space, {e: -c for e, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            c = float(other)
            if c == 0.0:
                return self.space.zero()
            return Polynomial(self.space, {e: c * v for e, v in self._terms.items()})
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        out = {}
        for e1, c1 in self._terms.items():
            for e2, c2 in other._terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                v = out.get(e, 0.0) + c1 * c2
                out[e] = v
        return Polynomial(self.space, {e: v for e, v in out.items() if v != 0.0})

    __rmul__ = __mul__

    def __pow__(self, n):
        if not isinstance(n, int) or n < 0:
            raise ValueError("exponent must be a nonnegative integer")
        result = self.space.one()
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base if n > 1 else base
            n >>= 1
        return result

    def prune(self, threshold: float) -> "Polynomial":
        return Polynomial(self.space, self._terms, prune=threshold)

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.space == other.space and self._terms == other._terms

    def __hash__(self):
        return hash((self.space, tuple(sorted(self._terms.items()))))

    # -- evaluation -----------------------------------------------------------

    def _arrays(self):
        if self._cache is None:
            keys = sorted(self._terms, key=_grlex_key)
            exps = np.array(keys, dtype=np.int64).reshape(len(keys), self.space.dim)
            coeffs = np.array([self._terms[k] for k in keys])
            self._cache = (exps, coeffs)
        return self._cache

    def evaluate(self, point) -> float:
        point = np.asarray(point, dtype=float)
        if point.shape != (self.space.dim,):
            raise ValueError(
                f"point of length {point.shape} does not match dimension {self.space.dim}"
            )
        if not self._terms:
            return 0.0
        exps, coeffs = self._arrays()
        return float(coeffs @ np.prod(point[None, :] ** exps, axis=1))

    def evaluate_many(self, points) -> np.ndarray:
        """Evaluate at an (N, dim) array of points; returns shape (N,)."""
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.space.dim:
            raise ValueError("points must have shape (N, dim)")
        if not self._terms:
            return np.zeros(points.shape[0])
        exps, coeffs = self._arrays()
        return np.prod(points[:, None, :] ** exps[None, :, :], axis=2) @ coeffs

    __call__ = evaluate

    # -- calculus and substitution --------------------------------------------

    def differentiate(self, var: Variable) -> "Polynomial":
        if var.space != self.space:
            raise ValueError(f"variable {var!r} does not belong to this space")
        i = var.index
        out = {}
        for e, c in self._terms.items():
            k = e[i]
            if k == 0:
                continue
            de = list(e)
            de[i] = k - 1
            out[tuple(de)] = out.get(tuple(de), 0.0) + c * k
        return Polynomial(self.space, out)

    def gradient(self) -> list["Polynomial"]:
        return [self.differentiate(v) for v in self.space.variables()]

    def compose(self, substitution) -> "Polynomial":
        """Substitute a polynomial for every variable appearing in self.

        `substitution` maps Variable (or index) to Polynomial; all images
        must share one target space.  Raises if a variable that actually
        occurs in self has no image.
        """
        subs = {}
        for key, img in substitution.items():
            idx = key.index if isinstance(key, Variable) else int(key)
            subs[idx] = img
        used = set()
        for e in self._terms:
            used.update(i for i, k in enumerate(e) if k > 0)
        missing = sorted(used - set(subs))
        if missing:
            names = [self.space.names[i] for i in missing]
            raise ValueError(f"substitution missing entries for variables {names}")
        if not self._terms:
            target = next(iter(subs.values())).space if subs else self.space
            return target.zero()
        target = subs[next(iter(used))].space if used else self.space
        for idx in used:
            if subs[idx].space != target:
                raise ValueError("substitution images live in different spaces")

        power_cache: dict = {}

        def power(idx, k):
            key = (idx, k)
            if key not in power_cache:
                power_cache[key] = subs[idx] ** k
            return power_cache[key]

        total = target.zero()
        for e, c in self._terms.items():
            term = Polynomial.constant(target, c)
            for i, k in enumerate(e):
                if k:
                    term = term * power(i, k)
            total = total + term
        return total

    def map_variables(self, target: VariableSpace, index_map) -> "Polynomial":
        """Relabel variables: index_map[i] is the target index of variable i."""
        out = {}
        for e, c in self._terms.items():
            ne = [0] * target.dim
            for i, k in enumerate(e):
                if k:
                    ne[index_map[i]] += k
            key = tuple(ne)
            out[key] = out.get(key, 0.0) + c
        return Polynomial(target, out)

    # -- misc -----------------------------------------------------------------

    def __repr__(self):
        if not self._terms:
            return "0"
        parts = []
        for e in sorted(self._terms, key=_grlex_key):
            c = self._terms[e]
            mono = Monomial(e)
            if mono.degree == 0:
                parts.append(f"{c:g}")
            else:
                names = []
                for i, k in enumerate(e):
                    if k == 1:
                        names.append(self.space.names[i])
                    elif k > 1:
                        names.append(f"{self.space.names[i]}^{k}")
                parts.append(f"{c:g}*" + "*".join(names))
        return " + ".join(parts)


def poly_norm_sq(space: VariableSpace, indices=None) -> Polynomial:
    """Sum of squares of the selected variables (default: all of them)."""
    if indices is None:
        indices = range(space.dim)
    terms = []
    for i in indices:
        exps = [0] * space.dim
        exps[i] = 2
        terms.append((tuple(exps), 1.0))
    return space.poly(terms)
