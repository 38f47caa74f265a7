"""Feature-space legality constraints and the remapping projection.

A schema assigns each feature to one of four mutability groups:

* ``independent``    - the attacker may set it freely inside its box bounds
* ``dependent``      - functionally determined by other (non-dependent) features
* ``uncontrollable`` - outside attacker control, always restored
* ``packet_derived`` - determined by raw traffic, always restored

An optional mask (append/slack style) further restricts which indices may
ever differ from the original vector. ``remap`` projects an arbitrary
perturbed vector back into the legal space.
"""

from __future__ import annotations

import numpy as np

INDEPENDENT = "independent"
DEPENDENT = "dependent"
UNCONTROLLABLE = "uncontrollable"
PACKET_DERIVED = "packet_derived"

GROUPS = (INDEPENDENT, DEPENDENT, UNCONTROLLABLE, PACKET_DERIVED)

# |denominator| below this yields 0 instead of dividing (mirrors count=0 flows)
DIV_GUARD = 1e-9


class SchemaError(ValueError):
    """Invalid constraint schema or dependency formula."""


class Formula:
    """Arithmetic expression tree over feature references and constants.

    Supported operators: + - * /. Division by a near-zero value (|v| < 1e-9)
    evaluates to 0.
    """

    def __init__(self, op, left=None, right=None, *, const=None, ref=None):
        self.op = op  # "+", "-", "*", "/", "const", "ref"
        self.left = left
        self.right = right
        self.const = const
        self.ref = ref

    def evaluate(self, x: np.ndarray) -> float:
        if self.op == "const":
            return self.const
        if self.op == "ref":
            return float(x[self.ref])
        a = self.left.evaluate(x)
        b = self.right.evaluate(x)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            if abs(b) < DIV_GUARD:
                return 0.0
            return a / b
        raise SchemaError(f"unknown operator {self.op!r}")

    def references(self) -> set[int]:
        if self.op == "const":
            return set()
        if self.op == "ref":
            return {self.ref}
        return self.left.references() | self.right.references()

    def to_tokens(self, names: list[str]) -> list[str]:
        if self.op == "const":
            return [repr(self.const)]
        if self.op == "ref":
            return [f"f:{names[self.ref]}"]
        return [self.op] + self.left.to_tokens(names) + self.right.to_tokens(names)

    @staticmethod
    def parse(tokens: list[str], name_to_index: dict[str, int]) -> "Formula":
        """Parse a prefix-notation token list, e.g. ['/', 'f:total', 'f:count']."""
        pos = 0

        def walk() -> Formula:
            nonlocal pos
            if pos >= len(tokens):
                raise SchemaError("formula ended unexpectedly")
            tok = tokens[pos]
            pos += 1
            if tok in ("+", "-", "*", "/"):
                left = walk()
                right = walk()
                return Formula(tok, left, right)
            if tok.startswith("f:"):
                fname = tok[2:]
                if fname not in name_to_index:
                    raise SchemaError(f"formula references unknown feature {fname!r}")
                return Formula("ref", ref=name_to_index[fname])
            try:
                return Formula("const", const=float(tok))
            except ValueError:
                raise SchemaError(f"bad formula token {tok!r}") from None

        node = walk()
        if pos != len(tokens):
            raise SchemaError(f"trailing formula tokens: {tokens[pos:]}")
        return node


class ConstraintSchema:
    """Per-feature mutability groups, box bounds, formulas, and optional mask."""

    def __init__(
        self,
        names: list[str],
        groups: list[str],
        lo,
        hi,
        formulas: dict[int, Formula] | None = None,
        mask: set[int] | None = None,
        schema_id: str = "schema",
    ):
        self.names = list(names)
        self.groups = list(groups)
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.formulas = dict(formulas or {})
        self.mask = None if mask is None else frozenset(int(i) for i in mask)
        self.schema_id = schema_id
        self._validate()
        d = len(self.names)
        self._indep = np.array([g == INDEPENDENT for g in self.groups])
        self._frozen = np.array(
            [g in (UNCONTROLLABLE, PACKET_DERIVED) for g in self.groups]
        )
        if self.mask is not None:
            in_mask = np.zeros(d, dtype=bool)
            in_mask[sorted(self.mask)] = True
            self._out_of_mask = ~in_mask
        else:
            self._out_of_mask = np.zeros(d, dtype=bool)
        self._dep_order = sorted(self.formulas)

    def _validate(self):
        d = len(self.names)
        if not (len(self.groups) == self.lo.shape[0] == self.hi.shape[0] == d):
            raise SchemaError("names, groups, lo, hi must have equal length")
        for g in self.groups:
            if g not in GROUPS:
                raise SchemaError(f"unknown feature group {g!r}")
        if np.any(self.lo > self.hi):
            i = int(np.argmax(self.lo > self.hi))
            raise SchemaError(f"feature {self.names[i]}: lo {self.lo[i]} > hi {self.hi[i]}")
        dep = {i for i, g in enumerate(self.groups) if g == DEPENDENT}
        if dep != set(self.formulas):
            raise SchemaError("dependent features and formulas do not match")
        for i, f in self.formulas.items():
            refs = f.references()
            bad = refs & dep
            if bad:
                raise SchemaError(
                    f"feature {self.names[i]}: formula references dependent "
                    f"feature(s) {sorted(self.names[j] for j in bad)}"
                )
            if i in refs:
                raise SchemaError(f"feature {self.names[i]}: formula references itself")
        if self.mask is not None:
            for i in self.mask:
                if not 0 <= i < d:
                    raise SchemaError(f"mask index {i} out of range")

    @property
    def dim(self) -> int:
        return len(self.names)

    @classmethod
    def unconstrained(cls, dim: int, lo: float = 0.0, hi: float = 1.0) -> "ConstraintSchema":
        """All-independent schema with a uniform box (the plain [0,1] case)."""
        return cls(
            [f"f{i}" for i in range(dim)],
            [INDEPENDENT] * dim,
            np.full(dim, lo),
            np.full(dim, hi),
            schema_id=f"box{dim}",
        )

    def perturbable_indices(self) -> np.ndarray:
        """Indices the attacker can directly modify (independent and in-mask)."""
        ok = self._indep & ~self._out_of_mask
        return np.flatnonzero(ok)

    def remap(self, x_orig: np.ndarray, x_adv: np.ndarray) -> np.ndarray:
        """Project a perturbed vector back to the legal feature space.

        Uncontrollable/packet-derived and out-of-mask coordinates are restored
        to the original values exactly, independent coordinates are clipped to
        their box, and dependent coordinates are recomputed last from the
        resulting vector (mask restoration wins over recomputation).
        """
        x_orig = np.asarray(x_orig, dtype=float)
        x_adv = np.asarray(x_adv, dtype=float)
        if x_orig.shape != (self.dim,) or x_adv.shape != (self.dim,):
            raise SchemaError(
                f"remap expects vectors of length {self.dim}, "
                f"got {x_orig.shape} and {x_adv.shape}"
            )
        out = x_adv.copy()
        out[self._frozen] = x_orig[self._frozen]
        out[self._out_of_mask] = x_orig[self._out_of_mask]
        ind = self._indep & ~self._out_of_mask
        out[ind] = np.clip(out[ind], self.lo[ind], self.hi[ind])
        for i in self._dep_order:
            if not self._out_of_mask[i]:
                out[i] = self.formulas[i].evaluate(out)
        return out

    # ---- schema file format -------------------------------------------------
    #
    #   feature <name> <group> <lo> <hi> [= <prefix expression>]
    #   mask <name> <name> ...
    #
    # Expressions use prefix notation over + - * /, feature references
    # written f:<name>, and numeric constants.

    def dump(self) -> str:
        lines = []
        for i, name in enumerate(self.names):
            line = f"feature {name} {self.groups[i]} {float(self.lo[i])!r} {float(self.hi[i])!r}"
            if i in self.formulas:
                line += " = " + " ".join(self.formulas[i].to_tokens(self.names))
            lines.append(line)
        if self.mask is not None:
            lines.append("mask " + " ".join(self.names[i] for i in sorted(self.mask)))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dump())

    @classmethod
    def parse(cls, text: str, schema_id: str = "schema") -> "ConstraintSchema":
        names, groups, lo, hi = [], [], [], []
        formula_tokens: dict[int, list[str]] = {}
        mask_names: list[str] | None = None
        for ln, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "feature":
                if len(parts) < 5:
                    raise SchemaError(f"line {ln}: feature needs name, group, lo, hi")
                names.append(parts[1])
                groups.append(parts[2])
                try:
                    lo.append(float(parts[3]))
                    hi.append(float(parts[4]))
                except ValueError:
                    raise SchemaError(f"line {ln}: bad bounds {parts[3]} {parts[4]}") from None
                rest = parts[5:]
                if rest:
                    if rest[0] != "=":
                        raise SchemaError(f"line {ln}: expected '=' before formula")
                    formula_tokens[len(names) - 1] = rest[1:]
            elif parts[0] == "mask":
                mask_names = parts[1:]
            else:
                raise SchemaError(f"line {ln}: unknown directive {parts[0]!r}")
        if not names:
            raise SchemaError("schema defines no features")
        index = {n: i for i, n in enumerate(names)}
        formulas = {
            i: Formula.parse(toks, index) for i, toks in formula_tokens.items()
        }
        mask = None
        if mask_names is not None:
            missing = [n for n in mask_names if n not in index]
            if missing:
                raise SchemaError(f"mask references unknown feature(s) {missing}")
            mask = {index[n] for n in mask_names}
        return cls(names, groups, lo, hi, formulas, mask, schema_id=schema_id)

    @classmethod
    def load(cls, path) -> "ConstraintSchema":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read(), schema_id=str(path))


def project_lp(delta: np.ndarray, norm: str, eps: float) -> np.ndarray:
    """Project a perturbation onto the eps-ball of the given norm.

    Points already inside the ball are returned unchanged. The l1 case uses
    simplex projection of the absolute values (signs restored afterwards).
    """
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    delta = np.asarray(delta, dtype=float)
    if not np.isfinite(eps):
        return delta.copy()
    if norm == "linf":
        return np.clip(delta, -eps, eps)
    if norm == "l2":
        nrm = float(np.linalg.norm(delta))
        if nrm <= eps or nrm == 0.0:
            return delta.copy()
        return delta * (eps / nrm)
    if norm == "l1":
        a = np.abs(delta)
        if a.sum() <= eps:
            return delta.copy()
        if eps == 0.0:
            return np.zeros_like(delta)
        u = np.sort(a)[::-1]
        css = np.cumsum(u)
        j = np.arange(1, a.size + 1)
        positive = np.flatnonzero(u - (css - eps) / j > 0)
        rho = int(positive.max()) + 1 if positive.size else 1  # rounding fallback
        tau = (css[rho - 1] - eps) / rho
        return np.sign(delta) * np.maximum(a - tau, 0.0)
    raise ValueError(f"unknown norm {norm!r} (expected linf, l2, or l1)")
