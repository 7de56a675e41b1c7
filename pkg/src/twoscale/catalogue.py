"""Closed-form catalogue of separable (x, y) profiles.

Every coefficient expansion term, observation weight and source profile used by
the library is a product of per-axis factors drawn from a small grammar, so
that sup norms and derivative bounds are available analytically:

    term      := [number *] factor [* factor ...] [* e<p>]
    factor    := <var>            e.g. x1, y2          (identity)
               | <var>^<p>        e.g. x1^2            (monomial)
               | (1+<var>)        e.g. (1+x1)
               | sin(<2k>pi*<var>) | cos(<2k>pi*<var>)
               | (1+sin(<2k>pi*<var>)) | (1+cos(<2k>pi*<var>))

with at most one factor per variable axis; `e<p>` marks a coordinate direction
for vector-valued observation weights.  Domains are the unit box for x and the
unit torus for y.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Factor",
    "SeparableTerm",
    "parse_term",
    "parse_terms",
    "coefficient_preset",
    "observation_preset",
    "COEFFICIENT_PRESETS",
    "OBSERVATION_PRESETS",
    "list_catalogue_text",
]


@dataclass(frozen=True)
class Factor:
    """One per-axis building block of a separable term."""

    var: str  # "x" or "y"
    axis: int  # 1-based
    kind: str  # "poly" | "one_plus" | "trig" | "one_plus_trig"
    power: int = 1  # poly only
    trig: str = ""  # "sin" | "cos"
    freq: int = 0  # k in sin/cos(2*pi*k*v)

    def evaluate(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self.kind == "poly":
            return v**self.power
        if self.kind == "one_plus":
            return 1.0 + v
        w = 2.0 * math.pi * self.freq * v
        t = np.sin(w) if self.trig == "sin" else np.cos(w)
        if self.kind == "one_plus_trig":
            return 1.0 + t
        return t

    def sup(self) -> float:
        """sup of |factor| over [0,1] (x) or the unit period (y)."""
        if self.kind == "poly":
            return 1.0
        if self.kind in ("one_plus", "one_plus_trig"):
            return 2.0
        return 1.0

    def derivative_sup(self, order: int) -> float:
        """sup of the order-th derivative magnitude over the domain."""
        if order == 0:
            return self.sup()
        if self.kind == "poly":
            p = self.power
            if order > p:
                return 0.0
            return float(math.perm(p, order))
        if self.kind == "one_plus":
            return 1.0 if order == 1 else 0.0
        return (2.0 * math.pi * self.freq) ** order

    def antiderivative(self, v: np.ndarray) -> np.ndarray:
        """Antiderivative vanishing at 0 (used for 1d source profiles)."""
        v = np.asarray(v, dtype=float)
        if self.kind == "poly":
            return v ** (self.power + 1) / (self.power + 1)
        if self.kind == "one_plus":
            return v + 0.5 * v**2
        w = 2.0 * math.pi * self.freq
        if self.kind == "trig":
            if self.trig == "sin":
                return (1.0 - np.cos(w * v)) / w
            return np.sin(w * v) / w
        # one_plus_trig
        if self.trig == "sin":
            return v + (1.0 - np.cos(w * v)) / w
        return v + np.sin(w * v) / w

    @property
    def id(self) -> str:
        v = f"{self.var}{self.axis}"
        if self.kind == "poly":
            return v if self.power == 1 else f"{v}^{self.power}"
        if self.kind == "one_plus":
            return f"(1+{v})"
        core = f"{self.trig}({2 * self.freq}pi*{v})"
        if self.kind == "one_plus_trig":
            return f"(1+{core})"
        return core


def _format_scale(c: float) -> str:
    return repr(int(c)) if float(c).is_integer() and abs(c) < 1e15 else repr(float(c))


@dataclass(frozen=True)
class SeparableTerm:
    """scale * prod(factors) [* e_p]; factors touch pairwise distinct axes."""

    scale: float = 1.0
    factors: tuple[Factor, ...] = ()
    direction: int = 0  # 0 = scalar; p >= 1 marks the e_p component

    def __post_init__(self) -> None:
        seen = set()
        for f in self.factors:
            key = (f.var, f.axis)
            if key in seen:
                raise ValueError(
                    f"term '{self.id}' has more than one factor on {f.var}{f.axis}; "
                    "analytic sup norms need at most one per axis"
                )
            seen.add(key)

    def factors_on(self, var: str) -> tuple[Factor, ...]:
        return tuple(f for f in self.factors if f.var == var)

    def axis_profile(self, var: str, axis: int, pts: np.ndarray) -> np.ndarray:
        """Per-axis profile values; identically 1 on axes without a factor."""
        for f in self.factors:
            if f.var == var and f.axis == axis:
                return f.evaluate(pts)
        return np.ones_like(np.asarray(pts, dtype=float))

    def eval_xy(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Evaluate at broadcastable point sets x (..., dx) and y (..., dy)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        out = np.full(np.broadcast_shapes(x.shape[:-1], y.shape[:-1]), self.scale)
        for f in self.factors:
            pts = x if f.var == "x" else y
            out = out * f.evaluate(pts[..., f.axis - 1])
        return out

    def sup(self) -> float:
        out = abs(self.scale)
        for f in self.factors:
            out *= f.sup()
        return out

    def smoothness_bound(self, x_order: int = 1, y_order: int = 2) -> float:
        """Bound on mixed-derivative sups up to the given per-variable orders.

        Rate-diagnostic metadata only: maximises, over derivative orders and
        over which per-axis factor receives the derivative, the product of
        per-factor sups.
        """

        def axis_val(facts: tuple[Factor, ...], order: int) -> float:
            if order == 0:
                return math.prod(f.sup() for f in facts)
            if not facts:
                return 0.0
            best = 0.0
            for i, f in enumerate(facts):
                val = f.derivative_sup(order)
                for j, g in enumerate(facts):
                    if j != i:
                        val *= g.sup()
                best = max(best, val)
            return best

        x_facts = self.factors_on("x")
        y_facts = self.factors_on("y")
        return max(
            abs(self.scale) * axis_val(x_facts, xo) * axis_val(y_facts, yo)
            for xo in range(x_order + 1)
            for yo in range(y_order + 1)
        )

    def antiderivative_1d(self, x: np.ndarray) -> np.ndarray:
        """F(x) = int_0^x term for 1d x-only terms (source profiles)."""
        if self.factors_on("y"):
            raise ValueError("antiderivative only defined for x-only profiles")
        facts = self.factors_on("x")
        x = np.asarray(x, dtype=float)
        if not facts:
            return self.scale * x
        if len(facts) > 1:
            raise ValueError("antiderivative supports single-factor profiles only")
        return self.scale * facts[0].antiderivative(x)

    @property
    def id(self) -> str:
        parts: list[str] = []
        if self.scale != 1.0 or not self.factors:
            parts.append(_format_scale(self.scale))
        parts += [f.id for f in sorted(self.factors, key=lambda f: (f.var, f.axis))]
        if self.direction:
            parts.append(f"e{self.direction}")
        return "*".join(parts)


_FACTOR_RES = [
    (re.compile(r"^\(1\+(x|y)(\d+)\)$"), "one_plus"),
    (re.compile(r"^\(1\+(sin|cos)\((\d+)pi\*(x|y)(\d+)\)\)$"), "one_plus_trig"),
    (re.compile(r"^(sin|cos)\((\d+)pi\*(x|y)(\d+)\)$"), "trig"),
    (re.compile(r"^(x|y)(\d+)\^(\d+)$"), "poly_pow"),
    (re.compile(r"^(x|y)(\d+)$"), "poly"),
    (re.compile(r"^e(\d+)$"), "direction"),
]

_NUMBER_RE = re.compile(r"^[+-]?(\d+\.?\d*([eE][+-]?\d+)?|\.\d+([eE][+-]?\d+)?)$")


def _split_factors(text: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "*" and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


def parse_term(text: str) -> SeparableTerm:
    """Parse a catalogue id back into a SeparableTerm (ids round-trip)."""
    scale = 1.0
    factors: list[Factor] = []
    direction = 0
    for tok in _split_factors(re.sub(r"\s+", "", text)):
        if _NUMBER_RE.match(tok):
            scale *= float(tok)
            continue
        for rx, kind in _FACTOR_RES:
            m = rx.match(tok)
            if not m:
                continue
            if kind == "direction":
                direction = int(m.group(1))
            elif kind == "one_plus":
                factors.append(Factor(m.group(1), int(m.group(2)), "one_plus"))
            elif kind in ("trig", "one_plus_trig"):
                trig, npi, var, ax = m.groups()
                if int(npi) % 2:
                    raise ValueError(f"odd multiple of pi in '{tok}': only full periods allowed")
                factors.append(Factor(var, int(ax), kind, trig=trig, freq=int(npi) // 2))
            elif kind == "poly_pow":
                factors.append(Factor(m.group(1), int(m.group(2)), "poly", power=int(m.group(3))))
            else:
                factors.append(Factor(m.group(1), int(m.group(2)), "poly"))
            break
        else:
            raise ValueError(f"unrecognised catalogue token '{tok}' in '{text}'")
    return SeparableTerm(scale=scale, factors=tuple(factors), direction=direction)


def parse_terms(text: str) -> list[SeparableTerm]:
    """Parse a comma-separated list of term ids."""
    return [parse_term(tok) for tok in text.split(",") if tok.strip()]


# ---------------------------------------------------------------------------
# presets reproducing the shipped experiment families
# ---------------------------------------------------------------------------

def _preset_1d_sincos() -> list[SeparableTerm]:
    return parse_terms("(1+x1)*sin(2pi*y1), (1+x1)*cos(2pi*y1)")


def _preset_2d_uniform_16() -> list[SeparableTerm]:
    opts = ["sin(2pi*{v})", "cos(2pi*{v})", "0.25*sin(4pi*{v})", "0.25*cos(4pi*{v})"]
    out = []
    for f1 in opts:
        for f2 in opts:
            out.append(parse_term(
                "0.25*(1+x1)*(1+x2)*" + f1.format(v="y1") + "*" + f2.format(v="y2")))
    return out


def _eigenpairs(var: str) -> list[tuple[float, str]]:
    """(eigenvalue, id) pairs of the periodic Laplacian modes used in 2d."""
    w2 = 4.0 * math.pi**2
    pairs: list[tuple[float, str]] = [(0.0, "")]
    for fn in ("sin", "cos"):
        pairs.append((w2, f"{fn}(2pi*{var}1)"))
    for fn in ("sin", "cos"):
        pairs.append((w2, f"{fn}(2pi*{var}2)"))
    for f1 in ("sin", "cos"):
        for f2 in ("sin", "cos"):
            pairs.append((2 * w2, f"{f1}(2pi*{var}1)*{f2}(2pi*{var}2)"))
    return pairs


def _preset_2d_lognormal_80() -> list[SeparableTerm]:
    xs = _eigenpairs("x")
    ys = _eigenpairs("y")
    out = []
    for i, (lam, fx) in enumerate(xs):
        for j, (mu, fy) in enumerate(ys):
            if i == 0 and j == 0:
                continue
            weight = 1.0 / (lam + mu) ** 2
            pieces = [repr(weight)] + [p for p in (fx, fy) if p]
            out.append(parse_term("*".join(pieces)))
    return out


def _preset_obs_1d_macro() -> list[SeparableTerm]:
    return parse_terms("x1*e1, x1^2*e1")


def _preset_obs_1d_corrector() -> list[SeparableTerm]:
    return parse_terms("x1*(1+sin(2pi*y1))*e1, x1*(1+cos(2pi*y1))*e1")


def _preset_obs_2d_uniform() -> list[SeparableTerm]:
    opts = ["sin(2pi*{v})", "cos(2pi*{v})", "sin(4pi*{v})",
            "cos(4pi*{v})", "sin(6pi*{v})", "cos(6pi*{v})"]
    out = []
    for g1 in opts:
        for g2 in opts:
            for p in (1, 2):
                out.append(parse_term(
                    "(1+x1)*(1+x2)*" + g1.format(v="y1") + "*" + g2.format(v="y2") + f"*e{p}"))
    return out


def _preset_obs_2d_lognormal() -> list[SeparableTerm]:
    def opts(var: str) -> list[str]:
        lst = [""]
        for k in (1, 2):
            for fn in ("sin", "cos"):
                lst.append(f"(1+{fn}({2 * k}pi*{var}))")
        return lst

    out = []
    for f1 in opts("x1"):
        for f2 in opts("x2"):
            for g1 in opts("y1"):
                for g2 in opts("y2"):
                    for p in (1, 2):
                        pieces = ["1000"] + [s for s in (f1, f2, g1, g2) if s] + [f"e{p}"]
                        out.append(parse_term("*".join(pieces)))
    return out


COEFFICIENT_PRESETS = {
    "1d_sincos": _preset_1d_sincos,
    "2d_uniform_16": _preset_2d_uniform_16,
    "2d_lognormal_80": _preset_2d_lognormal_80,
}

OBSERVATION_PRESETS = {
    "1d_macro": _preset_obs_1d_macro,
    "1d_corrector": _preset_obs_1d_corrector,
    "2d_uniform_72": _preset_obs_2d_uniform,
    "2d_lognormal_1250": _preset_obs_2d_lognormal,
}


def coefficient_preset(name: str) -> list[SeparableTerm]:
    try:
        return COEFFICIENT_PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown coefficient preset '{name}'") from None


def observation_preset(name: str) -> list[SeparableTerm]:
    try:
        return OBSERVATION_PRESETS[name]()
    except KeyError:
        raise KeyError(f"unknown observation preset '{name}'") from None


def list_catalogue_text() -> str:
    """Human-readable catalogue listing with stable ordering."""
    lines = ["factor grammar:"]
    lines += [
        "  <v>            identity on axis, v in {x1,x2,y1,y2}",
        "  <v>^<p>        monomial",
        "  (1+<v>)        shifted identity",
        "  sin(<2k>pi*<v>), cos(<2k>pi*<v>)        full-period trigonometric",
        "  (1+sin(<2k>pi*<v>)), (1+cos(<2k>pi*<v>))",
        "  e<p>           coordinate direction (observation weights)",
        "  terms are '*'-joined products with an optional leading scale",
        "",
        "coefficient presets:",
    ]
    for name in sorted(COEFFICIENT_PRESETS):
        terms = COEFFICIENT_PRESETS[name]()
        lines.append(f"  {name} ({len(terms)} terms)")
        for t in terms:
            lines.append(f"    {t.id}")
    lines.append("")
    lines.append("observation presets:")
    for name in sorted(OBSERVATION_PRESETS):
        terms = OBSERVATION_PRESETS[name]()
        lines.append(f"  {name} ({len(terms)} weights)")
        show = terms if len(terms) <= 16 else terms[:8]
        for t in show:
            lines.append(f"    {t.id}")
        if len(terms) > 16:
            lines.append(f"    ... {len(terms) - 8} more")
    return "\n".join(lines) + "\n"
