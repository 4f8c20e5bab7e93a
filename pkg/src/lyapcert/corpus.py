"""Deterministic random corpora of smooth test functions."""

import numpy as np

from .expr import parse_potential, to_text

_TEMPLATES_1D = (
    "{a}*sin({b}*u + {c})",
    "{a}*cos({b}*u)",
    "{a}*u/(1 + {b}*u^2)",
    "{a}*exp(-{b}*u^2)",
    "{a}*u + {c}",
    "{a}*u^2 + {c}*u",
    "{a}*log(1 + {b}*u^2)",
    "sqrt(1 + {b}*u^2)",
    "{a}*sin({b}*u)*exp(-{b}*u^2)",
    "{a}*u*exp(-{b}*u^2) + {c}",
)

# bounded with bounded gradient on all of R^n; safe under heavy tails
_BOUNDED = (0, 1, 2, 3, 8, 9)


def _fmt(x: float) -> str:
    return f"({x:.6g})"


def random_corpus(dim: int, size: int, seed: int, length_scale: float = 1.0,
                  bounded: bool = False) -> list:
    """Return ``size`` expressions over ``x1 .. x{dim}``.

    ``length_scale`` stretches the functions so they vary on the scale of
    the measure; ``bounded`` restricts to templates that stay bounded with
    bounded gradient (useful for heavy-tailed measures).
    """
    rng = np.random.default_rng(seed)
    pool = _BOUNDED if bounded else range(len(_TEMPLATES_1D))
    pool = list(pool)
    out = []
    for _ in range(size):
        t = _TEMPLATES_1D[pool[rng.integers(len(pool))]]
        if dim == 1:
            u = f"(x1/{_fmt(length_scale)})"
        else:
            th = rng.uniform(0, 2 * np.pi)
            u = f"(({np.cos(th):.6g}*x1 + {np.sin(th):.6g}*x2)/{_fmt(length_scale)})"
        a = rng.uniform(0.5, 2.0) * rng.choice([-1, 1])
        b = rng.uniform(0.3, 2.0)
        c = rng.uniform(-1.0, 1.0)
        src = t.format(a=_fmt(a), b=_fmt(b), c=_fmt(c)).replace("u", u)
        out.append(parse_potential(src, dim))
    return out


def expr_corpus_texts(exprs) -> list:
    return [to_text(e) for e in exprs]


__all__ = ["random_corpus", "expr_corpus_texts"]
