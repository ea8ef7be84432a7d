"""Shared pass/fail record for the acceptance suite, printed at session end."""

TITLES = {
    1: "branch-and-bound matches enumeration on derived instances",
    2: "AC power flow reproduces tight relaxed solutions",
    3: "no simultaneous charge and discharge in any incumbent",
    4: "state-of-energy recursion and cyclic condition",
    5: "configuration comparison and storage siting on the bundled case",
    6: "load stress frontier and congestion",
    7: "conic kernel duality, KKT residuals and certificates",
    8: "byte-identical reruns of solve",
}

RESULTS: dict = {}


def record(n: int, ok: bool, detail: str = "") -> bool:
    RESULTS[n] = (bool(ok), detail)
    return bool(ok)


def lines() -> list[str]:
    out = []
    for n, title in TITLES.items():
        if n in RESULTS:
            ok, detail = RESULTS[n]
            out.append(f"criterion {n} {'PASS' if ok else 'FAIL'}: {title}" + (f" ({detail})" if detail else ""))
        else:
            out.append(f"criterion {n} NOT RUN: {title}")
    return out
