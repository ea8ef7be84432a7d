"""Regenerate the bundled 33-bus case and the twelve representative days.

Network impedances and base loads are the standard Baran-Wu 33-bus feeder
(12.66 kV, 3715 kW / 2300 kVAr).  Devices, limits, costs and profiles are
this package's own choices; they are written into the case ``notes``.

    python scripts/make_bundled_data.py  [--out src/essplan/data]
"""

import argparse
import json
import math
from pathlib import Path

V_BASE = 12.66
S_BASE = 1.0
Z_BASE = V_BASE**2 / S_BASE

# (from, to, r ohm, x ohm)
BRANCHES = [
    (1, 2, 0.0922, 0.0470), (2, 3, 0.4930, 0.2511), (3, 4, 0.3660, 0.1864), (4, 5, 0.3811, 0.1941),
    (5, 6, 0.8190, 0.7070), (6, 7, 0.1872, 0.6188), (7, 8, 0.7114, 0.2351), (8, 9, 1.0300, 0.7400),
    (9, 10, 1.0440, 0.7400), (10, 11, 0.1966, 0.0650), (11, 12, 0.3744, 0.1238), (12, 13, 1.4680, 1.1550),
    (13, 14, 0.5416, 0.7129), (14, 15, 0.5910, 0.5260), (15, 16, 0.7463, 0.5450), (16, 17, 1.2890, 1.7210),
    (17, 18, 0.7320, 0.5740), (2, 19, 0.1640, 0.1565), (19, 20, 1.5042, 1.3554), (20, 21, 0.4095, 0.4784),
    (21, 22, 0.7089, 0.9373), (3, 23, 0.4512, 0.3083), (23, 24, 0.8980, 0.7091), (24, 25, 0.8960, 0.7011),
    (6, 26, 0.2030, 0.1034), (26, 27, 0.2842, 0.1447), (27, 28, 1.0590, 0.9337), (28, 29, 0.8042, 0.7006),
    (29, 30, 0.5075, 0.2585), (30, 31, 0.9744, 0.9630), (31, 32, 0.3105, 0.3619), (32, 33, 0.3410, 0.5302),
]

# bus: (kW, kVAr)
LOADS = {
    2: (100, 60), 3: (90, 40), 4: (120, 80), 5: (60, 30), 6: (60, 20), 7: (200, 100), 8: (200, 100),
    9: (60, 20), 10: (60, 20), 11: (45, 30), 12: (60, 35), 13: (60, 35), 14: (120, 80), 15: (60, 10),
    16: (60, 20), 17: (60, 20), 18: (90, 40), 19: (90, 40), 20: (90, 40), 21: (90, 40), 22: (90, 40),
    23: (90, 50), 24: (420, 200), 25: (420, 200), 26: (60, 25), 27: (60, 25), 28: (60, 20), 29: (120, 70),
    30: (200, 600), 31: (150, 70), 32: (210, 100), 33: (60, 40),
}

# thermal limits in MVA; the substation trunk is the bottleneck
S_MAX_DEFAULT = 2.0
S_MAX = {1: 3.3, 2: 3.0, 3: 2.1}

GENERATORS = [
    # substation supply: quadratic cost makes peak energy expensive
    dict(bus=1, a=0.0, b=40.0, c=12.0, p_min=0.0, p_max=6.0, q_min=-2.0, q_max=4.0),
    # four unity power factor DG units
    dict(bus=14, a=2.0, b=62.0, c=4.0, p_min=0.0, p_max=0.50, q_min=0.0, q_max=0.0),
    dict(bus=22, a=2.0, b=64.0, c=4.0, p_min=0.0, p_max=0.20, q_min=0.0, q_max=0.0),
    dict(bus=25, a=2.0, b=60.0, c=4.0, p_min=0.0, p_max=0.30, q_min=0.0, q_max=0.0),
    dict(bus=31, a=2.0, b=66.0, c=4.0, p_min=0.0, p_max=0.20, q_min=0.0, q_max=0.0),
]

RPCS = [dict(bus=18, q_min=-0.3, q_max=0.6), dict(bus=33, q_min=-0.3, q_max=0.6)]

ESS = dict(bus="all", e_max=1.2, p_ch_max=2.0, p_dis_max=2.0, q_inv_min=1.0, q_inv_max=1.0,
           eta_ch=0.85, eta_dis=0.90, f_cost=250.0, h_cost=0.005)

NOTES = [
    "Impedances and base loads: Baran-Wu 33-bus feeder on 1 MVA / 12.66 kV.",
    "Generator at bus 1 models the substation; DG buses, sizes and costs are package choices.",
    "RPCs at buses 18 and 33; PV unit at bus 4 with per-unit profiles from the scenario file.",
    "ESS parameters: E_max 1.2 pu, charge/discharge 2 pu, efficiencies 85 % / 90 %.",
    "Inverter reactive range, thermal limits and cost coefficients are package choices.",
]

# ---------------------------------------------------------------------------
# representative days: 4 seasons x 3 weather types, equal weights

SEASON_LOAD = {"winter": 1.00, "spring": 0.88, "summer": 0.96, "autumn": 0.90}
SEASON_PV_PEAK = {"winter": 0.45, "spring": 0.70, "summer": 0.80, "autumn": 0.55}
SEASON_DAYLIGHT = {"winter": (8, 17), "spring": (6, 19), "summer": (5, 20), "autumn": (7, 18)}
WEATHER = {"clear": 1.0, "mixed": 0.6, "overcast": 0.25}

# hourly load multiplier, hour 1..24 (evening peak at 19-21)
LOAD_SHAPE = [
    0.62, 0.58, 0.56, 0.55, 0.57, 0.63, 0.72, 0.80, 0.84, 0.85, 0.86, 0.86,
    0.85, 0.84, 0.84, 0.86, 0.90, 0.95, 1.00, 1.00, 0.98, 0.92, 0.82, 0.70,
]


def pv_profile(season, weather):
    lo, hi = SEASON_DAYLIGHT[season]
    peak = SEASON_PV_PEAK[season] * WEATHER[weather]
    out = []
    for h in range(1, 25):
        if h <= lo or h >= hi:
            out.append(0.0)
            continue
        # half-sine between sunrise and sunset, maximal at hour 12
        if h <= 12:
            frac = (h - lo) / (12 - lo)
        else:
            frac = (hi - h) / (hi - 12)
        out.append(round(peak * math.sin(0.5 * math.pi * frac), 4))
    return out


def scenarios():
    out = []
    for season in SEASON_LOAD:
        for weather in WEATHER:
            # cloudy days are slightly heavier on load (lighting, heating)
            bump = {"clear": 0.0, "mixed": 0.01, "overcast": 0.02}[weather]
            load = [round(v * (SEASON_LOAD[season] + bump), 4) for v in LOAD_SHAPE]
            out.append({"id": f"{season}-{weather}", "weight": 1.0, "load_scale": load,
                        "pv_output": pv_profile(season, weather)})
    return {"hours_per_day": 24, "scenarios": out}


def case():
    buses = [{"id": 1, "p_load": 0.0, "q_load": 0.0, "v_min": 0.95, "v_max": 1.05, "slack": True}]
    for i in range(2, 34):
        p, q = LOADS[i]
        buses.append({"id": i, "p_load": p / 1000 / S_BASE, "q_load": q / 1000 / S_BASE, "v_min": 0.95, "v_max": 1.05})
    branches = [
        {"from": f, "to": t, "r": round(r / Z_BASE, 10), "x": round(x / Z_BASE, 10),
         "s_max": S_MAX.get(k, S_MAX_DEFAULT) / S_BASE}
        for k, (f, t, r, x) in enumerate(BRANCHES, start=1)
    ]
    return {
        "name": "case33",
        "notes": NOTES,
        "base": {"s_base": S_BASE, "v_base": V_BASE},
        "buses": buses,
        "branches": branches,
        "generators": GENERATORS,
        "pv_units": [{"bus": 4, "profile": "pv", "scale": 1.0}],
        "rpcs": RPCS,
        "ess_candidates": [ESS],
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src" / "essplan" / "data"))
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "case33.json").write_text(json.dumps(case(), indent=1) + "\n")
    (out / "scenarios.json").write_text(json.dumps(scenarios(), indent=1) + "\n")


if __name__ == "__main__":
    main()
