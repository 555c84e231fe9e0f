#!/usr/bin/env python3
"""Independent oracle for the golden files in this directory.

Plain Python floats, written from the formulas without looking at the C++.
Run from anywhere; writes reward.golden and routed_weights.golden next to
this script.
"""
import math
import os

HERE = os.path.dirname(os.path.abspath(__file__))


def num(x):
    return repr(float(x))


def gate(fmt, corr):
    return 1 if (fmt and corr) else 0


def r_eff(l, g, rng, m, eps):
    if g == 0:
        return 0.0
    if rng is None:
        return 1.0
    if l <= m:
        return 1.0
    lo, hi = rng
    return min(1.0, max(0.0, 1.0 - (l - lo) / (hi - lo + eps)))


def r_len(l, g, ref, f):
    if g == 0:
        return 0.0
    if l < ref:
        return math.exp(-(ref - l) / ref)
    if l <= ref + f:
        return 1.0
    return math.exp(-(l - (ref + f)) / (ref + f))


def think_range(lengths, gates):
    sel = [l for l, g in zip(lengths, gates) if g == 1]
    if len(sel) <= 2:
        return None
    return (min(sel), max(sel))


def reward_cases():
    out = []

    def add(name, fn, expected, **kw):
        fields = [f"fn={fn}"] + [f"{k}={v}" for k, v in kw.items()]
        out.append(f"{name} | " + " | ".join(fields) + f" | expected={num(expected)}")

    for fmt in (0, 1):
        for corr in (0, 1):
            add(f"gate_{fmt}{corr}", "gate", gate(fmt, corr), fmt=fmt, corr=corr)

    for name, g in (("p_mixed", [1, 1, 0, 1]), ("p_none", [0] * 16), ("p_all", [1] * 16)):
        add(name, "p_succ", sum(g) / len(g), g=",".join(map(str, g)))

    for p in (1.0, 0.0, 0.75, 0.3):
        add(f"wdiff_{p}", "w_diff", 2.0 - p, p=num(p))

    rng = (10, 30)
    m, eps = 5, 1e-6
    cases = [
        ("reff_gate_off", 20, 0, rng),
        ("reff_fallback", 40, 1, None),
        ("reff_fallback_gate_off", 40, 0, None),
        ("reff_margin_plateau", 4, 1, rng),
        ("reff_margin_edge", 5, 1, rng),
        ("reff_minmax_min", 10, 1, rng),
        ("reff_minmax_interior", 20, 1, rng),
        ("reff_minmax_quarter", 15, 1, rng),
        ("reff_minmax_max", 30, 1, rng),
        ("reff_degenerate_range", 12, 1, (12, 12)),
    ]
    for name, l, g, r in cases:
        extra = {} if r is None else {"range": f"{r[0]}:{r[1]}"}
        add(name, "r_eff", r_eff(l, g, r, m, eps), l=l, g=g, m=m, eps=num(eps), **extra)

    ref, f = 100, 20
    for name, l, g in (
        ("rlen_gate_off", 100, 0),
        ("rlen_below", 50, 1),
        ("rlen_zero", 0, 1),
        ("rlen_just_below", 99, 1),
        ("rlen_at_ref", 100, 1),
        ("rlen_in_band", 110, 1),
        ("rlen_band_top", 120, 1),
        ("rlen_just_above", 121, 1),
        ("rlen_above", 180, 1),
    ):
        add(name, "r_len", r_len(l, g, ref, f), l=l, g=g, l_ref=ref, f=f)

    # Small reference, desk-scale band.
    add("rlen_small_below", "r_len", r_len(3, 1, 9, 4), l=3, g=1, l_ref=9, f=4)
    add("rlen_small_above", "r_len", r_len(20, 1, 9, 4), l=20, g=1, l_ref=9, f=4)

    for name, lengths, g in (
        ("range_three", [10, 20, 30, 99], [1, 1, 1, 0]),
        ("range_two", [10, 20, 30, 99], [1, 1, 0, 0]),
        ("range_none", [10, 20, 30, 99], [0, 0, 0, 0]),
    ):
        r = think_range(lengths, g)
        fields = {"lengths": ",".join(map(str, lengths)), "g": ",".join(map(str, g))}
        if r is None:
            out.append(f"{name} | fn=range | lengths={fields['lengths']} | g={fields['g']}"
                       " | expected=absent")
        else:
            out.append(f"{name} | fn=range | lengths={fields['lengths']} | g={fields['g']}"
                       f" | expected={r[0]}:{r[1]}")
    return out


def advantage(returns, eps):
    k = len(returns)
    mean = sum(returns) / k
    var = sum((r - mean) ** 2 for r in returns) / k
    sd = math.sqrt(var)
    return [(r - mean) / (sd + eps) for r in returns]


def masks(b, T):
    if b is None:
        return [0] * T, [0] * T, [0] * T
    thk, end = b
    t_ = [1 if t <= thk else 0 for t in range(1, T + 1)]
    a_ = [1 if thk < t <= end else 0 for t in range(1, T + 1)]
    v_ = [1 if t <= end else 0 for t in range(1, T + 1)]
    return t_, a_, v_


def routed(mode, s, eps, gates, r_think, r_answer, bounds, T):
    rows = []
    if mode == "naive":
        adv = advantage(r_think, eps)
        for k, b in enumerate(bounds):
            _, _, v = masks(b, T)
            rows.append([v[t] * adv[k] for t in range(T)])
        return rows
    w = 2.0 - sum(gates) / len(gates)
    a_t = [a * w * s if a >= 0 else a for a in advantage(r_think, eps)]
    a_a = advantage(r_answer, eps)
    for k, b in enumerate(bounds):
        mt, ma, mv = masks(b, T)
        rows.append([mv[t] * (a_t[k] * mt[t] + a_a[k] * ma[t]) for t in range(T)])
    return rows


def routed_cases():
    e = math.exp
    specs = [
        # name, mode, s, eps, gates, r_think, r_answer, bounds, T
        ("worked_mixed", "dss", 1.5, 1e-4, [1, 1, 0, 1], [1.0, 0.5, 0.0, 1.0],
         [1.0, e(-0.5), 0.0, 0.8], [(3, 6), (2, 5), (4, 7), (1, 3)], 7),
        ("segment_example", "dss", 1.0, 1e-4, [1, 0], [1.0, 0.0], [0.0, 0.0],
         [(3, 6), None], 7),
        ("all_gates_off", "dss", 1.5, 1e-4, [0, 0, 0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0],
         [(2, 4), None, (1, 2)], 5),
        ("zero_variance", "dss", 1.5, 1e-4, [1, 1, 1, 1], [1.0] * 4, [1.0] * 4,
         [(2, 4), (3, 5), (1, 2), (4, 6)], 6),
        ("fallback_pair", "dss", 1.5, 1e-4, [1, 1, 0, 0], [1.0, 1.0, 0.0, 0.0],
         [e(-0.25), 1.0, 0.0, 0.0], [(5, 8), (3, 7), (2, 3), None], 8),
        ("pair_eps", "dss", 1.5, 1e-4, [1, 1], [0.2, 0.8], [0.8, 0.2], [(2, 3), (1, 4)], 4),
        ("large_s", "dss", 3.0, 1e-3, [1, 1, 1, 0, 1],
         [1.0, 0.25, 0.6, 0.0, 1.0], [0.9, 1.0, e(-1.0), 0.0, 0.5],
         [(4, 9), (6, 8), (2, 5), (3, 4), (1, 9)], 10),
        ("naive_broadcast", "naive", 1.5, 1e-4, [1, 1, 0, 1], [1.0, 0.5, 0.0, 1.0], None,
         [(3, 6), (2, 5), (4, 7), (1, 3)], 7),
        ("naive_zero_variance", "naive", 1.5, 1e-4, [0, 0], [0.0, 0.0], None,
         [None, (1, 2)], 3),
    ]
    out = []
    for name, mode, s, eps, gates, rt, ra, bounds, T in specs:
        rows = routed(mode, s, eps, gates, rt, ra, bounds, T)
        fields = [f"mode={mode}", f"s={num(s)}", f"eps_norm={num(eps)}",
                  "gates=" + ",".join(map(str, gates)),
                  "r_think=" + ",".join(num(x) for x in rt)]
        if ra is not None:
            fields.append("r_answer=" + ",".join(num(x) for x in ra))
        fields.append("bounds=" + ",".join("-" if b is None else f"{b[0]}:{b[1]}"
                                           for b in bounds))
        fields.append(f"T={T}")
        fields.append("expected=" + ";".join(",".join(num(x) for x in r) for r in rows))
        out.append(name + " | " + " | ".join(fields))
    return out


def main():
    with open(os.path.join(HERE, "reward.golden"), "w") as f:
        f.write("# name | fn=... | inputs... | expected=...\n")
        for line in reward_cases():
            f.write(line + "\n")
    with open(os.path.join(HERE, "routed_weights.golden"), "w") as f:
        f.write("# name | mode | s | eps_norm | gates | r_think | r_answer | bounds | T | expected\n")
        for line in routed_cases():
            f.write(line + "\n")


if __name__ == "__main__":
    main()
