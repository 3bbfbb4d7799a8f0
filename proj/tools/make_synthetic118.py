#!/usr/bin/env python3
"""Writes data/case118_synthetic.m: a meshed 118-bus test grid.

Buses sit on a 10 x 12 lattice (two corners removed) joined to their lattice
neighbours, plus a few diagonal ties and tap-changing transformers. The output is
fully determined by SEED.
"""

import argparse
import random

SEED = 118
ROWS, COLS = 10, 12


def build():
    rng = random.Random(SEED)
    cells = [(r, c) for r in range(ROWS) for c in range(COLS)]
    cells = [rc for rc in cells if rc not in ((0, COLS - 1), (ROWS - 1, 0))]
    ids = {rc: k + 1 for k, rc in enumerate(cells)}

    slack = ids[(ROWS // 2, 0)]
    pv = sorted(rng.sample([i for i in ids.values() if i != slack], 26))
    solar = sorted(rng.sample([i for i in ids.values() if i != slack and i not in pv], 4))
    wind = sorted(rng.sample([i for i in ids.values() if i not in pv and i not in solar and i != slack], 2))

    buses = []
    total_load = 0.0
    for (r, c), i in sorted(ids.items(), key=lambda kv: kv[1]):
        kind = 3 if i == slack else 2 if i in pv else 1
        pd = round(rng.uniform(2.0, 12.0), 1) if rng.random() < 0.85 else 0.0
        qd = round(pd * rng.uniform(0.2, 0.4), 1)
        bs = 5.0 if rng.random() < 0.05 else 0.0
        vm = 1.03 if i == slack else round(rng.uniform(1.0, 1.03), 3) if i in pv else 1.0
        total_load += pd
        buses.append((i, kind, pd, qd, 0.0, bs, vm))

    renewable = {i: round(rng.uniform(10.0, 25.0), 1) for i in solar + wind}
    pv_share = 0.8 * (total_load - sum(renewable.values())) / len(pv)

    gens = [(slack, 0.0, "coal")]
    for i in pv:
        gens.append((i, round(pv_share * rng.uniform(0.8, 1.2), 1), rng.choice(["coal", "ng", "hydro"])))
    for i in solar:
        gens.append((i, renewable[i], "solar"))
    for i in wind:
        gens.append((i, renewable[i], "wind"))
    gens[0] = (slack, round(total_load - sum(g[1] for g in gens[1:]), 1), "coal")

    branches = []
    for (r, c), i in sorted(ids.items(), key=lambda kv: kv[1]):
        for dr, dc in ((0, 1), (1, 0)):
            j = ids.get((r + dr, c + dc))
            if j is None:
                continue
            x = round(rng.uniform(0.03, 0.08), 4)
            rr = round(x * rng.uniform(0.15, 0.35), 4)
            b = round(rng.uniform(0.001, 0.004), 4)
            ratio = 0.0
            if rng.random() < 0.06:
                rr, b, ratio = 0.0, 0.0, round(rng.uniform(0.96, 1.0), 3)
            branches.append((i, j, rr, x, b, ratio))
    for _ in range(12):
        r, c = rng.randrange(ROWS - 1), rng.randrange(COLS - 1)
        i, j = ids.get((r, c)), ids.get((r + 1, c + 1))
        if i is None or j is None:
            continue
        x = round(rng.uniform(0.05, 0.1), 4)
        branches.append((i, j, round(0.25 * x, 4), x, 0.002, 0.0))
    return buses, gens, branches


def render(buses, gens, branches):
    out = [
        "function mpc = case118_synthetic",
        "% Synthetic meshed 118-bus grid, generated by tools/make_synthetic118.py.",
        "",
        "mpc.version = '2';",
        "mpc.baseMVA = 100;",
        "",
        "%% bus data",
        "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin",
        "mpc.bus = [",
    ]
    for i, kind, pd, qd, gs, bs, vm in buses:
        out.append(f"\t{i}\t{kind}\t{pd:g}\t{qd:g}\t{gs:g}\t{bs:g}\t1\t{vm:g}\t0\t138\t1\t1.06\t0.94;")
    out += ["];", "", "%% generator data", "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin", "mpc.gen = ["]
    vm = {b[0]: b[6] for b in buses}
    for bus, pg, _ in gens:
        out.append(f"\t{bus}\t{pg:g}\t0\t300\t-300\t{vm[bus]:g}\t100\t1\t{max(2 * pg, 50):g}\t0;")
    out += ["];", "", "%% branch data",
            "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax", "mpc.branch = ["]
    for i, j, r, x, b, ratio in branches:
        out.append(f"\t{i}\t{j}\t{r:g}\t{x:g}\t{b:g}\t0\t0\t0\t{ratio:g}\t0\t1\t-360\t360;")
    out += ["];", "", "%% generator fuel type", "mpc.genfuel = {"]
    out += [f"\t'{fuel}';" for _, _, fuel in gens]
    out += ["};", ""]
    return "\n".join(out)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-o", "--output", default="data/case118_synthetic.m")
    args = ap.parse_args()
    with open(args.output, "w") as f:
        f.write(render(*build()))


if __name__ == "__main__":
    main()
