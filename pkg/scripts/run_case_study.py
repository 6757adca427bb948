"""Solve the bundled power-network scenarios and write their CSV artifacts.

    python3 scripts/run_case_study.py --out results/casestudy
"""

import argparse
import time
from dataclasses import dataclass

from stochctl.cli import casestudy_summary
from stochctl.powernet import SCENARIOS, run_case_study


@dataclass
class CaseStudyConfig:
    out: str = "results/casestudy"
    horizon: int = 100
    step: int | None = None
    cap: int = 10**4
    scenarios: tuple = SCENARIOS


def main(cfg: CaseStudyConfig):
    for scenario in cfg.scenarios:
        t0 = time.perf_counter()
        cs = run_case_study(scenario, horizon=cfg.horizon, out_dir=cfg.out, step=cfg.step, cap=cfg.cap)
        print(f"[{scenario}] solved in {time.perf_counter() - t0:.1f}s")
        for line in casestudy_summary(cs):
            print("  " + line)
        for kind, path in sorted(cs.files.items()):
            print(f"  wrote {kind}: {path}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=CaseStudyConfig.out)
    ap.add_argument("--horizon", type=int, default=CaseStudyConfig.horizon)
    ap.add_argument("--step", type=int, default=None, help="policy snapshot step (default horizon // 2)")
    ap.add_argument("--scenario", choices=SCENARIOS + ("both",), default="both")
    a = ap.parse_args()
    scen = SCENARIOS if a.scenario == "both" else (a.scenario,)
    main(CaseStudyConfig(a.out, a.horizon, a.step, scenarios=scen))
