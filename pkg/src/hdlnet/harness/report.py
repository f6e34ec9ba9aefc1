from __future__ import annotations

import statistics

from hdlnet.harness.simulator import RunReport


def _fmt(x: float | None) -> str:
    return "-" if x is None else f"{x:.3f}"


def propagation_summary(run: RunReport) -> tuple[float, float, float] | None:
    samples = run.propagation
    if not samples:
        return None
    return min(samples), statistics.median(samples), max(samples)


def render(run: RunReport, fmt: str = "text") -> str:
    if fmt not in ("text", "table"):
        raise ValueError(f"unknown report format {fmt!r}")
    lines = [f"scenario {run.scenario} (seed {run.seed}), freshness bound {run.freshness_bound:g}s"]
    if fmt == "table":
        lines.append(f"{'t':>8}  {'result':<6}  {'line':>4}  event / detail")
        for o in run.outcomes:
            lines.append(f"{o.at:>8.3f}  {'PASS' if o.passed else 'FAIL':<6}  {o.lineno:>4}  {o.action}")
            lines.append(f"{'':>8}  {'':<6}  {'':>4}    {o.detail}")
        if run.moves:
            lines.append("")
            lines.append(f"{'host':<12} {'moved at':>9} {'fresh at':>9} {'delta':>7}  address")
            for m in run.moves:
                note = " (superseded)" if m.superseded else ""
                lines.append(
                    f"{m.host:<12} {m.at:>9.3f} {_fmt(m.first_fresh_at):>9} {_fmt(m.delta):>7}  {m.expected}{note}"
                )
    else:
        for o in run.outcomes:
            lines.append(f"{'PASS' if o.passed else 'FAIL'} t={o.at:g} (line {o.lineno}) {o.action}: {o.detail}")
        for m in run.unpropagated:
            lines.append(f"FAIL t={m.at:g} {m.host} never resolved to {m.expected}")
    summary = propagation_summary(run)
    if summary:
        lines.append("propagation min/median/max: {:.3f} / {:.3f} / {:.3f} s over {} moves".format(*summary, len(run.propagation)))
    lines.append(f"stale answers after bound: {run.stale_count} of {run.samples} samples")
    if run.unreachable:
        lines.append(f"registry unreachable events: {len(run.unreachable)}")
    for bench in run.wall.get("bench", []):
        lines.append(
            f"bench {bench['name']}: {bench['count']} resolutions, median {bench['median_s'] * 1e3:.3f} ms"
        )
    lines.append(f"simulated {run.sim_duration:g}s in {run.wall.get('duration_s', 0.0):.2f}s wall")
    lines.append("RESULT: " + ("PASS" if run.passed else "FAIL"))
    return "\n".join(lines)


def exit_code(run: RunReport) -> int:
    return 0 if run.passed else 1
