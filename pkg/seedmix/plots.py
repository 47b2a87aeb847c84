"""
Static SVG figures of a run: demand per variety, the efficient frontier of one location and the stocking plan.
The SVGs carry no date and a fixed id salt, so identical runs give identical files.
"""

from pathlib import Path
from typing import Optional, Sequence, Tuple

import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt  # noqa: E402

from seedmix.planning import DemandVector, StockingPlan  # noqa: E402
from seedmix.portfolio import FrontierPoint  # noqa: E402

matplotlib.rcParams.update({'svg.hashsalt': 'seedmix', 'svg.fonttype': 'none', 'figure.dpi': 100})


def _save(figure, path: Path) -> Path:
    figure.tight_layout()
    figure.savefig(path, format='svg', metadata={'Date': None})
    plt.close(figure)
    return Path(path)


def plot_demand(demand: DemandVector, path: Path) -> Path:
    order = sorted(range(len(demand.variety_ids)), key=lambda i: (-demand.demand[i], demand.variety_ids[i]))
    figure, axes = plt.subplots(figsize=(max(6.0, 0.35 * len(order)), 4.0))
    axes.bar([demand.variety_ids[i] for i in order], [demand.demand[i] for i in order], color='tab:blue')
    axes.set_xlabel('variety')
    axes.set_ylabel('demand (area)')
    axes.set_title('Aggregate demand')
    axes.tick_params(axis='x', labelrotation=90)
    return _save(figure, path)


def plot_frontier(points: Sequence[FrontierPoint], path: Path, varieties: Sequence[Tuple[str, float, float]] = (), restricted: Optional[Sequence[FrontierPoint]] = None, risk_cap: Optional[float] = None) -> Path:
    """
    Expected yield against risk cap, single-variety points in red, the restricted frontier dashed.
    """
    figure, axes = plt.subplots(figsize=(6.0, 4.5))
    axes.plot([point.risk for point in points], [point.expected_yield for point in points], marker='o', color='tab:blue', label='all varieties')
    if restricted:
        axes.plot([point.risk for point in restricted], [point.expected_yield for point in restricted], linestyle='--', color='tab:green', label='candidates')
    if varieties:
        axes.scatter([risk for _, risk, _ in varieties], [mean for _, _, mean in varieties], color='tab:red', s=12, label='single variety')
    if risk_cap is not None:
        axes.axvline(risk_cap, color='grey', linewidth=0.8, linestyle=':')
    axes.set_xlabel('risk (yield standard deviation)')
    axes.set_ylabel('expected yield')
    location_id = points[0].weights.location_id if points else ''
    axes.set_title(f'Efficient frontier {location_id}'.strip())
    axes.legend(loc='lower right')
    return _save(figure, path)


def plot_plan(plan: StockingPlan, path: Path) -> Path:
    figure, axes = plt.subplots(figsize=(5.0, 5.0))
    axes.pie([proportion for _, proportion in plan.entries], labels=plan.variety_ids, autopct='%1.0f%%', startangle=90, counterclock=False)
    axes.set_title('Stocking plan')
    axes.axis('equal')
    return _save(figure, path)
