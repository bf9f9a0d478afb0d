"""Results module.

Containers for simulation traces and sweeps. They can be turned into
DataFrames, written as CSV/JSON and plotted with bokeh or matplotlib.
"""
import logging
import math
from dataclasses import dataclass

import bokeh.palettes as bp
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
from bokeh.models import ColumnDataSource
from bokeh.plotting import figure

from blockpd.utils import dump_document

__all__ = ["TraceRecord", "SimulationResults", "SweepResults", "ticks_to_threshold"]

logger = logging.getLogger(__name__)

# set bokeh palette of colors
bokeh_colors = bp.RdGy[11]

TRACE_COLUMNS = [
    "tick",
    "stamp",
    "ops",
    "T",
    "K",
    "dist_max",
    "bound",
    "bound_ok",
    "successive",
    "x_hat_dist",
    "discarded_primal",
    "discarded_dual",
    "mixed_inputs",
]


@dataclass
class TraceRecord:
    """One snapshot of a run.

    Attributes
    ----------
    tick : int
    stamp : tuple
        The live dual counters t.
    ops, T, K : int
        Asynchrony counters at the snapshot.
    distances : tuple
        ||x^i - x_hat_delta||^2 for every primal agent, measured on the
        coordinates the agent owns or needs.
    bound : float
        Value of the convergence bound (nan without dual blocks).
    successive : float
        ||x(k) - x(k-1)|| at the snapshot tick.
    x_hat_dist : float
        ||x - x_hat_delta|| for the concatenated own blocks.
    discarded_primal, discarded_dual, mixed_inputs : int
        Cumulative protocol counters.
    """

    tick: int
    stamp: tuple
    ops: int
    T: int
    K: int
    distances: tuple
    bound: float
    successive: float
    x_hat_dist: float
    discarded_primal: int
    discarded_dual: int
    mixed_inputs: int

    @property
    def dist_max(self):
        return max(self.distances) if self.distances else math.nan

    @property
    def bound_ok(self):
        """False when the bound is below a measured distance."""
        if math.isnan(self.bound) or not self.distances:
            return True
        return self.bound >= self.dist_max

    def to_row(self):
        row = {
            "tick": self.tick,
            "stamp": " ".join(str(t) for t in self.stamp),
            "ops": self.ops,
            "T": self.T,
            "K": self.K,
            "dist_max": self.dist_max,
            "bound": self.bound,
            "bound_ok": self.bound_ok,
            "successive": self.successive,
            "x_hat_dist": self.x_hat_dist,
            "discarded_primal": self.discarded_primal,
            "discarded_dual": self.discarded_dual,
            "mixed_inputs": self.mixed_inputs,
        }
        for i, d in enumerate(self.distances):
            row[f"dist_{i}"] = d
        return row


def ticks_to_threshold(successive, threshold, patience=1):
    """First tick at which the successive-iterate distance stays below a threshold.

    Parameters
    ----------
    successive : array_like
        ||x(k) - x(k-1)|| for ticks 1, 2, ...
    threshold : float
    patience : int, optional
        Number of consecutive ticks below the threshold required.

    Returns
    -------
    int or None
        The tick ending the first qualifying window, None if never reached.

    Examples
    --------
    >>> ticks_to_threshold([1.0, 0.5, 0.01, 0.02, 0.001], 0.05, patience=2)
    4
    """
    below = 0
    for tick, value in enumerate(successive, start=1):
        below = below + 1 if value < threshold else 0
        if below >= patience:
            return tick
    return None


def _clean(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


class SimulationResults:
    """Class used to store the outcome of a simulated run.

    Parameters
    ----------
    trace : list of TraceRecord
        Snapshots every ``snapshot_every`` ticks plus the final tick.
    successive : numpy.ndarray
        ||x(k) - x(k-1)|| for every tick.
    converged : bool
        Whether the stop rule fired before the tick budget ran out.
    ticks : int
        Ticks executed.
    x_final, mu_final : numpy.ndarray
        Concatenated own blocks at the end of the run.
    saddle : SaddlePoint
        Reference point used for the distances, or None.
    config : dict
        Echo of the SimulationConfig.
    observer : ObserverState
    contraction_records : list
        (tick, ops, sup-norm error, ratio) at every ops increment when the
        contraction audit is on.
    dual_records : list
        (tick, c, t_c, distance, bound, ok) at every dual update when the dual
        audit is on.
    rate_constants : RateConstants
    messages_sent, messages_in_flight : int
    tag : str
        Tag of the problem.
    """

    def __init__(
        self,
        trace,
        successive,
        converged,
        ticks,
        x_final,
        mu_final,
        saddle=None,
        config=None,
        observer=None,
        contraction_records=None,
        dual_records=None,
        rate_constants=None,
        messages_sent=0,
        messages_in_flight=0,
        tag=None,
    ):
        self.trace = list(trace)
        self.successive = np.asarray(successive, dtype=float)
        self.converged = converged
        self.ticks = ticks
        self.x_final = x_final
        self.mu_final = mu_final
        self.saddle = saddle
        self.config = config or {}
        self.observer = observer
        self.contraction_records = contraction_records or []
        self.dual_records = dual_records or []
        self.rate_constants = rate_constants
        self.messages_sent = messages_sent
        self.messages_in_flight = messages_in_flight
        self.tag = tag

    def __repr__(self):
        state = "converged" if self.converged else "budget exhausted"
        return f"{self.__class__.__name__}(ticks={self.ticks}, {state}, snapshots={len(self.trace)})"

    def __len__(self):
        return len(self.trace)

    def __iter__(self):
        return iter(self.trace)

    @property
    def final(self):
        return self.trace[-1]

    @property
    def bound_violations(self):
        return sum(not r.bound_ok for r in self.trace)

    @property
    def max_contraction_ratio(self):
        ratios = [r[3] for r in self.contraction_records if not math.isnan(r[3])]
        return max(ratios) if ratios else math.nan

    def ticks_to_threshold(self, threshold=None, patience=None):
        """Ticks needed to bring ||x(k) - x(k-1)|| below threshold.

        Defaults to the run's own stop_tol and stop_patience.
        """
        threshold = self.config.get("stop_tol", 1e-6) if threshold is None else threshold
        patience = self.config.get("stop_patience", 1) if patience is None else patience
        return ticks_to_threshold(self.successive, threshold, patience)

    def to_dataframe(self):
        """Trace as a DataFrame, one row per snapshot.

        Columns are ``TRACE_COLUMNS`` followed by ``dist_0 ... dist_{N_p-1}``.
        """
        df = pd.DataFrame([r.to_row() for r in self.trace])
        if df.empty:
            return pd.DataFrame(columns=TRACE_COLUMNS)
        extra = [c for c in df.columns if c not in TRACE_COLUMNS]
        return df[TRACE_COLUMNS + extra]

    def to_csv(self, file_name):
        self.to_dataframe().to_csv(file_name, index=False, float_format="%.12g")

    def summary(self):
        """Run summary as a dictionary ready for JSON."""
        final = self.final
        obs = self.observer
        data = {
            "tag": self.tag,
            "seed": self.config.get("seed"),
            "converged": bool(self.converged),
            "ticks": int(self.ticks),
            "ticks_to_threshold": self.ticks_to_threshold(),
            "stamp": list(final.stamp),
            "ops": final.ops,
            "T": final.T,
            "K": final.K,
            "final_distances": list(final.distances),
            "final_bound": _clean(final.bound),
            "x_hat_dist": _clean(final.x_hat_dist),
            "bound_violations": self.bound_violations,
            "discarded_primal": final.discarded_primal,
            "discarded_dual": final.discarded_dual,
            "mixed_inputs": final.mixed_inputs,
            "messages_sent": self.messages_sent,
            "messages_in_flight": self.messages_in_flight,
            "x_final": self.x_final,
            "mu_final": self.mu_final,
            "config": self.config,
        }
        if obs is not None:
            data["ops_increments"] = obs.increments
            data["ops_resets"] = obs.resets
        if self.contraction_records:
            data["max_contraction_ratio"] = _clean(self.max_contraction_ratio)
        if self.dual_records:
            data["dual_bound_violations"] = sum(not r[5] for r in self.dual_records)
        return data

    def to_json(self, file_name):
        dump_document(self.summary(), file_name)

    def _plot_matplotlib(self, ax=None, **kwargs):
        if ax is None:
            ax = plt.gca()

        ticks = np.arange(1, len(self.successive) + 1)
        ax.semilogy(ticks, self.successive, **kwargs)
        ax.set_xlabel("Tick")
        ax.set_ylabel("||x(k) - x(k-1)||")
        ax.set_title(f"Successive iterate distance ({self.tag or 'run'})")

        return ax

    def _plot_bokeh(self, **kwargs):
        ticks = np.arange(1, len(self.successive) + 1)
        # zero steps cannot be drawn on a log axis
        values = np.where(self.successive > 0, self.successive, np.nan)
        source = ColumnDataSource(data=dict(tick=ticks, successive=values))

        bk_ax = figure(
            tools="pan, box_zoom, wheel_zoom, reset, save",
            width=640,
            height=480,
            title=f"Successive iterate distance ({self.tag or 'run'})",
            x_axis_label="Tick",
            y_axis_label="||x(k) - x(k-1)||",
            y_axis_type="log",
        )
        bk_ax.xaxis.axis_label_text_font_size = "14pt"
        bk_ax.yaxis.axis_label_text_font_size = "14pt"

        kwargs.setdefault("line_width", 3)
        kwargs.setdefault("line_color", bokeh_colors[0])
        bk_ax.line("tick", "successive", source=source, **kwargs)

        return bk_ax

    def plot(self, plot_type="bokeh", **kwargs):
        """Plot the successive iterate distance against ticks.

        Parameters
        ----------
        plot_type: str
            Matplotlib or bokeh.
            The default is bokeh
        kwargs : optional
            Passed to the line renderer.

        Returns
        -------
        ax : matplotlib.axes
            if plot_type == "matplotlib"
        bk_ax : bokeh axes
            if plot_type == "bokeh"
        """
        if plot_type == "matplotlib":
            return self._plot_matplotlib(**kwargs)
        elif plot_type == "bokeh":
            return self._plot_bokeh(**kwargs)
        else:
            raise ValueError(f"{plot_type} is not a valid plot type.")


class SweepResults:
    """Class used to store a family of runs differing in one parameter.

    Parameters
    ----------
    kind : str
        "blocks", "beta" or "commrate".
    labels : list
        Value of the swept parameter for every run.
    results : list of SimulationResults
    seeds : list of int, optional
        Seed of every run.
    """

    def __init__(self, kind, labels, results, seeds=None):
        self.kind = kind
        self.labels = list(labels)
        self.results = list(results)
        self.seeds = list(seeds) if seeds is not None else [r.config.get("seed") for r in self.results]

    def __repr__(self):
        return f"{self.__class__.__name__}(kind={self.kind!r}, runs={len(self.results)})"

    def to_dataframe(self):
        rows = []
        for label, seed, res in zip(self.labels, self.seeds, self.results):
            rows.append(
                {
                    "kind": self.kind,
                    "label": label,
                    "seed": seed,
                    "converged": res.converged,
                    "ticks": res.ticks,
                    "ticks_to_threshold": res.ticks_to_threshold(),
                    "x_hat_dist": res.final.x_hat_dist,
                    "discarded_primal": res.final.discarded_primal,
                    "discarded_dual": res.final.discarded_dual,
                }
            )
        return pd.DataFrame(rows)

    def aggregate(self):
        """Median ticks-to-threshold per label, in sweep order.

        Runs that never reach the threshold count as their tick budget.
        """
        df = self.to_dataframe()
        df["ticks_to_threshold"] = df["ticks_to_threshold"].fillna(df["ticks"]).astype(float)
        grouped = df.groupby("label", sort=False)["ticks_to_threshold"]
        return pd.DataFrame(
            {
                "kind": self.kind,
                "label": list(grouped.groups.keys()),
                "runs": grouped.size().values,
                "median_ticks": grouped.median().values,
                "mean_ticks": grouped.mean().values,
            }
        )

    def to_csv(self, file_name):
        self.aggregate().to_csv(file_name, index=False, float_format="%.12g")

    def _plot_matplotlib(self, ax=None, **kwargs):
        if ax is None:
            ax = plt.gca()
        for label in dict.fromkeys(self.labels):
            res = next(r for l, r in zip(self.labels, self.results) if l == label)
            ax.semilogy(np.arange(1, len(res.successive) + 1), res.successive, label=str(label), **kwargs)
        ax.set_xlabel("Tick")
        ax.set_ylabel("||x(k) - x(k-1)||")
        ax.legend(title=self.kind)
        return ax

    def _plot_bokeh(self, **kwargs):
        bk_ax = figure(
            tools="pan, box_zoom, wheel_zoom, reset, save",
            width=640,
            height=480,
            title=f"Sweep: {self.kind}",
            x_axis_label="Tick",
            y_axis_label="||x(k) - x(k-1)||",
            y_axis_type="log",
        )
        bk_ax.xaxis.axis_label_text_font_size = "14pt"
        bk_ax.yaxis.axis_label_text_font_size = "14pt"

        for k, label in enumerate(dict.fromkeys(self.labels)):
            res = next(r for l, r in zip(self.labels, self.results) if l == label)
            values = np.where(res.successive > 0, res.successive, np.nan)
            bk_ax.line(
                np.arange(1, len(values) + 1),
                values,
                line_width=3,
                line_color=bokeh_colors[(2 * k) % len(bokeh_colors)],
                legend_label=str(label),
                **kwargs,
            )
        return bk_ax

    def plot(self, plot_type="bokeh", **kwargs):
        """Plot the first run of every label.

        Parameters
        ----------
        plot_type: str
            Matplotlib or bokeh.
            The default is bokeh
        """
        if plot_type == "matplotlib":
            return self._plot_matplotlib(**kwargs)
        elif plot_type == "bokeh":
            return self._plot_bokeh(**kwargs)
        else:
            raise ValueError(f"{plot_type} is not a valid plot type.")
