from typing import Optional, Sequence
import matplotlib.pyplot as plt
import numpy as np
import seaborn

from .errors import PreconditionError
from .geometry import LojasiewiczFit, TubeFit
from .stability import FamilyResult


def _loglog(ax, title, xlabel, ylabel):
    ax.set_xscale('log')
    ax.set_yscale('log')

    if title:
        ax.set_title(title)

    if xlabel:
        ax.set_xlabel(xlabel)

    if ylabel:
        ax.set_ylabel(ylabel)


def plot_convergence(spacings: Sequence[float], errors: Sequence[float],
                     order: Optional[float] = None, label='error',
                     title='', xlabel='grid spacing h', ylabel='error',
                     ax=None):
    """ Plot errors against grid spacing on log-log axes, optionally with a
    reference slope of the given order through the finest point.

    :param ax: The `matplotlib` `Axes` instance the plot will be drawn on. If
               `None`, the current `Axes` instance is used (`plt.gca()`).
    """
    if ax is None:
        ax = plt.gca()

    h = np.asarray(spacings, dtype=float)
    err = np.asarray(errors, dtype=float)
    colors = seaborn.color_palette('deep', 2)
    ax.plot(h, err, 'o-', color=colors[0], label=label)

    if order is not None:
        i = int(np.argmin(h))
        ax.plot(h, err[i] * (h / h[i]) ** order, '--', color=colors[1],
                label=f'order {order:g}')

    _loglog(ax, title, xlabel, ylabel)
    ax.legend()
    return ax


def plot_tube_fit(tube: TubeFit, title='', ax=None):
    """ Cover volume against `eta` with the fitted line `C1 eta`. """
    if ax is None:
        ax = plt.gca()

    table = tube.table
    colors = seaborn.color_palette('deep', 2)
    ax.plot(table['eta'], table['vol'], 'o', color=colors[0],
            label=f'{tube.cover} cover')
    ax.plot(table['eta'], tube.C1 * table['eta'], '-', color=colors[1],
            label=f'C1 eta, C1={tube.C1:.3g}')

    _loglog(ax, title, 'eta', 'vol U(eta)')
    ax.legend()
    return ax


def plot_lojasiewicz(fit: LojasiewiczFit, title='', ax=None):
    """ Scatter of the sampled `(d, f)` pairs with the lower bound
    `C3 d^r`. """
    if ax is None:
        ax = plt.gca()

    if fit.samples is None or fit.samples.empty:
        raise PreconditionError('fit carries no samples')

    d = np.exp(fit.samples['log_d'].to_numpy())
    f = np.exp(fit.samples['log_f'].to_numpy())
    colors = seaborn.color_palette('deep', 2)
    ax.scatter(d, f, s=4, alpha=0.4, color=colors[0], label='nodes')

    ds = np.geomspace(d.min(), d.max(), 100)
    ax.plot(ds, fit.C3 * ds ** fit.r, color=colors[1],
            label=f'C3 d^r, r={fit.r:.3g}')

    _loglog(ax, title, 'distance to critical set', 'energy density')
    ax.legend()
    return ax


def plot_stability_family(family: FamilyResult, title='', ax=None):
    """ lhs against rhs of an experiment family with the calibrated bound
    `C rhs^alpha`. """
    if ax is None:
        ax = plt.gca()

    table = family.table
    alpha = float(table['alpha'].min())
    colors = seaborn.color_palette('deep', 2)

    ax.plot(table['rhs'], table['lhs'], 'o-', color=colors[0], label='lhs')
    rhs = np.geomspace(table['rhs'].min(), table['rhs'].max(), 50)
    ax.plot(rhs, family.C_calibrated * rhs ** alpha, '--', color=colors[1],
            label=f'C rhs^{alpha:.3g}')

    _loglog(ax, title, 'rhs', 'lhs')
    ax.legend()
    return ax
