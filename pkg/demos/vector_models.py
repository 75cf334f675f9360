"""Vector-valued sources: elastic waves in the plane and Maxwell in space.

For elastic waves the compressional and shear far fields are combined so that
every entry of the matrix strength is recovered.  For Maxwell the relation
model constant carries the opposite sign to the covariance one.
"""
import numpy as np

from gmigwave import exp_runner as er
from gmigwave.band_estimators import EstimatorConfig, ensemble_limit, model_constant
from gmigwave.forward_ops import DirectionSet
from gmigwave.gmig_field import Grid, MatrixStrengthPair, default_delta
from gmigwave.shapes import GaussianBump
from gmigwave.symbol_recovery import normalize
from gmigwave.waves_core import WaveKind

np.set_printoptions(precision=3, suppress=True)

off = dict(center=[0.05, 0.025], width=1.0, amplitude=0.4)
cfg = er.parse_config(dict(
    kind="elastic", lame={"lambda": 0.0, "mu": 1.0}, d=2, grid=dict(n=1024, length=10.0), support_radius=4.0,
    m=2.0, strengths=dict(covariance=[[dict(center=[0.3, -0.2], width=1.0), off],
                                      [off, dict(center=[-0.2, 0.25], width=1.0, amplitude=0.8)]],
                          relation=dict(scale=0.3)),
    band=dict(Q=[128], dk=0.25, shifts=[0.0]), directions=16, nyquist_fraction=0.95,
    seeds=dict(root=1, realizations=1)))
st = er.build_strengths(cfg, cfg.grid)
truth = st.A_c.sum(axis=(0, 1)) * cfg.grid.cell_volume
f = er.sample_realizations(cfg, st, 1)
dirs = er.direction_set(cfg)
est, se = er.compute_estimates(cfg, f, dirs, cfg.shifts)[(0, "covariance", 128.0)]
A = normalize(est, se, cfg.kind, 2, 2.0, "covariance", dirs.vectors, cfg.shifts).values[:, 0].mean(axis=0)
print("elastic, one realization, Q = 128")
print("integral of A_c:\n", truth.real)
print("recovered:\n", A.real)

g3 = Grid(3, 32, 8.0)
bump = g3.evaluate(GaussianBump((0.2, -0.1, 0.05), 0.6, 1.0))
Ac = np.zeros(g3.shape + (3, 3), complex)
for i, amp in enumerate((1.0, 0.7, 0.5)):
    Ac[..., i, i] = amp * bump
Ac[~g3.support_mask(2.6)] = 0
em = WaveKind("electromagnetic")
sphere = DirectionSet.sphere(32)
table = er.tabulate_ensemble(em, MatrixStrengthPair(1.0, Ac, 0.3 * Ac), g3, default_delta(g3), sphere.vectors,
                             np.array([8.0]), 200, 0, nyquist_fraction=0.9)
print("\nMaxwell, 200-member ensemble at kappa = 8")
for target, scale in (("covariance", 1.0), ("relation", 0.3)):
    const = model_constant(em, 3, 1.0, target)
    E = np.mean([ensemble_limit(EstimatorConfig(em, target, 1.0, 3, tuple(x), 0.0, mode="ensemble", M=200,
                                                kappa_eval=8.0), table).estimate / const
                 for x in sphere.vectors], axis=0)
    print(f"{target}: constant x 16 pi^2 = {const.real * 16 * np.pi**2:+.3f}")
    print("  recovered diagonal", np.diag(E).real, " expected", scale * np.diag(Ac.sum(axis=(0, 1, 2))).real
          * g3.cell_volume)
