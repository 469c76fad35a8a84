import numpy as np
import pytest

from grainflow.lattice import McConfig, run_trajectory
from grainflow.coarsen import CoarsenConfig, postprocess


@pytest.fixture(scope="session")
def desk_dataset():
    """12 coarsened 64^2 trajectories of 25 frames on a 16^2 grid."""
    trajs = []
    for i in range(12):
        mc = McConfig((64, 64), 64 * 64, kT=0.5, sweeps_per_frame=20,
                      num_frames=25, seed=100 + i)
        lats = run_trajectory(mc)
        trajs.append(postprocess(lats, CoarsenConfig(4, 1.0, 3)))
    return np.stack(trajs)


@pytest.fixture(scope="session")
def desk_mc_run():
    """One 128^2 trajectory, 500 sweeps in 26 frames, for physics checks."""
    mc = McConfig((128, 128), 128 * 128, kT=0.5, sweeps_per_frame=20,
                  num_frames=26, seed=3)
    return mc, run_trajectory(mc)
