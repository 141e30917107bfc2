import numpy as np
import pytest

from foloc.grid import GridModel, GridTopology, NodeParams, equilibrate, generate_topology


def make_model(edges, n, alpha=1.0, beta=1.0, power=None):
    topo = GridTopology(n, tuple(edges))
    p = np.zeros(n) if power is None else np.asarray(power, float)
    return equilibrate(GridModel(topo, NodeParams(np.full(n, alpha), np.full(n, beta), p)))


@pytest.fixture(scope="session")
def ring10():
    topo = generate_topology("ring", 10, 10, coupling=15.0)
    p = np.tile([1.0, -1.0], 5) * 0.5
    return equilibrate(GridModel(topo, NodeParams(np.ones(10), np.ones(10), p)))


@pytest.fixture(scope="session")
def four_node():
    edges = [(0, 1, 4.0), (1, 2, 3.0), (2, 3, 5.0), (0, 3, 2.0)]
    return make_model(edges, 4, power=[0.0, 0.0, 0.0, 0.0])


@pytest.fixture(scope="session")
def desk_topology():
    return generate_topology("rewired-lattice", 120, 165, seed=7)


def small_config(tmp_path, **scenario):
    """A 30-node, 10-second setup that runs the whole pipeline in well under a second."""
    scen = {"kind": "single", "scenario_seed": 0, "sigma": 0.05, "duration": 10.0, "dt": 0.01}
    scen.update(scenario)
    return {
        "grid": {
            "generator": {"kind": "rewired-lattice", "n": 30, "edges": 45, "seed": 3},
            "coupling": 15.0,
            "node_params": {"alpha": 1.0, "beta": 80.0, "seed": 3},
        },
        "scenario": scen,
        "mecf": {"d_ceiling": 16},
        "locator": {"iterations": 300},
        "seeds": [0, 1],
        "output_dir": str(tmp_path / "run"),
    }
