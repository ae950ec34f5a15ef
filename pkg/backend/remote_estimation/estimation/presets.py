"""Bundled run configurations for the battery-powered sensor and the human-operator channel."""

ENERGY_HARVESTING = {
    'plant': {'a': 1.1, 'sigma2': 1.0, 'x0': 0.0, 'horizon': 20},
    'channel': {'builder': 'energy_harvesting', 'params': {'capacity': 4, 'tx_cost': 2, 'p_tx': 0.3}},
    'solver': {'grid': {'half_width': 'auto', 'num_points': 2001}, 'value_cap': 1e12},
    'sim': {'trials': 100000, 'seed': 0},
}

WORKLOAD_CHAIN = {
    'plant': {'a': 1.1, 'sigma2': 1.0, 'x0': 0.0, 'horizon': 20},
    'channel': {'builder': 'workload_chain', 'params': {'window': 4, 'drop_probs': [0.1, 0.3, 0.5, 0.7, 0.9]}},
    'solver': {'grid': {'half_width': 'auto', 'num_points': 2001}, 'value_cap': 1e12},
    'sim': {'trials': 100000, 'seed': 0},
}

WHITE_SOURCE_ENERGY = {
    'plant': {'a': 0.0, 'sigma2': 1.0, 'x0': 0.0, 'horizon': 5},
    'channel': {'builder': 'energy_harvesting', 'params': {'capacity': 4, 'tx_cost': 2, 'p_tx': 0.3}},
    'solver': {'search_points': 121},
    'sim': {'trials': 100000, 'seed': 0},
}

EXAMPLE_CONFIGS = {
    'energy_harvesting': ENERGY_HARVESTING,
    'workload_chain': WORKLOAD_CHAIN,
    'white_source_energy': WHITE_SOURCE_ENERGY,
}
