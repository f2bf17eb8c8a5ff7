import numpy as np


class SampleStreams:
    """
    Per-agent random streams for one run.

    Each agent owns a counter-based Philox generator keyed on (seed, repetition, agent), so
    every variant run with the same seed and repetition sees the same samples at the same
    iteration, and repetitions stay independent.
    """

    def __init__(self, seed: int, repetition: int, n_agents: int):
        self._generators = [
            np.random.Generator(
                np.random.Philox(np.random.SeedSequence(seed, spawn_key=(repetition, agent)))
            )
            for agent in range(n_agents)
        ]

    def __getitem__(self, agent: int) -> np.random.Generator:
        return self._generators[agent]

    def __len__(self) -> int:
        return len(self._generators)
