import logging

import numpy as np

from urn.simulator import CHUNK_STEPS
from utils.errors import InvalidInputError

# Third seed word: holding times never share a stream with the jump chain.
HOLDING_STREAM = 1


def holding_times_at(k0, steps, rng):
    """
    Jump instants tau_(n) at the given (sorted) steps.

    Between jumps n and n+1 the process waits an Exp(K_n) time, K_n = k0 + n:
    one unit-rate clock per gap.
    """
    steps = np.asarray(steps, dtype=np.int64)
    taus = np.zeros(steps.shape[0])
    clock = 0.0
    done = 0
    position = 0
    final = int(steps[-1]) if steps.size else 0
    while position < steps.size and steps[position] == 0:
        position += 1

    while done < final:
        size = min(CHUNK_STEPS, final - done)
        waits = rng.standard_exponential(size) / (k0 + done + np.arange(size))
        running = clock + np.cumsum(waits)
        while position < steps.size and steps[position] <= done + size:
            taus[position] = running[steps[position] - done - 1]
            position += 1
        clock = float(running[-1])
        done += size
    return taus


def embed_continuous(trajectory, seed):
    """
    Attach continuous-time jump instants to a discrete trajectory.

    The jump chain is the trajectory itself; only holding times are drawn,
    from stream (seed, index, 1).
    """
    rng = np.random.default_rng([int(seed), int(trajectory.index), HOLDING_STREAM])
    taus = holding_times_at(trajectory.k0, trajectory.steps, rng)
    logging.debug(f"Embedded trajectory {trajectory.index}: tau_({trajectory.final_step}) = {taus[-1]:.4f}")
    return trajectory.with_jump_times(taus)


def embed_batch(trajectories, seed):
    return [embed_continuous(trajectory, seed) for trajectory in trajectories]


def estimate_xi(trajectory):
    """
    n * exp(-tau_(n)) at the final step; tends to a Gamma(K_0) variable.

    Raises:
        InvalidInputError: if the trajectory was never embedded
    """
    if trajectory.jump_times is None:
        raise InvalidInputError("Trajectory has no jump times; run embed_continuous first")
    n = trajectory.final_step
    if n < 1000:
        logging.warning(f"Estimating xi at n={n}; the estimate is only asymptotic")
    return float(n * np.exp(-trajectory.jump_times[-1]))


def sample_xi(k0, n_steps, seed, count):
    """
    ``count`` draws of the xi estimator at step ``n_steps``.

    Holding times depend on the chain only through K_n = k0 + n, so no
    composition needs to be simulated.
    """
    steps = np.array([0, n_steps], dtype=np.int64)
    samples = np.empty(count)
    for i in range(count):
        rng = np.random.default_rng([int(seed), i, HOLDING_STREAM])
        samples[i] = n_steps * np.exp(-holding_times_at(k0, steps, rng)[-1])
    return samples
