"""Independent reference implementations used by the tests.

These are deliberately naive: plain loops, no numpy, no shared code with the
package, so agreement is evidence rather than tautology.
"""

import math

import numpy as np


def reward_oracle(d, action, alpha=1.0, delta=0.0003, psi=0.001, omega=0.001, d_nmac=150.0, d_max=3000.0):
    if d < d_nmac:
        rs = -1.0
    elif d < d_max:
        rs = -alpha + delta * d
    else:
        rs = 0.0
    ra = 0.0 if int(action) == 1 else -psi
    return rs + ra - omega


def brute_force_events(frames, thresholds):
    """frames: list of (t, {id: (x, y, z)}) in time order.

    Returns sorted (kind, a, b, onset, end) tuples. An interval is a maximal run
    of consecutive frames in which both aircraft are present and closer than
    the threshold.
    """
    ids = sorted({aid for _, pos in frames for aid in pos})
    out = []
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            for kind, thr in thresholds.items():
                onset = last = None
                for t, pos in frames:
                    bad = a in pos and b in pos and math.dist(pos[a], pos[b]) < thr
                    if bad:
                        if onset is None:
                            onset = t
                        last = t
                    elif onset is not None:
                        out.append((kind, a, b, onset, last))
                        onset = None
                if onset is not None:
                    out.append((kind, a, b, onset, last))
    return sorted(out)


def random_log(rng, n_aircraft=5, n_steps=500, box=1200.0, p_absent=0.03):
    """Random-walk positions in a small box so threshold crossings are frequent."""
    pos = rng.uniform(0.0, box, size=(n_aircraft, 3))
    pos[:, 2] = rng.uniform(250.0, 350.0, size=n_aircraft)
    vel = rng.normal(0.0, 20.0, size=(n_aircraft, 3))
    vel[:, 2] = 0.0
    frames = []
    for k in range(n_steps):
        vel += rng.normal(0.0, 5.0, size=vel.shape) * [1, 1, 0]
        pos += vel
        for d in range(2):
            hit = (pos[:, d] < 0) | (pos[:, d] > box)
            vel[hit, d] *= -1
            pos[:, d] = np.clip(pos[:, d], 0, box)
        present = rng.random(n_aircraft) >= p_absent
        frames.append((float(k), {f"AC{j}": tuple(map(float, pos[j])) for j in range(n_aircraft) if present[j]}))
    return frames


def frames_to_rows(frames):
    return [{"time_s": t, "ac_id": aid, "x_m": p[0], "y_m": p[1], "z_m": p[2]}
            for t, pos in frames for aid, p in sorted(pos.items())]


def numerical_grad(f, x, h):
    """Central differences of scalar f with respect to every entry of array x (modified in place)."""
    g = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def small_net_and_batch(rng, activation="relu", in_dim=8, hidden=8, batch=16):
    """Random small network plus a TD batch.

    Biases are random rather than zero: with zero biases a whole hidden layer
    can sit exactly on the rectifier kink, where finite differences are not
    a valid derivative estimate.
    """
    from corridor_gym.agents.mlp import MlpNetwork

    sizes = [in_dim] + [hidden] * int(rng.integers(1, 3)) + [3]
    net = MlpNetwork(sizes, activation, rng=rng, dtype=np.float64)
    for p in net.params[1::2]:
        p[...] = rng.normal(0.0, 0.5, size=p.shape)
    obs = rng.normal(size=(batch, in_dim))
    actions = rng.integers(0, 3, size=batch)
    targets = rng.normal(size=batch)
    return net, (obs, actions, targets)


def constant_q_net(q):
    """A one-layer linear net whose output is ``q`` for every input."""
    from corridor_gym.agents.mlp import MlpNetwork

    return MlpNetwork([4, 3], "linear", params=[np.zeros((4, 3)), np.asarray(q, dtype=float)])
