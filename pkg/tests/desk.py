"""Small randomized Z-basis runs shared by the sifting tests."""

import numpy as np

from combqkd.detect import DetectorSpec, detect
from combqkd.optics import beamsplit, delay
from combqkd.source import CombMode, CombSource, ModePair, emit_photons
from combqkd.sift import alice_channels, bob_z_measure

TAU = 2000


def desk_run(seed: int, max_pairs: int = 10_000):
    """Alice dual channels and Bob records from a lossy, noisy toy link."""
    rng = np.random.default_rng(seed)
    n_pairs = int(rng.integers(100, max_pairs))
    duration = float(rng.choice([5e-5, 2e-4, 1e-3]))
    pair = ModePair(CombMode(2, 1541.0, 1.0), CombMode(-2, 1573.0, 1.0), n_pairs / duration)
    src = CombSource(1557.0, 1.0, [pair], seed)
    eta = float(rng.uniform(0.1, 0.6))
    sig, idl = emit_photons(src, duration, 2, eta, eta, rng)
    spec = DetectorSpec(float(rng.uniform(0.5, 1.0)), float(rng.uniform(0, 60)),
                        float(rng.choice([0.0, 1e5, 1e6])), int(rng.choice([0, 20_000])))
    short, long_ = beamsplit(sig, 0.5, rng)
    bob0 = detect(short, spec, duration, rng)
    bob1 = detect(delay(long_, TAU), spec, duration, rng)
    alice = detect(idl, spec, duration, rng)
    return alice_channels(alice, TAU), bob_z_measure(bob0, bob1)
