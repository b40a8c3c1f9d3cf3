"""Vectorised numpy implementation of the pulse kernel.

Used when the compiled extension is unavailable. Output is bit-identical to
``_kernel.pyx`` because both consume the same pre-drawn uniforms and make
the same floating-point comparisons.
"""

import numpy as np

TAG_SIGNAL = 1
TAG_SIGNAL_FLIPPED = 2
TAG_CROSSTALK = 3
TAG_DARK = 4


def process_block(rbits, u_click, u_flip, thresholds, excess):
    """Classify a block of pulses and return the clicked ones.

    Args:
        rbits: uint8 per pulse; bit 0 sender bit, bit 1 sender basis,
            bit 2 receiver basis, bit 3 receiver bit.
        u_click: uniform [0, 1) deciding whether and why the detector fires.
        u_flip: uniform [0, 1) deciding excess-error flips of signal clicks.
        thresholds: (4, 3) float64. Row k is the phase difference k * pi/2;
            columns are the cumulative probabilities of a signal click, a
            signal-or-crosstalk click, and any click.
        excess: flip probability applied to signal clicks.

    Returns:
        (positions, sender_phase, receiver_phase, tag) for clicked pulses,
        phases in quarter turns.
    """
    rbits = np.asarray(rbits, dtype=np.uint8)
    sp = ((rbits & 1) << 1) | ((rbits >> 1) & 1)
    rp = (((rbits >> 3) & 1) << 1) | ((rbits >> 2) & 1)
    d = (sp - rp) & 3

    pos = np.flatnonzero(u_click < thresholds[:, 2][d])
    dk = d[pos]
    u = u_click[pos]
    tag = np.full(pos.size, TAG_DARK, dtype=np.uint8)
    tag[u < thresholds[dk, 1]] = TAG_CROSSTALK
    sig = u < thresholds[dk, 0]
    tag[sig] = TAG_SIGNAL
    tag[sig & (u_flip[pos] < excess)] = TAG_SIGNAL_FLIPPED
    return pos.astype(np.int64), sp[pos], rp[pos], tag
