"""Independent dense reference model used as an oracle by several test modules.

It enumerates occupation vectors directly and fills matrix elements from the
textbook formulas, sharing no code with ``fermi_switch.model``.
"""

import itertools
import math

import numpy as np


def occupations(M, n_max):
    out = [n for n in itertools.product(range(n_max + 1), repeat=M) if sum(n) <= n_max]
    return sorted(out, key=lambda n: (sum(n), [-x for x in n]))


def dense_reference(M, n_max, k_max, speed, norm, qubits):
    """H as a dict-indexed dense matrix over (occupation, a, b); a,b in {0:e, 1:g}."""
    dk = 2 * k_max / M
    k = np.array([dk * s for s in list(range(-M // 2, 0)) + list(range(1, M // 2 + 1))])
    w = speed * np.abs(k)
    g = np.sqrt(norm * w * dk)
    occ = occupations(M, n_max)
    labels = [(n, a, b) for n in occ for a in (0, 1) for b in (0, 1)]
    index = {lab: i for i, lab in enumerate(labels)}
    H = np.zeros((len(labels), len(labels)), dtype=complex)
    (wa, da, xa), (wb, db, xb) = qubits
    for (n, a, b), i in index.items():
        H[i, i] = float(np.dot(n, w)) + 0.5 * wa * (1 - 2 * a) + 0.5 * wb * (1 - 2 * b)
        for j in range(M):
            if n[j] == 0:
                continue
            m = list(n)
            m[j] -= 1
            m = tuple(m)
            for atom, d, x in ((0, da, xa), (1, db, xb)):
                aa, bb = (1 - a, b) if atom == 0 else (a, 1 - b)
                amp = d * 1j * g[j] * np.exp(1j * k[j] * x) * math.sqrt(n[j])
                # <m, flipped| d sx a_j |n>
                r = index[(m, aa, bb)]
                H[r, i] += amp
                H[i, r] += np.conj(amp)
    return H, labels
