"""Pure numpy Monte Carlo kernel (fallback for ``_mckernel``)."""

import numpy as np

CHOICE, PICK, LEAF, AND = 0, 1, 2, 3


def count_successes(program, u: np.ndarray) -> int:
    """Evaluate every node for every row bottom-up and count root successes."""
    rows = u.shape[0]
    out: list = [None] * len(program.kind)
    for i in range(len(program.kind) - 1, -1, -1):
        k = program.kind[i]
        start = program.first[i]
        kids = program.children[start:start + program.count[i]]
        if k == LEAF:
            out[i] = u[:, program.slot[i]] < program.prob[i]
        elif k == PICK:
            b = program.best[i]
            out[i] = out[b] if b >= 0 else np.zeros(rows, dtype=bool)
        elif k == AND:
            acc = np.ones(rows, dtype=bool)
            for c in kids:
                acc &= out[c]
            out[i] = acc
        else:
            cumw = program.cumw[start:start + len(kids)]
            pick = (u[:, program.slot[i], None] >= cumw[None, :]).sum(axis=1)
            np.minimum(pick, len(kids) - 1, out=pick)
            out[i] = np.stack([out[c] for c in kids])[pick, np.arange(rows)]
        # children are no longer needed once their parent is evaluated
        for c in kids:
            out[c] = None
    return int(np.count_nonzero(out[0]))
