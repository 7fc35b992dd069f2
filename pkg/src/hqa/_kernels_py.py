"""Pure-Python implementations of the hot kernels.

These are the reference versions; ``_kernels.pyx`` must agree with them
bit for bit. See ``hqa.kernels`` for backend selection.
"""

ASKED = 0
PRUNED = 1

# answer code meaning "no answer supplied for this node"
MISSING = -1
# answer code for a label outside the parent's domain (e.g. "none"); passes no gate
NO_MATCH = -2


def levenshtein(a, b):
    """Unit-cost insert/delete/substitute edit distance."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def prune_row(parent, gate_mask, codes, out):
    """Fill ``out`` with ASKED/PRUNED for one frame.

    ``parent[i]`` is the preorder index of node i's parent (-1 for roots) and
    always < i. ``gate_mask[i]`` has bit k set when the parent's k-th label
    opens the edge into i. ``codes[i]`` is node i's answer as a label index,
    MISSING or NO_MATCH.

    Returns the index of the first reachable node with a MISSING answer, or -1.
    """
    first_missing = -1
    for i in range(len(parent)):
        p = parent[i]
        if p < 0 or out[p] == ASKED and codes[p] >= 0 and (gate_mask[i] >> codes[p]) & 1:
            out[i] = ASKED
            if codes[i] == MISSING and first_missing < 0:
                first_missing = i
        else:
            out[i] = PRUNED
    return first_missing


def prune_matrix(parent, gate_mask, codes, out):
    """Row-wise ``prune_row`` over a frames x nodes code matrix.

    Returns a list with the first-missing index per row (-1 when complete).
    """
    return [prune_row(parent, gate_mask, codes[r], out[r]) for r in range(len(codes))]
