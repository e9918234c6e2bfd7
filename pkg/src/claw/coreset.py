import numpy as np

from .errors import ContractError


def kcenter_coreset(X: np.ndarray, k: int) -> list[int]:
    """Greedy K-center selection under the Euclidean metric.

    Starts from the point farthest from the data mean, then repeatedly adds
    the point farthest from its nearest chosen center. Ties go to the lowest
    index.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if k > n:
        raise ContractError(f"cannot pick {k} centers from {n} points")
    if k <= 0:
        return []
    first = int(np.argmax(np.linalg.norm(X - X.mean(axis=0), axis=1)))
    chosen = [first]
    nearest = np.linalg.norm(X - X[first], axis=1)
    nearest[first] = -1.0
    for _ in range(k - 1):
        nxt = int(np.argmax(nearest))
        chosen.append(nxt)
        nearest = np.minimum(nearest, np.linalg.norm(X - X[nxt], axis=1))
        nearest[chosen] = -1.0
    return chosen


def coverage_radius(X: np.ndarray, centers) -> float:
    """Largest distance from any point to its nearest center."""
    X = np.asarray(X, dtype=np.float64)
    d = np.linalg.norm(X[:, None, :] - X[list(centers)][None, :, :], axis=2)
    return float(d.min(axis=1).max())
