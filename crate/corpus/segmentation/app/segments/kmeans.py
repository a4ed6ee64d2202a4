import logging

from .profile import SPEND_SCALE

log = logging.getLogger(__name__)


def distance(a, b):
    total = 0.0
    for x, y in zip(a, b):
        total += (x - y) ** 2
    return total


class KMeans:
    def __init__(self, k, iterations=10):
        self.k = k
        self.iterations = iterations
        self.centers = []

    def assign(self, vector):
        best = 0
        best_d = distance(vector, self.centers[0])
        for i in range(1, self.k):
            d = distance(vector, self.centers[i])
            if d < best_d:
                best, best_d = i, d
        return best

    def fit(self, vectors):
        self.centers = [list(v) for v in vectors[: self.k]]
        for step in range(self.iterations):
            groups = [[] for _ in range(self.k)]
            for v in vectors:
                groups[self.assign(v)].append(v)
            moved = 0.0
            for i, members in enumerate(groups):
                if members:
                    new = [sum(col) / len(members) for col in zip(*members)]
                    moved += distance(new, self.centers[i])
                    self.centers[i] = new
            log.debug("iteration %d moved centers by %.6f (spend units %.1f)", step, moved, moved * SPEND_SCALE)
            if moved < 1e-12:
                break
        return self
