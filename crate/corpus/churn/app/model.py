RISK_CUTOFFS = [(0.7, "high"), (0.4, "medium")]


def sigmoid(x):
    return 1.0 / (1.0 + 2.718281828459045 ** (-x))


def band_for(score):
    for cutoff, band in RISK_CUTOFFS:
        if score >= cutoff:
            return band
    return "low"


class ChurnModel:
    """Logistic model over a fixed feature set."""

    def __init__(self, weights, bias):
        self.weights = weights
        self.bias = bias

    def linear(self, feats):
        total = self.bias
        for key in sorted(self.weights):
            total = total + self.weights[key] * feats[key]
        return total

    def score(self, feats):
        return sigmoid(self.linear(feats))
