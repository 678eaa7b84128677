import json
import sys

from adapter_common import serve

with open(sys.argv[1]) as fh:
    params = json.load(fh)
weights = params["weights"]
t = params["threshold"]
p = len(weights)


def predict(x):
    total = 0.0
    for i in range(p):
        if abs(x[i]) >= t and abs(x[i + p]) >= t:
            total += weights[i]
    return total


serve("paired-threshold", 2 * p, predict)
