import json
import random
import sys


def serve(name, d, predict, sample=None):
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            frame = json.loads(line)
        except ValueError as exc:
            reply = {"id": None, "error": "malformed frame: %s" % exc}
        else:
            reply = handle(frame, name, d, predict, sample)
        sys.stdout.write(json.dumps(reply) + "\n")
        sys.stdout.flush()


def handle(frame, name, d, predict, sample):
    fid = frame.get("id") if isinstance(frame, dict) else None
    try:
        op = frame["op"]
        if op == "hello":
            return {"id": fid, "name": name, "d": d}
        if op == "predict":
            return {"id": fid, "y": [float(predict(x)) for x in frame["x"]]}
        if op == "sample_conditional" and sample is not None:
            return {"id": fid, "samples": sample(frame["x"], frame["subset"], frame["n"])}
        return {"id": fid, "error": "unsupported op %r" % op}
    except Exception as exc:
        return {"id": fid, "error": repr(exc)}


def gaussian_sampler(x, subset, n):
    rng = random.Random(json.dumps([x, subset, n]))
    return [[rng.gauss(0.0, 1.0) for _ in subset] for _ in range(n)]
