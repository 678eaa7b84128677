import json
import sys
import time

mode = sys.argv[1]
for line in sys.stdin:
    frame = json.loads(line)
    fid = frame["id"]
    if frame["op"] == "hello":
        if mode == "bad-hello":
            print(json.dumps({"id": fid, "name": "broken"}), flush=True)
        else:
            print(json.dumps({"id": fid, "name": "broken", "d": 2}), flush=True)
        continue
    if mode == "garbage":
        print("this is not json", flush=True)
    elif mode == "wrong-id":
        print(json.dumps({"id": fid + 5, "y": [0.0]}), flush=True)
    elif mode == "error":
        print(json.dumps({"id": fid, "error": "model exploded"}), flush=True)
    elif mode == "short":
        print(json.dumps({"id": fid, "y": []}), flush=True)
    elif mode == "exit":
        sys.stderr.write("fatal: out of memory\n")
        sys.stderr.flush()
        sys.exit(3)
    elif mode == "hang":
        time.sleep(30)
