"""Times a sleep proportional to the decoder parameter count."""
import json
import sys
import time

cfg = json.loads(sys.stdin.readline())
d = cfg["d_model"]
params = sum(4 * d * d + 2 * d * di + di + 9 * d for di in cfg["d_inner"]) + 2 * d
start = time.perf_counter()
time.sleep(params / 2e9)
elapsed = (time.perf_counter() - start) * 1000
print(json.dumps({"latency_ms": elapsed, "peak_memory_bytes": 4 * params}))
