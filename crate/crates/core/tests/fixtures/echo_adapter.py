import sys

from adapter_common import gaussian_sampler, serve

d = int(sys.argv[1]) if len(sys.argv) > 1 else 3
serve("echo", d, lambda x: x[0], gaussian_sampler)
