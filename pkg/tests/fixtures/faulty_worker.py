"""Misbehaving predictor; the mode is the first argument."""
import sys

from subvolmerge.protocol import encode_response, read_request

mode = sys.argv[1]
if mode == "exit-now":
    sys.stderr.write("model failed to load\n")
    sys.exit(5)
out = sys.stdout.buffer
req = read_request(sys.stdin.buffer)
index, values = req
if mode == "bad-magic":
    out.write(b"NOPE" + encode_response(index, values)[4:])
elif mode == "bad-dims":
    out.write(encode_response(index, values[:-1]))
elif mode == "truncated":
    out.write(encode_response(index, values)[:-7])
elif mode == "exit-after":
    # answers every tile correctly, then fails on shutdown
    while req is not None:
        out.write(encode_response(*req))
        out.flush()
        req = read_request(sys.stdin.buffer)
    sys.exit(4)
out.flush()
