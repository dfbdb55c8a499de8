"""Per-tile predictors: built-in synthetic ones and an external process bridge."""
from __future__ import annotations

import functools
import shlex
import subprocess
import tempfile
import threading
from dataclasses import dataclass

import numpy as np

from .grid import GridError, VoxelGrid
from .protocol import ProtocolError, encode_request, read_response

KINDS = ("identity", "constant", "affine", "edge-bias", "external")


@dataclass(frozen=True)
class PredictorSpec:
    """What to run on each tile.

    ``params`` holds ``(c,)`` for constant, ``(a, b, c, d)`` for the affine
    field ``a*x + b*y + c*z + d`` (global voxel coordinates, normalized
    units) and ``(beta, q)`` for edge-bias, which wraps ``inner``.
    """

    kind: str
    params: tuple = ()
    inner: "PredictorSpec | None" = None
    command: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown predictor kind {self.kind!r}")
        if self.kind == "edge-bias":
            beta, q = self.params
            if beta < 0 or q < 1:
                raise ValueError(f"edge-bias needs beta >= 0 and q >= 1, got {beta}, {q}")
            if self.inner is None:
                object.__setattr__(self, "inner", PredictorSpec("identity"))
        if self.kind == "external" and not self.command:
            raise ValueError("external predictor needs a command")

    @property
    def is_external(self) -> bool:
        return self.kind == "external"


def parse_predictor(text: str) -> PredictorSpec:
    """Parse CLI predictor strings.

    ``identity``, ``constant:C``, ``affine:A,B,C,D``, ``edge-bias:BETA,Q``
    (optionally ``edge-bias:BETA,Q@INNER``), ``external:COMMAND``.
    """
    kind, _, rest = text.partition(":")
    kind = kind.strip()
    if kind == "external":
        return PredictorSpec("external", command=rest.strip())
    if kind == "edge-bias":
        args, _, inner = rest.partition("@")
        beta, q = (float(v) for v in args.split(","))
        return PredictorSpec("edge-bias", (beta, q), parse_predictor(inner) if inner else None)
    nums = tuple(float(v) for v in rest.split(",")) if rest else ()
    expected = {"identity": 0, "constant": 1, "affine": 4}
    if kind not in expected:
        raise ValueError(f"unknown predictor {text!r}")
    if len(nums) != expected[kind]:
        raise ValueError(f"predictor {kind} takes {expected[kind]} parameters, got {len(nums)}")
    return PredictorSpec(kind, nums)


@functools.lru_cache(maxsize=8)
def edge_profile(shape) -> np.ndarray:
    """max over axes of ``2*|u - 0.5|`` with ``u = i / L``.

    0 at voxel ``L // 2`` on every axis (the exact center for even sizes),
    1 on the ``i = 0`` faces, ``1 - 2/L`` on the far faces.
    """
    prof = np.zeros(shape, dtype=np.float64)
    for ax, L in enumerate(shape):
        u = np.arange(L) / L
        d = np.abs(2.0 * (u - 0.5))
        s = [1, 1, 1]
        s[ax] = L
        prof = np.maximum(prof, d.reshape(s))
    prof.setflags(write=False)
    return prof


def predict_tile(spec: PredictorSpec, tile, origin=(0, 0, 0), tile_size=None) -> np.ndarray:
    """Run a built-in predictor on one tile; returns a float32 array of the same shape."""
    values = tile.values if isinstance(tile, VoxelGrid) else np.asarray(tile, dtype=np.float32)
    if tile_size is not None and tuple(values.shape) != tuple(tile_size):
        raise GridError(f"tile dims {tuple(values.shape)} differ from configured tile size {tuple(tile_size)}")
    kind = spec.kind
    if kind == "identity":
        return np.array(values, dtype=np.float32)
    if kind == "constant":
        return np.full(values.shape, spec.params[0], dtype=np.float32)
    if kind == "affine":
        a, b, c, d = spec.params
        x, y, z = (np.arange(n) + o for n, o in zip(values.shape, origin))
        field = a * x[:, None, None] + b * y[None, :, None] + c * z[None, None, :] + d
        return field.astype(np.float32)
    if kind == "edge-bias":
        beta, q = spec.params
        base = predict_tile(spec.inner, values, origin)
        return (base + beta * edge_profile(tuple(values.shape)) ** q).astype(np.float32)
    raise ValueError("external predictors run through run_external")


def _drive(command, items, results, errors):
    """Feed ``(global_index, tile)`` pairs to one child process, in order."""
    with tempfile.TemporaryFile() as err:
        try:
            proc = subprocess.Popen(shlex.split(command), stdin=subprocess.PIPE,
                                    stdout=subprocess.PIPE, stderr=err)
        except OSError as exc:
            errors.append(ProtocolError(f"cannot start predictor {command!r}: {exc}"))
            return
        current = None
        try:
            for index, tile in items:
                current = index
                proc.stdin.write(encode_request(index, tile))
                proc.stdin.flush()
                results[index] = read_response(proc.stdout, index, tile.shape)
            proc.stdin.close()
            current = None
            code = proc.wait()
            if code != 0:
                raise ProtocolError(f"predictor exited with status {code}")
        except (OSError, ProtocolError) as exc:
            proc.kill()
            proc.wait()
            err.seek(0)
            tail = err.read()[-500:].decode(errors="replace").strip()
            where = f"tile {current}: " if current is not None else ""
            msg = f"{where}{exc}"
            if isinstance(exc, BrokenPipeError):
                msg = f"{where}broken pipe (predictor exited with status {proc.returncode})"
            if tail:
                msg += f"; stderr: {tail}"
            errors.append(ProtocolError(msg))
        finally:
            for f in (proc.stdin, proc.stdout):
                if f and not f.closed:
                    f.close()


def run_external(command: str, tiles, workers: int = 1, indices=None) -> list:
    """Predict ``tiles`` (arrays in plan order) with an external process.

    With ``workers > 1`` the list is split into contiguous chunks, one child
    process each. Frame ``tile_index`` is ``indices[k]`` (default: ``k``).
    """
    tiles = [np.asarray(t, dtype=np.float32) for t in tiles]
    indices = list(range(len(tiles))) if indices is None else list(indices)
    results = {}
    if not tiles:
        return []
    workers = max(1, min(workers, len(tiles)))
    bounds = np.linspace(0, len(tiles), workers + 1).astype(int)
    items = list(zip(indices, tiles))
    chunks = [items[lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:])]
    errors = []
    threads = [threading.Thread(target=_drive, args=(command, c, results, errors)) for c in chunks]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]
    return [results[i] for i in indices]
