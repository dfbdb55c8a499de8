"""Reference external predictor: returns every tile unchanged.

    python -m subvolmerge.echo_worker
"""
from .protocol import serve

if __name__ == "__main__":
    serve(lambda tile: tile)
