"""Remote annealer-service client and a local stub implementation.

Wire protocol: POST <endpoint>/sample with a JSON body
{"linear": [...], "quadratic": [[i, j, coeff], ...], "offset": f,
 "num_reads": n}; the service answers {"assignments": [[bit, ...], ...],
"energies": [...], "occurrences": [...], "sampler_info": "..."}.
Malformed problems get HTTP 400, overload gets 503.

The client never trusts the service: energies are recomputed locally and
must agree within 1e-6, and occurrence totals must cover the requested
reads. The stub serves the same protocol on localhost, backed by the local
simulated-annealing sampler, with the RNG seed taken from a ?seed= query
parameter so runs are reproducible.
"""

from __future__ import annotations

import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional
from urllib.parse import parse_qs, urlsplit

import numpy as np
import requests

from .samplers import AnnealSchedule, QuboProblem, SampleSet, qubo_energy, sa_sample

__all__ = [
    "RemoteSamplerError",
    "remote_sample",
    "RemoteSampler",
    "StubAnnealServer",
]

ENERGY_TOLERANCE = 1e-6


class RemoteSamplerError(RuntimeError):
    """Transport failure, malformed response, or untrusted energies."""


def _problem_payload(problem: QuboProblem, num_reads: int) -> dict:
    return {
        "linear": [float(v) for v in problem.linear],
        "quadratic": [
            [int(i), int(j), float(c)] for (i, j), c in problem.quadratic.items()
        ],
        "offset": float(problem.offset),
        "num_reads": int(num_reads),
    }


def _problem_id(payload: dict) -> str:
    digest = hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode("utf-8")
    ).hexdigest()
    return digest[:12]


def _sample_url(endpoint: str, seed: Optional[int]) -> str:
    url = endpoint.rstrip("/")
    if not url.endswith("/sample"):
        url += "/sample"
    if seed is not None:
        url += f"?seed={int(seed)}"
    return url


def remote_sample(
    endpoint: str,
    problem: QuboProblem,
    num_reads: int,
    timeout: float = 30.0,
    seed: Optional[int] = None,
) -> SampleSet:
    """POST the problem to the service and validate everything it returns."""
    if num_reads < 0:
        raise ValueError("num_reads must be non-negative")
    payload = _problem_payload(problem, num_reads)
    pid = _problem_id(payload)
    url = _sample_url(endpoint, seed)
    try:
        response = requests.post(url, json=payload, timeout=timeout)
    except requests.Timeout as exc:
        raise RemoteSamplerError(
            f"sampling problem {pid} timed out after {timeout}s at {endpoint}"
        ) from exc
    except requests.RequestException as exc:
        raise RemoteSamplerError(
            f"transport failure for problem {pid} at {endpoint}: {exc}"
        ) from exc
    if response.status_code != 200:
        raise RemoteSamplerError(
            f"service returned HTTP {response.status_code} for problem {pid}: "
            f"{response.text[:200]}"
        )
    try:
        body = response.json()
    except ValueError as exc:
        raise RemoteSamplerError(
            f"non-JSON response for problem {pid}"
        ) from exc
    for key in ("assignments", "energies", "occurrences"):
        if key not in body:
            raise RemoteSamplerError(
                f"response for problem {pid} is missing {key!r}"
            )
    assignments = np.asarray(body["assignments"], dtype=np.float64)
    if assignments.size == 0:
        assignments = assignments.reshape(0, problem.n_vars)
    if (
        assignments.ndim != 2
        or assignments.shape[1] != problem.n_vars
        or not np.isin(assignments, (0.0, 1.0)).all()
    ):
        raise RemoteSamplerError(
            f"response for problem {pid} holds malformed assignments"
        )
    assignments = assignments.astype(np.uint8)
    energies = np.asarray(body["energies"], dtype=np.float64)
    occurrences = np.asarray(body["occurrences"], dtype=np.float64)
    if energies.shape != (assignments.shape[0],) or occurrences.shape != (
        assignments.shape[0],
    ):
        raise RemoteSamplerError(
            f"response for problem {pid} has misaligned energies/occurrences"
        )
    for row, reported in zip(assignments, energies):
        local = qubo_energy(problem, row)
        if abs(local - float(reported)) > ENERGY_TOLERANCE:
            raise RemoteSamplerError(
                f"service energy {reported} deviates from local {local} "
                f"for problem {pid}; refusing untrusted samples"
            )
    total = float(occurrences.sum())
    if total != float(num_reads):
        raise RemoteSamplerError(
            f"service returned {total} occurrences for {num_reads} requested "
            f"reads (problem {pid})"
        )
    return SampleSet(
        assignments=assignments,
        energies=energies,
        occurrences=occurrences,
        num_reads=float(num_reads),
        sampler_info=str(body.get("sampler_info", "remote")),
    )


class RemoteSampler:
    """Negative-phase sampler backed by an annealer service."""

    name = "remote"

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint
        self.timeout = float(timeout)

    def sample(self, problem: QuboProblem, num_reads: int, seed: int) -> SampleSet:
        return remote_sample(
            self.endpoint, problem, num_reads, timeout=self.timeout, seed=seed
        )


def _parse_problem(body: dict) -> QuboProblem:
    linear = body["linear"]
    if not isinstance(linear, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in linear
    ):
        raise ValueError("linear must be a list of numbers")
    quadratic = {}
    for term in body.get("quadratic", []):
        if not (isinstance(term, list) and len(term) == 3):
            raise ValueError("quadratic terms must be [i, j, coeff] triples")
        i, j, coeff = term
        if not (isinstance(i, int) and isinstance(j, int)):
            raise ValueError("quadratic indices must be integers")
        if not isinstance(coeff, (int, float)) or isinstance(coeff, bool):
            raise ValueError("quadratic coefficients must be numbers")
        quadratic[(i, j)] = float(coeff)
    offset = body.get("offset", 0.0)
    if not isinstance(offset, (int, float)) or isinstance(offset, bool):
        raise ValueError("offset must be a number")
    return QuboProblem(
        linear=np.array(linear, dtype=np.float64),
        quadratic=quadratic,
        offset=float(offset),
    )


class _StubHandler(BaseHTTPRequestHandler):
    server_version = "AnnealStub/1"

    def log_message(self, fmt, *args):  # silence request logging in tests
        if self.server.verbose:
            super().log_message(fmt, *args)

    def _reply(self, status: int, payload: dict) -> None:
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_POST(self):
        parts = urlsplit(self.path)
        if parts.path != "/sample":
            self._reply(404, {"error": f"unknown path {parts.path}"})
            return
        query = parse_qs(parts.query)
        try:
            seed = int(query.get("seed", ["0"])[0])
        except ValueError:
            self._reply(400, {"error": "seed must be an integer"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            body = json.loads(self.rfile.read(length).decode("utf-8"))
            if not isinstance(body, dict):
                raise ValueError("request body must be a JSON object")
            if "linear" not in body or "num_reads" not in body:
                raise ValueError("request needs linear and num_reads")
            num_reads = body["num_reads"]
            if not isinstance(num_reads, int) or num_reads < 0:
                raise ValueError("num_reads must be a non-negative integer")
            problem = _parse_problem(body)
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            self._reply(400, {"error": str(exc)})
            return
        if num_reads > self.server.max_reads:
            self._reply(
                503,
                {"error": f"overloaded: num_reads capped at {self.server.max_reads}"},
            )
            return
        samples = sa_sample(
            problem, num_reads, seed, schedule=self.server.schedule
        )
        self._reply(
            200,
            {
                "assignments": samples.assignments.astype(int).tolist(),
                "energies": [float(e) for e in samples.energies],
                "occurrences": [int(round(o)) for o in samples.occurrences],
                "sampler_info": f"stub:{samples.sampler_info}",
            },
        )


class StubAnnealServer:
    """Local annealer service for tests and offline runs.

    Usage: with StubAnnealServer() as server: remote_sample(server.url, ...).
    """

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        schedule: Optional[AnnealSchedule] = None,
        max_reads: int = 100_000,
        verbose: bool = False,
    ):
        self._httpd = ThreadingHTTPServer((host, port), _StubHandler)
        self._httpd.schedule = schedule or AnnealSchedule()
        self._httpd.max_reads = int(max_reads)
        self._httpd.verbose = bool(verbose)
        self._thread: Optional[threading.Thread] = None

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "StubAnnealServer":
        self._thread = threading.Thread(
            target=self._httpd.serve_forever, name="anneal-stub", daemon=True
        )
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None

    def __enter__(self) -> "StubAnnealServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()


def main(argv: Optional[list] = None) -> int:
    """Run the stub service in the foreground."""
    import argparse

    parser = argparse.ArgumentParser(
        description="Serve the annealer wire protocol locally, backed by "
        "simulated annealing."
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8143)
    parser.add_argument("--max-reads", type=int, default=100_000)
    args = parser.parse_args(argv)
    server = StubAnnealServer(
        host=args.host, port=args.port, max_reads=args.max_reads, verbose=True
    )
    print(f"stub annealer listening on {server.url}/sample")
    try:
        server._httpd.serve_forever()
    except KeyboardInterrupt:
        server.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
