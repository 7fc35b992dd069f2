"""Answer backends.

Every answerer exposes ``answer(frame_ref, question_text, question_id, domain)``
and returns ``(label, elapsed_ms)``. Answerers never return "none"; only the
traversal assigns it, to questions it prunes.

Randomness in the simulated backends is drawn from a stream keyed by
(seed, frame, question, purpose), so answers do not depend on the order in
which questions are asked or on how frames are spread across workers.
"""

from __future__ import annotations

import json
import logging
import random
import threading
import time
from dataclasses import dataclass, field

import requests

from .labels import NONE, normalize_label

log = logging.getLogger(__name__)


class AnswererError(RuntimeError):
    """Base class for backend failures."""


class UnknownFrame(AnswererError, KeyError):
    pass


class UnknownQuestion(AnswererError, KeyError):
    pass


class UnscriptedQuestion(AnswererError, KeyError):
    def __init__(self, frame_ref, question_id):
        self.frame_ref = frame_ref
        self.question_id = question_id
        super().__init__(f"unscripted question {question_id} for frame {frame_ref}")

    def __str__(self):
        return self.args[0]


def _stream(seed, *key) -> random.Random:
    return random.Random(":".join(str(k) for k in (seed, *key)))


# ----------------------------------------------------------- latency model


@dataclass(frozen=True)
class LatencyModel:
    """Per-question cost in milliseconds.

    ``constant`` uses ``value``; ``gaussian`` draws N(mean, std) clipped at 0;
    ``empirical`` resamples uniformly from ``samples``.
    """

    kind: str = "constant"
    value: float = 0.0
    mean: float = 0.0
    std: float = 0.0
    samples: tuple = ()

    def __post_init__(self):
        if self.kind not in ("constant", "gaussian", "empirical"):
            raise ValueError(f"unknown latency model {self.kind!r}")
        if self.kind == "constant" and self.value < 0:
            raise ValueError("constant latency must be >= 0")
        if self.kind == "gaussian" and (self.std < 0 or self.mean < 0):
            raise ValueError("gaussian latency needs mean >= 0 and std >= 0")
        if self.kind == "empirical" and (not self.samples or min(self.samples) < 0):
            raise ValueError("empirical latency needs non-empty, non-negative samples")

    @classmethod
    def constant(cls, ms):
        return cls("constant", value=float(ms))

    @classmethod
    def gaussian(cls, mean, std):
        return cls("gaussian", mean=float(mean), std=float(std))

    @classmethod
    def empirical(cls, samples):
        return cls("empirical", samples=tuple(float(s) for s in samples))

    @classmethod
    def parse(cls, spec: str):
        """Parse ``constant:MS``, ``gaussian:MEAN,STD`` or ``empirical:MS,MS,...``.

        Numbers may be written as a fraction, e.g. ``constant:1573/41``.
        """
        kind, _, rest = spec.partition(":")
        nums = [_num(x) for x in rest.split(",") if x.strip()]
        kind = kind.strip()
        if kind == "constant" and len(nums) == 1:
            return cls.constant(nums[0])
        if kind == "gaussian" and len(nums) == 2:
            return cls.gaussian(*nums)
        if kind == "empirical" and nums:
            return cls.empirical(nums)
        raise ValueError(f"bad cost model {spec!r}")

    def spec(self) -> str:
        if self.kind == "constant":
            return f"constant:{self.value!r}"
        if self.kind == "gaussian":
            return f"gaussian:{self.mean!r},{self.std!r}"
        return "empirical:" + ",".join(repr(s) for s in self.samples)

    def sample(self, rng: random.Random) -> float:
        if self.kind == "constant":
            return self.value
        if self.kind == "gaussian":
            return max(0.0, rng.gauss(self.mean, self.std))
        return rng.choice(self.samples)


def _num(text):
    text = text.strip()
    if "/" in text:
        a, b = text.split("/", 1)
        return float(a) / float(b)
    return float(text)


# ---------------------------------------------------------------- oracle


@dataclass(frozen=True)
class AnswerEvent:
    frame_ref: str
    question_id: str
    reason: str


class OracleAnswerer:
    """Answers from ground-truth annotations, optionally with label noise.

    With probability ``noise_rate`` the answer is replaced by a uniformly drawn
    different label from the domain. A question whose ground truth is "none"
    gets the domain's default label ("no", or the first categorical label);
    such calls are logged in ``events``.
    """

    def __init__(self, annotations, noise_rate=0.0, latency=None, seed=0):
        if not 0.0 <= noise_rate <= 1.0:
            raise ValueError("noise_rate must be in [0, 1]")
        if isinstance(annotations, dict):
            self.truth = annotations
        else:
            self.truth = {a.frame_id: a.answers for a in annotations}
        self.noise_rate = noise_rate
        self.latency = latency or LatencyModel.constant(0.0)
        self.seed = seed
        self.events = []
        self._lock = threading.Lock()

    def answer(self, frame_ref, question_text, question_id, domain):
        try:
            frame = self.truth[frame_ref]
        except KeyError:
            raise UnknownFrame(f"unknown frame {frame_ref!r}") from None
        try:
            gt = frame[question_id]
        except KeyError:
            raise UnknownQuestion(f"unknown question {question_id!r} for frame {frame_ref!r}") from None

        if gt == NONE:
            gt = domain.default_label
            with self._lock:
                self.events.append(AnswerEvent(frame_ref, question_id, "none-ground-truth"))

        label = gt
        rng = _stream(self.seed, frame_ref, question_id, "noise")
        if self.noise_rate > 0 and rng.random() < self.noise_rate:
            others = [lab for lab in domain.labels if lab != gt]
            if others:
                label = rng.choice(others)
        elapsed = self.latency.sample(_stream(self.seed, frame_ref, question_id, "latency"))
        return label, elapsed


def oracle_answerer(dataset, noise_rate=0.0, latency=None, seed=0) -> OracleAnswerer:
    return OracleAnswerer(dataset, noise_rate, latency, seed)


# -------------------------------------------------------------- scripted


class ScriptedAnswerer:
    """Replays a fixed (frame_ref, question_id) -> label script."""

    def __init__(self, script, latency=None, seed=0):
        self.script = {(str(f), str(q)): lab for (f, q), lab in script.items()}
        self.latency = latency or LatencyModel.constant(0.0)
        self.seed = seed

    def answer(self, frame_ref, question_text, question_id, domain):
        try:
            label = self.script[(str(frame_ref), question_id)]
        except KeyError:
            raise UnscriptedQuestion(frame_ref, question_id) from None
        return label, self.latency.sample(_stream(self.seed, frame_ref, question_id, "latency"))


def scripted_answerer(script, latency=None, seed=0) -> ScriptedAnswerer:
    return ScriptedAnswerer(script, latency, seed)


def load_script(path):
    """Read a script file: JSON object {frame_ref: {question_id: label}}."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return {(f, q): lab for f, answers in data.items() for q, lab in answers.items()}


# ---------------------------------------------------------------- remote


class RemoteError(AnswererError):
    def __init__(self, message, question_id=None):
        self.question_id = question_id
        super().__init__(f"{message} (question {question_id})" if question_id else message)


class RemoteTimeout(RemoteError):
    pass


class RemoteStatusError(RemoteError):
    def __init__(self, status, question_id=None, retryable=False):
        self.status = status
        self.retryable = retryable
        kind = "retryable" if retryable else "non-retryable"
        super().__init__(f"{kind} HTTP status {status}", question_id)


class RemoteConnectionError(RemoteError):
    pass


class MalformedResponse(RemoteError):
    pass


@dataclass(frozen=True)
class RetryPolicy:
    """Retry on timeouts, connection errors and the listed statuses."""

    retries: int = 1
    backoff_ms: float = 50.0
    retry_statuses: frozenset = field(default_factory=lambda: frozenset({500, 502, 503, 504}))
    retry_timeouts: bool = True


class RemoteAnswerer:
    """HTTP client for ``POST {endpoint}/v1/answer``, one request per question."""

    def __init__(self, endpoint_url, timeout_ms=2000.0, retry=None, max_in_flight=4, session=None):
        self.url = endpoint_url.rstrip("/") + "/v1/answer"
        self.timeout_ms = float(timeout_ms)
        self.retry = retry or RetryPolicy()
        self.session = session or requests.Session()
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def _post(self, body, question_id):
        try:
            resp = self.session.post(self.url, json=body, timeout=self.timeout_ms / 1000.0)
        except requests.Timeout:
            raise RemoteTimeout(f"no response within {self.timeout_ms:g} ms", question_id) from None
        except requests.ConnectionError as exc:
            raise RemoteConnectionError(f"connection failed: {exc}", question_id) from None
        if resp.status_code != 200:
            raise RemoteStatusError(resp.status_code, question_id, resp.status_code in self.retry.retry_statuses)
        try:
            payload = resp.json()
        except ValueError:
            raise MalformedResponse("response is not JSON", question_id) from None
        if not isinstance(payload, dict) or not isinstance(payload.get("answer"), str):
            raise MalformedResponse(f"missing string 'answer' in {payload!r}", question_id)
        return payload

    def answer(self, frame_ref, question_text, question_id, domain):
        body = {
            "frame_ref": str(frame_ref),
            "question_id": question_id,
            "question": question_text,
            "labels": list(domain.labels),
        }
        attempt = 0
        with self._slots:
            # elapsed covers retries: that is what the traversal waited
            t0 = time.perf_counter()
            while True:
                try:
                    payload = self._post(body, question_id)
                    break
                except (RemoteTimeout, RemoteConnectionError, RemoteStatusError) as exc:
                    retryable = getattr(exc, "retryable", True)
                    if isinstance(exc, RemoteTimeout) and not self.retry.retry_timeouts:
                        retryable = False
                    if not retryable or attempt >= self.retry.retries:
                        raise
                    attempt += 1
                    log.debug("retrying %s after %s", question_id, exc)
                    time.sleep(self.retry.backoff_ms / 1000.0)
        elapsed = (time.perf_counter() - t0) * 1000.0
        return normalize_label(payload["answer"]), elapsed


def remote_answerer(endpoint_url, timeout_ms=2000.0, retry=None, **kw) -> RemoteAnswerer:
    return RemoteAnswerer(endpoint_url, timeout_ms, retry, **kw)
