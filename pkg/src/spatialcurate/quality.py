"""Quality assessment through an external judge service, plus the retention rule.

The judge scores each sample on four dimensions (correctness, completeness,
clarity, relevance) in [0, 1]; the sample's quality is their arithmetic mean.
A sample is retained only when both strict thresholds pass: spatial entropy
above tau AND quality above phi. The service sits behind a small client
interface with a seeded deterministic stub for offline runs and tests.
"""

from __future__ import annotations

import hashlib
import json
import random
import time
from concurrent.futures import FIRST_COMPLETED, Future, ThreadPoolExecutor, wait
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Optional, Protocol, Union

import requests

from .errors import ServiceError
from .types import EntropyReport, FilterConfig, QualityAssessment, VqaSample

DIMENSIONS = ("correctness", "completeness", "clarity", "relevance")


@dataclass(frozen=True)
class AssessmentRequest:
    sample_id: str
    question: str
    answer: str
    image_refs: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "id": self.sample_id,
            "question": self.question,
            "answer": self.answer,
            "image_refs": list(self.image_refs),
        }


@dataclass(frozen=True)
class AssessmentResponse:
    correctness: float
    completeness: float
    clarity: float
    relevance: float
    rationale: Optional[str] = None


class AssessmentTransportError(ServiceError):
    """The service could not be reached; retryable."""


class AssessmentProtocolError(ServiceError):
    """The service answered with something that is not a valid assessment."""


class AssessmentUnavailableError(ServiceError):
    """Retries exhausted for one sample."""

    def __init__(self, sample_id: str, cause: str):
        super().__init__(f"assessment unavailable for sample '{sample_id}': {cause}")
        self.sample_id = sample_id


class AssessmentClient(Protocol):
    def assess(self, request: AssessmentRequest) -> AssessmentResponse: ...


class StubAssessmentClient:
    """Deterministic offline judge: scores are a pure function of (seed, id)."""

    def __init__(self, seed: int = 0):
        self.seed = seed

    def assess(self, request: AssessmentRequest) -> AssessmentResponse:
        digest = hashlib.sha256(f"{self.seed}:{request.sample_id}".encode()).digest()
        scores = []
        for i in range(4):
            chunk = int.from_bytes(digest[i * 8 : (i + 1) * 8], "big")
            # Spread over [0.7, 1.0] so the default phi=0.85 splits corpora.
            scores.append(0.7 + 0.3 * (chunk / 2**64))
        return AssessmentResponse(*scores)


class HttpAssessmentClient:
    """POSTs the request object as JSON and expects the four dimension scores back."""

    def __init__(self, endpoint: str, timeout: float = 10.0, session: Optional[requests.Session] = None):
        self.endpoint = endpoint
        self.timeout = timeout
        self.session = session or requests.Session()

    def assess(self, request: AssessmentRequest) -> AssessmentResponse:
        try:
            resp = self.session.post(
                self.endpoint, json=request.to_dict(), timeout=self.timeout
            )
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise AssessmentTransportError(str(exc)) from exc
        if resp.status_code >= 500:
            raise AssessmentTransportError(f"server error {resp.status_code}")
        if resp.status_code >= 400:
            raise AssessmentProtocolError(f"request rejected with {resp.status_code}")
        try:
            body = resp.json()
        except (json.JSONDecodeError, ValueError) as exc:
            raise AssessmentProtocolError(f"response is not json: {exc}") from exc
        scores = []
        for dim in DIMENSIONS:
            if dim not in body:
                raise AssessmentProtocolError(f"response missing dimension '{dim}'")
            try:
                value = float(body[dim])
            except (TypeError, ValueError):
                raise AssessmentProtocolError(
                    f"dimension '{dim}' is not numeric: {body[dim]!r}"
                ) from None
            if value != value or value in (float("inf"), float("-inf")):
                raise AssessmentProtocolError(f"dimension '{dim}' is not finite")
            scores.append(value)
        rationale = body.get("rationale")
        return AssessmentResponse(*scores, rationale=rationale)


@dataclass(frozen=True)
class RetryPolicy:
    """Exponential backoff with optional jitter; attempts counts total tries."""

    attempts: int = 3
    base_delay: float = 0.25
    max_delay: float = 8.0
    jitter: bool = True

    def delay(self, attempt: int, rng: random.Random) -> float:
        d = min(self.base_delay * (2**attempt), self.max_delay)
        if self.jitter and d > 0:
            d *= 0.5 + rng.random()
        return d


def assess(
    sample: VqaSample,
    client: AssessmentClient,
    *,
    retry: RetryPolicy = RetryPolicy(),
    sleep: Callable[[float], None] = time.sleep,
    rng: Optional[random.Random] = None,
) -> QualityAssessment:
    """Score one sample; transport failures are retried, then surface as
    ``AssessmentUnavailableError`` carrying the sample id.

    Out-of-range scores from the service are clamped to [0, 1] and the
    assessment is flagged ``clamped``.
    """
    rng = rng or random.Random(0)
    request = AssessmentRequest(
        sample_id=sample.id,
        question=sample.question,
        answer=sample.answer,
        image_refs=sample.image_refs,
    )
    last_error = "no attempts made"
    for attempt in range(max(1, retry.attempts)):
        try:
            response = client.assess(request)
            break
        except AssessmentTransportError as exc:
            last_error = str(exc)
            if attempt + 1 < retry.attempts:
                sleep(retry.delay(attempt, rng))
    else:
        raise AssessmentUnavailableError(sample.id, last_error)

    clamped = False
    scores = []
    for value in (
        response.correctness,
        response.completeness,
        response.clarity,
        response.relevance,
    ):
        bounded = min(1.0, max(0.0, value))
        if bounded != value:
            clamped = True
        scores.append(bounded)
    return QualityAssessment.from_scores(*scores, clamped=clamped)


@dataclass(frozen=True)
class RetentionDecision:
    keep: bool
    reason: Optional[str] = None  # "low-entropy" or "low-quality" when dropped


def retain(
    entropy: EntropyReport, quality: QualityAssessment, config: FilterConfig
) -> RetentionDecision:
    """Keep iff h_total > tau AND mean quality > phi, both strict.

    Low entropy is checked first so drop statistics separate structural
    screening from quality screening.
    """
    if not entropy.h_total > config.tau:
        return RetentionDecision(keep=False, reason="low-entropy")
    if not quality.mean_score > config.phi:
        return RetentionDecision(keep=False, reason="low-quality")
    return RetentionDecision(keep=True)


BatchResult = tuple[VqaSample, Union[QualityAssessment, ServiceError]]


def batch_assess(
    samples: Iterable[VqaSample],
    client: AssessmentClient,
    *,
    parallelism: int = 1,
    retry: RetryPolicy = RetryPolicy(),
    sleep: Callable[[float], None] = time.sleep,
) -> Iterator[BatchResult]:
    """Assess a stream with at most ``parallelism`` requests in flight.

    Exactly one result per input, in completion order; per-sample failures
    are yielded in-stream as the error value and never abort the batch.
    """
    if parallelism < 1:
        raise ValueError(f"parallelism must be >= 1, got {parallelism}")

    def worker(sample: VqaSample) -> BatchResult:
        try:
            return sample, assess(sample, client, retry=retry, sleep=sleep)
        except ServiceError as exc:
            return sample, exc

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        pending: set[Future] = set()
        for sample in samples:
            pending.add(pool.submit(worker, sample))
            if len(pending) >= parallelism:
                done, pending = wait(pending, return_when=FIRST_COMPLETED)
                for future in done:
                    yield future.result()
        while pending:
            done, pending = wait(pending, return_when=FIRST_COMPLETED)
            for future in done:
                yield future.result()
