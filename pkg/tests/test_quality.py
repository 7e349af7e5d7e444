import itertools
import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from spatialcurate.quality import (
    AssessmentProtocolError,
    AssessmentRequest,
    AssessmentResponse,
    AssessmentUnavailableError,
    AssessmentTransportError,
    HttpAssessmentClient,
    RetentionDecision,
    RetryPolicy,
    StubAssessmentClient,
    assess,
    batch_assess,
    retain,
)
from spatialcurate.types import (
    EntropyReport,
    FilterConfig,
    QualityAssessment,
    TaskKind,
    VqaSample,
)

NO_WAIT = RetryPolicy(attempts=3, base_delay=0.0, jitter=False)


def make_sample(i=0):
    return VqaSample(
        id=f"s-{i:03d}", question="q?", answer="a", task_kind=TaskKind.SELECTION,
        image_refs=("img.jpg",),
    )


class FixedClient:
    def __init__(self, *scores):
        self.scores = scores

    def assess(self, request):
        return AssessmentResponse(*self.scores)


class FlakyClient:
    """Fails transport on a fixed schedule, then delegates to the stub."""

    def __init__(self, fail_every=3, fail_times=1):
        self.fail_every = fail_every
        self.fail_times = fail_times
        self.calls = {}
        self.stub = StubAssessmentClient(seed=0)
        self.lock = threading.Lock()
        self.counter = itertools.count()

    def assess(self, request):
        with self.lock:
            n = next(self.counter)
            seen = self.calls.get(request.sample_id, 0)
            self.calls[request.sample_id] = seen + 1
        if n % self.fail_every == 0 and seen < self.fail_times:
            raise AssessmentTransportError("synthetic outage")
        return self.stub.assess(request)


class AlwaysDownClient:
    def assess(self, request):
        raise AssessmentTransportError("offline")


# --- assess ------------------------------------------------------------------------


def test_mean_of_four_dimensions():
    q = assess(make_sample(), FixedClient(1.0, 1.0, 1.0, 0.8), retry=NO_WAIT)
    assert q.mean_score == pytest.approx(0.95, abs=1e-12)
    assert not q.clamped


def test_out_of_range_scores_clamped_and_flagged():
    q = assess(make_sample(), FixedClient(1.2, 1.0, 1.0, 1.0), retry=NO_WAIT)
    assert (q.correctness, q.completeness, q.clarity, q.relevance) == (1.0, 1.0, 1.0, 1.0)
    assert q.mean_score == 1.0
    assert q.clamped


def test_unreachable_service_raises_unavailable():
    with pytest.raises(AssessmentUnavailableError) as exc:
        assess(make_sample(3), AlwaysDownClient(), retry=NO_WAIT)
    assert exc.value.sample_id == "s-003"


def test_stub_is_deterministic_and_in_range():
    a = StubAssessmentClient(seed=7)
    b = StubAssessmentClient(seed=7)
    req = AssessmentRequest(sample_id="x", question="q", answer="a")
    ra, rb = a.assess(req), b.assess(req)
    assert ra == rb
    for v in (ra.correctness, ra.completeness, ra.clarity, ra.relevance):
        assert 0.0 <= v <= 1.0
    assert StubAssessmentClient(seed=8).assess(req) != ra


def test_transient_failure_masked_by_retry():
    client = FlakyClient(fail_every=1, fail_times=2)  # first two calls fail
    q = assess(make_sample(), client, retry=RetryPolicy(attempts=3, base_delay=0.0, jitter=False))
    assert isinstance(q, QualityAssessment)


# --- retain ------------------------------------------------------------------------


def report(h):
    return EntropyReport(h_depth=h, h_3d=h, h_total=h)


def quality(score):
    return QualityAssessment(score, score, score, score, score)


def test_retain_keep():
    assert retain(report(0.25), quality(0.9), FilterConfig()) == RetentionDecision(keep=True)


def test_retain_low_entropy_checked_first():
    decision = retain(report(0.15), quality(0.95), FilterConfig())
    assert decision == RetentionDecision(keep=False, reason="low-entropy")
    # Even when both thresholds fail, entropy wins.
    both = retain(report(0.1), quality(0.1), FilterConfig())
    assert both.reason == "low-entropy"


def test_retain_boundary_quality_drops():
    decision = retain(report(0.5), quality(0.85), FilterConfig())
    assert decision == RetentionDecision(keep=False, reason="low-quality")


def test_retain_boundary_entropy_drops():
    assert retain(report(0.2), quality(0.95), FilterConfig()).reason == "low-entropy"


def test_retain_is_strict_conjunction_grid():
    cfg = FilterConfig()
    for i in range(101):
        for j in range(101):
            h, q = i / 100.0, j / 100.0
            expected = h > cfg.tau and q > cfg.phi
            assert retain(report(h), quality(q), cfg).keep is expected


# --- batch -------------------------------------------------------------------------


def test_batch_happy_path_counts():
    samples = [make_sample(i) for i in range(100)]
    results = list(batch_assess(samples, StubAssessmentClient(seed=0), parallelism=8))
    assert len(results) == 100
    assert {s.id for s, _ in results} == {s.id for s in samples}
    assert all(isinstance(r, QualityAssessment) for _, r in results)


def test_batch_retry_masks_transient_failures():
    samples = [make_sample(i) for i in range(100)]
    client = FlakyClient(fail_every=3, fail_times=1)
    results = list(
        batch_assess(samples, client, parallelism=4,
                     retry=RetryPolicy(attempts=2, base_delay=0.0, jitter=False))
    )
    assert len(results) == 100
    assert all(isinstance(r, QualityAssessment) for _, r in results)


def test_batch_always_failing_emits_one_error_per_input():
    samples = [make_sample(i) for i in range(100)]
    results = list(
        batch_assess(samples, AlwaysDownClient(), parallelism=8,
                     retry=RetryPolicy(attempts=1, base_delay=0.0, jitter=False))
    )
    assert len(results) == 100
    assert all(isinstance(r, AssessmentUnavailableError) for _, r in results)
    assert {s.id for s, _ in results} == {s.id for s in samples}


def test_batch_rejects_bad_parallelism():
    with pytest.raises(ValueError):
        list(batch_assess([make_sample()], StubAssessmentClient(), parallelism=0))


def test_batch_bounds_in_flight_requests():
    import time

    class CountingClient:
        def __init__(self):
            self.active = 0
            self.peak = 0
            self.lock = threading.Lock()
            self.stub = StubAssessmentClient(seed=0)

        def assess(self, request):
            with self.lock:
                self.active += 1
                self.peak = max(self.peak, self.active)
            time.sleep(0.002)
            try:
                return self.stub.assess(request)
            finally:
                with self.lock:
                    self.active -= 1

    client = CountingClient()
    results = list(batch_assess([make_sample(i) for i in range(40)], client, parallelism=3))
    assert len(results) == 40
    assert client.peak <= 3


# --- http client ---------------------------------------------------------------------


class _JudgeHandler(BaseHTTPRequestHandler):
    payload: dict = {}
    status = 200

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length))
        assert set(body) == {"id", "question", "answer", "image_refs"}
        self.send_response(self.status)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(json.dumps(self.payload).encode())

    def log_message(self, *args):
        pass


@pytest.fixture
def judge_server():
    server = HTTPServer(("127.0.0.1", 0), _JudgeHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


def test_http_client_round_trip(judge_server):
    _JudgeHandler.payload = {
        "correctness": 0.9, "completeness": 0.8, "clarity": 0.7,
        "relevance": 1.0, "rationale": "fine",
    }
    _JudgeHandler.status = 200
    client = HttpAssessmentClient(judge_server, timeout=5)
    q = assess(make_sample(), client, retry=NO_WAIT)
    assert q.mean_score == pytest.approx((0.9 + 0.8 + 0.7 + 1.0) / 4, abs=1e-12)


def test_http_client_missing_dimension_is_protocol_error(judge_server):
    _JudgeHandler.payload = {"correctness": 0.9}
    _JudgeHandler.status = 200
    client = HttpAssessmentClient(judge_server, timeout=5)
    with pytest.raises(AssessmentProtocolError):
        assess(make_sample(), client, retry=NO_WAIT)


def test_http_client_connection_refused_becomes_unavailable():
    client = HttpAssessmentClient("http://127.0.0.1:9", timeout=0.2)
    with pytest.raises(AssessmentUnavailableError):
        assess(make_sample(), client, retry=RetryPolicy(attempts=2, base_delay=0.0, jitter=False))
