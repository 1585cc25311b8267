"""Gateways: mock determinism, HTTP client behavior, replay cache."""

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest
import requests

from icl_dst.gateway import (
    CachingGateway,
    GatewayUnavailable,
    MalformedResponse,
    MockLM,
    OpenAICompletionsClient,
    RetryPolicy,
    SampledCompletion,
    SampleParams,
)


class TestSampleParams:
    def test_few_shot_defaults(self):
        params = SampleParams.few_shot()
        assert (params.top_p, params.best_of, params.n) == (0.9, 10, 5)
        assert params.max_tokens == 120
        assert params.stop == ("\n\n", "#", "print(")

    def test_zero_shot_defaults(self):
        params = SampleParams.zero_shot()
        assert (params.top_p, params.best_of, params.n) == (0.7, 32, 5)

    def test_n_exceeding_best_of_rejected(self):
        with pytest.raises(ValueError):
            SampleParams(n=11, best_of=10)


class TestSampledCompletion:
    def test_total_must_match_sum(self):
        with pytest.raises(ValueError):
            SampledCompletion("x", (-0.5, -0.5), -2.0)

    def test_from_tokens(self):
        completion = SampledCompletion.from_tokens("x", [-0.5, -0.25])
        assert completion.total_logprob == pytest.approx(-0.75)


class TestMockLM:
    def test_fixed_table_returned_exactly(self):
        mock = MockLM(completions={"PROMPT": [("pass", (-0.5, -0.1))]})
        out = mock.sample("PROMPT", SampleParams())
        assert out == [SampledCompletion("pass", (-0.5, -0.1), -0.6)]

    def test_bit_deterministic_across_instances(self):
        a = MockLM(seed=3).sample("some prompt", SampleParams())
        b = MockLM(seed=3).sample("some prompt", SampleParams())
        assert a == b
        assert MockLM(seed=4).sample("some prompt", SampleParams()) != a

    def test_n_limits_completion_count(self):
        table = {"p": ["a", "b", "c", "d", "e", "f"]}
        out = MockLM(completions=table).sample("p", SampleParams(n=2, best_of=2))
        assert [c.text for c in out] == ["a", "b"]

    def test_stop_truncation(self):
        mock = MockLM(completions={"p": ["pass\n\n# comment"]})
        out = mock.sample("p", SampleParams())
        assert out[0].text == "pass"
        assert len(out[0].token_logprobs) == len("pass")

    def test_unknown_prompt_degrades_to_pass(self):
        out = MockLM().sample("never seen", SampleParams())
        assert [c.text for c in out] == ["pass"]

    def test_score_table_hit(self):
        mock = MockLM(scores={("pre", "post"): (-1.0, -2.0)})
        assert mock.score_continuation("pre", "post") == [-1.0, -2.0]

    def test_empty_continuation_rejected(self):
        with pytest.raises(ValueError):
            MockLM().score_continuation("prefix", "")

    def test_chain_rule(self):
        mock = MockLM(seed=11)
        prefix = "inverted prompt\n\n"
        a, b = 'state.hotel = update_hotel(area="east")', "\npass"
        joint = mock.score_continuation(prefix, a + b)
        split = mock.score_continuation(prefix, a) + mock.score_continuation(prefix + a, b)
        assert joint == pytest.approx(split, abs=1e-12)

    def test_sampled_logprobs_match_score_continuation(self):
        mock = MockLM(completions={"p": ["pass"]}, seed=5)
        sampled = mock.sample("p", SampleParams())[0]
        assert list(sampled.token_logprobs) == pytest.approx(
            mock.score_continuation("p", "pass")
        )


class FakeResponse:
    def __init__(self, status_code, payload):
        self.status_code = status_code
        self._payload = payload
        self.text = json.dumps(payload) if not isinstance(payload, Exception) else "boom"

    def json(self):
        if isinstance(self._payload, Exception):
            raise self._payload
        return self._payload


class FakeSession:
    def __init__(self, script):
        self.script = list(script)
        self.calls = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.calls.append(json)
        action = self.script.pop(0)
        if isinstance(action, Exception):
            raise action
        return FakeResponse(*action)


FAST_RETRY = RetryPolicy(attempts=3, backoff=0.001, max_backoff=0.002)


def sample_payload(text="pass", logprobs=(-0.5,)):
    return {
        "choices": [
            {"text": text, "logprobs": {"token_logprobs": [None, *logprobs]}}
        ]
    }


class TestHttpClient:
    def client(self, session):
        return OpenAICompletionsClient(
            "http://lm.local/v1/completions", "test-model",
            api_key="k", session=session, retry=FAST_RETRY,
        )

    def test_sample_success_and_request_shape(self):
        session = FakeSession([(200, sample_payload("pass", (-0.5, -0.25)))])
        out = self.client(session).sample("PROMPT", SampleParams())
        assert out[0].text == "pass"
        assert out[0].total_logprob == pytest.approx(-0.75)
        body = session.calls[0]
        assert body["prompt"] == "PROMPT"
        assert body["best_of"] == 10 and body["n"] == 5
        assert body["top_p"] == 0.9 and body["max_tokens"] == 120
        assert body["stop"] == ["\n\n", "#", "print("]
        assert body["echo"] is False

    def test_retries_transient_then_succeeds(self):
        session = FakeSession(
            [
                (500, {}),
                requests.ConnectionError("nope"),
                (200, sample_payload()),
            ]
        )
        out = self.client(session).sample("p", SampleParams())
        assert out[0].text == "pass"
        assert len(session.calls) == 3

    def test_gateway_unavailable_after_budget(self):
        session = FakeSession([(503, {})] * 3)
        with pytest.raises(GatewayUnavailable):
            self.client(session).sample("p", SampleParams())

    def test_non_retryable_status_is_malformed(self):
        session = FakeSession([(404, {})])
        with pytest.raises(MalformedResponse):
            self.client(session).sample("p", SampleParams())

    def test_bad_json_is_malformed(self):
        session = FakeSession([(200, ValueError("not json"))])
        with pytest.raises(MalformedResponse):
            self.client(session).sample("p", SampleParams())

    def test_missing_fields_is_malformed(self):
        session = FakeSession([(200, {"choices": [{"nope": 1}]})])
        with pytest.raises(MalformedResponse):
            self.client(session).sample("p", SampleParams())

    def test_score_continuation_offset_bookkeeping(self):
        prefix, continuation = "abc", "XY"
        payload = {
            "choices": [
                {
                    "logprobs": {
                        "text_offset": [0, 1, 2, 3, 4],
                        "token_logprobs": [None, -1.0, -2.0, -3.0, -4.0],
                    }
                }
            ]
        }
        session = FakeSession([(200, payload)])
        out = self.client(session).score_continuation(prefix, continuation)
        assert out == [-3.0, -4.0]
        body = session.calls[0]
        assert body["prompt"] == "abcXY"
        assert body["echo"] is True and body["max_tokens"] == 0

    def test_empty_continuation_rejected(self):
        with pytest.raises(ValueError):
            self.client(FakeSession([])).score_continuation("p", "")


class _Endpoint(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        if body.get("echo"):
            prompt = body["prompt"]
            payload = {
                "choices": [
                    {
                        "text": prompt,
                        "logprobs": {
                            "text_offset": list(range(len(prompt))),
                            "token_logprobs": [None]
                            + [-0.01 * (i + 1) for i in range(len(prompt) - 1)],
                        },
                    }
                ]
            }
        else:
            payload = {
                "choices": [
                    {"text": "pass", "logprobs": {"token_logprobs": [-0.3, -0.2]}}
                ]
            }
        data = json.dumps(payload).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture()
def local_endpoint():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _Endpoint)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/v1/completions"
    server.shutdown()


class TestAgainstLocalServer:
    def test_sample_and_score(self, local_endpoint):
        client = OpenAICompletionsClient(local_endpoint, "m", api_key=None, retry=FAST_RETRY)
        out = client.sample("hello", SampleParams())
        assert out[0].text == "pass"
        scores = client.score_continuation("ab", "cd")
        assert len(scores) == 2


class TestCachingGateway:
    def test_records_then_replays_without_inner(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        live = CachingGateway(MockLM(seed=2), path)
        first = live.sample("p", SampleParams())
        score = live.score_continuation("a", "bc")

        class Dead:
            def sample(self, *a):
                raise AssertionError("should not be called")

            def score_continuation(self, *a):
                raise AssertionError("should not be called")

        replay = CachingGateway(Dead(), path)
        assert replay.sample("p", SampleParams()) == first
        assert replay.score_continuation("a", "bc") == score

    def test_pure_replay_miss_raises(self, tmp_path):
        gateway = CachingGateway(None, tmp_path / "cache.jsonl")
        with pytest.raises(GatewayUnavailable):
            gateway.sample("never recorded", SampleParams())

    def test_params_are_part_of_the_key(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        live = CachingGateway(MockLM(completions={"p": ["a", "b"]}), path)
        one = live.sample("p", SampleParams(n=1, best_of=1))
        two = live.sample("p", SampleParams(n=2, best_of=2))
        assert len(one) == 1 and len(two) == 2

    def test_torn_cache_tail_treated_as_miss(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        live = CachingGateway(MockLM(seed=2), path)
        expected = live.sample("p", SampleParams())
        with open(path, "a", encoding="utf-8") as fh:
            fh.write('{"request_hash": "torn')  # interrupted append
        reloaded = CachingGateway(MockLM(seed=2), path)
        assert reloaded.sample("p", SampleParams()) == expected
