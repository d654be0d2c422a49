from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor

import pytest

from conftest import FakeClock, make_mock_spec
from msgtriage.gateway import (
    Gateway,
    GatewayTimeoutError,
    MockBackend,
    ModelSpec,
    NonRetryableError,
    RetryExhaustedError,
    default_registry_path,
    load_registry,
)

TABLE_MODELS = {
    "gpt-5", "gpt-4.1", "o3", "gpt-5-mini", "gpt-4.1-mini", "o4-mini",
    "gpt-5-nano", "gpt-4.1-nano", "gpt-oss-120b", "grok-3", "grok-3-mini",
    "Llama-3.3-70B-Instruct", "DeepSeek-R1", "DeepSeek-V3", "Phi-4",
    "Phi-4-mini-instruct", "model-router",
}


def fake_gateway(spec, backend, clock=None):
    clock = clock or FakeClock()
    return Gateway([spec], backends={spec.name: backend}, clock=clock.monotonic, sleeper=clock.sleep)


def test_fixed_mock_echo():
    spec = make_mock_spec()
    gw = fake_gateway(spec, MockBackend.fixed("Billing Question"))
    result = gw.complete(spec.name, "sys", "classify this")
    assert result.text == "Billing Question"
    assert result.attempts == 1
    assert result.latency > 0


def test_fail_twice_then_succeed_with_cap_three():
    spec = make_mock_spec()
    mock = MockBackend(script=["fail", "fail", "ok"], fixed_text="Lab Results")
    gw = fake_gateway(spec, mock)
    result = gw.complete(spec.name, "sys", "user")
    assert result.attempts == 3
    assert result.text == "Lab Results"
    assert len(mock.requests) == 3


def test_always_fail_exhausts_retries():
    spec = make_mock_spec()
    mock = MockBackend(always_fail=True)
    gw = fake_gateway(spec, mock)
    with pytest.raises(RetryExhaustedError):
        gw.complete(spec.name, "sys", "user")
    assert len(mock.requests) == 3


def test_all_timeouts_raise_timeout_kind():
    spec = make_mock_spec()
    mock = MockBackend(script=["timeout", "timeout", "timeout"])
    gw = fake_gateway(spec, mock)
    with pytest.raises(GatewayTimeoutError):
        gw.complete(spec.name, "sys", "user")


def test_denial_is_non_retryable_and_immediate():
    spec = make_mock_spec()
    mock = MockBackend(script=["deny"])
    gw = fake_gateway(spec, mock)
    with pytest.raises(NonRetryableError):
        gw.complete(spec.name, "sys", "user")
    assert len(mock.requests) == 1


def test_unknown_model_rejected():
    gw = Gateway([make_mock_spec("known")])
    with pytest.raises(NonRetryableError, match="not in the registry"):
        gw.complete("unknown", "sys", "user")


def test_unsupported_scheme_rejected():
    spec = ModelSpec(
        name="ftp-model", family="X", size_class="nano", endpoint_url="ftp://nope"
    )
    gw = Gateway([spec])
    with pytest.raises(NonRetryableError, match="scheme"):
        gw.complete("ftp-model", "sys", "user")


def test_replay_map_resolves_by_body_in_prompt():
    spec = make_mock_spec()
    mock = MockBackend.replay_map(
        answers={"m1": "Lab Results"}, bodies={"m1": "asking about bloodwork"}
    )
    gw = fake_gateway(spec, mock)
    hit = gw.complete(spec.name, "sys", "Message: asking about bloodwork\nAnswer:")
    assert hit.text == "Lab Results"
    miss = gw.complete(spec.name, "sys", "Message: something else\nAnswer:")
    assert miss.text == "Other"


def test_replay_prefers_longest_probe():
    mock = MockBackend(replay={"about bloodwork": "A", "asking about bloodwork today": "B"})
    spec = make_mock_spec()
    gw = fake_gateway(spec, mock)
    assert gw.complete(spec.name, "s", "asking about bloodwork today, thanks").text == "B"


def test_scripted_fail_then_ok_at_backend_level():
    spec = make_mock_spec()
    mock = MockBackend(script=["fail", "ok"], fixed_text="X")
    with pytest.raises(Exception):
        mock.send(spec, "s", "u", None, 1)
    assert mock.send(spec, "s", "u", None, 2).text == "X"


def test_latency_accumulates_across_attempts():
    spec = make_mock_spec()
    mock = MockBackend(script=["fail", "ok"], fixed_text="X")
    gw = fake_gateway(spec, mock)
    result = gw.complete(spec.name, "sys", "user")
    assert result.attempts == 2
    # Simulated latencies are deterministic; recompute the expected total.
    from msgtriage.gateway import _simulated_latency

    expected = _simulated_latency(spec.name, "user", 1, 80.0) + _simulated_latency(
        spec.name, "user", 2, 80.0
    )
    assert result.latency == pytest.approx(expected)


def test_latency_is_deterministic_across_runs():
    spec = make_mock_spec()
    first = fake_gateway(spec, MockBackend.fixed("X")).complete(spec.name, "s", "prompt")
    second = fake_gateway(spec, MockBackend.fixed("X")).complete(spec.name, "s", "prompt")
    assert first.latency == second.latency


def test_rate_limit_no_window_exceeds_limit():
    clock = FakeClock()
    spec = ModelSpec(
        name="limited",
        family="Mock",
        size_class="nano",
        endpoint_url="mock://fixed",
        rate_limit_per_s=5,
        max_concurrency=8,
    )
    mock = MockBackend.fixed("X", clock=clock.monotonic)
    gw = Gateway([spec], backends={"limited": mock}, clock=clock.monotonic, sleeper=clock.sleep)
    for i in range(23):
        gw.complete("limited", "s", f"request {i}")
    starts = sorted(r.started_at for r in mock.requests)
    assert len(starts) == 23
    for i, t0 in enumerate(starts):
        in_window = [t for t in starts if t0 <= t < t0 + 1.0]
        assert len(in_window) <= 5, f"window starting at {t0} holds {len(in_window)} starts"


def test_concurrent_completions_are_thread_safe():
    spec = make_mock_spec()
    mock = MockBackend.fixed("X")
    gw = fake_gateway(spec, mock)
    with ThreadPoolExecutor(max_workers=8) as pool:
        results = list(pool.map(lambda i: gw.complete(spec.name, "s", f"u{i}"), range(80)))
    assert all(r.text == "X" for r in results)
    assert len(mock.requests) == 80


def test_tag_recorded_in_request_log():
    spec = make_mock_spec()
    mock = MockBackend.fixed("X")
    gw = fake_gateway(spec, mock)
    gw.complete(spec.name, "s", "u", tag="stage2:M-1")
    assert mock.requests[0].tag == "stage2:M-1"


def test_default_registry_covers_benchmark_table():
    specs = load_registry(default_registry_path())
    names = {spec.name for spec in specs}
    assert TABLE_MODELS <= names
    assert len(TABLE_MODELS) == 17
    by_name = {spec.name: spec for spec in specs}
    # Reasoning-class entries must omit temperature entirely.
    for reasoning in ("o3", "o4-mini", "DeepSeek-R1", "gpt-5"):
        assert by_name[reasoning].temperature is None
    assert by_name["model-router"].size_class == "router"
    assert by_name["gpt-oss-120b"].size_class == "open-source"


def test_registry_rejects_duplicates(tmp_path):
    path = tmp_path / "reg.json"
    entry = {
        "name": "a", "family": "x", "sizeClass": "mini",
        "endpointUrl": "mock://fixed",
    }
    path.write_text(json.dumps([entry, entry]), encoding="utf-8")
    with pytest.raises(NonRetryableError, match="duplicate"):
        load_registry(path)


def test_spec_validation():
    with pytest.raises(ValueError, match="sizeClass"):
        ModelSpec(name="x", family="f", size_class="giant", endpoint_url="mock://fixed")
    with pytest.raises(ValueError, match="requestTimeout"):
        ModelSpec(
            name="x", family="f", size_class="mini",
            endpoint_url="mock://fixed", request_timeout=0,
        )


def test_mock_from_url_variants(tmp_path):
    fixed = MockBackend.from_url("mock://fixed?text=Lab%20Results")
    assert fixed._resolve_text("anything") == "Lab Results"
    replay_file = tmp_path / "replay.json"
    replay_file.write_text(json.dumps({"answers": {"probe body": "A"}, "default": "Nope"}))
    replay = MockBackend.from_url(f"mock://replay?file={replay_file}")
    assert replay._resolve_text("contains probe body here") == "A"
    assert replay._resolve_text("no match") == "Nope"
    with pytest.raises(NonRetryableError):
        MockBackend.from_url("mock://bogus")


def test_no_secret_material_leaks(monkeypatch, caplog):
    secret = "sk-SUPERSECRET-9912"
    monkeypatch.setenv("TEST_MODEL_KEY", secret)
    spec = ModelSpec(
        name="secured",
        family="Mock",
        size_class="mini",
        endpoint_url="mock://fixed?text=X",
        auth_ref="TEST_MODEL_KEY",
    )
    gw = Gateway([spec])
    with caplog.at_level(logging.DEBUG):
        result = gw.complete("secured", "system", "user text")
    surfaces = [repr(spec), repr(result), json.dumps(spec.__dict__), caplog.text]
    for surface in surfaces:
        assert secret not in surface
    assert "TEST_MODEL_KEY" in repr(spec)  # the *name* of the env var is fine
