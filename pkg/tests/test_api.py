import json
import os
import time

import pytest
from fastapi.testclient import TestClient

from resumepipe.api import API_TOKEN_ENV, create_app
from resumepipe.backend import BackendConfig
from resumepipe.config import CorpusSource, RunConfig
from resumepipe.runtime import run_pipeline

AUTH = {"Authorization": "Bearer test-token"}


def mock_cfg(store_root, **kw):
    defaults = dict(corpus=CorpusSource(kind="bundled"),
                    backend=BackendConfig(kind="mock"),
                    store_root=str(store_root))
    defaults.update(kw)
    return RunConfig(**defaults)


@pytest.fixture(scope="module", autouse=True)
def api_token():
    old = os.environ.get(API_TOKEN_ENV)
    os.environ[API_TOKEN_ENV] = "test-token"
    yield
    if old is None:
        os.environ.pop(API_TOKEN_ENV, None)
    else:
        os.environ[API_TOKEN_ENV] = old


@pytest.fixture(scope="module")
def service(tmp_path_factory):
    store = tmp_path_factory.mktemp("api_store")
    report = run_pipeline(mock_cfg(store))
    client = TestClient(create_app(store))
    return client, report, store


@pytest.fixture
def fresh_run(service):
    """A run of its own for tests that mutate decisions."""
    _, _, store = service
    return run_pipeline(mock_cfg(store))


def wait_done(client, run_id, timeout=30.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        obj = client.get(f"/runs/{run_id}").json()
        if obj.get("status") != "running":
            return obj
        time.sleep(0.05)
    raise AssertionError(f"run {run_id} still running after {timeout}s")


class TestAuth:
    def test_mutating_endpoints_need_token(self, service):
        client, report, _ = service
        assert client.post("/runs", json={"config": {}}).status_code == 401
        r = client.post(f"/runs/{report.run_id}/decision",
                        headers={"Authorization": "Bearer wrong"},
                        json={"selected_ids": [], "rationale": "x",
                              "criteria": {}})
        assert r.status_code == 401
        assert set(r.json()) == {"error", "fields"}

    def test_reads_are_open(self, service):
        client, report, _ = service
        assert client.get("/runs").status_code == 200
        assert client.get(f"/runs/{report.run_id}").status_code == 200

    def test_unconfigured_server_refuses(self, service):
        client, _, _ = service
        old = os.environ.pop(API_TOKEN_ENV)
        try:
            r = client.post("/runs", headers=AUTH, json={"config": {}})
            assert r.status_code == 401
            assert "not configured" in r.json()["error"]
        finally:
            os.environ[API_TOKEN_ENV] = old


class TestRunLifecycle:
    def test_start_poll_and_report_shape(self, service):
        client, _, _ = service
        r = client.post("/runs", headers=AUTH,
                        json={"config": {"backend": {"kind": "mock"}}})
        assert r.status_code == 202
        run_id = r.json()["run_id"]
        report = wait_done(client, run_id)
        assert report["status"] == "ok"
        assert set(report) >= {"run_id", "counts", "shortlist", "decision",
                               "timing", "content_hash"}
        assert report["counts"]["ingested"] == 20

    def test_start_from_config_file(self, service, tmp_path):
        client, _, _ = service
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"backend": {"kind": "mock"}, "top_k": 5}),
                        encoding="utf-8")
        r = client.post("/runs", headers=AUTH, json={"config_path": str(path)})
        assert r.status_code == 202
        report = wait_done(client, r.json()["run_id"])
        assert len(report["shortlist"]) == 5

    def test_listing_contains_finished_runs(self, service):
        client, report, _ = service
        rows = client.get("/runs").json()
        by_id = {r["run_id"]: r["status"] for r in rows}
        assert by_id[report.run_id] == "ok"
        ids = [r["run_id"] for r in rows]
        assert ids == sorted(ids, reverse=True)

    def test_running_state_visible(self, service):
        _, _, store = service
        app = create_app(store)
        app.state.registry.start("pretend-run")
        client = TestClient(app)
        assert client.get("/runs/pretend-run").json() == {
            "run_id": "pretend-run", "status": "running"}
        rows = client.get("/runs").json()
        assert {"run_id": "pretend-run", "status": "running"} in rows

    def test_unknown_run_404(self, service):
        client, _, _ = service
        r = client.get("/runs/nope")
        assert r.status_code == 404
        assert "unknown run" in r.json()["error"]

    def test_config_required(self, service):
        client, _, _ = service
        r = client.post("/runs", headers=AUTH, json={})
        assert r.status_code == 422
        assert r.json()["fields"] == {"config": "missing"}

    def test_bad_config_rejected(self, service):
        client, _, _ = service
        r = client.post("/runs", headers=AUTH,
                        json={"config": {"not_a_key": 1}})
        assert r.status_code == 422
        assert "unknown config key" in r.json()["error"]

    def test_idempotency_key_reuses_run(self, service):
        client, _, _ = service
        headers = dict(AUTH, **{"Idempotency-Key": "abc-1"})
        body = {"config": {"backend": {"kind": "mock"}}}
        first = client.post("/runs", headers=headers, json=body).json()["run_id"]
        second = client.post("/runs", headers=headers, json=body).json()["run_id"]
        assert first == second
        wait_done(client, first)


class TestShortlist:
    def test_cards_in_rank_order(self, service):
        client, report, _ = service
        cards = client.get(f"/runs/{report.run_id}/shortlist").json()
        assert [c["rank"] for c in cards] == list(range(1, len(cards) + 1))
        assert [c["id"] for c in cards] == [c["id"] for c in report.shortlist]
        grades = [c["grade"] for c in cards]
        assert grades == sorted(grades, reverse=True)
        assert all(set(c) == {"rank", "id", "grade", "summary", "flags"}
                   for c in cards)

    def test_top_parameter(self, service):
        client, report, _ = service
        assert len(client.get(f"/runs/{report.run_id}/shortlist?top=3").json()) == 3
        r = client.get(f"/runs/{report.run_id}/shortlist?top=0")
        assert r.status_code == 422
        assert "top" in r.json()["fields"]

    def test_over_limit_flag(self, service):
        client, _, store = service
        report = run_pipeline(mock_cfg(store, summary_word_limit=10))
        cards = client.get(f"/runs/{report.run_id}/shortlist").json()
        assert all(c["flags"]["summary_over_limit"] for c in cards)

    def test_shortlist_absent_404(self, service):
        client, _, store = service
        (store / "hollow-run").mkdir()
        r = client.get("/runs/hollow-run/shortlist")
        assert r.status_code == 404
        assert "no shortlist" in r.json()["error"]


class TestDecision:
    def manual_body(self, report, hires=1, role="backend work", **kw):
        body = {
            "selected_ids": [c["id"] for c in report.shortlist[:hires]],
            "rationale": "Strongest grades on the list.",
            "criteria": {"hires": hires, "role_description": role},
            "decider": "sam",
        }
        body.update(kw)
        return body

    def test_manual_decision_round_trip(self, service, fresh_run):
        client, _, _ = service
        r = client.post(f"/runs/{fresh_run.run_id}/decision", headers=AUTH,
                        json=self.manual_body(fresh_run))
        assert r.status_code == 201
        record = r.json()
        assert record["mode"] == "manual"
        assert record["decider"] == "sam"
        assert record["timestamp"]
        report = client.get(f"/runs/{fresh_run.run_id}").json()
        assert report["decision"]["mode"] == "manual"
        assert report["decision"]["selected_ids"] == record["selected_ids"]

    def test_conflict_against_pipeline_auto_decision(self, service, fresh_run):
        client, _, _ = service
        # the pipeline already recorded an auto decision under these criteria
        default_criteria = {"hires": 1, "role_description": "",
                            "extra_instructions": ""}
        body = self.manual_body(fresh_run)
        body["criteria"] = default_criteria
        r = client.post(f"/runs/{fresh_run.run_id}/decision", headers=AUTH,
                        json=body)
        assert r.status_code == 409
        assert "force" in r.json()["error"]

    def test_conflict_and_force_on_repeat(self, service, fresh_run):
        client, _, _ = service
        url = f"/runs/{fresh_run.run_id}/decision"
        assert client.post(url, headers=AUTH,
                           json=self.manual_body(fresh_run)).status_code == 201
        assert client.post(url, headers=AUTH,
                           json=self.manual_body(fresh_run)).status_code == 409
        r = client.post(url + "?force=true", headers=AUTH,
                        json=self.manual_body(fresh_run))
        assert r.status_code == 201

    def test_fresh_criteria_avoid_conflict(self, service, fresh_run):
        client, _, _ = service
        url = f"/runs/{fresh_run.run_id}/decision"
        assert client.post(url, headers=AUTH,
                           json=self.manual_body(fresh_run)).status_code == 201
        r = client.post(url, headers=AUTH,
                        json=self.manual_body(fresh_run, role="other role"))
        assert r.status_code == 201

    def test_selection_outside_shortlist(self, service, fresh_run):
        client, _, _ = service
        body = self.manual_body(fresh_run, selected_ids=["stranger"])
        r = client.post(f"/runs/{fresh_run.run_id}/decision", headers=AUTH,
                        json=body)
        assert r.status_code == 422
        assert "not in shortlist: stranger" in r.json()["fields"]["selected_ids"]

    def test_selection_count_must_match_hires(self, service, fresh_run):
        client, _, _ = service
        body = self.manual_body(fresh_run, hires=3)
        body["selected_ids"] = body["selected_ids"][:2]
        r = client.post(f"/runs/{fresh_run.run_id}/decision", headers=AUTH,
                        json=body)
        assert r.status_code == 422

    def test_missing_body_fields(self, service, fresh_run):
        client, _, _ = service
        r = client.post(f"/runs/{fresh_run.run_id}/decision", headers=AUTH,
                        json={"rationale": "x"})
        assert r.status_code == 422
        assert r.json()["error"] == "invalid request body"
        assert "selected_ids" in r.json()["fields"]

    def test_decision_on_unknown_run(self, service):
        client, _, _ = service
        r = client.post("/runs/ghost/decision", headers=AUTH,
                        json={"selected_ids": [], "rationale": "x",
                              "criteria": {}})
        assert r.status_code == 404

    def test_auto_decision_endpoint(self, service, fresh_run):
        client, _, _ = service
        url = f"/runs/{fresh_run.run_id}/decision:auto"
        # snapshot criteria match the pipeline's own auto decision
        assert client.post(url, headers=AUTH, json={}).status_code == 409
        r = client.post(url, headers=AUTH,
                        json={"criteria": {"hires": 3,
                                           "role_description": "database work"}})
        assert r.status_code == 201
        record = r.json()
        assert record["mode"] == "auto"
        assert record["selected_ids"] == [c["id"] for c in fresh_run.shortlist[:3]]


class TestMetricsAndTiming:
    def test_metrics_absent_without_gold(self, service):
        client, report, _ = service
        r = client.get(f"/runs/{report.run_id}/metrics")
        assert r.status_code == 404
        assert "no metrics" in r.json()["error"]

    def test_metrics_present_with_gold_assessments(self, service, tmp_path):
        client, report, store = service
        gold = tmp_path / "gold_assessments.jsonl"
        gold.write_text((store / report.run_id / "assessments.jsonl")
                        .read_text(encoding="utf-8"), encoding="utf-8")
        scored = run_pipeline(mock_cfg(store, gold_assessments=str(gold)))
        obj = client.get(f"/runs/{scored.run_id}/metrics").json()
        assert obj["summary_metrics"]["rouge1"]["f1"] == pytest.approx(1.0)
        assert obj["summary_metrics"]["grade_accuracy"] == 1.0
        assert obj["rank_stats"]["cosine"] == pytest.approx(1.0)

    def test_timing_ledger(self, service):
        client, report, _ = service
        obj = client.get(f"/runs/{report.run_id}/timing").json()
        assert {"stages", "total_wall_ms", "manual_estimate_min",
                "speedups"} <= set(obj)
        assert client.get("/runs/ghost/timing").status_code == 404


class TestResponsePrivacy:
    def test_personal_information_never_leaves_the_api(self, service):
        client, report, store = service
        classified = (store / report.run_id / "classified.jsonl").read_text(
            encoding="utf-8")
        pi_texts = [json.loads(line)["text"] for line in classified.splitlines()
                    if json.loads(line)["label"] == "personal information"]
        assert pi_texts
        bodies = [
            client.get(f"/runs/{report.run_id}").text,
            client.get(f"/runs/{report.run_id}/shortlist").text,
            client.get(f"/runs/{report.run_id}/timing").text,
            client.get("/runs").text,
        ]
        for body in bodies:
            for pi in pi_texts:
                assert pi not in body
