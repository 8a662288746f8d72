import json
from collections import Counter

import pytest
from fastapi.testclient import TestClient

from namegrounder.memory import load, recall
from namegrounder.service import (
    SCHEMA_VERSION,
    build_state,
    create_app,
    memory_payload,
    scene_payload,
    submit_instruction,
)

SEED = 3
SIX = [6, 6]


@pytest.fixture()
def client():
    return TestClient(create_app())


def make_session(client, seed=SEED, n_objects=SIX):
    r = client.post("/sessions", json={"seed": seed, "n_objects": n_objects})
    assert r.status_code == 200
    return r.json()


def unique_category(scene):
    counts = Counter(i["category"] for i in scene["instances"])
    return next(i for i in scene["instances"] if counts[i["category"]] == 1)


class TestSessions:
    def test_create_returns_scene_with_instances(self, client):
        payload = make_session(client)
        assert payload["version"] == SCHEMA_VERSION
        assert payload["session_id"] == "s1"
        assert len(payload["scene"]["instances"]) >= 1
        assert payload["memory"]["names"] == []

    def test_session_ids_are_distinct(self, client):
        a = make_session(client)
        b = make_session(client)
        assert a["session_id"] != b["session_id"]

    def test_scene_endpoint_matches_create(self, client):
        payload = make_session(client)
        r = client.get(f"/sessions/{payload['session_id']}/scene")
        assert r.status_code == 200
        assert r.json() == payload["scene"]

    def test_scene_instances_carry_drawables(self, client):
        payload = make_session(client)
        inst = payload["scene"]["instances"][0]
        for key in ("instance_id", "category", "colors", "x", "y", "yaw",
                    "extents", "box", "graspable"):
            assert key in inst
        assert len(inst["box"]) == 4
        img = payload["scene"]["image"]
        assert img == {"width": 640, "height": 480}

    def test_unknown_session_is_404(self, client):
        for method, url, body in (
            ("get", "/sessions/nope/scene", None),
            ("get", "/sessions/nope/memory", None),
            ("post", "/sessions/nope/instruction", {"text": "hi"}),
            ("post", "/sessions/nope/newscene", {"seed": 1}),
        ):
            r = getattr(client, method)(url, **({} if body is None
                                                else {"json": body}))
            assert r.status_code == 404

    @pytest.mark.parametrize("body", [
        {"seed": 0, "n_objects": [9, 2]},
        {"seed": 0, "n_objects": [0, 2]},
        {"seed": 0, "n_objects": [3]},
        {"seed": 0, "noise": {"p_flip": 7}},
        {"seed": 0, "noise": {"wobble": 0.1}},
    ])
    def test_bad_create_bodies_are_400(self, client, body):
        assert client.post("/sessions", json=body).status_code == 400

    def test_missing_field_diagnostics(self, client):
        sid = make_session(client)["session_id"]
        r = client.post(f"/sessions/{sid}/instruction", json={"txt": "x"})
        assert r.status_code == 400
        fields = [d["field"] for d in r.json()["detail"]]
        assert any("text" in f for f in fields)

    def test_empty_text_is_400(self, client):
        sid = make_session(client)["session_id"]
        r = client.post(f"/sessions/{sid}/instruction", json={"text": "  "})
        assert r.status_code == 400


class TestInstructionFlow:
    def test_unsupported_text_is_a_response_not_an_error(self, client):
        payload = make_session(client)
        sid = payload["session_id"]
        r = client.post(f"/sessions/{sid}/instruction",
                        json={"text": "hello there"})
        assert r.status_code == 200
        j = r.json()
        assert j["instruction"]["class"] == "instruction-not-supported"
        assert j["result"]["sr_ok"] is True
        assert j["chosen"] == {"src": None, "dst": None}
        assert j["scene"] == payload["scene"]

    def test_name_then_pick_round_trip(self, client):
        payload = make_session(client)
        sid = payload["session_id"]
        target = unique_category(payload["scene"])
        text = f"the name of the {target['category']} is Kaki Shoyu"
        r = client.post(f"/sessions/{sid}/instruction", json={"text": text})
        j = r.json()
        assert j["result"]["sr_ok"] is True
        assert j["stored_name"] == "Kaki Shoyu"
        assert j["chosen"]["src"]["instance_id"] == target["instance_id"]

        r = client.get(f"/sessions/{sid}/memory")
        names = r.json()["names"]
        assert [n["name"] for n in names] == ["kaki shoyu"]
        assert names[0]["observations"] == 4
        assert names[0]["source_scene_id"] == payload["scene"]["scene_id"]

        r = client.post(f"/sessions/{sid}/instruction",
                        json={"text": "pick Kaki Shoyu up"})
        j = r.json()
        assert j["result"]["sr_ok"] is True
        assert j["chosen"]["src"]["instance_id"] == target["instance_id"]
        assert j["entities"][0]["entity_type"] == "name"

    def test_descriptor_instruction_reports_candidates(self, client):
        payload = make_session(client)
        sid = payload["session_id"]
        target = unique_category(payload["scene"])
        r = client.post(
            f"/sessions/{sid}/instruction",
            json={"text": f"pick the {target['category']} up"})
        j = r.json()
        assert j["result"]["sr_ok"] is True
        ranked = j["candidates"][0]
        assert ranked and ranked[0]["instance_id"] == target["instance_id"]
        assert ranked[0]["score"] == 1.0 and len(ranked[0]["box"]) == 4
        assert j["instruction"]["ambiguity_label"] == "unambiguous"

    def test_ambiguous_phrase_gets_labeled(self, client):
        payload = make_session(client, seed=0)  # holds two plates
        sid = payload["session_id"]
        counts = Counter(i["category"]
                         for i in payload["scene"]["instances"])
        dup = next(c for c, n in counts.items() if n > 1)
        r = client.post(f"/sessions/{sid}/instruction",
                        json={"text": f"pick the {dup} up"})
        assert r.json()["instruction"]["ambiguity_label"] \
            == "multiple-candidates"

    def test_place_changes_scene_state(self, client):
        payload = make_session(client, seed=3)
        sid = payload["session_id"]
        scene = payload["scene"]
        counts = Counter(i["category"] for i in scene["instances"])
        uniques = [i for i in scene["instances"] if counts[i["category"]] == 1
                   and i["graspable"]]
        assert len(uniques) >= 2
        src, dst = uniques[0], uniques[1]
        text = f"put the {src['category']} on the {dst['category']}"
        r = client.post(f"/sessions/{sid}/instruction", json={"text": text})
        j = r.json()
        assert j["result"]["sr_ok"] is True
        moved = next(i for i in j["scene"]["instances"]
                     if i["instance_id"] == src["instance_id"])
        assert (moved["x"], moved["y"]) != (src["x"], src["y"])
        assert moved["x"] == pytest.approx(dst["x"], abs=0.05)
        assert moved["y"] == pytest.approx(dst["y"], abs=0.05)
        r = client.get(f"/sessions/{sid}/scene")
        assert r.json() == j["scene"]

    def test_failed_instruction_leaves_scene_alone(self, client):
        payload = make_session(client)
        sid = payload["session_id"]
        r = client.post(f"/sessions/{sid}/instruction",
                        json={"text": "pick the zebra up"})
        j = r.json()
        assert j["result"]["sr_ok"] is False
        assert j["scene"] == payload["scene"]


class TestNewScene:
    def test_memory_survives_scene_swap(self, client):
        payload = make_session(client)
        sid = payload["session_id"]
        target = unique_category(payload["scene"])
        client.post(f"/sessions/{sid}/instruction", json={
            "text": f"the name of the {target['category']} is Boo"})
        r = client.post(f"/sessions/{sid}/newscene", json={"seed": 11})
        j = r.json()
        assert j["scene"]["scene_id"] != payload["scene"]["scene_id"]
        assert [n["name"] for n in j["memory"]["names"]] == ["boo"]

    def test_newscene_is_deterministic(self, client):
        a = make_session(client)
        b = make_session(client)
        ra = client.post(f"/sessions/{a['session_id']}/newscene",
                         json={"seed": 4})
        rb = client.post(f"/sessions/{b['session_id']}/newscene",
                         json={"seed": 4})
        ia = [dict(i, instance_id="") for i in ra.json()["scene"]["instances"]]
        ib = [dict(i, instance_id="") for i in rb.json()["scene"]["instances"]]
        assert ia == ib


class TestReplParity:
    def test_http_and_direct_calls_agree(self):
        http = TestClient(create_app())
        created = http.post("/sessions",
                            json={"seed": SEED, "n_objects": SIX}).json()
        sid = created["session_id"]

        state = build_state()
        session = state.create_session(SEED, (SIX[0], SIX[1]))
        assert session.session_id == sid

        target = unique_category(created["scene"])
        lines = [
            "hello there",
            f"the name of the {target['category']} is Kaki Shoyu",
            "pick Kaki Shoyu up",
        ]
        for text in lines:
            via_http = http.post(f"/sessions/{sid}/instruction",
                                 json={"text": text}).json()
            direct = submit_instruction(session, text)
            assert json.loads(json.dumps(direct)) == via_http

        assert http.get(f"/sessions/{sid}/scene").json() \
            == scene_payload(session)
        assert http.get(f"/sessions/{sid}/memory").json() \
            == memory_payload(session.store)


class TestDeterminism:
    def test_fresh_apps_replay_identically(self):
        def run():
            client = TestClient(create_app())
            payload = make_session(client)
            sid = payload["session_id"]
            target = unique_category(payload["scene"])
            out = [payload]
            for text in (f"the name of the {target['category']} is Boo",
                         "pick Boo up", "hello there"):
                out.append(client.post(f"/sessions/{sid}/instruction",
                                       json={"text": text}).json())
            return out
        assert run() == run()


class TestMemoryPersistence:
    def test_store_file_written_and_reloaded(self, tmp_path):
        path = tmp_path / "mem.json"
        client = TestClient(create_app(memory_path=str(path)))
        payload = make_session(client)
        sid = payload["session_id"]
        target = unique_category(payload["scene"])
        client.post(f"/sessions/{sid}/instruction", json={
            "text": f"the name of the {target['category']} is Kaki Shoyu"})
        assert path.exists()
        store = load(path)
        assert recall(store, "kaki shoyu") is not None

        fresh = TestClient(create_app(memory_path=str(path)))
        redo = make_session(fresh)
        r = fresh.get(f"/sessions/{redo['session_id']}/memory")
        assert [n["name"] for n in r.json()["names"]] == ["kaki shoyu"]

    def test_failed_naming_does_not_touch_file(self, tmp_path):
        path = tmp_path / "mem.json"
        client = TestClient(create_app(memory_path=str(path)))
        sid = make_session(client)["session_id"]
        r = client.post(f"/sessions/{sid}/instruction", json={
            "text": "the name of the zebra is Boo"})
        assert r.json()["result"]["sr_ok"] is False
        assert not path.exists()
