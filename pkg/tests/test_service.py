"""Live-session service: HTTP API, streaming, interventions, replay."""

import pytest
from fastapi.testclient import TestClient

from epikit.service import create_app, replay_log


@pytest.fixture()
def client():
    return TestClient(create_app())


def star_graph_obj(n=6):
    return {"n_nodes": n, "directed": False,
            "edges": [[0, v, 1.0] for v in range(1, n)]}


def path_graph_obj(n=4):
    return {"n_nodes": n, "directed": False,
            "edges": [[v, v + 1, 1.0] for v in range(n - 1)]}


def make_body(graph=None, beta=5.0, gamma=0.2, dt=1.0, initial=(0,), seed=11,
              immune=()):
    return {
        "graph": graph or star_graph_obj(),
        "config": {"beta": beta, "gamma": gamma, "dt": dt,
                   "initial_infected": list(initial), "immune": list(immune)},
        "seed": seed,
    }


def create(client, **kwargs):
    r = client.post("/sessions", json=make_body(**kwargs))
    assert r.status_code == 201, r.text
    return r.json()


class TestCreate:
    def test_initial_state(self, client):
        info = create(client, initial=(0, 2))
        assert info["step"] == 0
        assert info["status"] == "running"
        assert info["states"].count("I") == 2
        assert info["states"][0] == "I" and info["states"][2] == "I"

    def test_ids_are_unguessable_and_distinct(self, client):
        a = create(client)["id"]
        b = create(client)["id"]
        assert a != b
        assert len(a) == 32
        int(a, 16)  # hex token

    def test_immune_rendered_as_v(self, client):
        info = create(client, initial=(0,), immune=(3,))
        assert info["states"][3] == "V"

    def test_invalid_initial_infected_names_field(self, client):
        body = make_body()
        body["config"]["initial_infected"] = [99]
        r = client.post("/sessions", json=body)
        assert r.status_code == 400
        err = r.json()
        assert err["code"] == "invalid"
        assert err["field"] == "initial_infected"
        assert "99" in err["message"]

    def test_bad_graph_names_field(self, client):
        body = make_body()
        body["graph"]["edges"] = [[0, 42, 1.0]]
        r = client.post("/sessions", json=body)
        assert r.status_code == 400
        assert r.json()["field"] == "graph"

    def test_unknown_config_field(self, client):
        body = make_body()
        body["config"]["spreading_rate"] = 1.0
        r = client.post("/sessions", json=body)
        assert r.status_code == 400
        assert r.json()["field"] == "spreading_rate"

    def test_missing_body_fields_use_error_schema(self, client):
        r = client.post("/sessions", json={"config": {}})
        assert r.status_code == 400
        err = r.json()
        assert err["code"] == "invalid"
        assert err["field"] == "graph"


class TestStep:
    def test_advances_by_k(self, client):
        sid = create(client)["id"]
        out = client.post(f"/sessions/{sid}/step", json={"k": 5}).json()
        assert out["step"] == 5
        hist = client.get(f"/sessions/{sid}/history").json()
        assert len(hist["states"]) == 6

    def test_k_zero_rejected(self, client):
        sid = create(client)["id"]
        r = client.post(f"/sessions/{sid}/step", json={"k": 0})
        assert r.status_code == 400
        assert r.json()["field"] == "k"

    def test_default_k_is_one(self, client):
        sid = create(client)["id"]
        out = client.post(f"/sessions/{sid}/step", json={}).json()
        assert out["step"] == 1

    def test_unknown_session(self, client):
        r = client.post("/sessions/deadbeef/step", json={"k": 1})
        assert r.status_code == 404
        assert r.json()["code"] == "not_found"

    def test_same_seed_same_history(self, client):
        a = create(client, seed=5)["id"]
        b = create(client, seed=5)["id"]
        for sid in (a, b):
            client.post(f"/sessions/{sid}/step", json={"k": 7})
        ha = client.get(f"/sessions/{a}/history").json()["states"]
        hb = client.get(f"/sessions/{b}/history").json()["states"]
        assert ha == hb

    def test_step_batching_equivalent(self, client):
        # five k=1 commands and one k=5 command must consume the random
        # stream identically
        a = create(client, seed=9)["id"]
        b = create(client, seed=9)["id"]
        for _ in range(5):
            client.post(f"/sessions/{a}/step", json={"k": 1})
        client.post(f"/sessions/{b}/step", json={"k": 5})
        ha = client.get(f"/sessions/{a}/history").json()["states"]
        hb = client.get(f"/sessions/{b}/history").json()["states"]
        assert ha == hb

    def test_finished_is_absorbing(self, client):
        # beta=0: nothing spreads; huge gamma: the seed recovers at once
        sid = create(client, beta=0.0, gamma=50.0)["id"]
        out = client.post(f"/sessions/{sid}/step", json={"k": 1}).json()
        assert out["status"] == "finished"
        again = client.post(f"/sessions/{sid}/step", json={"k": 3}).json()
        assert again["step"] == out["step"]
        assert again["status"] == "finished"
        hist = client.get(f"/sessions/{sid}/history").json()["states"]
        assert len(hist) == out["step"] + 1


class TestIntervene:
    def test_vaccinate_susceptible(self, client):
        sid = create(client)["id"]
        out = client.post(f"/sessions/{sid}/intervene",
                          json={"action": "vaccinate", "node": 3}).json()
        assert out["changed"] is True
        assert out["states"][3] == "V"
        assert out["step"] == 0  # interventions do not advance time

    def test_vaccinate_idempotent(self, client):
        sid = create(client)["id"]
        first = client.post(f"/sessions/{sid}/intervene",
                            json={"action": "vaccinate", "node": 3}).json()
        second = client.post(f"/sessions/{sid}/intervene",
                             json={"action": "vaccinate", "node": 3}).json()
        assert second["changed"] is False
        assert second["states"] == first["states"]
        assert second["seq"] == first["seq"]  # no extra frame

    def test_vaccinate_infected_rejected(self, client):
        sid = create(client)["id"]
        r = client.post(f"/sessions/{sid}/intervene",
                        json={"action": "vaccinate", "node": 0})
        assert r.status_code == 400
        assert r.json()["code"] == "conflict"

    def test_vaccinated_node_never_infected(self, client):
        # star center infected with an overwhelming rate; the vaccinated
        # leaf must stay V through every step
        sid = create(client, beta=100.0, gamma=0.01, seed=3)["id"]
        client.post(f"/sessions/{sid}/intervene",
                    json={"action": "vaccinate", "node": 4})
        client.post(f"/sessions/{sid}/step", json={"k": 25})
        timeline = client.get(f"/sessions/{sid}/nodes/4/history").json()["timeline"]
        assert set(timeline) == {"V"} or set(timeline) == {"S", "V"}
        assert "I" not in timeline

    def test_quarantine_freezes_compartment(self, client):
        sid = create(client, beta=100.0, gamma=0.5, seed=3)["id"]
        client.post(f"/sessions/{sid}/intervene",
                    json={"action": "quarantine", "node": 0})
        out = client.post(f"/sessions/{sid}/step", json={"k": 10}).json()
        timeline = client.get(f"/sessions/{sid}/nodes/0/history").json()["timeline"]
        assert set(timeline[0]) == {"Q"} or timeline[0] == "I"
        assert timeline.endswith("Q")
        assert "R" not in timeline  # no recovery while quarantined

    def test_quarantine_only_infected_finishes_session(self, client):
        sid = create(client, beta=100.0, gamma=0.1)["id"]
        out = client.post(f"/sessions/{sid}/intervene",
                          json={"action": "quarantine", "node": 0}).json()
        assert out["status"] == "finished"
        # ... and nothing ever spreads afterwards
        again = client.post(f"/sessions/{sid}/step", json={"k": 5}).json()
        assert again["states"].count("I") == 0
        assert again["states"].count("S") == 5

    def test_quarantine_blocks_both_directions(self, client):
        # path 0-1-2-3, node 0 infected, node 1 quarantined: the chain is
        # cut, nodes 2 and 3 stay susceptible forever
        sid = create(client, graph=path_graph_obj(4), beta=100.0, gamma=0.0,
                     seed=2)["id"]
        client.post(f"/sessions/{sid}/intervene",
                    json={"action": "quarantine", "node": 1})
        client.post(f"/sessions/{sid}/step", json={"k": 20})
        state = client.get(f"/sessions/{sid}/state").json()["states"]
        assert state == "IQSS"

    def test_unknown_node(self, client):
        sid = create(client)["id"]
        r = client.post(f"/sessions/{sid}/intervene",
                        json={"action": "vaccinate", "node": 77})
        assert r.status_code == 404
        assert r.json()["field"] == "node"

    def test_bad_action(self, client):
        sid = create(client)["id"]
        r = client.post(f"/sessions/{sid}/intervene",
                        json={"action": "isolate", "node": 1})
        assert r.status_code == 400
        assert r.json()["field"] == "action"

    def test_intervene_after_finish_rejected(self, client):
        sid = create(client, beta=0.0, gamma=50.0)["id"]
        client.post(f"/sessions/{sid}/step", json={"k": 1})
        r = client.post(f"/sessions/{sid}/intervene",
                        json={"action": "quarantine", "node": 2})
        assert r.status_code == 400
        assert r.json()["code"] == "finished"


class TestNodeHistory:
    def test_initially_infected(self, client):
        sid = create(client)["id"]
        out = client.get(f"/sessions/{sid}/nodes/0/history").json()
        assert out["timeline"] == "I"
        assert out["infected_at"] == 0
        assert out["source"] is None

    def test_never_infected_all_s(self, client):
        sid = create(client, beta=0.0, gamma=0.1, seed=4)["id"]
        client.post(f"/sessions/{sid}/step", json={"k": 6})
        out = client.get(f"/sessions/{sid}/nodes/3/history").json()
        assert set(out["timeline"]) == {"S"}
        assert out["infected_at"] is None and out["source"] is None

    def test_attribution_is_an_infected_neighbor(self, client):
        # run several sessions; every attributed source must have been
        # infected at the previous step and share an edge with the victim
        for seed in range(6):
            sid = create(client, graph=path_graph_obj(6), beta=2.0, gamma=0.1,
                         initial=(0,), seed=seed)["id"]
            client.post(f"/sessions/{sid}/step", json={"k": 12})
            rows = client.get(f"/sessions/{sid}/history").json()["states"]
            for node in range(6):
                out = client.get(f"/sessions/{sid}/nodes/{node}/history").json()
                if out["source"] is None:
                    continue
                t, src = out["infected_at"], out["source"]
                assert rows[t - 1][src] == "I"
                assert abs(src - node) == 1  # path graph adjacency

    def test_star_attribution_is_center(self, client):
        sid = create(client, beta=50.0, gamma=0.0, seed=8)["id"]
        client.post(f"/sessions/{sid}/step", json={"k": 5})
        for node in range(1, 6):
            out = client.get(f"/sessions/{sid}/nodes/{node}/history").json()
            if out["infected_at"] is not None:
                assert out["source"] == 0

    def test_unknown_node(self, client):
        sid = create(client)["id"]
        r = client.get(f"/sessions/{sid}/nodes/99/history")
        assert r.status_code == 404


class TestStream:
    def test_frames_in_order_no_gaps(self, client):
        sid = create(client, seed=6)["id"]
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            client.post(f"/sessions/{sid}/step", json={"k": 4})
            frames = [ws.receive_json() for _ in range(4)]
        assert [f["seq"] for f in frames] == [1, 2, 3, 4]
        assert [f["step"] for f in frames] == [1, 2, 3, 4]

    def test_frames_match_history_diffs(self, client):
        sid = create(client, seed=6)["id"]
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            client.post(f"/sessions/{sid}/step", json={"k": 3})
            frames = [ws.receive_json() for _ in range(3)]
        rows = client.get(f"/sessions/{sid}/history").json()["states"]
        for frame in frames:
            t = frame["step"]
            expected = {(v, rows[t][v]) for v in range(len(rows[0]))
                        if rows[t][v] != rows[t - 1][v]}
            got = {(c["node"], c["state"]) for c in frame["changed_nodes"]}
            assert got == expected

    def test_late_subscriber_catches_up(self, client):
        sid = create(client, seed=6)["id"]
        client.post(f"/sessions/{sid}/step", json={"k": 2})
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            first = ws.receive_json()
            second = ws.receive_json()
        assert first["seq"] == 1 and second["seq"] == 2

    def test_intervention_emits_frame_at_current_step(self, client):
        sid = create(client, seed=6)["id"]
        client.post(f"/sessions/{sid}/step", json={"k": 2})
        client.post(f"/sessions/{sid}/intervene",
                    json={"action": "quarantine", "node": 3})
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            frames = [ws.receive_json() for _ in range(3)]
        assert frames[2]["step"] == 2  # same step as the sim left off
        assert frames[2]["changed_nodes"] == [{"node": 3, "state": "Q"}]

    def test_unknown_session_closes_with_error(self, client):
        with client.websocket_connect("/sessions/nope/stream") as ws:
            err = ws.receive_json()
        assert err["code"] == "not_found"


class TestReplay:
    def test_log_replay_reproduces_history(self, client):
        sid = create(client, beta=2.0, gamma=0.3, seed=13)["id"]
        client.post(f"/sessions/{sid}/step", json={"k": 3})
        client.post(f"/sessions/{sid}/intervene",
                    json={"action": "vaccinate", "node": 5})
        client.post(f"/sessions/{sid}/step", json={"k": 2})
        client.post(f"/sessions/{sid}/intervene",
                    json={"action": "quarantine", "node": 1})
        client.post(f"/sessions/{sid}/step", json={"k": 4})

        log = client.get(f"/sessions/{sid}/log").json()
        live = client.get(f"/sessions/{sid}/history").json()["states"]
        assert replay_log(log).full_history()["states"] == live

    def test_log_records_commands_in_order(self, client):
        # beta=0 keeps node 2 susceptible so the vaccination succeeds
        sid = create(client, beta=0.0, gamma=0.01)["id"]
        client.post(f"/sessions/{sid}/step", json={"k": 2})
        client.post(f"/sessions/{sid}/intervene",
                    json={"action": "vaccinate", "node": 2})
        log = client.get(f"/sessions/{sid}/log").json()
        assert log["events"] == [
            {"type": "step", "k": 2},
            {"type": "intervene", "action": "vaccinate", "node": 2},
        ]
        assert log["seed"] == 11
        assert log["config"]["initial_infected"] == [0]

    def test_sessions_do_not_interact(self, client):
        a = create(client, seed=1)["id"]
        b = create(client, seed=1)["id"]
        client.post(f"/sessions/{a}/step", json={"k": 5})
        assert client.get(f"/sessions/{b}/state").json()["step"] == 0
        # b, stepped afterwards, still matches a: same seed, same commands
        client.post(f"/sessions/{b}/step", json={"k": 5})
        ha = client.get(f"/sessions/{a}/history").json()["states"]
        hb = client.get(f"/sessions/{b}/history").json()["states"]
        assert ha == hb
